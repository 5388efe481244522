from pydantic import BaseModel, ConfigDict, model_validator

from services.numcore import Tensor
from utils.config import TIER_TAGS


class ObjectNode(BaseModel):
    phrase: str


class AttributeNode(BaseModel):
    phrase: str


class RelationEdge(BaseModel):
    subject: int
    predicate: str
    object: int


class TextualSceneGraph(BaseModel):
    objects: list[ObjectNode] = []
    attributes: list[AttributeNode] = []
    edges_oa: list[tuple[int, int]] = []  # (objeto, atributo)
    edges_oo: list[RelationEdge] = []
    warnings: list[str] = []

    @model_validator(mode="after")
    def check_edges(self):
        n_obj, n_attr = len(self.objects), len(self.attributes)
        for o, a in self.edges_oa:
            if not (0 <= o < n_obj and 0 <= a < n_attr):
                raise ValueError(f"Arista objeto-atributo inválida ({o}, {a})")
        seen = set()
        for edge in self.edges_oo:
            if not (0 <= edge.subject < n_obj and 0 <= edge.object < n_obj):
                raise ValueError(f"Relación con extremos inválidos {edge}")
            if edge.subject == edge.object:
                raise ValueError(f"Bucle en la relación {edge}")
            key = (edge.subject, edge.predicate, edge.object)
            if key in seen:
                raise ValueError(f"Relación repetida {key}")
            seen.add(key)
        return self

    @property
    def is_empty(self) -> bool:
        return not self.objects

    def attributes_of(self, obj: int) -> list[int]:
        return [a for o, a in self.edges_oa if o == obj]


class EmbeddedTextGraph(BaseModel):
    # Grafo textual con las codificaciones GRU de nodos y relaciones

    model_config = ConfigDict(arbitrary_types_allowed=True)

    graph: TextualSceneGraph
    object_h: list[Tensor]
    attribute_h: list[Tensor]
    relation_h: list[Tensor]


class VisualGraph(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    node_h: list[Tensor]
    edge_h: dict[tuple[int, int], Tensor]
    scores: list[float]
    boxes: list = []

    @model_validator(mode="after")
    def check_complete(self):
        n = len(self.node_h)
        expected = {(i, j) for i in range(n) for j in range(n) if i != j}
        if set(self.edge_h) != expected:
            raise ValueError("El conjunto de aristas debe cubrir todos los pares ordenados")
        return self

    @property
    def num_nodes(self) -> int:
        return len(self.node_h)


class SubGraphEmbedding(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    anchor: int
    embedding: Tensor


class TokenSequence(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tokens: Tensor  # [5×d]
    tags: tuple[str, ...] = TIER_TAGS
    warnings: list[str] = []

    @model_validator(mode="after")
    def check_tokens(self):
        if self.tokens.ndim != 2 or self.tokens.shape[0] != len(TIER_TAGS):
            raise ValueError(f"Se esperaban {len(TIER_TAGS)} tokens, forma {self.tokens.shape}")
        if tuple(self.tags) != TIER_TAGS:
            raise ValueError(f"Etiquetas de nivel inválidas {self.tags}")
        return self


class FusedEmbedding(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    E: Tensor  # [1×d]
    weights: list = []  # pesos de atención por cabeza
