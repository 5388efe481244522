import logging

from models.annotation_model import TextAnnotation
from models.graph_model import (
    AttributeNode,
    EmbeddedTextGraph,
    ObjectNode,
    RelationEdge,
    TextualSceneGraph,
    TokenSequence,
)
from models.params_model import GruParams, TextParams
from models.vocabulary_model import Vocabulary
from services import numcore as nc
from services.numcore import ParamStore, Tensor
from utils.config import LEAKY_SLOPE
from utils.errors import ContractError
from utils.lexicon import (
    ADJECTIVES,
    CONJUNCTIONS,
    NOUNS,
    NUMERALS,
    PLURALS,
    PREPOSITIONS,
    PRONOUNS,
    VERBS,
)

logger = logging.getLogger(__name__)

NO_OBJECT = "NO_OBJECT"
UNRESOLVED_PRONOUN = "UNRESOLVED_PRONOUN"
TIER_NAMES = ("obj0", "obj1", "obj2", "reg", "glob")


def init_params(store: ParamStore, vocab: Vocabulary, d: int, hidden: int | None = None,
                slope: float = LEAKY_SLOPE, prefix: str = "text") -> TextParams:
    hidden = hidden or d
    return TextParams(
        table=store.create(f"{prefix}.table", (len(vocab), d)),
        gru=GruParams.create(store, f"{prefix}.gru", d, d),
        W_g=store.create(f"{prefix}.W_g", (d, d)),
        q=store.create(f"{prefix}.q", (2 * d,)),
        W_A=store.create(f"{prefix}.W_A", (d, 3 * d)),
        W_P=store.create(f"{prefix}.W_P", (d, 3 * d)),
        W_p=store.create(f"{prefix}.W_p", (hidden, d)),
        b_p=store.create(f"{prefix}.b_p", (hidden,), init="zeros"),
        w_p=store.create(f"{prefix}.w_p", (hidden,)),
        null=store.create(f"{prefix}.null", (d,)),
        slope=slope,
    )


# --- Analizador por reglas ---

def _is_noun(token: str) -> bool:
    return token in NOUNS or token in PLURALS


def _lemma(token: str) -> str:
    return token if token in NOUNS else PLURALS[token]


class _GraphBuilder:
    # Estado del recorrido izquierda→derecha sobre los tokens

    def __init__(self):
        self.objects: list[str] = []
        self.attributes: list[str] = []
        self.edges_oa: list[tuple[int, int]] = []
        self.relations: list[tuple[int, str, int]] = []
        self.warnings: list[str] = []
        self.pending_count: int | None = None
        self.pending_adjs: list[str] = []
        self.span: list[str] = []
        self.last_group: list[int] | None = None

    def attach(self, obj: int, adjective: str):
        if any(self.attributes[a] == adjective for a in self._attrs_of(obj)):
            return
        self.attributes.append(adjective)
        self.edges_oa.append((obj, len(self.attributes) - 1))

    def _attrs_of(self, obj: int) -> list[int]:
        return [a for o, a in self.edges_oa if o == obj]

    def flush_predicative(self):
        # "car is red": el adjetivo sin sustantivo va al último objeto
        if self.last_group is not None:
            for obj in self.last_group:
                for adjective in self.pending_adjs:
                    self.attach(obj, adjective)
        self.pending_adjs = []

    def mention(self, group: list[int]):
        if self.last_group is not None and self.span:
            predicate = " ".join(self.span)
            for subject in self.last_group:
                for obj in group:
                    triple = (subject, predicate, obj)
                    if subject != obj and triple not in self.relations:
                        self.relations.append(triple)
        self.span = []
        self.last_group = group

    def add_objects(self, lemma: str):
        count = self.pending_count or 1
        group = []
        for _ in range(count):
            self.objects.append(lemma)
            group.append(len(self.objects) - 1)
            for adjective in self.pending_adjs:
                self.attach(group[-1], adjective)
        self.pending_count = None
        self.pending_adjs = []
        self.mention(group)

    def graph(self) -> TextualSceneGraph:
        if not self.objects:
            self.warnings.append(NO_OBJECT)
        return TextualSceneGraph(
            objects=[ObjectNode(phrase=o) for o in self.objects],
            attributes=[AttributeNode(phrase=a) for a in self.attributes],
            edges_oa=self.edges_oa,
            edges_oo=[RelationEdge(subject=s, predicate=p, object=o) for s, p, o in self.relations],
            warnings=self.warnings,
        )


def parse_text(tokens: list[str]) -> TextualSceneGraph:
    """Grafo de escena de una frase tokenizada mediante un léxico POS cerrado.

    Objetos en orden de primera mención. Un numeral multiplica el sustantivo
    que le sigue ("two cars" → car, car); un pronombre remite al último grupo
    de objetos mencionado; los sustantivos encadenados ("parking area") dejan
    el primero como atributo del núcleo.
    """
    builder = _GraphBuilder()
    for i, token in enumerate(tokens):
        if token in NUMERALS:
            builder.pending_count = NUMERALS[token]
        elif token in ADJECTIVES:
            builder.pending_adjs.append(token)
        elif _is_noun(token):
            if i + 1 < len(tokens) and _is_noun(tokens[i + 1]):
                builder.pending_adjs.append(token)
            else:
                builder.add_objects(_lemma(token))
        elif token in PRONOUNS:
            if builder.last_group is None:
                builder.warnings.append(UNRESOLVED_PRONOUN)
                builder.span = []
            else:
                group = builder.last_group
                builder.flush_predicative()
                builder.mention(group)
        elif token in VERBS or token in PREPOSITIONS:
            builder.flush_predicative()
            builder.pending_count = None
            builder.span.append(token)
        elif token in CONJUNCTIONS:
            builder.flush_predicative()
            builder.pending_count = None
            builder.span = []
    builder.flush_predicative()
    graph = builder.graph()
    if graph.warnings:
        logger.debug("parse_warnings tokens=%r warnings=%s", " ".join(tokens), graph.warnings)
    return graph


# --- Codificación de frases ---

def encode_phrase(words: list[str], vocab: Vocabulary, params: TextParams) -> Tensor:
    if not words:
        raise ContractError("encode_phrase necesita al menos una palabra")
    d = params.gru.U_z.shape[0]
    h = nc.zeros((d,))
    for word in words:
        h = nc.gru_cell(nc.getitem(params.table, vocab.index(word)), h, params.gru)
    return h


def embed_graph(graph: TextualSceneGraph, vocab: Vocabulary, params: TextParams) -> EmbeddedTextGraph:
    return EmbeddedTextGraph(
        graph=graph,
        object_h=[encode_phrase(o.phrase.split(), vocab, params) for o in graph.objects],
        attribute_h=[encode_phrase(a.phrase.split(), vocab, params) for a in graph.attributes],
        relation_h=[encode_phrase(e.predicate.split(), vocab, params) for e in graph.edges_oo],
    )


# --- Atención objeto-atributo ---

def oa_weights(g_i: Tensor, g_neighbors: list[Tensor], params: TextParams) -> Tensor:
    # Pesos softmax de los vecinos atributo de un objeto (ya proyectados por W_g)
    scores = [
        nc.leaky_relu(nc.dot(params.q, nc.concat([g_i, g_j])), params.slope) for g_j in g_neighbors
    ]
    return nc.softmax_rows(nc.stack(scores))


def oa_attend(eg: EmbeddedTextGraph, params: TextParams) -> list[Tensor]:
    out = []
    for i, h_i in enumerate(eg.object_h):
        g_i = nc.linear(params.W_g, h_i)
        neighbors = eg.graph.attributes_of(i)
        if not neighbors:
            out.append(g_i)
            continue
        g_neighbors = [nc.linear(params.W_g, eg.attribute_h[a]) for a in neighbors]
        alpha = oa_weights(g_i, g_neighbors, params)
        out.append(nc.linear(nc.transpose(nc.stack(g_neighbors)), alpha))
    return out


# --- Agregación objeto-objeto ---

def oo_aggregate(eg: EmbeddedTextGraph, e: list[Tensor], params: TextParams) -> list[Tensor]:
    # e'_i = e_i + media activa W_A[r∥e_i∥e_j] + media pasiva W_P[r∥e_j∥e_i]
    active: list[list[Tensor]] = [[] for _ in e]
    passive: list[list[Tensor]] = [[] for _ in e]
    for edge, r in zip(eg.graph.edges_oo, eg.relation_h):
        i, j = edge.subject, edge.object
        r_prime = nc.concat([r, e[i], e[j]])
        active[i].append(nc.linear(params.W_A, r_prime))
        passive[j].append(nc.linear(params.W_P, r_prime))
    out = []
    for i, e_i in enumerate(e):
        value = e_i
        if active[i]:
            value = nc.add(value, nc.mean(nc.stack(active[i]), axis=0))
        if passive[i]:
            value = nc.add(value, nc.mean(nc.stack(passive[i]), axis=0))
        out.append(value)
    return out


# --- Agrupamiento global ---

def gpo_weights(features: list[Tensor], params: TextParams) -> Tensor:
    if not features:
        raise ContractError("gpo_pool necesita al menos un nodo")
    x = nc.stack(features)  # [N×d]
    u = nc.tanh(nc.linear(params.W_p, nc.transpose(x), params.b_p))  # [h×N]
    return nc.softmax_rows(nc.linear(nc.transpose(u), params.w_p))


def gpo_pool(features: list[Tensor], params: TextParams) -> Tensor:
    alpha = gpo_weights(features, params)
    return nc.linear(nc.transpose(nc.stack(features)), alpha)


def build_graph_embedding(tokens: list[str], vocab: Vocabulary, params: TextParams) -> tuple[Tensor, list[str]]:
    # Frase → vector de grafo; un grafo vacío devuelve el token nulo
    graph = parse_text(tokens)
    if graph.is_empty:
        return params.null, list(graph.warnings)
    eg = embed_graph(graph, vocab, params)
    enhanced = oo_aggregate(eg, oa_attend(eg, params), params)
    return gpo_pool(enhanced, params), list(graph.warnings)


def embed_annotation(annotation: TextAnnotation, vocab: Vocabulary, params: TextParams) -> TokenSequence:
    tokens, warnings = [], []
    for tier, sentence in zip(TIER_NAMES, annotation.sentences()):
        t, tier_warnings = build_graph_embedding(sentence, vocab, params)
        tokens.append(t)
        warnings.extend(f"{tier}:{code}" for code in tier_warnings)
    if warnings:
        logger.warning("text_tier_warnings warnings=%s", ",".join(warnings))
    return TokenSequence(tokens=nc.stack(tokens), warnings=warnings)
