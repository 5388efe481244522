import logging

from models.graph_model import SubGraphEmbedding, VisualGraph
from models.image_model import BoundingBox, RegionSet
from models.params_model import GruParams, VisualParams
from services import numcore as nc
from services.numcore import ParamStore, Tensor
from utils.errors import ContractError, EmptyGraphError

logger = logging.getLogger(__name__)

EMPTY_REGIONS = "EMPTY_REGIONS"


def init_params(store: ParamStore, channels: int, d: int, roi_size: int = 2,
                prefix: str = "visual") -> VisualParams:
    return VisualParams(
        W_roi=store.create(f"{prefix}.W_roi", (d, channels * roi_size * roi_size)),
        b_roi=store.create(f"{prefix}.b_roi", (d,), init="zeros"),
        gru_node=GruParams.create(store, f"{prefix}.gru_node", d, d),
        gru_edge=GruParams.create(store, f"{prefix}.gru_edge", d, d),
        v1=store.create(f"{prefix}.v1", (2 * d,)),
        v2=store.create(f"{prefix}.v2", (2 * d,)),
        w1=store.create(f"{prefix}.w1", (2 * d,)),
        w2=store.create(f"{prefix}.w2", (2 * d,)),
        roi_size=roi_size,
    )


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    return BoundingBox(
        x0=min(a.x0, b.x0), y0=min(a.y0, b.y0), x1=max(a.x1, b.x1), y1=max(a.y1, b.y1)
    )


def _cell_bounds(start: int, length: int, p: int) -> list[tuple[int, int]]:
    # la última celda absorbe el resto; si la caja es menor que p, las celdas se repiten
    if length >= p:
        step = length // p
        return [
            (start + i * step, start + length if i == p - 1 else start + (i + 1) * step)
            for i in range(p)
        ]
    return [(start + (i * length) // p, start + (i * length) // p + 1) for i in range(p)]


def roi_grid(box: BoundingBox, p: int) -> list[tuple[int, int, int, int]]:
    # Celdas (y0, y1, x0, x1) de la rejilla p×p en orden por filas
    rows = _cell_bounds(box.y0, box.height, p)
    cols = _cell_bounds(box.x0, box.width, p)
    return [(y0, y1, x0, x1) for y0, y1 in rows for x0, x1 in cols]


def roi_features(feature_map: Tensor, box: BoundingBox, p: int) -> Tensor:
    # Máximo por celda y canal, aplanado canal a canal: [C·p·p]
    if p < 1:
        raise ContractError(f"Tamaño de rejilla inválido p={p}")
    channels, height, width = feature_map.shape
    if box.x1 > width or box.y1 > height:
        raise ContractError(f"Caja {box.as_list()} fuera del mapa {width}x{height}")
    cells = []
    for y0, y1, x0, x1 in roi_grid(box, p):
        cell = nc.getitem(feature_map, (slice(None), slice(y0, y1), slice(x0, x1)))
        cells.append(nc.max_(nc.reshape(cell, (channels, -1)), axis=1))
    pooled = nc.transpose(nc.stack(cells))  # [C × p·p]
    return nc.reshape(pooled, (channels * p * p,))


def roi_pool(feature_map: Tensor, box: BoundingBox, params: VisualParams) -> Tensor:
    return nc.linear(params.W_roi, roi_features(feature_map, box, params.roi_size), params.b_roi)


def init_graph(regions: RegionSet, params: VisualParams) -> VisualGraph:
    if not regions.boxes:
        raise EmptyGraphError("RegionSet sin cajas: no hay grafo visual")
    fmap, boxes = regions.feature_map, regions.boxes
    node_h = [roi_pool(fmap, b, params) for b in boxes]
    edge_h = {
        (i, j): roi_pool(fmap, union_box(boxes[i], boxes[j]), params)
        for i in range(len(boxes))
        for j in range(len(boxes))
        if i != j
    }
    return VisualGraph(node_h=node_h, edge_h=edge_h, scores=list(regions.scores), boxes=list(boxes))


def _gate(weight: Tensor, a: Tensor, b: Tensor) -> Tensor:
    return nc.sigmoid(nc.dot(weight, nc.concat([a, b])))


def message_step(g: VisualGraph, params: VisualParams) -> VisualGraph:
    # Un paso síncrono: todos los mensajes salen de los estados previos
    n = g.num_nodes
    h, he = g.node_h, g.edge_h
    new_nodes = []
    for i in range(n):
        terms = []
        for j in range(n):
            if j == i:
                continue
            terms.append(nc.hadamard(_gate(params.v1, h[i], he[(i, j)]), he[(i, j)]))
            terms.append(nc.hadamard(_gate(params.v2, h[i], he[(j, i)]), he[(j, i)]))
        m_i = nc.sum_(nc.stack(terms), axis=0) if terms else nc.zeros(h[i].shape)
        new_nodes.append(nc.gru_cell(m_i, h[i], params.gru_node))
    new_edges = {}
    for (i, j), h_ij in he.items():
        m_ij = nc.add(
            nc.hadamard(_gate(params.w1, h[i], h_ij), h[i]),
            nc.hadamard(_gate(params.w2, h[i], he[(j, i)]), h[j]),
        )
        new_edges[(i, j)] = nc.gru_cell(m_ij, h_ij, params.gru_edge)
    return VisualGraph(node_h=new_nodes, edge_h=new_edges, scores=g.scores, boxes=g.boxes)


def run_reasoning(g: VisualGraph, t_iters: int, params: VisualParams) -> VisualGraph:
    if t_iters < 1:
        raise ContractError(f"t_iters debe ser ≥ 1, recibido {t_iters}")
    for _ in range(t_iters):
        g = message_step(g, params)
    return g


def select_subgraphs(g: VisualGraph, scores: list[float], top_n: int) -> list[int]:
    if top_n < 1:
        raise ContractError(f"top_n debe ser ≥ 1, recibido {top_n}")
    order = sorted(range(g.num_nodes), key=lambda i: (-scores[i], i))
    return order[:top_n]


def readout(g: VisualGraph, anchor: int) -> SubGraphEmbedding:
    if not 0 <= anchor < g.num_nodes:
        raise ContractError(f"Nodo ancla {anchor} fuera de rango (n={g.num_nodes})")
    states = [g.node_h[anchor]]
    for j in range(g.num_nodes):
        if j != anchor:
            states.append(g.edge_h[(anchor, j)])
            states.append(g.edge_h[(j, anchor)])
    return SubGraphEmbedding(anchor=anchor, embedding=nc.mean(nc.stack(states), axis=0))


def build_visual_graph(regions: RegionSet, params: VisualParams, t_iters: int,
                       top_n: int) -> tuple[list[SubGraphEmbedding], VisualGraph | None, list[str]]:
    # Regiones → razonamiento → selección top-n → readout por ancla
    if not regions.boxes:
        logger.warning("visual_graph_empty boxes=0")
        return [], None, [EMPTY_REGIONS]
    g = run_reasoning(init_graph(regions, params), t_iters, params)
    selected = select_subgraphs(g, g.scores, top_n)
    logger.debug("visual_graph nodes=%d selected=%s", g.num_nodes, selected)
    return [readout(g, k) for k in selected], g, []


def relation_dump(regions: RegionSet, selected: list[int]) -> dict:
    # Nodos y pares dirigidos con su caja unión, para inspección
    boxes = regions.boxes
    return {
        "nodes": [
            {"id": i, "box": b.as_list(), "score": regions.scores[i], "selected": i in selected}
            for i, b in enumerate(boxes)
        ],
        "relations": [
            {"subject": i, "object": j, "union_box": union_box(boxes[i], boxes[j]).as_list()}
            for i in range(len(boxes))
            for j in range(len(boxes))
            if i != j
        ],
        "selected": list(selected),
    }
