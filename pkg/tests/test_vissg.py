import numpy as np
import pytest

from models.graph_model import VisualGraph
from models.image_model import BoundingBox, RegionSet
from services import numcore as nc, vissg
from services.numcore import ParamStore, Tensor
from utils.errors import ContractError, EmptyGraphError

D, C = 4, 2


def box(*values) -> BoundingBox:
    return BoundingBox.from_list(values)


def random_box(rng) -> BoundingBox:
    x0, y0 = (int(v) for v in rng.integers(0, 5, size=2))
    return box(x0, y0, x0 + int(rng.integers(1, 5)), y0 + int(rng.integers(1, 5)))


def regions_of(fmap, boxes, scores=None) -> RegionSet:
    fmap = fmap if isinstance(fmap, Tensor) else Tensor(fmap)
    scores = scores if scores is not None else [0.5] * len(boxes)
    return RegionSet(feature_map=fmap, boxes=[box(*b) for b in boxes], scores=scores)


@pytest.fixture
def store():
    return ParamStore(3)


@pytest.fixture
def params(store):
    return vissg.init_params(store, C, D, roi_size=2)


@pytest.fixture
def fmap(rng):
    return rng.uniform(size=(C, 6, 6))


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def gru(x, h, p):
    z = sigmoid(p.W_z.data @ x + p.b_z.data + p.U_z.data @ h)
    r = sigmoid(p.W_r.data @ x + p.b_r.data + p.U_r.data @ h)
    h_tilde = np.tanh(p.W_h.data @ x + p.b_h.data + p.U_h.data @ (r * h))
    return (1.0 - z) * h + z * h_tilde


# --- Caja unión ---

def test_union_box_examples():
    assert vissg.union_box(box(0, 0, 2, 2), box(1, 1, 4, 3)).as_list() == [0, 0, 4, 3]
    assert vissg.union_box(box(5, 5, 6, 6), box(0, 0, 1, 1)).as_list() == [0, 0, 6, 6]


def test_union_box_properties(rng):
    for _ in range(100):
        a, b = random_box(rng), random_box(rng)
        u = vissg.union_box(a, b)
        assert u == vissg.union_box(b, a)
        assert vissg.union_box(a, a) == a
        for part in (a, b):
            assert u.x0 <= part.x0 and u.y0 <= part.y0
            assert u.x1 >= part.x1 and u.y1 >= part.y1


# --- ROI ---

def test_roi_constant_map_gives_constant():
    out = vissg.roi_features(Tensor(np.full((C, 5, 5), 0.25)), box(1, 0, 4, 3), 2)
    np.testing.assert_array_equal(out.data, np.full(C * 4, 0.25))


def test_roi_single_cell_takes_maximum():
    out = vissg.roi_features(Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]])), box(0, 0, 2, 2), 1)
    assert out.data.tolist() == [4.0]


def test_roi_grid_on_ramp():
    ramp = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    out = vissg.roi_features(Tensor(ramp), box(0, 0, 4, 4), 2)
    assert out.data.tolist() == [5.0, 7.0, 13.0, 15.0]


def test_roi_small_box_repeats_cells():
    out = vissg.roi_features(Tensor(np.arange(9.0).reshape(1, 3, 3)), box(1, 1, 2, 2), 2)
    assert out.data.tolist() == [4.0] * 4


def test_roi_channels_are_flattened_in_order():
    fmap = np.stack([np.arange(16.0).reshape(4, 4), -np.arange(16.0).reshape(4, 4)])
    out = vissg.roi_features(Tensor(fmap), box(0, 0, 4, 4), 2)
    assert out.data.tolist() == [5.0, 7.0, 13.0, 15.0, 0.0, -2.0, -8.0, -10.0]


def test_roi_box_outside_map_is_rejected():
    with pytest.raises(ContractError):
        vissg.roi_features(Tensor(np.zeros((1, 4, 4))), box(2, 2, 6, 4), 2)


# --- Grafo inicial ---

@pytest.mark.parametrize("n", range(1, 9))
def test_init_graph_counts(params, fmap, n):
    g = vissg.init_graph(regions_of(fmap, [[0, 0, 2, 2]] * n), params)
    assert g.num_nodes == n
    assert len(g.edge_h) == n * (n - 1)
    assert all(h.shape == (D,) for h in g.node_h)


def test_init_graph_identical_boxes_share_states(params, fmap):
    g = vissg.init_graph(regions_of(fmap, [[1, 1, 4, 5]] * 3), params)
    for h in g.node_h[1:]:
        np.testing.assert_array_equal(h.data, g.node_h[0].data)


def test_init_graph_rejects_empty(params, fmap):
    with pytest.raises(EmptyGraphError):
        vissg.init_graph(regions_of(fmap, []), params)


# --- Paso de mensajes ---

def test_message_step_single_node(params, fmap):
    g = vissg.init_graph(regions_of(fmap, [[0, 0, 3, 3]]), params)
    out = vissg.message_step(g, params)
    expected = nc.gru_cell(nc.zeros((D,)), g.node_h[0], params.gru_node)
    np.testing.assert_array_equal(out.node_h[0].data, expected.data)


def test_message_step_zero_params(store, params, fmap):
    store.zero_()
    g = vissg.run_reasoning(vissg.init_graph(regions_of(fmap, [[0, 0, 3, 3], [2, 2, 5, 6]]), params), 2, params)
    for h in [*g.node_h, *g.edge_h.values()]:
        np.testing.assert_array_equal(h.data, np.zeros(D))


def test_message_step_two_nodes_match_direct_evaluation(params, fmap):
    g = vissg.init_graph(regions_of(fmap, [[0, 0, 3, 3], [2, 1, 6, 4]]), params)
    out = vissg.message_step(g, params)
    h = [t.data for t in g.node_h]
    he = {k: t.data for k, t in g.edge_h.items()}

    def gate(w, a, b):
        return sigmoid(w.data @ np.concatenate([a, b]))

    for i, j in ((0, 1), (1, 0)):
        m_i = gate(params.v1, h[i], he[(i, j)]) * he[(i, j)] + gate(params.v2, h[i], he[(j, i)]) * he[(j, i)]
        np.testing.assert_allclose(out.node_h[i].data, gru(m_i, h[i], params.gru_node), atol=1e-12)
        m_ij = gate(params.w1, h[i], he[(i, j)]) * h[i] + gate(params.w2, h[i], he[(j, i)]) * h[j]
        np.testing.assert_allclose(out.edge_h[(i, j)].data, gru(m_ij, he[(i, j)], params.gru_edge), atol=1e-12)


def test_message_step_is_permutation_equivariant(params, fmap):
    boxes = [[0, 0, 3, 3], [2, 1, 6, 4], [1, 3, 4, 6], [3, 3, 5, 5]]
    perm = [2, 0, 3, 1]
    g = vissg.run_reasoning(vissg.init_graph(regions_of(fmap, boxes), params), 2, params)
    gp = vissg.run_reasoning(vissg.init_graph(regions_of(fmap, [boxes[k] for k in perm]), params), 2, params)
    for k, original in enumerate(perm):
        np.testing.assert_allclose(gp.node_h[k].data, g.node_h[original].data, atol=1e-12)
    for (a, b), h in gp.edge_h.items():
        np.testing.assert_allclose(h.data, g.edge_h[(perm[a], perm[b])].data, atol=1e-12)


def test_run_reasoning_single_iteration_is_one_step(params, fmap):
    g = vissg.init_graph(regions_of(fmap, [[0, 0, 3, 3], [2, 1, 6, 4]]), params)
    once = vissg.run_reasoning(g, 1, params)
    step = vissg.message_step(g, params)
    for a, b in zip(once.node_h, step.node_h):
        np.testing.assert_array_equal(a.data, b.data)


def test_run_reasoning_stays_finite(params, fmap):
    g = vissg.run_reasoning(vissg.init_graph(regions_of(fmap * 50.0, [[0, 0, 3, 3], [2, 1, 6, 4], [0, 0, 6, 6]]), params), 10, params)
    assert all(np.all(np.isfinite(h.data)) for h in [*g.node_h, *g.edge_h.values()])


def test_run_reasoning_rejects_zero_iterations(params, fmap):
    g = vissg.init_graph(regions_of(fmap, [[0, 0, 3, 3]]), params)
    with pytest.raises(ContractError):
        vissg.run_reasoning(g, 0, params)


# --- Selección y lectura ---

def graph_of(states, edge=None):
    n = len(states)
    edges = {(i, j): edge if edge is not None else Tensor(np.full(D, float(10 * i + j))) for i in range(n) for j in range(n) if i != j}
    return VisualGraph(node_h=states, edge_h=edges, scores=[0.5] * n)


def test_select_subgraphs_orders_by_score():
    g = graph_of([nc.zeros((D,))] * 3)
    assert vissg.select_subgraphs(g, [0.9, 0.1, 0.5], 2) == [0, 2]


def test_select_subgraphs_ties_keep_index_order():
    g = graph_of([nc.zeros((D,))] * 3)
    assert vissg.select_subgraphs(g, [0.5, 0.5, 0.5], 2) == [0, 1]


def test_select_subgraphs_with_more_slots_than_nodes():
    g = graph_of([nc.zeros((D,))] * 2)
    assert vissg.select_subgraphs(g, [0.2, 0.8], 3) == [1, 0]


def test_readout_single_node_is_node_state(rng):
    h = Tensor(rng.normal(size=D))
    np.testing.assert_array_equal(vissg.readout(graph_of([h]), 0).embedding.data, h.data)


def test_readout_equal_states(rng):
    h = Tensor(rng.normal(size=D))
    out = vissg.readout(graph_of([h, h, h], edge=h), 1).embedding.data
    np.testing.assert_allclose(out, h.data, atol=1e-12)


def test_readout_is_mean_of_anchor_neighbourhood(rng):
    states = [Tensor(rng.normal(size=D)) for _ in range(3)]
    g = graph_of(states)
    expected = np.mean([states[0].data, *(g.edge_h[k].data for k in ((0, 1), (1, 0), (0, 2), (2, 0)))], axis=0)
    np.testing.assert_allclose(vissg.readout(g, 0).embedding.data, expected, atol=1e-12)


def test_readout_rejects_bad_anchor(rng):
    with pytest.raises(ContractError):
        vissg.readout(graph_of([nc.zeros((D,))]), 1)


# --- Grafo completo ---

def test_build_visual_graph_selects_top_scored(params, fmap):
    regions = regions_of(fmap, [[0, 0, 3, 3], [2, 1, 6, 4], [1, 3, 4, 6]], [0.3, 0.9, 0.6])
    subgraphs, g, warnings = vissg.build_visual_graph(regions, params, t_iters=2, top_n=2)
    assert [s.anchor for s in subgraphs] == [1, 2]
    assert g.num_nodes == 3
    assert warnings == []


def test_build_visual_graph_empty_regions(params, fmap):
    subgraphs, g, warnings = vissg.build_visual_graph(regions_of(fmap, []), params, t_iters=2, top_n=3)
    assert subgraphs == [] and g is None
    assert warnings == [vissg.EMPTY_REGIONS]


def test_subgraph_gradient_reaches_feature_map(params, fmap, scalarize):
    boxes = [[0, 0, 3, 3], [2, 1, 6, 4], [1, 3, 4, 6]]

    def loss(x):
        subgraphs, _, _ = vissg.build_visual_graph(regions_of(x, boxes), params, t_iters=2, top_n=2)
        return scalarize(nc.stack([s.embedding for s in subgraphs]))

    assert nc.finite_difference_check(loss, Tensor(fmap), coords=30) < 1e-4


def test_visual_parameters_gradients(params, fmap, fd, scalarize):
    regions = regions_of(fmap, [[0, 0, 3, 3], [2, 1, 6, 4]])

    def loss():
        return scalarize(vissg.build_visual_graph(regions, params, t_iters=2, top_n=2)[1].node_h[0])

    for name in ("W_roi", "v1", "v2", "w1", "w2"):
        assert fd(params, name, loss) < 1e-4, name
    assert fd(params.gru_edge, "U_h", loss) < 1e-4


def test_relation_dump_lists_directed_pairs(fmap):
    regions = regions_of(fmap, [[0, 0, 2, 2], [3, 3, 5, 6]], [0.4, 0.8])
    dump = vissg.relation_dump(regions, [1])
    assert [n["selected"] for n in dump["nodes"]] == [False, True]
    assert [(r["subject"], r["object"]) for r in dump["relations"]] == [(0, 1), (1, 0)]
    assert dump["relations"][0]["union_box"] == [0, 0, 5, 6]
