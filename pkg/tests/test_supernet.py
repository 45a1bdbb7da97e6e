import numpy as np
import pytest

from edgenas import tensor as T
from edgenas.errors import ConfigurationError, ContractError
from edgenas.gradcheck import grad_check
from edgenas.graphs import Graph, RelGraph
from edgenas.space import Selection
from edgenas.subgraphs import distance_encode, extract_enclosing_subgraph
from edgenas.supernet import (BatchedGraphs, KGArrays, Supernet,
                              batch_full_graph, batch_graph_list,
                              batch_subgraphs, build_kg_arrays, build_supernet,
                              supernet_forward)
from edgenas.tensor import Tape, Tensor, backward


def onehot_sel(net, requires_grad=False, **choices):
    thetas = {}
    for slot in net.slots:
        name = choices.get(slot.slot_id, slot.candidates[0])
        v = np.zeros(len(slot.candidates))
        v[slot.candidates.index(name)] = 1.0
        thetas[slot.slot_id] = Tensor(v, requires_grad=requires_grad)
    mode = "relaxed" if requires_grad else "derived"
    return Selection(thetas, mode=mode)


def relaxed_sel(net):
    return Selection({s.slot_id: Tensor(np.full(len(s.candidates),
                                                1.0 / len(s.candidates)),
                                        requires_grad=True)
                      for s in net.slots}, mode="relaxed")


def small_nc_net(**kw):
    return build_supernet("nc", 2, 1, in_dim=2, num_classes=2, seed=0, **kw)


def identity_layer(net, k=0):
    net.params[f"w_self_{k}"].data = np.eye(net.dims)
    net.params[f"w_neigh_{k}"].data = np.eye(net.dims)


def test_isolated_node_empty_neighborhood():
    net = small_nc_net()
    identity_layer(net)
    sel = onehot_sel(net, agg_l0="sum", com_l0="sum", act_l0="relu")
    batch = BatchedGraphs(
        x=np.zeros((1, 2)), src=np.zeros(0, dtype=np.intp),
        dst=np.zeros(0, dtype=np.intp), node_count=1,
        graph_ids=np.zeros(1, dtype=np.intp), graph_count=1)
    out = net.homo_layer_forward(sel, 0, Tensor([[1.0, -1.0]]), batch)
    assert np.array_equal(out.data, [[1.0, 0.0]])


def test_two_node_path_hand_evaluation():
    net = small_nc_net()
    identity_layer(net)
    sel = onehot_sel(net, agg_l0="sum", com_l0="sum", act_l0="relu")
    batch = BatchedGraphs(
        x=np.zeros((2, 2)), src=np.array([1, 0]), dst=np.array([0, 1]),
        node_count=2, graph_ids=np.zeros(2, dtype=np.intp), graph_count=1)
    out = net.homo_layer_forward(sel, 0, Tensor([[1.0, 0.0], [0.0, 1.0]]), batch)
    assert np.array_equal(out.data, [[1.0, 1.0], [1.0, 1.0]])


def _tiny_kg_net(**kw):
    return build_supernet("kg", 3, 1, entity_count=2,
                          num_augmented_relations=3, seed=1, **kw)


def test_kg_message_identity_weights():
    # one triple (0, r, 1): the original-direction message into node 1
    # with identity weights and phi=sub is h_0 - h_r
    net = _tiny_kg_net()
    for name in ("w_o_0", "w_i_0", "w_sl_0"):
        net.params[name].data = np.eye(3)
    kg = KGArrays(src=np.array([0]), dst=np.array([1]), rel=np.array([0]),
                  original_mask=np.array([[1.0]]),
                  inverse_mask=np.array([[0.0]]),
                  entity_count=2, self_loop_id=2)
    sel = onehot_sel(net, phi_l0="sub", agg_l0="sum", com_l0="sum")
    h = Tensor([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    r = Tensor([[0.5, 0.5, 0.5], [9.0, 9.0, 9.0], [0.0, 0.0, 0.0]])
    msg = T.gather_rows(h, kg.src)
    phi = net._compose_mix(sel, 0, msg, T.gather_rows(r, kg.rel))
    assert np.allclose(phi.data[0], [0.5, 1.5, 2.5])


def test_kg_direction_sensitivity():
    # swapping the lambda tag changes the message when W_O != W_I
    net = _tiny_kg_net()
    rng = np.random.default_rng(0)
    h = Tensor(rng.normal(size=(2, 3)))
    r = Tensor(rng.normal(size=(3, 3)))
    sel = onehot_sel(net, phi_l0="sub", agg_l0="sum", com_l0="sum")

    def run(as_original):
        kg = KGArrays(src=np.array([0]), dst=np.array([1]), rel=np.array([0]),
                      original_mask=np.array([[1.0 if as_original else 0.0]]),
                      inverse_mask=np.array([[0.0 if as_original else 1.0]]),
                      entity_count=2, self_loop_id=2)
        out, _ = net.kg_layer_forward(sel, 0, h, r, kg)
        return out.data

    assert not np.allclose(run(True), run(False))


def test_build_kg_arrays_excludes_self_loops():
    rg = RelGraph(3, 2, [(0, 0, 1), (1, 1, 2)],
                  {"a": 0, "b": 1, "c": 2}, {"r1": 0, "r2": 1})
    kg = build_kg_arrays(rg)
    assert len(kg.src) == 4
    assert kg.self_loop_id == 4
    assert np.all(kg.dst[:-1] <= kg.dst[1:])
    assert float(kg.original_mask.sum()) == 2.0
    assert float(kg.inverse_mask.sum()) == 2.0


def _random_lp_batch(rng, n=12, n_links=3):
    edges = sorted({(int(a), int(b)) for a, b in
                    [sorted(rng.choice(n, 2, replace=False)) for _ in range(20)]})
    g = Graph(n, edges)
    subs = []
    for _ in range(n_links):
        u, v = rng.choice(n, 2, replace=False)
        sub = extract_enclosing_subgraph(g, (int(u), int(v)), hops=2)
        sub.features = distance_encode(sub, d_max=3)
        subs.append(sub)
    return batch_subgraphs(subs)


def test_one_hot_collapse_matches_mixture_path():
    rng = np.random.default_rng(4)
    net = build_supernet("lp_homo", 4, 2, in_dim=8, seed=2)
    batch = _random_lp_batch(rng)
    for trial in range(5):
        choices = {s.slot_id: s.candidates[int(rng.integers(len(s.candidates)))]
                   for s in net.slots}
        fast = net.forward(onehot_sel(net, **choices), batch)
        mixed = net.forward(onehot_sel(net, requires_grad=True, **choices), batch)
        assert np.max(np.abs(fast.data - mixed.data)) <= 1e-12


def test_relaxed_agg_equals_candidate_average():
    net = small_nc_net()
    theta = {s.slot_id: Tensor(np.eye(len(s.candidates))[0]) for s in net.slots}
    batch = BatchedGraphs(
        x=np.zeros((3, 2)), src=np.array([1, 0, 2, 1]),
        dst=np.array([0, 1, 1, 2]), node_count=3,
        graph_ids=np.zeros(3, dtype=np.intp), graph_count=1)
    h = Tensor(np.random.default_rng(1).normal(size=(3, 2)))
    msg = T.matmul(T.gather_rows(h, batch.src), net.params["w_neigh_0"])
    theta["agg_l0"] = Tensor([0.5, 0.0, 0.5])
    sel = Selection(theta)
    mixed = net._aggregate(sel, 0, msg, batch.dst, 3)
    pure_sum = T.segment_sum(msg, batch.dst, 3)
    pure_max = T.segment_max(msg, batch.dst, 3)
    assert np.allclose(mixed.data, 0.5 * (pure_sum.data + pure_max.data),
                       atol=1e-12)


def test_aggregation_permutation_invariance():
    net = small_nc_net()
    sel = onehot_sel(net, agg_l0="sum")
    x = np.random.default_rng(0).normal(size=(4, 2))
    h = Tensor(x)
    fwd = []
    for edges in ([(0, 1), (1, 2), (2, 3)], [(2, 3), (0, 1), (1, 2)]):
        src, dst = [], []
        for a, b in edges:
            src.extend((a, b))
            dst.extend((b, a))
        src, dst = np.asarray(src), np.asarray(dst)
        order = np.lexsort((src, dst))
        batch = BatchedGraphs(x=np.zeros((4, 2)), src=src[order],
                              dst=dst[order], node_count=4,
                              graph_ids=np.zeros(4, dtype=np.intp),
                              graph_count=1)
        fwd.append(net.homo_layer_forward(sel, 0, h, batch).data)
    assert np.array_equal(fwd[0], fwd[1])


def test_gradients_reach_theta_and_all_params():
    rng = np.random.default_rng(8)
    net = build_supernet("lp_homo", 3, 2, in_dim=8, seed=5)
    batch = _random_lp_batch(rng, n=10, n_links=4)
    sel = relaxed_sel(net)
    with Tape():
        out = net.forward(sel, batch)
        loss = T.sum_(T.multiply(out, out))
        grads = backward(loss)
    # the last layer_connect slot feeds nothing downstream (layer_agg
    # consumes raw outputs), so it is exempt from reachability
    vestigial = {f"lc_l{net.layer_count - 1}"}
    for slot in net.slots:
        if slot.slot_id in vestigial:
            continue
        g = grads.get(id(sel.thetas[slot.slot_id]))
        assert g is not None and np.any(g != 0.0), slot.slot_id
    for name, p in net.params.items():
        if name.startswith("p_lc_1"):
            continue
        assert id(p) in grads, name


def test_supernet_forward_gradcheck_five_nodes():
    rng = np.random.default_rng(3)
    net = build_supernet("lp_homo", 2, 1, in_dim=4, seed=7)
    g = Graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
    sub = extract_enclosing_subgraph(g, (0, 2), hops=2)
    sub.features = distance_encode(sub, d_max=1)
    batch = batch_subgraphs([sub])
    sel = relaxed_sel(net)
    probes = [net.params["w_self_0"], net.params["w_neigh_0"],
              net.params["p_com_0"], net.params["prelu_0"],
              sel.thetas["agg_l0"], sel.thetas["com_l0"]]

    def f(*_):
        out = net.forward(sel, batch)
        return T.sum_(T.sigmoid(out))

    assert grad_check(f, probes, eps=1e-5) <= 1e-3


def test_kg_forward_shapes_and_scores():
    net = _tiny_kg_net()
    rg = RelGraph(2, 1, [(0, 0, 1)], {"a": 0, "b": 1}, {"r": 0})
    kg = build_kg_arrays(rg)
    sel = onehot_sel(net, phi_l0="mult", agg_l0="mean")
    logits = net.forward_kg(sel, kg, np.array([0, 1]), np.array([0, 1]))
    assert logits.data.shape == (2, 2)


def test_no_edge_embedding_ignores_relation_table():
    net = _tiny_kg_net(ablation=["no_edge_embedding"])
    rg = RelGraph(2, 1, [(0, 0, 1)], {"a": 0, "b": 1}, {"r": 0})
    kg = build_kg_arrays(rg)
    sel = onehot_sel(net, agg_l0="sum")
    out1 = net.forward_kg(sel, kg, np.array([0]), np.array([0])).data
    net.params["rel_emb"].data = net.params["rel_emb"].data + 5.0
    out2 = net.forward_kg(sel, kg, np.array([0]), np.array([0])).data
    assert np.array_equal(out1, out2)


def test_shared_delta_equivalence():
    shared = build_supernet("nc", 3, 1, in_dim=3, num_classes=2,
                            ablation=["shared_delta"], seed=11)
    plain = build_supernet("nc", 3, 1, in_dim=3, num_classes=2, seed=11)
    w = shared.params["w_shared_0"].data
    plain.params["w_self_0"].data = w.copy()
    plain.params["w_neigh_0"].data = w.copy()
    for name in ("w_in", "p_com_0", "p_lc_0", "p_la", "w_head", "b_head"):
        plain.params[name].data = shared.params[name].data.copy()
    g = Graph(4, [(0, 1), (1, 2), (2, 3)],
              features=np.random.default_rng(2).normal(size=(4, 3)))
    batch = batch_full_graph(g)
    sel_s = onehot_sel(shared, agg_l0="sum", com_l0="sum", act_l0="relu")
    sel_p = onehot_sel(plain, agg_l0="sum", com_l0="sum", act_l0="relu")
    assert np.array_equal(shared.forward(sel_s, batch).data,
                          plain.forward(sel_p, batch).data)


def test_batch_subgraphs_block_diagonal():
    g = Graph(6, [(0, 1), (1, 2), (3, 4), (4, 5)])
    subs = []
    for pair in [(0, 2), (3, 5)]:
        sub = extract_enclosing_subgraph(g, pair, hops=1)
        sub.features = distance_encode(sub, d_max=2)
        sub.label = 1.0
        subs.append(sub)
    batch = batch_subgraphs(subs)
    assert batch.graph_count == 2
    assert batch.node_count == sum(s.node_count for s in subs)
    assert np.all(batch.dst[:-1] <= batch.dst[1:])
    # no edge crosses the block boundary
    first = subs[0].node_count
    assert not np.any((batch.src < first) & (batch.dst >= first))


def test_batch_graph_list_and_gc_forward():
    rng = np.random.default_rng(6)
    graphs = [Graph(3, [(0, 1), (1, 2)], features=rng.normal(size=(3, 2))),
              Graph(2, [(0, 1)], features=rng.normal(size=(2, 2)))]
    batch = batch_graph_list(graphs, labels=[0, 1])
    net = build_supernet("gc", 4, 2, in_dim=2, num_classes=2, seed=3)
    out = supernet_forward(net, onehot_sel(net), batch)
    assert out.data.shape == (2, 2)


def test_weight_save_load_round_trip(tmp_path):
    net = small_nc_net()
    path = tmp_path / "weights.npz"
    net.save_weights(path)
    other = small_nc_net()
    other.params["w_in"].data = np.zeros_like(other.params["w_in"].data)
    other.load_weights(path)
    for name in net.params:
        assert np.array_equal(net.params[name].data, other.params[name].data)
    bad = build_supernet("nc", 2, 2, in_dim=2, num_classes=2, seed=0)
    with pytest.raises(ContractError):
        bad.load_weights(path)


def test_build_supernet_validation():
    with pytest.raises(ConfigurationError):
        build_supernet("nc", 0, 1, in_dim=2, num_classes=2)
    with pytest.raises(ConfigurationError):
        build_supernet("nc", 2, 1, in_dim=2, num_classes=1)
    with pytest.raises(ConfigurationError):
        build_supernet("kg", 2, 1)
    with pytest.raises(ConfigurationError):
        build_supernet("lp_homo", 2, 1)
