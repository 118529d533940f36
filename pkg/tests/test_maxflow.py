import itertools

import numpy as np
import pytest

from bifseg.errors import NumericError
from bifseg.maxflow import FlowNetwork


def test_single_node_min_terminal():
    # cap(source->i) = cost of label 0, cap(i->sink) = cost of label 1;
    # the cheaper label wins, and label 1 <=> reachable from the source
    net = FlowNetwork(1)
    net.add_terminal(0, 3.0, 5.0)
    flow, reach = net.min_cut()
    assert flow == 3.0
    assert not reach[0]


def test_single_node_tie_saturates_both():
    net = FlowNetwork(1)
    net.add_terminal(0, 2.0, 2.0)
    flow, reach = net.min_cut()
    assert flow == 2.0
    assert not reach[0]


def test_two_nodes_with_pairwise():
    net = FlowNetwork(2)
    net.add_terminal(0, 0.0, 10.0)   # prefers label 0
    net.add_terminal(1, 10.0, 0.0)   # prefers label 1
    net.add_arcs([0], [1], [1.5], [1.5])
    flow, reach = net.min_cut()
    # disagreeing costs only the 1.5 bond
    assert flow == pytest.approx(1.5)
    assert not reach[0] and reach[1]


def test_strong_pairwise_forces_agreement():
    net = FlowNetwork(2)
    net.add_terminal(0, 0.0, 10.0)
    net.add_terminal(1, 3.0, 0.0)
    net.add_arcs([0], [1], [100.0], [100.0])
    flow, reach = net.min_cut()
    # cheaper to flip node 1 to label 0 (pay 3) than to cut the bond
    assert flow == pytest.approx(3.0)
    assert not reach[0] and not reach[1]


def test_negative_capacity_rejected():
    net = FlowNetwork(1)
    with pytest.raises(NumericError):
        net.add_arcs([net.source], [0], [-1.0], 0.0)


def _brute_force_cut(n, terminal_caps, pair_arcs):
    best = float("inf")
    for bits in itertools.product((0, 1), repeat=n):
        total = 0.0
        for i, (c0, c1) in enumerate(terminal_caps):
            total += c1 if bits[i] else c0
        for (u, v, w) in pair_arcs:
            if bits[u] != bits[v]:
                total += w
        best = min(best, total)
    return best


def test_random_networks_match_enumeration():
    rng = np.random.default_rng(99)
    for _ in range(60):
        n = int(rng.integers(2, 7))
        terminal = [(float(rng.uniform(0, 5)), float(rng.uniform(0, 5))) for _ in range(n)]
        pairs = []
        for u in range(n):
            for v in range(u + 1, n):
                if rng.random() < 0.6:
                    pairs.append((u, v, float(rng.uniform(0, 3))))
        net = FlowNetwork(n)
        nodes = np.arange(n)
        net.add_arcs(np.full(n, net.source), nodes, [c0 for c0, _ in terminal], 0.0)
        net.add_arcs(nodes, np.full(n, net.sink), [c1 for _, c1 in terminal], 0.0)
        for u, v, w in pairs:
            net.add_arcs([u], [v], [w], [w])
        flow, reach = net.min_cut()
        # value of the returned cut, recomputed from the labeling
        bits = reach.astype(int)
        cut = sum((c1 if bits[i] else c0) for i, (c0, c1) in enumerate(terminal))
        cut += sum(w for (u, v, w) in pairs if bits[u] != bits[v])
        best = _brute_force_cut(n, terminal, pairs)
        assert cut == pytest.approx(best, abs=1e-9)
        assert flow == pytest.approx(best, abs=1e-9)
