from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lifelong_vrp.core import ProblemKind
from lifelong_vrp.taskgen import (
    Distribution,
    PrincipalTask,
    child_rng,
    draw_layout,
    make_schedule,
    principal_spec,
    round_half_up,
    sample_instance,
    sample_principal_node,
    sample_principal_nodes,
    schedule_task,
)

U, C, G = Distribution.UNIFORM, Distribution.CLUSTER, Distribution.GRID


def two(lo=20, hi=50, T=200, kind=ProblemKind.TSP):
    return make_schedule([PrincipalTask(U, lo), PrincipalTask(C, hi)], T, kind)


def test_round_half_up():
    assert [round_half_up(Fraction(k, 2)) for k in range(-3, 6)] == [-1, -1, 0, 0, 1, 1, 2, 2, 3]


def test_make_schedule_examples():
    six = [PrincipalTask(k, 20) for k in Distribution]
    s = make_schedule(six, 1000)
    assert s.interval == 200 and s.principal_epochs() == [0, 200, 400, 600, 800, 1000]
    assert make_schedule(six[:2], 10).interval == 10
    with pytest.raises(ValueError, match="not divisible"):
        make_schedule(six[:3], 11)
    with pytest.raises(ValueError):
        make_schedule(six[:1], 10)


def test_midpoint_scale_and_counts():
    spec = schedule_task(two(), 100)
    assert (spec.scale, spec.count_next, spec.count_prev) == (35, 18, 17)


def test_segment_endpoints():
    s = two()
    a, b = schedule_task(s, 0), schedule_task(s, 200)
    assert (a.scale, a.count_next) == (20, 0)
    assert (b.scale, b.count_next, b.count_prev) == (50, 50, 0)


def test_epoch_out_of_range():
    with pytest.raises(ValueError):
        schedule_task(two(), 201)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(2, 60), st.integers(1, 12), st.integers(2, 5))
def test_schedule_properties(s1, s2, m, K):
    principals = [PrincipalTask(U, s1 if k % 2 == 0 else s2) for k in range(K)]
    sched = make_schedule(principals, m * (K - 1))
    prev = None
    for t in range(sched.total_epochs + 1):
        spec = schedule_task(sched, t)
        assert spec.count_next + spec.count_prev == spec.scale
        if t % m == 0:
            assert spec.scale == principals[t // m].scale
        if prev is not None and spec.lower == prev.lower:
            if spec.prev.scale < spec.next.scale:
                assert spec.scale >= prev.scale
            assert (spec.scale, spec.mixture) != (prev.scale, prev.mixture)
        prev = spec


def test_uniform_moments():
    pts = sample_principal_nodes(U, {}, 10_000, np.random.default_rng(1))
    assert pts.min() >= 0 and pts.max() <= 1
    sigma = np.sqrt(1 / 12 / 10_000)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 3 * sigma)


def test_grid_without_jitter_lands_on_lattice():
    pts = sample_principal_nodes(G, {"grid": 8, "jitter": 0.0}, 500, np.random.default_rng(2))
    assert np.allclose(pts * 8, np.round(pts * 8))


def test_single_cluster_mean():
    task = PrincipalTask(C, 10, params={"centers": 1, "center_low": 0.5, "center_high": 0.5})
    rng = np.random.default_rng(3)
    layout = draw_layout(C, task.params, rng)
    pts = sample_principal_nodes(C, layout, 10_000, rng)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.02)


def test_single_node_sampler_stays_in_box():
    rng = np.random.default_rng(4)
    for kind in Distribution:
        task = PrincipalTask(kind, 12)
        layout = draw_layout(kind, task.params, rng)
        for _ in range(50):
            p = sample_principal_node(kind, layout, rng)
            assert p.shape == (2,) and np.all((0 <= p) & (p <= 1))


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        PrincipalTask(C, 10, params={"sigma": -1.0})
    with pytest.raises(ValueError):
        PrincipalTask(U, 10, params={"bogus": 1})
    with pytest.raises(ValueError):
        PrincipalTask(U, 1)


def test_pure_principal_matches_sampler():
    """At a principal epoch the instance nodes come from that principal alone (two-sample KS)."""
    sched = make_schedule([PrincipalTask(G, 16, params={"jitter": 0.25}), PrincipalTask(U, 16)], 10)
    spec = principal_spec(sched, 0)
    rng = np.random.default_rng(5)
    a = np.concatenate([sample_instance(spec, rng).nodes[:, 0] for _ in range(625)])
    b = np.concatenate([sample_principal_nodes(G, sched.principals[0].params, 16, rng)[:, 0]
                        for _ in range(625)])
    grid = np.sort(np.concatenate([a, b]))
    ks = np.max(np.abs(np.searchsorted(np.sort(a), grid, side="right") / len(a)
                       - np.searchsorted(np.sort(b), grid, side="right") / len(b)))
    assert ks < 1.36 * np.sqrt(2 / 10_000)


def test_cvrp_instance_shape():
    sched = two(8, 12, 4, ProblemKind.CVRP)
    spec = schedule_task(sched, 2)
    inst = sample_instance(spec, np.random.default_rng(6))
    assert inst.n == spec.scale
    assert inst.depot.tolist() == [0.5, 0.5]
    assert inst.capacity == round_half_up(Fraction(1, 2) * (31 + 32))
    assert inst.demands.min() >= 1 and inst.demands.max() <= 9


def test_sampling_is_deterministic():
    spec = schedule_task(two(), 77)
    a = sample_instance(spec, child_rng(9, 1))
    b = sample_instance(spec, child_rng(9, 1))
    assert a.nodes.tobytes() == b.nodes.tobytes() and a.id == b.id
    c = sample_instance(spec, child_rng(9, 2))
    assert a.nodes.tobytes() != c.nodes.tobytes()
