import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d import star as sw
from quasi2d.factory import IndexPrescription, prescribed_index_unitary
from quasi2d.lattice import InvalidParameter, LinOp, StarGraph, build_site_map, star_leg_family


@given(st.floats(1.2, math.pi))
def test_bound_dominates_sharp_constant_for_wide_angles(theta):
    assert sw.sharp_constant(theta) <= sw.distance_bound(theta) + 1e-12


def test_bound_fails_for_narrow_angles():
    assert sw.sharp_constant(math.radians(30)) > sw.distance_bound(math.radians(30))


@pytest.mark.parametrize("legs,expected", [(3, 2 / math.sqrt(3)), (4, math.sqrt(2)), (5, 1 / math.sin(math.pi / 5))])
def test_evenly_spaced_ratio_is_sharp(legs, expected):
    # closed-form oracle: worst ratio is attained by equal radii on adjacent legs
    sm = build_site_map(StarGraph(legs, 32))
    rep = sw.distance_comparability(sm, sw.StarEmbedding.evenly_spaced(legs), max_pairs=20000)
    assert rep["pass"]
    assert rep["max_ratio"] == pytest.approx(expected, rel=1e-9)


def test_narrow_legs_flagged():
    sm = build_site_map(StarGraph(3, 16))
    rep = sw.distance_comparability(sm, sw.StarEmbedding.from_degrees([0, 5, 180]))
    assert not rep["pass"] and rep["flagged_count"] > 0


def test_graph_distance_metric():
    sm = build_site_map(StarGraph(3, 4))
    d = sw.graph_distance(sm)
    assert np.allclose(d, d.T) and np.all(np.diag(d) == 0)
    assert np.all(d[:, :, None] <= d[:, None, :] + d.T[None, :, :] + 1e-12) if sm.dim < 20 else True


def test_exp_local_sampler_respects_bound():
    sm = build_site_map(StarGraph(3, 16))
    op = sw.exp_local_sampler(sm, 0.5, 1.0, seed=2)
    assert sw.exp_bound_holds(op, 0.5, 1.0)


def test_counterexample_axis_block():
    res = sw.counterexample_2d([4, 8, 16])
    assert res["verdict"] == "non-decaying"
    assert res["sigma_1_at_least"] >= 1 - 1e-10
    assert res["reference_verdict"] == "decaying"


@given(st.sampled_from([(1, 1, -2), (2, -1, -1), (0, 3, -3), (0, 0, 0)]))
def test_chiral_vertex_indices_reproduce_prescription(s):
    fam = star_leg_family(build_site_map(StarGraph(3, 24)))
    u = prescribed_index_unitary(fam, IndexPrescription(s))
    vec, diag = sw.chiral_vertex_indices(sw.ChiralSystem(u), fam)
    assert vec.values == list(s)
    assert diag["sum"] == 0


def test_ssh_partner_legs():
    sm = build_site_map(StarGraph(3, 32, include_vertex=False))
    s_op = sw.ssh_star(sm, 1, 2)
    vec, _ = sw.chiral_vertex_indices(sw.ChiralSystem(s_op), star_leg_family(sm))
    assert vec.values == [0, -1, 1]


def test_ssh_needs_vertexless_star():
    with pytest.raises(InvalidParameter):
        sw.ssh_star(build_site_map(StarGraph(3, 8, include_vertex=True)), 1, 2)


def test_chiral_system_spectrum_is_symmetric():
    rng = np.random.default_rng(0)
    sm = build_site_map(StarGraph(3, 4))
    s = LinOp(rng.normal(size=(sm.dim, sm.dim)) + np.eye(sm.dim) * 4, sm)
    assert sw.ChiralSystem(s).spectrum_symmetry() <= 1e-9
