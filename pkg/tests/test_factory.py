import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d.factory import (
    AmbiguousBoundary,
    ArcInterval,
    IndexPrescription,
    WrongGeometry,
    all_finite_prescriptions,
    canonical_sau,
    closure_links,
    laughlin_family,
    laughlin_flux,
    prescribed_index_unitary,
    shift,
    spectral_projection_of_unitary,
    wrap_angle,
)
from quasi2d.lattice import InvalidParameter, LineZ, SquareZ2, StarGraph, build_site_map, star_leg_family

angles = st.floats(-20, 20, allow_nan=False)


@given(angles)
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert 0 <= w < 2 * math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


@given(st.floats(0, 6.2), st.floats(0.1, 3.0), angles)
def test_arc_membership_matches_length(start, length, theta):
    arc = ArcInterval(start, start + length)
    inside = arc.membership(np.array([theta]), on_boundary="flags")[0]
    rel = wrap_angle(theta - start)
    if 1e-6 < rel < length - 1e-6:
        assert inside
    elif length + 1e-6 < rel < 2 * math.pi - 1e-6:
        assert not inside


def test_arc_boundary_raises_unless_flags():
    arc = ArcInterval(0.0, 1.0)
    with pytest.raises(AmbiguousBoundary):
        arc.membership(np.array([1.0]))
    assert list(arc.membership(np.array([0.0, 1.0]), on_boundary="flags")) == [True, False]


def test_flux_is_diagonal_unitary():
    flux = laughlin_flux(build_site_map(SquareZ2(3)))
    m = flux.matrix
    assert np.allclose(m, np.diag(np.diag(m)))
    assert np.allclose(np.abs(np.diag(m)), 1)


def test_flux_needs_plane():
    with pytest.raises(WrongGeometry):
        laughlin_flux(build_site_map(LineZ(3)))


@pytest.mark.parametrize("power", [1, 2, 3])
def test_periodic_shift_is_permutation(power):
    sm = build_site_map(LineZ(5))
    u = shift(sm, "right", "periodic", power)
    assert np.allclose(u.matrix.conj().T @ u.matrix, np.eye(sm.dim))
    assert np.allclose(np.abs(u.matrix).sum(axis=0), 1)


def test_laughlin_family_partitions_identity():
    sm = build_site_map(SquareZ2(4))
    fam = laughlin_family(sm, [2 * math.pi * k / 8 for k in range(8)])
    assert np.allclose(sum(b.matrix for b in fam.blocks), np.eye(sm.dim))
    assert len(fam.blocks) == 8


def test_spectral_projection_of_flux_is_coordinate():
    sm = build_site_map(SquareZ2(3))
    p = spectral_projection_of_unitary(laughlin_flux(sm), ArcInterval(0.1, 1.5))
    assert np.allclose(p.matrix, np.diag(np.diag(p.matrix)))
    assert np.allclose(p.matrix @ p.matrix, p.matrix)


@given(st.sampled_from([s for s in all_finite_prescriptions(3, 2) if len(s) == 3]))
def test_prescribed_unitary_is_unitary_with_flagged_closures(s):
    fam = star_leg_family(build_site_map(StarGraph(3, 12)))
    u = prescribed_index_unitary(fam, IndexPrescription(s))
    assert np.allclose(u.matrix.conj().T @ u.matrix, np.eye(fam.site_map.dim))
    assert len(closure_links(u)) == sum(abs(v) for v in s if v > 0)


def test_prescription_rejects_nonzero_sum():
    with pytest.raises(InvalidParameter):
        IndexPrescription((1, 1, 1))


def test_prescription_rejects_small_rank():
    fam = star_leg_family(build_site_map(StarGraph(3, 3)))
    with pytest.raises(InvalidParameter):
        prescribed_index_unitary(fam, IndexPrescription((3, -1, -2)))


def test_canonical_sau_squares_to_one():
    fam = star_leg_family(build_site_map(StarGraph(3, 8)))
    x = canonical_sau(fam).matrix
    assert np.allclose(x, x.conj().T)
    assert np.allclose(x @ x, np.eye(len(x)))


def test_prescription_count():
    # m = 2: 7 vectors, m = 3: 37 (coefficient count of sum-zero triples in [-3, 3])
    assert len([s for s in all_finite_prescriptions(3, 3) if len(s) == 2]) == 7
    assert len([s for s in all_finite_prescriptions(3, 3) if len(s) == 3]) == 37
