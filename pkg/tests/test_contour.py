import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d import contour as ct
from quasi2d.factory import ArcInterval, laughlin_flux, shift
from quasi2d.lattice import LinOp, SquareZ2, build_site_map


def _local(radius, seed):
    sm = build_site_map(SquareZ2(radius))
    rng = np.random.default_rng(seed)
    xy = sm.coordinates()
    near = np.max(np.abs(xy[:, None] - xy[None, :]), axis=2) <= 1
    d = sm.dim
    return LinOp((rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) * near, sm)


I_ARC = ArcInterval(0.0, math.pi / 2)
J_ARC = ArcInterval(3 * math.pi / 4, 5 * math.pi / 4)


@pytest.fixture(scope="module")
def local_a():
    return _local(6, 7)


def test_recovers_direct_product(local_a):
    # oracle: Lambda_I A Lambda_J computed by coordinate masking
    flux = laughlin_flux(local_a.site_map)
    block, residual, diag = ct.contour_recover_block(local_a, flux, I_ARC, J_ARC, samples=512)
    phases = np.angle(np.diag(flux.matrix))
    rows = I_ARC.membership(phases, on_boundary="flags")
    cols = J_ARC.membership(phases, on_boundary="flags")
    direct = np.zeros_like(block)
    direct[np.ix_(rows, cols)] = local_a.matrix[np.ix_(rows, cols)]
    assert np.abs(direct).max() > 0
    assert np.linalg.norm(block - direct, 2) <= 1e-10
    assert residual <= 1e-10


def test_residual_converges_geometrically(local_a):
    ladder = ct.residual_ladder(local_a, laughlin_flux(local_a.site_map), I_ARC, J_ARC,
                                samples=(64, 128, 256, 512))
    assert ladder["ok"]
    assert ladder["residuals"][-1] <= 1e-12


def test_zero_operator_gives_zero(local_a):
    zero = LinOp(np.zeros_like(local_a.matrix), local_a.site_map)
    _, residual, _ = ct.contour_recover_block(zero, laughlin_flux(zero.site_map), I_ARC, J_ARC, samples=64)
    assert residual == 0.0


def test_overlapping_arcs_rejected():
    with pytest.raises(ct.ContourError):
        ct.log_polar_contour(ArcInterval(0, 2), ArcInterval(1, 3))


@given(st.floats(0.0, 6.2), st.floats(0.2, 2.0), st.floats(0.2, 1.5))
def test_winding_exact_matches_quadrature(start, length, gap):
    target = ArcInterval(start, start + length)
    avoid = ArcInterval(start + length + gap, start + length + gap + 0.5)
    curve = ct.log_polar_contour(target, avoid, samples=1024)
    inside = np.exp(1j * (start + length / 2))
    outside = np.exp(1j * (start + length + gap + 0.25))
    assert curve.winding_number(inside) == 1.0
    assert curve.winding_number(outside) == 0.0
    assert curve.winding_number(0.0) == 0.0
    bare = ct.Contour(curve.nodes, curve.weights, curve.clearance, curve.samples)
    assert abs(bare.winding_number(inside) - 1) < 1e-6
    assert abs(bare.winding_number(outside)) < 1e-6


def test_resolvent_norm_bound():
    flux = laughlin_flux(build_site_map(SquareZ2(3)))
    res, rep = ct.interval_resolvent(flux, J_ARC, 2.0 + 0j)
    assert rep["pass"]


@pytest.mark.parametrize("make", [lambda sm: shift(sm, "+x", "open"), None])
def test_dyadic_bound(make):
    sm = build_site_map(SquareZ2(6))
    a = make(sm) if make else _local(6, 3)
    rows = ct.dyadic_commutator_decay(a, laughlin_flux(a.site_map), 5)
    assert all(r["pass"] for r in rows)
    assert [r["level"] for r in rows] == [1, 2, 3, 4, 5]


@given(st.integers(0, 2**31))
def test_diam_bound_on_random_normal(seed):
    rng = np.random.default_rng(seed)
    n = 8
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    lam = rng.normal(size=n) + 1j * rng.normal(size=n)
    subset = ct.SpectralSubset(centre=complex(lam[0]), radius=1.5)
    inside = subset.contains(lam)
    z = ct.random_hull_point(lam[inside], rng)
    rep = ct.diam_bound_check(q @ np.diag(lam) @ q.conj().T, subset, z)
    assert rep["pass"] and rep["slack"] >= -1e-10
    assert rep["rhs"] <= rep["set_diameter"] + 1e-12


def test_diam_needs_normal():
    with pytest.raises(ValueError):
        ct.diam_bound_check(np.array([[0, 1], [0, 0]], dtype=complex), ct.SpectralSubset(radius=1.0), 0j)


def test_quadrature_contracts(local_a):
    rep = ct.quadrature_contract_check(local_a, laughlin_flux(local_a.site_map), I_ARC, J_ARC)
    assert rep["norm_bound"]["pass"] and rep["trace_interchange"]["pass"] and rep["rank_one"]["pass"]
