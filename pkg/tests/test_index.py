import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d.factory import IndexPrescription, half_space_projection, prescribed_index_unitary, shift
from quasi2d.index import (
    index_vector,
    polar_unitary,
    window_from_block_bases,
    window_from_sites,
    windowed_kernel_index,
    windowed_trace_index,
)
from quasi2d.lattice import InvalidParameter, LineZ, LinOp, StarGraph, build_site_map, star_leg_family


@pytest.fixture(scope="module")
def line():
    sm = build_site_map(LineZ(64))
    return sm, half_space_projection(sm), window_from_sites(sm, 16, 8)


@pytest.mark.parametrize("power", [1, 2, 3])
def test_shift_power_index(line, power):
    # Toeplitz oracle: the compression of R^k to x >= 0 has index -k
    sm, proj, window = line
    u = shift(sm, "right", "periodic", power)
    assert windowed_trace_index(u, proj, window).value == -power
    assert windowed_kernel_index(u, proj, window).value == -power


def test_left_shift_sign(line):
    sm, proj, window = line
    assert windowed_trace_index(shift(sm, "left", "periodic"), proj, window).value == 1


def test_identity_has_zero_index(line):
    sm, proj, window = line
    u = LinOp(np.eye(sm.dim, dtype=complex), sm, {"unitary"})
    assert windowed_trace_index(u, proj, window).value == 0


def test_trace_needs_unitary(line):
    sm, proj, window = line
    with pytest.raises(InvalidParameter):
        windowed_trace_index(LinOp(np.eye(sm.dim) * 0.5, sm), proj, window)


def test_far_reaching_shift_is_unresolved():
    # jumps larger than the window guard leak out; the estimator must refuse
    sm = build_site_map(LineZ(64))
    u = shift(sm, "right", "periodic", 20)
    entry = windowed_trace_index(u, half_space_projection(sm), window_from_sites(sm, 8, 4))
    assert entry.value is None and entry.verdict == "unresolved"


@pytest.fixture(scope="module")
def star_family():
    return star_leg_family(build_site_map(StarGraph(3, 24)))


@given(st.tuples(st.integers(-3, 3), st.integers(-3, 3)).map(lambda t: (t[0], t[1], -t[0] - t[1]))
       .filter(lambda s: abs(s[2]) <= 3))
def test_prescribed_index_vector(star_family, s):
    u = prescribed_index_unitary(star_family, IndexPrescription(s))
    window = window_from_block_bases(star_family, closure_links=[lk for lk in u.meta["links"]
                                                                 if lk.kind == "boundary"])
    vec = index_vector(u, star_family, window)
    assert vec.values == list(s)
    assert vec.sum_rule is True


@given(st.integers(0, 2**31))
def test_conjugation_inside_blocks_preserves_index(star_family, seed):
    s = (1, 1, -2)
    u = prescribed_index_unitary(star_family, IndexPrescription(s))
    rng = np.random.default_rng(seed)
    d = np.zeros((star_family.site_map.dim,) * 2, dtype=complex)
    for b in star_family.bases:
        # phases only: block-diagonal and exactly local
        d += b @ np.diag(np.exp(1j * rng.uniform(0, 6.3, b.shape[1]))) @ b.conj().T
    v = LinOp(d @ u.matrix @ d.conj().T, u.site_map, u.tags, u.meta)
    window = window_from_block_bases(star_family, closure_links=[lk for lk in u.meta["links"]
                                                                 if lk.kind == "boundary"])
    assert index_vector(v, star_family, window).values == list(s)


def test_polar_unitary_of_positive_multiple():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    assert np.allclose(polar_unitary(q * 3.0), q)
