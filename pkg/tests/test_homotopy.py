import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d import homotopy as hm
from quasi2d.experiments import block_conjugator, conjugated, coupled_sau, prescription_family
from quasi2d.factory import IndexPrescription, canonical_sau, prescribed_index_unitary
from quasi2d.lattice import InvariantViolation, LinOp, StarGraph, build_site_map, star_leg_family

unitary_seeds = st.integers(0, 2**31)


def _random_unitary(seed, n=6):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q


@given(unitary_seeds)
def test_unitary_log_round_trip(seed):
    import scipy.linalg as sla
    q = _random_unitary(seed)
    log, _ = hm.unitary_log(q)
    assert np.allclose(log, log.conj().T, atol=1e-10)
    assert np.allclose(sla.expm(1j * log), q, atol=1e-9)


@given(unitary_seeds)
def test_contraction_endpoints(seed):
    q = _random_unitary(seed)
    path = hm.contraction(q)
    assert np.allclose(path(0.0), q, atol=1e-9)
    assert np.allclose(path(1.0), np.eye(len(q)), atol=1e-9)


@given(unitary_seeds)
def test_polar_factor_is_unitary(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)) + 3 * np.eye(5)
    u = hm.polar_factor(a)
    assert np.allclose(u.conj().T @ u, np.eye(5), atol=1e-10)


@given(st.lists(st.sampled_from([-2.0, -0.5, 0.3, 1.7]), min_size=4, max_size=4), unitary_seeds)
def test_sai_path_between_equal_signature(diag, seed):
    q = _random_unitary(seed, 4)
    a = np.diag(diag).astype(complex)
    b = q @ np.diag(sorted(diag)) @ q.conj().T
    path = hm.sai_canonical_path(a, (b + b.conj().T) / 2)
    assert np.allclose(path.start.matrix, a) and np.allclose(path.end.matrix, (b + b.conj().T) / 2, atol=1e-9)
    for op in path.samples:
        assert hm.sign_counts(op.matrix) == hm.sign_counts(a)


def test_sai_path_rejects_signature_mismatch():
    with pytest.raises(hm.PreconditionError):
        hm.sai_canonical_path(np.diag([1.0, 1.0]).astype(complex), np.diag([1.0, -1.0]).astype(complex))


def test_path_invariants():
    sm = build_site_map(StarGraph(3, 2))
    eye = LinOp(np.eye(sm.dim, dtype=complex), sm, {"unitary"})
    with pytest.raises(InvariantViolation):
        hm.HomotopyPath([0.0, 1.0], [eye, LinOp(-np.eye(sm.dim, dtype=complex), sm, {"unitary"})], "Unitary")
    with pytest.raises(InvariantViolation):
        hm.HomotopyPath([0.0, 0.5], [eye, eye], "Unitary")


@pytest.fixture(scope="module")
def unitary_path():
    s = (1, 1, -2)
    fam = prescription_family(3, 64)
    base = prescribed_index_unitary(fam, IndexPrescription(s))
    u = conjugated(base, block_conjugator(fam, 11, 0.5))
    v = conjugated(base, block_conjugator(fam, 12, 0.5))
    window = hm.default_window(fam, base)
    return fam, window, hm.connect_unitaries_type_I(u, v, fam, window), u, v


def test_unitary_path_endpoints_and_certificates(unitary_path):
    fam, window, path, u, v = unitary_path
    assert np.allclose(path.start.matrix, u.matrix) and np.allclose(path.end.matrix, v.matrix)
    assert max(path.jumps()) <= 0.2
    table = hm.validate_path(path, fam, "I", window)
    assert table.ok
    assert table.checks["index_constant"]


def test_path_save_and_reverse(unitary_path, tmp_path):
    path = unitary_path[2]
    manifest = path.save(tmp_path / "p")
    assert manifest.exists() and len(list((tmp_path / "p").glob("sample_*.q2d"))) == len(path.samples)
    back = path.reversed()
    assert np.allclose(back.start.matrix, path.end.matrix)


def test_mismatched_indices_rejected():
    fam = prescription_family(3, 32)
    u = prescribed_index_unitary(fam, IndexPrescription((1, 1, -2)))
    v = prescribed_index_unitary(fam, IndexPrescription((1, -1, 0)))
    with pytest.raises(hm.IndexMismatch):
        hm.connect_unitaries_type_I(u, v, fam, hm.default_window(fam, u))


def test_sau_path_stays_self_adjoint_unitary():
    fam = star_leg_family(build_site_map(StarGraph(3, 32)))
    u, v = coupled_sau(fam, 1), coupled_sau(fam, 2)
    path = hm.connect_saus(u, v, fam, "I")
    assert max(c["square_defect"] for c in path.certificates) <= 1e-9
    assert min(c["gap"] for c in path.certificates) >= 0.1
    assert hm.validate_path(path, fam, "I").ok


def test_trivial_sau_rejected():
    fam = star_leg_family(build_site_map(StarGraph(3, 16)))
    eye = LinOp(np.eye(fam.site_map.dim, dtype=complex), fam.site_map, {"unitary", "self-adjoint"})
    with pytest.raises(hm.CertificateMissing):
        hm.connect_saus(eye, canonical_sau(fam), fam, "I")


def test_certificate_of_canonical_sau():
    fam = star_leg_family(build_site_map(StarGraph(3, 16)))
    cert = hm.nontriviality_certificate(canonical_sau(fam), fam)
    assert cert.ok
