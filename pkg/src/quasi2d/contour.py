"""Resolvents restricted to arcs, contour recovery of off-diagonal blocks,
the diameter bound and dyadic decay of block-diagonal commutators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .factory import TWO_PI, ArcInterval, circle_distance, is_normal, unitary_eigensystem, wrap_angle
from .lattice import InvalidParameter, LinOp

CLEARANCE_FLOOR = 1e-6
RADIAL_CLEARANCE = 0.1
RESIDUAL_FLOOR = 1e-8


class ContourError(ValueError):
    """Winding or clearance precondition of a contour failed."""


# --------------------------------------------------------------------------
# geometry on the circle


def arc_distance(arc: ArcInterval, z: complex) -> float:
    """Euclidean distance from z to the closed arc on the unit circle."""
    if arc.full:
        return abs(abs(z) - 1.0)
    if z == 0:
        return 1.0
    rel = float(wrap_angle(np.angle(z) - arc.start))
    if rel <= arc.length:
        return abs(abs(z) - 1.0)
    ends = [np.exp(1j * arc.start), np.exp(1j * arc.end)]
    return float(min(abs(z - e) for e in ends))


def arc_gap(a: ArcInterval, b: ArcInterval) -> float:
    """Angular gap between two disjoint arcs (0 when they touch or overlap)."""
    if a.full or b.full:
        return 0.0
    gaps = [float(wrap_angle(b.start - a.end)), float(wrap_angle(a.start - b.end))]
    if gaps[0] + gaps[1] + a.length + b.length > TWO_PI + 1e-12:
        return 0.0
    return min(gaps)


def chord_diameter(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size < 2:
        return 0.0
    return float(np.max(np.abs(pts[:, None] - pts[None, :])))


# --------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class Contour:
    """Closed quadrature curve: nodes ``z`` and weights with sum_i w_i f(z_i) ~ oint f dz."""

    nodes: np.ndarray
    weights: np.ndarray
    clearance: float
    samples: int
    shape: dict = field(default_factory=dict)

    def integrate_scalar(self, values: np.ndarray) -> complex:
        return complex(np.sum(self.weights * values))

    def winding_number(self, point: complex) -> float:
        """Exact for the log-polar ellipse; quadrature estimate otherwise."""
        if self.shape.get("kind") == "log-polar ellipse":
            if point == 0:
                return 0.0
            rel = float(wrap_angle(np.angle(point) - self.shape["mid"] + math.pi)) - math.pi
            radial = math.log(abs(point)) / self.shape["radial"]
            return 1.0 if radial**2 + (rel / self.shape["half_angle"]) ** 2 < 1 else 0.0
        return float((self.integrate_scalar(1.0 / (self.nodes - point)) / (2j * math.pi)).real)


def log_polar_contour(target: ArcInterval, avoid: ArcInterval, samples: int = 512,
                      radial_clearance: float = RADIAL_CLEARANCE) -> Contour:
    """Smooth closed curve around ``target`` that keeps ``avoid`` and 0 outside.

    In log-polar coordinates w = log z the curve is the ellipse centred at
    the arc midpoint with angular semi-axis (half arc length + half the gap
    to ``avoid``) and radial semi-axis log(1 + radial clearance).  The image
    under exp is analytic and periodic, so the trapezoidal rule converges
    geometrically.
    """
    gap = arc_gap(target, avoid)
    if gap <= 0:
        raise ContourError("arcs must be separated by a positive gap")
    half_angle = target.length / 2 + gap / 2
    if 2 * half_angle >= TWO_PI:
        raise ContourError("target arc plus clearance wraps the whole circle")
    h_r = math.log1p(radial_clearance)
    mid = target.start + target.length / 2
    t = TWO_PI * np.arange(samples) / samples
    w = h_r * np.cos(t) + 1j * (mid + half_angle * np.sin(t))
    dw = -h_r * np.sin(t) + 1j * half_angle * np.cos(t)
    z = np.exp(w)
    weights = z * dw * (TWO_PI / samples)
    clearance = float(min(np.min(np.abs(z)), min(arc_distance(avoid, zz) for zz in z)))
    return Contour(z, weights, clearance, samples,
                   {"kind": "log-polar ellipse", "mid": mid, "half_angle": half_angle, "radial": h_r})


# --------------------------------------------------------------------------
# resolvents


@dataclass(frozen=True)
class Spectral:
    """Eigen-data of a normal unitary, cached for repeated resolvent use."""

    phases: np.ndarray
    vectors: np.ndarray
    diagonal: bool

    @classmethod
    def of(cls, op: LinOp) -> "Spectral":
        if not is_normal(op):
            raise InvalidParameter("operator is not normal")
        phases, vecs = unitary_eigensystem(op)
        return cls(phases, vecs, bool(np.allclose(vecs, np.eye(len(phases)))))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def to_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        return a if self.diagonal else self.vectors.conj().T @ a @ self.vectors

    def from_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        return a if self.diagonal else self.vectors @ a @ self.vectors.conj().T


def _members(spec: Spectral, arc: ArcInterval) -> np.ndarray:
    return arc.membership(spec.phases, on_boundary="flags")


def interval_resolvent(flux: LinOp, arc: ArcInterval, z: complex, spec: Spectral | None = None) -> tuple[LinOp, dict]:
    """chi_I(L) (L chi_I(L) - z)^{-1} with its norm and the distance bound."""
    spec = Spectral.of(flux) if spec is None else spec
    dist_arc = arc_distance(arc, z)
    dist_all = min(dist_arc, abs(z))
    if dist_all < CLEARANCE_FLOOR:
        raise ContourError(f"z = {z} is within {CLEARANCE_FLOOR:g} of the arc or of 0")
    inside = _members(spec, arc)
    diag = np.zeros(len(spec.phases), dtype=complex)
    diag[inside] = 1.0 / (spec.eigenvalues[inside] - z)
    mat = spec.from_eigenbasis(np.diag(diag))
    norm = float(np.max(np.abs(diag), initial=0.0))
    report = {"norm": norm, "dist": dist_all, "dist_arc": dist_arc, "bound": 1.0 / dist_all,
              "pass": norm * dist_all <= 1 + 1e-9}
    return LinOp(mat, flux.site_map), report


def _resolvent_kernel(spec: Spectral, arc: ArcInterval, contour: Contour) -> tuple[np.ndarray, np.ndarray]:
    """Rows: eigenvalues in the arc; columns: contour nodes; entries 1/(lambda - z)."""
    idx = np.flatnonzero(_members(spec, arc))
    lam = spec.eigenvalues[idx]
    return idx, 1.0 / (lam[:, None] - contour.nodes[None, :])


def check_winding(spec: Spectral, target: ArcInterval, avoid: ArcInterval, contour: Contour) -> dict:
    lam = spec.eigenvalues
    in_t, in_a = _members(spec, target), _members(spec, avoid)
    wt = [contour.winding_number(x) for x in lam[in_t]]
    wa = [contour.winding_number(x) for x in lam[in_a]]
    w0 = contour.winding_number(0.0)
    ok = all(abs(w - 1) < 1e-6 for w in wt) and all(abs(w) < 1e-6 for w in wa) and abs(w0) < 1e-6
    return {"ok": bool(ok), "target": wt[:4], "avoid": wa[:4], "origin": w0,
            "clearance": contour.clearance}


def contour_recover_block(
    a: LinOp | np.ndarray,
    flux: LinOp,
    left: ArcInterval,
    right: ArcInterval,
    contour: Contour | None = None,
    samples: int = 512,
    spec: Spectral | None = None,
) -> tuple[np.ndarray, float, dict]:
    """(1/2 pi i) oint R_I(z) [A, L] R_J(z) dz against Lambda_I A Lambda_J.

    The curve winds once around ``right`` (J) and leaves ``left`` (I) and 0
    outside.  Returns the quadrature matrix, the residual in operator norm
    and diagnostics.
    """
    spec = Spectral.of(flux) if spec is None else spec
    amat = a.matrix if isinstance(a, LinOp) else np.asarray(a)
    contour = log_polar_contour(right, left, samples) if contour is None else contour
    wind = check_winding(spec, right, left, contour)
    if not wind["ok"] or contour.clearance < CLEARANCE_FLOOR:
        raise ContourError(f"contour winding/clearance check failed: {wind}")
    ae = spec.to_eigenbasis(amat)
    lam = spec.eigenvalues
    ii, ki = _resolvent_kernel(spec, left, contour)
    jj, kj = _resolvent_kernel(spec, right, contour)
    # [A, L] in the eigenbasis has entries A_lm (mu_m - lambda_l)
    comm = ae[np.ix_(ii, jj)] * (lam[jj][None, :] - lam[ii][:, None])
    scalar = (ki * contour.weights[None, :]) @ kj.T / (2j * math.pi)
    block = np.zeros(ae.shape, dtype=complex)
    block[np.ix_(ii, jj)] = comm * scalar
    direct = np.zeros(ae.shape, dtype=complex)
    direct[np.ix_(ii, jj)] = ae[np.ix_(ii, jj)]
    diff = block - direct
    residual = float(np.linalg.norm(diff, 2)) if diff.size else 0.0
    return spec.from_eigenbasis(block), residual, {"winding": wind, "samples": contour.samples}


def residual_ladder(a, flux, left, right, samples: Sequence[int] = (32, 64, 128, 256, 512),
                    floor: float = RESIDUAL_FLOOR) -> dict:
    """Residuals under sample doubling and the ratio check until the floor."""
    spec = Spectral.of(flux)
    res = []
    for m in samples:
        _, r, _ = contour_recover_block(a, flux, left, right, samples=m, spec=spec)
        res.append(r)
    ratios, ok = [], True
    for coarse, fine in zip(res, res[1:]):
        if coarse <= floor:
            ratios.append(None)
            continue
        ratio = coarse / max(fine, 1e-300)
        ratios.append(ratio)
        # once the fine level hits the floor the ratio is capped by round-off
        if fine > floor and ratio < 4:
            ok = False
    return {"samples": list(samples), "residuals": res, "ratios": ratios, "ok": ok, "floor": floor}


# --------------------------------------------------------------------------
# diameter lemma


@dataclass(frozen=True)
class SpectralSubset:
    """Subset of the plane: an arc of the unit circle or a closed disc."""

    arc: ArcInterval | None = None
    centre: complex = 0j
    radius: float = 0.0

    def contains(self, values: np.ndarray) -> np.ndarray:
        if self.arc is not None:
            phases = wrap_angle(np.angle(values))
            on_circle = np.abs(np.abs(values) - 1) <= 1e-9
            return on_circle & self.arc.membership(phases, on_boundary="flags")
        return np.abs(values - self.centre) <= self.radius + 1e-12

    def diameter(self) -> float:
        if self.arc is not None:
            if self.arc.length >= math.pi:
                return 2.0
            return 2.0 * math.sin(self.arc.length / 2)
        return 2.0 * self.radius


def diam_bound_check(a: LinOp | np.ndarray, subset: SpectralSubset, z: complex, tol: float = 1e-10) -> dict:
    """|| A chi_S(A) - z chi_S(A) || against the diameter of S.

    ``rhs`` is the diameter of the eigenvalues of A inside S (never larger
    than the diameter of S itself, which is also reported).
    """
    amat = a.matrix if isinstance(a, LinOp) else np.asarray(a)
    if np.linalg.norm(amat.conj().T @ amat - amat @ amat.conj().T, 2) > 1e-8:
        raise InvalidParameter("diam_bound_check needs a normal operator")
    # Schur form of a normal matrix is diagonal
    import scipy.linalg as sla

    t, zvec = sla.schur(amat.astype(complex), output="complex")
    lam = np.diag(t)
    inside = subset.contains(lam)
    proj = zvec[:, inside] @ zvec[:, inside].conj().T
    lhs = float(np.linalg.norm((amat - z * np.eye(len(lam))) @ proj, 2)) if inside.any() else 0.0
    rhs = chord_diameter(lam[inside])
    return {"lhs": lhs, "rhs": rhs, "set_diameter": subset.diameter(), "slack": rhs - lhs,
            "pass": lhs <= rhs + tol, "eigenvalues_in_set": int(inside.sum())}


def random_hull_point(points: np.ndarray, rng: np.random.Generator) -> complex:
    weights = rng.dirichlet(np.ones(len(points)))
    return complex(np.sum(weights * points))


# --------------------------------------------------------------------------
# dyadic decay


def dyadic_arcs(level: int) -> list[ArcInterval]:
    step = TWO_PI / 2**level
    return [ArcInterval(k * step, (k + 1) * step, True, False) for k in range(2**level)]


def dyadic_commutator_decay(a: LinOp | np.ndarray, flux: LinOp, levels: int = 5) -> list[dict]:
    """||T_n|| with T_n = sum_k Lambda_k [A, L] Lambda_k over dyadic arcs."""
    spec = Spectral.of(flux)
    amat = a.matrix if isinstance(a, LinOp) else np.asarray(a)
    ae = spec.to_eigenbasis(amat)
    lam = spec.eigenvalues
    norm_a = float(np.linalg.norm(amat, 2))
    rows = []
    for n in range(1, levels + 1):
        arcs = dyadic_arcs(n)
        block_norms, empty = [], 0
        for arc in arcs:
            idx = np.flatnonzero(arc.membership(spec.phases, on_boundary="flags"))
            if idx.size == 0:
                empty += 1
                continue
            sub = ae[np.ix_(idx, idx)] * (lam[idx][None, :] - lam[idx][:, None])
            block_norms.append(float(np.linalg.norm(sub, 2)))
        tn = max(block_norms, default=0.0)
        chord = 2 * math.sin(min(math.pi, TWO_PI / 2**n) / 2)
        rows.append({
            "level": n,
            "norm_T": tn,
            "norm_A": norm_a,
            "bound_chord": 2 * chord * norm_a,
            "bound_arc": 2 * (TWO_PI / 2**n) * norm_a,
            "pass": tn <= 2 * chord * norm_a + 1e-10 and tn <= 2 * (TWO_PI / 2**n) * norm_a + 1e-10,
            "empty_arcs": empty,
        })
    return rows


# --------------------------------------------------------------------------
# finite-dimensional operator-integral checks


def quadrature_contract_check(a: LinOp | np.ndarray, flux: LinOp, left: ArcInterval, right: ArcInterval,
                              contour: Contour | None = None, samples: int = 256) -> dict:
    """Norm bound, trace interchange and rank-1 trace-norm bound for
    sum_i w_i R_I(z_i) A R_J(z_i) (scaled by 1/2pi)."""
    spec = Spectral.of(flux)
    amat = a.matrix if isinstance(a, LinOp) else np.asarray(a)
    contour = log_polar_contour(right, left, samples) if contour is None else contour
    ae = spec.to_eigenbasis(amat)
    ii, ki = _resolvent_kernel(spec, left, contour)
    jj, kj = _resolvent_kernel(spec, right, contour)
    w = contour.weights / (2 * math.pi)
    sub = ae[np.ix_(ii, jj)]
    total = sub * ((ki * w[None, :]) @ kj.T)
    # per-node norms of the diagonal resolvents
    nf = np.max(np.abs(ki), axis=0) if ki.size else np.zeros(contour.samples)
    ng = np.max(np.abs(kj), axis=0) if kj.size else np.zeros(contour.samples)
    c_const = float(np.sum(np.abs(w) * nf * ng))
    norm_a = float(np.linalg.norm(amat, 2))
    lhs = float(np.linalg.norm(total, 2)) if total.size else 0.0
    # trace against a seeded probe X: tr(X sum_i ...) vs sum_i tr(X ...)
    rng = np.random.default_rng(0)
    d = len(spec.phases)
    probe = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    probe_sub = probe[np.ix_(jj, ii)].T
    tr_total = complex(np.sum(probe_sub * total))
    weighted = sub * probe_sub
    per_node = complex(sum(w[i] * (ki[:, i] @ weighted @ kj[:, i]) for i in range(contour.samples)))
    trace_gap = abs(tr_total - per_node)
    # rank-1 input
    x = rng.standard_normal(len(spec.phases)) + 1j * rng.standard_normal(len(spec.phases))
    y = rng.standard_normal(len(spec.phases)) + 1j * rng.standard_normal(len(spec.phases))
    r1 = np.outer(x, y.conj())
    r1_sub = r1[np.ix_(ii, jj)] * ((ki * w[None, :]) @ kj.T)
    sv = np.linalg.svd(r1_sub, compute_uv=False) if r1_sub.size else np.zeros(0)
    trace_norm_out = float(np.sum(sv))
    trace_norm_in = float(np.linalg.norm(x) * np.linalg.norm(y))
    rank_out = int(np.sum(sv > 1e-10 * max(1.0, sv.max(initial=0.0))))
    return {
        "norm_bound": {"lhs": lhs, "rhs": c_const * norm_a, "pass": lhs <= c_const * norm_a * (1 + 1e-12) + 1e-12},
        "trace_interchange": {"assembled": [tr_total.real, tr_total.imag], "per_node": [per_node.real, per_node.imag],
                              "gap": trace_gap, "pass": trace_gap <= 1e-9 * max(1.0, abs(tr_total))},
        "rank_one": {"trace_norm": trace_norm_out, "bound": c_const * trace_norm_in, "rank": rank_out,
                     "rank_bound": min(contour.samples, len(ii), len(jj)),
                     "pass": trace_norm_out <= c_const * trace_norm_in * (1 + 1e-9) + 1e-12},
        "C": c_const,
    }


def _embed(sub: np.ndarray, rows: np.ndarray, cols: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=complex)
    out[np.ix_(rows, cols)] = sub
    return out
