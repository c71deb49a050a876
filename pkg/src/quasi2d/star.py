"""Star-graph systems: embedding distances, exponentially local samplers,
the planar counterexample and vertex indices of chiral systems."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .factory import ArcInterval, laughlin_flux, shift, spectral_projection_of_unitary
from .index import IndexVector, SpatialWindow, index_vector, polar_unitary, window_from_block_bases
from .lattice import (
    InvalidParameter,
    LinOp,
    ProjectionFamily,
    SiteMap,
    SquareZ2,
    StarGraph,
    build_site_map,
    star_leg_family,
)
from .locality import DEFAULT_PROXY, FramedOperator, LocalityReport, ProxySettings, locality_report, profile_from_spectra


def distance_bound(theta: float) -> float:
    """D(theta) = sqrt(1 + 2 / |sin theta|)."""
    return math.sqrt(1 + 2 / abs(math.sin(theta)))


def sharp_constant(theta: float) -> float:
    """Largest (a + b) / c for two rays at angle theta: 1 / sin(theta / 2), attained at a = b."""
    return 1 / math.sin(min(theta, math.pi) / 2)


@dataclass(frozen=True)
class StarEmbedding:
    """Ray angle (radians) of every leg in the plane."""

    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        angles = tuple(float(a) % (2 * math.pi) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        if len(set(angles)) != len(angles):
            raise InvalidParameter("angles: leg rays must be distinct")
        if self.theta_min <= 0:
            raise InvalidParameter("angles: minimum separation must be positive")

    @classmethod
    def evenly_spaced(cls, legs: int, offset: float = math.pi / 2) -> "StarEmbedding":
        return cls(tuple(offset + 2 * math.pi * j / legs for j in range(legs)))

    @classmethod
    def from_degrees(cls, degrees: Sequence[float]) -> "StarEmbedding":
        return cls(tuple(math.radians(d) for d in degrees))

    @property
    def theta_min(self) -> float:
        srt = sorted(self.angles)
        gaps = [b - a for a, b in zip(srt, srt[1:])] + [srt[0] + 2 * math.pi - srt[-1]]
        return min(gaps)

    def positions(self, site_map: SiteMap) -> np.ndarray:
        """Planar position of every basis index (vertex at the origin)."""
        xy = site_map.coordinates()
        out = np.zeros((len(xy), 2))
        for i, (leg, r) in enumerate(xy):
            if leg == 0:
                continue
            theta = self.angles[int(leg) - 1]
            out[i] = (r * math.cos(theta), r * math.sin(theta))
        return out


def graph_distance(site_map: SiteMap) -> np.ndarray:
    """Graph distance between basis indices: |r - r'| on one leg, r + r' across legs."""
    if not isinstance(site_map.geometry, StarGraph):
        raise InvalidParameter("geometry: needs a StarGraph site map")
    xy = site_map.coordinates()
    leg, r = xy[:, 0], xy[:, 1].astype(float)
    same = (leg[:, None] == leg[None, :]) | (leg[:, None] == 0) | (leg[None, :] == 0)
    return np.where(same, np.abs(r[:, None] - r[None, :]), r[:, None] + r[None, :])


def distance_comparability(site_map: SiteMap, emb: StarEmbedding, max_pairs: int = 10_000, seed: int = 0,
                           return_ratios: bool = False) -> dict:
    """Ratios graph distance / Euclidean distance over site pairs.

    All pairs are enumerated when there are at most ``max_pairs``;
    otherwise a seeded sample of that many pairs is drawn.  Pairs above
    D(theta_min) are flagged; the sharp constant is reported alongside.
    """
    geo = site_map.geometry
    if not isinstance(geo, StarGraph):
        raise InvalidParameter("geometry: needs a StarGraph site map")
    if geo.legs < 3:
        raise InvalidParameter("legs: needs k >= 3")
    if len(emb.angles) != geo.legs:
        raise InvalidParameter(f"angles: expected {geo.legs} rays, got {len(emb.angles)}")
    xy = site_map.coordinates()
    pos = emb.positions(site_map)
    n = len(xy)
    total = n * (n - 1) // 2
    if total <= max_pairs:
        first, second = np.triu_indices(n, 1)
        mode = "exhaustive"
    else:
        rng = np.random.default_rng(seed)
        first = rng.integers(0, n, size=max_pairs)
        second = rng.integers(0, n, size=max_pairs)
        keep = first != second
        first, second = first[keep], second[keep]
        mode = "sampled"
    graph = graph_distance(site_map)[first, second]
    euclid = np.linalg.norm(pos[first] - pos[second], axis=1)
    ratio = graph / euclid
    same_leg = (xy[first, 0] == xy[second, 0]) | (xy[first, 0] == 0) | (xy[second, 0] == 0)
    bound = distance_bound(emb.theta_min)
    lower_ok = bool(np.all(euclid <= graph + 1e-12))
    over = np.flatnonzero(ratio > bound + 1e-12)
    extra = {"ratios": ratio.tolist()} if return_ratios else {}
    return {
        **extra,
        "mode": mode,
        "pairs": int(len(ratio)),
        "theta_min_deg": math.degrees(emb.theta_min),
        "D_theta_min": bound,
        "sharp_constant": sharp_constant(emb.theta_min),
        "max_ratio": float(ratio.max()),
        "max_ratio_same_leg": float(ratio[same_leg].max()) if same_leg.any() else None,
        "min_same_leg_ratio": float(ratio[same_leg].min()) if same_leg.any() else None,
        "lower_bound_holds": lower_ok,
        "flagged_pairs": [(xy[first[i]].tolist(), xy[second[i]].tolist()) for i in over[:20]],
        "flagged_count": int(len(over)),
        "pass": lower_ok and len(over) == 0,
    }


def exp_local_sampler(site_map: SiteMap, mu: float, amplitude: float = 1.0, seed: int = 0,
                      self_adjoint: bool = False) -> LinOp:
    """Random operator with |A_xy| <= amplitude * exp(-mu d(x, y)) entrywise.

    Entries are amplitude * exp(-mu d) times a seeded point of the closed
    unit disc; ``mu = inf`` gives a diagonal operator.
    """
    if not mu > 0:
        raise InvalidParameter("mu: must be positive")
    rng = np.random.default_rng(seed)
    dist = graph_distance(site_map)
    n = len(dist)
    radius = np.sqrt(rng.uniform(size=(n, n)))
    phase = np.exp(2j * np.pi * rng.uniform(size=(n, n)))
    envelope = amplitude * np.exp(-mu * dist) if np.isfinite(mu) else amplitude * (dist == 0)
    mat = envelope * radius * phase
    tags = set()
    if self_adjoint:
        mat = (mat + mat.conj().T) / 2
        tags.add("self-adjoint")
    return LinOp(mat, site_map, tags, {"mu": mu, "amplitude": amplitude, "seed": seed})


def exp_bound_holds(op: LinOp, mu: float, amplitude: float) -> bool:
    dist = graph_distance(op.site_map)
    return bool(np.all(np.abs(op.matrix) <= amplitude * np.exp(-mu * dist) + 1e-14))


def ray_hopping(site_map: SiteMap, legs: tuple[int, int] = (1, 2)) -> LinOp:
    """Hopping between two legs at equal radius: long range in graph distance."""
    xy = site_map.coordinates()
    d = len(xy)
    mat = np.zeros((d, d), dtype=complex)
    a, b = legs
    for r in range(1, site_map.geometry.leg_length + 1):
        i = site_map.index_of_site((a, r))
        j = site_map.index_of_site((b, r))
        mat[i, j] = mat[j, i] = 1.0
    return LinOp(mat, site_map, {"self-adjoint"})


def _trace_norm_proxy(op: LinOp, fam: ProjectionFamily) -> float:
    """max_j trace norm of [Lambda_j, A]."""
    framed = FramedOperator(op, fam)
    return max(float(np.sum(framed.commutator_spectrum((j,))[0])) for j in range(fam.size))


def exp_implies_type_I(legs: int, lengths: Sequence[int], mu: float, amplitude: float = 1.0, seed: int = 0,
                       include_vertex: bool = False, settings: ProxySettings = DEFAULT_PROXY,
                       builder=None) -> dict:
    """Type-I (= Type-II for finitely many legs) verdict over growing legs.

    ``builder(site_map)`` replaces the sampler (used for control cases).
    The trace norm of [Lambda_j, A] is reported with the analytic bound
    2 C (k - 1) (sum_{r >= 0} e^{-mu r})^2.
    """
    ladder, proxies, bounds_ok = [], [], True
    for n in lengths:
        sm = build_site_map(StarGraph(legs, n, include_vertex))
        fam = star_leg_family(sm)
        op = builder(sm) if builder is not None else exp_local_sampler(sm, mu, amplitude, seed)
        if builder is None:
            bounds_ok &= exp_bound_holds(op, mu, amplitude)
        ladder.append((n, (op, fam)))
        proxies.append(_trace_norm_proxy(op, fam))
    report = locality_report(f"star k={legs} mu={mu}", ladder, settings, types=("I", "II"))
    analytic = 2 * amplitude * (legs - 1) / (1 - math.exp(-mu)) ** 2 if np.isfinite(mu) else 0.0
    return {
        "report": report,
        "verdicts": report.summary(),
        "trace_norm_proxy": proxies,
        "trace_bound": analytic if builder is None else None,
        "trace_bounded": builder is None and max(proxies) <= analytic + 1e-9,
        "entry_bound_holds": bounds_ok if builder is None else None,
    }


def counterexample_2d(radii: Sequence[int], settings: ProxySettings = DEFAULT_PROXY) -> dict:
    """sigma_1 and rank of Q_perp R_1 Q with Q the positive-y-axis projection.

    R_1 is the open right shift on SquareZ2(R), Q = chi_{pi/2}(L).  The
    reference Type-I operator is L itself (it commutes with Q).
    """
    radii = [int(r) for r in radii]
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvalidParameter("radii: need at least 3 strictly increasing values")
    rows, entries, ref_entries = [], [], []
    for radius in radii:
        sm = build_site_map(SquareZ2(radius))
        flux = laughlin_flux(sm)
        q = spectral_projection_of_unitary(flux, ArcInterval.point(math.pi / 2))
        r1 = shift(sm, "+x", "open")
        mask = np.real(np.diag(q.matrix)) > 0.5
        block = r1.matrix[np.ix_(~mask, mask)]
        sv = sla.svdvals(block)
        rank_q = int(mask.sum())
        near_one = int(np.sum(sv >= 1 - 1e-10))
        rows.append({"R": radius, "sigma_1": float(sv[0]), "rank_Q": rank_q, "singular_values_at_1": near_one,
                     "isometry_defect": float(np.linalg.norm(block.conj().T @ block - np.eye(rank_q), 2))})
        entries.append((radius, sv, min(rank_q, sm.dim - rank_q)))
        ref = flux.matrix[np.ix_(~mask, mask)]
        ref_entries.append((radius, sla.svdvals(ref), min(rank_q, sm.dim - rank_q)))
    profile = profile_from_spectra(entries, settings)
    reference = profile_from_spectra(ref_entries, settings)
    return {
        "rows": rows,
        "profile": profile.to_dict(),
        "verdict": profile.verdict,
        "reference_verdict": reference.verdict,
        "rank_growth_equals_R": all(r["singular_values_at_1"] == r["R"] for r in rows),
        "sigma_1_at_least": min(r["sigma_1"] for r in rows),
    }


# --------------------------------------------------------------------------
# chiral systems


@dataclass
class ChiralSystem:
    s: LinOp
    margin: float = 1e-3
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        sv = sla.svdvals(self.s.matrix)
        if sv[-1] < self.margin:
            raise InvalidParameter(f"S: singular (min singular value {sv[-1]:.2e} < margin {self.margin:g})")

    @property
    def hamiltonian(self) -> np.ndarray:
        s = self.s.matrix
        zero = np.zeros_like(s)
        return np.block([[zero, s.conj().T], [s, zero]])

    def spectrum_symmetry(self) -> float:
        vals = np.linalg.eigvalsh(self.hamiltonian)
        return float(np.max(np.abs(vals + vals[::-1])))


def chiral_vertex_indices(system: ChiralSystem, fam: ProjectionFamily, window: SpatialWindow | None = None,
                          verdict=None, zero_mode_gap: float = 0.1) -> tuple[IndexVector, dict]:
    """Per-leg index of pol(S); the sum over legs is expected to vanish.

    Near-zero modes of H are reported as an observable: their number and
    how many are localized in the window.
    """
    if verdict is not None and getattr(verdict, "verdict", verdict) != "holds":
        raise InvalidParameter("S: Type-I classifier did not pass")
    window = window_from_block_bases(fam) if window is None else window
    pol = polar_unitary(system.s.matrix)
    u = LinOp(pol, system.s.site_map, {"unitary"})
    vec = index_vector(u, fam, window)
    vals, vecs = np.linalg.eigh(system.hamiltonian)
    near = np.abs(vals) < zero_mode_gap
    d = system.s.dim
    masses = [float(window.mass(vecs[:d, i:i + 1])[0] + window.mass(vecs[d:, i:i + 1])[0])
              for i in np.flatnonzero(near)]
    diag = {
        "values": vec.values,
        "sum": sum(vec.values) if vec.resolved else None,
        "independent": fam.size - 1,
        "spectrum_symmetry": system.spectrum_symmetry(),
        "near_zero_modes": int(near.sum()),
        "near_zero_modes_in_window": int(sum(m >= 0.5 for m in masses)),
        "min_singular_value_S": float(sla.svdvals(system.s.matrix)[-1]),
    }
    return vec, diag


def ssh_star(site_map: SiteMap, flipped: int, partner: int, strong: float = 1.0, weak: float = 0.4,
             coupling: float = 1.0) -> LinOp:
    """Chiral block S of dimerized legs on a star graph (legs counted from 0).

    Ordinary legs carry S = strong + weak T (T the outward shift); leg
    ``flipped`` carries weak + strong T, leg ``partner`` weak + strong T*.
    Alone, the flipped leg has a cokernel and the partner leg a kernel at
    the vertex; a vertex coupling pairs them, a far-end coupling closes the
    truncation, so S is invertible with indices -1 / +1 on those two legs.
    """
    geo = site_map.geometry
    if not isinstance(geo, StarGraph) or geo.include_vertex:
        raise InvalidParameter("geometry: needs a StarGraph without a vertex site")
    if flipped == partner:
        raise InvalidParameter("partner: must differ from the flipped leg")
    n = geo.leg_length
    d = site_map.dim
    mat = np.zeros((d, d), dtype=complex)
    idx = lambda leg, r: site_map.index_of_site((leg + 1, r))  # noqa: E731
    for leg in range(geo.legs):
        on, hop, outward = strong, weak, True
        if leg == flipped:
            on, hop = weak, strong
        elif leg == partner:
            on, hop, outward = weak, strong, False
        for r in range(1, n + 1):
            mat[idx(leg, r), idx(leg, r)] = on
            if r < n:
                if outward:
                    mat[idx(leg, r + 1), idx(leg, r)] = hop
                else:
                    mat[idx(leg, r), idx(leg, r + 1)] = hop
    mat[idx(flipped, 1), idx(partner, 1)] += coupling
    mat[idx(partner, n), idx(flipped, n)] += coupling
    return LinOp(mat, site_map, set(), {"flipped": flipped, "partner": partner})
