"""Concrete operators: flux unitary, spectral projections, shifts and
index-prescribed unitaries built from per-block bases."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .lattice import (
    HalfLineN,
    InvalidParameter,
    InvariantViolation,
    LineZ,
    LinOp,
    ProjectionFamily,
    SiteMap,
    SquareZ2,
    coordinate_projection,
    _is_diagonal,
)

TWO_PI = 2.0 * math.pi
BOUNDARY_TOL = 1e-12
NORMALITY_TOL = 1e-10


class AmbiguousBoundary(ValueError):
    """An eigenphase sits on an arc endpoint to within the boundary tolerance."""


class WrongGeometry(InvalidParameter):
    pass


def wrap_angle(theta):
    """Map angles to [0, 2pi)."""
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def circle_distance(a: float, b: float) -> float:
    d = abs(float(wrap_angle(a - b)))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class ArcInterval:
    """Counterclockwise arc from ``start`` to ``end``.

    ``start == end`` denotes the single point (both ends closed) unless
    ``full`` is set, in which case the arc is the whole circle.
    """

    start: float
    end: float
    closed_start: bool = True
    closed_end: bool = False
    full: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", float(wrap_angle(self.start)))
        object.__setattr__(self, "end", float(wrap_angle(self.end)))
        if self.is_point and not (self.closed_start and self.closed_end):
            raise InvalidParameter("arc: a degenerate arc must be closed at both ends")

    @classmethod
    def point(cls, theta: float) -> "ArcInterval":
        return cls(theta, theta, True, True)

    @classmethod
    def circle(cls) -> "ArcInterval":
        return cls(0.0, 0.0, True, True, full=True)

    @property
    def is_point(self) -> bool:
        return not self.full and self.start == self.end

    @property
    def length(self) -> float:
        if self.full:
            return TWO_PI
        return float(wrap_angle(self.end - self.start))

    @property
    def midpoint(self) -> float:
        return float(wrap_angle(self.start + self.length / 2))

    def complement(self) -> "ArcInterval":
        if self.full:
            raise InvalidParameter("arc: the full circle has an empty complement")
        return ArcInterval(self.end, self.start, not self.closed_end, not self.closed_start)

    def membership(self, angles: np.ndarray, tol: float = BOUNDARY_TOL, on_boundary: str = "raise") -> np.ndarray:
        """Boolean membership of phases in the arc.

        Phases within ``tol`` of an endpoint are resolved by the closed/open
        flags when ``on_boundary == "flags"``; otherwise they raise
        :class:`AmbiguousBoundary`.  For a point arc, phases within ``tol``
        of the point are members.
        """
        angles = wrap_angle(np.asarray(angles, dtype=float))
        if self.full:
            return np.ones(angles.shape, dtype=bool)
        rel = wrap_angle(angles - self.start)
        dist_start = np.minimum(rel, TWO_PI - rel)
        if self.is_point:
            return dist_start <= tol
        rel_end = wrap_angle(angles - self.end)
        dist_end = np.minimum(rel_end, TWO_PI - rel_end)
        near_start = dist_start <= tol
        near_end = dist_end <= tol
        if on_boundary == "raise" and np.any(near_start | near_end):
            raise AmbiguousBoundary(
                f"eigenphase within {tol:g} of an endpoint of arc [{self.start:.6f}, {self.end:.6f}]"
            )
        inside = (rel > 0) & (rel < self.length) & ~near_start & ~near_end
        return inside | (near_start & self.closed_start) | (near_end & self.closed_end)


class IndexMode(str, Enum):
    FINITE = "FiniteStyle"
    INFINITE = "InfiniteStyle"


@dataclass(frozen=True)
class IndexPrescription:
    s: tuple[int, ...]
    mode: IndexMode = IndexMode.FINITE

    def __post_init__(self) -> None:
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "mode", IndexMode(self.mode))
        if len(self.s) < 2:
            raise InvalidParameter("s: need one entry per block, at least two blocks")
        if self.mode is IndexMode.FINITE and sum(self.s) != 0:
            raise InvalidParameter(f"s: FiniteStyle needs sum(s) = 0, got {sum(self.s)}")

    @property
    def max_abs(self) -> int:
        return max(abs(v) for v in self.s)


# --------------------------------------------------------------------------
# elementary operators


def _require(site_map: SiteMap, *kinds) -> None:
    if not isinstance(site_map.geometry, kinds):
        names = "/".join(k.__name__ for k in kinds)
        raise WrongGeometry(f"geometry: expected {names}, got {type(site_map.geometry).__name__}")


def lattice_angles(site_map: SiteMap) -> np.ndarray:
    """Polar angle of every basis index; the origin is assigned angle 0."""
    _require(site_map, SquareZ2)
    xy = site_map.coordinates()
    ang = np.arctan2(xy[:, 1], xy[:, 0])
    return wrap_angle(ang)


def laughlin_flux(site_map: SiteMap) -> LinOp:
    """Diagonal unitary multiplying each site by the phase of x1 + i x2."""
    _require(site_map, SquareZ2)
    xy = site_map.coordinates().astype(float)
    z = xy[:, 0] + 1j * xy[:, 1]
    radius = np.abs(z)
    at_origin = radius == 0
    phases = np.ones(len(z), dtype=complex)
    phases[~at_origin] = z[~at_origin] / radius[~at_origin]
    return LinOp(
        np.diag(phases),
        site_map,
        {"unitary", "normal"},
        {"origin_entry": 1.0, "origin_note": "phase at the origin set to 1 (rank-N choice)"},
    )


def half_space_projection(site_map: SiteMap) -> LinOp:
    _require(site_map, LineZ)
    return coordinate_projection(site_map, site_map.mask(lambda s: s[0] >= 0))


_DIRECTIONS = {
    LineZ: {"right": (1,), "left": (-1,)},
    HalfLineN: {"inward": (-1,), "outward": (1,)},
    SquareZ2: {"+x": (1, 0), "-x": (-1, 0), "+y": (0, 1), "-y": (0, -1)},
}


def shift(site_map: SiteMap, direction: str = "right", boundary: str = "open", power: int = 1) -> LinOp:
    """Translation ``delta_x -> delta_{x+e}`` (tensor identity on internal dofs).

    Open boundaries drop sites that leave the truncation; periodic
    boundaries wrap around and give a permutation (tagged unitary).
    """
    geo = site_map.geometry
    table = _DIRECTIONS.get(type(geo))
    if table is None or direction not in table:
        raise WrongGeometry(f"direction: {direction!r} unsupported for {type(geo).__name__}")
    if boundary not in ("open", "periodic"):
        raise InvalidParameter(f"boundary: must be 'open' or 'periodic', got {boundary!r}")
    step = np.asarray(table[direction]) * int(power)
    if isinstance(geo, SquareZ2):
        lo, hi = -geo.radius, geo.radius
    elif isinstance(geo, LineZ):
        lo, hi = -geo.half_width, geo.half_width
    else:
        lo, hi = 1, geo.length
    period = hi - lo + 1
    n = site_map.internal_dim
    d = site_map.dim
    mat = np.zeros((d, d), dtype=complex)
    for i, site in enumerate(site_map.geometric_sites):
        target = np.asarray(site) + step
        if boundary == "periodic":
            target = (target - lo) % period + lo
        elif np.any(target < lo) or np.any(target > hi):
            continue
        j = site_map.index_of_site(tuple(int(t) for t in target)) // n
        for a in range(n):
            mat[j * n + a, i * n + a] = 1.0
    tags = {"unitary", "normal"} if boundary == "periodic" else set()
    return LinOp(mat, site_map, tags)


def is_normal(op: LinOp, tol: float = NORMALITY_TOL) -> bool:
    a = op.matrix
    if _is_diagonal(a):
        return True
    return float(np.linalg.norm(a.conj().T @ a - a @ a.conj().T, 2)) <= tol


def unitary_eigensystem(op: LinOp) -> tuple[np.ndarray, np.ndarray]:
    """Eigenphases in [0, 2pi) and orthonormal eigenvectors of a normal unitary."""
    a = op.matrix
    if _is_diagonal(a):
        return wrap_angle(np.angle(np.diag(a))), np.eye(op.dim, dtype=complex)
    t, z = sla.schur(a, output="complex")
    return wrap_angle(np.angle(np.diag(t))), z


def spectral_projection_of_unitary(op: LinOp, arc: ArcInterval, on_boundary: str = "raise") -> LinOp:
    """Projection onto eigenvectors whose eigenphase lies in ``arc``."""
    if "unitary" not in op.tags:
        raise InvalidParameter("operator must be tagged unitary")
    if not is_normal(op):
        raise InvalidParameter("operator is not normal to 1e-10")
    phases, vecs = unitary_eigensystem(op)
    sel = arc.membership(phases, on_boundary=on_boundary)
    if _is_diagonal(op.matrix):
        return coordinate_projection(op.site_map, sel)
    v = vecs[:, sel]
    return LinOp(v @ v.conj().T, op.site_map, {"projection", "self-adjoint"})


def laughlin_family(
    site_map: SiteMap, cuts: Sequence[float], r_min: int = 2, strict_cuts: bool = False
) -> ProjectionFamily:
    """Spectral projections of the flux unitary on the arcs between cuts.

    Arcs are half-open ``[c_j, c_{j+1})`` so a lattice angle equal to a cut
    is assigned to the arc that starts there.  With ``strict_cuts`` any
    lattice angle within 1e-12 of a cut is rejected instead.
    """
    cuts = [float(c) for c in cuts]
    if len(cuts) < 2 or any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise InvalidParameter("cuts: need at least 2 strictly increasing angles")
    if cuts[0] < 0 or cuts[-1] >= TWO_PI:
        raise InvalidParameter("cuts: must lie in [0, 2pi)")
    flux = laughlin_flux(site_map)
    phases, _ = unitary_eigensystem(flux)
    if strict_cuts:
        for c in cuts:
            if np.any(np.abs(np.angle(np.exp(1j * (phases - c)))) <= BOUNDARY_TOL):
                raise AmbiguousBoundary(f"cuts: cut {c:.6f} collides with a lattice angle")
    arcs = [ArcInterval(c, cuts[(i + 1) % len(cuts)], True, False) for i, c in enumerate(cuts)]
    blocks = [spectral_projection_of_unitary(flux, a, on_boundary="flags") for a in arcs]
    return ProjectionFamily(tuple(blocks), site_map, tuple(a.midpoint for a in arcs), None, r_min)


# --------------------------------------------------------------------------
# canonical self-adjoint unitary


def _check_bases(fam: ProjectionFamily, bases: Sequence[np.ndarray] | None) -> list[np.ndarray]:
    bases = list(fam.bases if bases is None else bases)
    if len(bases) != fam.size:
        raise InvalidParameter("bases: one basis per block required")
    for j, b in enumerate(bases):
        b = np.asarray(b, dtype=complex)
        r = b.shape[1]
        if np.linalg.norm(b.conj().T @ b - np.eye(r)) > 1e-10:
            raise InvariantViolation(f"bases: block {j} basis is not orthonormal")
        if np.linalg.norm(b @ b.conj().T - fam.blocks[j].matrix) > 1e-10 * max(1, r):
            raise InvariantViolation(f"bases: block {j} basis does not span the block")
        bases[j] = b
    return bases


def canonical_sau(fam: ProjectionFamily, bases: Sequence[np.ndarray] | None = None) -> LinOp:
    """X phi^j_k = (-1)^k phi^j_k with k counted from 1."""
    bases = _check_bases(fam, bases)
    d = fam.site_map.dim
    x = np.zeros((d, d), dtype=complex)
    for b in bases:
        signs = np.where(np.arange(1, b.shape[1] + 1) % 2 == 1, -1.0, 1.0)
        x += (b * signs) @ b.conj().T
    x = (x + x.conj().T) / 2
    return LinOp(x, fam.site_map, {"unitary", "self-adjoint"})


# --------------------------------------------------------------------------
# index-prescribed unitaries


@dataclass(frozen=True)
class Link:
    """U maps basis vector ``source`` = (block, k) to ``target``; k from 1."""

    source: tuple[int, int]
    target: tuple[int, int]
    kind: str = "bulk"


def _links_to_matrix(links: list[Link], bases: list[np.ndarray]) -> np.ndarray:
    d = bases[0].shape[0]
    src = np.empty((d, len(links)), dtype=complex)
    dst = np.empty((d, len(links)), dtype=complex)
    for c, link in enumerate(links):
        src[:, c] = bases[link.source[0]][:, link.source[1] - 1]
        dst[:, c] = bases[link.target[0]][:, link.target[1] - 1]
    return dst @ src.conj().T


def finite_style_links(ranks: Sequence[int], s: Sequence[int]) -> list[Link]:
    """Patched unilateral shift powers with zero total index.

    Block j with s_j > 0 carries phi_k -> phi_{k - s_j}; its first s_j vectors
    are sent to the first |s_i| vectors of the blocks with s_i < 0, which
    carry phi_k -> phi_{k + |s_i|}.  Pairing is lexicographic in (block, k).
    The truncation far ends are closed the other way round (flagged).
    """
    links: list[Link] = []
    near_src, near_dst, far_src, far_dst = [], [], [], []
    for j, (r, sj) in enumerate(zip(ranks, s)):
        if sj >= 0:
            for k in range(sj + 1, r + 1):
                links.append(Link((j, k), (j, k - sj)))
            near_src += [(j, k) for k in range(1, sj + 1)]
            far_dst += [(j, k) for k in range(r - sj + 1, r + 1)]
        else:
            a = -sj
            for k in range(1, r - a + 1):
                links.append(Link((j, k), (j, k + a)))
            near_dst += [(j, k) for k in range(1, a + 1)]
            far_src += [(j, k) for k in range(r - a + 1, r + 1)]
    links += [Link(a, b, "patch") for a, b in zip(sorted(near_src), sorted(near_dst))]
    links += [Link(a, b, "boundary") for a, b in zip(sorted(far_src), sorted(far_dst))]
    return links


def infinite_style_chains(ranks: Sequence[int]) -> list[list[tuple[int, int]]]:
    """L-shaped chains: chain n runs down block n from its far end to phi^n_n,
    then across phi^{n+1}_n, ..., phi^m_n (blocks and k counted from 1)."""
    m = len(ranks)
    chains = []
    for n in range(1, m + 1):
        vertical = [(n - 1, k) for k in range(ranks[n - 1], n - 1, -1)]
        horizontal = [(j - 1, n) for j in range(n + 1, m + 1)]
        chains.append(vertical + horizontal)
    return chains


def infinite_style_links(ranks: Sequence[int], s: Sequence[int]) -> list[Link]:
    """Each chain carries a cyclically closed translation by s_n positions."""
    links: list[Link] = []
    for chain, sn in zip(infinite_style_chains(ranks), s):
        length = len(chain)
        for p, src in enumerate(chain):
            q = p + sn
            kind = "bulk" if 0 <= q < length else "boundary"
            links.append(Link(src, chain[q % length], kind))
    return links


def prescribed_index_unitary(
    fam: ProjectionFamily, prescription: IndexPrescription, bases: Sequence[np.ndarray] | None = None
) -> LinOp:
    """Unitary whose block compressions carry the prescribed indices.

    The returned operator records its links in ``meta["links"]``; links of
    kind ``"boundary"`` are truncation closures, not part of the physics.
    """
    bases = _check_bases(fam, bases)
    s = prescription.s
    if len(s) != fam.size:
        raise InvalidParameter(f"s: expected {fam.size} entries, got {len(s)}")
    ranks = [b.shape[1] for b in bases]
    smax = prescription.max_abs
    if prescription.mode is IndexMode.FINITE:
        for j, r in enumerate(ranks):
            if r < smax + 2:
                raise InvalidParameter(f"rank: block {j} has rank {r} < max|s| + 2 = {smax + 2}")
        links = finite_style_links(ranks, s)
    else:
        for j, r in enumerate(ranks, start=1):
            if r < j + smax + 2:
                raise InvalidParameter(f"rank: block {j - 1} has rank {r} < {j + smax + 2}")
        links = infinite_style_links(ranks, s)
    mat = _links_to_matrix(links, bases)
    return LinOp(
        mat,
        fam.site_map,
        {"unitary"},
        {"links": links, "mode": prescription.mode.value, "s": list(s)},
    )


def closure_links(op: LinOp) -> list[Link]:
    """Flagged truncation-closure links of a prescribed-index unitary."""
    return [lk for lk in op.meta.get("links", []) if lk.kind == "boundary"]


def all_finite_prescriptions(m_max: int = 4, s_max: int = 3) -> list[tuple[int, ...]]:
    """Every s with 2 <= m <= m_max, |s_j| <= s_max, sum(s) = 0."""
    out = []
    for m in range(2, m_max + 1):
        for s in product(range(-s_max, s_max + 1), repeat=m):
            if sum(s) == 0:
                out.append(tuple(s))
    return out
