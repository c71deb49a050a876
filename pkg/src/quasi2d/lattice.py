"""Finite lattice models, tagged operators and projection families.

Every operator in the package is a dense complex matrix attached to a
:class:`SiteMap`, which fixes a deterministic ordering of the basis
``delta_x (x) e_a`` (geometric site major, internal index minor).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

ORDERING_VERSION = 1


class InvalidParameter(ValueError):
    """Raised for nonsensical geometry or operator parameters."""


class InvariantViolation(ValueError):
    """Raised when a constructed object fails its structural checks."""


class SiteMapMismatch(ValueError):
    """Raised when operands live on different site maps."""


@dataclass(frozen=True)
class Tolerances:
    """Structural tolerances; the ``*_per_dim`` entries are multiplied by d."""

    unitary_per_dim: float = 1e-10
    self_adjoint_per_dim: float = 1e-12
    projection_per_dim: float = 1e-10
    family: float = 1e-10
    commutation: float = 1e-10


TOL = Tolerances()


# --------------------------------------------------------------------------
# geometries


@dataclass(frozen=True)
class SquareZ2:
    radius: int

    def sites(self) -> list[tuple[int, ...]]:
        r = self.radius
        # row-major in (x1, x2)
        return [(x1, x2) for x1 in range(-r, r + 1) for x2 in range(-r, r + 1)]

    def validate(self) -> None:
        _positive("radius", self.radius)

    def to_dict(self) -> dict:
        return {"kind": "SquareZ2", "radius": self.radius}


@dataclass(frozen=True)
class LineZ:
    half_width: int

    def sites(self) -> list[tuple[int, ...]]:
        w = self.half_width
        return [(x,) for x in range(-w, w + 1)]

    def validate(self) -> None:
        _positive("half_width", self.half_width)

    def to_dict(self) -> dict:
        return {"kind": "LineZ", "half_width": self.half_width}


@dataclass(frozen=True)
class HalfLineN:
    length: int

    def sites(self) -> list[tuple[int, ...]]:
        return [(k,) for k in range(1, self.length + 1)]

    def validate(self) -> None:
        _positive("length", self.length)

    def to_dict(self) -> dict:
        return {"kind": "HalfLineN", "length": self.length}


@dataclass(frozen=True)
class StarGraph:
    """Star graph with ``legs`` half-lines of ``leg_length`` sites.

    Leg sites are ``(leg, r)`` with ``leg`` in ``1..legs`` and ``r`` in
    ``1..leg_length`` (``r = 1`` adjacent to the centre).  The optional
    central vertex is the site ``(0, 0)``.
    """

    legs: int
    leg_length: int
    include_vertex: bool = False

    def sites(self) -> list[tuple[int, ...]]:
        out: list[tuple[int, ...]] = [(0, 0)] if self.include_vertex else []
        for leg in range(1, self.legs + 1):
            out.extend((leg, r) for r in range(1, self.leg_length + 1))
        return out

    def validate(self) -> None:
        _positive("leg_length", self.leg_length)
        if int(self.legs) < 3:
            raise InvalidParameter(
                f"legs: star graph needs at least 3 legs (got {self.legs}); "
                "two legs is just a line"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "StarGraph",
            "legs": self.legs,
            "leg_length": self.leg_length,
            "include_vertex": bool(self.include_vertex),
        }


Geometry = SquareZ2 | LineZ | HalfLineN | StarGraph

_GEOMETRIES = {"SquareZ2": SquareZ2, "LineZ": LineZ, "HalfLineN": HalfLineN, "StarGraph": StarGraph}


def geometry_from_dict(spec: dict) -> Geometry:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _GEOMETRIES:
        raise InvalidParameter(f"kind: unknown geometry {kind!r}")
    return _GEOMETRIES[kind](**spec)


def _positive(name: str, value: Any) -> None:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value <= 0:
        raise InvalidParameter(f"{name}: must be a positive integer (got {value!r})")


# --------------------------------------------------------------------------
# site map


@dataclass(frozen=True, eq=False)
class SiteMap:
    """Bijection between (site, internal index) pairs and ``range(d)``."""

    geometry: Geometry
    internal_dim: int
    geometric_sites: tuple[tuple[int, ...], ...]
    _lookup: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.geometric_sites) * self.internal_dim

    def site_of_index(self, i: int) -> tuple[tuple[int, ...], int]:
        if not 0 <= i < self.dim:
            raise IndexError(i)
        return self.geometric_sites[i // self.internal_dim], i % self.internal_dim

    def index_of_site(self, site: Sequence[int], internal: int = 0) -> int:
        return self._lookup[tuple(site)] * self.internal_dim + internal

    def coordinates(self) -> np.ndarray:
        """Integer site coordinates for every basis index, shape (d, ndim)."""
        base = np.asarray(self.geometric_sites, dtype=int)
        return np.repeat(base, self.internal_dim, axis=0)

    def mask(self, predicate: Callable[[tuple[int, ...]], bool]) -> np.ndarray:
        """Boolean mask over basis indices selecting sites where predicate holds."""
        geo = np.array([bool(predicate(s)) for s in self.geometric_sites])
        return np.repeat(geo, self.internal_dim)

    def header(self) -> dict:
        return {"geometry": self.geometry.to_dict(), "N": self.internal_dim}

    def same_as(self, other: "SiteMap") -> bool:
        return self is other or (
            self.geometry == other.geometry and self.internal_dim == other.internal_dim
        )


def build_site_map(geometry: Geometry, internal_dim: int = 1) -> SiteMap:
    """Build the site map with the documented ordering.

    SquareZ2 is row-major in ``(x1, x2)``; LineZ and HalfLineN are ascending;
    StarGraph lists the vertex first (if present), then legs in order, each
    leg outward from the centre.
    """
    geometry.validate()
    _positive("N", internal_dim)
    sites = tuple(geometry.sites())
    lookup = {s: i for i, s in enumerate(sites)}
    return SiteMap(geometry, int(internal_dim), sites, lookup)


# --------------------------------------------------------------------------
# operators


def _opnorm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def _opnorm_bound(a: np.ndarray, threshold: float) -> float:
    """Operator norm, skipping the SVD when the Frobenius bound already passes."""
    if a.size == 0:
        return 0.0
    fro = float(np.linalg.norm(a))
    return fro if fro <= threshold else _opnorm(a)


def _is_diagonal(a: np.ndarray) -> bool:
    return not np.any(a[~np.eye(a.shape[0], dtype=bool)])


@dataclass(frozen=True, eq=False)
class LinOp:
    """Dense complex matrix on a site map, with asserted structural tags."""

    matrix: np.ndarray
    site_map: SiteMap
    tags: frozenset = frozenset()
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex, copy=True)
        d = self.site_map.dim
        if m.shape != (d, d):
            raise SiteMapMismatch(f"matrix shape {m.shape} does not match site map dim {d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "tags", frozenset(self.tags))
        self.check_tags()

    def check_tags(self, tol: Tolerances = TOL) -> None:
        a, d = self.matrix, self.site_map.dim
        diagonal = _is_diagonal(a)
        if "unitary" in self.tags:
            if diagonal:
                err = float(np.max(np.abs(np.abs(np.diag(a)) ** 2 - 1), initial=0.0))
            else:
                err = _opnorm_bound(a.conj().T @ a - np.eye(d), tol.unitary_per_dim * d)
            if err > tol.unitary_per_dim * d:
                raise InvariantViolation(f"unitary tag violated: |A*A-1| = {err:.3e}")
        if "self-adjoint" in self.tags or "projection" in self.tags:
            err = _opnorm_bound(a - a.conj().T, tol.self_adjoint_per_dim * d)
            if err > tol.self_adjoint_per_dim * d:
                raise InvariantViolation(f"self-adjoint tag violated: |A-A*| = {err:.3e}")
        if "projection" in self.tags:
            if diagonal:
                v = np.diag(a)
                err = float(np.max(np.abs(v * v - v), initial=0.0))
            else:
                err = _opnorm_bound(a @ a - a, tol.projection_per_dim * d)
            if err > tol.projection_per_dim * d:
                raise InvariantViolation(f"projection tag violated: |A^2-A| = {err:.3e}")

    @property
    def dim(self) -> int:
        return self.site_map.dim

    @property
    def H(self) -> "LinOp":
        return LinOp(self.matrix.conj().T, self.site_map, self.tags)

    def with_matrix(self, matrix: np.ndarray, tags: Sequence[str] = ()) -> "LinOp":
        return LinOp(matrix, self.site_map, frozenset(tags))

    def __matmul__(self, other: "LinOp") -> "LinOp":
        _same_map(self, other)
        return LinOp(self.matrix @ other.matrix, self.site_map)

    def rank(self, tol: float = 1e-8) -> int:
        return int(np.linalg.matrix_rank(self.matrix, tol=tol))


def _same_map(*ops: LinOp) -> None:
    first = ops[0].site_map
    for op in ops[1:]:
        if not first.same_as(op.site_map):
            raise SiteMapMismatch("operators act on different site maps")


def identity(site_map: SiteMap) -> LinOp:
    return LinOp(np.eye(site_map.dim), site_map, {"unitary", "self-adjoint", "projection"})


def coordinate_projection(site_map: SiteMap, mask: np.ndarray) -> LinOp:
    mask = np.asarray(mask, dtype=bool)
    return LinOp(np.diag(mask.astype(float)), site_map, {"projection", "self-adjoint"})


def is_coordinate_projection(p: LinOp, atol: float = 1e-12) -> bool:
    a = p.matrix
    diag = np.diag(a).real
    off = a - np.diag(np.diag(a))
    return bool(
        np.max(np.abs(off), initial=0.0) <= atol
        and np.all((np.abs(diag) <= atol) | (np.abs(diag - 1) <= atol))
    )


def projection_basis(p: LinOp, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (columns) of the range of a projection.

    Coordinate projections give standard basis columns in site order; other
    projections use an eigendecomposition.
    """
    if is_coordinate_projection(p):
        idx = np.flatnonzero(np.diag(p.matrix).real > 0.5)
        return np.eye(p.dim, dtype=complex)[:, idx]
    w, v = np.linalg.eigh((p.matrix + p.matrix.conj().T) / 2)
    return v[:, w > 0.5]


# --------------------------------------------------------------------------
# projection families


@dataclass(frozen=True, eq=False)
class ProjectionFamily:
    """Ordered decomposition of the identity into orthogonal projections.

    ``bases`` optionally holds an ordered orthonormal basis (d x rank) for each
    block; constructions that need a per-block ordering (canonical SAU,
    prescribed-index unitaries, windows) use it.
    """

    blocks: tuple[LinOp, ...]
    site_map: SiteMap
    labels: tuple[float, ...] | None = None
    bases: tuple[np.ndarray, ...] | None = None
    r_min: int = 2
    tol: float = TOL.family

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(float(x) for x in self.labels))
            if len(self.labels) != len(self.blocks):
                raise InvariantViolation("labels: one label per block required")
        if self.bases is None:
            object.__setattr__(self, "bases", tuple(projection_basis(b) for b in self.blocks))
        else:
            object.__setattr__(self, "bases", tuple(np.asarray(b, dtype=complex) for b in self.bases))
        self.validate()

    def validate(self) -> None:
        if self.r_min < 2:
            raise InvalidParameter("r_min: must be at least 2")
        if len(self.blocks) < 2:
            raise InvariantViolation("a decomposition needs at least two blocks")
        d = self.site_map.dim
        total = np.zeros((d, d), dtype=complex)
        mats = []
        for j, b in enumerate(self.blocks):
            if "projection" not in b.tags:
                raise InvariantViolation(f"block {j} is not tagged as a projection")
            _same_map(b, self.blocks[0])
            if not self.site_map.same_as(b.site_map):
                raise SiteMapMismatch("block site map differs from family site map")
            mats.append(b.matrix)
            total += b.matrix
        err = _opnorm_bound(total - np.eye(d), self.tol)
        if err > self.tol:
            raise InvariantViolation(f"completeness violated: |sum - 1| = {err:.3e}")
        ranks = self.ranks
        for j, b in enumerate(self.bases):
            r = ranks[j]
            if b.shape != (d, r):
                raise InvariantViolation(f"basis of block {j} has shape {b.shape}, rank is {r}")
            if _opnorm_bound(b.conj().T @ b - np.eye(r), self.tol) > self.tol:
                raise InvariantViolation(f"basis of block {j} is not orthonormal")
            if _opnorm_bound(b @ b.conj().T - mats[j], self.tol) > self.tol:
                raise InvariantViolation(f"basis of block {j} does not span the block")
        # with spanning bases, |L_j L_k| = |B_j* B_k|
        for j in range(len(mats)):
            for k in range(j + 1, len(mats)):
                err = _opnorm_bound(self.bases[j].conj().T @ self.bases[k], self.tol)
                if err > self.tol:
                    raise InvariantViolation(f"blocks {j},{k} not orthogonal: {err:.3e}")
        for j, r in enumerate(ranks):
            if r < self.r_min or d - r < self.r_min:
                raise InvariantViolation(
                    f"block {j} has rank {r}, corank {d - r}; r_min = {self.r_min}"
                )

    @property
    def size(self) -> int:
        return len(self.blocks)

    @property
    def ranks(self) -> list[int]:
        return [int(round(np.trace(b.matrix).real)) for b in self.blocks]

    def with_bases(self, bases: Sequence[np.ndarray]) -> "ProjectionFamily":
        return ProjectionFamily(self.blocks, self.site_map, self.labels, tuple(bases), self.r_min, self.tol)

    def union(self, members: Sequence[int]) -> LinOp:
        """Lambda_S for a subset S of block indices."""
        d = self.site_map.dim
        m = np.zeros((d, d), dtype=complex)
        for j in members:
            m += self.blocks[j].matrix
        return LinOp(m, self.site_map, {"projection", "self-adjoint"})


def family_from_masks(
    site_map: SiteMap,
    masks: Sequence[np.ndarray],
    labels: Sequence[float] | None = None,
    r_min: int = 2,
) -> ProjectionFamily:
    """Family of coordinate projections with bases in site order."""
    blocks = tuple(coordinate_projection(site_map, m) for m in masks)
    return ProjectionFamily(blocks, site_map, tuple(labels) if labels is not None else None, None, r_min)


def star_leg_family(site_map: SiteMap, r_min: int = 2) -> ProjectionFamily:
    """One block per star leg, radial order as the block basis.

    A central vertex, when present, is attached to the first leg as its
    innermost basis vector.
    """
    geo = site_map.geometry
    if not isinstance(geo, StarGraph):
        raise InvalidParameter("geometry: leg family needs a StarGraph site map")
    masks = []
    for leg in range(1, geo.legs + 1):
        masks.append(site_map.mask(lambda s, leg=leg: s[0] == leg or (leg == 1 and s[0] == 0)))
    return family_from_masks(site_map, masks, None, r_min)


@dataclass(frozen=True)
class TruncationFamily:
    """A rule producing one object per truncation size."""

    generator: Callable[[int], Any]
    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) == 0 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise InvalidParameter("sizes: must be a nonempty strictly increasing list")
        object.__setattr__(self, "sizes", sizes)

    def __iter__(self) -> Iterator[tuple[int, Any]]:
        for n in self.sizes:
            yield n, self.generator(n)


# --------------------------------------------------------------------------
# block operations


@dataclass(frozen=True)
class Compression:
    """Matrix of P A P on im P in the basis ``basis``.

    ``retained`` lists the coordinate indices kept when P is a coordinate
    projection; otherwise it indexes the eigenbasis columns.
    """

    matrix: np.ndarray
    retained: tuple[int, ...]
    basis: np.ndarray


def block_compress(a: LinOp, p: LinOp, basis: np.ndarray | None = None) -> Compression:
    if "projection" not in p.tags:
        raise InvariantViolation("block_compress needs a projection-tagged P")
    _same_map(a, p)
    if basis is None:
        basis = projection_basis(p)
    if is_coordinate_projection(p):
        retained = tuple(int(i) for i in np.flatnonzero(np.diag(p.matrix).real > 0.5))
    else:
        retained = tuple(range(basis.shape[1]))
    return Compression(basis.conj().T @ a.matrix @ basis, retained, basis)


def delta_superop(a: LinOp, fam: ProjectionFamily) -> LinOp:
    """Block-diagonal part sum_j L_j A L_j."""
    _same_map(a, fam.blocks[0])
    out = np.zeros_like(a.matrix)
    for b in fam.bases:
        out += b @ (b.conj().T @ a.matrix @ b) @ b.conj().T
    return a.with_matrix(out)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# --------------------------------------------------------------------------
# serialization
#
# Layout (little-endian):
#   bytes 0..7   magic b"Q2DLINOP"
#   bytes 8..15  uint64 header length H
#   next H bytes UTF-8 JSON header
#                {"geometry": {...}, "N": int, "tags": [...],
#                 "ordering_version": int, "dim": d}
#   remainder    d*d pairs (re, im) of float64, row-major


MAGIC = b"Q2DLINOP"


def linop_to_bytes(op: LinOp) -> bytes:
    header = dict(op.site_map.header())
    header["tags"] = sorted(op.tags)
    header["ordering_version"] = ORDERING_VERSION
    header["dim"] = op.dim
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(op.matrix).astype("<c16").tobytes(order="C")
    return MAGIC + struct.pack("<Q", len(raw)) + raw + body


def linop_from_bytes(blob: bytes) -> LinOp:
    if blob[:8] != MAGIC:
        raise InvalidParameter("not a serialized LinOp (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    if header.get("ordering_version") != ORDERING_VERSION:
        raise InvalidParameter("ordering_version: unsupported site ordering")
    site_map = build_site_map(geometry_from_dict(header["geometry"]), header["N"])
    d = site_map.dim
    mat = np.frombuffer(blob[16 + hlen :], dtype="<c16").reshape(d, d)
    return LinOp(mat, site_map, frozenset(header["tags"]))


def save_linop(path, op: LinOp) -> None:
    with open(path, "wb") as fh:
        fh.write(linop_to_bytes(op))


def load_linop(path) -> LinOp:
    with open(path, "rb") as fh:
        return linop_from_bytes(fh.read())
