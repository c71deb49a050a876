"""Block Fredholm indices of unitaries at finite truncation.

Two independent estimators are provided:

* the windowed trace ``Re tr chi_W (P - U* P U) chi_W``;
* windowed kernel counting: near-null right singular vectors of the
  compression ``P U P`` localized in the window, minus the left ones.

With ``P = chi_{x >= 0}`` and the right shift on the line both give -1, so
no sign flip is applied anywhere.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .lattice import (
    HalfLineN,
    InvalidParameter,
    LineZ,
    LinOp,
    ProjectionFamily,
    SiteMap,
    SquareZ2,
    StarGraph,
    projection_basis,
)

ACCEPT_DISTANCE = 0.25


@dataclass(frozen=True)
class IndexSettings:
    """Numerical knobs of the two index estimators."""

    tail_tol: float = 0.05
    gap_low: float = 0.1
    gap_high: float = 0.9
    localization_eps: float = 0.1
    accept_distance: float = ACCEPT_DISTANCE


DEFAULT_SETTINGS = IndexSettings()


# --------------------------------------------------------------------------
# windows


@dataclass(frozen=True, eq=False)
class SpatialWindow:
    """Window ``depth <= width`` in an orthonormal frame.

    ``frame`` columns form an orthonormal basis of the whole space, ``depth``
    gives each column's distance from the centre (origin, vertex or the start
    of a block basis).  The guard band ``width < depth <= width + guard`` is
    used to measure how much of ``P - U*PU`` escapes the window.

    Truncation closure links are masked: ``excluded`` marks their sources
    (dropped from the trace and from kernel counting), ``excluded_targets``
    their targets (dropped from cokernel counting).
    """

    frame: np.ndarray
    depth: np.ndarray
    width: int
    guard: int
    excluded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    excluded_targets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self) -> None:
        depth = np.asarray(self.depth, dtype=float)
        object.__setattr__(self, "depth", depth)
        for name in ("excluded", "excluded_targets"):
            mask = np.asarray(getattr(self, name), dtype=bool)
            if mask.size == 0:
                mask = np.zeros(depth.shape, dtype=bool)
            object.__setattr__(self, name, mask)
        if self.width <= 0 or self.guard < 0:
            raise InvalidParameter("window: width must be positive and guard nonnegative")
        if self.width + self.guard >= depth.max():
            raise InvalidParameter(
                f"window: width + guard = {self.width + self.guard} reaches the truncation "
                f"boundary at depth {depth.max():g}"
            )

    @property
    def inner(self) -> np.ndarray:
        return (self.depth <= self.width) & ~self.excluded

    @property
    def band(self) -> np.ndarray:
        return (self.depth > self.width) & (self.depth <= self.width + self.guard) & ~self.excluded

    def inner_frame(self) -> np.ndarray:
        return self.frame[:, self.inner]

    def band_frame(self) -> np.ndarray:
        return self.frame[:, self.band]

    def mass(self, vectors: np.ndarray) -> np.ndarray:
        """Squared norm of each column of ``vectors`` inside the window."""
        coeff = self.inner_frame().conj().T @ vectors
        return np.sum(np.abs(coeff) ** 2, axis=0)

    def targets_view(self) -> "SpatialWindow":
        """Same window with the target mask in place of the source mask."""
        return replace(self, excluded=self.excluded_targets)

    def widened(self) -> "SpatialWindow":
        """Window covering the guard band too, used to probe singular vectors."""
        return replace(self, width=self.width + self.guard, guard=0)


def linear_size(site_map: SiteMap) -> int:
    geo = site_map.geometry
    if isinstance(geo, LineZ):
        return geo.half_width
    if isinstance(geo, SquareZ2):
        return geo.radius
    if isinstance(geo, HalfLineN):
        return geo.length
    return geo.leg_length


def site_depth(site_map: SiteMap) -> np.ndarray:
    """Distance of every basis index from the centre of the truncation."""
    geo = site_map.geometry
    xy = site_map.coordinates()
    if isinstance(geo, LineZ):
        return np.abs(xy[:, 0]).astype(float)
    if isinstance(geo, SquareZ2):
        return np.max(np.abs(xy), axis=1).astype(float)
    if isinstance(geo, HalfLineN):
        return xy[:, 0].astype(float)
    return xy[:, 1].astype(float)


def window_from_sites(site_map: SiteMap, width: int | None = None, guard: int | None = None) -> SpatialWindow:
    """Window of sites within ``width`` of the origin / vertex.

    Defaults: width = linear size / 4, guard = linear size / 8.
    """
    n = linear_size(site_map)
    width = max(1, n // 4) if width is None else int(width)
    guard = max(1, n // 8) if guard is None else int(guard)
    return SpatialWindow(np.eye(site_map.dim, dtype=complex), site_depth(site_map), width, guard)


def window_from_block_bases(
    fam: ProjectionFamily,
    width: int | None = None,
    guard: int | None = None,
    closure_links: Sequence = (),
) -> SpatialWindow:
    """Window of the first ``width`` basis vectors of every block.

    ``closure_links`` are flagged truncation links (objects with ``source``
    and ``target`` given as (block, k), k from 1) to be masked.
    """
    frame = np.concatenate(fam.bases, axis=1)
    depth = np.concatenate([np.arange(1, b.shape[1] + 1) for b in fam.bases]).astype(float)
    offsets = np.cumsum([0] + [b.shape[1] for b in fam.bases])
    n = min(b.shape[1] for b in fam.bases)
    width = max(1, n // 4) if width is None else int(width)
    guard = max(1, n // 8) if guard is None else int(guard)
    sources = np.zeros(frame.shape[1], dtype=bool)
    targets = np.zeros(frame.shape[1], dtype=bool)
    for link in closure_links:
        sources[offsets[link.source[0]] + link.source[1] - 1] = True
        targets[offsets[link.target[0]] + link.target[1] - 1] = True
    # the smallest block bounds how deep the window may go
    return _ClippedWindow(frame, depth, width, guard, sources, targets, float(n))


@dataclass(frozen=True, eq=False)
class _ClippedWindow(SpatialWindow):
    limit: float = 0.0

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.limit and self.width + self.guard >= self.limit:
            raise InvalidParameter(
                f"window: width + guard = {self.width + self.guard} reaches the end of the "
                f"smallest block (rank {self.limit:g})"
            )



# --------------------------------------------------------------------------
# results


@dataclass
class IndexEntry:
    value: int | None
    raw: float
    verdict: str
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"


@dataclass
class IndexVector:
    entries: list[IndexEntry]
    method: str
    sum_rule: bool | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def values(self) -> list[int | None]:
        return [e.value for e in self.entries]

    @property
    def resolved(self) -> bool:
        return all(e.accepted for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "values": self.values,
            "resolved": self.resolved,
            "sum_rule": self.sum_rule,
            "notes": list(self.notes),
            "entries": [_jsonable(asdict(e)) for e in self.entries],
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _round_or_reject(raw: float, settings: IndexSettings) -> tuple[int | None, str]:
    nearest = int(np.rint(raw))
    if abs(raw - nearest) <= settings.accept_distance:
        return nearest, "accepted"
    return None, "unresolved"


# --------------------------------------------------------------------------
# estimators


def _range_basis(p: LinOp | np.ndarray) -> np.ndarray:
    if isinstance(p, LinOp):
        return projection_basis(p)
    return np.asarray(p, dtype=complex)


def windowed_trace_index(
    u: LinOp, p: LinOp | np.ndarray, window: SpatialWindow, settings: IndexSettings = DEFAULT_SETTINGS
) -> IndexEntry:
    """Index from the localized trace of ``P - U* P U``.

    ``p`` may be a projection LinOp or an orthonormal basis of its range.
    """
    if isinstance(u, LinOp) and "unitary" not in u.tags:
        raise InvalidParameter("windowed_trace_index needs a unitary-tagged operator")
    umat = u.matrix if isinstance(u, LinOp) else np.asarray(u)
    basis = _range_basis(p)
    fw = window.inner_frame()
    bw = basis.conj().T @ fw
    buw = basis.conj().T @ (umat @ fw)
    raw = float(np.sum(np.abs(bw) ** 2) - np.sum(np.abs(buw) ** 2))

    def defect(cols: np.ndarray) -> np.ndarray:
        # (P - U*PU) applied to the given columns
        return basis @ (basis.conj().T @ cols) - umat.conj().T @ (basis @ (basis.conj().T @ (umat @ cols)))

    dw = defect(fw)
    inside = fw.conj().T @ dw
    coupling = float(np.sqrt(max(np.linalg.norm(dw) ** 2 - np.linalg.norm(inside) ** 2, 0.0)))
    fb = window.band_frame()
    band_mass = float(np.linalg.norm(defect(fb))) if fb.shape[1] else 0.0
    tail = coupling + band_mass
    value, verdict = _round_or_reject(raw, settings)
    reason = None
    if tail > settings.tail_tol:
        value, verdict, reason = None, "unresolved", "tail mass above tolerance"
    elif verdict != "accepted":
        reason = "raw trace not within 0.25 of an integer"
    return IndexEntry(
        value,
        raw,
        verdict,
        "WindowedTrace",
        {"tail_mass": tail, "coupling": coupling, "band_mass": band_mass, "reason": reason},
    )


def _localized_count(vectors: np.ndarray, window: SpatialWindow, eps: float) -> tuple[int, list[float], bool]:
    """Count directions of span(vectors) living in the window.

    The window projector restricted to the span is diagonalized so that a
    degenerate null space is split into maximally localized directions.
    """
    if vectors.shape[1] == 0:
        return 0, [], True
    coeff = window.inner_frame().conj().T @ vectors
    masses = np.clip(np.linalg.eigvalsh(coeff.conj().T @ coeff), 0.0, 1.0)
    clean = bool(np.all((masses >= 1 - eps) | (masses <= eps)))
    return int(np.sum(masses >= 1 - eps)), masses.tolist(), clean


def windowed_kernel_index(
    u: LinOp, p: LinOp | np.ndarray, window: SpatialWindow, settings: IndexSettings = DEFAULT_SETTINGS
) -> IndexEntry:
    """Kernel minus cokernel of ``P U P`` on im P, counted inside the window."""
    umat = u.matrix if isinstance(u, LinOp) else np.asarray(u)
    basis = _range_basis(p)
    comp = basis.conj().T @ umat @ basis
    left, sing, right_h = sla.svd(comp)
    right = right_h.conj().T
    sing = np.asarray(sing)
    # near-null directions: singular value below the band
    null = sing < settings.gap_low
    left_null = basis @ left[:, null]
    right_null = basis @ right[:, null]
    # singular vectors touching the window + guard must avoid the gap band
    in_band = (sing >= settings.gap_low) & (sing <= settings.gap_high)
    touched = []
    if np.any(in_band):
        probe = window.widened()
        for idx in np.flatnonzero(in_band):
            mr = probe.mass(basis @ right[:, idx : idx + 1])[0]
            ml = probe.mass(basis @ left[:, idx : idx + 1])[0]
            if max(mr, ml) > settings.localization_eps:
                touched.append(float(sing[idx]))
    n_ker, ker_mass, ker_clean = _localized_count(right_null, window, settings.localization_eps)
    n_coker, coker_mass, coker_clean = _localized_count(
        left_null, window.targets_view(), settings.localization_eps
    )
    raw = float(n_ker - n_coker)
    diagnostics = {
        "kernel_count": n_ker,
        "cokernel_count": n_coker,
        "kernel_masses": ker_mass,
        "cokernel_masses": coker_mass,
        "null_singular_values": sing[null].tolist(),
        "gap_band_hits": touched,
        "reason": None,
    }
    if touched:
        diagnostics["reason"] = "singular values inside the gap band"
        return IndexEntry(None, raw, "unresolved", "WindowedKernel", diagnostics)
    if not (ker_clean and coker_clean):
        diagnostics["reason"] = "null vector straddles the window edge"
        return IndexEntry(None, raw, "unresolved", "WindowedKernel", diagnostics)
    return IndexEntry(int(raw), raw, "accepted", "WindowedKernel", diagnostics)


def index_vector(
    u: LinOp,
    fam: ProjectionFamily,
    window: SpatialWindow,
    settings: IndexSettings = DEFAULT_SETTINGS,
) -> IndexVector:
    """Per-block indices; an entry is accepted only when both estimators agree."""
    entries = []
    for basis in fam.bases:
        tr = windowed_trace_index(u, basis, window, settings)
        ke = windowed_kernel_index(u, basis, window, settings)
        diag = {"trace": _jsonable(asdict(tr)), "kernel": _jsonable(asdict(ke))}
        if tr.accepted and ke.accepted and tr.value == ke.value:
            entries.append(IndexEntry(tr.value, tr.raw, "accepted", "both", diag))
        else:
            diag["reason"] = "estimators disagree or unresolved"
            entries.append(IndexEntry(None, tr.raw, "unresolved", "both", diag))
    vec = IndexVector(entries, "WindowedTrace+WindowedKernel")
    if vec.resolved and "unitary" in u.tags:
        vec.sum_rule = sum(vec.values) == 0
    return vec


def projection_pairing_index(
    p: LinOp, flux: LinOp, window: SpatialWindow, settings: IndexSettings = DEFAULT_SETTINGS
) -> IndexEntry:
    """ind(P V P + P_perp) for a projection P and unitary V."""
    return windowed_trace_index(flux, p, window, settings)


def polar_unitary(a: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition."""
    w, _, vh = sla.svd(a)
    return w @ vh
