"""Finite-section compactness proxies and the five locality classifiers.

Compactness cannot be decided at one size.  A :class:`CompactnessProfile`
tracks the singular value ``sigma_{ceil(alpha * d)}`` over a ladder of
truncations, where ``d`` is the smaller dimension of the profiled block
(for ``Lambda^perp A Lambda`` that is ``min(rank, corank)``).  A compact
operator's tail collapses as ``d`` grows; a non-compact one keeps a tail of
fixed size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .lattice import InvalidParameter, LinOp, ProjectionFamily, TruncationFamily

TYPES = ("I", "II", "III", "IV", "V")
IMPLICATIONS = (("II", "III"), ("II", "V"), ("III", "I"), ("III", "V"), ("V", "IV"))


@dataclass(frozen=True)
class ProxySettings:
    alpha: float = 0.05
    rho: float = 4.0
    flat: float = 0.2
    floor: float = 1e-10
    random_subsets: int = 16
    seed: int = 0


DEFAULT_PROXY = ProxySettings()


@dataclass
class CompactnessProfile:
    sizes: list[int]
    dims: list[int]
    k_star: list[int]
    tails: list[float]
    samples: list[list[tuple[int, float]]]
    verdict: str
    slope: float | None
    settings: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _k_grid(d: int) -> list[int]:
    ks, k = [], 1
    while k <= d:
        ks.append(k)
        k *= 2
    if ks and ks[-1] != d:
        ks.append(d)
    return ks


def singular_values(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Sorted singular values of a direct sum of blocks."""
    vals = [sla.svdvals(b) for b in blocks if b.size]
    if not vals:
        return np.zeros(0)
    return np.sort(np.concatenate(vals))[::-1]


def profile_from_spectra(
    entries: Sequence[tuple[int, np.ndarray, int]], settings: ProxySettings = DEFAULT_PROXY
) -> CompactnessProfile:
    """Build a profile from ``(size, singular values, d)`` triples."""
    if len(entries) < 3:
        raise InvalidParameter("sizes: a compactness profile needs at least 3 sizes")
    sizes = [int(n) for n, _, _ in entries]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidParameter("sizes: must be strictly increasing")
    dims, ks, tails, samples = [], [], [], []
    for _, sv, d in entries:
        sv = np.sort(np.asarray(sv, dtype=float))[::-1]
        d = max(int(d), 1)
        k = max(1, math.ceil(settings.alpha * d))
        dims.append(d)
        ks.append(k)
        tails.append(float(sv[k - 1]) if k <= len(sv) else 0.0)
        samples.append([(kk, float(sv[kk - 1]) if kk <= len(sv) else 0.0) for kk in _k_grid(d)])
    verdict = classify_tails(tails, settings)
    pos = [(d, t) for d, t in zip(dims, tails) if t > settings.floor]
    slope = None
    if len(pos) >= 2:
        x = np.log([p[0] for p in pos])
        y = np.log([p[1] for p in pos])
        slope = float(np.polyfit(x, y, 1)[0])
    return CompactnessProfile(sizes, dims, ks, tails, samples, verdict, slope, asdict(settings))


def classify_tails(tails: Sequence[float], settings: ProxySettings = DEFAULT_PROXY) -> str:
    first, last, top = tails[0], tails[-1], max(tails)
    if top <= settings.floor:
        return "decaying"
    if last <= settings.floor or first / last >= settings.rho:
        return "decaying"
    if min(tails) >= (1 - settings.flat) * top:
        return "non-decaying"
    return "inconclusive"


def compactness_profile(
    family: TruncationFamily | Iterable[tuple[int, np.ndarray | LinOp]],
    settings: ProxySettings = DEFAULT_PROXY,
) -> CompactnessProfile:
    """Profile of a family of operators (d = smaller matrix dimension)."""
    entries = []
    for n, op in family:
        mat = op.matrix if isinstance(op, LinOp) else np.asarray(op)
        entries.append((n, sla.svdvals(mat), min(mat.shape)))
    return profile_from_spectra(entries, settings)


# --------------------------------------------------------------------------
# block pieces


class FramedOperator:
    """An operator written in the concatenated block bases of a family.

    Every block quantity is then a sub-matrix, so one change of basis serves
    all the commutators, sandwiches and off-diagonal parts.
    """

    def __init__(self, a: np.ndarray | LinOp, fam: ProjectionFamily):
        a = a.matrix if isinstance(a, LinOp) else np.asarray(a)
        frame = np.concatenate(fam.bases, axis=1)
        if _is_standard_frame(frame):
            order = np.argmax(np.abs(frame), axis=0)
            self.matrix = a[np.ix_(order, order)]
        else:
            self.matrix = frame.conj().T @ a @ frame
        self.fam = fam
        offsets = np.cumsum([0] + [bb.shape[1] for bb in fam.bases])
        self.slices = [np.arange(offsets[j], offsets[j + 1]) for j in range(fam.size)]

    def indices(self, members: Sequence[int]) -> np.ndarray:
        return np.concatenate([self.slices[j] for j in members])

    def complement(self, members: Sequence[int]) -> np.ndarray:
        keep = set(members)
        return np.concatenate([self.slices[j] for j in range(self.fam.size) if j not in keep])

    def commutator_spectrum(self, members: Sequence[int]) -> tuple[np.ndarray, int]:
        """Singular values of [A, Lambda_S] and the proxy dimension min(rank, corank).

        [A, L] = L^perp A L - L A L^perp, and the two pieces have orthogonal
        domains and ranges, so the spectrum is the union of the pieces' spectra.
        """
        inside, outside = self.indices(members), self.complement(members)
        m = self.matrix
        sv = singular_values([m[np.ix_(outside, inside)], m[np.ix_(inside, outside)]])
        return sv, min(len(inside), len(outside))

    def off_diagonal_spectrum(self) -> tuple[np.ndarray, int]:
        """Singular values of A - Delta(A); proxy dimension = smallest block rank."""
        off = self.matrix.copy()
        for sl in self.slices:
            off[np.ix_(sl, sl)] = 0
        return sla.svdvals(off), min(len(sl) for sl in self.slices)

    def sandwich_spectrum(self, left: Sequence[int], right: Sequence[int]) -> tuple[np.ndarray, int]:
        """Singular values of Lambda_I A Lambda_J."""
        li, ri = self.indices(left), self.indices(right)
        return sla.svdvals(self.matrix[np.ix_(li, ri)]), min(len(li), len(ri))


def _is_standard_frame(frame: np.ndarray) -> bool:
    if frame.shape[0] != frame.shape[1]:
        return False
    nz = np.abs(frame) > 0
    return bool(np.all(nz.sum(axis=0) == 1) and np.allclose(frame[nz], 1.0))


# --------------------------------------------------------------------------
# interval / subset bookkeeping (block indices, cyclic order by label)


def cyclic_order(fam: ProjectionFamily) -> list[int]:
    if fam.labels is None:
        return list(range(fam.size))
    return [int(j) for j in np.argsort(fam.labels, kind="stable")]


def block_intervals(fam: ProjectionFamily) -> list[tuple[int, ...]]:
    """All proper cyclic runs of consecutive blocks.

    Interval endpoints are snapped to block labels, so an interval is a set
    of whole blocks.
    """
    order = cyclic_order(fam)
    m = len(order)
    out = []
    for length in range(1, m):
        for start in range(m):
            out.append(tuple(order[(start + i) % m] for i in range(length)))
    return out


def separated(fam: ProjectionFamily, left: Sequence[int], right: Sequence[int]) -> bool:
    """True when two block intervals are disjoint and not cyclically adjacent.

    A positive distance on the circle requires at least one whole block
    between them on each side.
    """
    if set(left) & set(right):
        return False
    order = cyclic_order(fam)
    pos = {j: i for i, j in enumerate(order)}
    m = len(order)
    for a in left:
        for b in right:
            if (pos[a] - pos[b]) % m in (1, m - 1):
                return False
    return True


def interval_pairs(fam: ProjectionFamily, maximal: bool = True) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Separated interval pairs; by default only the maximal ones.

    Compressing a compact operator keeps it compact, so testing maximal
    pairs covers every sub-pair.
    """
    ints = block_intervals(fam)
    pairs = [(i, j) for i in ints for j in ints if separated(fam, i, j)]
    if not maximal:
        return pairs
    sets = [(set(i), set(j)) for i, j in pairs]
    keep = []
    for n, (i, j) in enumerate(sets):
        dominated = any(
            (i <= i2 and j <= j2) and (i, j) != (i2, j2) for m, (i2, j2) in enumerate(sets) if m != n
        )
        if not dominated:
            keep.append(pairs[n])
    return keep


def drop_complements(keys: Sequence[tuple[int, ...]], m: int) -> list[tuple[int, ...]]:
    """[A, Lambda_S] = -[A, Lambda_{S^c}], so keep one of each complementary pair."""
    seen, out = set(), []
    for key in keys:
        fs = frozenset(key)
        comp = frozenset(range(m)) - fs
        if fs in seen or comp in seen:
            continue
        seen.add(fs)
        out.append(tuple(key))
    return out


def sample_subsets(fam: ProjectionFamily, settings: ProxySettings = DEFAULT_PROXY) -> list[tuple[int, ...]]:
    """Singletons, contiguous arcs and seeded random subsets (deduplicated)."""
    m = fam.size
    found: dict[tuple[int, ...], None] = {}
    for j in range(m):
        found[(j,)] = None
    for run in block_intervals(fam):
        found[tuple(sorted(run))] = None
    rng = np.random.default_rng(settings.seed)
    for _ in range(settings.random_subsets):
        size = int(rng.integers(1, m)) if m > 1 else 1
        subset = tuple(sorted(int(x) for x in rng.choice(m, size=size, replace=False)))
        found[subset] = None
    return list(found)


# --------------------------------------------------------------------------
# classifiers


@dataclass
class TypeVerdict:
    kind: str
    verdict: str  # holds | fails | inconclusive
    profiles: dict = field(default_factory=dict)
    tested: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "tested": [list(t) if isinstance(t, tuple) else t for t in self.tested],
            "notes": list(self.notes),
            "profiles": {k: v.to_dict() for k, v in self.profiles.items()},
        }


def _combine(profiles: dict[str, CompactnessProfile]) -> str:
    verdicts = [p.verdict for p in profiles.values()]
    if any(v == "non-decaying" for v in verdicts):
        return "fails"
    if all(v == "decaying" for v in verdicts):
        return "holds"
    return "inconclusive"


def _materialize(family) -> list[tuple[int, FramedOperator, ProjectionFamily]]:
    out = []
    for n, item in family:
        framed = item if isinstance(item, FramedOperator) else FramedOperator(*item)
        out.append((n, framed, framed.fam))
    if len(out) < 3:
        raise InvalidParameter("sizes: locality classification needs at least 3 sizes")
    return out


def _keyed_profiles(
    items, spectra: Callable, keys: Sequence, settings: ProxySettings, label: str
) -> dict[str, CompactnessProfile]:
    """One profile per key (block, subset or interval)."""
    profiles = {}
    for key in keys:
        entries = [(n, *spectra(a, fam, key)) for n, a, fam in items]
        profiles[f"{label}{key}"] = profile_from_spectra(entries, settings)
    return profiles


def classify_type_I(family, settings: ProxySettings = DEFAULT_PROXY) -> TypeVerdict:
    """[A, Lambda_j] compact for every block j.

    When the number of blocks changes across sizes, the worst block at each
    size is profiled instead (finite emulation of infinitely many blocks).
    """
    items = _materialize(family)
    sizes_m = {fam.size for _, _, fam in items}
    if len(sizes_m) == 1:
        keys = [(j,) for j in range(items[0][2].size)]
        profiles = _keyed_profiles(items, lambda a, fam, k: a.commutator_spectrum(k), keys, settings, "block")
        return TypeVerdict("I", _combine(profiles), profiles, keys)
    entries = []
    for n, a, fam in items:
        best = None
        for j in range(fam.size):
            sv, d = a.commutator_spectrum((j,))
            k = max(1, math.ceil(settings.alpha * d))
            tail = sv[k - 1] if k <= len(sv) else 0.0
            if best is None or tail > best[0]:
                best = (tail, sv, d)
        entries.append((n, best[1], best[2]))
    profiles = {"worst-block": profile_from_spectra(entries, settings)}
    return TypeVerdict("I", _combine(profiles), profiles, ["worst block per size"],
                       ["block count grows with size; worst block profiled"])


def classify_type_II(family, settings: ProxySettings = DEFAULT_PROXY) -> TypeVerdict:
    items = _materialize(family)
    entries = [(n, *a.off_diagonal_spectrum()) for n, a, fam in items]
    profiles = {"off-diagonal": profile_from_spectra(entries, settings)}
    return TypeVerdict("II", _combine(profiles), profiles, ["A - Delta(A)"])


def classify_type_III(family, subsets: Sequence[Sequence[int]] | None = None,
                      settings: ProxySettings = DEFAULT_PROXY) -> TypeVerdict:
    items = _materialize(family)
    fam0 = items[0][2]
    keys = [tuple(s) for s in (subsets if subsets is not None else sample_subsets(fam0, settings))]
    if any(len(s) == 0 for s in keys):
        raise InvalidParameter("subsets: must be nonempty")
    keys = drop_complements([s for s in keys if len(s) < fam0.size], fam0.size)
    profiles = _keyed_profiles(items, lambda a, fam, k: a.commutator_spectrum(k), keys, settings, "subset")
    return TypeVerdict("III", _combine(profiles), profiles, keys,
                       [f"tested {len(keys)} of {2 ** (fam0.size - 1) - 1} complement classes of proper subsets"])


def classify_type_IV(family, pairs=None, settings: ProxySettings = DEFAULT_PROXY) -> TypeVerdict:
    items = _materialize(family)
    fam0 = items[0][2]
    keys = list(pairs) if pairs is not None else interval_pairs(fam0)
    profiles = {}
    for left, right in keys:
        entries = [(n, *a.sandwich_spectrum(left, right)) for n, a, fam in items]
        profiles[f"pair{left}{right}"] = profile_from_spectra(entries, settings)
    if not keys:
        return TypeVerdict("IV", "holds", {}, [], ["no separated interval pairs: vacuous"])
    return TypeVerdict("IV", _combine(profiles), profiles, keys)


def classify_type_V(family, intervals=None, settings: ProxySettings = DEFAULT_PROXY) -> TypeVerdict:
    items = _materialize(family)
    fam0 = items[0][2]
    keys = drop_complements([tuple(i) for i in (intervals if intervals is not None else block_intervals(fam0))],
                            fam0.size)
    profiles = _keyed_profiles(items, lambda a, fam, k: a.commutator_spectrum(k), keys, settings, "interval")
    return TypeVerdict("V", _combine(profiles), profiles, keys)


@dataclass
class LocalityReport:
    name: str
    verdicts: dict[str, TypeVerdict]

    def summary(self) -> dict[str, str]:
        return {k: v.verdict for k, v in self.verdicts.items()}

    def to_dict(self) -> dict:
        return {"name": self.name, "summary": self.summary(),
                "types": {k: v.to_dict() for k, v in self.verdicts.items()}}


def locality_report(name: str, family, settings: ProxySettings = DEFAULT_PROXY,
                    types: Sequence[str] = TYPES) -> LocalityReport:
    """Run the requested classifiers on one (operator, family) ladder."""
    family = [(n, item if isinstance(item, FramedOperator) else FramedOperator(*item)) for n, item in family]
    runners = {
        "I": classify_type_I,
        "II": classify_type_II,
        "III": lambda f, settings: classify_type_III(f, None, settings),
        "IV": lambda f, settings: classify_type_IV(f, None, settings),
        "V": lambda f, settings: classify_type_V(f, None, settings),
    }
    return LocalityReport(name, {t: runners[t](family, settings=settings) for t in types})


@dataclass
class AuditRow:
    name: str
    premise: str
    conclusion: str
    status: str  # ok | violation | skipped


def implication_audit(reports: Sequence[LocalityReport]) -> list[AuditRow]:
    """Check the implication diagram on every report.

    A violation means the finite-size proxy misjudged one of the two
    types; it is reported, never raised.
    """
    rows = []
    for rep in reports:
        s = rep.summary()
        for pre, post in IMPLICATIONS:
            if pre not in s or post not in s or "inconclusive" in (s[pre], s[post]):
                rows.append(AuditRow(rep.name, pre, post, "skipped"))
            elif s[pre] == "holds" and s[post] == "fails":
                rows.append(AuditRow(rep.name, pre, post, "violation"))
            else:
                rows.append(AuditRow(rep.name, pre, post, "ok"))
    return rows
