import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d.factory import canonical_sau, laughlin_family, shift
from quasi2d.lattice import InvalidParameter, SquareZ2, StarGraph, build_site_map, star_leg_family
from quasi2d.locality import (
    FramedOperator,
    ProxySettings,
    classify_tails,
    implication_audit,
    locality_report,
    profile_from_spectra,
)


@given(st.floats(1.0, 5.0))
def test_power_law_tails_decay(power):
    entries = [(n, 1.0 / (1 + np.arange(n)) ** power * n ** -1.0, n) for n in (64, 256, 1024)]
    assert profile_from_spectra(entries).verdict == "decaying"


@given(st.floats(0.3, 3.0))
def test_flat_spectra_do_not_decay(level):
    entries = [(n, np.full(n, level), n) for n in (16, 32, 64)]
    assert profile_from_spectra(entries).verdict == "non-decaying"


def test_profile_needs_three_sizes():
    with pytest.raises(InvalidParameter):
        profile_from_spectra([(1, np.ones(2), 2), (2, np.ones(2), 2)])


def test_floor_means_decaying():
    assert classify_tails([1e-12, 1e-13, 1e-14]) == "decaying"


def test_inconclusive_band():
    assert classify_tails([1.0, 0.7, 0.5]) == "inconclusive"


def _r1_ladder(sizes, cuts=8):
    angles = [2 * math.pi * k / cuts for k in range(cuts)]
    out = []
    for n in sizes:
        sm = build_site_map(SquareZ2(n))
        out.append((n, FramedOperator(shift(sm, "+x", "open"), laughlin_family(sm, angles))))
    return out


def test_right_shift_is_type_IV_not_type_I():
    report = locality_report("R1", _r1_ladder([8, 12, 16]), types=("I", "IV"))
    assert report.summary() == {"I": "fails", "IV": "holds"}


def test_block_diagonal_operator_is_type_II():
    ladder = []
    for n in (16, 32, 64):
        fam = star_leg_family(build_site_map(StarGraph(3, n)))
        ladder.append((n, FramedOperator(canonical_sau(fam), fam)))
    report = locality_report("X", ladder)
    assert set(report.summary().values()) == {"holds"}
    assert all(row.status == "ok" for row in implication_audit([report]))


def test_settings_are_recorded():
    p = profile_from_spectra([(n, np.ones(n), n) for n in (4, 8, 16)], ProxySettings(alpha=0.1))
    assert p.settings["alpha"] == 0.1 and p.k_star == [1, 1, 2]
