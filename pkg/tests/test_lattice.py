import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasi2d.lattice import (
    HalfLineN,
    InvalidParameter,
    InvariantViolation,
    LineZ,
    LinOp,
    SquareZ2,
    StarGraph,
    build_site_map,
    coordinate_projection,
    family_from_masks,
    linop_from_bytes,
    linop_to_bytes,
    load_linop,
    save_linop,
    star_leg_family,
)

geometries = st.one_of(
    st.builds(SquareZ2, st.integers(1, 5)),
    st.builds(LineZ, st.integers(1, 20)),
    st.builds(HalfLineN, st.integers(1, 20)),
    st.builds(StarGraph, st.integers(3, 6), st.integers(1, 8), st.booleans()),
)


@given(geometries, st.integers(1, 3))
def test_site_map_is_a_bijection(geo, internal):
    sm = build_site_map(geo, internal)
    for i in range(sm.dim):
        site, k = sm.site_of_index(i)
        assert sm.index_of_site(site, k) == i


def test_dimensions():
    assert build_site_map(SquareZ2(3)).dim == 49
    assert build_site_map(LineZ(4)).dim == 9
    assert build_site_map(StarGraph(3, 5, include_vertex=True)).dim == 16
    assert build_site_map(StarGraph(3, 5)).dim == 15


@pytest.mark.parametrize("bad", [lambda: SquareZ2(0), lambda: StarGraph(2, 4), lambda: LineZ(-1)])
def test_rejects_bad_geometry(bad):
    with pytest.raises(InvalidParameter):
        build_site_map(bad())


def test_star_legs_partition_identity():
    fam = star_leg_family(build_site_map(StarGraph(4, 6, include_vertex=True)))
    total = sum(b.matrix for b in fam.blocks)
    assert np.allclose(total, np.eye(fam.site_map.dim))
    assert [b.shape[1] for b in fam.bases][0] == 7  # vertex joins the first leg


def test_family_rejects_overlap():
    sm = build_site_map(LineZ(3))
    x = sm.coordinates()[:, 0]
    with pytest.raises(InvariantViolation):
        family_from_masks(sm, [x >= 0, x <= 0])


@given(st.integers(0, 2**32 - 1))
def test_serialization_round_trip(seed):
    sm = build_site_map(StarGraph(3, 2))
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(sm.dim, sm.dim)) + 1j * rng.normal(size=(sm.dim, sm.dim))
    op = LinOp(m, sm, meta={"note": "x"})
    back = linop_from_bytes(linop_to_bytes(op))
    assert np.array_equal(back.matrix, op.matrix)
    assert back.site_map.same_as(sm)


def test_serialization_file_layout(tmp_path):
    sm = build_site_map(LineZ(2))
    op = coordinate_projection(sm, sm.coordinates()[:, 0] >= 0)
    path = tmp_path / "p.q2d"
    save_linop(path, op)
    blob = path.read_bytes()
    assert blob.startswith(b"Q2DLINOP")
    header_len = int.from_bytes(blob[8:16], "little")
    assert len(blob) == 16 + header_len + 16 * sm.dim**2
    assert np.array_equal(load_linop(path).matrix, op.matrix)


def test_tag_validation():
    sm = build_site_map(LineZ(2))
    with pytest.raises(InvariantViolation):
        LinOp(2 * np.eye(sm.dim), sm, {"unitary"})
