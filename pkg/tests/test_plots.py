import pytest
from hypothesis import given, strategies as st

from quasi2d.plots import PLOT_KINDS, emit_plot

points = st.lists(st.tuples(st.floats(1, 1e3), st.floats(1e-12, 1e3)), min_size=1, max_size=12)


@given(points)
def test_line_plot_is_deterministic(tmp_path_factory, pts):
    d = tmp_path_factory.mktemp("p")
    a = emit_plot({"s": pts}, "decay-loglog", d / "a.svg").read_text()
    b = emit_plot({"s": pts}, "decay-loglog", d / "b.svg").read_text()
    assert a == b and a.startswith("<svg")


def test_histogram_marker(tmp_path):
    svg = emit_plot({"values": [1.0, 1.1, 1.2], "marker": 1.5}, "ratio-histogram", tmp_path / "h.svg").read_text()
    assert "stroke-dasharray" in svg


@pytest.mark.parametrize("kind", PLOT_KINDS)
def test_empty_series_rejected(tmp_path, kind):
    with pytest.raises(ValueError):
        emit_plot({}, kind, tmp_path / "x.svg")


def test_unknown_kind(tmp_path):
    with pytest.raises(ValueError, match="kind"):
        emit_plot({"s": [(1, 1)]}, "pie", tmp_path / "x.svg")
