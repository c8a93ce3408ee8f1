import numpy as np
import pytest

from fdibench.trace import MeasurementTrace, TraceError, read_trace, write_trace


def make_trace(n=10, buses=(1, 2, 3), rate=50.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    return MeasurementTrace(
        t=t, angles=rng.standard_normal((n, len(buses))),
        bus_ids=tuple(buses), sample_rate=rate, scenario_id="unit",
    )


def test_shape_mismatch_rejected():
    with pytest.raises(TraceError, match="shape"):
        MeasurementTrace(t=np.arange(3.0), angles=np.zeros((3, 2)),
                         bus_ids=(1,), sample_rate=1.0)


def test_nonuniform_grid_rejected():
    with pytest.raises(TraceError, match="uniform"):
        MeasurementTrace(t=np.array([0.0, 0.1, 0.3]), angles=np.zeros((3, 1)),
                         bus_ids=(1,), sample_rate=10.0)


def test_decreasing_grid_rejected():
    with pytest.raises(TraceError, match="increasing"):
        MeasurementTrace(t=np.array([0.0, 0.2, 0.1]), angles=np.zeros((3, 1)),
                         bus_ids=(1,), sample_rate=10.0)


def test_column_lookup():
    tr = make_trace()
    assert np.array_equal(tr.column(2), tr.angles[:, 1])
    with pytest.raises(TraceError, match="99"):
        tr.column(99)


def test_csv_round_trip(tmp_path):
    tr = make_trace(n=25, buses=(1, 5, 68))
    path = tmp_path / "trace.csv"
    write_trace(tr, path)
    back = read_trace(path)
    assert back.bus_ids == tr.bus_ids
    assert back.sample_rate == tr.sample_rate
    assert back.scenario_id == "unit"
    np.testing.assert_allclose(back.angles, tr.angles, rtol=1e-11)
    np.testing.assert_allclose(back.t, tr.t, rtol=1e-11)


def test_csv_write_is_deterministic(tmp_path):
    tr = make_trace()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace(tr, p1)
    write_trace(tr, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_malformed_row_names_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,bus_1,bus_2\n0.0,1.0\n")
    with pytest.raises(TraceError, match="2 columns"):
        read_trace(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(TraceError, match="empty"):
        read_trace(path)


def test_unexpected_header_rejected(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("time,angle\n0.0,1.0\n")
    with pytest.raises(TraceError, match="header"):
        read_trace(path)
