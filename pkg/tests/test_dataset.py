import numpy as np
import pytest

from pcf.dataset import Dataset, from_scm_draw, read_dataset, write_dataset
from pcf.exceptions import SchemaError
from pcf.synth import ScmConfig, generate_scm


def _toy(n=7, p=3, refs=False, truth=True, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        x=rng.standard_normal(n),
        y=rng.standard_normal(n),
        U=rng.standard_normal((n, p)),
        z_c_true=rng.standard_normal(n) if truth else None,
        refs={"ref_0": rng.standard_normal(n), "ref_1": rng.standard_normal(n)} if refs else {},
    )


def test_round_trip_lossless(tmp_path):
    data = _toy(refs=True)
    path = tmp_path / "data.csv"
    write_dataset(path, data)
    back = read_dataset(path)
    assert np.array_equal(back.x, data.x)
    assert np.array_equal(back.y, data.y)
    assert np.array_equal(back.U, data.U)
    assert np.array_equal(back.z_c_true, data.z_c_true)
    assert set(back.refs) == {"ref_0", "ref_1"}
    assert np.array_equal(back.refs["ref_1"], data.refs["ref_1"])


def test_round_trip_without_optionals(tmp_path):
    data = _toy(truth=False)
    path = tmp_path / "data.csv"
    write_dataset(path, data)
    back = read_dataset(path)
    assert back.z_c_true is None
    assert back.refs == {}


def test_scm_fixture_serialization(tmp_path):
    draw = generate_scm(ScmConfig(n=40, p=25, seed=1))
    path = tmp_path / "fixture.csv"
    write_dataset(path, from_scm_draw(draw))
    back = read_dataset(path)
    assert np.array_equal(back.U, draw.U)
    assert np.array_equal(back.z_c_true, draw.z_c)


def test_missing_required_column_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,u_0\n1.0,2.0\n")
    with pytest.raises(SchemaError, match="missing required column 'y'"):
        read_dataset(path)


def test_missing_proxies_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1.0,2.0\n")
    with pytest.raises(SchemaError, match="no proxy columns"):
        read_dataset(path)


def test_gapped_proxy_numbering_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,u_0,u_2\n1,2,3,4\n")
    with pytest.raises(SchemaError, match="without gaps"):
        read_dataset(path)


def test_non_numeric_cell_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,u_0\n1.0,2.0,3.0\n1.0,oops,3.0\n")
    with pytest.raises(SchemaError, match=r"line 3: column 'y'"):
        read_dataset(path)


def test_ragged_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,u_0\n1.0,2.0,3.0\n1.0,2.0\n")
    with pytest.raises(SchemaError, match="line 3"):
        read_dataset(path)


def test_non_finite_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,u_0\n1.0,inf,3.0\n")
    with pytest.raises(SchemaError, match="not finite"):
        read_dataset(path)


def test_unknown_column_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,u_0,shoe_size\n1,2,3,4\n")
    with pytest.raises(SchemaError, match="unrecognized columns"):
        read_dataset(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("")
    with pytest.raises(SchemaError, match="empty"):
        read_dataset(path)
