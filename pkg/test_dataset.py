#!/usr/bin/env python3
"""
Tests for dataset loading, validation and standardization
"""
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dataset import (Dataset, ResponseKind, ResponseVariable, load_csv, standardize, standardize_array,
                     write_csv)
from errors import DataError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_csv_small_binary(tmp_path):
    path = _write(tmp_path, "id,g1,g2,y\ns1,1.0,2.0,0\ns2,1.5,2.5,1\ns3,0.5,3.0,0\n")
    d = load_csv(path, "y", "binary")
    assert (d.n, d.p) == (3, 2)
    assert d.covariate_names == ("g1", "g2")
    assert d.sample_ids == ("s1", "s2", "s3")
    assert d.response.values.tolist() == [0.0, 1.0, 0.0]
    assert d.response.kind is ResponseKind.BINARY


def test_load_csv_tab_separated(tmp_path):
    path = _write(tmp_path, "id\tg1\tg2\ty\ns1\t1\t2\t0.5\ns2\t2\t1\t1.5\ns3\t3\t5\t2.5\n", "data.tsv")
    d = load_csv(path, "y", "continuous")
    assert d.matrix[:, 1].tolist() == [2.0, 1.0, 5.0]


def test_load_csv_reports_cell_coordinates(tmp_path):
    path = _write(tmp_path, "id,g1,g2,y\ns1,1.0,,0\ns2,1.5,2.5,1\n")
    with pytest.raises(DataError, match=r"non-numeric cell at \(1, g2\)"):
        load_csv(path, "y", "binary")


def test_load_csv_non_numeric_cell(tmp_path):
    path = _write(tmp_path, "id,g1,g2,y\ns1,1.0,2,0\ns2,abc,2.5,1\n")
    with pytest.raises(DataError, match=r"\(2, g1\)"):
        load_csv(path, "y", "binary")


@pytest.mark.parametrize("content, message", [
    ("id,g1,g2,y\ns1,1,2,0\ns2,2,3,2\n", "non-binary"),
    ("id,g1,g2,y\ns1,1,2,1\ns2,2,3,1\n", "constant response"),
    ("id,g1,g2,z\ns1,1,2,0\ns2,2,3,1\n", "missing response column"),
    ("id,g1,y\ns1,1,0\ns2,2,1\n", "at least 2 covariates"),
])
def test_load_csv_rejects(tmp_path, content, message):
    with pytest.raises(DataError, match=message):
        load_csv(_write(tmp_path, content), "y", "binary")


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(str(tmp_path / "absent.csv"), "y", "binary")


def test_write_then_load_keeps_values(tmp_path, block_data):
    path = write_csv(block_data, str(tmp_path / "out.csv"))
    back = load_csv(path, "y", "binary")
    assert back.covariate_names == block_data.covariate_names
    assert back.sample_ids == block_data.sample_ids
    np.testing.assert_array_equal(back.matrix, block_data.matrix)
    np.testing.assert_array_equal(back.response.values, block_data.response.values)


def test_load_csv_parses_shortest_repr_exactly(tmp_path):
    rng = np.random.default_rng(12)
    values = rng.standard_normal((30, 20))
    y = np.repeat([0, 1], 15)
    rows = ["id," + ",".join(f"g{j + 1}" for j in range(20)) + ",y"]
    for i in range(30):
        rows.append(f"s{i + 1}," + ",".join(repr(float(v)) for v in values[i]) + f",{y[i]}")
    d = load_csv(_write(tmp_path, "\n".join(rows) + "\n"), "y", "binary")
    np.testing.assert_array_equal(d.matrix, values)


def test_write_csv_creates_missing_directories(tmp_path, block_data):
    path = write_csv(block_data, str(tmp_path / "new" / "dir" / "data.csv"))
    assert load_csv(path, "y", "binary").p == block_data.p


def test_dataset_is_read_only(block_data):
    with pytest.raises(ValueError):
        block_data.matrix[0, 0] = 1.0


def test_duplicate_names_rejected():
    y = ResponseVariable("binary", [0, 1, 0, 1])
    with pytest.raises(DataError, match="duplicated"):
        Dataset(np.ones((4, 2)), ("a", "a"), y)


def test_validate_for_analysis_needs_two_per_class():
    y = ResponseVariable("binary", [0, 1, 1, 1, 1])
    d = Dataset(np.arange(10.0).reshape(5, 2), ("a", "b"), y)
    with pytest.raises(DataError, match="each class"):
        d.validate_for_analysis()


def test_validate_for_analysis_needs_four_samples():
    y = ResponseVariable("binary", [0, 1, 0])
    d = Dataset(np.arange(6.0).reshape(3, 2), ("a", "b"), y)
    with pytest.raises(DataError, match="at least 4 samples"):
        d.validate_for_analysis()


def test_subset_and_take_rows(block_data):
    sub = block_data.subset([3, 0])
    assert sub.covariate_names == ("g4", "g1")
    np.testing.assert_array_equal(sub.matrix[:, 0], block_data.matrix[:, 3])
    rows = block_data.take_rows([0, 0, 25])
    assert rows.sample_ids == ("s1", "s1", "s26")
    assert rows.response.values.tolist() == [0.0, 0.0, 1.0]


def test_to_frame_layout(block_data):
    frame = block_data.to_frame()
    assert list(frame.columns)[0] == "sample_id"
    assert list(frame.columns)[-1] == "y"
    assert isinstance(frame, pd.DataFrame)


def test_standardize_unit_columns(block_data):
    m = standardize(block_data)
    np.testing.assert_allclose(m.values.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(m.values.std(axis=0, ddof=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(m.invert(), block_data.matrix, atol=1e-10)


def test_standardize_constant_column_names_it():
    x = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
    with pytest.raises(DataError, match="constant covariate 'b'"):
        standardize_array(x, ("a", "b"))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (8, 3), elements=st.floats(-1e3, 1e3, allow_nan=False, width=64)))
def test_standardize_is_idempotent(x):
    if np.any(np.ptp(x, axis=0) < 1e-6 * np.maximum(1.0, np.abs(x).max(axis=0))):
        return
    once, _, _ = standardize_array(x)
    twice, _, _ = standardize_array(once)
    np.testing.assert_allclose(twice, once, atol=1e-8)
