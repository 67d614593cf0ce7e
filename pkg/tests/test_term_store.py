from __future__ import annotations

import numpy as np
import pytest

from dynregime.errors import DataFormatError, ValidationError
from dynregime.term_store import (
    TermDataset,
    compute_area_weights,
    detect_format,
    load_dataset,
    standardize,
    write_dataset,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_header_without_weights_defaults_to_uniform(tmp_path):
    p = _write(tmp_path / "a.txt", "#fields: a,b,c\n1,2,3\n4,5,6\n")
    ds = load_dataset(p)
    assert (ds.n, ds.d) == (2, 3)
    assert ds.weights.tolist() == [1.0, 1.0]
    assert ds.term_names == ("a", "b", "c")


def test_reserved_columns_are_split_out(tmp_path):
    p = _write(tmp_path / "a.txt", "#fields: x,e0,weight,e1,y\n0.5,1,2,3,0.25\n")
    ds = load_dataset(p)
    assert ds.terms.tolist() == [[1.0, 3.0]]
    assert ds.weights.tolist() == [2.0]
    assert ds.coord_names == ("x", "y")
    assert ds.coords.tolist() == [[0.5, 0.25]]


def test_zero_row_is_flagged_degenerate(tmp_path):
    p = _write(tmp_path / "a.txt", "#fields: a,b\n0,0\n1,-1\n")
    ds = load_dataset(p)
    assert ds.degenerate_mask.tolist() == [True, False]


def test_decimal_values_read_bit_exactly(tmp_path):
    p = _write(tmp_path / "a.txt", "#fields: a,b,c,d\n10,-10,0.1,-0.1\n")
    assert load_dataset(p).terms[0].tolist() == [10.0, -10.0, 0.1, -0.1]


@pytest.mark.parametrize("fmt", ["delimited-text", "binary-grid"])
def test_round_trip_is_bit_exact(tmp_path, fmt):
    rng = np.random.default_rng(3)
    terms = rng.standard_normal((100, 5)) * 10.0 ** rng.integers(-8, 8, size=(100, 5))
    coords = rng.random((100, 2))
    ds = TermDataset(terms, rng.random(100) + 0.1, tuple("abcde"), coords, ("x", "y"))
    path = tmp_path / "rt"
    write_dataset(ds, path, fmt)
    back = load_dataset(path)
    assert detect_format(path) == fmt
    assert np.array_equal(back.terms, ds.terms)
    assert np.array_equal(back.weights, ds.weights)
    assert np.array_equal(back.coords, ds.coords)
    if fmt == "delimited-text":
        # the binary layout carries no names
        assert back.term_names == ds.term_names


def test_bad_cell_names_the_row(tmp_path):
    p = _write(tmp_path / "a.txt", "#fields: a,b\n1,2\n3,oops\n")
    with pytest.raises(DataFormatError, match="row 2"):
        load_dataset(p)


def test_non_finite_rejected(tmp_path):
    p = _write(tmp_path / "a.txt", "#fields: a,b\n1,nan\n")
    with pytest.raises((DataFormatError, ValidationError)):
        load_dataset(p)


def test_bad_binary_magic(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(b"XXXX" + b"\0" * 16)
    with pytest.raises(DataFormatError):
        load_dataset(p, format="binary-grid")


def test_invariants_enforced():
    with pytest.raises(ValidationError):
        TermDataset.from_terms(np.ones((3, 1)))
    with pytest.raises(ValidationError):
        TermDataset.from_terms(np.ones((2, 2)), weights=[1.0, -1.0])
    with pytest.raises(ValidationError):
        TermDataset.from_terms(np.ones((2, 2)), weights=[0.0, 0.0])


def test_area_weights_uniform_grid():
    g = (np.arange(4) + 0.5) / 4
    X, Y = np.meshgrid(g, g, indexing="ij")
    w = compute_area_weights(np.column_stack([X.ravel(), Y.ravel()]))
    assert np.allclose(w, w[0])
    assert abs(w.sum() - 1.0) < 1e-12


def test_area_weights_nonuniform_axis():
    xs = np.array([0.0, 0.1, 0.5, 1.0])
    X, Y = np.meshgrid(xs, np.array([0.0, 1.0]), indexing="ij")
    w = compute_area_weights(np.column_stack([X.ravel(), Y.ravel()])).reshape(4, 2)
    # interior widths are midpoint-to-midpoint: 0.25 and 0.45; y cells are 1 wide
    assert np.allclose(w[1:3, 0], [0.25, 0.45])


def test_area_weights_need_two_axes():
    with pytest.raises(ValidationError):
        compute_area_weights(np.column_stack([np.arange(5.0), np.zeros(5)]))


def test_area_weights_follow_their_samples():
    xs = np.array([0.0, 0.2, 0.7, 1.0])
    X, Y = np.meshgrid(xs, np.array([0.0, 0.3, 1.0]), indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    w = compute_area_weights(coords)
    perm = np.random.default_rng(0).permutation(coords.shape[0])
    assert np.allclose(compute_area_weights(coords[perm]), w[perm])


def test_standardize_examples():
    z = standardize(np.array([[1.0, 5.0], [3.0, 5.0]])).z
    assert z[:, 0].tolist() == [-1.0, 1.0]
    assert z[:, 1].tolist() == [0.0, 0.0]


def test_standardize_idempotent_and_moments():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 4)) * [1, 10, 0.01, 3] + [0, 5, -2, 1]
    z = standardize(x).z
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-9)
    assert np.allclose(standardize(z).z, z, atol=1e-9)
