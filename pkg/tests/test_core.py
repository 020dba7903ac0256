import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cluspath.core import (
    DataError,
    Dataset,
    DegenerateDatasetError,
    HyperParams,
    Prototype,
    diameters,
    from_records,
    load_long_csv,
    preprocess,
    write_long_csv,
)

from conftest import random_dataset


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_counts_entities_and_features(tmp_path):
    rows = ["entity,time,a,b"]
    for e in ("x", "y", "z"):
        for t in range(4):
            rows.append(f"{e},{t},{t * 0.5},{-t}")
    ds = load_long_csv(_write(tmp_path, "\n".join(rows) + "\n"))
    assert ds.n == 12 and ds.dim == 2 and ds.n_entities == 3
    assert ds.feature_names == ("a", "b")


def test_load_sorts_each_entity_by_time(tmp_path):
    ds = load_long_csv(_write(tmp_path, "entity,time,f\nb,3,1\na,2,5\nb,1,2\na,0,4\n"))
    assert ds.entity_ids == ("b", "a")
    assert ds.times.tolist() == [1.0, 3.0, 0.0, 2.0]
    assert ds.X[:, 0].tolist() == [2.0, 1.0, 4.0, 5.0]


def test_duplicate_row_is_rejected_with_line_number(tmp_path):
    path = _write(tmp_path, "entity,time,f\na,0,1\na,1,2\na,0,3\n")
    with pytest.raises(DataError, match=r":4: duplicate.*line 2"):
        load_long_csv(path)


@pytest.mark.parametrize("body, pattern", [
    ("entity,time,f\na,0,1,2\n", r":2: expected 3 fields"),
    ("entity,time,f\na,0,abc\n", r":2: non-numeric feature"),
    ("entity,time,f\na,x,1\n", r":2: non-numeric time"),
    ("entity,time,f\na,0,nan\n", r":2: non-finite"),
    ("entity,f\na,1\n", r"missing column 'time'"),
    ("entity,time\na,1\n", r"no feature columns"),
    ("", r"empty file"),
    ("entity,time,f\n", r"no data rows"),
])
def test_malformed_files(tmp_path, body, pattern):
    with pytest.raises(DataError, match=pattern):
        load_long_csv(_write(tmp_path, body))


def test_single_observation_is_degenerate(tmp_path):
    ds = load_long_csv(_write(tmp_path, "entity,time,f\na,0,1\n"))
    assert ds.n == 1 and ds.degenerate
    assert ds.diam_d == 0.0 and ds.diam_t == 0.0
    with pytest.raises(DegenerateDatasetError):
        diameters(ds)


def test_custom_column_names(tmp_path):
    path = _write(tmp_path, "country,year,gdp,pop,junk\nfr,2000,1,2,9\nfr,2001,3,4,9\n")
    ds = load_long_csv(path, entity_col="country", time_col="year", feature_cols=["gdp", "pop"])
    assert ds.dim == 2 and ds.X.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_csv_round_trip(tmp_path):
    ds = random_dataset(3, p=3, n_obs=4, dim=3)
    path = tmp_path / "rt.csv"
    write_long_csv(ds, path)
    assert load_long_csv(path).equals(ds)


def test_json_round_trip_and_fingerprint():
    ds = random_dataset(4, p=3, n_obs=3, dim=2)
    back = Dataset.from_json(ds.to_json())
    assert back.equals(ds)
    assert back.fingerprint() == ds.fingerprint()
    d = ds.to_dict()
    assert set(d) >= {"dim", "entities", "observations"}
    assert set(d["observations"][0]) == {"entity", "time", "descriptor"}
    other = ds.with_descriptors(ds.X + 1e-9)
    assert other.fingerprint() != ds.fingerprint()


def test_dataset_arrays_are_read_only():
    ds = random_dataset(0, p=2, n_obs=3)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_time_ties_within_entity_rejected():
    with pytest.raises(DataError, match="duplicate timestamp"):
        from_records([("a", 0, [1]), ("a", 0, [2])])


def test_descriptor_length_checked():
    with pytest.raises(DataError):
        from_records([("a", 0, [1, 2]), ("a", 1, [2])])


def test_entity_position_unknown():
    ds = random_dataset(0, p=2, n_obs=2)
    with pytest.raises(KeyError):
        ds.entity_position("nobody")


# diameters ------------------------------------------------------------------

def test_diameters_identical_descriptors():
    ds = from_records([("a", 0, [1, 1]), ("b", 10, [1, 1])])
    assert diameters(ds) == (0.0, 10.0)
    assert ds.degenerate


def test_diameters_345_triangle():
    ds = from_records([("a", 0, [0, 0]), ("b", 0, [3, 4])])
    assert diameters(ds) == (5.0, 0.0)


def test_diameters_brute_force_on_line():
    times = [0, 1, 2, 7]
    ds = from_records([(f"e{i}", t, [0.0]) for i, t in enumerate(times)])
    assert ds.diam_t == max(abs(a - b) for a, b in itertools.combinations(times, 2)) == 7


def test_degenerate_diameter_replaced_by_one(caplog):
    ds = from_records([("a", 0, [1, 1]), ("b", 10, [1, 1])])
    with caplog.at_level(logging.WARNING):
        assert ds.safe_diameters() == (1.0, 10.0)
    assert "degenerate" in caplog.text


def _brute_diameters(X, t):
    dd = max(np.linalg.norm(X[i] - X[j]) for i in range(len(X)) for j in range(len(X)))
    dt = max(abs(a - b) for a in t for b in t)
    return dd, dt


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 5), st.integers(1, 4))
def test_cached_diameters_match_exhaustive_scan(seed, p, n_obs, dim):
    ds = random_dataset(seed, p=p, n_obs=n_obs, dim=dim)
    dd, dt = _brute_diameters(ds.X, ds.times)
    assert ds.diam_d == pytest.approx(dd, rel=1e-12, abs=1e-15)
    assert ds.diam_t == pytest.approx(dt, rel=1e-12, abs=1e-15)
    pre = preprocess(ds)
    dd, dt = _brute_diameters(pre.X, pre.times)
    assert pre.diam_d == pytest.approx(dd, rel=1e-12, abs=1e-15)
    assert pre.diam_t == dt


# preprocess -----------------------------------------------------------------

def test_constant_feature_mean_removal():
    ds = from_records([("a", t, [5.0, t]) for t in range(4)])
    out = preprocess(ds, remove_entity_mean=True, normalize=False)
    assert np.all(out.X[:, 0] == 0.0)


def test_two_entity_mean_removal():
    ds = from_records([("a", 0, [1.0]), ("a", 1, [3.0]), ("b", 0, [10.0]), ("b", 1, [12.0])])
    out = preprocess(ds, remove_entity_mean=True, normalize=False)
    assert out.X[:, 0].tolist() == [-1.0, 1.0, -1.0, 1.0]


def test_normalize_is_identity_on_standardized_data():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(20, 3))
    Z = (Z - Z.mean(axis=0)) / Z.std(axis=0)
    ds = from_records([(f"e{i}", 0.0, Z[i]) for i in range(20)])
    out = preprocess(ds, remove_entity_mean=False, normalize=True)
    assert np.max(np.abs(out.X - ds.X)) <= 1e-12


def test_zero_variance_feature_warns(caplog):
    ds = from_records([("a", t, [2.0, t]) for t in range(3)] + [("b", t, [2.0, -t]) for t in range(3)])
    with caplog.at_level(logging.WARNING):
        out = preprocess(ds, remove_entity_mean=False, normalize=True)
    assert np.all(out.X[:, 0] == 0.0)
    assert "zero variance" in caplog.text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 6))
def test_entity_means_vanish(seed, p, n_obs):
    out = preprocess(random_dataset(seed, p=p, n_obs=n_obs, dim=3), remove_entity_mean=True, normalize=False)
    for e in range(out.n_entities):
        assert np.max(np.abs(out.X[out.entity_slice(e)].mean(axis=0))) <= 1e-12


# parameter types ---------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(alpha=1.5), dict(alpha=-1.01), dict(beta=-1e-9), dict(delta=0.0),
    dict(lambda1=-1.0), dict(lambda3=-0.1), dict(k=1), dict(k=2.5),
])
def test_hyperparams_bounds(kwargs):
    base = dict(alpha=0.0, beta=0.0, delta=1.0, lambda1=1.0, lambda2=0.0, lambda3=0.0, k=2)
    base.update(kwargs)
    with pytest.raises(ValueError):
        HyperParams(**base)


def test_hyperparams_round_trips():
    hp = HyperParams(0.3, 1e-4, 2.0, 1.0, 2.0, 3.0, 4)
    assert HyperParams.from_dict(hp.to_dict()) == hp
    assert HyperParams.from_genome(hp.genome, 4) == hp


def test_prototype_must_be_finite():
    with pytest.raises(ValueError):
        Prototype(0.0, (1.0, float("nan")))
