import datetime as dt

import numpy as np
import pytest

from phenofuse.dataset import (
    BACKGROUND,
    assemble_labeled_dataset,
    compute_class_weights,
    dataset_from_csv,
    dataset_to_csv,
    doy_to_date,
    kfold_split,
    season_doy,
)
from phenofuse.features import FEATURE_NAMES
from phenofuse.ingest import StationObservation


def _obs(bbch, date, sid="S1"):
    return StationObservation(sid, 52.0, 10.0, "maize", bbch, date, 1, 10)


def _window(start, n, rng=None):
    X = np.arange(n * 43, dtype=float).reshape(n, 43) if rng is None else rng.normal(size=(n, 43))
    return start, X


START = dt.date(2020, 3, 1)


class TestAssemble:
    def test_seven_stages_in_200_days(self):
        obs = [_obs(b, START + dt.timedelta(days=20 * i + 5)) for i, b in enumerate((0, 10, 31, 53, 61, 75, 83))]
        ds = assemble_labeled_dataset(obs, {("S1", 2020): _window(START, 200)}, "maize")
        assert len(ds) == 200
        assert (ds.labels != BACKGROUND).sum() == 7
        assert (ds.labels == BACKGROUND).sum() == 193
        assert ds.labels[5] == 0 and ds.labels[25] == 10

    def test_no_observations_all_background(self):
        ds = assemble_labeled_dataset([], {("S1", 2020): _window(START, 50)}, "maize")
        assert np.all(ds.labels == BACKGROUND)

    def test_coincident_stages(self):
        day = START + dt.timedelta(days=3)
        with pytest.raises(ValueError, match="coincident stages"):
            assemble_labeled_dataset([_obs(0, day), _obs(10, day)], {("S1", 2020): _window(START, 20)}, "maize")

    def test_outside_window_skipped_and_counted(self):
        ds = assemble_labeled_dataset([_obs(10, START + dt.timedelta(days=40))],
                                      {("S1", 2020): _window(START, 20)}, "maize")
        assert ds.n_skipped == 1 and np.all(ds.labels == BACKGROUND)

    def test_doy_axis(self):
        autumn = dt.date(2019, 9, 22)
        ds = assemble_labeled_dataset([], {("S1", 2020): _window(autumn, 120)}, "maize")
        assert ds.doys[0] == season_doy(autumn, 2020) == -100
        assert doy_to_date(ds.doys[101], 2020) == dt.date(2020, 1, 1)
        assert np.all(np.diff(ds.doys) == 1)


class TestClassWeights:
    def test_balanced(self):
        assert compute_class_weights([1, 2] * 50) == {1: 1.0, 2: 1.0}

    def test_imbalanced(self):
        w = compute_class_weights([0] * 90 + [1] * 10)
        assert w[0] == pytest.approx(100 / 180, abs=1e-12) and w[1] == pytest.approx(5.0, abs=1e-12)

    def test_single_class(self):
        assert compute_class_weights([7] * 13) == {7: 1.0}

    def test_weighted_class_totals_equal(self, rng):
        labels = rng.choice([-1, 0, 10, 31], size=500, p=[0.85, 0.05, 0.05, 0.05])
        w = compute_class_weights(labels)
        totals = {c: w[c] * (labels == c).sum() for c in w}
        assert np.allclose(list(totals.values()), 500 / len(w))


class TestKfold:
    def test_even(self):
        split = kfold_split(100, 10, seed=1)
        assert [len(f) for f in split.outer] == [10] * 10

    def test_remainder(self):
        split = kfold_split(23, 10, seed=1)
        assert [len(f) for f in split.outer] == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    def test_deterministic(self):
        a, b = kfold_split(37, 10, seed=9), kfold_split(37, 10, seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a.outer, b.outer))
        assert all(np.array_equal(x, y) for fa, fb in zip(a.inner, b.inner) for x, y in zip(fa, fb))
        c = kfold_split(37, 10, seed=10)
        assert not all(np.array_equal(x, y) for x, y in zip(a.outer, c.outer))

    def test_partition(self):
        split = kfold_split(57, 10, seed=3)
        assert np.array_equal(np.sort(np.concatenate(split.outer)), np.arange(57))
        for i, inner in enumerate(split.inner):
            train = split.outer_train(i)
            assert np.array_equal(np.sort(np.concatenate(inner)), train)
            assert not set(train) & set(split.outer[i])

    def test_too_few(self):
        with pytest.raises(ValueError):
            kfold_split(9, 10, seed=0)


def test_csv_round_trip(rng):
    obs = [_obs(10, START + dt.timedelta(days=4)), _obs(31, START + dt.timedelta(days=9), sid="S2")]
    _, X = _window(START, 15, rng)
    X[3, 7] = np.nan
    ds = assemble_labeled_dataset(obs, {("S1", 2020): (START, X), ("S2", 2020): (START, X * 2)}, "maize")
    back = dataset_from_csv(dataset_to_csv(ds))
    assert back.feature_names == FEATURE_NAMES
    assert np.array_equal(back.X, ds.X, equal_nan=True)
    assert np.array_equal(back.labels, ds.labels) and np.array_equal(back.doys, ds.doys)
    assert list(back.station_ids) == list(ds.station_ids)
    assert back.class_weights == ds.class_weights
    assert dataset_to_csv(back) == dataset_to_csv(ds)
