import datetime as dt
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import idw_oracle

from phenofuse.features import (
    BASE_TEMPERATURE,
    FEATURE_GROUPS,
    FEATURE_NAMES,
    CropConfig,
    IndexDomainError,
    OpticalSample,
    RadarSample,
    accumulate_climate,
    build_feature_table,
    gdd_daily,
    idw_interpolate,
    optical_index_arrays,
    optical_indices,
    radar_indices,
    terrain_derivatives,
    time_features,
)
from phenofuse.ingest import CROPS, Grid, ValidationError
from phenofuse.preprocess import DailySeries


class TestRadar:
    def test_equal_polarisations(self):
        assert radar_indices(RadarSample(-12.0, -12.0)) == (0.0, 1.0, 2.0)

    def test_cross_ratio(self):
        assert radar_indices(RadarSample(vv=-10.0, vh=-18.0))[0] == -8.0

    def test_zero_vv(self):
        with pytest.raises(IndexDomainError, match="PR"):
            radar_indices(RadarSample(0.0, -15.0))

    def test_zero_vh(self):
        with pytest.raises(IndexDomainError, match="RVI"):
            radar_indices(RadarSample(-10.0, 0.0))

    @given(st.floats(-30, -1), st.floats(-30, -1), st.floats(-5, 5))
    def test_cr_shift_invariant(self, vv, vh, c):
        assert radar_indices(RadarSample(vv + c, vh + c))[0] == pytest.approx(vh - vv, abs=1e-9)


class TestOptical:
    def test_symmetries(self):
        v, e = optical_indices(OpticalSample(b=0.1, g=0.3, r=0.2, nir=0.2, re1=0.1, re2=0.1))
        assert v["NDVI"] == 0 and not e
        v, _ = optical_indices(OpticalSample(b=0.1, g=0.3, r=0.2, nir=0.3, re1=0.1, re2=0.1))
        assert v["NDWI"] == 0

    def test_hand_evaluated(self):
        b, g, r, nir = Fr(5, 100), Fr(10, 100), Fr(8, 100), Fr(40, 100)
        re1, re2 = Fr(15, 100), Fr(25, 100)
        expected = {
            "NDVI": Fr(32, 48),
            "EVI2": Fr(5, 2) * Fr(32, 100) / (Fr(40, 100) + Fr(192, 1000) + 1),
            "GNDVI": Fr(30, 50),
            "GCVI": Fr(3),
            "SAVI": Fr(3, 2) * Fr(32, 100) / Fr(98, 100),
            "NDWI": Fr(-30, 50),
            "PSRI": Fr(-2, 100) / Fr(25, 100),
            "MCARI": (Fr(7, 100) - Fr(1, 5) * Fr(5, 100)) * Fr(15, 8),
            "NDYI": Fr(5, 15),
            "ARVI": Fr(29, 51),
            "WDRVI": Fr(0, 1),
            "VARI": Fr(2, 13),
        }
        v, e = optical_indices(OpticalSample(float(b), float(g), float(r), float(nir), re1=float(re1),
                                             re2=float(re2)))
        assert not e and set(v) == set(expected)
        for name, want in expected.items():
            assert v[name] == pytest.approx(float(want), abs=1e-12), name

    def test_vari_is_not_bounded(self):
        # blue close to green + red shrinks the denominator without bound
        v, _ = optical_indices(OpticalSample(b=0.55, g=0.5, r=0.1, nir=0.3, re1=0.1, re2=0.1))
        assert v["VARI"] == pytest.approx(8.0)

    def test_zero_denominator_reported_others_kept(self):
        v, e = optical_indices(OpticalSample(b=0.05, g=0.0, r=0.1, nir=0.3, re1=0.1, re2=0.1))
        assert set(e) == {"GCVI"}
        assert np.isnan(v["GCVI"]) and np.isfinite(v["NDVI"])

    def test_negative_reflectance_rejected(self):
        with pytest.raises(ValidationError):
            OpticalSample(b=-0.1, g=0.1, r=0.1, nir=0.1)

    @settings(max_examples=200)
    @given(*(st.floats(0.001, 1.0) for _ in range(6)))
    def test_normalised_indices_bounded_and_vector_form_agrees(self, b, g, r, nir, re1, re2):
        v, _ = optical_indices(OpticalSample(b, g, r, nir, re1=re1, re2=re2))
        for name in ("NDVI", "GNDVI", "NDWI", "NDYI"):
            assert -1 - 1e-12 <= v[name] <= 1 + 1e-12
        arr = optical_index_arrays({k: np.array([x]) for k, x in
                                    zip(("b", "g", "r", "nir", "re1", "re2"), (b, g, r, nir, re1, re2))})
        for name, val in v.items():
            assert arr[name][0] == pytest.approx(val, rel=1e-12, abs=1e-12, nan_ok=True)


class TestGdd:
    def test_examples(self):
        assert gdd_daily(30, 20, BASE_TEMPERATURE["maize"]) == 15
        assert gdd_daily(5, 1, 10) == 0
        assert gdd_daily(5, 5, BASE_TEMPERATURE["spring_oat"]) == 5

    def test_tmax_below_tmin(self):
        with pytest.raises(ValidationError):
            gdd_daily(1, 2, 0)

    def test_base_temperatures(self):
        assert set(BASE_TEMPERATURE) == set(CROPS)
        for crop in ("winter_wheat", "winter_rapeseed", "winter_rye", "spring_barley", "winter_barley"):
            assert BASE_TEMPERATURE[crop] == 4.5
        assert BASE_TEMPERATURE["maize"] == 10
        assert BASE_TEMPERATURE["spring_oat"] == 0
        assert BASE_TEMPERATURE["sugar_beet"] == 1
        assert CropConfig.for_crop("maize").season_start_doy == 265

    @given(st.floats(-40, 45), st.floats(0, 30), st.floats(-5, 15))
    def test_nonnegative(self, tmin, span, base):
        assert gdd_daily(tmin + span, tmin, base) >= 0


def _series(name, start, values):
    return DailySeries(name, "S", start, np.asarray(values, dtype=float))


class TestAccumulate:
    def test_constant_gdd(self):
        start = dt.date(2019, 9, 22)  # DOY 265
        cfg = CropConfig.for_crop("spring_oat")
        gdd, gsum, dtr, psum = accumulate_climate(_series("tmax", start, [3] * 10), _series("tmin", start, [1] * 10),
                                                  _series("prcp", start, [0] * 10), cfg)
        assert gsum.values[9] == 20  # DOY 274
        assert np.all(psum.values == 0)
        assert np.all(dtr.values == 2)

    def test_reset_and_cumsum_oracle(self, rng):
        start = dt.date(2018, 6, 1)
        n = 900
        tmin = rng.uniform(-10, 15, n)
        tmax = tmin + rng.uniform(0, 15, n)
        prcp = rng.exponential(2, n)
        cfg = CropConfig.for_crop("winter_wheat")
        gdd, gsum, _, psum = accumulate_climate(_series("tmax", start, tmax), _series("tmin", start, tmin),
                                                _series("prcp", start, prcp), cfg)
        days = [start + dt.timedelta(days=i) for i in range(n)]
        resets = [i for i, d in enumerate(days) if d.timetuple().tm_yday == 265]
        assert [days[i] for i in resets] == [dt.date(2018, 9, 22), dt.date(2019, 9, 22), dt.date(2020, 9, 21)]
        bounds = [0, *resets, n]
        expect_g = np.concatenate([np.cumsum(gdd.values[a:b]) for a, b in zip(bounds, bounds[1:])])
        expect_p = np.concatenate([np.cumsum(prcp[a:b]) for a, b in zip(bounds, bounds[1:])])
        assert np.array_equal(gsum.values, expect_g)
        assert np.array_equal(psum.values, expect_p)
        for a, b in zip(bounds, bounds[1:]):
            assert np.all(np.diff(gsum.values[a:b]) >= 0)

    def test_misaligned(self):
        cfg = CropConfig.for_crop("maize")
        s = dt.date(2020, 1, 1)
        with pytest.raises(ValueError, match="aligned"):
            accumulate_climate(_series("tmax", s, [1, 2]), _series("tmin", s, [0]), _series("prcp", s, [0, 0]), cfg)


class TestIdw:
    def test_coincident_station(self):
        assert idw_interpolate([(50.0, 8.0, 7.3), (51.0, 9.0, 1.0)], (50.0, 8.0)) == 7.3

    def test_equidistant(self):
        assert idw_interpolate([(50.0, 8.0, 10.0), (50.0, 10.0, 20.0)], (50.0, 9.0), k=2) == pytest.approx(15, abs=1e-12)

    def test_twelve_stations_farthest_ignored(self, rng):
        stations = [(50 + rng.uniform(-1, 1), 9 + rng.uniform(-1, 1), rng.normal()) for _ in range(12)]
        target = (50.0, 9.0)
        got = idw_interpolate(stations, target, k=10)
        assert got == pytest.approx(idw_oracle(stations, target, 10), abs=1e-12)
        far = sorted(stations, key=lambda s: (s[0] - 50) ** 2 + ((s[1] - 9) * 0.64) ** 2)[-1]
        moved = [s if s is not far else (s[0], s[1], 1e6) for s in stations]
        assert idw_interpolate(moved, target, k=10) == pytest.approx(got, abs=1e-12)

    def test_no_stations(self):
        with pytest.raises(ValueError):
            idw_interpolate([], (50.0, 9.0))

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.floats(47, 55), st.floats(5, 15), st.floats(-20, 20)), min_size=1, max_size=15),
           st.integers(1, 12))
    def test_within_range_of_used_stations(self, stations, k):
        got = idw_interpolate(stations, (51.0, 10.0), k)
        vals = [v for *_, v in stations]
        assert min(vals) - 1e-9 <= got <= max(vals) + 1e-9


def _dem(values, cellsize=1.0):
    values = np.asarray(values, dtype=float)
    return Grid(values.shape[1], values.shape[0], 0.0, 0.0, cellsize, -9999.0, values)


class TestTerrain:
    def test_flat(self):
        slope, aspect = terrain_derivatives(_dem(np.full((5, 5), 100.0)))
        assert np.all(slope.values == 0) and np.all(aspect.values == 0)

    def test_plane_rising_east(self):
        z = np.tile(np.arange(6.0), (6, 1))  # z = x, cellsize 1
        slope, aspect = terrain_derivatives(_dem(z))
        # analytic gradient (dz/dx, dz/dy) = (1, 0): atan(1) = 45 deg, downhill bearing is west
        assert np.allclose(slope.values[1:-1, 1:-1], 45.0, atol=1e-12)
        assert np.allclose(aspect.values[1:-1, 1:-1], 270.0, atol=1e-12)

    def test_plane_rising_north(self):
        z = np.tile(np.arange(6.0)[::-1, None], (1, 6)) * 2  # row 0 is north
        slope, aspect = terrain_derivatives(_dem(z))
        assert np.allclose(slope.values[1:-1, 1:-1], np.degrees(np.arctan(2.0)), atol=1e-12)
        assert np.allclose(aspect.values[1:-1, 1:-1], 180.0, atol=1e-12)

    def test_ridge_symmetry(self):
        x = np.arange(9.0)
        z = np.tile(10 - np.abs(x - 4), (7, 1))
        slope, aspect = terrain_derivatives(_dem(z))
        assert np.allclose(slope.values, slope.values[:, ::-1])
        west, east = aspect.values[:, :4], aspect.values[:, 5:][:, ::-1]
        assert np.allclose((west + east) % 360.0, 0.0)

    def test_too_small(self):
        with pytest.raises(ValueError):
            terrain_derivatives(_dem(np.zeros((2, 5))))


def test_time_features():
    assert time_features(dt.date(2020, 1, 15))[:2] == (0, 1)
    assert time_features(dt.date(2020, 7, 1))[0] == 2
    assert time_features(dt.date(2019, 12, 31))[0] == 0
    assert time_features(dt.date(2024, 4, 1)) == (1, 4, 0, 1)  # a Monday


def test_feature_table_layout():
    assert len(FEATURE_NAMES) == 43 and len(set(FEATURE_NAMES)) == 43
    assert len(FEATURE_GROUPS) == 12
    start = dt.date(2019, 9, 22)
    clim = {k: _series(k, start, np.full(30, v)) for k, v in (("tmax", 12.0), ("tmin", 4.0), ("prcp", 1.0))}
    X = build_feature_table(start, 30, climate=clim, cfg=CropConfig.for_crop("spring_oat"),
                            lat=51.0, lon=9.0, altitude=200.0, slope=2.0, aspect=90.0)
    col = {n: X[:, i] for i, n in enumerate(FEATURE_NAMES)}
    assert X.shape == (30, 43)
    assert np.all(np.isnan(col["VV"])) and np.all(np.isnan(col["NDVI"]))
    assert list(col["GDD_sum"][:3]) == [8.0, 16.0, 24.0]
    assert col["prcp_sum"][-1] == 30.0
    assert np.all(col["latitude"] == 51.0) and np.all(col["aspect"] == 90.0)
    assert col["month"][0] == 9 and col["day_of_month"][0] == 22
