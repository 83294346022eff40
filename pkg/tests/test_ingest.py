import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenofuse.ingest import (
    BBCH_STAGES,
    CROP_STAGES,
    CROPS,
    ClimateRecord,
    Grid,
    ParseError,
    StationObservation,
    ValidationError,
    clean_observations,
    parse_climate_csv,
    parse_grid,
    parse_phenology_csv,
    season_of,
    season_start,
    serialize_climate_csv,
    serialize_grid,
    serialize_phenology_csv,
)

PHENO_HEADER = "station_id,lat,lon,crop,bbch,date,qb,qn\n"
CLIMATE_HEADER = "station_id,lat,lon,date,tmax,tmin,prcp\n"


def obs(bbch, date, qb=1, qn=10, sid="S1", crop="winter_wheat"):
    return StationObservation(sid, 52.0, 10.0, crop, bbch, dt.date.fromisoformat(date), qb, qn)


class TestPhenologyParse:
    def test_single_row(self):
        rows = parse_phenology_csv(PHENO_HEADER + "S1,52.1,10.2,maize,10,2020-05-01,1,10\n")
        assert rows == [StationObservation("S1", 52.1, 10.2, "maize", 10, dt.date(2020, 5, 1), 1, 10)]

    def test_unknown_bbch_names_line(self):
        with pytest.raises(ValidationError, match="line 2"):
            parse_phenology_csv(PHENO_HEADER + "S1,52.1,10.2,maize,42,2020-05-01,1,10\n")

    def test_empty_body(self):
        assert parse_phenology_csv(PHENO_HEADER) == []

    def test_malformed_row_reports_line(self):
        text = PHENO_HEADER + "S1,52.1,10.2,maize,10,2020-05-01,1,10\nS1,52.1,maize\n"
        with pytest.raises(ParseError, match="line 3"):
            parse_phenology_csv(text)

    def test_bad_date(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_phenology_csv(PHENO_HEADER + "S1,52.1,10.2,maize,10,2020-13-01,1,10\n")

    def test_unknown_crop(self):
        with pytest.raises(ValidationError, match="unknown crop"):
            parse_phenology_csv(PHENO_HEADER + "S1,52.1,10.2,potato,10,2020-05-01,1,10\n")

    def test_wrong_header(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_phenology_csv("a,b,c\n")


def test_stage_table_is_thirteen_codes_and_crop_stages_are_subsets():
    assert len(BBCH_STAGES) == 13
    assert set(CROP_STAGES) == set(CROPS)
    for stages in CROP_STAGES.values():
        assert set(stages) <= set(BBCH_STAGES)
        assert list(stages) == sorted(stages)


class TestClean:
    def test_quality_flags(self):
        assert clean_observations([obs(10, "2020-04-01", qb=5, qn=3)]) == []
        # either flag alone is enough
        assert len(clean_observations([obs(10, "2020-04-01", qb=1, qn=3)])) == 1
        assert len(clean_observations([obs(10, "2020-04-01", qb=5, qn=10)])) == 1

    def test_out_of_order_stage_dropped(self):
        recs = [obs(0, "2020-04-10"), obs(10, "2020-04-01")]
        assert clean_observations(recs) == [obs(0, "2020-04-10")]

    def test_clean_sequence_fixed_point(self):
        recs = [obs(0, "2019-10-01"), obs(10, "2019-10-15"), obs(31, "2020-04-20"), obs(51, "2020-05-30")]
        assert clean_observations(recs) == recs

    def test_duplicate_stage_keeps_earliest(self):
        out = clean_observations([obs(10, "2020-04-05"), obs(10, "2020-04-01")])
        assert out == [obs(10, "2020-04-01")]

    def test_groups_are_independent_across_seasons(self):
        # BBCH 0 in season 2020 does not constrain BBCH 10 in season 2021
        recs = [obs(0, "2020-04-10"), obs(10, "2020-10-01")]
        assert clean_observations(recs) == recs

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(BBCH_STAGES), st.integers(0, 400), st.integers(1, 5),
                              st.sampled_from([3, 7, 10])), max_size=25))
    def test_idempotent_and_ordered(self, raw):
        base = dt.date(2019, 9, 22)
        recs = [obs(b, (base + dt.timedelta(days=d)).isoformat(), qb, qn) for b, d, qb, qn in raw]
        once = clean_observations(recs)
        assert clean_observations(once) == once
        by_group = {}
        for o in once:
            assert o.qb == 1 or o.qn == 10
            by_group.setdefault(o.season, []).append(o)
        for group in by_group.values():
            group.sort(key=lambda o: o.bbch)
            dates = [o.date for o in group]
            assert dates == sorted(dates) and len(set(dates)) == len(dates)


class TestSeason:
    def test_boundary(self):
        assert season_of(dt.date(2019, 9, 21)) == 2019  # DOY 264
        assert season_of(dt.date(2019, 9, 22)) == 2020  # DOY 265
        assert season_of(dt.date(2020, 9, 21)) == 2021  # leap year: DOY 265
        assert season_start(2020) == dt.date(2019, 9, 22)
        assert season_start(2021) == dt.date(2020, 9, 21)

    @given(st.dates(dt.date(1990, 1, 1), dt.date(2060, 12, 31)))
    def test_start_belongs_to_season(self, d):
        s = season_of(d)
        assert season_start(s) <= d < season_start(s + 1)


class TestClimate:
    def test_valid_row(self):
        recs = parse_climate_csv(CLIMATE_HEADER + "C1,51.0,9.0,2020-01-01,12.5,3.0,0.0\n")
        assert recs == [ClimateRecord("C1", 51.0, 9.0, dt.date(2020, 1, 1), 12.5, 3.0, 0.0)]

    def test_tmax_below_tmin(self):
        with pytest.raises(ValidationError):
            parse_climate_csv(CLIMATE_HEADER + "C1,51.0,9.0,2020-01-01,1.0,3.0,0.0\n")

    def test_negative_precipitation(self):
        with pytest.raises(ValidationError):
            parse_climate_csv(CLIMATE_HEADER + "C1,51.0,9.0,2020-01-01,12.5,3.0,-1\n")

    def test_missing_values_are_none(self):
        (rec,) = parse_climate_csv(CLIMATE_HEADER + "C1,51.0,9.0,2020-01-01,,3.0,\n")
        assert rec.tmax is None and rec.prcp is None and rec.tmin == 3.0


class TestGrid:
    def test_zeros(self):
        g = parse_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nnodata_value -9999\n0 0\n0 0\n")
        assert g.values.shape == (2, 2) and np.all(g.values == 0)

    def test_count_mismatch(self):
        with pytest.raises(ParseError, match="expected 4 values, found 3"):
            parse_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nnodata_value -9999\n0 0\n0\n")

    def test_nonpositive_cellsize(self):
        with pytest.raises(ValidationError):
            parse_grid("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 0\nnodata_value -9999\n0\n")


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(CROPS), st.sampled_from(BBCH_STAGES), finite, finite,
                          st.dates(dt.date(2000, 1, 1), dt.date(2030, 1, 1)), st.integers(0, 10)), max_size=10))
def test_phenology_round_trip(rows):
    recs = [StationObservation(f"S{i}", la, lo, c, b, d, q, q) for i, (c, b, la, lo, d, q) in enumerate(rows)]
    text = serialize_phenology_csv(recs)
    assert parse_phenology_csv(text) == recs
    assert serialize_phenology_csv(parse_phenology_csv(text)) == text


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, st.floats(0, 50), st.one_of(st.none(), st.floats(0, 500))), max_size=10))
def test_climate_round_trip(rows):
    recs = [ClimateRecord("C", 50.0, 8.0, dt.date(2020, 1, 1) + dt.timedelta(days=i), t + span, t, p)
            for i, (t, span, p) in enumerate(rows)]
    text = serialize_climate_csv(recs)
    assert parse_climate_csv(text) == recs
    assert serialize_climate_csv(parse_climate_csv(text)) == text


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_grid_round_trip(nr, nc, data):
    vals = np.array(data.draw(st.lists(finite, min_size=nr * nc, max_size=nr * nc))).reshape(nr, nc)
    g = Grid(nc, nr, 1234.5, -17.25, 20.0, -9999.0, vals)
    text = serialize_grid(g)
    assert parse_grid(text) == g
    assert serialize_grid(parse_grid(text)) == text
