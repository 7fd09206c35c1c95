from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dampf.dataset import (
    EXOGENOUS,
    PRICE,
    DatasetScaler,
    SyntheticSpec,
    TimeSeriesFrame,
    apply_scaler,
    day_of_week,
    fit_scaler,
    gen_synthetic,
    ingest_csv,
    interpolate_missing,
    invert_scaler,
    seasonal_price,
    shift_timesteps,
    split_monthly,
    write_csv,
)
from dampf.errors import (
    BadTimestamp,
    ColumnAllMissing,
    ColumnTooSparse,
    DegenerateColumn,
    DuplicateTimestamp,
    EmptyColumn,
    FileUnreadable,
    FrameTooShort,
    InsufficientHistory,
    InvalidBounds,
    InvalidWindow,
    MonthNotCovered,
    UnknownColumn,
)

HEADER = "timestamp,price_eur_mwh,load_fc_mw,res_fc_mw,gen_fc_mw,netflow_fc_mw\n"


def _csv(tmp_path, body, name="d.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def _frame(values, start="2023-01-01T00"):
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    return TimeSeriesFrame(np.datetime64(start, "h"), (PRICE,) + EXOGENOUS[: values.shape[1] - 1], values)


# ---- ingestion -------------------------------------------------------------

def test_ingest_three_rows(tmp_path):
    p = _csv(tmp_path, "2023-01-01T00:00:00Z,1,2,3,4,5\n2023-01-01T01:00:00Z,1,2,3,4,5\n"
                       "2023-01-01T02:00:00Z,1,2,3,4,5\n")
    f = ingest_csv(p)
    assert len(f) == 3 and f.n_missing == 0
    assert f.start == np.datetime64("2023-01-01T00", "h")


def test_ingest_fills_grid_gap(tmp_path):
    p = _csv(tmp_path, "2023-01-01T00:00:00Z,1,2,3,4,5\n2023-01-01T02:00:00Z,1,2,3,4,5\n")
    f = ingest_csv(p)
    assert len(f) == 3
    assert np.isnan(f.data[1]).all()
    assert not np.isnan(f.data[[0, 2]]).any()


def test_ingest_unordered_rows_and_offsets(tmp_path):
    p = _csv(tmp_path, "2023-01-01T03:00:00+02:00,2,0,0,0,0\n2023-01-01T00:00:00Z,1,0,0,0,0\n")
    f = ingest_csv(p)
    assert f.column(PRICE)[0] == 1.0 and f.column(PRICE)[1] == 2.0


def test_ingest_bad_timestamp_reports_line(tmp_path):
    p = _csv(tmp_path, "2023-01-01T00:00:00Z,1,2,3,4,5\n2023-13-01T00:00:00Z,1,2,3,4,5\n")
    with pytest.raises(BadTimestamp) as info:
        ingest_csv(p)
    assert info.value.row == 3


def test_ingest_duplicate_and_missing_column(tmp_path):
    p = _csv(tmp_path, "2023-01-01T00:00:00Z,1,2,3,4,5\n2023-01-01T00:00:00Z,1,2,3,4,5\n")
    with pytest.raises(DuplicateTimestamp):
        ingest_csv(p)
    q = tmp_path / "q.csv"
    q.write_text("timestamp,price_eur_mwh\n2023-01-01T00:00:00Z,1\n")
    with pytest.raises(UnknownColumn):
        ingest_csv(q)
    with pytest.raises(FileUnreadable):
        ingest_csv(tmp_path / "absent.csv")


def test_ingest_schema_mapping(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("time,price\n2023-01-01T00:00:00Z,4\n2023-01-01T01:00:00Z,\n")
    f = ingest_csv(p, {"timestamp": "time", PRICE: "price"})
    assert f.columns == (PRICE,)
    assert f.n_missing == 1


def test_csv_round_trip(tmp_path):
    f = gen_synthetic(3, seed=1)
    write_csv(f, tmp_path / "s.csv")
    g = ingest_csv(tmp_path / "s.csv")
    assert g.columns == f.columns and g.start == f.start
    assert np.array_equal(g.data, f.data)


# ---- interpolation -------------------------------------------------------

def test_interpolate_examples():
    assert interpolate_missing(_frame([1, np.nan, 3])).column(PRICE).tolist() == [1, 2, 3]
    assert interpolate_missing(_frame([np.nan, 5, 7])).column(PRICE).tolist() == [5, 5, 7]
    assert interpolate_missing(_frame([1, 4, np.nan])).column(PRICE).tolist() == [1, 4, 4]
    with pytest.raises(ColumnAllMissing):
        interpolate_missing(_frame([np.nan, np.nan]))
    with pytest.raises(ColumnTooSparse):
        interpolate_missing(_frame([np.nan, 1.0, np.nan]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(-1e3, 1e3)), min_size=2, max_size=40))
def test_interpolate_leaves_no_gaps(cells):
    col = np.array([np.nan if c is None else c for c in cells])
    if (~np.isnan(col)).sum() < 2:
        return
    out = interpolate_missing(_frame(col)).column(PRICE)
    assert not np.isnan(out).any()
    ok = ~np.isnan(col)
    assert np.array_equal(out[ok], col[ok])
    assert out.min() >= col[ok].min() and out.max() <= col[ok].max()


# ---- scaling -------------------------------------------------------------

def test_scaler_examples():
    x = np.array([0.0, 5.0, 10.0])
    assert apply_scaler(fit_scaler(x), x).tolist() == [0.0, 0.5, 1.0]
    assert apply_scaler(fit_scaler(x, (-1, 1)), x).tolist() == [-1.0, 0.0, 1.0]
    c = np.array([4.0, 4.0, 4.0])
    assert apply_scaler(fit_scaler(c), c).tolist() == [0.0, 0.0, 0.0]
    assert invert_scaler(fit_scaler(x), [0, 0.5, 1]).tolist() == [0.0, 5.0, 10.0]
    with pytest.raises(DegenerateColumn):
        invert_scaler(fit_scaler(c), [0.0])
    with pytest.raises(InvalidBounds):
        fit_scaler(x, (1, 1))
    with pytest.raises(EmptyColumn):
        fit_scaler(np.empty(0))


def test_scaler_round_trip_1000_columns():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        col = rng.normal(rng.uniform(-100, 100), rng.uniform(0.1, 50), int(rng.integers(2, 50)))
        lo = rng.uniform(-2, 0)
        p = fit_scaler(col, (lo, lo + rng.uniform(0.5, 3)))
        s = apply_scaler(p, col)
        assert s.min() >= p.low - 1e-12 and s.max() <= p.high + 1e-12
        back = invert_scaler(p, s)
        assert np.all(np.abs(back - col) <= 1e-12 * np.maximum(1.0, np.abs(col)))


def test_scaler_ignores_test_values():
    ds = shift_timesteps(interpolate_missing(gen_synthetic(100, seed=3)))
    split = split_monthly(ds, 14, (2023, 3))
    before = DatasetScaler.fit(split.train)
    ds2 = type(ds)(ds.X.copy(), ds.y.copy(), ds.row_times, ds.feature_names, ds.categorical_slots)
    a = int(np.searchsorted(ds.row_times, split.test.row_times[0]))
    ds2.X[a:] *= 7.0
    ds2.y[a:] += 1000.0
    after = DatasetScaler.fit(split_monthly(ds2, 14, (2023, 3)).train)
    assert before.to_dict() == after.to_dict()


def test_dataset_scaler_leaves_categoricals():
    ds = shift_timesteps(gen_synthetic(10, seed=0))
    sc = DatasetScaler.fit(ds)
    out = sc.transform(ds)
    for j in ds.categorical_slots:
        assert np.array_equal(out.X[:, j], ds.X[:, j])
    assert np.allclose(sc.inverse_y(out.y), ds.y, rtol=1e-12, atol=1e-9)
    assert DatasetScaler.from_dict(sc.to_dict()).to_dict() == sc.to_dict()


# ---- shifting ------------------------------------------------------------

def test_shift_definition():
    ds = shift_timesteps(_frame([1, 2, 3, 4]), n=2, calendar_slots=False)
    assert ds.X.tolist() == [[1, 2], [2, 3]]
    assert ds.y.tolist() == [3, 4]
    assert ds.feature_names == ("price_lag_2", "price_lag_1")


def test_shift_row_count_and_too_short():
    assert len(shift_timesteps(_frame(np.arange(100.0)), 24)) == 76
    with pytest.raises(FrameTooShort):
        shift_timesteps(_frame(np.arange(24.0)), 24)


def test_shift_every_cell_names_its_source():
    f = gen_synthetic(3, seed=5)
    ds = shift_timesteps(f)
    price = f.column(PRICE)
    names = ds.feature_names
    for i, t in enumerate(ds.row_times):
        h = int((t - f.start) // np.timedelta64(1, "h"))
        for k in range(1, 25):
            assert ds.X[i, names.index(f"price_lag_{k}")] == price[h - k]
        for e in EXOGENOUS:
            assert ds.X[i, names.index(e)] == f.column(e)[h]
        assert ds.X[i, names.index("hour_of_day")] == h % 24
        assert ds.y[i] == price[h]
    assert ds.categorical_slots == (names.index("hour_of_day"), names.index("day_of_week"))


def test_day_of_week_matches_calendar():
    times = np.datetime64("2023-01-01T00", "h") + np.arange(0, 24 * 400, 7) * np.timedelta64(1, "h")
    for t, d in zip(times, day_of_week(times)):
        assert datetime.fromisoformat(str(t)).weekday() == d


# ---- monthly splits ------------------------------------------------------

@pytest.fixture(scope="module")
def year_ds():
    return shift_timesteps(gen_synthetic(365, seed=42))


def _hours(first: datetime, last: datetime):
    out, t = [], first
    while t <= last:
        out.append(np.datetime64(t.strftime("%Y-%m-%dT%H"), "h"))
        t += timedelta(hours=1)
    return np.array(out)


def test_split_june_window7(year_ds):
    s = split_monthly(year_ds, 7, (2023, 6))
    assert len(s.test) == 144 and len(s.train) == 168
    assert np.array_equal(s.test.row_times, _hours(datetime(2023, 6, 25), datetime(2023, 6, 30, 23)))
    assert np.array_equal(s.train.row_times, _hours(datetime(2023, 6, 18), datetime(2023, 6, 24, 23)))


def test_split_march_window45(year_ds):
    s = split_monthly(year_ds, 45, (2023, 3))
    # oracle: walk the calendar back 45 days from the first of the last 7
    test_first = datetime(2023, 3, 31) - timedelta(days=6)
    train_first = test_first - timedelta(days=45)
    assert train_first == datetime(2023, 2, 8)
    assert np.array_equal(s.test.row_times, _hours(test_first, datetime(2023, 3, 31, 23)))
    assert np.array_equal(s.train.row_times, _hours(train_first, test_first - timedelta(hours=1)))
    assert s.train.row_times[-1] + np.timedelta64(1, "h") == s.test.row_times[0]


def test_split_errors(year_ds):
    with pytest.raises(InsufficientHistory) as info:
        split_monthly(year_ds, 90, (2023, 2))
    assert info.value.needed_days == 90
    with pytest.raises(InvalidWindow):
        split_monthly(year_ds, 10, (2023, 5))
    with pytest.raises(MonthNotCovered):
        split_monthly(year_ds, 7, (2024, 2))


@pytest.mark.parametrize("month", [(2023, m) for m in range(2, 13)])
def test_split_invariants(year_ds, month):
    s = split_monthly(year_ds, 30, month)
    assert len(s.train) == 30 * 24
    assert len(s.test) % 24 == 0
    assert not set(s.train.row_times.tolist()) & set(s.test.row_times.tolist())
    assert s.test.row_times[-1].astype("datetime64[M]") == np.datetime64(f"{month[0]}-{month[1]:02d}", "M")


# ---- synthetic generator -------------------------------------------------

def test_synthetic_deterministic(tmp_path):
    a, b = gen_synthetic(20, seed=9), gen_synthetic(20, seed=9)
    assert np.array_equal(a.data, b.data)
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert not np.array_equal(a.data, gen_synthetic(20, seed=10).data)


def test_synthetic_noise_free_is_closed_form():
    spec = SyntheticSpec(noise=0.0, spike_rate=0.0)
    f = gen_synthetic(30, spec, seed=1)
    hours = f.start.astype(np.int64) + np.arange(len(f))
    assert np.array_equal(f.column(PRICE), seasonal_price(hours, spec))


def test_synthetic_daily_amplitude():
    spec = SyntheticSpec(noise=0.0, spike_rate=0.0, daily_amp=10.0, weekly_amp=0.0, annual_amp=0.0)
    price = gen_synthetic(5, spec, seed=0).column(PRICE).reshape(5, 24)
    assert np.all(price.max(axis=1) - price.min(axis=1) >= 20.0 - 1e-9)


def test_synthetic_spec_file(tmp_path):
    p = tmp_path / "spec.txt"
    p.write_text("# quieter market\nnoise = 0\nspike_rate = 0\nstart = 2023-06-01\n")
    spec = SyntheticSpec.from_file(p)
    assert spec.noise == 0.0 and spec.start == "2023-06-01"
    assert gen_synthetic(2, spec).start == np.datetime64("2023-06-01T00", "h")
