import json

import numpy as np
import pytest

from dampf.bench import (
    ExperimentConfig,
    RunResult,
    Trace,
    cell_seed,
    emit_report,
    grid_from_traces,
    peak_valley_analysis,
    read_results,
    read_traces,
    report_from_traces,
    run_experiment,
    seasonal_breakdown,
    sig6,
    write_traces,
)
from dampf.dataset import gen_synthetic, write_csv
from dampf.errors import ConfigError, NoFeasibleCells
from dampf.metrics import MetricsReport


def _hours(start, n):
    return np.datetime64(start, "h") + np.arange(n) * np.timedelta64(1, "h")


def test_config_parse(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# grid\nmarket = gr:data/gr.csv\nmarket = be.csv\nwindow = 7\nwindow = 30\n"
                 "model = naive\nmodel = levelwise_exact\nmonths = 2023-03..2023-05\nseed = 7\n"
                 "output = out\nparam.levelwise_exact.n_trees = 20\n")
    cfg = ExperimentConfig.from_file(p)
    assert cfg.markets == (("gr", "data/gr.csv"), ("be", "be.csv"))
    assert cfg.windows == (7, 30) and cfg.seed == 7
    assert cfg.months == ((2023, 3), (2023, 4), (2023, 5))
    assert cfg.params == {"levelwise_exact": {"n_trees": 20}}
    assert cfg.market_path("be.csv") == tmp_path / "be.csv"
    assert "output" not in cfg.echo()


@pytest.mark.parametrize("body", [
    "market = a.csv\nwindow = 8\nmodel = naive\n",
    "market = a.csv\nwindow = 7\nmodel = prophet\n",
    "market = a.csv\nwindow = 7\n",
    "market = a.csv\nwindow = 7\nmodel = naive\ncolour = red\n",
    "market = a.csv\nwindow = 7\nmodel = naive\nparam.naive.depth = 3\n",
    "market = a.csv\nwindow = 7\nmodel = naive\nmonth = 2023-13\n",
])
def test_config_rejects(tmp_path, body):
    p = tmp_path / "c.cfg"
    p.write_text(body)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)


def test_cell_seed_stable_and_distinct():
    a = cell_seed(42, "gr", 7, "naive", (2023, 3))
    assert a == cell_seed(42, "gr", 7, "naive", (2023, 3))
    assert a != cell_seed(42, "gr", 7, "naive", (2023, 4))
    assert 0 <= a < 2 ** 31


def test_sig6_half_even():
    # exact ties in binary round to the even digit
    assert sig6(1234565.0) == 1234560.0
    assert sig6(1234575.0) == 1234580.0
    assert sig6(123456.75) == 123457.0
    assert sig6(0.5) == 0.5


def test_seasonal_pooled_mean():
    times = np.concatenate([_hours("2023-03-01T00", 24), _hours("2023-04-01T00", 72)])
    actual = np.zeros(96)
    pred = np.concatenate([np.full(24, 2.0), np.full(72, 4.0)])
    rows = seasonal_breakdown([Trace("m", 7, "x", times, actual, pred)])
    assert len(rows) == 1 and rows[0]["season"] == "spring"
    assert rows[0]["mae"] == 3.5 and rows[0]["n_hours"] == 96
    june = seasonal_breakdown([Trace("m", 7, "x", _hours("2023-06-10T00", 48), np.zeros(48), np.ones(48))])
    assert [r["season"] for r in june] == ["summer"]


def test_peak_valley():
    times = _hours("2023-05-01T00", 72)
    actual = np.tile(np.arange(24.0), 3)
    actual[19] = 100.0
    actual[24:48] = 7.0  # flat day: peak = valley = hour 0
    pred = actual.copy()
    pred[19] = 90.0
    pred[24] = 4.0
    pred[48 + 23] = 20.0
    pred[48] = 1.0
    rep = peak_valley_analysis([Trace("m", 7, "x", times, actual, pred)])[0]
    assert rep["n_days"] == 3 and rep["n_partial_days"] == 0
    assert rep["peak_mae"] == pytest.approx((10 + 3 + 3) / 3)
    assert rep["valley_mae"] == pytest.approx((0 + 3 + 1) / 3)
    part = peak_valley_analysis([Trace("m", 7, "x", times[:30], actual[:30], pred[:30])])[0]
    assert part["n_days"] == 1 and part["n_partial_days"] == 1


def test_trace_round_trip(tmp_path):
    t = Trace("m", 14, "naive", _hours("2023-02-01T00", 30), np.linspace(1, 2, 30), np.linspace(3, 1, 30))
    write_traces([t], tmp_path / "t.csv")
    back = read_traces(tmp_path / "t.csv")
    assert len(back) == 1 and back[0].key == t.key
    assert np.array_equal(back[0].times, t.times)
    assert np.array_equal(back[0].actual, [sig6(x) for x in t.actual])


@pytest.fixture(scope="module")
def market(tmp_path_factory):
    d = tmp_path_factory.mktemp("market")
    write_csv(gen_synthetic(151, seed=4), d / "m.csv")
    return d


def _cfg(market, **kw):
    base = dict(markets=(("syn", "m.csv"),), windows=(7, 90), models=("naive",),
                months=((2023, 3), (2023, 4), (2023, 5)), seed=1, base_dir=str(market))
    base.update(kw)
    return ExperimentConfig(**base)


def test_naive_grid_and_skips(market, tmp_path):
    res = run_experiment(_cfg(market))
    assert len(res.cells) == 6
    skipped = [(c.window_days, c.month) for c in res.cells if c.status == "skipped"]
    assert (90, (2023, 3)) in skipped
    assert all(c.status == "ok" for c in res.cells if c.window_days == 7)
    for rep in res.grid.values():
        assert rep.fsi == 0.0
    out = emit_report(res, tmp_path / "rep")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["cells"]["total"] == 6
    assert manifest["skipped"] and all(s["reason"].startswith("InsufficientHistory")
                                       for s in manifest["skipped"])
    emitted = read_results(out / "results.csv")
    for (m, w, model), rep in res.grid.items():
        for k, v in rep.as_dict().items():
            if v is not None:
                assert emitted[(m, w, model, k)] == v
    _, grid = report_from_traces(out / "traces.csv")
    for key, rep in grid.items():
        assert rep.mae == pytest.approx(res.grid[key].mae, rel=1e-9)


def test_model_cells_and_determinism(market, tmp_path):
    cfg = _cfg(market, windows=(7,), models=("naive", "levelwise_exact"), months=((2023, 4),),
               params={"levelwise_exact": {"n_trees": 10, "max_depth": 3}})
    a = emit_report(run_experiment(cfg), tmp_path / "a")
    b = emit_report(run_experiment(cfg, jobs=2), tmp_path / "b")
    for name in ("results.csv", "results_table.csv", "traces.csv", "aggregates.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    traces = read_traces(a / "traces.csv")
    assert np.array_equal(traces[0].actual, traces[1].actual)


def test_no_feasible_cells(market):
    with pytest.raises(NoFeasibleCells):
        run_experiment(_cfg(market, windows=(90,), months=((2023, 2),)))


def test_empty_seasonal_noted(tmp_path):
    rep = MetricsReport(1.0, 2.0, 1.5, 0.5, 0.0, 24, 0)
    cfg = ExperimentConfig((("m", "m.csv"),), (7,), ("naive",))
    out = emit_report(RunResult(cfg, [], [], {("m", 7, "naive"): rep}), tmp_path / "r")
    agg = json.loads((out / "aggregates.json").read_text())
    assert agg["seasonal"] == []
    assert json.loads((out / "manifest.json").read_text())["notes"] == ["seasonal breakdown is empty"]


def test_grid_from_traces_fsi_only_with_matching_naive():
    times = _hours("2023-04-01T00", 48)
    a = np.linspace(10, 20, 48)
    naive = Trace("m", 7, "naive", times, a, a + 2)
    model = Trace("m", 7, "levelwise_exact", times, a, a + 1)
    grid = grid_from_traces([naive, model])
    assert grid[("m", 7, "levelwise_exact")].fsi == pytest.approx(0.5)
    solo = grid_from_traces([model])
    assert solo[("m", 7, "levelwise_exact")].fsi is None
