import time

import numpy as np
import pytest

from relayfl.bench import (CSV_HEADER, ExperimentSpec, ResultTable, ecdf, emit_plotdata,
                           run_experiment, wilson_interval)
from relayfl.bench.plotdata import build_series
from relayfl.bench.schemes import (PhyTrial, evaluate_scheme, fixed_threshold,
                                   fixed_threshold_scheme, random_relay_scheme, scheme_grouping)
from relayfl.channel import SimConfig
from relayfl.errors import ConfigError
from relayfl.grouping import classify

from .helpers import rates_from_matrix

SMALL = SimConfig(n_sns=12, seed=5)


def _spec(kind, **kw):
    return ExperimentSpec(kind=kind, **kw)


# -- spec and table ----------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ConfigError):
        _spec("nope")
    with pytest.raises(ConfigError):
        _spec("energy_cdf", schemes=("magic",))
    with pytest.raises(ConfigError):
        _spec("energy_cdf", trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict({"kind": "energy_cdf", "bogus": 1})


@pytest.mark.parametrize("kind,sweep", [("outage_vs_pmax", (10.0, 20.0)),
                                        ("energy_vs_latency", (4.0, 8.0)),
                                        ("energy_vs_n", (5.0, 8.0)),
                                        ("comp_vs_comm", (1e4,)),
                                        ("icsi_cdf", (0.0, 2.0)),
                                        ("participation_cdf", (12.0,))])
def test_row_count_matches_cells(kind, sweep):
    spec = _spec(kind, sweep=sweep, trials=3, overrides={"n_sns": 8})
    table = run_experiment(spec, SMALL)
    assert len(table) == 3 * len(spec.schemes) * len(sweep) * len(spec.metrics)
    assert table.sweep_values() == sorted(sweep)


def test_deterministic_and_thread_independent():
    spec = _spec("energy_cdf", trials=4, overrides={"n_sns": 10})
    a = run_experiment(spec, SMALL)
    b = run_experiment(spec, SMALL)
    c = run_experiment(spec, SMALL, threads=3)
    assert a.rows == b.rows == c.rows


def test_scheme_isolation():
    """Adding schemes does not change another scheme's rows."""
    alone = run_experiment(_spec("outage_vs_pmax", sweep=(16.0,), trials=5,
                                 schemes=("proposed",)), SMALL)
    mixed = run_experiment(_spec("outage_vs_pmax", sweep=(16.0,), trials=5,
                                 schemes=("only_1hop", "proposed")), SMALL)
    assert [r for r in mixed if r.scheme == "proposed"] == list(alone)


def test_outage_flag_definition():
    cfg = SMALL.replace(p_max_dbm=8.0, pathloss_coeffs="calibrated")
    for t in range(10):
        phy = PhyTrial.draw(cfg, t)
        for name in ("proposed", "only_1hop", "fixed_th"):
            out = evaluate_scheme(name, phy, energy=False)
            assert out.outage == (out.t_ul_pmax_s > cfg.t_eff_s)


def test_csv_roundtrip_and_header(tmp_path):
    path = tmp_path / "t.csv"
    table = run_experiment(_spec("energy_cdf", trials=2, overrides={"n_sns": 6},
                                 output_path=str(path)), SMALL)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert ResultTable.from_csv(path).rows == table.rows


def test_smoke_single_trial_is_fast(tmp_path):
    t0 = time.perf_counter()
    path = tmp_path / "smoke.csv"
    run_experiment(_spec("energy_cdf", trials=1, output_path=str(path)), SimConfig())
    assert time.perf_counter() - t0 < 5.0
    header, *rows = path.read_text().splitlines()
    assert header == "experiment,scheme,sweep_value,trial,metric,value"
    assert all(len(r.split(",")) == 6 for r in rows) and rows


# -- baseline schemes ----------------------------------------------------------------

def test_fixed_threshold_cases():
    # equal gains: nobody is strictly above the mean, everyone goes direct
    flat = rates_from_matrix([1.0, 1.0, 1.0], np.ones((3, 3)) - np.eye(3), gain_direct=[2, 2, 2])
    g = fixed_threshold_scheme(flat)
    assert fixed_threshold(flat) == 2.0 and g.relays == frozenset() and len(g.one_hop) == 3
    # one strong SN with a fast SN link becomes the relay of a weak neighbour
    r_sn = np.array([[0, 1, 1], [8.0, 0, 1], [0.01, 0.01, 0]])
    rates = rates_from_matrix([4.0, 0.5, 1.0], r_sn, gain_direct=[10.0, 1.0, 1.0])
    g = fixed_threshold_scheme(rates)
    assert g.relays == frozenset({0}) and g.two_hop == {1: 0} and g.one_hop == frozenset({2})
    # identical to classify at the mean gain
    assert g == classify(4.0, rates)


def test_random_relay_single_relay_equals_best(rng):
    n = 6
    r_sn = rng.uniform(0.1, 5, (n, n))
    np.fill_diagonal(r_sn, 0)
    gains = np.array([50.0, 1, 1, 1, 1, 1])
    rates = rates_from_matrix(rng.uniform(0.1, 5, n), r_sn, gain_direct=gains)
    best = fixed_threshold_scheme(rates)
    assert best.relays == frozenset({0})
    for seed in range(5):
        assert random_relay_scheme(rates, np.random.default_rng(seed)) == best


def test_random_relay_delay_dominance_and_determinism(rng):
    n = 10
    r_sn = rng.uniform(0.1, 5, (n, n))
    np.fill_diagonal(r_sn, 0)
    gains = np.array([20.0, 18, 15, 1, 1, 1, 1, 1, 1, 1])
    rates = rates_from_matrix(rng.uniform(0.1, 5, n), r_sn, gain_direct=gains)
    best = fixed_threshold_scheme(rates)
    gen = np.random.default_rng(0)
    mean = np.zeros(n)
    for _ in range(1000):
        g = random_relay_scheme(rates, gen)
        for k in range(n):
            assert g.delay_table[k] >= best.delay_table[k] - 1e-12
            mean[k] += g.delay_table[k] / 1000
    assert np.all(mean >= np.array([best.delay_table[k] for k in range(n)]) - 1e-12)
    a = random_relay_scheme(rates, np.random.default_rng(9))
    b = random_relay_scheme(rates, np.random.default_rng(9))
    assert a == b
    phy = PhyTrial.draw(SMALL, 3)
    assert scheme_grouping("random_relay", phy) == scheme_grouping("random_relay", phy)


# -- plot data -----------------------------------------------------------------------

def test_ecdf_and_wilson():
    x, y = ecdf([3.0, 1.0, np.nan, 2.0])
    assert list(x) == [1.0, 2.0, 3.0] and y[-1] == 1.0
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_cdf_series_end_at_one():
    table = run_experiment(_spec("energy_cdf", trials=5, overrides={"n_sns": 8}), SMALL)
    for s in build_series(table, "energy_cdf"):
        assert s.y[-1] == 1.0 and np.all(np.diff(s.x) >= 0)


def test_outage_curve_nonincreasing_in_pmax():
    spec = _spec("outage_vs_pmax", sweep=(4.0, 8.0, 12.0, 16.0, 20.0), trials=100,
                 schemes=("proposed",), overrides={"n_sns": 30})
    table = run_experiment(spec, SMALL)
    (s,) = build_series(table, "outage_vs_pmax")
    assert np.all(np.diff(s.y) <= 0) and s.y[0] > s.y[-1]
    assert np.all(s.lo <= s.y) and np.all(s.y <= s.hi)


def test_emit_is_byte_identical_on_rerun(tmp_path):
    table = run_experiment(_spec("energy_vs_latency", sweep=(4.0, 8.0), trials=2,
                                 overrides={"n_sns": 6}), SMALL)
    files = emit_plotdata(table, "energy_vs_latency", tmp_path)
    first = {p: p.read_bytes() for p in files}
    emit_plotdata(table, "energy_vs_latency", tmp_path)
    assert all(p.read_bytes() == b for p, b in first.items())
    assert any(str(p).endswith(".svg") for p in first)
    assert first[next(p for p in first if str(p).endswith(".svg"))].startswith(b"<svg")


def test_emit_rejects_empty_table(tmp_path):
    with pytest.raises(ValueError):
        emit_plotdata(ResultTable(), "energy_cdf", tmp_path)
