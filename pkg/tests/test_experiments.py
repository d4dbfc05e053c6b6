import csv
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annealbnn.config import SynthSpec, config_hash, load_config
from annealbnn.errors import DivergenceError
from annealbnn.experiments import (
    TRUE_VARIABLES,
    fit_metrics,
    gen_synthetic,
    oracle_intervals,
    replicate_seed,
    run_replicate,
    run_replicates,
    selection_metrics,
    splitmix64,
    summarize,
    truth_fn,
    write_coverage_report,
    write_metrics_report,
)
from annealbnn.network import Dataset
from annealbnn.samplers import PRNG_ALGORITHM


def small_config(*extra):
    return load_config(text="preset: sim-small\n",
                       overrides=["data.n_train=200", "data.n_test=150", *extra])


def oracle_fit(run, train):
    return truth_fn


# ---------------------------------------------------------------- generator


def test_truth_formula_cases():
    x = np.zeros((2, 7))
    x[0, 4] = 1.0
    x[1, :2] = 1.0
    assert np.allclose(truth_fn(x), [2.0, 2.5], rtol=0, atol=1e-15)


def test_truth_formula_general_point():
    x = np.array([[0.3, -1.2, 0.7, 2.0, -0.4, 9.0]])
    want = 5 * -1.2 / (1 + 0.09) + 5 * np.sin(1.4) + 2 * -0.4
    assert truth_fn(x)[0] == pytest.approx(want, rel=1e-14)


def test_generator_shapes_and_noise():
    train, test, f = gen_synthetic(SynthSpec(n_train=300, n_test=120, p=9, noise_sd=0.5, seed=4))
    assert train.inputs.shape == (300, 9) and test.inputs.shape == (120, 9)
    resid = train.targets - f(train.inputs)
    assert abs(resid.std() - 0.5) < 0.07


def test_generator_zero_noise_is_exact():
    train, _, f = gen_synthetic(SynthSpec(n_train=50, n_test=5, p=6, noise_sd=1e-300, seed=1))
    assert np.allclose(train.targets, f(train.inputs), rtol=0, atol=1e-12)


def test_generator_moments():
    train, _, _ = gen_synthetic(SynthSpec(n_train=100_000, n_test=1, p=6, seed=11))
    X = train.inputs
    assert np.all(np.abs(X.var(axis=0) - 1.0) < 0.02)
    corr = np.corrcoef(X, rowvar=False)
    off = corr[~np.eye(6, dtype=bool)]
    assert np.all(np.abs(off - 0.5) < 0.02)


def test_generator_deterministic_and_seed_sensitive():
    a, _, _ = gen_synthetic(SynthSpec(n_train=20, n_test=5, p=5, seed=3))
    b, _, _ = gen_synthetic(SynthSpec(n_train=20, n_test=5, p=5, seed=3))
    c, _, _ = gen_synthetic(SynthSpec(n_train=20, n_test=5, p=5, seed=4))
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.targets, b.targets)
    assert not np.array_equal(a.inputs, c.inputs)


def test_train_and_test_are_distinct_draws():
    train, test, _ = gen_synthetic(SynthSpec(n_train=10, n_test=10, p=5, seed=0))
    assert not np.array_equal(train.inputs, test.inputs)


# ---------------------------------------------------------------- seeds


def test_splitmix_reference_values():
    # first outputs of the SplitMix64 stream seeded with 0
    state, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_replicate_seed_is_xor():
    assert replicate_seed(12345, 3) == 12345 ^ splitmix64(3)
    assert len({replicate_seed(0, i) for i in range(1000)}) == 1000


# ---------------------------------------------------------------- selection metrics


def test_selection_exact_recovery():
    rates = selection_metrics([set(range(5))] * 4, TRUE_VARIABLES)
    assert (rates.fsr, rates.nsr, rates.fsr_defined) == (0.0, 0.0, True)


def test_selection_one_false_positive():
    rates = selection_metrics([{0, 1, 2, 3, 4, 5}], {0, 1, 2, 3, 4})
    assert rates.fsr == pytest.approx(1 / 6, abs=1e-15)
    assert rates.nsr == 0.0


def test_selection_pooled_not_mean_of_ratios():
    truth = {0, 1, 2, 3, 4}
    sets = [{0, 9}, set(range(5)) | set(range(10, 18))]
    rates = selection_metrics(sets, truth)
    # pooled: (1 + 8) / (2 + 13); mean of per-replicate ratios would be (1/2 + 8/13) / 2
    assert rates.fsr == pytest.approx(9 / 15, abs=1e-15)
    assert rates.fsr != pytest.approx((1 / 2 + 8 / 13) / 2)
    assert rates.nsr == pytest.approx(4 / 10, abs=1e-15)


def test_selection_all_empty_flags_undefined():
    rates = selection_metrics([set(), set()], TRUE_VARIABLES)
    assert rates.fsr == 0.0 and not rates.fsr_defined
    assert rates.nsr == 1.0


def test_selection_rejects_bad_input():
    with pytest.raises(ValueError):
        selection_metrics([{1}], set())
    with pytest.raises(ValueError):
        selection_metrics([], TRUE_VARIABLES)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sets(st.integers(0, 12)), min_size=1, max_size=6),
       st.sets(st.integers(0, 12), min_size=1))
def test_selection_matches_set_arithmetic(sets, truth):
    rates = selection_metrics(sets, truth)
    n_sel = sum(len(s) for s in sets)
    false = sum(len(s - truth) for s in sets)
    missed = sum(len(truth - s) for s in sets)
    assert rates.fsr == (false / n_sel if n_sel else 0.0)
    assert rates.nsr == missed / (len(sets) * len(truth))
    assert 0.0 <= rates.fsr <= 1.0 and 0.0 <= rates.nsr <= 1.0


# ---------------------------------------------------------------- fit metrics


def test_fit_metrics_perfect_predictor():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 5))
    data = Dataset(X, truth_fn(X))
    assert fit_metrics(truth_fn, data, data) == (0.0, 0.0)


def test_fit_metrics_zero_predictor_is_second_moment():
    rng = np.random.default_rng(1)
    train = Dataset(rng.normal(size=(40, 5)), rng.normal(size=40))
    test = Dataset(rng.normal(size=(25, 5)), rng.normal(size=25))
    msfe, mspe = fit_metrics(lambda X: np.zeros(len(X)), train, test)
    assert msfe == pytest.approx(np.mean(train.targets ** 2), rel=1e-14)
    assert mspe == pytest.approx(np.mean(test.targets ** 2), rel=1e-14)


def test_oracle_mspe_is_noise_floor():
    train, test, f = gen_synthetic(SynthSpec(n_train=10, n_test=1000, p=8, noise_sd=1.0, seed=5))
    _, mspe = fit_metrics(f, train, test)
    assert abs(mspe - 1.0) < 0.1


# ---------------------------------------------------------------- replicate harness


def test_single_replicate_report_equals_run():
    cfg = small_config()
    one = run_replicate(cfg, 0, oracle_fit, oracle_intervals(cfg.data.noise_sd))
    report = run_replicates(cfg, replicates=1, fit_fn=oracle_fit,
                            interval_fn=oracle_intervals(cfg.data.noise_sd))
    assert report["mspe"]["mean"] == one["mspe"]
    assert report["coverage"]["mean"] == one["coverage"]
    assert report["mspe"]["sd"] == 0.0


def test_oracle_coverage_near_nominal():
    cfg = load_config(text="preset: sim-small\n", overrides=["data.n_train=10", "data.n_test=4000"])
    report = run_replicates(cfg, replicates=1, fit_fn=oracle_fit,
                            interval_fn=oracle_intervals(cfg.data.noise_sd))
    assert abs(report["coverage"]["mean"] - 0.95) < 0.015


def test_replicates_are_deterministic():
    cfg = small_config()
    kw = dict(replicates=3, fit_fn=oracle_fit, interval_fn=oracle_intervals(1.0))
    assert run_replicates(cfg, **kw) == run_replicates(cfg, **kw)


def test_replicate_order_does_not_matter():
    cfg = small_config()
    build = oracle_intervals(cfg.data.noise_sd)
    order = list(range(4))
    random.Random(7).shuffle(order)
    shuffled = [run_replicate(cfg, i, oracle_fit, build) for i in order]
    shuffled.sort(key=lambda r: r["replicate"])
    assert summarize(cfg, shuffled) == run_replicates(cfg, replicates=4, fit_fn=oracle_fit, interval_fn=build)


def test_replicates_use_distinct_data():
    cfg = small_config()
    report = run_replicates(cfg, replicates=2, fit_fn=oracle_fit, interval_fn=oracle_intervals(1.0))
    a, b = report["results"]
    assert a["data_seed"] != b["data_seed"] and a["mspe"] != b["mspe"]


def test_failed_replicate_is_recorded():
    cfg = small_config()

    def flaky(run, train):
        if run.seed == replicate_seed(cfg.run.seed, 1):
            raise DivergenceError(10)
        return truth_fn

    report = run_replicates(cfg, replicates=3, fit_fn=flaky, interval_fn=oracle_intervals(1.0))
    assert [f["replicate"] for f in report["failures"]] == [1]
    assert report["mspe"]["count"] == 2


def test_reports_row_count_and_header(tmp_path):
    cfg = small_config()
    report = run_replicates(cfg, replicates=3, fit_fn=oracle_fit, interval_fn=oracle_intervals(1.0))
    cov_path, met_path = tmp_path / "coverage.csv", tmp_path / "metrics.csv"
    write_coverage_report(cov_path, report)
    write_metrics_report(met_path, report)
    for path in (cov_path, met_path):
        text = path.read_text()
        assert f"# config_hash: {config_hash(cfg)}" in text
        assert f"# prng: {PRNG_ALGORITHM}" in text
    lines = cov_path.read_text().splitlines()
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))
    assert rows[0][0] == "replicate"
    assert len(rows) - 1 == cfg.data.n_test * 3
    assert any("reference coverage study used 100" in l for l in lines)
    met = [r for r in csv.reader(l for l in met_path.read_text().splitlines() if not l.startswith("#"))]
    assert met[0][:5] == ["replicate", "selected_size", "selected_size_sd", "fsr", "nsr"]
    assert [r[0] for r in met[1:]] == ["0", "1", "2", "all"]


def test_reports_are_byte_identical(tmp_path):
    cfg = small_config()
    kw = dict(replicates=2, fit_fn=oracle_fit, interval_fn=oracle_intervals(1.0))
    for name in ("a", "b"):
        report = run_replicates(cfg, **kw)
        write_metrics_report(tmp_path / f"{name}_m.csv", report)
        write_coverage_report(tmp_path / f"{name}_c.csv", report)
    assert (tmp_path / "a_m.csv").read_bytes() == (tmp_path / "b_m.csv").read_bytes()
    assert (tmp_path / "a_c.csv").read_bytes() == (tmp_path / "b_c.csv").read_bytes()


def test_replicates_must_be_positive():
    with pytest.raises(ValueError):
        run_replicates(small_config(), replicates=0, fit_fn=oracle_fit)
