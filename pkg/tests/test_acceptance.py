"""Acceptance criteria.

Each test checks one criterion at its stated tolerance and records a
PASS/FAIL line that is printed in the pytest terminal summary.
"""

import csv
import math
import re

import numpy as np
import pytest

from cqrkit import cli, conformal, data, net, scoring
from cqrkit.stats import mann_whitney

from conftest import random_network
from test_conformal import brute_force_qhat
from test_net import away_from_kinks, finite_difference_grads, max_relative_error
from test_stats import brute_force_u

N_CAL = 1000
DRAWS = 200
N_TEST = 1000


def coverage_draws(task, quantile_model, alpha, draws=DRAWS, seed=0):
    """Per-draw raw and conformal coverage of the (1 - alpha) pair over fresh i.i.d. draws."""
    raw, conf = np.empty(draws), np.empty(draws)
    for r in range(draws):
        cal = task.sample(N_CAL, seed=(seed, r, 0))
        test = task.sample(N_TEST, seed=(seed, r, 1))
        table = conformal.build_table(quantile_model(cal, (seed, r, 2)), cal.targets)
        est = quantile_model(test, (seed, r, 3))
        i = table.pair_for_alpha(alpha)
        raw[r] = scoring.picp(est[:, [table.lower[i], table.upper[i]]], test.targets)
        lo, hi = conformal.conformalize(est, table).intervals()
        conf[r] = scoring.picp(np.c_[lo[:, i], hi[:, i]], test.targets)
    return raw, conf


def within_band(cov, alpha, n=N_CAL):
    lo, hi = conformal.coverage_bound(n, alpha)
    se = cov.std(ddof=1) / math.sqrt(cov.size)
    return lo - 3 * se < cov.mean() <= hi + 3 * se, se


@pytest.fixture(scope="module")
def network_model(trained):
    network, scaler = trained

    def model(ds, seed):
        return net.mc_predict(network, data.apply_scaler(scaler, ds).features,
                              seed=np.random.SeedSequence(seed)).values
    return model


def test_1_finite_sample_coverage(synthetic_task, network_model, acceptance_report):
    _, conf = coverage_draws(synthetic_task, network_model, alpha=0.1, seed=1)
    ok, se = within_band(conf, 0.1)
    acceptance_report(1, ok, f"mean 90% coverage {conf.mean():.5f} (SE {se:.5f}) vs "
                             f"(0.9, {0.9 + 1 / 1001:.5f}] +/- 3 SE over {DRAWS} draws")
    assert ok


def test_2_conformal_repair(synthetic_task, acceptance_report):
    z = data.norm_ppf(net.QuantileGrid().levels[1:-1])
    z = np.r_[z[0] - 10, z, z[-1] + 10]

    def narrow(ds, seed):
        x = ds.features[:, 0]
        # true quantile function with the spread halved
        return synthetic_task.mu(x)[:, None] + 0.5 * synthetic_task.sigma(x)[:, None] * z

    details, ok = [], True
    for alpha in (0.2, 0.1):
        raw, conf = coverage_draws(synthetic_task, narrow, alpha, seed=2)
        raw_se = raw.std(ddof=1) / math.sqrt(raw.size)
        under = raw.mean() + 3 * raw_se < 1 - alpha
        band, se = within_band(conf, alpha)
        ok &= under and band
        details.append(f"{1 - alpha:.0%}: raw {raw.mean():.4f}, conformal {conf.mean():.4f} "
                       f"(SE {se:.5f})")
    acceptance_report(2, ok, "; ".join(details))
    assert ok


def test_3_oracle_equivalences(acceptance_report):
    rng = np.random.default_rng(3)
    q_mismatch = 0
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        if rng.random() < 0.5:
            scores = rng.integers(-5, 6, n).astype(float).tolist()  # with ties
        else:
            scores = rng.normal(size=n).tolist()
        alpha = float(rng.uniform(0.001, 0.999))
        q_mismatch += conformal.calibration_constant(scores, alpha) != brute_force_qhat(scores, alpha)

    u_mismatch = 0
    cases = 0
    for n1 in range(1, 13):
        for n2 in range(1, 13):
            for _ in range(8):
                a = rng.integers(0, 8, n1).tolist()
                b = rng.integers(0, 8, n2).tolist()
                u_mismatch += mann_whitney(a, b).u_statistic != brute_force_u(a, b)
                cases += 1
    ok = q_mismatch == 0 and u_mismatch == 0
    acceptance_report(3, ok, f"qhat mismatches {q_mismatch}/1000, U mismatches "
                             f"{u_mismatch}/{cases}")
    assert ok


def test_4_gradient_check(acceptance_report):
    rng = np.random.default_rng(4)
    worst = 0.0
    points = 0
    while points < 100:
        network = random_network(rng, input_dim=int(rng.integers(1, 4)), hidden=6)
        X = rng.normal(size=(2, network.input_dim))
        y = rng.normal(size=2)
        mask = net.dropout_mask((2, 6), 0.2, rng) if rng.random() < 0.5 else None
        if not away_from_kinks(network, X, y, mask):
            continue
        _, analytic = net.loss_and_grad(network, X, y, mask)
        worst = max(worst, max_relative_error(analytic, finite_difference_grads(network, X, y, mask)))
        points += 1
    ok = worst < 1e-5
    acceptance_report(4, ok, f"max relative gradient error {worst:.2e} over 100 points (< 1e-5)")
    assert ok


def test_5_quantile_recovery(synthetic_task, trained, acceptance_report):
    network, scaler = trained
    probes = (np.arange(50) + 0.5) / 50
    est = net.mc_predict(network, (probes[:, None] - scaler.mean) / scaler.std, seed=5).values
    rms = {}
    for k, tau in ((10, 0.1), (50, 0.5), (90, 0.9)):
        err = est[:, k] - synthetic_task.true_quantile(probes, tau)
        rms[tau] = float(np.sqrt(np.mean(err ** 2)))
    ok = all(v < 0.3 for v in rms.values())
    acceptance_report(5, ok, "RMS " + ", ".join(f"q{t}: {v:.3f}" for t, v in rms.items())
                      + " (< 0.3)")
    assert ok


def test_6_score_tail(synthetic_task, network_model, acceptance_report):
    cal = synthetic_task.sample(N_CAL, seed=61)
    test = synthetic_task.sample(20_000, seed=62)
    table = conformal.build_table(network_model(cal, 63), cal.targets)
    cq = conformal.conformalize(network_model(test, 64), table)
    scores = scoring.deviation_score(cq, test.targets)
    frac = float(np.mean(np.abs(scores) == 50))
    bound = table.alpha.min() + 1 / (N_CAL + 1)
    se = math.sqrt(bound * (1 - bound) / scores.size)
    ok = frac <= bound + 3 * se
    acceptance_report(6, ok, f"P(|score| = 50) = {frac:.4f} <= {bound:.4f} + 3 SE ({se:.4f})")
    assert ok


def test_7_reproducibility(tmp_path, acceptance_report):
    assert cli.main(["gen", "--n", "3000", "--seed", "7", "--out", str(tmp_path / "d.csv")]) == 0
    tables = []
    for run in ("a", "b"):
        model = tmp_path / f"m_{run}.json"
        pred = tmp_path / f"p_{run}.csv"
        assert cli.main(["train", "--data", str(tmp_path / "d.csv"), "--target", "y",
                         "--seed", "7", "--out", str(model)]) == 0
        assert cli.main(["predict", "--model", str(model), "--data", str(tmp_path / "d.csv"),
                         "--mc-seed", "7", "--out", str(pred)]) == 0
        tables.append(pred.read_bytes())
    identical = tables[0] == tables[1]

    report = tmp_path / "cv.txt"
    assert cli.main(["evaluate", "--data", str(tmp_path / "d.csv"), "--target", "y",
                     "--kfold", "10", "--seed", "7", "--out", str(report)]) == 0
    summary = dict(r for r in csv.reader(report.read_text().split("\n\n")[1].splitlines()) if r)
    formatted = re.fullmatch(r"\d+\.\d{2} \(\d+\.\d{2}\)", summary["mad_mean_sd"]) is not None
    folds = summary["folds"] == "10"
    ok = identical and formatted and folds
    acceptance_report(7, ok, f"prediction tables identical: {identical}; 10-fold MAD "
                             f"{summary['mad_mean_sd']!r}")
    assert ok


def test_8_invariance_suite(acceptance_report):
    rng = np.random.default_rng(8)
    failures = {"translation": 0, "nesting": 0, "monotone": 0, "swap": 0}
    for _ in range(1000):
        n = int(rng.integers(5, 60))
        v = np.sort(rng.normal(size=(n, 101)) * rng.uniform(0.1, 3), axis=1)
        y = rng.normal(size=n) * rng.uniform(0.1, 3)
        test = np.sort(rng.normal(size=101))
        c = float(rng.uniform(-100, 100))
        base = conformal.conformalize(test, conformal.build_table(v, y)).values
        shifted = conformal.conformalize(test + c, conformal.build_table(v + c, y + c)).values
        fin = np.isfinite(base)
        failures["translation"] += not (
            np.array_equal(fin, np.isfinite(shifted))
            and np.allclose(shifted[fin], base[fin] + c, rtol=0, atol=1e-9 * (1 + abs(c))))

        table = conformal.build_table(v, y)
        lo, hi = conformal.conformalize(test, table).intervals()
        failures["nesting"] += not (np.all(lo[:-1] <= lo[1:]) and np.all(hi[:-1] >= hi[1:]))

        a = rng.integers(-10, 10, int(rng.integers(1, 30)))
        b = rng.integers(-10, 10, int(rng.integers(1, 30)))
        f = lambda x: np.arctan(x / 7.0) * 5 + x ** 3  # noqa: E731  strictly increasing
        failures["monotone"] += mann_whitney(a, b) != mann_whitney(f(a), f(b))
        ab, ba = mann_whitney(a, b), mann_whitney(b, a)
        failures["swap"] += not (ab.u_statistic + ba.u_statistic == a.size * b.size
                                 and ab.p_value == ba.p_value)
    ok = not any(failures.values())
    acceptance_report(8, ok, "failures over 1000 cases each: " +
                      ", ".join(f"{k} {v}" for k, v in failures.items()))
    assert ok
