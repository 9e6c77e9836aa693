"""Acceptance gate: every criterion at its stated size and tolerance.

Each test prints one pass/fail line (run with ``pytest -s`` to see them
on success; they also appear in failure output).  Criteria 7 and 8 share
one batch of two-stage coupling runs.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import erf
from scipy.stats import kstest

from dgff_glauber import (
    HeightField,
    backward_propagate,
    build_box,
    coalescence_scaling_study,
    covariance_gap_check,
    cutoff_profile_study,
    dirichlet_laplacian,
    eigenbasis,
    greens_matrix,
    lambda_1,
    mean_decay_study,
    representation_check,
    sample_schedule,
    sample_stationary,
    sticky_gaussian_batch,
    survival_experiment,
)
from dgff_glauber.cli import parse_and_dispatch
from dgff_glauber.experiments import sched_with_marks
from dgff_glauber.seeding import rng_for

import scipy.linalg


def _report(num, name, ok, detail, t0):
    status = "PASS" if ok else "FAIL"
    print(f"[ACCEPTANCE {num}] {name}: {status} ({detail}; {time.time() - t0:.1f}s)")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_1_representation_identity():
    t0 = time.time()
    worst = 0.0
    for n in (4, 8):
        box = build_box(n)
        greens = greens_matrix(n)
        for horizon in (50.0, 200.0):
            for seed in range(50):
                master = 1000 * n + int(horizon)
                sched = sample_schedule(box, horizon,
                                        rng_for(master, seed, "schedule"),
                                        with_marks=False)
                marks = rng_for(master, seed, "marks").standard_normal(sched.n_events)
                sched = sched_with_marks(sched, marks)
                h0 = sample_stationary(box, greens, rng_for(master, seed, "init"))
                worst = max(worst, representation_check(h0, sched))
    _report(1, "exact representation identity", worst < 1e-8,
            f"max deviation {worst:.3e} < 1e-8 over 200 runs", t0)


def test_criterion_2_covariance_identity():
    t0 = time.time()
    n = 4
    box = build_box(n)
    greens = greens_matrix(n)
    worst = 0.0
    for seed in range(20):
        sched = sample_schedule(box, 50.0, rng_for(2, seed, "schedule"))
        bundle = backward_propagate(sched, HeightField.constant(box, 0.0),
                                    want_cov=True)
        worst = max(worst, covariance_gap_check(bundle, greens))
    _report(2, "quenched covariance identity", worst < 1e-8,
            f"max entrywise error {worst:.3e} < 1e-8 over 20 schedules", t0)


def test_criterion_3_spectral_suite():
    t0 = time.time()
    worst_resid = worst_gram = worst_green = 0.0
    for n in (4, 8, 16, 32):
        sd = eigenbasis(n)
        L = dirichlet_laplacian(build_box(n), sparse=False)
        worst_resid = max(worst_resid,
                          np.abs(L @ sd.vectors - sd.vectors * sd.lambdas).max())
        gram = sd.vectors.T @ sd.vectors
        worst_gram = max(worst_gram,
                         np.abs(gram - np.eye(gram.shape[0])).max())
        worst_green = max(worst_green, np.abs(
            greens_matrix(n, "solve").matrix - greens_matrix(n, "fourier").matrix
        ).max())
    box3 = build_box(3)
    G3 = greens_matrix(3).matrix
    i = {tuple(s): k for k, s in enumerate(box3.interior)}
    hand = max(
        abs(G3[i[(1, 1)], i[(1, 1)]] - 7 / 6),
        abs(G3[i[(1, 1)], i[(2, 1)]] - 1 / 3),
        abs(G3[i[(1, 1)], i[(2, 2)]] - 1 / 6),
    )
    ok = (worst_resid < 1e-10 and worst_gram < 1e-10
          and worst_green < 1e-8 and hand < 1e-12)
    _report(3, "spectral suite", ok,
            f"residual {worst_resid:.2e}, gram {worst_gram:.2e}, "
            f"green {worst_green:.2e}, hand values {hand:.2e}", t0)


def test_criterion_4_survival_asymptotics():
    t0 = time.time()
    n = 16
    t = 3 * n * n * math.log(n)
    exp = survival_experiment(n, t, replicas=100, rng=rng_for(4, 0, "schedule"))
    # one-site box: exact e^{-t} law
    t2 = 1.0
    exp2 = survival_experiment(2, t2, replicas=3000, rng=rng_for(4, 1, "schedule"))
    p = math.exp(-t2)
    se = math.sqrt(p * (1 - p) / 3000)
    one_site_ok = abs(exp2.mean_survival[0] - p) < 3 * se
    ok = exp.band_fraction >= 0.9 and one_site_ok
    _report(4, "quenched survival asymptotics", ok,
            f"central-region ratio in [0.8, 1.25] on {exp.band_fraction:.0%} "
            f"of 100 schedules (strict per-site: {exp.band_fraction_strict:.0%}); "
            f"n=2 |mean - e^-t| = {abs(exp2.mean_survival[0] - p):.2e} < 3se", t0)


def test_criterion_5_mean_decay_rate():
    t0 = time.time()
    res = mean_decay_study(16, replicas=10_000, seed=5)
    rate_ok = res.relative_rate_error <= 0.05
    # deterministic cross-check at n=12: annealed semigroup via expm
    n = 12
    grid = np.linspace(1.5 * n * n, 3.0 * n * n, 4)
    small = mean_decay_study(n, replicas=600, seed=55, grid=grid)
    L = dirichlet_laplacian(build_box(n), sparse=False)
    ones = np.ones((n - 1) ** 2)
    oracle_ok = all(
        abs(small.mean_totals[k]
            - n * float(np.sum(scipy.linalg.expm(-t * L) @ ones)))
        < 3 * small.se_totals[k]
        for k, t in enumerate(grid)
    )
    _report(5, "mean-decay rate", rate_ok and oracle_ok,
            f"slope {res.slope:.6f} vs -lambda_1 {-res.lambda_1:.6f} "
            f"(rel err {res.relative_rate_error:.2%} <= 5%), "
            f"expm oracle within 3se at n=12: {oracle_ok}", t0)


def test_criterion_6_sticky_coupling_optimality():
    t0 = time.time()
    draws = 1_000_000
    worst_z = 0.0
    worst_p = 1.0
    for k, mu in enumerate((0.01, 0.1, 1.0, 3.0)):
        rng = rng_for(6, k, "marks")
        za, zb, coupled = sticky_gaussian_batch(-mu, mu, draws, rng)
        p = erf(mu / math.sqrt(2.0))
        se = math.sqrt(p * (1 - p) / draws)
        worst_z = max(worst_z, abs((1 - coupled.mean()) - p) / se)
        worst_p = min(worst_p,
                      kstest(za, "norm", args=(-mu, 1.0)).pvalue,
                      kstest(zb, "norm", args=(mu, 1.0)).pvalue)
    ok = worst_z < 3.0 and worst_p > 1e-3
    _report(6, "sticky coupling optimality", ok,
            f"max |rate - erf(mu/sqrt2)| = {worst_z:.2f}se < 3se; "
            f"min marginal KS p-value {worst_p:.2e} > 1e-3", t0)


@pytest.fixture(scope="module")
def scaling_study():
    return coalescence_scaling_study([8, 16, 32], replicas=200, seed=8)


def test_criterion_7_monotonicity_and_supermartingale(scaling_study):
    t0 = time.time()
    neg = sum(r.neg_violations for r in scaling_study.rows)
    drift = scaling_study.drift
    drift_ok = (drift["identity"].mean <= 3 * drift["identity"].se
                and drift["sticky"].mean <= 3 * drift["sticky"].se)
    _report(7, "monotonicity and supermartingale", neg == 0 and drift_ok,
            f"pointwise negativity violations: {neg}; identity drift "
            f"{drift['identity'].mean:.2e} (se {drift['identity'].se:.2e}), "
            f"sticky drift {drift['sticky'].mean:.2e} "
            f"(se {drift['sticky'].se:.2e})", t0)


def test_criterion_8_coalescence_scaling(scaling_study):
    t0 = time.time()
    rows = scaling_study.rows
    norm = scaling_study.normalized()
    ref = scaling_study.reference_constant  # 2 * (2/pi^2), symmetric start
    all_coalesced = all(r.coalesced == r.replicas for r in rows)
    decreasing = bool(np.all(np.diff(norm) < 0))
    bracket = ref / 2 <= norm[-1] <= ref * 2
    ok = all_coalesced and decreasing and bracket
    _report(8, "coalescence-time scaling", ok,
            f"normalized medians {np.round(norm, 4).tolist()} decreasing, "
            f"n=32 value {norm[-1]:.3f} within x2 of {ref:.3f}", t0)


def test_criterion_9_cutoff_profile_lower_bound():
    t0 = time.time()
    study = cutoff_profile_study(32, 32.0, [-1, -0.5, 0, 0.5, 1, 2, 3],
                                 replicas=500, seed=9)
    est = study.estimates()
    pred = study.predictions()
    ses = np.array([p.se for p in study.points])
    worst = float(np.abs(est - pred).max())
    monotone = bool(np.all(np.diff(est) <= ses[:-1] + ses[1:]))
    ok = worst < 0.1 and monotone
    _report(9, "cutoff-profile lower bound", ok,
            f"max |estimate - prediction| = {worst:.4f} < 0.1 over s grid; "
            f"monotone non-increasing: {monotone}", t0)


def test_criterion_10_determinism(tmp_path):
    t0 = time.time()
    commands = [
        ["spectral", "--n", "8"],
        ["btrw-verify", "--n", "5", "--t", "40", "--seeds", "3"],
        ["decay", "--n", "6", "--replicas", "30"],
        ["couple", "--n", "8", "--switch", "volume", "--replicas", "2"],
        ["profile", "--n", "8", "--replicas", "10", "--c0", "1",
         "--s-grid", "0,1"],
    ]
    identical = True
    for k, argv in enumerate(commands):
        a, b = tmp_path / f"a{k}", tmp_path / f"b{k}"
        assert parse_and_dispatch(argv + ["--seed", "10", "--out-dir", str(a)]) == 0
        assert parse_and_dispatch(argv + ["--seed", "10", "--out-dir", str(b)]) == 0
        for csv in sorted(p.name for p in a.glob("*.csv")):
            identical &= (a / csv).read_bytes() == (b / csv).read_bytes()
    _report(10, "manifest determinism", identical,
            f"{len(commands)} commands re-run byte-identically", t0)
