import math

import numpy as np
import pytest
from scipy.stats import chisquare

from dgff_glauber import (
    HeightField,
    backward_propagate,
    build_box,
    covariance_gap_check,
    greens_matrix,
    heat_flow,
    lambda_1,
    quenched_covariance,
    quenched_mean,
    representation_check,
    run_forward,
    sample_btrw,
    sample_schedule,
    survival_experiment,
)
from dgff_glauber.experiments import sched_with_marks
from dgff_glauber.seeding import rng_for


def _manual_schedule(box, times, sites, marks, horizon):
    sched = sample_schedule(box, 0.0, np.random.default_rng(0))
    sched.times = np.asarray(times, dtype=np.float64)
    sched.sites = np.asarray(sites, dtype=np.int64)
    sched.marks = None if marks is None else np.asarray(marks, dtype=np.float64)
    sched.horizon = horizon
    return sched


def test_walk_stays_put_without_events(box8, rng):
    sched = sample_schedule(box8, 10.0, rng)
    x = (4, 4)
    quiet = _manual_schedule(box8, [], [], [], 10.0)
    traj = sample_btrw(quiet, x, 10.0, rng)
    assert traj.n_jumps == 0
    assert traj.terminal == box8.index_of(x)
    assert not traj.absorbed
    del sched


def test_walk_on_smallest_box_absorbs_at_first_jump(rng):
    box = build_box(2)
    sched = sample_schedule(box, 50.0, rng)
    traj = sample_btrw(sched, (1, 1), 50.0, rng)
    if sched.n_events:
        assert traj.n_jumps == 1
        assert traj.absorbed
    assert np.all(np.diff(traj.jump_times) < 0) if traj.n_jumps > 1 else True


def test_walk_jump_count_is_poisson(rng):
    # averaged over schedules, the jump count by time t is Pois(t);
    # use the full lattice (no absorption) window on a box large enough
    # that walks from the center cannot reach the boundary
    t = 9.0
    n = 24
    box = build_box(n)
    pairs = 3000
    counts = np.empty(pairs)
    for k in range(pairs):
        sched = sample_schedule(box, t, rng, with_marks=False)
        counts[k] = sample_btrw(sched, (n // 2, n // 2), t, rng).n_jumps
    se_mean = math.sqrt(t / pairs)
    assert abs(counts.mean() - t) < 3 * se_mean
    se_var = math.sqrt((2 * t * t + t) / pairs)
    assert abs(counts.var(ddof=1) - t) < 4 * se_var


def test_walk_jumps_are_neighbor_moves(box8, rng):
    sched = sample_schedule(box8, 40.0, rng)
    traj = sample_btrw(sched, (3, 3), 40.0, rng)
    prev = box8.index_of((3, 3))
    for site in traj.path_sites:
        assert site in box8.nbr[prev] if prev < box8.n_interior else True
        prev = site


def test_backward_before_first_event_is_identity(box4):
    sched = _manual_schedule(box4, [5.0], [0], [1.0], 10.0)
    h0 = HeightField(box4, np.arange(box4.n_interior, dtype=float))
    bundle = backward_propagate(sched, h0, t=4.0)
    assert np.array_equal(bundle.interior_kernel(), np.eye(box4.n_interior))
    assert np.array_equal(quenched_mean(bundle), h0.values)
    assert np.all(bundle.mark_sum == 0.0)


def test_backward_single_event(box4):
    v = box4.index_of((2, 2))
    z = 0.7
    sched = _manual_schedule(box4, [1.0], [v], [z], 2.0)
    h0 = HeightField.constant(box4, 1.0)
    bundle = backward_propagate(sched, h0, want_cov=True)
    H = bundle.heat_kernel
    for x in range(box4.n_interior):
        if x == v:
            expected = np.zeros(box4.n_padded)
            expected[box4.nbr[v]] = 0.25
            assert np.array_equal(H[x], expected)
        else:
            assert H[x, x] == 1.0
    cov = quenched_covariance(bundle)
    assert cov[v, v] == 1.0
    assert cov.sum() == 1.0
    assert bundle.mark_sum[v] == z
    assert np.all(bundle.mark_sum[np.arange(box4.n_interior) != v] == 0.0)


def test_backward_row_sums(box8, rng):
    sched = sample_schedule(box8, 100.0, rng)
    bundle = backward_propagate(sched, HeightField.constant(box8, 0.0))
    assert bundle.row_sum_error() < 1e-12


def test_backward_no_events_zero_covariance(box4):
    sched = _manual_schedule(box4, [], [], [], 1.0)
    bundle = backward_propagate(sched, HeightField.constant(box4, 0.0), want_cov=True)
    assert np.all(quenched_covariance(bundle) == 0.0)


def test_quenched_covariance_monte_carlo(rng):
    # fixed schedule, fresh Gaussian marks each replica: the empirical
    # covariance of the field must match A_t A_t^T entrywise
    n = 6
    box = build_box(n)
    t = 200.0
    sched = sample_schedule(box, t, rng, with_marks=False)
    h0 = HeightField.constant(box, 2.0)
    bundle = backward_propagate(
        sched_with_marks(sched, np.zeros(sched.n_events)), h0, want_cov=True)
    cov = quenched_covariance(bundle)
    replicas = 20_000
    finals = np.empty((replicas, box.n_interior))
    for r in range(replicas):
        marks = rng.standard_normal(sched.n_events)
        finals[r] = run_forward(h0, sched_with_marks(sched, marks)).final.values
    emp = np.cov(finals.T)
    dia = np.diag(cov)
    se = np.sqrt((np.outer(dia, dia) + cov**2) / replicas)
    assert np.all(np.abs(emp - cov) < 5 * se)


def test_covariance_gap_identity(rng):
    n = 4
    greens = greens_matrix(n)
    box = build_box(n)
    worst = 0.0
    for _ in range(20):
        sched = sample_schedule(box, 50.0, rng)
        bundle = backward_propagate(sched, HeightField.constant(box, 0.0),
                                    want_cov=True)
        worst = max(worst, covariance_gap_check(bundle, greens))
    assert worst < 1e-8


def test_covariance_gap_no_events(box4):
    greens = greens_matrix(4)
    sched = _manual_schedule(box4, [], [], [], 1.0)
    bundle = backward_propagate(sched, HeightField.constant(box4, 0.0), want_cov=True)
    assert covariance_gap_check(bundle, greens) < 1e-14


def test_long_time_limit_absorbs_everything(rng):
    # all mass absorbed: Sigma_t -> G and H_int -> 0
    n = 4
    box = build_box(n)
    greens = greens_matrix(n)
    sched = sample_schedule(box, 400.0, rng)
    bundle = backward_propagate(sched, HeightField.constant(box, 0.0), want_cov=True)
    assert np.abs(bundle.interior_kernel()).max() < 1e-12
    assert np.abs(quenched_covariance(bundle) - greens.matrix).max() < 1e-8


def test_representation_empty_schedule(box4):
    sched = _manual_schedule(box4, [], [], [], 1.0)
    h0 = HeightField(box4, np.arange(box4.n_interior, dtype=float))
    assert representation_check(h0, sched) == 0.0


def test_representation_single_event(box4):
    v = box4.index_of((1, 2))
    sched = _manual_schedule(box4, [0.3], [v], [-1.3], 1.0)
    h0 = HeightField(box4, np.linspace(-1, 1, box4.n_interior))
    assert representation_check(h0, sched) < 1e-14


def test_representation_random_schedules(box8, rng):
    worst = 0.0
    for _ in range(10):
        sched = sample_schedule(box8, 200.0, rng)
        h0 = HeightField(box8, 8.0 * rng.uniform(-1, 1, box8.n_interior))
        worst = max(worst, representation_check(h0, sched))
    assert worst < 1e-8


def test_time_change_terminal_law(rng):
    # conditioned on the jump count, the terminal site follows the law of
    # the killed discrete walk after that many steps (chi-square vs dense
    # matrix powers, absorbed states merged)
    n = 4
    box = build_box(n)
    start = box.index_of((2, 2))
    t = 40.0
    samples = 4000
    max_k = 6
    terminals = {k: [] for k in range(1, max_k + 1)}
    for _ in range(samples):
        sched = sample_schedule(box, t, rng, with_marks=False)
        traj = sample_btrw(sched, (2, 2), t, rng)
        path = [start] + list(traj.path_sites)
        for k in range(1, max_k + 1):
            if traj.n_jumps >= k:
                site = path[k]
            elif traj.absorbed:
                site = path[-1]  # frozen at the boundary
            else:
                site = None  # interior with < k jumps by time t: censored
            if site is not None:
                terminals[k].append(min(site, box.n_interior))  # merge boundary

    # dense oracle: (interior + absorbed) chain
    ni = box.n_interior
    P = np.zeros((ni + 1, ni + 1))
    for i in range(ni):
        for j in range(4):
            w = box.nbr[i, j]
            P[i, w if w < ni else ni] += 0.25
    P[ni, ni] = 1.0
    for k in range(1, max_k + 1):
        row = np.linalg.matrix_power(P, k)[start]
        obs = np.bincount(np.asarray(terminals[k]), minlength=ni + 1).astype(float)
        total = obs.sum()
        keep = row * total >= 5.0
        obs_kept = np.append(obs[keep], obs[~keep].sum())
        exp_kept = np.append(row[keep] * total, row[~keep].sum() * total)
        if exp_kept[-1] == 0.0:
            obs_kept, exp_kept = obs_kept[:-1], exp_kept[:-1]
        p = chisquare(obs_kept, exp_kept).pvalue
        assert p > 1e-4, f"k={k}: p={p}"


def test_survival_experiment_zero_time(rng):
    exp = survival_experiment(6, 0.0, replicas=3, rng=rng)
    assert np.all(exp.mean_survival == 1.0)


def test_survival_experiment_single_site_box(rng):
    # n=2: quenched survival is 1{no event by t}; schedule-average e^{-t};
    # the prediction is exact there (lambda_1 = 1, phi_hat = 1)
    t = 1.0
    replicas = 3000
    exp = survival_experiment(2, t, replicas=replicas, rng=rng)
    p = math.exp(-t)
    se = math.sqrt(p * (1 - p) / replicas)
    assert abs(exp.mean_survival[0] - p) < 3 * se
    assert exp.prediction[0] == pytest.approx(p)


def test_survival_experiment_band(rng):
    n = 16
    t = 3 * n * n * math.log(n)
    exp = survival_experiment(n, t, replicas=40, rng=rng, n_walks=4)
    assert exp.band_fraction >= 0.85
    w = (n / 4.0) ** 2  # jump diagnostic window (no-absorption regime)
    se = math.sqrt(w / 160)
    assert abs(exp.jump_mean - w) < 3 * se
    assert exp.jump_window_fraction == 1.0


def test_absorption_monotone_in_time(box8, rng):
    # non-absorbed mass of H_t is non-increasing in t, per start site
    sched = sample_schedule(box8, 120.0, rng)
    h0 = HeightField.constant(box8, 0.0)
    prev = None
    for t in (10.0, 30.0, 60.0, 120.0):
        surv = backward_propagate(sched, h0, t=t).survival()
        if prev is not None:
            assert np.all(surv <= prev + 1e-15)
        prev = surv


def test_heat_flow_matches_heat_kernel(box8, rng):
    # two routes to the same object: forward zero-mark flow vs H_t rows
    sched = sample_schedule(box8, 80.0, rng)
    l = rng.normal(size=box8.n_interior)
    flow = heat_flow(HeightField(box8, l), sched).final.values
    bundle = backward_propagate(sched, HeightField(box8, l))
    assert np.abs(flow - quenched_mean(bundle)).max() < 1e-10


def test_annealed_decay_rate(rng):
    # schedule-averaged total survival decays at rate lambda_1
    from dgff_glauber import mean_decay_study

    n = 16
    res = mean_decay_study(n, replicas=150, seed=424242)
    assert res.relative_rate_error < 0.05
    assert res.lambda_1 == pytest.approx(lambda_1(n))
