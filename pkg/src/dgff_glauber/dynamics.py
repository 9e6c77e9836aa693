"""Forward-in-time Glauber dynamics via the graphical construction.

A realization of the dynamics is driven by an :class:`UpdateSchedule`: a
space-time Poisson field of update events on ``interior x (0, horizon)``
with an independent standard Gaussian mark attached to each event.  At
event ``(t, v, Z)`` the height at ``v`` is replaced by the average of its
four neighbours (boundary data included) plus ``Z``.  Everything else in
the package -- backward walks, couplings, experiments -- consumes these
schedules, so forward and backward constructions share one source of
randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import HeightField, LatticeBox
from .spectral import GreensMatrix

__all__ = [
    "UpdateSchedule",
    "Trajectory",
    "sample_schedule",
    "run_forward",
    "heat_flow",
    "sample_stationary",
]


@dataclass
class UpdateSchedule:
    """Time-ordered update events with attached Gaussian marks.

    ``times`` is strictly increasing in ``(0, horizon)``; ``sites`` holds
    interior site indices; ``marks`` is None for mark-free uses (pure
    heat flow), else one standard normal per event.
    """

    box: LatticeBox
    horizon: float
    times: np.ndarray
    sites: np.ndarray
    marks: np.ndarray | None = None
    _site_events: list | None = field(default=None, repr=False)

    @property
    def n_events(self) -> int:
        return int(self.times.shape[0])

    def per_site_counts(self) -> np.ndarray:
        return np.bincount(self.sites, minlength=self.box.n_interior)

    def events_at_site(self, v: int) -> np.ndarray:
        """Ascending event indices at interior site index ``v`` (cached)."""
        if self._site_events is None:
            order = np.argsort(self.sites, kind="stable")
            bounds = np.searchsorted(self.sites[order], np.arange(self.box.n_interior + 1))
            self._site_events = [
                order[bounds[k]:bounds[k + 1]] for k in range(self.box.n_interior)
            ]
        return self._site_events[v]

    def upto(self, t: float) -> "UpdateSchedule":
        """Sub-schedule of events strictly before time ``t``."""
        if t > self.horizon:
            raise ValueError("t exceeds the schedule horizon")
        k = int(np.searchsorted(self.times, t, side="left"))
        return UpdateSchedule(
            box=self.box,
            horizon=t,
            times=self.times[:k],
            sites=self.sites[:k],
            marks=None if self.marks is None else self.marks[:k],
        )


def sample_schedule(
    box: LatticeBox,
    horizon: float,
    rng: np.random.Generator,
    with_marks: bool = True,
) -> UpdateSchedule:
    """Sample the space-time Poisson field on ``interior x (0, horizon)``.

    Each interior site carries an independent rate-1 clock, so per-site
    event counts are i.i.d. Poisson(horizon).  The merged, time-sorted
    list is generated directly as the superposition: a rate-``N`` Poisson
    process on ``(0, horizon)`` (cumulative exponential gaps) with
    uniform site labels, which has exactly that law.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    ni = box.n_interior
    rate = float(ni)
    times_parts = []
    t = 0.0
    if horizon > 0:
        expect = rate * horizon
        chunk = int(expect + 6.0 * np.sqrt(expect + 1.0) + 16)
        while t < horizon:
            gaps = rng.exponential(1.0 / rate, size=chunk)
            cum = t + np.cumsum(gaps)
            times_parts.append(cum)
            t = cum[-1]
        times = np.concatenate(times_parts)
        times = times[times < horizon]
    else:
        times = np.empty(0)
    n = times.shape[0]
    sites = rng.integers(0, ni, size=n)
    marks = rng.standard_normal(n) if with_marks else None
    return UpdateSchedule(box=box, horizon=float(horizon), times=times,
                          sites=sites, marks=marks)


@dataclass
class Trajectory:
    """Snapshots of one forward run at requested times."""

    initial: HeightField
    snapshot_times: np.ndarray
    snapshots: np.ndarray        # (n_snapshots, n_interior)
    final: HeightField
    max_abs: float | None = None

    def at(self, t: float) -> np.ndarray:
        k = np.nonzero(np.isclose(self.snapshot_times, t))[0]
        if k.size == 0:
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[int(k[0])]


def _snapshot_positions(schedule: UpdateSchedule, snapshot_times):
    ts = np.atleast_1d(np.asarray(snapshot_times, dtype=np.float64))
    if ts.size and ts.max() > schedule.horizon:
        raise ValueError("snapshot time beyond the schedule horizon")
    order = np.argsort(ts, kind="stable")
    pos = np.searchsorted(schedule.times, ts[order], side="right")
    return ts, order, pos


def run_forward(
    h0: HeightField,
    schedule: UpdateSchedule,
    snapshot_times=(),
    track_max: bool = False,
) -> Trajectory:
    """Run the Glauber dynamics from ``h0`` through the whole schedule.

    At each event only the event's site changes, to the neighbour
    average (with the field's fixed boundary data contributing) plus the
    event's Gaussian mark.  Snapshots are right-continuous: a snapshot at
    time ``t`` includes every event with time <= ``t``.
    """
    if h0.box.n != schedule.box.n:
        raise ValueError("height field and schedule use different boxes")
    if schedule.marks is None:
        raise ValueError("schedule has no Gaussian marks; use heat_flow for the "
                         "zero-noise dynamics")
    ts, order, pos = _snapshot_positions(schedule, snapshot_times)
    values = h0.padded()
    snaps_sorted = np.empty((ts.size, h0.box.n_interior))
    max_abs = _kernels.forward_run(
        values, h0.box.nbr, schedule.sites.astype(np.int64),
        schedule.marks, pos.astype(np.int64), snaps_sorted,
    )
    snaps = np.empty_like(snaps_sorted)
    snaps[order] = snaps_sorted
    final = HeightField(h0.box, values[: h0.box.n_interior].copy(), h0.boundary.copy())
    init_max = float(np.abs(h0.values).max()) if track_max else 0.0
    return Trajectory(
        initial=h0,
        snapshot_times=ts,
        snapshots=snaps,
        final=final,
        max_abs=max(max_abs, init_max) if track_max else None,
    )


def heat_flow(l: HeightField, schedule: UpdateSchedule, snapshot_times=()) -> Trajectory:
    """Deterministic flow: the dynamics with every Gaussian mark zero.

    At each event the site's value becomes its neighbour average, so the
    field solves the event-driven discrete heat equation.  By linearity,
    two forward runs sharing a schedule and marks differ exactly by the
    heat flow of their initial difference.
    """
    ts, order, pos = _snapshot_positions(schedule, snapshot_times)
    values = l.padded()
    snaps_sorted = np.empty((ts.size, l.box.n_interior))
    # the forward kernel with zero marks is exactly the heat flow
    zero_marks = np.zeros(schedule.n_events)
    _kernels.forward_run(values, l.box.nbr, schedule.sites.astype(np.int64),
                         zero_marks, pos.astype(np.int64), snaps_sorted)
    snaps = np.empty_like(snaps_sorted)
    snaps[order] = snaps_sorted
    final = HeightField(l.box, values[: l.box.n_interior].copy(), l.boundary.copy())
    return Trajectory(initial=l, snapshot_times=ts, snapshots=snaps, final=final)


def sample_stationary(
    box: LatticeBox, greens: GreensMatrix, rng: np.random.Generator
) -> HeightField:
    """Draw an equilibrium field: centered Gaussian with covariance ``G``.

    Realized as ``L z`` for the Cholesky factor ``G = L L^T`` and i.i.d.
    standard normals ``z``; zero boundary data.
    """
    if greens.n != box.n:
        raise ValueError("Green's matrix does not match the box")
    L = greens.cholesky()
    z = rng.standard_normal(box.n_interior)
    return HeightField(box, L @ z)
