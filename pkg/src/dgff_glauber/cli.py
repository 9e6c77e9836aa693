"""Command-line entry point: studies, verification commands, manifests.

Subcommands: ``spectral``, ``simulate``, ``btrw-verify``, ``couple``,
``decay``, ``profile``, ``coalescence``.  Every run writes a JSON
manifest (full config echo, master seed, seed-derivation rule,
timestamps, output list) before doing work, and every CSV ends with a
comment line referencing the manifest's config hash.  All randomness is
derived from the master seed per ``(replica, role)``, so re-running a
command with the same manifest reproduces byte-identical CSVs.

Exit codes: 0 success, 1 validation failure, 2 verification failure
(an exact identity exceeded its tolerance).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .btrw import backward_propagate, covariance_gap_check, representation_check
from .coupling import TwoStageParams, run_two_stage
from .dynamics import sample_schedule
from .experiments import (
    coalescence_scaling_study,
    cutoff_profile_study,
    mean_decay_study,
    sched_with_marks,
    shifted_stationary_init,
)
from .lattice import HeightField, build_box
from .seeding import derive_seed, rng_for
from .spectral import eigenbasis, greens_matrix
from .dynamics import run_forward, sample_stationary

__all__ = ["main", "parse_and_dispatch", "RunManifest", "ValidationError",
           "VerificationError", "derive_seed"]

SEED_RULE = "philox(key=seedsequence(master, spawn_key=(replica, role_id)))"


class ValidationError(Exception):
    """Bad flags or config; exit status 1."""


class VerificationError(Exception):
    """An exact identity exceeded its tolerance; exit status 2."""


def _fmt(x) -> str:
    """CSV cell: floats at 17 significant digits (round-trip exact)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class RunManifest:
    command: str
    config: dict
    master_seed: int
    seed_rule: str = SEED_RULE
    version: str = __version__
    config_hash: str = ""
    started_at: str = ""
    finished_at: str | None = None
    outputs: list = dc_field(default_factory=list)

    def __post_init__(self):
        hashable = {k: v for k, v in self.config.items()
                    if k not in ("out_dir", "threads", "config")}
        hashable["command"] = self.command
        hashable["seed"] = self.master_seed
        blob = json.dumps(hashable, sort_keys=True).encode()
        self.config_hash = hashlib.sha256(blob).hexdigest()[:16]

    def write(self, out_dir: Path):
        path = out_dir / "manifest.json"
        payload = {
            "command": self.command,
            "config": self.config,
            "master_seed": self.master_seed,
            "seed_rule": self.seed_rule,
            "version": self.version,
            "config_hash": self.config_hash,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


class _Run:
    """Output directory + manifest bookkeeping for one command."""

    def __init__(self, command: str, config: dict):
        self.out_dir = Path(config.get("out_dir") or f"runs/{command}")
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            probe = self.out_dir / ".write-probe"
            probe.write_text("")
            probe.unlink()
        except OSError as e:
            raise ValidationError(f"output path not writable: {e}") from e
        self.manifest = RunManifest(
            command=command,
            config=config,
            master_seed=int(config.get("seed", 0)),
            started_at=time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        )
        self.manifest.write(self.out_dir)

    def csv(self, name: str, header, rows) -> Path:
        path = self.out_dir / name
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(x) for x in row) + "\n")
            f.write(f"# manifest: {self.manifest.config_hash}\n")
        self.manifest.outputs.append(name)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        self.manifest.outputs.append(name)
        return path

    def finish(self):
        self.manifest.finished_at = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
        self.manifest.write(self.out_dir)


def _pmap(fn, items, threads: int):
    """Replica map with a deterministic gather order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _require_n(n) -> int:
    if n is None:
        raise ValidationError("missing required flag --n")
    if n < 2:
        raise ValidationError("n must be >= 2")
    return int(n)


def _floats(text: str | None, default):
    if text is None:
        return default
    try:
        return [float(x) for x in str(text).split(",") if x != ""]
    except ValueError as e:
        raise ValidationError(f"expected comma-separated floats, got {text!r}") from e


def _ints(text: str | None, default):
    if text is None:
        return default
    try:
        return [int(x) for x in str(text).split(",") if x != ""]
    except ValueError as e:
        raise ValidationError(f"expected comma-separated ints, got {text!r}") from e


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_spectral(cfg: dict) -> int:
    n = _require_n(cfg["n"])
    run = _Run("spectral", cfg)
    sd = eigenbasis(n)
    rows = [(int(i1), int(i2), lam) for (i1, i2), lam in zip(sd.modes, sd.lambdas)]
    run.csv("spectral.csv", ("i1", "i2", "lambda"), rows)
    if cfg.get("dump_eigenvectors"):
        box = build_box(n)
        vrows = []
        for k in range(sd.modes.shape[0]):
            i1, i2 = (int(c) for c in sd.modes[k])
            for idx in range(box.n_interior):
                x1, x2 = (int(c) for c in box.interior[idx])
                vrows.append((i1, i2, x1, x2, sd.vectors[idx, k]))
        run.csv("eigenvectors.csv", ("i1", "i2", "x1", "x2", "value"), vrows)
    run.finish()
    return 0


def _parse_init(spec_text: str, box, greens_factory, rng):
    if spec_text == "all-n":
        return HeightField.constant(box, float(box.n))
    if spec_text == "flat":
        return HeightField.constant(box, 0.0)
    if spec_text == "stationary":
        return sample_stationary(box, greens_factory(), rng)
    if spec_text.startswith("shifted-stationary:"):
        shift = float(spec_text.split(":", 1)[1])
        h = sample_stationary(box, greens_factory(), rng)
        return HeightField(box, h.values + shift)
    raise ValidationError(f"unknown init {spec_text!r}")


def cmd_simulate(cfg: dict) -> int:
    n = _require_n(cfg["n"])
    t = cfg["t"]
    if t is None or t < 0:
        raise ValidationError("--t must be >= 0")
    run = _Run("simulate", cfg)
    box = build_box(n)
    seed = int(cfg["seed"])
    snap_times = _floats(cfg.get("snapshot_times"), [t])
    if any(s > t for s in snap_times):
        raise ValidationError("snapshot times must lie within the horizon")
    sched = sample_schedule(box, t, rng_for(seed, 0, "schedule"), with_marks=False)
    marks = rng_for(seed, 0, "marks").standard_normal(sched.n_events)
    h0 = _parse_init(cfg.get("init") or "all-n", box,
                     lambda: greens_matrix(n), rng_for(seed, 0, "init"))
    traj = run_forward(h0, sched_with_marks(sched, marks), snapshot_times=snap_times)
    rows = []
    for k, ts in enumerate(traj.snapshot_times):
        for idx in range(box.n_interior):
            x1, x2 = (int(c) for c in box.interior[idx])
            rows.append((float(ts), x1, x2, traj.snapshots[k, idx]))
    run.csv("snapshots.csv", ("time", "x1", "x2", "height"), rows)
    final = traj.final.values
    run.json("summary.json", {
        "n": n, "t": t, "events": sched.n_events,
        "final_mean": float(final.mean()),
        "final_var": float(final.var()),
        "final_max_abs": float(np.abs(final).max()),
        "manifest": run.manifest.config_hash,
    })
    run.finish()
    return 0


def cmd_btrw_verify(cfg: dict) -> int:
    n = _require_n(cfg["n"])
    t = cfg["t"] if cfg["t"] is not None else 100.0
    seeds = int(cfg["seeds"] if cfg["seeds"] is not None else 20)
    tol = float(cfg["tolerance"] if cfg["tolerance"] is not None else 1e-8)
    run = _Run("btrw-verify", cfg)
    box = build_box(n)
    greens = greens_matrix(n)
    master = int(cfg["seed"])

    def one(r: int):
        sched = sample_schedule(box, t, rng_for(master, r, "schedule"), with_marks=False)
        marks = rng_for(master, r, "marks").standard_normal(sched.n_events)
        sched = sched_with_marks(sched, marks)
        h0 = sample_stationary(box, greens, rng_for(master, r, "init"))
        dev = representation_check(h0, sched)
        bundle = backward_propagate(sched, h0, want_cov=True)
        gap = covariance_gap_check(bundle, greens)
        return r, dev, gap

    rows = _pmap(one, list(range(seeds)), int(cfg["threads"]))
    run.csv("report.csv", ("seed", "max_deviation", "covariance_gap_error"), rows)
    worst_dev = max(r[1] for r in rows)
    worst_gap = max(r[2] for r in rows)
    run.json("summary.json", {
        "n": n, "t": t, "seeds": seeds, "tolerance": tol,
        "worst_deviation": worst_dev, "worst_covariance_gap": worst_gap,
        "manifest": run.manifest.config_hash,
    })
    run.finish()
    if worst_dev > tol or worst_gap > tol:
        raise VerificationError(
            f"representation identity violated: max deviation {worst_dev:.3e}, "
            f"covariance gap {worst_gap:.3e}, tolerance {tol:.3e}"
        )
    return 0


def cmd_couple(cfg: dict) -> int:
    n = _require_n(cfg["n"])
    mode = cfg.get("mode") or "two-stage"
    if mode not in ("identity", "sticky", "two-stage"):
        raise ValidationError("mode must be identity, sticky, or two-stage")
    replicas = int(cfg["replicas"] if cfg["replicas"] is not None else 10)
    if replicas <= 0:
        raise ValidationError("replicas must be positive")
    hmult = float(cfg["horizon_mult"] if cfg["horizon_mult"] is not None else 4.0)
    run = _Run("couple", cfg)
    box = build_box(n)
    horizon = hmult * n * n * max(math.log(n), 1.0)
    grid = _floats(cfg.get("v_grid"), None)
    if mode == "identity":
        params = TwoStageParams(switch="time", t0=horizon + 1.0, horizon=horizon)
    elif mode == "sticky":
        params = TwoStageParams(switch="time", t0=0.0, horizon=horizon)
    else:
        params = TwoStageParams(switch=cfg.get("switch") or "time", horizon=horizon)
    if grid is not None:
        params.grid = np.asarray(grid)
    master = int(cfg["seed"])
    low = float(cfg["low_init"] if cfg.get("low_init") is not None else -n)

    def one(r: int):
        g0 = HeightField.constant(box, low)
        return run_two_stage(g0, params, rng_for(master, r, "schedule"))

    records = _pmap(one, list(range(replicas)), int(cfg["threads"]))
    trace_rows = []
    scale_rows = []
    for r, rec in enumerate(records):
        for k in range(rec.grid_times.size):
            trace_rows.append((r, rec.grid_times[k], rec.grid_v[k],
                               int(rec.grid_n[k]), rec.grid_l2[k]))
        for k in range(rec.levels.size):
            scale_rows.append((r, k, rec.levels[k], rec.level_times[k],
                               rec.coalescence_time))
    run.csv("trace.csv", ("replica", "t", "V", "N_active", "l2_trunc"), trace_rows)
    run.csv("scales.csv", ("replica", "scale_index", "scale", "T_i",
                           "coalescence_time"), scale_rows)
    coalesced = sum(1 for rec in records if rec.coalesced)
    run.json("summary.json", {
        "n": n, "mode": mode, "replicas": replicas,
        "coalesced": coalesced,
        "neg_violations": int(sum(rec.neg_violations for rec in records)),
        "manifest": run.manifest.config_hash,
    })
    run.finish()
    return 0


def cmd_decay(cfg: dict) -> int:
    n = _require_n(cfg["n"])
    replicas = int(cfg["replicas"] if cfg["replicas"] is not None else 200)
    grid = _floats(cfg.get("grid"), None)
    run = _Run("decay", cfg)
    res = mean_decay_study(n, replicas=replicas, seed=int(cfg["seed"]),
                           grid=grid)
    rows = [(res.grid[k], res.mean_totals[k], res.se_totals[k])
            for k in range(res.grid.size)]
    run.csv("decay.csv", ("t", "mean_total", "se"), rows)
    run.json("summary.json", {
        "n": n, "replicas": replicas,
        "slope": res.slope, "lambda_1": res.lambda_1,
        "relative_rate_error": res.relative_rate_error,
        "manifest": run.manifest.config_hash,
    })
    run.finish()
    return 0


def cmd_profile(cfg: dict) -> int:
    n = _require_n(cfg["n"])
    a = float(cfg["a"] if cfg["a"] is not None else n)
    replicas = int(cfg["replicas"] if cfg["replicas"] is not None else 100)
    s_grid = _floats(cfg.get("s_grid"), [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0])
    c0 = float(cfg["c0"] if cfg["c0"] is not None else 4.0)
    center = cfg.get("center") or "shift"
    run = _Run("profile", cfg)
    study = cutoff_profile_study(n, a, s_grid, replicas=replicas,
                                 seed=int(cfg["seed"]), c0=c0, center=center)
    rows = [(p.s, p.estimate, p.prediction, p.se, p.replicas)
            for p in study.points]
    run.csv("profile.csv", ("s", "estimate", "prediction", "se", "replicas"), rows)
    run.json("summary.json", {
        "n": n, "a": a, "c0": c0, "center": center,
        "center_time": study.center_time, "shift": study.shift,
        "max_abs_error": float(np.abs(study.estimates() - study.predictions()).max()),
        "manifest": run.manifest.config_hash,
    })
    run.finish()
    return 0


def cmd_coalescence(cfg: dict) -> int:
    ns = _ints(cfg.get("n_list"), [8, 16, 32])
    for n in ns:
        _require_n(n)
    replicas = int(cfg["replicas"] if cfg["replicas"] is not None else 50)
    switch = cfg.get("switch") or "volume"
    hmult = float(cfg["horizon_mult"] if cfg["horizon_mult"] is not None else 4.0)
    run = _Run("coalescence", cfg)
    study = coalescence_scaling_study(ns, replicas=replicas, seed=int(cfg["seed"]),
                                      switch=switch, horizon_mult=hmult)
    rows = [(row.n, row.replicas, row.coalesced, row.median_time,
             row.normalized_median, row.final_sweep_fraction, row.neg_violations)
            for row in study.rows]
    run.csv("coalescence.csv",
            ("n", "replicas", "coalesced", "median_time", "normalized_median",
             "final_sweep_fraction", "neg_violations"), rows)
    run.json("summary.json", {
        "n_list": ns, "replicas": replicas, "switch": switch,
        "reference_constant": study.reference_constant,
        "drift_identity_mean": study.drift["identity"].mean,
        "drift_sticky_mean": study.drift["sticky"].mean,
        "manifest": run.manifest.config_hash,
    })
    run.finish()
    return 0


# ---------------------------------------------------------------------------
# option tables, config files, dispatch
# ---------------------------------------------------------------------------

_COMMON = [
    ("seed", int, 0, "master seed"),
    ("out-dir", str, None, "output directory (default runs/<command>)"),
    ("threads", int, None, "worker pool size (default: DGFF_THREADS or cpu count)"),
    ("config", str, None, "flat key=value config file; flags override"),
]

_COMMANDS = {
    "spectral": ([
        ("n", int, None, "box side parameter"),
        ("dump-eigenvectors", bool, False, "also write per-site eigenvectors"),
    ], cmd_spectral),
    "simulate": ([
        ("n", int, None, "box side parameter"),
        ("t", float, None, "time horizon"),
        ("init", str, "all-n",
         "all-n | flat | stationary | shifted-stationary:<shift>"),
        ("snapshot-times", str, None, "comma-separated snapshot times (default t)"),
    ], cmd_simulate),
    "btrw-verify": ([
        ("n", int, None, "box side parameter"),
        ("t", float, 100.0, "window length"),
        ("seeds", int, 20, "number of independent schedules"),
        ("tolerance", float, 1e-8, "max allowed deviation"),
    ], cmd_btrw_verify),
    "couple": ([
        ("n", int, None, "box side parameter"),
        ("mode", str, "two-stage", "identity | sticky | two-stage"),
        ("replicas", int, 10, "independent coupled pairs"),
        ("horizon-mult", float, 4.0, "horizon in units of n^2 log n"),
        ("switch", str, "time", "two-stage switch policy: time | volume"),
        ("low-init", float, None, "lower chain constant start (default -n)"),
        ("v-grid", str, None, "comma-separated recording times"),
    ], cmd_couple),
    "decay": ([
        ("n", int, None, "box side parameter"),
        ("replicas", int, 200, "number of schedules"),
        ("grid", str, None, "comma-separated fit times (default [2n^2, 4n^2])"),
    ], cmd_decay),
    "profile": ([
        ("n", int, None, "box side parameter"),
        ("a", float, None, "initial height scale (default n)"),
        ("replicas", int, 100, "number of schedules"),
        ("s-grid", str, None, "comma-separated window coordinates"),
        ("c0", float, 4.0, "headroom constant in the shifted initialization"),
        ("center", str, "shift", "window center: shift | nominal"),
    ], cmd_profile),
    "coalescence": ([
        ("n-list", str, None, "comma-separated box sizes (default 8,16,32)"),
        ("replicas", int, 50, "replicas per box size"),
        ("switch", str, "volume", "stage-switch policy: time | volume"),
        ("horizon-mult", float, 4.0, "horizon in units of n^2 log n"),
    ], cmd_coalescence),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dgff", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for name, (opts, _handler) in _COMMANDS.items():
        p = sub.add_parser(name)
        for flag, typ, _default, help_text in opts + _COMMON:
            dest = flag.replace("-", "_")
            if typ is bool:
                p.add_argument(f"--{flag}", dest=dest, action="store_true",
                               default=None, help=help_text)
            else:
                p.add_argument(f"--{flag}", dest=dest, type=typ, default=None,
                               help=help_text)
    return parser


def _load_config_file(path: str) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValidationError(f"cannot read config file: {e}") from e
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config line {line_no} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _effective_config(command: str, args: argparse.Namespace) -> dict:
    opts, _handler = _COMMANDS[command]
    table = {flag.replace("-", "_"): (typ, default)
             for flag, typ, default, _h in opts + _COMMON}
    cfg = {key: default for key, (_t, default) in table.items()}
    if getattr(args, "config", None):
        for key, raw in _load_config_file(args.config).items():
            if key not in table:
                raise ValidationError(f"unknown config key {key!r}")
            typ, _ = table[key]
            if typ is bool:
                cfg[key] = raw.lower() in ("1", "true", "yes", "on")
            elif typ in (int, float):
                try:
                    cfg[key] = typ(raw)
                except ValueError as e:
                    raise ValidationError(f"bad value for {key}: {raw!r}") from e
            else:
                cfg[key] = raw
    for key in table:
        explicit = getattr(args, key, None)
        if explicit is not None:
            cfg[key] = explicit
    if cfg.get("threads") is None:
        env = os.environ.get("DGFF_THREADS")
        cfg["threads"] = int(env) if env else (os.cpu_count() or 1)
    cfg["config"] = getattr(args, "config", None)
    return cfg


def parse_and_dispatch(argv) -> int:
    """Parse flags, write the manifest, run the subcommand.

    Returns 0 on success, 1 on validation failure, 2 on verification
    failure.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise ValidationError("missing subcommand; see --help")
        cfg = _effective_config(args.command, args)
        _opts, handler = _COMMANDS[args.command]
        return handler(cfg)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except VerificationError as e:
        print(f"verification failure: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return parse_and_dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
