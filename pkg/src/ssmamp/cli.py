"""Experiment harness: config-driven Monte Carlo runs with artifacts.

A single JSON config describes one experiment: sensing-model shape and
conditioning, prior sparsity, SNR, iteration budget, trial count, seed,
and the list of algorithms to run.  The harness builds the model and the
spectral tables once, computes each algorithm's state-evolution track
once, dispatches the trials to a process pool, and writes per-algorithm
CSV curves plus a JSON summary.  All numeric artifacts are a pure
function of (config, seed): per-trial seeds are seed + k, reductions run
in trial order, and floats are serialized with shortest round-trip repr,
so re-running a config reproduces the files byte for byte.

Environment: SSMAMP_WORKERS sets the process-pool size (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algorithms import run_bo_mamp_baseline, run_oamp_vamp, run_ss_bo_mamp
from .denoiser import BernoulliGaussianPrior
from .diagnostics import empirical_covariances, orthogonality_residuals
from .errors import SSMAMPError
from .lbanded import lbandedness_score
from .model import (
    build_sensing_model,
    estimate_spectral_moments,
    exact_spectral_moments,
    sample_instance,
    tables_from_estimates,
)
from .state_evolution import se_memory_amp, se_oamp_vamp

CSV_HEADER = "iter,mse_sim_db,mse_se_db,v_gamma,v_phi,xi,theta"


@dataclass
class AlgorithmSpec:
    """One requested algorithm; label doubles as the artifact file stem."""

    name: str                  # oamp_vamp | ss_bo_mamp | bo_mamp
    L: int | None = None
    damp_site: str = "mle"

    @property
    def label(self):
        if self.name == "bo_mamp":
            return f"bo_mamp_L{self.L}_{self.damp_site}"
        return self.name

    @classmethod
    def parse(cls, entry):
        if isinstance(entry, str):
            entry = {"name": entry}
        name = entry.get("name")
        if name in ("oamp_vamp", "ss_bo_mamp"):
            return cls(name=name)
        if name == "bo_mamp":
            L = int(entry.get("L", 1))
            site = str(entry.get("damp_site", "mle")).lower()
            if L < 1 or site not in ("mle", "nle"):
                raise ValueError(f"invalid bo_mamp spec: {entry}")
            return cls(name=name, L=L, damp_site=site)
        raise ValueError(f"unknown algorithm: {entry!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment description (see module docstring)."""

    N: int
    delta: float
    mu: float
    snr_db: float
    kappa: float
    T: int
    trials: int
    seed: int
    algorithms: list
    xi_mode: str = "optimal"
    moments_mode: str = "exact"
    retain_history: bool = False
    output_dir: str = "."

    @property
    def M(self):
        return int(round(self.delta * self.N))

    @classmethod
    def from_dict(cls, raw):
        known = {
            "N", "delta", "mu", "snr_db", "kappa", "T", "trials", "seed",
            "algorithms", "xi_mode", "moments_mode", "retain_history",
            "output_dir",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(
            N=int(raw["N"]),
            delta=float(raw["delta"]),
            mu=float(raw["mu"]),
            snr_db=float(raw["snr_db"]),
            kappa=float(raw["kappa"]),
            T=int(raw["T"]),
            trials=int(raw.get("trials", 1)),
            seed=int(raw.get("seed", 0)),
            algorithms=[AlgorithmSpec.parse(a) for a in raw["algorithms"]],
            xi_mode=str(raw.get("xi_mode", "optimal")),
            moments_mode=str(raw.get("moments_mode", "exact")),
            retain_history=bool(raw.get("retain_history", False)),
            output_dir=str(raw.get("output_dir", ".")),
        )
        if cfg.M < 1:
            raise ValueError("M = round(delta * N) must be >= 1")
        if cfg.trials < 1:
            raise ValueError("trials must be >= 1")
        if cfg.T < 1:
            raise ValueError("T must be >= 1")
        if cfg.xi_mode not in ("optimal", "heuristic"):
            raise ValueError("xi_mode must be 'optimal' or 'heuristic'")
        if cfg.moments_mode not in ("exact", "estimated"):
            raise ValueError("moments_mode must be 'exact' or 'estimated'")
        if not cfg.algorithms:
            raise ValueError("algorithms must be non-empty")
        return cfg

    def echo(self):
        """JSON-ready dict with resolved per-trial seeds."""
        return {
            "N": self.N,
            "delta": self.delta,
            "mu": self.mu,
            "snr_db": self.snr_db,
            "kappa": self.kappa,
            "T": self.T,
            "trials": self.trials,
            "seed": self.seed,
            "trial_seeds": [self.seed + k for k in range(self.trials)],
            "algorithms": [a.label for a in self.algorithms],
            "xi_mode": self.xi_mode,
            "moments_mode": self.moments_mode,
            "retain_history": self.retain_history,
            "output_dir": self.output_dir,
        }


@dataclass
class RunArtifacts:
    """Paths of everything written plus the in-memory summary."""

    csv_paths: dict = field(default_factory=dict)
    grid_paths: dict = field(default_factory=dict)
    summary_path: str = ""
    summary: dict = field(default_factory=dict)


def _build_shared(config):
    """Model, tables, prior and SE tracks, computed once per config."""
    model = build_sensing_model(config.M, config.N, config.kappa, config.seed)
    if config.moments_mode == "exact":
        tables = exact_spectral_moments(model, config.T + 1)
    else:
        lam_hat, lam_up = estimate_spectral_moments(
            model.apply_A, model.apply_AH, model.m, model.n,
            config.T + 1, config.seed,
        )
        tables = tables_from_estimates(
            lam_hat, lam_up, model.m, model.n, config.T + 1
        )
    prior = BernoulliGaussianPrior(config.mu)
    sigma2 = 10.0 ** (-config.snr_db / 10.0)
    tracks = {}
    for spec in config.algorithms:
        if spec.name == "oamp_vamp":
            tracks[spec.label] = se_oamp_vamp(model, prior, sigma2, config.T)
        elif spec.name == "ss_bo_mamp":
            tracks[spec.label] = se_memory_amp(
                tables, prior, sigma2, config.T, xi_mode=config.xi_mode
            )
        else:
            tracks[spec.label] = se_memory_amp(
                tables, prior, sigma2, config.T, xi_mode=config.xi_mode,
                window=spec.L, damp_site=spec.damp_site,
            )
    return model, tables, prior, sigma2, tracks


def _run_one_trial(args):
    """Worker body: one instance, all algorithms.  Returns per-algorithm
    mse arrays (padded to T with the final value) or an error string."""
    config, model, tables, prior, sigma2, tracks, trial_seed = args
    inst = sample_instance(model, config.mu, config.snr_db, trial_seed)
    out = {}
    for spec in config.algorithms:
        se = tracks[spec.label]
        try:
            if spec.name == "oamp_vamp":
                traj = run_oamp_vamp(
                    inst, model, prior, config.T,
                    retain_history=config.retain_history,
                )
            elif spec.name == "ss_bo_mamp":
                traj = run_ss_bo_mamp(
                    inst, model, tables, prior, config.T,
                    xi_mode=config.xi_mode, se_track=se,
                    retain_history=config.retain_history,
                )
            else:
                traj = run_bo_mamp_baseline(
                    inst, model, tables, prior, config.T, spec.L,
                    damp_site=spec.damp_site, xi_mode=config.xi_mode,
                    se_track=se, retain_history=config.retain_history,
                )
            mse = np.full(config.T, traj.mse[-1])
            mse[: len(traj.mse)] = traj.mse
            out[spec.label] = (mse, traj if config.retain_history else None)
        except SSMAMPError as exc:
            out[spec.label] = (None, f"{type(exc).__name__}: {exc}")
    return out


def _fmt(x):
    """Shortest round-trip float repr for byte-stable CSV fields."""
    return repr(float(x))


def _write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_grid(path, V):
    V = np.real(np.asarray(V))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in V:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _se_curves(spec, se, T):
    """Per-iteration SE columns (mse_se_db, v_gamma, v_phi, xi, theta),
    held at their final values past SE convergence."""
    k = se.iterations
    vg = np.full(T, se.v_gamma[k - 1])
    vg[:k] = se.v_gamma
    vp = np.full(T, se.v_phi[k])
    vp[:k] = se.v_phi[1 : k + 1]
    if se.xi is not None:
        xi = np.full(T, se.xi[k - 1])
        xi[:k] = se.xi
        th = np.full(T, se.theta[k - 1])
        th[:k] = se.theta
    else:
        xi = np.full(T, np.nan)
        th = np.full(T, np.nan)
    return vg, vp, xi, th


def run_experiment(config, check=False):
    """Execute a validated ExperimentConfig and write its artifacts."""
    os.makedirs(config.output_dir, exist_ok=True)
    model, tables, prior, sigma2, tracks = _build_shared(config)
    jobs = [
        (config, model, tables, prior, sigma2, tracks, config.seed + k)
        for k in range(config.trials)
    ]
    workers = int(os.environ.get("SSMAMP_WORKERS", "1"))
    if workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_trial, jobs))
    else:
        results = [_run_one_trial(j) for j in jobs]

    artifacts = RunArtifacts()
    summary = {"config": config.echo(), "algorithms": {}, "failures": {}}
    check_failures = []
    for spec in config.algorithms:
        label = spec.label
        se = tracks[label]
        mse_sum = np.zeros(config.T)
        trajs = []
        n_ok = 0
        for k, res in enumerate(results):
            mse, extra = res[label]
            if mse is None:
                summary["failures"].setdefault(label, []).append(
                    {"trial": k, "error": extra}
                )
                continue
            mse_sum += mse
            n_ok += 1
            if extra is not None:
                trajs.append((config.seed + k, extra))
        if n_ok == 0:
            summary["algorithms"][label] = {"completed_trials": 0}
            continue
        mse_avg = mse_sum / n_ok
        vg, vp, xi, th = _se_curves(spec, se, config.T)
        rows = []
        for t in range(config.T):
            rows.append([
                str(t + 1),
                _fmt(10.0 * np.log10(mse_avg[t])),
                _fmt(10.0 * np.log10(vp[t])),
                _fmt(vg[t]),
                _fmt(vp[t]),
                _fmt(xi[t]),
                _fmt(th[t]),
            ])
        path = os.path.join(config.output_dir, f"{label}.csv")
        _write_csv(path, rows)
        artifacts.csv_paths[label] = path
        entry = {
            "completed_trials": n_ok,
            "final_mse_db": float(10.0 * np.log10(mse_avg[-1])),
            "final_mse_se_db": float(10.0 * np.log10(vp[-1])),
            "se_iterations": int(se.iterations),
        }
        if check:
            dd = np.diff(se.v_phi[: se.iterations + 1])
            mono = float(np.max(dd)) if len(dd) else 0.0
            if spec.name == "ss_bo_mamp" and mono > 1e-12:
                check_failures.append(f"{label}: SE not monotone ({mono:.2e})")
            entry["se_monotone_slack"] = mono
        summary["algorithms"][label] = entry

        if config.retain_history and trajs:
            grid = emit_covariance_report(
                config, label, [t for _, t in trajs], model, summary
            )
            artifacts.grid_paths[label] = grid

    if check and check_failures:
        summary["check_failures"] = check_failures
    artifacts.summary = summary
    artifacts.summary_path = os.path.join(config.output_dir, "summary.json")
    with open(artifacts.summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if check and check_failures:
        raise SSMAMPError("; ".join(check_failures))
    return artifacts


def emit_covariance_report(config, label, trajs, model, summary):
    """Write the empirical covariance grids and structure scores for one
    algorithm's retained trajectories; returns the grid paths."""
    xs = []
    for k, traj in enumerate(trajs):
        inst = sample_instance(model, config.mu, config.snr_db, config.seed + k)
        xs.append(inst.x)
    vg, vp = empirical_covariances(trajs, xs)
    paths = {}
    for tag, V in (("v_gamma", vg), ("v_phi", vp)):
        p = os.path.join(config.output_dir, f"{label}_{tag}_grid.csv")
        _write_grid(p, V)
        paths[tag] = p
    orth = orthogonality_residuals(trajs[0], xs[0])
    summary["algorithms"][label]["diagnostics"] = {
        "lbandedness_gamma": float(lbandedness_score(np.real(vg))),
        "lbandedness_phi": float(lbandedness_score(np.real(vp))),
        "orthogonality_max": {k: float(np.max(v)) for k, v in orth.items()},
    }
    return paths


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ssmamp", description="memory-AMP experiment harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute a JSON experiment config")
    runp.add_argument("config", help="path to the JSON config")
    runp.add_argument("--seed", type=int, default=None, help="override seed")
    runp.add_argument("--out", default=None, help="override output_dir")
    runp.add_argument("--trials", type=int, default=None, help="override trials")
    runp.add_argument(
        "--algo", action="append", default=None,
        help="run only algorithms whose label matches (repeatable)",
    )
    runp.add_argument(
        "--check", action="store_true",
        help="exit nonzero if the invariant suite fails",
    )
    args = parser.parse_args(argv)

    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output_dir"] = args.out
    if args.trials is not None:
        raw["trials"] = args.trials
    try:
        config = ExperimentConfig.from_dict(raw)
        if args.algo:
            keep = [a for a in config.algorithms if a.label in set(args.algo)]
            if not keep:
                raise ValueError(f"no algorithm matches {args.algo}")
            config.algorithms = keep
        run_experiment(config, check=args.check)
    except (SSMAMPError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
