"""Monte Carlo replication of the A/B estimators over a parameter grid."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .equivalence import PropensityMode, verify_dim_equivalence, verify_radim_dr_equivalence
from .errors import InvalidConfig
from .synth import SyntheticConfig, gen_ab_experiment

ESTIMATORS = ("dim", "radim", "dbips", "ddr")
SWEEPABLE = ("p", "rho", "n")
THREADS_ENV = "POLICY_DELTA_THREADS"


def replicate(cfg: SyntheticConfig, seed_seq: np.random.SeedSequence,
              mode: PropensityMode = PropensityMode.EMPIRICAL, dof_loss: int = 2,
              ci_level: float = 0.95) -> np.ndarray:
    """One draw; returns rows (point, variance_of_mean, covered) in ESTIMATORS order."""
    exp, f = gen_ab_experiment(cfg, np.random.Generator(np.random.PCG64(seed_seq)))
    raw = verify_dim_equivalence(exp, mode, dof_loss, ci_level)
    adj = verify_radim_dr_equivalence(exp, f, mode, dof_loss, ci_level)
    results = (raw.onpolicy, adj.onpolicy, raw.offpolicy, adj.offpolicy)
    return np.array([[r.point, r.variance_of_mean, float(r.covers(cfg.ate))] for r in results])


def _replicate_chunk(args) -> np.ndarray:
    cfg, seqs, mode, dof_loss, ci_level = args
    return np.stack([replicate(cfg, s, mode, dof_loss, ci_level) for s in seqs])


def worker_count(requested: int | None = None) -> int:
    cap = requested
    if cap is None:
        env = os.environ.get(THREADS_ENV)
        cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, os.cpu_count() or 1))


def run_replications(cfg: SyntheticConfig, replications: int, *, workers: int | None = None,
                     mode: PropensityMode = PropensityMode.EMPIRICAL, dof_loss: int = 2,
                     ci_level: float = 0.95) -> np.ndarray:
    """Array of shape (replications, len(ESTIMATORS), 3), ordered by replication.

    Replication ``r`` always uses the r-th child of ``SeedSequence(cfg.seed)``,
    so the output does not depend on the number of workers.
    """
    if replications < 1:
        raise InvalidConfig("replications must be >= 1", "replications")
    seqs = np.random.SeedSequence(cfg.seed).spawn(replications)
    workers = worker_count(workers)
    if workers == 1:
        return _replicate_chunk((cfg, seqs, mode, dof_loss, ci_level))
    chunks = [seqs[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_replicate_chunk, [(cfg, c, mode, dof_loss, ci_level) for c in chunks]))
    out = np.empty((replications, len(ESTIMATORS), 3))
    for i, part in enumerate(parts):
        out[i::workers] = part
    return out


@dataclass(frozen=True)
class EstimatorSummary:
    bias: float
    empirical_variance: float | None
    mean_estimated_variance: float
    coverage: float


def summarise(draws: np.ndarray, truth: float) -> dict[str, EstimatorSummary]:
    r = draws.shape[0]
    out = {}
    for j, name in enumerate(ESTIMATORS):
        points = draws[:, j, 0]
        out[name] = EstimatorSummary(
            bias=float(points.mean() - truth),
            empirical_variance=float(points.var(ddof=1)) if r >= 2 else None,
            mean_estimated_variance=float(draws[:, j, 1].mean()),
            coverage=float(draws[:, j, 2].mean()),
        )
    return out


def parse_sweep(specs: Sequence[str]) -> dict[str, list[Any]]:
    """``["rho=0,0.5,0.8", "p=0.2,0.5"]`` -> ordered grid axes."""
    grid: dict[str, list[Any]] = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        key = key.strip()
        if not sep or key not in SWEEPABLE:
            raise InvalidConfig(f"sweep axis must be one of {SWEEPABLE} as key=v1,v2,...; got {spec!r}", key or spec)
        try:
            vals = [int(v) if key == "n" else float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise InvalidConfig(f"bad values for sweep axis {key!r}: {values!r}", key) from None
        if not vals:
            raise InvalidConfig(f"sweep axis {key!r} has no values", key)
        grid[key] = vals
    if not 1 <= len(grid) <= 2:
        raise InvalidConfig("sweep over one or two of p, rho, n", "sweep")
    return grid


def grid_points(grid: Mapping[str, Sequence[Any]]) -> Iterable[dict[str, Any]]:
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, combo))


def sweep_rows(base: SyntheticConfig, grid: Mapping[str, Sequence[Any]], replications: int, *,
               workers: int | None = None, ci_level: float = 0.95) -> list[dict[str, Any]]:
    """One summary row per grid point.

    With a single replication the empirical-variance columns are left out and
    ``empirical_variance_available`` is 0.
    """
    rows = []
    for point in grid_points(grid):
        cfg = base.replace(**point)
        summ = summarise(run_replications(cfg, replications, workers=workers, ci_level=ci_level), cfg.ate)
        row: dict[str, Any] = {"p": cfg.p, "rho": cfg.rho, "n": cfg.n, "replications": replications,
                               "empirical_variance_available": int(replications >= 2)}
        for name, s in summ.items():
            row[f"{name}_bias"] = s.bias
            if s.empirical_variance is not None:
                row[f"{name}_empirical_variance"] = s.empirical_variance
            row[f"{name}_mean_estimated_variance"] = s.mean_estimated_variance
            row[f"{name}_coverage"] = s.coverage
        if replications >= 2 and summ["dim"].empirical_variance:
            row["radim_dim_variance_ratio"] = summ["radim"].empirical_variance / summ["dim"].empirical_variance
        rows.append(row)
    return rows
