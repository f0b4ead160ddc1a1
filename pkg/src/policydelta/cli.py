"""Command-line entry point: ``policy-delta {simulate,estimate,verify,sweep}``.

Exit codes: 0 success, 1 equivalence mismatch, 2 bad input or config,
3 I/O failure, 4 zero/invalid propensity in the data.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .data import Dataset, Framing, PolicyTable, RewardModel, split_by_arm
from .equivalence import (
    ABExperiment,
    PropensityMode,
    Verdict,
    ab_to_ope,
    treatment_policies,
    verify_dim_equivalence,
    verify_radim_dr_equivalence,
)
from .errors import InvalidConfig, NonFinitePropensity, PolicyDeltaError, ZeroPropensity
from .io import read_config, read_dataset, read_policy, read_reward_model, write_dataset
from .offpolicy import (
    delta_beta_ips_estimate,
    delta_dr_estimate,
    delta_ips_estimate,
    dr_estimate,
    estimate_beta_star,
)
from .onpolicy import dim_estimate, radim_estimate
from .report import NamedResult, RunReport
from .simulation import parse_sweep, sweep_rows
from .synth import SyntheticConfig, gen_ab_experiment, gen_bandit_logs

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_IO, EXIT_PROPENSITY = 0, 1, 2, 3, 4
ESTIMATOR_CHOICES = ("dim", "radim", "dips", "dbips", "dr", "ddr")


class UsageError(Exception):
    """Bad combination of arguments; maps to exit 2."""


def _fail(code: int, message: str) -> int:
    print(f"policy-delta: error: {message}", file=sys.stderr)
    return code


def _load_config(args: argparse.Namespace) -> SyntheticConfig:
    cfg = read_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    summary: dict[str, Any] = {"n": cfg.n, "framing": cfg.framing.value, "seed": cfg.seed}
    if cfg.framing is Framing.AB:
        exp, _ = gen_ab_experiment(cfg)
        d = exp.d
        summary["realised_p"] = exp.empirical_p
    else:
        d, pi0 = gen_bandit_logs(cfg)
        if args.policy_out:
            Path(args.policy_out).write_text(json.dumps({"probabilities": pi0.probabilities.tolist()}))
    write_dataset(d, args.out)
    summary["out"] = str(args.out)
    print(json.dumps(summary))
    return EXIT_OK


def _ope_view(d: Dataset, args: argparse.Namespace) -> tuple[Dataset, PolicyTable | None, PolicyTable | None]:
    """OPE-framed data plus default target policies when converted from AB."""
    if d.framing is Framing.OPE:
        return d, None, None
    if not args.as_ope:
        raise UsageError(f"estimator {args.estimator!r} needs OPE-framed data; pass --as-ope for A/B files")
    exp = ABExperiment.from_dataset(d, args.nominal_p)
    pi, pi_prime = treatment_policies()
    return ab_to_ope(exp, args.mode), pi, pi_prime


def _policies(args, default_pi, default_pi_prime, need_prime=True):
    pi = read_policy(args.policy) if args.policy else default_pi
    pi_prime = read_policy(args.policy_prime) if args.policy_prime else default_pi_prime
    if pi is None or (need_prime and pi_prime is None):
        raise UsageError("target policies required: --policy and --policy-prime")
    return pi, pi_prime


def _model(args) -> RewardModel:
    if not args.model:
        raise UsageError(f"estimator {args.estimator!r} needs --model")
    return read_reward_model(args.model)


def cmd_estimate(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    d = read_dataset(args.data)
    echo: dict[str, Any] = {"data": str(args.data), "estimator": args.estimator, "ci": args.ci,
                            "framing": d.framing.value, "n": len(d)}
    biased = args.max_weight is not None
    notes: list[str] = []
    if biased:
        notes.append("weight clipping is active: the estimate is biased")
        print("policy-delta: warning: --max-weight clips importance weights and biases the estimate",
              file=sys.stderr)
        echo["max_weight"] = args.max_weight
    est = args.estimator
    if est in ("dim", "radim"):
        if d.framing is not Framing.AB:
            raise UsageError(f"estimator {est!r} needs A/B-framed data (records with 'arm')")
        d_t, d_c = split_by_arm(d)
        result = (dim_estimate(d_t, d_c, args.ci) if est == "dim"
                  else radim_estimate(d_t, d_c, _model(args), args.ci))
    else:
        ope, pi_default, pi_prime_default = _ope_view(d, args)
        if d.framing is Framing.AB:
            echo["as_ope"] = True
            echo["mode"] = PropensityMode(args.mode).value
        mw = {"max_weight": args.max_weight}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if est == "dr":
                pi, _ = _policies(args, pi_default, pi_prime_default, need_prime=False)
                result = dr_estimate(ope, pi, _model(args), args.ci, **mw)
            else:
                pi, pi_prime = _policies(args, pi_default, pi_prime_default)
                if est == "dips":
                    result = delta_ips_estimate(ope, pi, pi_prime, args.ci, **mw)
                elif est == "ddr":
                    result = delta_dr_estimate(ope, pi, pi_prime, _model(args), args.dof_loss or 1,
                                               args.ci, **mw)
                else:
                    auto = args.beta in (None, "auto")
                    beta = estimate_beta_star(ope, pi, pi_prime, **mw) if auto else float(args.beta)
                    dof = args.dof_loss or (2 if auto else 1)
                    echo.update(beta=beta, beta_source="auto" if auto else "fixed")
                    result = delta_beta_ips_estimate(ope, pi, pi_prime, beta, dof, args.ci, **mw)
    report = RunReport(
        command="estimate",
        config_echo=echo,
        results=[NamedResult(est, result)],
        timing_ms=int((time.perf_counter() - start) * 1000),
        biased=biased,
        warnings=notes,
    )
    print(report.to_json())
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    if bool(args.data) == bool(args.config):
        raise UsageError("verify needs exactly one of --data or --config")
    echo: dict[str, Any] = {"which": args.which, "mode": PropensityMode(args.mode).value,
                            "dof_loss": args.dof_loss, "ci": args.ci}
    f: RewardModel | None = None
    if args.config:
        cfg = _load_config(args)
        if cfg.framing is not Framing.AB:
            raise UsageError("verify needs an AB simulation config")
        exp, f = gen_ab_experiment(cfg)
        echo["config"] = cfg.to_mapping()
    else:
        exp = ABExperiment.from_dataset(read_dataset(args.data, Framing.AB), args.nominal_p)
        echo["data"] = str(args.data)
    if args.model:
        f = read_reward_model(args.model)
    echo.update(n=len(exp.d), n_treatment=exp.n_treatment, n_control=exp.n_control,
                nominal_p=exp.nominal_p)
    if args.which == "dim":
        rep = verify_dim_equivalence(exp, args.mode, args.dof_loss, args.ci)
    else:
        if f is None:
            raise UsageError("verify --which radim on a data file needs --model")
        rep = verify_radim_dr_equivalence(exp, f, args.mode, args.dof_loss, args.ci)
    report = RunReport("verify", echo, [NamedResult(args.which, rep)],
                       int((time.perf_counter() - start) * 1000))
    print(report.to_json())
    accepted = {Verdict.EXACT} if args.expect == "exact" else {Verdict.EXACT, Verdict.APPROX}
    return EXIT_OK if rep.verdict in accepted else EXIT_MISMATCH


def cmd_sweep(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    cfg = _load_config(args)
    if cfg.framing is not Framing.AB:
        raise UsageError("sweep runs the A/B estimators and needs an AB config")
    grid = parse_sweep(args.sweep)
    rows = sweep_rows(cfg, grid, args.replications, workers=args.workers, ci_level=args.ci)
    columns: list[str] = []
    for row in rows:
        columns += [k for k in row if k not in columns]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    summary = {"command": "sweep", "out": str(args.out), "grid": grid, "replications": args.replications,
               "rows": len(rows), "timing_ms": int((time.perf_counter() - start) * 1000)}
    if args.replications < 2:
        summary["note"] = "a single replication has no empirical variance; those columns are omitted"
    print(json.dumps(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="policy-delta", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--policy-out", help="OPE only: write the logging policy matrix here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run one estimator on a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--estimator", required=True, choices=ESTIMATOR_CHOICES)
    p.add_argument("--policy", help="target policy pi (probability matrix JSON)")
    p.add_argument("--policy-prime", help="comparison policy pi' (probability matrix JSON)")
    p.add_argument("--model", help="reward model JSON")
    p.add_argument("--beta", default="auto", help="baseline for dbips: 'auto' or a number")
    p.add_argument("--dof-loss", type=int, choices=(1, 2))
    p.add_argument("--as-ope", action="store_true", help="treat an A/B file as logged bandit data")
    p.add_argument("--mode", choices=[m.value for m in PropensityMode], default="empirical")
    p.add_argument("--nominal-p", type=float)
    p.add_argument("--ci", type=float, default=0.95)
    p.add_argument("--max-weight", type=float, help="clip |w| (biased; off by default)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("verify", help="check DiM/IPS or RADiM/DR equivalence on one experiment")
    p.add_argument("--data")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--which", choices=("dim", "radim"), default="dim")
    p.add_argument("--model")
    p.add_argument("--mode", choices=[m.value for m in PropensityMode], default="empirical")
    p.add_argument("--dof-loss", type=int, choices=(1, 2), default=2)
    p.add_argument("--nominal-p", type=float)
    p.add_argument("--ci", type=float, default=0.95)
    p.add_argument("--expect", choices=("approx", "exact"), default="approx",
                   help="'exact' also fails on ApproxMatch")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="Monte Carlo study over p, rho and/or n")
    p.add_argument("--config", required=True)
    p.add_argument("--sweep", action="append", required=True, metavar="AXIS=V1,V2,...")
    p.add_argument("--replications", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ci", type=float, default=0.95)
    p.add_argument("--workers", type=int, help="defaults to $POLICY_DELTA_THREADS or the CPU count")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except InvalidConfig as exc:
        where = f" (key {exc.key!r})" if exc.key else ""
        return _fail(EXIT_INPUT, f"invalid config{where}: {exc}")
    except (NonFinitePropensity, ZeroPropensity) as exc:
        return _fail(EXIT_PROPENSITY, str(exc))
    except PolicyDeltaError as exc:
        return _fail(EXIT_INPUT, f"{type(exc).__name__}: {exc}")
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    except ValueError as exc:
        return _fail(EXIT_INPUT, str(exc))


if __name__ == "__main__":
    sys.exit(main())
