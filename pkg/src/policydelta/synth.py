"""Synthetic data-generating processes with known ground truth."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

from .data import Dataset, Framing, PolicyTable, RewardModel, context_distribution
from .equivalence import ABExperiment
from .errors import InvalidConfig

TREATMENT, CONTROL = "treatment", "control"


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters for either DGP.

    AB: ``y = rho*u + ate*treated + sqrt(1 - rho**2)*eps`` with ``u, eps ~ N(0, 1)``,
    so Var(y) = 1 and corr(y, u) = rho inside each arm.

    OPE: contexts drawn from ``context_weights`` (uniform by default), actions
    from ``logging_table`` or softmax(reward_table / logging_temperature),
    rewards ``reward_table[x, a] + noise_sd * N(0, 1)``.
    """

    n: int = 1000
    seed: int = 0
    framing: Framing = Framing.AB
    p: float = 0.5
    ate: float = 0.0
    rho: float = 0.0
    context_count: int = 2
    action_count: int = 2
    logging_temperature: float = 1.0
    reward_table: tuple[tuple[float, ...], ...] | None = None
    noise_sd: float = 0.0
    logging_table: tuple[tuple[float, ...], ...] | None = None
    context_weights: tuple[float, ...] | None = None
    resolution: int = 64

    def __post_init__(self) -> None:
        object.__setattr__(self, "framing", _enum(Framing, self.framing, "framing"))
        for key in ("reward_table", "logging_table"):
            val = getattr(self, key)
            if val is not None:
                object.__setattr__(self, key, _matrix(val, key))
        if self.context_weights is not None:
            w = tuple(float(x) for x in self.context_weights)
            if any(not math.isfinite(x) or x < 0 for x in w) or sum(w) <= 0:
                raise InvalidConfig("context_weights must be non-negative with positive sum", "context_weights")
            object.__setattr__(self, "context_weights", w)
        self._validate()

    def _validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise InvalidConfig(f"n must be a positive integer, got {self.n!r}", "n")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidConfig(f"seed must be a non-negative integer, got {self.seed!r}", "seed")
        if not 0.0 < self.p < 1.0:
            raise InvalidConfig(f"p must lie in (0, 1), got {self.p!r}", "p")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidConfig(f"rho must lie in [0, 1), got {self.rho!r}", "rho")
        if not math.isfinite(self.ate):
            raise InvalidConfig("ate must be finite", "ate")
        if not self.logging_temperature > 0:
            raise InvalidConfig("logging_temperature must be > 0", "logging_temperature")
        if not (math.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise InvalidConfig("noise_sd must be finite and >= 0", "noise_sd")
        if self.context_count < 1 or self.action_count < 1:
            raise InvalidConfig("context_count and action_count must be >= 1", "context_count")
        if self.resolution < 1:
            raise InvalidConfig("resolution must be >= 1", "resolution")
        shape = (self.context_count, self.action_count)
        for key in ("reward_table", "logging_table"):
            val = getattr(self, key)
            if val is not None and np.shape(val) != shape:
                raise InvalidConfig(f"{key} must have shape {shape}, got {np.shape(val)}", key)
        if self.logging_table is not None:
            lt = np.asarray(self.logging_table)
            if np.any(lt <= 0) or np.any(np.abs(lt.sum(axis=1) - 1) > 1e-12):
                raise InvalidConfig("logging_table rows must be positive and sum to 1", "logging_table")
        if self.context_weights is not None and len(self.context_weights) != self.context_count:
            raise InvalidConfig("context_weights needs one entry per context", "context_weights")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "SyntheticConfig":
        """Build from parsed JSON / key-value pairs; unknown keys are rejected by name."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key not in known:
                raise InvalidConfig(f"unknown config key {key!r}", key)
            kwargs[key] = _coerce(key, value, known[key].type)
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["framing"] = self.framing.value
        for key in ("reward_table", "logging_table"):
            if out[key] is not None:
                out[key] = [list(r) for r in out[key]]
        if out["context_weights"] is not None:
            out["context_weights"] = list(out["context_weights"])
        return out

    def replace(self, **changes: Any) -> "SyntheticConfig":
        return dataclasses.replace(self, **changes)

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


def _enum(kind, value, key):
    try:
        return kind(value)
    except ValueError:
        raise InvalidConfig(f"{key} must be one of {[k.value for k in kind]}, got {value!r}", key) from None


def _matrix(value, key) -> tuple[tuple[float, ...], ...]:
    try:
        m = tuple(tuple(float(x) for x in row) for row in value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{key} must be a matrix of numbers", key) from None
    if len({len(r) for r in m}) > 1 or not all(math.isfinite(x) for r in m for x in r):
        raise InvalidConfig(f"{key} must be a rectangular matrix of finite numbers", key)
    return m


def _coerce(key: str, value: Any, annotation: str) -> Any:
    try:
        if annotation == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if annotation == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"config key {key!r} has invalid value {value!r}", key) from None
    return value


def gen_ab_experiment(
    cfg: SyntheticConfig, rng: np.random.Generator | None = None
) -> tuple[ABExperiment, RewardModel]:
    """Draw an A/B experiment and return it with the oracle adjustment f(x) = rho*u."""
    if cfg.framing is not Framing.AB:
        raise InvalidConfig("gen_ab_experiment needs framing AB", "framing")
    rng = cfg.rng() if rng is None else rng
    n = cfg.n
    u = rng.standard_normal(n)
    treated = rng.random(n) < cfg.p
    eps = rng.standard_normal(n)
    y = cfg.rho * u + cfg.ate * treated + math.sqrt(1.0 - cfg.rho**2) * eps
    d = Dataset.from_arrays(
        context_id=np.arange(n),
        covariates=u.reshape(n, 1),
        action=np.where(treated, 0, 1),
        reward=y,
        propensity=np.where(treated, cfg.p, 1.0 - cfg.p),
        arm=np.where(treated, TREATMENT, CONTROL).astype(object),
        framing=Framing.AB,
        arm_labels=(TREATMENT, CONTROL),
    )
    return ABExperiment(d, cfg.p), RewardModel.linear([cfg.rho])


def reward_table(cfg: SyntheticConfig) -> np.ndarray:
    """The configured E[Y|x,a], or a seed-derived uniform(0, 1) table."""
    if cfg.reward_table is not None:
        return np.asarray(cfg.reward_table, dtype=float)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0x7AB1E]))
    return rng.random((cfg.context_count, cfg.action_count))


def with_reward_table(cfg: SyntheticConfig) -> SyntheticConfig:
    """Config with the reward table materialised (needed by the value oracle)."""
    if cfg.reward_table is not None:
        return cfg
    return cfg.replace(reward_table=tuple(map(tuple, reward_table(cfg).tolist())))


def logging_policy(cfg: SyntheticConfig) -> PolicyTable:
    if cfg.logging_table is not None:
        return PolicyTable(np.asarray(cfg.logging_table))
    logits = reward_table(cfg) / cfg.logging_temperature
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    # renormalise once more so rows sum to 1 at the 1e-12 tolerance
    return PolicyTable(probs / probs.sum(axis=1, keepdims=True))


def _ope_dataset(cfg, contexts, actions, rewards, pi0: PolicyTable) -> Dataset:
    return Dataset.from_arrays(
        context_id=contexts,
        covariates=np.eye(cfg.context_count)[contexts],
        action=actions,
        reward=rewards,
        propensity=pi0.prob(contexts, actions),
        framing=Framing.OPE,
        action_count=cfg.action_count,
    )


def gen_bandit_logs(
    cfg: SyntheticConfig, rng: np.random.Generator | None = None
) -> tuple[Dataset, PolicyTable]:
    """Draw logged bandit feedback; returns the data and the logging policy."""
    if cfg.framing is not Framing.OPE:
        raise InvalidConfig("gen_bandit_logs needs framing OPE", "framing")
    rng = cfg.rng() if rng is None else rng
    table = reward_table(cfg)
    pi0 = logging_policy(cfg)
    px = context_distribution(with_reward_table(cfg))
    contexts = rng.choice(cfg.context_count, size=cfg.n, p=px)
    cdf = np.cumsum(pi0.rows_for(contexts), axis=1)
    actions = np.minimum((rng.random(cfg.n)[:, None] >= cdf).sum(axis=1), cfg.action_count - 1)
    rewards = table[contexts, actions] + cfg.noise_sd * rng.standard_normal(cfg.n)
    return _ope_dataset(cfg, contexts, actions, rewards, pi0), pi0


def _as_fraction(x: float, resolution: int, what: str) -> Fraction:
    frac = Fraction(x).limit_denominator(resolution)
    if abs(float(frac) - x) > 1e-12:
        raise InvalidConfig(f"{what} = {x!r} is not a fraction with denominator <= {resolution}", "resolution")
    return frac


def exhaustive_dataset(cfg: SyntheticConfig) -> Dataset:
    """Enumerate every (x, a) with multiplicity proportional to P(x) * pi_0(a|x).

    Sample means over the result equal population expectations, so unbiased
    estimators reproduce the true values up to rounding.
    """
    if cfg.framing is not Framing.OPE:
        raise InvalidConfig("exhaustive_dataset needs framing OPE", "framing")
    if cfg.noise_sd != 0:
        raise InvalidConfig("exhaustive_dataset needs noise_sd = 0", "noise_sd")
    table = reward_table(cfg)
    pi0 = logging_policy(cfg)
    px = context_distribution(with_reward_table(cfg))
    mass: dict[tuple[int, int], Fraction] = {}
    for x in range(cfg.context_count):
        fx = _as_fraction(float(px[x]), cfg.resolution, f"P(x={x})")
        for a in range(cfg.action_count):
            mass[x, a] = fx * _as_fraction(float(pi0.probabilities[x, a]), cfg.resolution, f"pi0({a}|{x})")
    scale = math.lcm(*(m.denominator for m in mass.values()))
    counts = {k: int(m * scale) for k, m in mass.items()}
    g = math.gcd(*counts.values())
    contexts, actions = [], []
    for (x, a), c in counts.items():
        contexts += [x] * (c // g)
        actions += [a] * (c // g)
    contexts_arr = np.array(contexts, dtype=np.int64)
    actions_arr = np.array(actions, dtype=np.int64)
    return _ope_dataset(cfg, contexts_arr, actions_arr, table[contexts_arr, actions_arr], pi0)
