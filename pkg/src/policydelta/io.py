"""Readers and writers for logged data, policy matrices, reward models and configs.

Logged data: JSON lines (one record per line) or CSV with the same column
names, ``covariates`` joined by semicolons.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .data import Dataset, Framing, LoggedRecord, PolicyTable, RewardModel, validate_dataset
from .errors import InvalidConfig, InvalidRecord
from .synth import SyntheticConfig

CSV_COLUMNS = ("context_id", "covariates", "action", "reward", "propensity", "arm")


def _is_csv(path: str | Path) -> bool:
    return Path(path).suffix.lower() == ".csv"


def read_records(path: str | Path) -> list[LoggedRecord]:
    path = Path(path)
    with path.open(newline="") as fh:
        if _is_csv(path):
            return [LoggedRecord.from_mapping(row) for row in csv.DictReader(fh)]
        out = []
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidRecord(f"line {lineno}: {exc.msg}") from None
            if not isinstance(raw, dict):
                raise InvalidRecord(f"line {lineno}: expected a JSON object")
            out.append(LoggedRecord.from_mapping(raw))
        return out


def infer_framing(records: list[LoggedRecord]) -> Framing:
    with_arm = sum(r.arm is not None for r in records)
    if with_arm == len(records) and records:
        return Framing.AB
    if with_arm == 0:
        return Framing.OPE
    raise InvalidRecord("some records carry an arm label and some do not")


def read_dataset(path: str | Path, framing: Framing | str | None = None,
                 action_count: int | None = None) -> Dataset:
    records = read_records(path)
    framing = infer_framing(records) if framing is None else Framing(framing)
    return validate_dataset(records, framing, action_count=action_count)


def write_dataset(d: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if _is_csv(path):
            cols = CSV_COLUMNS if d.arm is not None else CSV_COLUMNS[:-1]
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for r in d.records:
                row = [r.context_id, ";".join(repr(c) for c in r.covariates), r.action,
                       repr(r.reward), repr(r.logging_propensity)]
                if d.arm is not None:
                    row.append(r.arm)
                writer.writerow(row)
        else:
            for r in d.records:
                fh.write(json.dumps(r.to_mapping()) + "\n")


def read_policy(path: str | Path) -> PolicyTable:
    """``[[...], ...]`` or ``{"probabilities": [[...], ...]}``."""
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        raw = raw.get("probabilities")
    if raw is None:
        raise InvalidRecord(f"{path}: no probability matrix found")
    return PolicyTable(np.asarray(raw, dtype=float))


def reward_model_from_mapping(raw: Mapping[str, Any]) -> RewardModel:
    """Build a model from one of the supported JSON layouts.

    ``{"kind": "action_agnostic", "coef": [...], "intercept": c}``
    ``{"kind": "action_agnostic", "values": [...]}`` (one value per record, in file order)
    ``{"kind": "action_aware", "table": [[...]]}`` (f(x, a) = table[context_id][a])
    ``{"kind": "action_aware", "coef": [[...]], "intercept": [...]}`` (one row per action)
    """
    kind = raw.get("kind", "action_agnostic")
    if kind == "action_agnostic":
        if "values" in raw:
            return RewardModel.from_values(raw["values"])
        if "coef" in raw:
            return RewardModel.linear(raw["coef"], float(raw.get("intercept", 0.0)))
        if "constant" in raw:
            return RewardModel.constant(float(raw["constant"]))
    elif kind == "action_aware":
        if "table" in raw:
            return RewardModel.from_table(raw["table"])
        if "coef" in raw:
            return RewardModel.linear_per_action(raw["coef"], raw.get("intercept", 0.0))
    else:
        raise InvalidRecord(f"unknown reward model kind {kind!r}")
    raise InvalidRecord(f"reward model of kind {kind!r} needs one of values/coef/table/constant")


def read_reward_model(path: str | Path) -> RewardModel:
    return reward_model_from_mapping(json.loads(Path(path).read_text()))


def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict[str, Any]:
    """JSON object, or ``key = value`` lines (``#`` comments, JSON-literal values)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")
        return raw
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _parse_scalar(value)
    return out


def read_config(path: str | Path) -> SyntheticConfig:
    return SyntheticConfig.from_mapping(parse_config_text(Path(path).read_text()))
