"""Machine-readable run reports emitted by the CLI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .data import EstimateResult
from .equivalence import EquivalenceReport

Result = Union[EstimateResult, EquivalenceReport]


@dataclass(frozen=True)
class NamedResult:
    name: str
    result: Result

    def to_dict(self) -> dict[str, Any]:
        kind = "estimate" if isinstance(self.result, EstimateResult) else "equivalence"
        return {"name": self.name, "type": kind, **self.result.to_dict()}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "NamedResult":
        body = {k: v for k, v in raw.items() if k not in ("name", "type")}
        if raw["type"] == "estimate":
            return cls(raw["name"], EstimateResult.from_dict(body))
        return cls(raw["name"], EquivalenceReport.from_dict(body))


@dataclass(frozen=True)
class RunReport:
    command: str
    config_echo: dict[str, Any]
    results: list[NamedResult]
    timing_ms: int
    biased: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_echo": self.config_echo,
            "results": [r.to_dict() for r in self.results],
            "timing_ms": self.timing_ms,
            "biased": self.biased,
            "warnings": list(self.warnings),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=True)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RunReport":
        return cls(
            command=raw["command"],
            config_echo=dict(raw["config_echo"]),
            results=[NamedResult.from_dict(r) for r in raw["results"]],
            timing_ms=int(raw["timing_ms"]),
            biased=bool(raw.get("biased", False)),
            warnings=list(raw.get("warnings", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))
