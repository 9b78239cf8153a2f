"""Run reports and their canonical JSON encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from . import __version__
from .sweeps import CheckTally


@dataclass
class CheckResult:
    name: str
    status: str
    n_paths: int = 0
    n_ties: int = 0
    n_violations: int = 0
    statistic: float | None = None
    p_value: float | None = None
    witnesses: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_tally(cls, tally: CheckTally, **extra) -> "CheckResult":
        return cls(tally.name, tally.status, tally.n_paths, tally.n_ties, tally.n_violations,
                   tally.statistic, None, [w.to_json() for w in tally.witnesses],
                   {"n_precondition": tally.n_precondition, **extra} if tally.n_precondition or extra
                   else {})

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "status": self.status,
            "n_paths": self.n_paths,
            "n_ties": self.n_ties,
            "n_violations": self.n_violations,
            "witnesses": self.witnesses,
        }
        if self.statistic is not None:
            out["statistic"] = float(self.statistic)
        if self.p_value is not None:
            out["p_value"] = float(self.p_value)
        out.update(self.extra)
        return out


@dataclass
class RunReport:
    command: str
    config: dict
    seed: int
    workers: int
    checks: list[CheckResult]
    wall_time_ms: float | None = None
    version: str = __version__

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.status == "pass" for c in self.checks)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "workers": self.workers,
            "checks": [c.to_json() for c in self.checks],
            "wall_time_ms": self.wall_time_ms,
            "version": self.version,
        }


def dumps(report: RunReport) -> str:
    # json emits floats via repr, i.e. the shortest round-trip decimal
    return json.dumps(report.to_json(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_report(report: RunReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(report))


def load_report(path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
