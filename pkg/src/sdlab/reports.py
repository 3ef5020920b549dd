"""Structured verdict records shared by every checking routine."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

VERDICTS = ("pass", "fail", "inconclusive")


def _plain(x):
    """Convert numpy scalars/arrays (recursively) into JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


@dataclass
class DiagnosticsReport:
    """One numerical witness.

    ``verdict`` is ``pass`` iff ``|statistic - target| <= tolerance`` for
    two-sided checks or ``statistic <= target`` for one-sided checks; the
    rule actually applied is stored in ``rule``.  ``hard`` reports decide
    the runner's exit code, exploratory ones do not.
    """

    name: str
    statistic: float
    target: float
    standard_error: float | None = None
    verdict: str = "inconclusive"
    rule: str = ""
    metadata: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    hard: bool = True

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)


def two_sided(name, statistic, target, tolerance, *, se=None, rule="", **extra) -> DiagnosticsReport:
    ok = abs(statistic - target) <= tolerance
    return DiagnosticsReport(name, float(statistic), float(target), None if se is None else float(se),
                             "pass" if ok else "fail",
                             rule or f"|statistic - target| <= {tolerance!r}", **extra)


def one_sided(name, statistic, bound, *, se=None, rule="", **extra) -> DiagnosticsReport:
    ok = statistic <= bound
    return DiagnosticsReport(name, float(statistic), float(bound), None if se is None else float(se),
                             "pass" if ok else "fail", rule or "statistic <= target", **extra)
