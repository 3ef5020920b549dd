"""Acceptance criteria 1-12, each run through its built-in preset.

Every test records one PASS/FAIL line, printed together at the end of the
session.  Criterion 12 reruns every other preset twice and dominates the
runtime (about ten minutes on one core).
"""
import time

import pytest

from sdlab.presets import CRITERION_PRESETS, preset_config
from sdlab.runner import run_config

# criteria with a wall-clock budget in seconds
RUNTIME_LIMITS = {1: 10.0, 5: 120.0, 8: 300.0}


def _describe(r):
    se = "" if r.standard_error is None else f" se={r.standard_error:.3g}"
    return f"{r.name}[{r.metadata.get('case', '')}] stat={r.statistic:.6g} target={r.target:.6g}{se} {r.verdict}"


@pytest.mark.acceptance
@pytest.mark.parametrize("criterion", sorted(CRITERION_PRESETS))
def test_criterion(criterion, tmp_path, acceptance_summary):
    name = CRITERION_PRESETS[criterion]
    t0 = time.perf_counter()
    result = run_config(preset_config(name), output_dir=tmp_path)
    seconds = time.perf_counter() - t0
    hard = [r for r in result.reports if r.hard]
    failed = [r for r in hard if not r.passed]
    limit = RUNTIME_LIMITS.get(criterion)
    slow = limit is not None and seconds > limit
    ok = bool(hard) and not failed and not slow
    budget = f" (limit {limit:.0f} s)" if limit else ""
    line = f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}  {name}  {seconds:.1f} s{budget}"
    if failed:
        line += "; failing: " + "; ".join(_describe(r) for r in failed)
    acceptance_summary[criterion] = line
    print(line)
    assert hard, f"{name} produced no hard reports"
    assert not failed, "\n".join(_describe(r) for r in failed)
    assert not slow, f"{name} took {seconds:.1f} s, limit {limit} s"
