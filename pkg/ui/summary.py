"""Plain-text summaries printed after each command."""

from __future__ import annotations

import math
import sys
from typing import TextIO

from actions.optimize import OptimizeOutcome
from actions.pmp_check import PmpCheckOutcome
from actions.robustness import RobustnessOutcome
from actions.sweep import SweepOutcome


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return "inf"
    return f"{value:.6g}"


def _files(files, out: TextIO) -> None:
    for path in files:
        print(f"  wrote {path}", file=out)


def render_optimize(outcome: OptimizeOutcome, out: TextIO = sys.stdout) -> None:
    report = outcome.report
    print(f"🎯 {report.approach}: total cost {report.cost.total:.10g}", file=out)
    print(f"  terminal {report.cost.terminal:.10g} | regularizer {report.cost.regularizer:.10g}", file=out)
    print(
        f"  iterations {report.iterations} | converged {report.converged} "
        f"| failed starts {report.failed_starts}",
        file=out,
    )
    print(
        f"  band [{_fmt(report.m_lb)}, {_fmt(report.m_ub)}] | zeta threshold {_fmt(report.zeta_threshold)} "
        f"| singular fraction {report.singular_fraction:.3f}",
        file=out,
    )
    if "refinement_cost_change" in report.extra:
        print(f"  grid doubling changes the cost by {report.extra['refinement_cost_change']:.3e}", file=out)
    _files(outcome.files, out)


def render_robustness(outcome: RobustnessOutcome, out: TextIO = sys.stdout) -> None:
    curve = outcome.curve
    top = float(curve.eps_levels[-1])
    print(f"📉 robustness at eps_hat = {top:g}", file=out)
    for name in curve.approaches:
        print(
            f"  {name:<12} worst fidelity {curve.worst_fidelity(name)[-1]:.6f} "
            f"| mean objective {curve.mean_objective(name)[-1]:.6f}",
            file=out,
        )
    _files(outcome.files, out)


def render_sweep(outcome: SweepOutcome, out: TextIO = sys.stdout) -> None:
    result = outcome.result
    print(
        f"🧮 sweep: {result.n_models} models averaged, {result.n_failed} failed "
        f"({outcome.resumed} resumed)",
        file=out,
    )
    _files(outcome.files, out)


def render_pmp_check(outcome: PmpCheckOutcome, out: TextIO = sys.stdout) -> None:
    d = outcome.diagnostics
    counts = {label.value: 0 for label in type(d.case_labels[0])} if d.case_labels else {}
    for label in d.case_labels:
        counts[label.value] += 1
    print(f"🔎 maximum principle check (zeta={outcome.zeta:g})", file=out)
    print(f"  singular fraction {d.singular_fraction:.4f}", file=out)
    print("  labels " + ", ".join(f"{k}={v}" for k, v in counts.items()), file=out)
    print(
        f"  control Hamiltonian spread {d.hamiltonian_spread:.3e} "
        f"(tolerance {outcome.hamiltonian_tolerance:.3e})",
        file=out,
    )
    print(
        f"  band [{_fmt(d.band.m_lb)}, {_fmt(d.band.m_ub)}] | zeta threshold {_fmt(d.band.zeta_threshold)} "
        f"| switching tolerance {d.tolerance:.3e}",
        file=out,
    )
    print(f"  regularizer strictly convex: {outcome.strictly_convex}", file=out)
    print("  ✅ PASS" if outcome.passed else "  ❌ FAIL", file=out)
