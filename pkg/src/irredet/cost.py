"""Metric-evaluation cost model for correspondence search."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class CostReport:
    n: int
    n_star: int
    cost_full: int
    cost_pruned: int
    savings: int
    measured_evaluations: int

    def to_dict(self) -> dict:
        return asdict(self)


def matching_cost(n: int) -> int:
    """n(n+1)/2 distance evaluations to match n points."""
    return n * (n + 1) // 2


def savings_closed_form(n: int, n_star: int) -> int:
    return n_star * (1 + 2 * n - n_star) // 2


def cost_report(n: int, n_star: int, measured: int = 0) -> CostReport:
    """Cost of matching all ``n`` points versus the ``n - n_star`` irredundant ones.

    All quantities are exact integers; ``measured`` is whatever an instrumented
    matcher actually counted and is carried alongside, not reconciled.
    """
    n, n_star, measured = int(n), int(n_star), int(measured)
    if n < 0 or n_star < 0:
        raise ParameterError("point counts must be nonnegative")
    if n_star > n:
        raise ParameterError(f"n_star={n_star} exceeds n={n}")
    full = matching_cost(n)
    pruned = matching_cost(n - n_star)
    return CostReport(n, n_star, full, pruned, savings_closed_form(n, n_star), measured)
