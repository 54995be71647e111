"""Pension scheme definition and claims cash flows.

A plan is a set of cohorts (start age, headcount, annual benefit units)
paying an index-linked benefit at t = 1..T.  Claims in year t are

    c_t = (I_t / I_0) * sum_cohorts d * count_t,

where counts evolve by binomial survivor draws or, in deterministic mode,
by their expectation.  Sub-cohorts evolve independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mortality import AGE_MAX, AGE_MIN
from .scenarios import Scenario, ScenarioSet

MODES = ("binomial", "deterministic")


@dataclass(frozen=True)
class Cohort:
    start_age: int
    headcount: int
    benefit: float = 1.0

    def __post_init__(self):
        if not AGE_MIN <= self.start_age <= AGE_MAX:
            raise ValueError(f"start age must lie in [{AGE_MIN}, {AGE_MAX}]")
        if self.headcount < 0:
            raise ValueError("headcount must be nonnegative")
        if self.benefit <= 0:
            raise ValueError("benefit units must be positive")


@dataclass(frozen=True)
class PensionPlan:
    cohorts: tuple[Cohort, ...]
    horizon: int = 35
    mortality_mode: str = "binomial"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.cohorts:
            raise ValueError("plan needs at least one cohort")
        if self.mortality_mode not in MODES:
            raise ValueError(f"mortality_mode must be one of {MODES}")
        for c in self.cohorts:
            if c.start_age + self.horizon > AGE_MAX:
                raise ValueError(
                    f"cohort aged {c.start_age} would exceed age {AGE_MAX} before the horizon"
                )

    @property
    def members(self) -> int:
        return sum(c.headcount for c in self.cohorts)

    @property
    def start_ages(self) -> tuple[int, ...]:
        return tuple(sorted({c.start_age for c in self.cohorts}))

    def with_mode(self, mode: str) -> "PensionPlan":
        return PensionPlan(self.cohorts, self.horizon, mode)


@dataclass(frozen=True)
class Strategy:
    """Fixed asset proportions over (bond, equity)."""

    name: str
    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"strategy weights must sum to 1, got {w.sum()!r}")
        if np.any(w < 0):
            raise ValueError("strategy weights must be nonnegative")


STRATEGIES = {
    "safe": Strategy("safe", (0.75, 0.25)),
    "risky": Strategy("risky", (0.5, 0.5)),
}


def homogeneous_plan(total: int, horizon: int = 35, mode: str = "binomial") -> PensionPlan:
    """All members aged 65 with a unit annual benefit."""
    if total <= 0:
        raise ValueError("total membership must be positive")
    return PensionPlan((Cohort(65, total, 1.0),), horizon, mode)


def make_nonhomogeneous_plan(total: int, horizon: int = 35, mode: str = "binomial") -> PensionPlan:
    """Two-benefit scheme: 20% of members get two units, 80% one unit.

    The 20% headcount uses largest-remainder rounding, which for a split
    into fifths is exact integer arithmetic: round(total/5) = (total+2)//5.
    """
    if total <= 0:
        raise ValueError("total membership must be positive")
    double = (total + 2) // 5
    return PensionPlan(
        (Cohort(65, double, 2.0), Cohort(65, total - double, 1.0)),
        horizon,
        mode,
    )


def _check_coverage(plan: PensionPlan, horizon: int, survival_ages) -> None:
    if horizon < plan.horizon:
        raise ValueError(f"scenario horizon {horizon} < plan horizon {plan.horizon}")
    missing = [c.start_age for c in plan.cohorts if c.start_age not in survival_ages]
    if missing:
        raise ValueError(f"scenario lacks survival probabilities for start ages {missing}")


def simulate_cashflows(plan: PensionPlan, scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Claims c_1..c_T for one scenario.

    Each cohort's count evolves independently: Bin(count, p) draws from
    ``rng`` in binomial mode, count * p in deterministic mode.  No payment
    occurs at t = 0.
    """
    horizon = len(scenario.index_ratio) - 1
    _check_coverage(plan, horizon, scenario.survival.keys())
    T = plan.horizon
    claims = np.zeros(T)
    for cohort in plan.cohorts:
        p = scenario.survival[cohort.start_age]
        if plan.mortality_mode == "binomial":
            count = cohort.headcount
            for t in range(T):
                count = int(rng.binomial(count, p[t]))
                claims[t] += cohort.benefit * count
        else:
            counts = cohort.headcount * np.cumprod(p[:T])
            claims += cohort.benefit * counts
    return scenario.index_ratio[1 : T + 1] * claims


def simulate_claims(plan: PensionPlan, sset: ScenarioSet, seed: int = 0) -> np.ndarray:
    """Claims matrix (N, T) across a scenario set.

    Binomial draws come from one child stream per cohort, derived from
    ``seed`` and the cohort index and vectorized across scenarios, so the
    result is reproducible and does not depend on any worker count.
    """
    _check_coverage(plan, sset.horizon, sset.survival.keys())
    N, T = sset.n_scenarios, plan.horizon
    claims = np.zeros((N, T))
    for k, cohort in enumerate(plan.cohorts):
        p = sset.survival[cohort.start_age]
        if plan.mortality_mode == "binomial":
            rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
            counts = np.full(N, cohort.headcount, dtype=np.int64)
            for t in range(T):
                counts = rng.binomial(counts, p[:, t])
                claims[:, t] += cohort.benefit * counts
        else:
            claims += cohort.benefit * cohort.headcount * np.cumprod(p[:, :T], axis=1)
    return sset.index_ratio[:, 1 : T + 1] * claims
