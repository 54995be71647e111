"""Logistic survival model with piecewise-linear age bases.

The yearly survival probability of an x year-old is sigmoid(u) with
u = sum_i v_i * phi_i(x), where the phi_i are hat functions on a fixed
set of age knots and the v_i are that year's mortality risk factors.
With the default knots (18, 50, 100) each v_i is the logit of the
survival probability at the corresponding knot age.

Cohorts evolve either by exact binomial sampling of survivor counts or
by their expectation (count * p), and the factors for one year are
recovered from exposure/survivor counts by damped-Newton maximum
likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

AGE_MIN = 18
AGE_MAX = 100

# Open-interval clamp: keeps probabilities strictly inside (0, 1) so that
# logits and log-likelihood terms stay finite downstream.
_P_LO = float(np.finfo(float).tiny)
_P_HI = float(np.nextafter(1.0, 0.0))


class EstimationError(RuntimeError):
    """A model fit could not be completed.

    ``last_iterate`` holds the most recent parameter vector when the
    failure happened mid-optimization.
    """

    def __init__(self, message: str, last_iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.last_iterate = last_iterate


def stable_sigmoid(u):
    """Logistic function clamped into the open interval (0, 1).

    Overflow-safe for arguments up to +-700 and beyond; saturated values
    are pulled back to the nearest representable number inside (0, 1).
    """
    return np.clip(expit(u), _P_LO, _P_HI)


@dataclass(frozen=True)
class PiecewiseLinearBasis:
    """Hat functions on age knots over [18, 100].

    Function i is 1 at ``knots[i]``, 0 at every other knot, and linear in
    between; outside the two knots adjacent to knots[i] it is identically
    zero.  The default three-knot basis breaks at age 50.
    """

    knots: tuple[float, ...] = (18.0, 50.0, 100.0)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or len(k) < 2:
            raise ValueError("basis needs at least two knots")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        if k[0] != AGE_MIN or k[-1] != AGE_MAX:
            raise ValueError(f"knots must span [{AGE_MIN}, {AGE_MAX}]")

    @property
    def n_functions(self) -> int:
        return len(self.knots)

    def evaluate(self, age) -> np.ndarray:
        """Evaluate all basis functions at ``age``.

        Returns an array with a trailing axis of length ``n_functions``;
        ages outside [18, 100] raise ValueError.
        """
        a = np.asarray(age, dtype=float)
        if np.any(a < AGE_MIN) or np.any(a > AGE_MAX):
            raise ValueError(f"age must lie in [{AGE_MIN}, {AGE_MAX}]")
        knots = np.asarray(self.knots, dtype=float)
        cols = [np.interp(a, knots, np.eye(len(knots))[i]) for i in range(len(knots))]
        return np.stack(cols, axis=-1)


def survival_probability(v, age, basis: Optional[PiecewiseLinearBasis] = None):
    """One-year survival probability sigmoid(sum_i v_i * phi_i(age)).

    Strictly inside (0, 1) for any finite factors; vectorized over ``age``.
    """
    basis = basis or PiecewiseLinearBasis()
    v = np.asarray(v, dtype=float)
    if v.shape != (basis.n_functions,):
        raise ValueError(f"expected {basis.n_functions} factors, got shape {v.shape}")
    return stable_sigmoid(basis.evaluate(age) @ v)


class CohortState(NamedTuple):
    age: int
    count: float


def evolve_binomial(cohort: CohortState, p: float, rng: np.random.Generator) -> CohortState:
    """Advance a cohort one year by drawing survivors from Bin(count, p)."""
    count = cohort.count
    if count < 0 or float(count) != int(count):
        raise ValueError("binomial evolution requires a nonnegative integer count")
    if not 0.0 <= p <= 1.0:
        raise ValueError("survival probability must lie in [0, 1]")
    return CohortState(cohort.age + 1, int(rng.binomial(int(count), p)))


def evolve_deterministic(cohort: CohortState, p: float) -> CohortState:
    """Advance a cohort one year by its expected survivor count."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("survival probability must lie in [0, 1]")
    return CohortState(cohort.age + 1, cohort.count * p)


@dataclass(frozen=True)
class MortalityObservation:
    """Exposures and survivor counts by age for one calendar year."""

    ages: np.ndarray
    exposures: np.ndarray
    survivors: np.ndarray

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=int)
        expo = np.asarray(self.exposures, dtype=np.int64)
        surv = np.asarray(self.survivors, dtype=np.int64)
        if not (ages.shape == expo.shape == surv.shape) or ages.ndim != 1:
            raise ValueError("ages, exposures and survivors must be 1-d and equal length")
        if np.any(ages < AGE_MIN) or np.any(ages > AGE_MAX):
            raise ValueError(f"ages must lie in [{AGE_MIN}, {AGE_MAX}]")
        if np.any(expo < 0):
            raise ValueError("exposures must be nonnegative")
        if np.any(surv < 0) or np.any(surv > expo):
            raise ValueError("survivors must satisfy 0 <= D <= E")
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "exposures", expo)
        object.__setattr__(self, "survivors", surv)


def log_likelihood(v, obs: MortalityObservation, basis: Optional[PiecewiseLinearBasis] = None):
    """Binomial log-likelihood of one year's factors, with derivatives.

    Returns ``(value, gradient, hessian)`` for

        l(v) = sum_x [ D_x * u_x - E_x * log(1 + exp(u_x)) ],
        u_x  = sum_i v_i * phi_i(x),

    dropping the v-independent combinatorial constant.  The Hessian
    ``-Phi' diag(E p (1-p)) Phi`` is negative semidefinite, so l is
    concave and Newton ascent is globally well behaved.
    """
    basis = basis or PiecewiseLinearBasis()
    v = np.asarray(v, dtype=float)
    phi = basis.evaluate(obs.ages)  # (k, n)
    u = phi @ v
    e = obs.exposures.astype(float)
    d = obs.survivors.astype(float)
    value = float(np.sum(d * u - e * np.logaddexp(0.0, u)))
    p = expit(u)
    grad = phi.T @ (d - e * p)
    hess = -(phi.T * (e * p * (1.0 - p))) @ phi
    return value, grad, hess


def _check_identifiable(obs: MortalityObservation, basis: PiecewiseLinearBasis):
    phi = basis.evaluate(obs.ages)
    for i in range(basis.n_functions):
        if obs.exposures[phi[:, i] != 0.0].sum() == 0:
            raise EstimationError(
                f"no exposure on the support of basis function {i + 1}; "
                f"factor {i + 1} is not identifiable"
            )


def fit_year_mle(
    obs: MortalityObservation,
    basis: Optional[PiecewiseLinearBasis] = None,
    init: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> np.ndarray:
    """Maximum-likelihood factors for one year of data.

    Damped Newton ascent with step halving; stops when the gradient norm
    falls below ``tol``.  Deterministic given its inputs.  The objective
    is concave, so the default start v = 0 loses nothing.

    Raises EstimationError when a factor is not identifiable (zero
    exposure on its basis support) or when ``max_iter`` iterations do not
    reach the tolerance; the error carries the last iterate.
    """
    basis = basis or PiecewiseLinearBasis()
    _check_identifiable(obs, basis)
    v = np.zeros(basis.n_functions) if init is None else np.asarray(init, dtype=float).copy()

    value, grad, hess = log_likelihood(v, obs, basis)
    for _ in range(max_iter):
        if np.linalg.norm(grad) < tol:
            return v
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        alpha = 1.0
        while alpha > 2.0**-60:
            trial = v + alpha * step
            trial_value, trial_grad, trial_hess = log_likelihood(trial, obs, basis)
            if trial_value > value:
                v, value, grad, hess = trial, trial_value, trial_grad, trial_hess
                break
            alpha *= 0.5
        else:
            # near the optimum the value gain can underflow float resolution
            # while the gradient is still above tol; the full Newton step
            # keeps contracting the gradient there
            trial = v + step
            trial_value, trial_grad, trial_hess = log_likelihood(trial, obs, basis)
            if np.linalg.norm(trial_grad) < np.linalg.norm(grad):
                v, value, grad, hess = trial, trial_value, trial_grad, trial_hess
                continue
            raise EstimationError(
                f"step halving stalled with gradient norm {np.linalg.norm(grad):.3e} "
                f"(tol {tol:.1e}); data may be degenerate",
                last_iterate=v,
            )
    if np.linalg.norm(grad) < tol:
        return v
    raise EstimationError(
        f"no convergence in {max_iter} iterations; gradient norm {np.linalg.norm(grad):.3e}",
        last_iterate=v,
    )
