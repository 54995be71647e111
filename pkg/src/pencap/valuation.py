"""Wealth recursion, risk measures and the minimal-capital solver.

Terminal wealth for initial capital w0, per-period returns R_t and claims
c_t follows w_t = R_t w_{t-1} - c_t, which telescopes to

    w_T = w0 * prod_s R_s - sum_t (prod_{s>t} R_s) c_t = w0 * G - H.

Because G > 0 pathwise, w_T is strictly increasing in w0 on every path,
so the entropic risk of w_T is strictly decreasing (and the mean strictly
increasing) in w0; the minimal acceptable capital is the unique root of
risk(w0) = 0 and bracketing + bisection on a fixed scenario set (common
random numbers) is exact up to the bracket tolerance.

Risk evaluation reduces over scenarios with numpy's pairwise summation,
so results are bitwise reproducible for a given scenario array; parallel
callers must keep whole reductions on one worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RISK_KINDS = ("entropic", "neutral")


@dataclass(frozen=True)
class RiskSpec:
    """Acceptability criterion: entropic(gamma) or risk-neutral mean."""

    kind: str = "entropic"
    gamma: float = 0.05

    def __post_init__(self):
        if self.kind not in RISK_KINDS:
            raise ValueError(f"risk kind must be one of {RISK_KINDS}")
        if self.kind == "entropic" and not self.gamma > 0:
            raise ValueError("entropic risk requires gamma > 0")


@dataclass
class ValuationResult:
    w0: float
    w0_per_capita: float
    risk_at_solution: float
    iterations: int
    stderr: float
    bracket: tuple[float, float]


def terminal_wealth(w0: float, returns, claims) -> np.ndarray | float:
    """Iterate w_t = R_t w_{t-1} - c_t and return w_T.

    ``returns`` and ``claims`` are (T,) for one path or (N, T) for a
    batch; wealth may go negative, in which case returns compound the
    debt symmetrically.
    """
    returns = np.atleast_2d(np.asarray(returns, dtype=float))
    claims = np.atleast_2d(np.asarray(claims, dtype=float))
    if returns.shape != claims.shape:
        raise ValueError("returns and claims must have matching shapes")
    if np.any(returns <= 0):
        raise ValueError("returns must be positive")
    wealth = np.full(returns.shape[0], float(w0))
    for t in range(returns.shape[1]):
        wealth = returns[:, t] * wealth - claims[:, t]
    return wealth if wealth.shape[0] > 1 else float(wealth[0])


def wealth_coefficients(returns, claims) -> tuple[np.ndarray, np.ndarray]:
    """Per-scenario (G, H) with w_T = w0 * G - H (closed form).

    G is the full return product, H the claims accumulated at the
    between-payment return products.
    """
    returns = np.atleast_2d(np.asarray(returns, dtype=float))
    claims = np.atleast_2d(np.asarray(claims, dtype=float))
    n, T = returns.shape
    suffix = np.ones((n, T + 1))
    for t in range(T - 1, -1, -1):
        suffix[:, t] = suffix[:, t + 1] * returns[:, t]
    growth = suffix[:, 0]
    liability = np.einsum("nt,nt->n", suffix[:, 1:], claims)
    return growth, liability


def entropic_rho(samples, gamma: float, weights=None) -> float:
    """Entropic risk (1/gamma) log E[exp(-gamma X)].

    Evaluated with a max shift (log-sum-exp), so no intermediate overflows
    for |gamma * X| up to about 1e6.  ``weights`` gives an explicit
    probability vector; equal weights otherwise.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("entropic risk of an empty sample")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    a = -gamma * x
    if weights is None:
        log_w = -np.log(x.size)
        shift = np.max(a)
        return float((shift + np.log(np.sum(np.exp(a - shift))) + log_w) / gamma)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != x.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative, same length as samples")
    a = a + np.log(w / w.sum())
    shift = np.max(a)
    return float((shift + np.log(np.sum(np.exp(a - shift)))) / gamma)


def entropic_rho_stderr(samples, gamma: float) -> float:
    """Delta-method standard error of the Monte Carlo entropic risk.

    With Y = exp(-gamma X): se(rho_hat) = sd(Y) / (gamma * mean(Y) * sqrt(N)),
    computed under the same max shift (the shift cancels in the ratio).
    """
    x = np.asarray(samples, dtype=float).ravel()
    a = -gamma * x
    shift = np.max(a)
    y = np.exp(a - shift)
    mean = y.mean()
    sd = y.std(ddof=1) if y.size > 1 else 0.0
    return float(sd / (gamma * mean * np.sqrt(y.size)))


def risk_value(samples, spec: RiskSpec) -> float:
    """Risk functional oriented so that acceptability is risk <= 0.

    Entropic: the entropic risk itself.  Risk-neutral: -mean(X), so the
    mean-nonnegativity criterion shares the same sign convention.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("risk of an empty sample")
    if spec.kind == "entropic":
        return entropic_rho(x, spec.gamma)
    return float(-x.mean())


def risk_stderr(samples, spec: RiskSpec) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    if spec.kind == "entropic":
        return entropic_rho_stderr(x, spec.gamma)
    return float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def acceptable(samples, spec: RiskSpec) -> tuple[bool, float]:
    """Whether terminal wealths pass the criterion, with the risk value."""
    rho = risk_value(samples, spec)
    return rho <= 0.0, rho


def solve_min_capital(
    returns,
    claims,
    spec: RiskSpec,
    tol: float = 1e-4,
    members: int = 1,
    max_doublings: int = 60,
) -> ValuationResult:
    """Smallest initial capital whose terminal wealth is acceptable.

    ``returns`` and ``claims`` are (N, T) arrays for one fixed scenario
    set, reused for every trial w0 (common random numbers).  The search
    runs per capita: claims are divided by ``members`` and the entropic
    criterion is applied to per-capita terminal wealth, which keeps the
    deterministic-mode (systematic-only) value independent of the pool
    size and makes the binomial value converge to it as the pool grows.

    Bisection tightens the bracket until its width is below ``tol`` and
    the per-capita risk at the returned (acceptable) endpoint is within
    ``tol`` of zero.
    """
    if members < 1:
        raise ValueError("members must be >= 1")
    growth, liability = wealth_coefficients(returns, np.asarray(claims, dtype=float) / members)

    def risk(w0: float) -> float:
        return risk_value(w0 * growth - liability, spec)

    # bracket seeded near four times the best-estimate scale
    seed = 4.0 * liability.mean() / growth.mean() if growth.mean() > 0 else 1.0
    lo, hi = 0.0, max(seed, 1.0) if np.isfinite(seed) else 1.0
    iterations = 0
    for _ in range(max_doublings):
        if risk(hi) <= 0.0:
            break
        hi *= 2.0
        iterations += 1
    else:
        raise ArithmeticError(
            f"no acceptable capital found after {max_doublings} bracket doublings"
        )
    if risk(lo) <= 0.0:
        lo = -1.0
        for _ in range(max_doublings):
            if risk(lo) > 0.0:
                break
            lo *= 2.0
            iterations += 1
        else:
            raise ArithmeticError(
                f"every capital level is acceptable after {max_doublings} bracket doublings"
            )

    rho_hi = risk(hi)
    while hi - lo >= tol or abs(rho_hi) > tol:
        iterations += 1
        if iterations > 200:
            break
        mid = 0.5 * (lo + hi)
        rho_mid = risk(mid)
        if rho_mid <= 0.0:
            hi, rho_hi = mid, rho_mid
        else:
            lo = mid

    wealth = hi * growth - liability
    return ValuationResult(
        w0=hi * members,
        w0_per_capita=hi,
        risk_at_solution=rho_hi,
        iterations=iterations,
        stderr=risk_stderr(wealth, spec),
        bracket=(lo, hi),
    )


def risk_neutral_value(returns, claims, with_stderr: bool = False):
    """Capital making the expected terminal wealth zero.

    Monte Carlo estimate of E[sum_t (prod_{s>t} R_s) c_t] / E[prod_s R_s];
    algebraically identical to the risk-neutral minimal capital on the
    same scenario set.  ``with_stderr`` adds the delta-method standard
    error of the ratio estimator.
    """
    growth, liability = wealth_coefficients(returns, claims)
    if growth.size == 0:
        raise ValueError("empty scenario set")
    value = float(liability.mean() / growth.mean())
    if not with_stderr:
        return value
    if growth.size < 2:
        return value, 0.0
    resid = liability - value * growth
    se = float(resid.std(ddof=1) / (growth.mean() * np.sqrt(growth.size)))
    return value, se


def best_estimate_value(returns, claims, with_stderr: bool = False, n_batches: int = 20):
    """Expected claims discounted at expected returns.

    sum_t mean(c_t) / prod_{s<=t} mean(R_s): the valuation convention that
    ignores both return/claim dependence and return autocorrelation.
    ``with_stderr`` adds a batch-means standard error.
    """
    returns = np.atleast_2d(np.asarray(returns, dtype=float))
    claims = np.atleast_2d(np.asarray(claims, dtype=float))
    if returns.size == 0:
        raise ValueError("empty scenario set")

    def value(r, c):
        return float(np.sum(c.mean(axis=0) / np.cumprod(r.mean(axis=0))))

    total = value(returns, claims)
    if not with_stderr:
        return total
    n = returns.shape[0]
    b = min(n_batches, n)
    if b < 2:
        return total, 0.0
    bounds = np.linspace(0, n, b + 1).astype(int)
    batch_values = [value(returns[i:j], claims[i:j]) for i, j in zip(bounds[:-1], bounds[1:])]
    se = float(np.std(batch_values, ddof=1) / np.sqrt(b))
    return total, se
