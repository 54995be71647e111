"""Joint Monte Carlo paths of the systematic risk factors.

The seven factors (see ``parameters.STATE_FIELDS``) follow the linear
stochastic difference equation

    x_t = x_{t-1} + A x_{t-1} + b + eps_t,

with Gaussian innovations eps_t ~ N(0, Sigma) sampled either as plain
i.i.d. draws or by Latin hypercube stratification.  From a batch of state
paths the module derives one-period bond and equity returns, the benefit
index ratio I_t/I_0 implied by the CPI log changes, and cohort survival
probabilities.

Generation is deterministic for a fixed master seed and independent of
the worker count: all random numbers are drawn in a single pass up front,
and workers only transform disjoint scenario slices.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .mortality import PiecewiseLinearBasis, stable_sigmoid
from .parameters import STATE_DIM, STATE_FIELDS

_Y = STATE_FIELDS.index("y")
_S = STATE_FIELDS.index("s")
_P = STATE_FIELDS.index("p")

_PSD_TOL = 1e-10
_P_TINY = float(np.finfo(float).tiny)


@dataclass
class EconomyParams:
    """Coefficients of the state dynamics plus return conventions.

    ``sigma`` is symmetrized on construction and, when it has eigenvalues
    in [-1e-10, 0), projected to the nearest PSD matrix by clipping them
    at zero; more negative eigenvalues are rejected.  The adjustments are
    recorded in ``sigma_asymmetry`` and ``sigma_eigenvalue_clip``.

    ``yield_in_percent`` selects whether exp(y) is a percentage (default,
    matching the shipped calibration where the stationary log yield 0.9187
    means a 2.5% yield) or a decimal rate.
    """

    A: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    bond_duration: float = 1.0
    dt: float = 1.0
    yield_in_percent: bool = True
    sigma_asymmetry: float = field(init=False, default=0.0)
    sigma_eigenvalue_clip: float = field(init=False, default=0.0)

    def __post_init__(self):
        a = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        s = np.array(self.sigma, dtype=float)
        if a.shape != (STATE_DIM, STATE_DIM):
            raise ValueError(f"A must be {STATE_DIM}x{STATE_DIM}")
        if b.shape != (STATE_DIM,):
            raise ValueError(f"b must have length {STATE_DIM}")
        if s.shape != (STATE_DIM, STATE_DIM):
            raise ValueError(f"sigma must be {STATE_DIM}x{STATE_DIM}")
        self.sigma_asymmetry = float(np.max(np.abs(s - s.T)))
        s = (s + s.T) / 2.0
        eigvals = np.linalg.eigvalsh(s)
        if eigvals[0] < -_PSD_TOL:
            raise ValueError(
                f"sigma is not positive semidefinite (min eigenvalue {eigvals[0]:.3e})"
            )
        if eigvals[0] < 0.0:
            w, vecs = np.linalg.eigh(s)
            self.sigma_eigenvalue_clip = float(-w[0])
            s = (vecs * np.clip(w, 0.0, None)) @ vecs.T
            s = (s + s.T) / 2.0
        self.A, self.b, self.sigma = a, b, s

    def innovation_factor(self) -> np.ndarray:
        """Factor L with L L' = sigma, lower Cholesky when sigma is
        positive definite, eigenvalue square root otherwise."""
        try:
            return np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError:
            w, vecs = np.linalg.eigh(self.sigma)
            return vecs * np.sqrt(np.clip(w, 0.0, None))


def step_state(x, params: EconomyParams, eps) -> np.ndarray:
    """One step of the difference equation: x + A x + b + eps.

    Works on a single state (7,) or a batch (N, 7).
    """
    x = np.asarray(x, dtype=float)
    return x + x @ params.A.T + params.b + np.asarray(eps, dtype=float)


@dataclass(frozen=True)
class InnovationBlock:
    """Gaussian innovations for a scenario batch, shape (N, T, 7)."""

    eps: np.ndarray
    master_seed: int
    sampling_mode: str


def sample_innovations(
    n_scenarios: int,
    horizon: int,
    params: EconomyParams,
    master_seed: int,
    mode: str = "lhs",
) -> InnovationBlock:
    """Draw N x T x 7 innovations with covariance ``params.sigma``.

    ``mode="lhs"``: for each of the 7*T marginal coordinates, one uniform
    draw inside each probability stratum of width 1/N, independently
    permuted across scenarios, mapped through the standard normal inverse
    CDF, then correlated with the covariance factor.  ``mode="plain"``:
    i.i.d. multivariate normal.  Bit-reproducible given the master seed.
    """
    if n_scenarios < 1 or horizon < 1:
        raise ValueError("n_scenarios and horizon must be >= 1")
    if mode not in ("lhs", "plain"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    factor = params.innovation_factor()
    rng = np.random.default_rng(master_seed)
    if mode == "plain":
        z = rng.standard_normal((n_scenarios, horizon, STATE_DIM))
    else:
        u = np.empty((n_scenarios, horizon * STATE_DIM))
        for c in range(horizon * STATE_DIM):
            u[:, c] = (rng.permutation(n_scenarios) + rng.random(n_scenarios)) / n_scenarios
        # guard the open interval; u = 0.0 is possible at float resolution
        np.clip(u, _P_TINY, 1.0 - 1e-16, out=u)
        z = ndtri(u).reshape(n_scenarios, horizon, STATE_DIM)
    eps = z.reshape(-1, STATE_DIM) @ factor.T
    return InnovationBlock(
        eps=eps.reshape(n_scenarios, horizon, STATE_DIM),
        master_seed=master_seed,
        sampling_mode=mode,
    )


def bond_return(y_prev, y_curr, params: EconomyParams):
    """One-period government bond return exp(Y dt - D dY).

    Y = exp(y) is the yield to maturity; under the percent convention both
    the carry term and the yield change are divided by 100.
    """
    y_prev = np.asarray(y_prev, dtype=float)
    y_curr = np.asarray(y_curr, dtype=float)
    scale = 100.0 if params.yield_in_percent else 1.0
    yld_prev = np.exp(y_prev)
    yld_curr = np.exp(y_curr)
    return np.exp((yld_prev * params.dt - params.bond_duration * (yld_curr - yld_prev)) / scale)


def equity_return(s_prev, s_curr):
    """Total equity return S_t / S_{t-1} from log index levels."""
    return np.exp(np.asarray(s_curr, dtype=float) - np.asarray(s_prev, dtype=float))


def index_ratio_path(states) -> np.ndarray:
    """Benefit index ratios I_t/I_0 along a state path.

    ``states`` has shape (..., T+1, 7); the ratio at time t is
    exp(p_1 + ... + p_t), 1 at t = 0.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim < 2 or states.shape[-1] != STATE_DIM:
        raise ValueError("states must have shape (..., T+1, 7)")
    log_ratio = np.cumsum(states[..., 1:, _P], axis=-1)
    ones = np.ones(states.shape[:-2] + (1,))
    return np.concatenate([ones, np.exp(log_ratio)], axis=-1)


def portfolio_return(asset_returns, weights):
    """Return per unit of wealth for fixed asset proportions.

    ``asset_returns`` has the assets on the trailing axis; ``weights``
    must be nonnegative and sum to one within 1e-12.
    """
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"strategy weights must sum to 1, got {w.sum()!r}")
    if np.any(w < 0.0):
        raise ValueError("strategy weights must be nonnegative (long-only)")
    r = np.asarray(asset_returns, dtype=float)
    if r.shape[-1] != len(w):
        raise ValueError("asset axis does not match the number of weights")
    return r @ w


@dataclass
class Scenario:
    """One sampled joint path with its derived quantities."""

    states: np.ndarray        # (T+1, 7)
    bond_returns: np.ndarray  # (T,)
    equity_returns: np.ndarray  # (T,)
    index_ratio: np.ndarray   # (T+1,)
    survival: dict[int, np.ndarray]  # start age -> (T,), p over [t, t+1)


@dataclass
class ScenarioSet:
    """A batch of scenarios stored as arrays with the scenario axis first.

    ``survival[a]`` holds, for a cohort aged ``a`` at time 0, the one-year
    survival probabilities along its own age diagonal: entry [n, t] is the
    probability that an (a+t)-year-old at time t survives to t+1, using
    the time-t mortality factors of scenario n.
    """

    states: np.ndarray          # (N, T+1, 7)
    bond_returns: np.ndarray    # (N, T)
    equity_returns: np.ndarray  # (N, T)
    index_ratio: np.ndarray     # (N, T+1)
    survival: dict[int, np.ndarray]
    master_seed: Optional[int] = None
    sampling_mode: str = "lhs"
    basis: PiecewiseLinearBasis = field(default_factory=PiecewiseLinearBasis)

    @property
    def n_scenarios(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def scenario(self, i: int) -> Scenario:
        return Scenario(
            states=self.states[i],
            bond_returns=self.bond_returns[i],
            equity_returns=self.equity_returns[i],
            index_ratio=self.index_ratio[i],
            survival={a: s[i] for a, s in self.survival.items()},
        )

    def portfolio_returns(self, weights) -> np.ndarray:
        """(N, T) portfolio returns for fixed proportions over (bond, equity)."""
        stacked = np.stack([self.bond_returns, self.equity_returns], axis=-1)
        return portfolio_return(stacked, weights)


def _survival_diagonal(states, basis: PiecewiseLinearBasis, start_age: int) -> np.ndarray:
    horizon = states.shape[-2] - 1
    ages = start_age + np.arange(horizon)
    phi = basis.evaluate(ages)  # (T, n)
    logits = np.einsum("...tk,tk->...t", states[..., :horizon, : basis.n_functions], phi)
    return stable_sigmoid(logits)


def generate_scenarios(
    params: EconomyParams,
    x0,
    n_scenarios: int,
    horizon: int,
    master_seed: int,
    mode: str = "lhs",
    basis: Optional[PiecewiseLinearBasis] = None,
    ages: tuple[int, ...] = (65,),
    workers: int = 1,
) -> ScenarioSet:
    """Simulate N joint scenarios of length T.

    ``ages`` lists cohort starting ages; survival probabilities are
    produced along each cohort's age diagonal (ages a .. a+T-1 must stay
    within the basis domain).  ``workers`` > 1 splits the deterministic
    path transformation over threads; the output is bitwise independent
    of the worker count because all innovations are drawn up front.
    """
    basis = basis or PiecewiseLinearBasis()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (STATE_DIM,):
        raise ValueError(f"x0 must have length {STATE_DIM}")
    block = sample_innovations(n_scenarios, horizon, params, master_seed, mode)
    eps = block.eps

    states = np.empty((n_scenarios, horizon + 1, STATE_DIM))
    bond = np.empty((n_scenarios, horizon))
    equity = np.empty((n_scenarios, horizon))
    index = np.empty((n_scenarios, horizon + 1))
    survival = {a: np.empty((n_scenarios, horizon)) for a in ages}

    def build(lo: int, hi: int):
        chunk = states[lo:hi]
        chunk[:, 0] = x0
        for t in range(horizon):
            chunk[:, t + 1] = step_state(chunk[:, t], params, eps[lo:hi, t])
        bond[lo:hi] = bond_return(chunk[:, :-1, _Y], chunk[:, 1:, _Y], params)
        equity[lo:hi] = equity_return(chunk[:, :-1, _S], chunk[:, 1:, _S])
        index[lo:hi] = index_ratio_path(chunk)
        for a in ages:
            survival[a][lo:hi] = _survival_diagonal(chunk, basis, a)

    if workers <= 1 or n_scenarios < 2 * workers:
        build(0, n_scenarios)
    else:
        bounds = np.linspace(0, n_scenarios, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(build, bounds[k], bounds[k + 1]) for k in range(workers)]
            for f in futures:
                f.result()

    return ScenarioSet(
        states=states,
        bond_returns=bond,
        equity_returns=equity,
        index_ratio=index,
        survival=survival,
        master_seed=master_seed,
        sampling_mode=mode,
        basis=basis,
    )


_CSV_HEADER = ["scenario", "t", *STATE_FIELDS, "Rb", "Rs", "I_ratio"]


def save_scenarios_csv(path, sset: ScenarioSet) -> None:
    """Write one row per scenario-period; floats carry 17 significant
    digits so a reload reproduces the set bit-exactly."""

    def fmt(x: float) -> str:
        return f"{x:.17g}"

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_HEADER)
        for n in range(sset.n_scenarios):
            for t in range(sset.horizon + 1):
                row = [str(n), str(t)]
                row += [fmt(x) for x in sset.states[n, t]]
                if t == 0:
                    row += ["", ""]
                else:
                    row += [fmt(sset.bond_returns[n, t - 1]), fmt(sset.equity_returns[n, t - 1])]
                row.append(fmt(sset.index_ratio[n, t]))
                writer.writerow(row)


def load_scenarios_csv(
    path,
    basis: Optional[PiecewiseLinearBasis] = None,
    ages: tuple[int, ...] = (),
) -> ScenarioSet:
    """Reload a scenario set written by :func:`save_scenarios_csv`.

    Survival probabilities are recomputed from the states for the
    requested cohort ``ages`` (they are deterministic given the states,
    so bit-exactness of the states carries over).
    """
    basis = basis or PiecewiseLinearBasis()
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected scenario CSV header: {header}")
        rows = list(reader)
    if not rows:
        raise ValueError("scenario CSV has no data rows")
    n_scenarios = int(rows[-1][0]) + 1
    horizon = int(rows[-1][1])
    states = np.empty((n_scenarios, horizon + 1, STATE_DIM))
    bond = np.empty((n_scenarios, horizon))
    equity = np.empty((n_scenarios, horizon))
    index = np.empty((n_scenarios, horizon + 1))
    for row in rows:
        n, t = int(row[0]), int(row[1])
        states[n, t] = [float(x) for x in row[2 : 2 + STATE_DIM]]
        if t > 0:
            bond[n, t - 1] = float(row[2 + STATE_DIM])
            equity[n, t - 1] = float(row[3 + STATE_DIM])
        index[n, t] = float(row[4 + STATE_DIM])
    survival = {a: _survival_diagonal(states, basis, a) for a in ages}
    return ScenarioSet(
        states=states,
        bond_returns=bond,
        equity_returns=equity,
        index_ratio=index,
        survival=survival,
        master_seed=None,
        sampling_mode="loaded",
        basis=basis,
    )
