"""Offline calibration: CSV ingestion, factor MLE series, VAR fit.

Mortality data arrives as HMD-style (year, age, exposure, deaths) rows;
the likelihood works in survivors D = exposure - deaths.  Market data
arrives as annual levels (bond yield in percent, equity total-return
index, CPI, per-capita GDP) and is mapped to the state coordinates by
logs, with the CPI level differenced into one-period log changes.

The dynamics are estimated equation by equation: Delta x_i is regressed
on the lagged coordinates allowed by the coupling mask plus an intercept,
with user-pinned coefficients subtracted from the response before the
least squares.  The innovation covariance is the sample covariance of the
stacked residuals.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mortality import (
    AGE_MAX,
    AGE_MIN,
    EstimationError,
    MortalityObservation,
    PiecewiseLinearBasis,
    fit_year_mle,
)
from .parameters import DEFAULT_COUPLING, STATE_DIM, STATE_FIELDS
from .scenarios import EconomyParams


@dataclass(frozen=True)
class MortalityDataset:
    """(year, age, exposure, deaths) rows with survivors derived."""

    years: np.ndarray
    ages: np.ndarray
    exposures: np.ndarray
    deaths: np.ndarray

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        ages = np.asarray(self.ages, dtype=int)
        expo = np.asarray(self.exposures, dtype=np.int64)
        dead = np.asarray(self.deaths, dtype=np.int64)
        if not (years.shape == ages.shape == expo.shape == dead.shape) or years.ndim != 1:
            raise ValueError("dataset columns must be 1-d and equal length")
        if np.any(dead < 0) or np.any(dead > expo):
            raise ValueError("deaths must satisfy 0 <= deaths <= exposure")
        if np.any(ages < AGE_MIN) or np.any(ages > AGE_MAX):
            raise ValueError(f"ages must lie in [{AGE_MIN}, {AGE_MAX}]")
        if years.size:
            span = np.arange(years.min(), years.max() + 1)
            if set(span) != set(years.tolist()):
                raise ValueError("years must be contiguous")
        for attr, arr in (("years", years), ("ages", ages), ("exposures", expo), ("deaths", dead)):
            object.__setattr__(self, attr, arr)

    @property
    def survivors(self) -> np.ndarray:
        return self.exposures - self.deaths

    def year_span(self) -> list[int]:
        return sorted(set(self.years.tolist()))

    def observation_for(self, year: int) -> MortalityObservation:
        mask = self.years == year
        if not mask.any():
            raise ValueError(f"no rows for year {year}")
        return MortalityObservation(
            ages=self.ages[mask],
            exposures=self.exposures[mask],
            survivors=self.survivors[mask],
        )


def load_mortality_csv(path) -> MortalityDataset:
    """Read a (year, age, exposure, deaths) CSV.

    Non-integer exposures are rounded to the nearest integer with a
    warning; malformed rows raise with their line number.
    """
    years, ages, expos, deads = [], [], [], []
    rounded = False
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = [h.strip() for h in next(reader, [])]
        if header != ["year", "age", "exposure", "deaths"]:
            raise ValueError(f"{path}: expected header year,age,exposure,deaths, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                year = int(row[0])
                age = int(row[1])
                exposure = float(row[2])
                deaths = int(float(row[3]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
            if exposure != round(exposure):
                rounded = True
            exposure = int(round(exposure))
            if deaths > exposure:
                raise ValueError(f"{path}:{lineno}: deaths {deaths} exceed exposure {exposure}")
            years.append(year)
            ages.append(age)
            expos.append(exposure)
            deads.append(deaths)
    if rounded:
        warnings.warn(f"{path}: non-integer exposures rounded to the nearest integer")
    if not years:
        warnings.warn(f"{path}: no data rows, returning an empty dataset")
    return MortalityDataset(
        years=np.array(years, dtype=int),
        ages=np.array(ages, dtype=int),
        exposures=np.array(expos, dtype=np.int64),
        deaths=np.array(deads, dtype=np.int64),
    )


@dataclass(frozen=True)
class MarketDataset:
    """Annual market levels aligned by year: yield (percent), equity
    total-return index, CPI, per-capita GDP."""

    years: np.ndarray
    bond_yield: np.ndarray
    equity_index: np.ndarray
    cpi: np.ndarray
    gdp_per_capita: np.ndarray

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        series = {
            "bond_yield": np.asarray(self.bond_yield, dtype=float),
            "equity_index": np.asarray(self.equity_index, dtype=float),
            "cpi": np.asarray(self.cpi, dtype=float),
            "gdp_per_capita": np.asarray(self.gdp_per_capita, dtype=float),
        }
        for name, arr in series.items():
            if arr.shape != years.shape:
                raise ValueError(f"{name} must align with years")
            if np.any(arr <= 0):
                raise ValueError(f"{name} levels must be positive")
        if years.size and np.any(np.diff(years) != 1):
            raise ValueError("market years must be contiguous and sorted")
        object.__setattr__(self, "years", years)
        for name, arr in series.items():
            object.__setattr__(self, name, arr)


def load_market_csv(path) -> MarketDataset:
    """Read a (year, bond_yield, equity_index, cpi, gdp_per_capita) CSV."""
    expected = ["year", "bond_yield", "equity_index", "cpi", "gdp_per_capita"]
    cols: dict[str, list] = {name: [] for name in expected}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = [h.strip() for h in next(reader, [])]
        if header != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                cols["year"].append(int(row[0]))
                for name, cell in zip(expected[1:], row[1:]):
                    cols[name].append(float(cell))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
    return MarketDataset(
        years=np.array(cols["year"], dtype=int),
        bond_yield=np.array(cols["bond_yield"]),
        equity_index=np.array(cols["equity_index"]),
        cpi=np.array(cols["cpi"]),
        gdp_per_capita=np.array(cols["gdp_per_capita"]),
    )


def fit_factor_series(
    data: MortalityDataset,
    basis: Optional[PiecewiseLinearBasis] = None,
    tol: float = 1e-8,
) -> tuple[list[int], np.ndarray]:
    """Yearly maximum-likelihood factors (years, V) with V of shape
    (n_years, n_functions)."""
    basis = basis or PiecewiseLinearBasis()
    years = data.year_span()
    out = np.empty((len(years), basis.n_functions))
    for row, year in enumerate(years):
        try:
            out[row] = fit_year_mle(data.observation_for(year), basis, tol=tol)
        except EstimationError as exc:
            raise EstimationError(f"year {year}: {exc}", exc.last_iterate) from None
    return years, out


def build_state_series(
    factor_years: list[int],
    factors: np.ndarray,
    market: MarketDataset,
) -> tuple[list[int], np.ndarray]:
    """Merge factor and market series into yearly state vectors.

    The CPI log change for year t needs the year t-1 CPI level, so the
    first usable year is one past the start of the market series.
    """
    market_years = market.years.tolist()
    usable = [y for y in factor_years if y in market_years and (y - 1) in market_years]
    if not usable:
        raise ValueError("no overlapping years between mortality factors and market data")
    if usable != list(range(usable[0], usable[-1] + 1)):
        raise ValueError("overlapping years are not contiguous")
    states = np.empty((len(usable), STATE_DIM))
    for row, year in enumerate(usable):
        states[row, :3] = factors[factor_years.index(year)]
        m = market_years.index(year)
        states[row, 3] = np.log(market.gdp_per_capita[m])
        states[row, 4] = np.log(market.bond_yield[m])
        states[row, 5] = np.log(market.equity_index[m])
        states[row, 6] = np.log(market.cpi[m]) - np.log(market.cpi[m - 1])
    return usable, states


@dataclass(frozen=True)
class VarFitSpec:
    """Which drift-matrix entries are free, and which coefficients are pinned.

    ``coupling`` lists (row, col) pairs of A that may be nonzero; pins map
    coefficient names like "b5" or "a34" (1-based positions) to fixed
    values and are excluded from the regression.
    """

    coupling: tuple[tuple[int, int], ...] = DEFAULT_COUPLING
    pinned: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for i, j in self.coupling:
            if not (0 <= i < STATE_DIM and 0 <= j < STATE_DIM):
                raise ValueError(f"coupling entry ({i}, {j}) out of range")
        for key in self.pinned:
            self._parse_pin(key)

    @staticmethod
    def _parse_pin(key: str) -> tuple[str, int, int]:
        if len(key) == 2 and key[0] == "b" and key[1].isdigit():
            i = int(key[1]) - 1
            if 0 <= i < STATE_DIM:
                return "b", i, -1
        if len(key) == 3 and key[0] == "a" and key[1:].isdigit():
            i, j = int(key[1]) - 1, int(key[2]) - 1
            if 0 <= i < STATE_DIM and 0 <= j < STATE_DIM:
                return "a", i, j
        raise ValueError(f"unknown pin {key!r} (use e.g. 'b5' or 'a34')")


def fit_var(series: np.ndarray, spec: Optional[VarFitSpec] = None) -> EconomyParams:
    """Estimate the state dynamics from a yearly state series.

    Per-equation ordinary least squares of Delta x_i on the allowed
    lagged coordinates and an intercept; pinned coefficients keep their
    given values, with their contribution removed from the response.
    """
    spec = spec or VarFitSpec()
    series = np.asarray(series, dtype=float)
    if series.ndim != 2 or series.shape[1] != STATE_DIM:
        raise ValueError(f"series must have shape (n_years, {STATE_DIM})")
    n_obs = series.shape[0] - 1
    lagged = series[:-1]
    delta = np.diff(series, axis=0)

    pins: dict[tuple[str, int, int], float] = {
        VarFitSpec._parse_pin(key): value for key, value in spec.pinned.items()
    }
    drift_matrix = np.zeros((STATE_DIM, STATE_DIM))
    intercept = np.zeros(STATE_DIM)
    residuals = np.empty((n_obs, STATE_DIM))

    for i in range(STATE_DIM):
        free_cols = [j for (r, j) in spec.coupling if r == i and ("a", i, j) not in pins]
        intercept_free = ("b", i, -1) not in pins
        response = delta[:, i].copy()
        for (kind, r, j), value in pins.items():
            if r != i:
                continue
            if kind == "a":
                drift_matrix[i, j] = value
                response -= value * lagged[:, j]
            else:
                intercept[i] = value
                response -= value
        columns = [lagged[:, j] for j in free_cols]
        if intercept_free:
            columns.append(np.ones(n_obs))
        n_free = len(columns)
        if n_free == 0:
            residuals[:, i] = response
            continue
        if n_obs < n_free + 3:
            raise EstimationError(
                f"equation {i + 1} ({STATE_FIELDS[i]}): {n_obs} observations for "
                f"{n_free} free parameters; need at least {n_free + 3}"
            )
        design = np.column_stack(columns)
        coef, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
        if rank < n_free:
            raise EstimationError(
                f"equation {i + 1} ({STATE_FIELDS[i]}): rank-deficient regressors"
            )
        for col, j in enumerate(free_cols):
            drift_matrix[i, j] = coef[col]
        if intercept_free:
            intercept[i] = coef[-1]
        residuals[:, i] = response - design @ coef

    if n_obs > 1:
        covariance = np.cov(residuals, rowvar=False, ddof=1)
    else:
        covariance = np.zeros((STATE_DIM, STATE_DIM))
    return EconomyParams(A=drift_matrix, b=intercept, sigma=covariance)


def save_parameters(path, params: EconomyParams, x0, basis: Optional[PiecewiseLinearBasis] = None) -> None:
    """Write a JSON parameter file loadable by the scenario layer."""
    basis = basis or PiecewiseLinearBasis()
    payload = {
        "A": params.A.tolist(),
        "b": params.b.tolist(),
        "sigma": params.sigma.tolist(),
        "bond_duration": params.bond_duration,
        "dt": params.dt,
        "yield_in_percent": params.yield_in_percent,
        "x0": np.asarray(x0, dtype=float).tolist(),
        "basis_knots": list(basis.knots),
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def load_parameters(path) -> tuple[EconomyParams, np.ndarray, PiecewiseLinearBasis]:
    """Read a parameter file written by :func:`save_parameters`."""
    with open(path) as handle:
        payload = json.load(handle)
    params = EconomyParams(
        A=np.array(payload["A"], dtype=float),
        b=np.array(payload["b"], dtype=float),
        sigma=np.array(payload["sigma"], dtype=float),
        bond_duration=float(payload.get("bond_duration", 1.0)),
        dt=float(payload.get("dt", 1.0)),
        yield_in_percent=bool(payload.get("yield_in_percent", True)),
    )
    x0 = np.array(payload["x0"], dtype=float)
    basis = PiecewiseLinearBasis(tuple(payload.get("basis_knots", (18.0, 50.0, 100.0))))
    return params, x0, basis
