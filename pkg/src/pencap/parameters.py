"""Shipped default model parameters.

Coefficients of the risk-factor dynamics calibrated to US female
mortality (Human Mortality Database) and US market data (1-year Treasury
yield, S&P total-return index, CPI, per-capita GDP) over 1953-2007.

State vector order: v1, v2, v3 (survival-curve logits at ages 18/50/100),
g (log per-capita GDP), y (log bond yield, yield in percent), s (log
equity total-return index), p (one-period log CPI change).

Only five coupling coefficients are nonzero: the three mortality logits
mean-revert (v3 additionally trends with log GDP), the log yield
mean-reverts toward log 2.5 (a 2.5% yield), and the CPI log change
mean-reverts.  Log GDP and the log equity index are random walks with
drift.  Three drift entries are conventions rather than estimates: the
yield drift pins the 2.5% mean-reversion level, the equity drift pins a
6% average annual return, and the CPI drift pins a 2% mean-reversion
inflation level (CPI_DRIFT_PRINTED preserves an alternate reading of the
same calibration that implies a 19.8% level; see README).
"""

from __future__ import annotations

import numpy as np

STATE_FIELDS = ("v1", "v2", "v3", "g", "y", "s", "p")
STATE_DIM = 7

# Nonzero coupling pattern of the drift matrix: (row, column) pairs for
# v1<-v1, v3<-v3, v3<-g, y<-y, p<-p.
DEFAULT_COUPLING = ((0, 0), (2, 2), (2, 3), (4, 4), (6, 6))

DEFAULT_A = np.zeros((STATE_DIM, STATE_DIM))
DEFAULT_A[0, 0] = -0.0302
DEFAULT_A[2, 2] = -0.181
DEFAULT_A[2, 3] = 0.0831
DEFAULT_A[4, 4] = -0.209
DEFAULT_A[6, 6] = -0.192
DEFAULT_A.flags.writeable = False

# CPI drift consistent with the stated 2% inflation mean-reversion level
# (-b_p / a_pp = 0.0198 = log 1.02).  The alternate printed reading 0.038
# implies a 19.8% level and is kept available as an explicit override.
DEFAULT_CPI_DRIFT = 0.0038
CPI_DRIFT_PRINTED = 0.038

DEFAULT_B = np.array([0.243, 0.0139, -0.673, 0.0201, 0.192, 0.0583, DEFAULT_CPI_DRIFT])
DEFAULT_B.flags.writeable = False

# Innovation covariance as published with the calibration; not exactly
# symmetric as printed, symmetrized on load by EconomyParams.
DEFAULT_SIGMA = np.array(
    [
        [0.0027, 0.0007, 0.0014, -0.0004, 0.0002, 0.0024, 0.0003],
        [0.0007, 0.0006, 0.0004, -0.0000, 0.0014, 0.0010, 0.0001],
        [0.0014, 0.0004, 0.0032, -0.0004, -0.0014, 0.0000, 0.0003],
        [-0.0004, -0.0000, -0.0004, 0.0005, 0.0031, -0.0004, 0.0001],
        [0.0002, 0.0014, -0.0014, 0.0031, 0.0947, 0.0011, 0.0035],
        [0.0024, 0.0010, 0.0000, -0.0004, 0.0011, 0.0246, -0.0010],
        [0.0000, 0.0001, 0.0001, 0.0001, 0.0002, 0.0005, 0.0002],
    ]
)
DEFAULT_SIGMA.flags.writeable = False

# 2007-vintage initial state assembled from public statistics (the
# calibration's last observed year):
#   v1 = logit of US female one-year survival at age 18  (~0.9998)
#   v2 = logit at age 50                                  (~0.9970)
#   v3 = logit at age 100                                 (~0.6460)
#   g  = log 2007 US per-capita GDP (current $48,061)
#   y  = log 2007 average 1-year Treasury yield (4.52, in percent)
#   s  = log equity total-return index, normalized to 1 at t=0
#   p  = 2007 log CPI change (annual average, ~2.8%)
DEFAULT_X0 = np.array(
    [8.5, 5.8, 0.60, np.log(48061.0), np.log(4.52), 0.0, 0.028]
)
DEFAULT_X0.flags.writeable = False


def default_economy_params(cpi_drift: float | None = None):
    """EconomyParams with the shipped 1953-2007 calibration.

    ``cpi_drift`` overrides the CPI drift entry (e.g. CPI_DRIFT_PRINTED
    for the 19.8% mean-reversion reading).
    """
    from .scenarios import EconomyParams

    b = DEFAULT_B.copy()
    if cpi_drift is not None:
        b[6] = cpi_drift
    return EconomyParams(A=DEFAULT_A.copy(), b=b, sigma=DEFAULT_SIGMA.copy())
