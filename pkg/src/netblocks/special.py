"""Scalar special functions usable from both Python and jitted kernels."""

import math

import numba
import numpy as np

# Bernoulli-number coefficients B_2n / 2n for the asymptotic expansion of psi.
_PSI_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


@numba.njit(cache=True, inline="always")
def digamma_scalar(x):
    """Digamma (derivative of log Gamma) for x > 0; NaN otherwise.

    Uses the recurrence psi(x) = psi(x + 1) - 1/x to lift the argument
    above 6, then the de Moivre asymptotic series.  Accurate to ~1e-13
    relative over the range exercised by Dirichlet posteriors.
    """
    if not x > 0.0:
        return np.nan
    value = 0.0
    while x < 6.0:
        value -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    value += math.log(x) - 0.5 * inv
    inv2 = inv * inv
    p = inv2
    for c in _PSI_COEF:
        value -= c * p
        p *= inv2
    return value


@numba.vectorize(["float64(float64)"], cache=True)
def digamma(x):
    return digamma_scalar(x)
