"""Closed-form European min-put pricers and deltas.

The pure-diffusion ("non-jump") min-put has a closed form for any asset
count: a single Black-Scholes put for one asset and, for several assets, a
one-dimensional integral of normal c.d.f. products evaluated here with
Gauss-Legendre quadrature.  The single-asset jump model additionally admits a
Poisson-weighted series of Black-Scholes prices, used as a validation oracle.
These functions double as regression basis ingredients, so the single-asset
paths are vectorized over the price argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .model import ModelParams

__all__ = ["EuroPricerConfig", "bs_min_put", "bs_min_put_delta", "merton_put_1d"]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_QUAD_LOWER = -8.0  # standard-normal mass below is ~6e-16, well under tolerance


@dataclass(frozen=True)
class EuroPricerConfig:
    """Numerical controls for the European pricers.

    Attributes:
        quad_nodes: Gauss-Legendre node count for the multi-asset integral.
        series_cutoff: truncation index of the jump-model series.
        tail_tol: bound on the Poisson mass discarded by the truncation.
    """

    quad_nodes: int = 128
    series_cutoff: int = 50
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.quad_nodes < 16:
            raise ValueError("quad_nodes must be at least 16")
        if self.series_cutoff < 0:
            raise ValueError("series_cutoff must be nonnegative")
        if not 0 < self.tail_tol < 1:
            raise ValueError("tail_tol must lie in (0, 1)")


DEFAULT_PRICER_CONFIG = EuroPricerConfig()


@lru_cache(maxsize=8)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _as_price_matrix(x, n_assets: int) -> tuple[np.ndarray, bool]:
    """Normalize x to (B, n_assets); report whether the input was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        single = True
    elif arr.ndim == 1:
        if n_assets == 1:
            arr = arr.reshape(-1, 1)
            single = arr.shape[0] == 1
        else:
            arr = arr.reshape(1, -1)
            single = True
    else:
        single = False
    if arr.shape[-1] != n_assets:
        raise ValueError(f"price vector has {arr.shape[-1]} components, expected {n_assets}")
    return arr, single


def _validate_pricing_inputs(t, x, maturity, params):
    tau = maturity - np.asarray(t, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("maturity must exceed the valuation time")
    if params.sigma <= 0:
        raise ValueError("sigma must be positive for the closed-form pricer")
    if np.any(x <= 0):
        raise ValueError("all prices must be positive")
    return tau if tau.ndim else float(tau)


def _bs_put_1d(x: np.ndarray, sk: float, r: float, delta: float,
               sigma: float, tau) -> np.ndarray:
    """Plain Black-Scholes put on one asset, vectorized over spot and
    time to maturity."""
    srt = sigma * np.sqrt(tau)
    d1 = (np.log(x / sk) + (r - delta + 0.5 * sigma**2) * tau) / srt
    d2 = d1 - srt
    return sk * np.exp(-r * tau) * ndtr(-d2) - x * np.exp(-delta * tau) * ndtr(-d1)


def bs_min_put(t: float, x, maturity: float, params: ModelParams,
               config: EuroPricerConfig = DEFAULT_PRICER_CONFIG):
    """European min-put value under the pure-diffusion model.

    Parameters
    ----------
    t : valuation time; for a single asset a (B,) array is also accepted.
    x : prices, shaped (n_assets,) or (B, n_assets); a scalar or (B,) array
        is accepted for a single asset.
    maturity : option maturity (> t).
    params : model parameters (r, delta, sigma, sk are used).
    config : quadrature controls for the multi-asset case.

    Returns
    -------
    Price(s) with the batch shape of ``x``.
    """
    n = params.n_assets
    xm, single = _as_price_matrix(x, n)
    tau = _validate_pricing_inputs(t, xm, maturity, params)
    single = single and np.ndim(tau) == 0
    if n == 1:
        out = np.atleast_1d(_bs_put_1d(xm[:, 0], params.sk, params.r,
                                       params.delta, params.sigma, tau))
        return float(out[0]) if single else out
    if np.ndim(tau) != 0:
        raise ValueError("array-valued times are supported for one asset only")

    srt = params.sigma * math.sqrt(tau)
    d_plus = (np.log(params.sk / xm) - (params.r - params.delta
                                        - 0.5 * params.sigma**2) * tau) / srt
    d_minus = d_plus - srt

    nodes, weights = _leggauss(config.quad_nodes)
    total = np.zeros(xm.shape[0])
    for l in range(n):
        b = d_minus[:, l]
        half = np.maximum(b - _QUAD_LOWER, 0.0) / 2.0  # empty interval -> 0
        z = (_QUAD_LOWER + half[:, None]) + half[:, None] * nodes[None, :]
        integrand = np.exp(-0.5 * z**2) / _SQRT_2PI
        for lp in range(n):
            if lp == l:
                continue
            c = np.log(xm[:, lp] / xm[:, l]) / srt
            integrand = integrand * ndtr(c[:, None] - z - srt)
        total -= xm[:, l] * math.exp(-params.delta * tau) * half * (integrand @ weights)

    no_exercise = np.prod(1.0 - ndtr(d_plus), axis=1)
    total += math.exp(-params.r * tau) * params.sk * (1.0 - no_exercise)
    return float(total[0]) if single else total


def bs_min_put_delta(t: float, x, maturity: float, asset: int,
                     params: ModelParams,
                     config: EuroPricerConfig = DEFAULT_PRICER_CONFIG):
    """Sensitivity of the min-put value to one asset's price.

    The single-asset case uses the analytic put delta; with several assets a
    central finite difference with relative bump 1e-4 is applied to
    ``bs_min_put``.
    """
    n = params.n_assets
    if not 0 <= asset < n:
        raise ValueError(f"asset index {asset} out of range for {n} assets")
    xm, single = _as_price_matrix(x, n)
    tau = _validate_pricing_inputs(t, xm, maturity, params)
    single = single and np.ndim(tau) == 0
    if n == 1:
        srt = params.sigma * np.sqrt(tau)
        d1 = (np.log(xm[:, 0] / params.sk)
              + (params.r - params.delta + 0.5 * params.sigma**2) * tau) / srt
        out = np.atleast_1d(-np.exp(-params.delta * tau) * ndtr(-d1))
        return float(out[0]) if single else out
    if np.ndim(tau) != 0:
        raise ValueError("array-valued times are supported for one asset only")

    h = 1e-4 * xm[:, asset]
    up = xm.copy()
    dn = xm.copy()
    up[:, asset] += h
    dn[:, asset] -= h
    out = (bs_min_put(t, up, maturity, params, config)
           - bs_min_put(t, dn, maturity, params, config)) / (2.0 * h)
    out = np.atleast_1d(out)
    return float(out[0]) if single else out


def _poisson_log_pmf(k: int, rate: float) -> float:
    return -rate + k * math.log(rate) - math.lgamma(k + 1)


def merton_put_1d(t: float, x, maturity: float, params: ModelParams,
                  config: EuroPricerConfig = DEFAULT_PRICER_CONFIG):
    """Single-asset European put under the jump model, by truncated series.

    The value is a Poisson(lam * tau) mixture over the jump count k of
    Black-Scholes puts with volatility sqrt(sigma^2 + k theta^2 / tau) and
    spot x * exp(k (m + theta^2/2) - lam kappa tau).  The truncation must
    leave less than ``config.tail_tol`` Poisson mass beyond the cutoff.
    """
    if params.n_assets != 1:
        raise ValueError("the series pricer is only available for one asset")
    xm, single = _as_price_matrix(x, 1)
    tau = _validate_pricing_inputs(t, xm, maturity, params)
    spot = xm[:, 0]

    rate = params.lam * tau
    if rate == 0.0:
        out = _bs_put_1d(spot, params.sk, params.r, params.delta, params.sigma, tau)
        return float(out[0]) if single else out

    # Discarded mass bound: tail(cutoff) <= pmf(cutoff+1) / (1 - rate/(cutoff+2)).
    k1 = config.series_cutoff + 1
    if rate >= k1 + 1:
        raise ValueError("series_cutoff too small for this intensity and maturity")
    tail_bound = math.exp(_poisson_log_pmf(k1, rate)) / (1.0 - rate / (k1 + 1))
    if tail_bound >= config.tail_tol:
        raise ValueError(
            f"series_cutoff={config.series_cutoff} leaves Poisson tail "
            f"~{tail_bound:.2e} >= tail_tol={config.tail_tol}"
        )

    growth = params.m + 0.5 * params.theta**2
    shift = math.exp(-params.lam * params.kappa * tau)
    out = np.zeros_like(spot)
    weight = math.exp(-rate)
    for k in range(config.series_cutoff + 1):
        if k > 0:
            weight *= rate / k
        sigma_k = math.sqrt(params.sigma**2 + k * params.theta**2 / tau)
        spot_k = spot * math.exp(k * growth) * shift
        out += weight * _bs_put_1d(spot_k, params.sk, params.r, params.delta,
                                   sigma_k, tau)
    return float(out[0]) if single else out
