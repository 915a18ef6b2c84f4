"""Benchmark upper bound by nested simulation.

Along each outer path the dual martingale is advanced date by date; the value
process is the realized discounted payoff where the policy exercises and an
inner-simulation estimate of the continuation value elsewhere, with the same
inner batch supplying the conditional expectation of the next value.  Inner
noise enters the pathwise maximum, so the estimator is biased high; it serves
as the reference the non-nested bound is compared against.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .estimates import BoundEstimate, estimate_from_samples
from .lower_bound import Policy, exercise_matrix
from .model import (DiscretizationGrids, ModelParams, discounted_date_payoffs,
                    min_put_payoff, simulate_from_state, simulate_paths)
from .regression import evaluate_basis

__all__ = ["NestedConfig", "ab_upper_bound"]


@dataclass(frozen=True)
class NestedConfig:
    """Sample sizes of the nested scheme: outer paths and inner paths per
    conditional expectation."""

    n_outer: int
    n_inner: int

    def __post_init__(self):
        if self.n_outer < 1:
            raise ValueError("n_outer must be at least 1")
        if self.n_inner < 2:
            raise ValueError("n_inner must be at least 2")


def _inner_continuation(policy: Policy, params: ModelParams,
                        grids: DiscretizationGrids, states: np.ndarray,
                        date_j: int, n_inner: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Estimate E_{T_j}[H at the first exercise >= j+1] for each outer state.

    One vectorized batch continues every outer state with ``n_inner``
    sub-paths on the same Euler grid and exercises the policy from date j+1
    onward (maturity always stops).
    """
    n_dates = params.n_intervals
    dates = params.exercise_dates
    sub_prices = simulate_from_state(params, grids, date_j, states, n_inner, rng)
    batch = sub_prices.shape[0]
    payoff = min_put_payoff(sub_prices, params.sk)  # (B, J - j) for dates j+1..J

    stop_col = np.full(batch, n_dates - date_j - 1, dtype=np.int64)
    for col in range(n_dates - date_j - 2, -1, -1):
        j = date_j + 1 + col
        coef = policy.coefficients.get(j)
        if coef is None:
            continue
        itm = payoff[:, col] > 0.0
        if not itm.any():
            continue
        design = evaluate_basis(policy.basis, dates[j], sub_prices[itm, col, :],
                                params=params, pricer_config=policy.pricer_config)
        exercise = np.zeros(batch, dtype=bool)
        exercise[itm] = payoff[itm, col] >= design @ coef
        stop_col = np.where(exercise, col, stop_col)

    rows = np.arange(batch)
    stop_dates = dates[date_j + 1 + stop_col]
    values = np.exp(-params.r * stop_dates) * payoff[rows, stop_col]
    return values.reshape(-1, n_inner).mean(axis=1)


def ab_upper_bound(policy: Policy, params: ModelParams,
                   grids: DiscretizationGrids, cfg: NestedConfig,
                   seed=None) -> BoundEstimate:
    """Nested-simulation upper bound on the option price.

    The martingale recursion along each outer path is
    M_{j+1} = M_j + V_{j+1} - C_j with C_j an inner estimate of
    E_{T_j}[H at the first exercise >= j+1]; V uses the realized payoff at
    exercised dates (and at maturity) and a second, independent inner
    estimate of the continuation value elsewhere, so every conditional
    expectation in the recursion carries its own inner noise.  Inner streams
    are derived from (seed, date, role), with the sub-paths of outer path i
    occupying block i of each date batch, so reruns are reproducible and
    batches are independent across dates.
    """
    if policy.fit_seed is not None and seed == policy.fit_seed:
        raise ValueError("benchmark bound must use paths independent of the "
                         "policy fit (same seed detected)")
    t0 = time.perf_counter()
    outer_seed = _subseed(seed, 0)
    outer = simulate_paths(params, grids, cfg.n_outer, seed=outer_seed)
    date_prices = outer.date_prices()
    n_dates = params.n_intervals

    H = discounted_date_payoffs(params, date_prices)
    ex = exercise_matrix(policy, date_prices, params)

    def batch(j, role):
        rng = np.random.default_rng(
            np.random.SeedSequence(_subseed(seed, 2 * j + role)))
        return _inner_continuation(policy, params, grids,
                                   date_prices[:, j, :], j, cfg.n_inner, rng)

    continuation = np.empty((cfg.n_outer, n_dates))
    values = np.empty((cfg.n_outer, n_dates + 1))
    values[:, n_dates] = H[:, n_dates]
    for j in range(n_dates):
        continuation[:, j] = batch(j, 1)
        if 1 <= j:
            values[:, j] = np.where(ex[:, j], H[:, j], batch(j, 2))

    martingale = np.zeros((cfg.n_outer, n_dates + 1))
    martingale[:, 1:] = np.cumsum(values[:, 1:] - continuation, axis=1)
    samples = (H - martingale).max(axis=1)
    return estimate_from_samples("AB", samples, seed=seed,
                                 wall_time_s=time.perf_counter() - t0)


def _subseed(seed, k: int):
    if seed is None:
        return None
    if isinstance(seed, (tuple, list)):
        return (*seed, k)
    return (seed, k)
