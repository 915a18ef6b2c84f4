"""Longstaff-Schwartz exercise policy and the lower-bound estimator.

The policy is fitted by backward induction: at each exercise date the
realized discounted payoff under the already-fitted future policy is
regressed on the continuation-value basis over in-the-money paths.  No
decision is fitted at date 0 (the immediate exercise value is reported
separately by the harness) and maturity always exercises when the payoff is
positive.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .analytic import DEFAULT_PRICER_CONFIG, EuroPricerConfig
from .estimates import BoundEstimate, estimate_from_samples
from .model import ModelParams, PathBundle, min_put_payoff
from .regression import BasisSpec, basis_dim, evaluate_basis, solve_least_squares

__all__ = ["Policy", "fit_policy", "exercise_matrix", "first_exercise_from",
           "exercise_time", "lower_bound"]


@dataclass
class Policy:
    """Suboptimal stopping rule from per-date continuation regressions.

    ``coefficients[j]`` holds the regression vector of exercise date j for
    j = 1..J-1.  A date without coefficients never exercises early, so an
    empty mapping is the exercise-at-maturity-only rule.
    """

    basis: BasisSpec
    coefficients: dict[int, np.ndarray]
    itm_only: bool = True
    fallback_dates: tuple[int, ...] = ()
    pricer_config: EuroPricerConfig = DEFAULT_PRICER_CONFIG
    fit_seed: object = None

    def to_json_dict(self) -> dict:
        return {
            "basis": {"kind": self.basis.kind, "variant": self.basis.variant},
            "coefficients": {str(j): c.tolist() for j, c in self.coefficients.items()},
            "itm_only": self.itm_only,
            "fallback_dates": list(self.fallback_dates),
            "pricer_config": {
                "quad_nodes": self.pricer_config.quad_nodes,
                "series_cutoff": self.pricer_config.series_cutoff,
                "tail_tol": self.pricer_config.tail_tol,
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Policy":
        return cls(
            basis=BasisSpec(**doc["basis"]),
            coefficients={int(j): np.asarray(c, dtype=float)
                          for j, c in doc["coefficients"].items()},
            itm_only=doc.get("itm_only", True),
            fallback_dates=tuple(doc.get("fallback_dates", ())),
            pricer_config=EuroPricerConfig(**doc["pricer_config"]),
        )


def fit_policy(paths: PathBundle, params: ModelParams,
               basis: BasisSpec | None = None, *, itm_only: bool = True) -> Policy:
    """Fit the stopping policy on a simulated bundle by backward induction.

    Regression targets are realized discounted payoffs under the future
    policy, restricted to in-the-money paths; a date with fewer in-the-money
    paths than basis functions falls back to an all-paths regression
    (recorded in ``fallback_dates``).  Ties between payoff and continuation
    exercise.
    """
    if basis is None:
        basis = BasisSpec(kind="ls_policy")
    if not paths.grids.matches(params):
        raise ValueError("path bundle was simulated under different parameters")
    dates = params.exercise_dates
    n_dates = params.n_intervals
    prices = paths.date_prices()
    payoff = min_put_payoff(prices, params.sk)
    dim = basis_dim(basis, params.n_assets)

    stop = np.full(paths.n_paths, n_dates, dtype=np.int64)
    cash = payoff[:, n_dates].copy()
    coefficients: dict[int, np.ndarray] = {}
    fallbacks = []

    for j in range(n_dates - 1, 0, -1):
        target = cash * np.exp(-params.r * (dates[stop] - dates[j]))
        itm = payoff[:, j] > 0.0
        n_itm = int(itm.sum())
        use_all = not itm_only or n_itm < dim
        if itm_only and n_itm < dim:
            fallbacks.append(j)
        design_itm = evaluate_basis(basis, dates[j], prices[itm, j, :],
                                    params=params) if n_itm else None
        if use_all:
            design = evaluate_basis(basis, dates[j], prices[:, j, :], params=params)
            fit = solve_least_squares(design, target)
            continuation_itm = design[itm] @ fit.coefficients if n_itm else None
        else:
            fit = solve_least_squares(design_itm, target[itm])
            continuation_itm = design_itm @ fit.coefficients
        coefficients[j] = fit.coefficients

        if n_itm:
            exercise_now = np.zeros(paths.n_paths, dtype=bool)
            exercise_now[itm] = payoff[itm, j] >= continuation_itm
            stop[exercise_now] = j
            cash[exercise_now] = payoff[exercise_now, j]

    return Policy(basis=basis, coefficients=coefficients, itm_only=itm_only,
                  fallback_dates=tuple(reversed(fallbacks)), fit_seed=paths.seed)


def exercise_matrix(policy: Policy, date_prices: np.ndarray,
                    params: ModelParams) -> np.ndarray:
    """Per-date exercise indicators (N, J+1); no decision at date 0,
    maturity always exercises (with payoff possibly zero)."""
    dates = params.exercise_dates
    n_dates = params.n_intervals
    payoff = min_put_payoff(date_prices, params.sk)
    ex = np.zeros(payoff.shape, dtype=bool)
    ex[:, n_dates] = True
    for j in range(1, n_dates):
        coef = policy.coefficients.get(j)
        if coef is None:
            continue
        itm = payoff[:, j] > 0.0
        if not itm.any():
            continue
        design = evaluate_basis(policy.basis, dates[j], date_prices[itm, j, :],
                                params=params, pricer_config=policy.pricer_config)
        continuation = design @ coef
        exercise = np.zeros(payoff.shape[0], dtype=bool)
        exercise[itm] = payoff[itm, j] >= continuation
        ex[:, j] = exercise
    return ex


def first_exercise_from(ex: np.ndarray) -> np.ndarray:
    """stop_from[:, j] = first exercise date >= j (column 0 mirrors column 1,
    since no decision is taken at date 0)."""
    n_paths, n_cols = ex.shape
    stop_from = np.empty((n_paths, n_cols), dtype=np.int64)
    stop_from[:, -1] = n_cols - 1
    for j in range(n_cols - 2, 0, -1):
        stop_from[:, j] = np.where(ex[:, j], j, stop_from[:, j + 1])
    stop_from[:, 0] = stop_from[:, 1]
    return stop_from


def exercise_time(policy: Policy, path_date_prices: np.ndarray,
                  params: ModelParams) -> int:
    """Exercise date of a single path: the smallest j >= 1 whose payoff is
    positive and at least the fitted continuation value, else maturity."""
    one = np.asarray(path_date_prices, dtype=float)
    if one.ndim == 2:
        one = one[None, :, :]
    ex = exercise_matrix(policy, one, params)
    return int(first_exercise_from(ex)[0, 1])


def lower_bound(policy: Policy, fresh_paths: PathBundle,
                params: ModelParams) -> BoundEstimate:
    """Mean discounted payoff of the policy over an independent bundle.

    The estimate is biased low relative to the exact price.  Evaluating on
    the bundle the policy was fitted on is rejected.
    """
    if policy.fit_seed is not None and fresh_paths.seed == policy.fit_seed:
        raise ValueError("lower bound must be evaluated on paths independent "
                         "of the policy fit (same seed detected)")
    t0 = time.perf_counter()
    date_prices = fresh_paths.date_prices()
    payoff = min_put_payoff(date_prices, params.sk)
    ex = exercise_matrix(policy, date_prices, params)
    stop = first_exercise_from(ex)[:, 1]
    dates = params.exercise_dates
    rows = np.arange(fresh_paths.n_paths)
    values = np.exp(-params.r * dates[stop]) * payoff[rows, stop]
    return estimate_from_samples("LB", values, seed=fresh_paths.seed,
                                 wall_time_s=time.perf_counter() - t0)
