"""Non-nested true-martingale upper bound.

The Wiener and jump integrands of the dual martingale are fitted by plain
least squares against increment-weighted discounted payoffs, then the
martingale is assembled pathwise as an Ito sum (left-endpoint integrand values
times Wiener increments and compensated jump counts).  Because the assembled
process is an exact martingale for the simulation filtration, the resulting
estimator is unbiased for a valid upper bound, with no inner simulation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .analytic import DEFAULT_PRICER_CONFIG, EuroPricerConfig
from .estimates import BoundEstimate, estimate_from_samples
from .lower_bound import Policy, exercise_matrix, first_exercise_from
from .model import (DiscretizationGrids, ModelParams, PathBundle,
                    discounted_date_payoffs, min_put_payoff)
from .regression import (BasisSpec, basis_dim, evaluate_basis,
                         evaluate_jump_basis_cells, solve_least_squares)

__all__ = ["MartingaleModel", "fit_integrands", "build_martingale",
           "tm_upper_bound"]


@dataclass
class MartingaleModel:
    """Fitted integrand coefficients defining the approximate dual martingale.

    ``alpha[row, i]`` is the coefficient vector of Wiener component i over the
    rho_W basis and ``beta[row, k]`` the vector of amplitude cell k over the
    rho_P basis.  With ``per_step`` False there is one row per exercise
    interval and the coefficients apply piecewise-constant on [T_j, T_{j+1});
    with ``per_step`` True there is one row per Euler step.
    """

    basis_w: BasisSpec
    basis_p: BasisSpec
    alpha: np.ndarray  # (n_rows, n_assets, I1)
    beta: np.ndarray   # (n_rows, n_cells, I2)
    per_step: bool = False
    grid_signature: tuple = ()  # (n_steps, n_intervals, n_cells)
    pricer_config: EuroPricerConfig = DEFAULT_PRICER_CONFIG
    diagnostics: dict = field(default_factory=dict)
    fit_seed: object = None

    def coefficient_row(self, step: int, interval: int) -> int:
        return step if self.per_step else interval

    def to_json_dict(self) -> dict:
        return {
            "basis_w": {"kind": self.basis_w.kind, "variant": self.basis_w.variant},
            "basis_p": {"kind": self.basis_p.kind, "variant": self.basis_p.variant},
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "per_step": self.per_step,
            "grid_signature": list(self.grid_signature),
            "pricer_config": {
                "quad_nodes": self.pricer_config.quad_nodes,
                "series_cutoff": self.pricer_config.series_cutoff,
                "tail_tol": self.pricer_config.tail_tol,
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MartingaleModel":
        return cls(
            basis_w=BasisSpec(**doc["basis_w"]),
            basis_p=BasisSpec(**doc["basis_p"]),
            alpha=np.asarray(doc["alpha"], dtype=float),
            beta=np.asarray(doc["beta"], dtype=float),
            per_step=doc.get("per_step", False),
            grid_signature=tuple(doc.get("grid_signature", ())),
            pricer_config=EuroPricerConfig(**doc["pricer_config"]),
        )


def _policy_continuation_payoffs(policy: Policy, paths: PathBundle,
                                 params: ModelParams) -> np.ndarray:
    """H[n, j] = time-0 discounted payoff of path n at its first exercise
    date >= j+1 under the policy, for j = 0..J-1."""
    date_prices = paths.date_prices()
    payoff = min_put_payoff(date_prices, params.sk)
    stop_from = first_exercise_from(exercise_matrix(policy, date_prices, params))
    dates = params.exercise_dates
    rows = np.arange(paths.n_paths)[:, None]
    stop_next = stop_from[:, 1:]  # column j holds the stop at or after j+1
    return np.exp(-params.r * dates[stop_next]) * payoff[rows, stop_next]


def _fitted_date_values(policy: Policy, paths: PathBundle,
                        params: ModelParams) -> np.ndarray:
    """Time-0 discounted fitted option values at every exercise date: (N, J+1).

    Per date an all-paths regression of the realized discounted payoff under
    the policy gives a continuation-value function valid on the whole state
    space (unlike the in-the-money-only policy regression); the date value is
    the max of intrinsic value and fitted continuation.  Column 0 holds the
    cross-path mean of the date-1 values, a constant placeholder used only to
    center date-0 regression targets.
    """
    dates = params.exercise_dates
    n_dates = params.n_intervals
    prices = paths.date_prices()
    payoff = min_put_payoff(prices, params.sk)
    stop_from = first_exercise_from(exercise_matrix(policy, prices, params))
    rows = np.arange(paths.n_paths)
    values = np.empty((paths.n_paths, n_dates + 1))
    values[:, n_dates] = np.exp(-params.r * dates[n_dates]) * payoff[:, n_dates]
    for j in range(1, n_dates):
        stop = stop_from[:, j]
        target = np.exp(-params.r * (dates[stop] - dates[j])) * payoff[rows, stop]
        design = evaluate_basis(policy.basis, dates[j], prices[:, j, :],
                                params=params,
                                pricer_config=policy.pricer_config)
        fit = solve_least_squares(design, target)
        continuation = design @ fit.coefficients
        values[:, j] = np.exp(-params.r * dates[j]) * np.maximum(
            payoff[:, j], continuation)
    values[:, 0] = values[:, 1].mean()
    return values


def fit_integrands(policy: Policy, paths: PathBundle, params: ModelParams,
                   grids: DiscretizationGrids,
                   basis_w: BasisSpec | None = None,
                   basis_p: BasisSpec | None = None, *,
                   per_step: bool = False,
                   targets: str = "value") -> MartingaleModel:
    """Regress the martingale integrands on an independent bundle.

    On each exercise interval the Wiener target per component is
    (dW / dt) * Y and the cell-k jump target is (count_k - mu_k) / mu_k * Y,
    with all increments aggregated over the interval and the fitted
    coefficients held constant across its Euler steps (the two-layer scheme:
    coarse regression times, fine Ito sum).  ``per_step`` instead fits every
    Euler step against its own single-step increments.

    ``targets`` selects Y:
      * "value" (default): the fitted option value at the interval end,
        centered by the fitted value at the interval start.  The centering
        term is measurable at the fit time, so it changes no population
        projection (the increment weights have conditional mean zero) while
        removing most of the target variance.
      * "realized": the raw discounted payoff under the policy stopped at or
        after the next exercise date.

    With zero jump intensity every cell compensator vanishes, so the jump
    coefficients are set to zero and noted in ``diagnostics``.
    """
    if basis_w is None:
        basis_w = BasisSpec(kind="rho_W")
    if basis_p is None:
        basis_p = BasisSpec(kind="rho_P")
    if basis_w.kind != "rho_W" or basis_p.kind != "rho_P":
        raise ValueError("integrand bases must be a rho_W and a rho_P spec")
    if targets not in ("value", "realized"):
        raise ValueError(f"unknown target mode {targets!r}")
    if not grids.matches(params):
        raise ValueError("grids were built for different model parameters")
    if policy.fit_seed is not None and paths.seed == policy.fit_seed:
        raise ValueError("integrand regression needs paths independent of the "
                         "policy fit (same seed detected)")

    if targets == "value":
        date_values = _fitted_date_values(policy, paths, params)
        residual = date_values[:, 1:] - date_values[:, :-1]  # column j: interval j
    else:
        residual = _policy_continuation_payoffs(policy, paths, params)
    times = grids.time_nodes
    dates = params.exercise_dates
    intervals = grids.interval_of_step
    n_assets = params.n_assets
    n_cells = grids.n_cells

    if per_step:
        # (fit time step, increment span, interval) one row per Euler step
        fit_spans = [(l, l, l + 1, int(intervals[l])) for l in range(grids.n_steps)]
    else:
        fit_spans = [(int(grids.exercise_index[j]), int(grids.exercise_index[j]),
                      int(grids.exercise_index[j + 1]), j)
                     for j in range(grids.n_intervals)]
    alpha_rows = []
    beta_rows = []
    diagnostics = {"wiener_rank_min": None, "jump_rank_min": None}
    zero_intensity = False
    ranks_w, ranks_p = [], []

    for l, lo, hi, j in fit_spans:
        t = float(times[l])
        span_dt = float(times[hi] - times[lo])
        states = paths.prices[:, l, :]
        y = residual[:, j]

        design_w = evaluate_basis(basis_w, t, states, params=params,
                                  pricer_config=policy.pricer_config,
                                  maturity_next=float(dates[j + 1]))
        d_wiener = paths.wiener_increments[:, lo:hi, :].sum(axis=1)
        target_w = d_wiener / span_dt * y[:, None]
        fit_w = solve_least_squares(design_w, target_w)
        alpha_rows.append(fit_w.coefficients.T.reshape(n_assets, -1))
        ranks_w.append(fit_w.rank)

        mu = grids.lam * span_dt / n_cells
        if mu == 0.0:
            beta_rows.append(np.zeros((n_cells, basis_dim(basis_p, n_assets))))
            zero_intensity = True
            continue
        counts = paths.counts_in_span(lo, hi)
        designs_p = evaluate_jump_basis_cells(
            basis_p, t, states, grids.cell_reps, params=params,
            pricer_config=policy.pricer_config, maturity_next=float(dates[j + 1]))
        beta_l = np.empty((n_cells, designs_p.shape[2]))
        for k in range(n_cells):
            target_p = (counts[:, k] - mu) / mu * y
            fit_p = solve_least_squares(designs_p[:, k, :], target_p)
            beta_l[k] = fit_p.coefficients
            ranks_p.append(fit_p.rank)
        beta_rows.append(beta_l)

    diagnostics["wiener_rank_min"] = int(min(ranks_w)) if ranks_w else None
    diagnostics["jump_rank_min"] = int(min(ranks_p)) if ranks_p else None
    if zero_intensity:
        diagnostics["jump_coefficients"] = "zeroed: zero jump intensity"

    return MartingaleModel(
        basis_w=basis_w, basis_p=basis_p,
        alpha=np.array(alpha_rows), beta=np.array(beta_rows),
        per_step=per_step,
        grid_signature=(grids.n_steps, grids.n_intervals, grids.n_cells),
        pricer_config=policy.pricer_config,
        diagnostics=diagnostics, fit_seed=paths.seed,
    )


def build_martingale(model: MartingaleModel, paths: PathBundle, *,
                     include_wiener: bool = True,
                     include_jump: bool = True) -> np.ndarray:
    """Martingale values at the exercise dates: (n_paths, J+1), first column 0.

    Cumulative Ito sums over the Euler steps with the fitted integrands
    evaluated at the left-endpoint states, so each increment is independent
    of its integrand value and the assembled process stays a martingale.
    The two terms are individually martingales and can be toggled.
    """
    grids = paths.grids
    params = paths.params
    signature = (grids.n_steps, grids.n_intervals, grids.n_cells)
    if model.grid_signature and model.grid_signature != signature:
        raise ValueError("martingale model was fitted on different grids")
    expected_rows = grids.n_steps if model.per_step else grids.n_intervals
    if model.alpha.shape[0] != expected_rows:
        raise ValueError("martingale model was fitted on different grids")
    times = grids.time_nodes
    dates = params.exercise_dates
    n_paths = paths.n_paths
    n_assets = params.n_assets
    n_cells = grids.n_cells
    batched = n_assets == 1  # array-valued times are a single-asset fast path

    cumulative = np.zeros(n_paths)
    out = np.zeros((n_paths, grids.n_intervals + 1))
    for j in range(grids.n_intervals):
        lo = int(grids.exercise_index[j])
        hi = int(grids.exercise_index[j + 1])
        span = hi - lo
        maturity_next = float(dates[j + 1])
        # step-major flattening: row s * n_paths + p is (step lo+s, path p)
        flat_states = paths.prices[:, lo:hi, :].transpose(1, 0, 2).reshape(-1, n_assets)
        t_flat = (np.repeat(times[lo:hi], n_paths) if batched
                  else None)
        rows = [model.coefficient_row(lo + s, j) for s in range(span)]

        increments = np.zeros((span, n_paths))
        if include_wiener:
            phi = np.empty((span, n_paths, n_assets))
            if batched:
                design = evaluate_basis(model.basis_w, t_flat, flat_states,
                                        params=params,
                                        pricer_config=model.pricer_config,
                                        maturity_next=maturity_next)
                design = design.reshape(span, n_paths, -1)
                for s in range(span):
                    phi[s] = design[s] @ model.alpha[rows[s]].T
            else:
                for s in range(span):
                    design = evaluate_basis(
                        model.basis_w, float(times[lo + s]),
                        paths.prices[:, lo + s, :], params=params,
                        pricer_config=model.pricer_config,
                        maturity_next=maturity_next)
                    phi[s] = design @ model.alpha[rows[s]].T
            d_wiener = paths.wiener_increments[:, lo:hi, :].transpose(1, 0, 2)
            increments += np.einsum("sni,sni->sn", phi, d_wiener)

        if include_jump:
            if batched:
                designs = evaluate_jump_basis_cells(
                    model.basis_p, t_flat, flat_states, grids.cell_reps,
                    params=params, pricer_config=model.pricer_config,
                    maturity_next=maturity_next)
                designs = designs.reshape(span, n_paths, n_cells, -1)
            else:
                designs = np.stack([
                    evaluate_jump_basis_cells(
                        model.basis_p, float(times[lo + s]),
                        paths.prices[:, lo + s, :], grids.cell_reps,
                        params=params, pricer_config=model.pricer_config,
                        maturity_next=maturity_next)
                    for s in range(span)])
            beta = model.beta[rows]  # (span, n_cells, I2)
            psi = np.einsum("snki,ski->snk", designs, beta)
            for s in range(span):
                mu = grids.step_intensity(lo + s)
                if mu > 0.0:
                    increments[s] -= mu * psi[s].sum(axis=1)
                jump_paths, jump_cells = paths.jumps_in_step(lo + s)
                if jump_paths.size:
                    np.add.at(increments[s], jump_paths,
                              psi[s, jump_paths, jump_cells])

        cumulative = cumulative + increments.sum(axis=0)
        out[:, j + 1] = cumulative
    return out


def tm_upper_bound(model: MartingaleModel, fresh_paths: PathBundle,
                   params: ModelParams, *, include_wiener: bool = True,
                   include_jump: bool = True) -> BoundEstimate:
    """Upper-bound estimate: pathwise max over exercise dates of discounted
    payoff minus the martingale, averaged over an independent bundle."""
    if model.fit_seed is not None and fresh_paths.seed == model.fit_seed:
        raise ValueError("upper bound must be evaluated on paths independent "
                         "of the integrand fit (same seed detected)")
    t0 = time.perf_counter()
    martingale = build_martingale(model, fresh_paths,
                                  include_wiener=include_wiener,
                                  include_jump=include_jump)
    payoffs = discounted_date_payoffs(params, fresh_paths.date_prices())
    samples = (payoffs - martingale).max(axis=1)
    return estimate_from_samples("TM", samples, seed=fresh_paths.seed,
                                 wall_time_s=time.perf_counter() - t0)
