"""Basis-function evaluation and robust least squares.

Shared by the exercise-policy fitter and the martingale-integrand fitter.
Designs built from correlated option prices are near-collinear (and become
exactly rank-deficient on the last exercise interval, where the two option
maturities coincide), so the solver uses a rank-revealing SVD with singular
value truncation rather than normal equations.
"""

from __future__ import annotations

import itertools
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from .analytic import DEFAULT_PRICER_CONFIG, bs_min_put, bs_min_put_delta

__all__ = ["BasisSpec", "FitResult", "evaluate_basis", "evaluate_jump_basis_cells",
           "solve_least_squares", "basis_dim"]

_KINDS = ("ls_policy", "rho_W", "rho_P")
_SV_RCOND = 1e-10


def _pinned_blas():
    """BLAS reduction order depends on the thread count; pin solves to one
    thread so fitted coefficients are bit-identical under any ambient
    threading."""
    if threadpool_limits is None:
        return nullcontext()
    return threadpool_limits(limits=1)


@dataclass(frozen=True)
class BasisSpec:
    """Selects a regression basis.

    kind: "ls_policy" for the continuation-value basis (monomials of total
        degree <= 3 plus the non-jump European min-put maturing at T, its
        square and cube); "rho_W" / "rho_P" for the Wiener / jump integrand
        bases, with ``variant`` choosing one of the four published families.
    """

    kind: str
    variant: int = 4

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind != "ls_policy" and self.variant not in (1, 2, 3, 4):
            raise ValueError(f"unknown basis variant {self.variant}")


def _monomials(x: np.ndarray, max_degree: int = 3) -> list[np.ndarray]:
    """All monomials of total degree 1..max_degree, cross terms included."""
    n = x.shape[1]
    cols = []
    for degree in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), degree):
            col = np.ones(x.shape[0])
            for i in combo:
                col = col * x[:, i]
            cols.append(col)
    return cols


def basis_dim(spec: BasisSpec, n_assets: int) -> int:
    """Number of basis functions; independent of the evaluation point."""
    if spec.kind == "ls_policy":
        n_mono = sum(
            1 for d in range(1, 4)
            for _ in itertools.combinations_with_replacement(range(n_assets), d)
        )
        return 1 + n_mono + 3
    if spec.variant == 1:
        return 1
    if spec.variant == 2:
        return 1 + 3 * n_assets
    if spec.variant == 3:
        return 3
    if spec.kind == "rho_W":
        return 1 + 2 * n_assets
    return 3  # rho_P variant 4


def evaluate_basis(spec: BasisSpec, t: float, x: np.ndarray, *,
                   params, pricer_config=DEFAULT_PRICER_CONFIG,
                   maturity_next: float | None = None,
                   y: float | None = None) -> np.ndarray:
    """Evaluate the basis row vectors at states ``x``.

    Parameters
    ----------
    t : evaluation time (< final maturity).
    x : states shaped (B, n_assets).
    maturity_next : end of the current exercise interval; required by the
        variant-4 integrand bases.
    y : log-amplitude representative of the cell; required by rho_P variant 4.

    Returns
    -------
    (B, I) design block for this basis.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ones = np.ones(x.shape[0])
    T = params.T

    if spec.kind == "ls_policy":
        euro = bs_min_put(t, x, T, params, pricer_config)
        cols = [ones] + _monomials(x) + [euro, euro**2, euro**3]
        return np.column_stack(cols)

    if spec.variant == 1:
        return ones[:, None]

    if spec.variant == 2:
        cols = [ones]
        for i in range(x.shape[1]):
            xi = x[:, i]
            cols += [xi, xi**2, xi**3]
        return np.column_stack(cols)

    if spec.variant == 3:
        euro = bs_min_put(t, x, T, params, pricer_config)
        return np.column_stack([ones, euro, euro**2])

    if maturity_next is None:
        raise ValueError("variant 4 bases need the end of the current interval")

    if spec.kind == "rho_W":
        cols = [ones]
        for maturity in (maturity_next, T):
            for i in range(x.shape[1]):
                delta = bs_min_put_delta(t, x, maturity, i, params, pricer_config)
                cols.append(np.atleast_1d(delta) * x[:, i])
        return np.column_stack(cols)

    # rho_P variant 4: value increments under a jump scaling every asset.
    if y is None:
        raise ValueError("rho_P variant 4 needs the cell representative y")
    scale = np.exp(y)
    cols = [ones]
    for maturity in (maturity_next, T):
        base = bs_min_put(t, x, maturity, params, pricer_config)
        jumped = bs_min_put(t, x * scale, maturity, params, pricer_config)
        cols.append(np.atleast_1d(jumped) - np.atleast_1d(base))
    return np.column_stack(cols)


def evaluate_jump_basis_cells(spec: BasisSpec, t: float, x: np.ndarray,
                              y_cells: np.ndarray, *, params,
                              pricer_config=DEFAULT_PRICER_CONFIG,
                              maturity_next: float | None = None) -> np.ndarray:
    """rho_P basis for every amplitude cell at once: (B, K, I).

    For variant 4 the two unscaled option values are shared across cells,
    which matters inside the per-step martingale assembly.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y_cells = np.asarray(y_cells, dtype=float)
    n_cells = len(y_cells)
    if spec.kind != "rho_P":
        raise ValueError("cell-wise evaluation is only defined for rho_P bases")

    if spec.variant != 4:
        block = evaluate_basis(spec, t, x, params=params,
                               pricer_config=pricer_config,
                               maturity_next=maturity_next)
        return np.broadcast_to(block[:, None, :], (x.shape[0], n_cells, block.shape[1]))

    if maturity_next is None:
        raise ValueError("variant 4 bases need the end of the current interval")
    n_states, n_assets = x.shape
    if n_assets == 1:
        return _jump_features_fast(t, x[:, 0], y_cells, params, maturity_next)
    out = np.empty((n_states, n_cells, 3))
    out[:, :, 0] = 1.0
    # One stacked (B * K) pricer call per maturity instead of K separate ones.
    scaled = (x[:, None, :] * np.exp(y_cells)[None, :, None]).reshape(-1, n_assets)
    t_stacked = np.repeat(t, n_cells) if np.ndim(t) else t
    T = params.T
    for col, maturity in ((1, maturity_next), (2, T)):
        base = np.atleast_1d(bs_min_put(t, x, maturity, params, pricer_config))
        jumped = bs_min_put(t_stacked, scaled, maturity, params, pricer_config)
        out[:, :, col] = jumped.reshape(n_states, n_cells) - base[:, None]
    return out


def _jump_features_fast(t, spot: np.ndarray, y_cells: np.ndarray, params,
                        maturity_next: float) -> np.ndarray:
    """Single-asset variant-4 jump features without redundant pricer work.

    The scaled-spot puts share the base log-moneyness (log(x e^y / sk) =
    log(x / sk) + y) and all discounting depends only on the time to
    maturity, so each (maturity, cell) costs two normal c.d.f. calls.
    """
    if params.sigma <= 0:
        raise ValueError("sigma must be positive for the closed-form pricer")
    if np.any(spot <= 0):
        raise ValueError("all prices must be positive")
    n_states = spot.shape[0]
    n_cells = len(y_cells)
    out = np.empty((n_states, n_cells, 3))
    out[:, :, 0] = 1.0
    log_m = np.log(spot / params.sk)
    for col, maturity in ((1, maturity_next), (2, params.T)):
        tau = maturity - np.asarray(t, dtype=float)
        if np.any(tau <= 0):
            raise ValueError("maturity must exceed the valuation time")
        srt = params.sigma * np.sqrt(tau)
        shift = (params.r - params.delta + 0.5 * params.sigma**2) * tau / srt
        disc_sk = params.sk * np.exp(-params.r * tau)
        disc_x = np.exp(-params.delta * tau) * spot
        d1 = log_m / srt + shift
        base = disc_sk * ndtr(srt - d1) - disc_x * ndtr(-d1)
        for k, y in enumerate(y_cells):
            d1k = d1 + y / srt
            put = disc_sk * ndtr(srt - d1k) - disc_x * np.exp(y) * ndtr(-d1k)
            out[:, k, col] = put - base
    return out


@dataclass(frozen=True)
class FitResult:
    """Least-squares solution with conditioning diagnostics."""

    coefficients: np.ndarray
    rank: int
    smallest_kept_sv: float
    residual_rms: float


def solve_least_squares(design: np.ndarray, target: np.ndarray) -> FitResult:
    """Minimum-norm least squares with singular-value truncation.

    Singular values below 1e-10 times the largest are discarded, so exactly
    duplicated columns receive equal coefficient shares instead of blowing
    up.  ``target`` may be (N,) or (N, M) for M independent regressions on a
    shared design.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    if design.ndim != 2 or design.shape[0] < 1 or design.shape[1] < 1:
        raise ValueError("design must be a nonempty 2-D matrix")
    if target.shape[0] != design.shape[0]:
        raise ValueError("design and target row counts differ")
    if not (np.isfinite(design).all() and np.isfinite(target).all()):
        raise ValueError("design and target must be finite")

    with _pinned_blas():
        coef, _, rank, sv = np.linalg.lstsq(design, target, rcond=_SV_RCOND)
        resid = design @ coef - target
    rms = float(np.sqrt(np.mean(resid**2)))
    smallest = float(sv[rank - 1]) if rank >= 1 else 0.0
    return FitResult(coefficients=coef, rank=int(rank),
                     smallest_kept_sv=smallest, residual_rms=rms)
