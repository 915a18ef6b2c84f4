"""Jump-diffusion market model, discretization grids, and path simulation.

The market is an n-asset exponential jump-diffusion: each asset carries its
own independent Wiener component while all assets share one compound-Poisson
jump term with normally distributed log-amplitudes (a systemic jump).  Paths
are simulated with the exact lognormal solution at the grid nodes; every jump
is additionally binned into a (time-step, amplitude-cell) box so that
compensated jump counts are available to the martingale construction
downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

__all__ = [
    "ModelParams",
    "DiscretizationGrids",
    "PathBundle",
    "build_time_grid",
    "build_space_partition",
    "simulate_paths",
    "simulate_from_state",
    "min_put_payoff",
    "discounted_date_payoffs",
]


def min_put_payoff(prices: np.ndarray, sk: float) -> np.ndarray:
    """Intrinsic value (sk - min_i price_i)^+ for prices shaped (..., n_assets)."""
    prices = np.asarray(prices, dtype=float)
    return np.maximum(sk - prices.min(axis=-1), 0.0)


@dataclass(frozen=True)
class ModelParams:
    """Market and contract parameters for the Bermudan min-put.

    Attributes:
        r: risk-free rate per year.
        delta: dividend yield per year.
        sigma: diffusion volatility.
        lam: jump intensity (expected jumps per year).
        m: mean of the normal log-jump amplitude.
        theta: standard deviation of the log-jump amplitude.
        x0: initial price per asset (scalar accepted for one asset).
        sk: strike price.
        T: maturity in years.
        n_intervals: number of exercise intervals; exercise dates are
            T_j = j * T / n_intervals for j = 0..n_intervals.
    """

    r: float
    delta: float
    sigma: float
    lam: float
    m: float
    theta: float
    x0: tuple
    sk: float
    T: float
    n_intervals: int

    def __post_init__(self):
        x0 = self.x0
        if np.isscalar(x0):
            x0 = (float(x0),)
        else:
            x0 = tuple(float(v) for v in x0)
        object.__setattr__(self, "x0", x0)
        errors = []
        if self.sigma < 0:
            errors.append("sigma must be nonnegative")
        if self.lam < 0:
            errors.append("lam must be nonnegative")
        if self.lam > 0 and self.theta <= 0:
            errors.append("theta must be positive when lam > 0")
        if self.T <= 0:
            errors.append("T must be positive")
        if self.n_intervals < 1:
            errors.append("n_intervals must be at least 1")
        if any(v <= 0 for v in x0):
            errors.append("all x0 components must be positive")
        if self.sk < 0:
            errors.append("sk must be nonnegative")
        if errors:
            raise ValueError("invalid model parameters: " + "; ".join(errors))

    @property
    def n_assets(self) -> int:
        return len(self.x0)

    @property
    def kappa(self) -> float:
        """Expected relative jump size E[e^Y - 1] for Y ~ N(m, theta^2)."""
        return math.exp(self.m + 0.5 * self.theta**2) - 1.0

    @property
    def drift(self) -> float:
        """Log-price drift under the pricing measure.

        The compensator lam * kappa keeps the discounted cum-dividend price a
        martingale.
        """
        return self.r - self.delta - 0.5 * self.sigma**2 - self.lam * self.kappa

    @property
    def exercise_dates(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_intervals + 1)

    @property
    def x0_vec(self) -> np.ndarray:
        return np.array(self.x0, dtype=float)


def build_time_grid(T: float, n_intervals: int, euler_step: float):
    """Equidistant time grid whose nodes contain every exercise date.

    ``euler_step`` must divide the exercise interval T / n_intervals to within
    1e-12 relative; otherwise a ValueError is raised.

    Returns:
        (time_nodes, exercise_index): nodes t_0=0..t_L=T and, for each
        exercise date j, the index of its node.
    """
    if T <= 0 or n_intervals < 1 or euler_step <= 0:
        raise ValueError("T, n_intervals and euler_step must be positive")
    interval = T / n_intervals
    ratio = interval / euler_step
    per_interval = int(round(ratio))
    if per_interval < 1 or abs(ratio - per_interval) > 1e-12 * max(1.0, ratio):
        raise ValueError(
            f"euler_step={euler_step} does not divide the exercise interval "
            f"{interval} (ratio {ratio} is not an integer)"
        )
    n_steps = n_intervals * per_interval
    time_nodes = np.linspace(0.0, T, n_steps + 1)
    exercise_index = np.arange(0, n_steps + 1, per_interval, dtype=np.int64)
    return time_nodes, exercise_index


def build_space_partition(m: float, theta: float, n_cells: int):
    """Equiprobable partition of the amplitude line under Normal(m, theta^2).

    Cell bounds are the k/K quantiles (k = 0..K, outermost bounds infinite),
    each cell has mass 1/K, and the representative value of a cell is the
    conditional mean of the amplitude inside it.

    Returns:
        (cell_bounds, cell_reps, cell_mass) with K+1 bounds and K cells.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be at least 1")
    if theta <= 0:
        raise ValueError("theta must be positive to build the partition")
    bounds = np.empty(n_cells + 1)
    bounds[0], bounds[-1] = -np.inf, np.inf
    if n_cells > 1:
        probs = np.arange(1, n_cells) / n_cells
        bounds[1:-1] = norm.ppf(probs, loc=m, scale=theta)
    z = (bounds - m) / theta
    pdf = norm.pdf(z)  # 0 at +-inf
    # Truncated-normal mean on each cell; the 1/K cell mass is the divisor.
    reps = m + theta * (pdf[:-1] - pdf[1:]) * n_cells
    mass = np.full(n_cells, 1.0 / n_cells)
    return bounds, reps, mass


@dataclass(frozen=True)
class DiscretizationGrids:
    """Time grid with exercise-date markers plus the amplitude partition.

    ``step_intensity(l)`` is the intensity mass lam * (t_{l+1} - t_l) / K of
    one (step, cell) box; it is the compensator of the binned jump counts.
    """

    time_nodes: np.ndarray
    exercise_index: np.ndarray
    cell_bounds: np.ndarray
    cell_reps: np.ndarray
    cell_mass: np.ndarray
    lam: float
    m: float
    theta: float

    def __post_init__(self):
        for arr in (self.time_nodes, self.exercise_index, self.cell_bounds,
                    self.cell_reps, self.cell_mass):
            arr.setflags(write=False)

    @classmethod
    def build(cls, params: ModelParams, euler_step: float, n_cells: int) -> "DiscretizationGrids":
        time_nodes, exercise_index = build_time_grid(
            params.T, params.n_intervals, euler_step
        )
        bounds, reps, mass = build_space_partition(params.m, params.theta, n_cells)
        return cls(time_nodes, exercise_index, bounds, reps, mass,
                   lam=params.lam, m=params.m, theta=params.theta)

    @property
    def n_steps(self) -> int:
        return len(self.time_nodes) - 1

    @property
    def n_cells(self) -> int:
        return len(self.cell_reps)

    @property
    def n_intervals(self) -> int:
        return len(self.exercise_index) - 1

    @property
    def step_sizes(self) -> np.ndarray:
        return np.diff(self.time_nodes)

    def step_intensity(self, l: int) -> float:
        """Intensity mass of one (step l, cell) box; same for every cell."""
        return self.lam * self.step_sizes[l] / self.n_cells

    @property
    def interval_of_step(self) -> np.ndarray:
        """Exercise interval j such that t_l lies in [T_j, T_{j+1}), per step l."""
        steps = np.arange(self.n_steps)
        return np.searchsorted(self.exercise_index, steps, side="right") - 1

    def matches(self, params: ModelParams) -> bool:
        return (
            self.lam == params.lam
            and self.m == params.m
            and self.theta == params.theta
            and abs(self.time_nodes[-1] - params.T) < 1e-12
            and self.n_intervals == params.n_intervals
        )


@dataclass(frozen=True)
class PathBundle:
    """Seeded ensemble of simulated paths with all stochastic increments.

    Prices follow the exact lognormal solution evaluated at the grid nodes.
    Jumps are stored sparsely, sorted by (step, path), with CSR-style offsets
    ``jump_step_ptr`` so the jumps of Euler step l are the slice
    ``jump_step_ptr[l]:jump_step_ptr[l+1]``.  The bundle is immutable after
    construction and safe to share read-only across workers.
    """

    params: ModelParams
    grids: DiscretizationGrids
    prices: np.ndarray             # (n_paths, n_steps+1, n_assets)
    wiener_increments: np.ndarray  # (n_paths, n_steps, n_assets)
    jump_path: np.ndarray
    jump_step: np.ndarray
    jump_cell: np.ndarray
    jump_time: np.ndarray
    jump_amp: np.ndarray
    jump_step_ptr: np.ndarray      # (n_steps+1,) offsets into the jump arrays
    seed: object = None

    def __post_init__(self):
        for arr in (self.prices, self.wiener_increments, self.jump_path,
                    self.jump_step, self.jump_cell, self.jump_time,
                    self.jump_amp, self.jump_step_ptr):
            arr.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    def date_prices(self) -> np.ndarray:
        """Prices restricted to the exercise dates: (n_paths, J+1, n_assets)."""
        return self.prices[:, self.grids.exercise_index, :]

    def counts_at_step(self, l: int) -> np.ndarray:
        """Dense (n_paths, n_cells) jump counts of Euler step l."""
        return self.counts_in_span(l, l + 1)

    def counts_in_span(self, lo_step: int, hi_step: int) -> np.ndarray:
        """Dense (n_paths, n_cells) jump counts over steps lo_step..hi_step-1."""
        counts = np.zeros((self.n_paths, self.grids.n_cells), dtype=np.int64)
        lo, hi = self.jump_step_ptr[lo_step], self.jump_step_ptr[hi_step]
        if hi > lo:
            np.add.at(counts, (self.jump_path[lo:hi], self.jump_cell[lo:hi]), 1)
        return counts

    def jumps_in_step(self, l: int):
        """(path_ids, cell_ids) of the jumps that fall in Euler step l."""
        lo, hi = self.jump_step_ptr[l], self.jump_step_ptr[l + 1]
        return self.jump_path[lo:hi], self.jump_cell[lo:hi]

    def total_jumps_per_path(self) -> np.ndarray:
        return np.bincount(self.jump_path, minlength=self.n_paths)


def simulate_paths(params: ModelParams, grids: DiscretizationGrids,
                   n_paths: int, seed=None) -> PathBundle:
    """Simulate a seeded path ensemble on the given grids.

    Jump arrival times are Poisson(lam) over [0, T) with Normal(m, theta^2)
    amplitudes; each jump is binned into its Euler step and amplitude cell.
    All assets share the jump term; Wiener components are independent across
    assets.  Draws come from a single stream in a fixed order, so a fixed seed
    reproduces the bundle bit-for-bit regardless of ambient threading.

    Parameters
    ----------
    params, grids : model and discretization; their jump laws must agree.
    n_paths : number of paths (>= 1).
    seed : int or tuple of ints fed to numpy's SeedSequence.

    Returns
    -------
    PathBundle
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if not grids.matches(params):
        raise ValueError("grids were built for different model parameters")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = params.n_assets
    times = grids.time_nodes
    n_steps = grids.n_steps
    dt = grids.step_sizes

    dW = rng.standard_normal((n_paths, n_steps, n)) * np.sqrt(dt)[None, :, None]

    horizon = params.T
    n_jumps = rng.poisson(params.lam * horizon, n_paths)
    total = int(n_jumps.sum())
    jump_path = np.repeat(np.arange(n_paths, dtype=np.int64), n_jumps)
    jump_time = rng.random(total) * horizon
    jump_amp = rng.normal(params.m, params.theta, total) if total else np.empty(0)

    jump_step = np.searchsorted(times, jump_time, side="right") - 1
    np.clip(jump_step, 0, n_steps - 1, out=jump_step)
    jump_cell = np.searchsorted(grids.cell_bounds, jump_amp, side="right") - 1
    np.clip(jump_cell, 0, grids.n_cells - 1, out=jump_cell)

    jump_sum = np.zeros((n_paths, n_steps))
    if total:
        np.add.at(jump_sum, (jump_path, jump_step), jump_amp)

    log_ret = params.drift * dt[None, :, None] + params.sigma * dW + jump_sum[:, :, None]
    log_prices = np.concatenate(
        [np.zeros((n_paths, 1, n)), np.cumsum(log_ret, axis=1)], axis=1
    )
    prices = params.x0_vec[None, None, :] * np.exp(log_prices)

    order = np.lexsort((jump_path, jump_step))
    jump_path = jump_path[order]
    jump_step = jump_step[order]
    jump_cell = jump_cell[order].astype(np.int64)
    jump_time = jump_time[order]
    jump_amp = jump_amp[order]
    step_counts = np.bincount(jump_step, minlength=n_steps)
    step_ptr = np.concatenate([[0], np.cumsum(step_counts)]).astype(np.int64)

    return PathBundle(
        params=params, grids=grids, prices=prices, wiener_increments=dW,
        jump_path=jump_path, jump_step=jump_step, jump_cell=jump_cell,
        jump_time=jump_time, jump_amp=jump_amp, jump_step_ptr=step_ptr,
        seed=seed,
    )


def simulate_from_state(params: ModelParams, grids: DiscretizationGrids,
                        start_index: int, start_prices: np.ndarray,
                        n_repeats: int, rng: np.random.Generator) -> np.ndarray:
    """Continue paths from given states at an exercise date to maturity.

    Each of the B start states is continued by ``n_repeats`` independent
    sub-paths simulated step by step on the same Euler grid (exact lognormal
    per-step transitions; per-step jump totals drawn as a Poisson count with
    a conditionally normal amplitude sum).  Only the prices at the exercise
    dates after the start date are kept.

    Parameters
    ----------
    start_index : exercise date index j of the start states.
    start_prices : (B, n_assets) states at T_j.
    n_repeats : sub-paths per state; sub-paths of state b occupy the block
        b*n_repeats:(b+1)*n_repeats of the output.

    Returns
    -------
    (B * n_repeats, J - j, n_assets) prices at dates T_{j+1}..T_J.
    """
    if not grids.matches(params):
        raise ValueError("grids were built for different model parameters")
    start_prices = np.atleast_2d(np.asarray(start_prices, dtype=float))
    n = params.n_assets
    node0 = grids.exercise_index[start_index]
    n_dates_after = grids.n_intervals - start_index
    if n_dates_after < 1:
        raise ValueError("start date must precede maturity")

    batch = start_prices.shape[0] * n_repeats
    log_x = np.log(np.repeat(start_prices, n_repeats, axis=0))
    out = np.empty((batch, n_dates_after, n))
    date_nodes = set(int(i) for i in grids.exercise_index)
    dt = grids.step_sizes
    d = 0
    for l in range(node0, grids.n_steps):
        z = rng.standard_normal((batch, n))
        step = params.drift * dt[l] + params.sigma * math.sqrt(dt[l]) * z
        if params.lam > 0:
            count = rng.poisson(params.lam * dt[l], batch)
            zj = rng.standard_normal(batch)
            step += (count * params.m + params.theta * np.sqrt(count) * zj)[:, None]
        log_x += step
        if (l + 1) in date_nodes:
            out[:, d, :] = np.exp(log_x)
            d += 1
    return out


def discounted_date_payoffs(params: ModelParams, date_prices: np.ndarray) -> np.ndarray:
    """Time-0 discounted payoffs e^{-r T_j} h(X_{T_j}) at every exercise date."""
    h = min_put_payoff(date_prices, params.sk)
    disc = np.exp(-params.r * params.exercise_dates)
    return h * disc[None, :]
