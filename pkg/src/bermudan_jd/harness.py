"""Experiment orchestration: configuration, seed management, bound runs, and
table-reproduction reports.

A root seed deterministically derives one sub-seed per stage (policy fit,
integrand fit, lower-bound evaluation, upper-bound evaluation, nested
benchmark), so re-running any stage with its recorded seed reproduces its
estimate exactly.  Reports are split into a deterministic document (config,
seeds, estimates) and a volatile timing sidecar, so report bytes are
reproducible run to run.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .analytic import EuroPricerConfig, bs_min_put, merton_put_1d
from .dual_ab import NestedConfig, ab_upper_bound
from .dual_tm import MartingaleModel, fit_integrands, tm_upper_bound
from .estimates import BoundEstimate
from .lower_bound import fit_policy, lower_bound
from .model import (DiscretizationGrids, ModelParams, min_put_payoff,
                    simulate_paths)
from .regression import BasisSpec

__all__ = ["ExperimentConfig", "run_experiment", "reproduce_table",
           "write_report", "rows_to_csv", "intervals_overlap", "BoundEstimate",
           "TABLE_IDS"]

# Stage identifiers appended to the root seed; pairwise distinct by design.
STAGE_POLICY = 1
STAGE_INTEGRANDS = 2
STAGE_LB = 3
STAGE_TM = 4
STAGE_AB = 5

TABLE_IDS = ("5.1", "5.2", "5.4")

# Published reference bounds (mean, 95% half-width) for the benchmark
# configurations, keyed by (n_assets, lam, x0).
REFERENCE_51 = {
    (1, 1, 36): {"lb": (5.842, 0.031), "tm": (5.970, 0.031), "ab": (5.899, 0.038)},
    (1, 1, 40): {"lb": (3.791, 0.028), "tm": (3.910, 0.033), "ab": (3.856, 0.036)},
    (1, 1, 44): {"lb": (2.383, 0.024), "tm": (2.443, 0.028), "ab": (2.417, 0.033)},
    (1, 3, 36): {"lb": (7.702, 0.043), "tm": (7.899, 0.030), "ab": (7.810, 0.053)},
    (1, 3, 40): {"lb": (5.817, 0.039), "tm": (5.996, 0.047), "ab": (5.894, 0.050)},
    (1, 3, 44): {"lb": (4.352, 0.036), "tm": (4.480, 0.044), "ab": (4.440, 0.040)},
    (2, 1, 36): {"lb": (8.133, 0.033), "tm": (8.308, 0.045), "ab": (8.243, 0.040)},
    (2, 1, 40): {"lb": (5.691, 0.034), "tm": (5.785, 0.040), "ab": (5.755, 0.043)},
    (2, 1, 44): {"lb": (3.765, 0.028), "tm": (3.842, 0.036), "ab": (3.804, 0.038)},
    (2, 3, 36): {"lb": (9.786, 0.045), "tm": (10.038, 0.061), "ab": (9.989, 0.057)},
    (2, 3, 40): {"lb": (7.680, 0.043), "tm": (7.900, 0.060), "ab": (7.845, 0.057)},
    (2, 3, 44): {"lb": (5.941, 0.040), "tm": (6.118, 0.058), "ab": (6.065, 0.058)},
}

REFERENCE_52 = {
    (1, 36): {"bases1": (6.730, 0.069), "bases2": (6.283, 0.042),
              "bases3": (6.228, 0.048), "bases4": (5.970, 0.031)},
    (1, 40): {"bases1": (4.789, 0.074), "bases2": (4.228, 0.039),
              "bases3": (4.127, 0.047), "bases4": (3.910, 0.033)},
    (1, 44): {"bases1": (3.344, 0.073), "bases2": (2.734, 0.038),
              "bases3": (2.665, 0.044), "bases4": (2.443, 0.028)},
    (3, 36): {"bases1": (8.829, 0.091), "bases2": (8.338, 0.059),
              "bases3": (8.167, 0.062), "bases4": (7.899, 0.030)},
    (3, 40): {"bases1": (7.086, 0.101), "bases2": (6.377, 0.060),
              "bases3": (6.277, 0.067), "bases4": (5.996, 0.047)},
    (3, 44): {"bases1": (5.681, 0.100), "bases2": (4.953, 0.057),
              "bases3": (4.752, 0.061), "bases4": (4.480, 0.044)},
}

REFERENCE_54 = {
    (1, 36): {"wiener_term": (6.863, 0.059), "jump_term": (7.930, 0.073),
              "complete": (5.970, 0.031)},
    (1, 40): {"wiener_term": (4.450, 0.056), "jump_term": (5.184, 0.072),
              "complete": (3.910, 0.033)},
    (1, 44): {"wiener_term": (2.750, 0.050), "jump_term": (3.125, 0.064),
              "complete": (2.443, 0.028)},
    (3, 36): {"wiener_term": (10.101, 0.099), "jump_term": (9.304, 0.070),
              "complete": (7.899, 0.030)},
    (3, 40): {"wiener_term": (7.776, 0.103), "jump_term": (7.047, 0.070),
              "complete": (5.996, 0.047)},
    (3, 44): {"wiener_term": (5.747, 0.098), "jump_term": (5.244, 0.066),
              "complete": (4.480, 0.044)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: model, discretization, sample sizes, bases, seeds.

    The defaults reproduce the benchmark single-asset configuration
    (sk=40, r=4%, delta=0, sigma=20%, m=6%, theta=20%, T=1, ten exercise
    intervals, lam=1, x0=40).
    """

    r: float = 0.04
    delta: float = 0.0
    sigma: float = 0.2
    lam: float = 1.0
    m: float = 0.06
    theta: float = 0.2
    x0: tuple = (40.0,)
    sk: float = 40.0
    T: float = 1.0
    n_intervals: int = 10
    euler_step: float = 0.01
    n_cells: int = 10
    n_fit_policy: int = 50_000
    n_fit_integrands: int = 50_000
    n_lb: int = 100_000
    n_outer: int = 1_000
    n_inner: int = 500
    n_tm: int = 2_500
    basis_w_variant: int = 4
    basis_p_variant: int = 4
    itm_only: bool = True
    tm_per_step: bool = False
    tm_targets: str = "value"
    quad_nodes: int = 128
    series_cutoff: int = 50
    tail_tol: float = 1e-12
    seed: int = 20240
    bounds: tuple = ("LB", "TM", "AB")

    def __post_init__(self):
        x0 = self.x0
        if np.isscalar(x0):
            x0 = (float(x0),)
        else:
            x0 = tuple(float(v) for v in x0)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "bounds", tuple(self.bounds))

    def validate(self) -> None:
        """Collect every config problem in a single pass."""
        errors = []
        try:
            self.model_params()
        except ValueError as exc:
            errors.append(str(exc))
        for name in ("n_fit_policy", "n_fit_integrands", "n_lb", "n_outer",
                     "n_tm"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be at least 1")
        if "AB" in self.bounds and self.n_inner < 2:
            errors.append("n_inner must be at least 2 when the AB bound is requested")
        if self.euler_step <= 0:
            errors.append("euler_step must be positive")
        if self.n_cells < 1:
            errors.append("n_cells must be at least 1")
        for name in ("basis_w_variant", "basis_p_variant"):
            if getattr(self, name) not in (1, 2, 3, 4):
                errors.append(f"{name} must be one of 1..4")
        if self.tm_targets not in ("value", "realized"):
            errors.append("tm_targets must be 'value' or 'realized'")
        unknown = set(self.bounds) - {"LB", "TM", "AB"}
        if unknown:
            errors.append(f"unknown bounds requested: {sorted(unknown)}")
        if errors:
            raise ValueError("invalid config: " + "; ".join(errors))

    def model_params(self) -> ModelParams:
        return ModelParams(r=self.r, delta=self.delta, sigma=self.sigma,
                           lam=self.lam, m=self.m, theta=self.theta,
                           x0=self.x0, sk=self.sk, T=self.T,
                           n_intervals=self.n_intervals)

    def pricer_config(self) -> EuroPricerConfig:
        return EuroPricerConfig(quad_nodes=self.quad_nodes,
                                series_cutoff=self.series_cutoff,
                                tail_tol=self.tail_tol)

    def stage_seeds(self) -> dict:
        return {
            "policy_fit": (self.seed, STAGE_POLICY),
            "integrand_fit": (self.seed, STAGE_INTEGRANDS),
            "lb_eval": (self.seed, STAGE_LB),
            "tm_eval": (self.seed, STAGE_TM),
            "ab": (self.seed, STAGE_AB),
        }

    def to_json_dict(self) -> dict:
        doc = asdict(self)
        doc["x0"] = list(self.x0)
        doc["bounds"] = list(self.bounds)
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        if "x0" in doc and isinstance(doc["x0"], list):
            doc["x0"] = tuple(doc["x0"])
        if "bounds" in doc and isinstance(doc["bounds"], list):
            doc["bounds"] = tuple(doc["bounds"])
        return cls(**doc)


def intervals_overlap(mean_a: float, se_a: float, mean_b: float, se_b: float,
                      n_joint_se: float = 3.0) -> bool:
    """True when the 95% intervals overlap or the means differ by at most
    ``n_joint_se`` joint standard errors."""
    gap = abs(mean_a - mean_b)
    ci = 1.96 * (se_a + se_b)
    joint = n_joint_se * math.sqrt(se_a**2 + se_b**2)
    return gap <= max(ci, joint)


def run_experiment(cfg: ExperimentConfig):
    """Run the requested bounds for one configuration.

    Returns (report, timings): the report holds config, seeds and one
    estimate record per requested bound and is byte-deterministic for a
    fixed config; timings are wall-clock seconds per stage.
    """
    cfg.validate()
    params = cfg.model_params()
    grids = DiscretizationGrids.build(params, cfg.euler_step, cfg.n_cells)
    seeds = cfg.stage_seeds()
    timings: dict[str, float] = {}
    bounds: dict[str, BoundEstimate] = {}

    t0 = time.perf_counter()
    fit_bundle = simulate_paths(params, grids, cfg.n_fit_policy,
                                seed=seeds["policy_fit"])
    policy = fit_policy(fit_bundle, params, itm_only=cfg.itm_only)
    timings["policy_fit_s"] = time.perf_counter() - t0

    if "LB" in cfg.bounds:
        t0 = time.perf_counter()
        lb_bundle = simulate_paths(params, grids, cfg.n_lb, seed=seeds["lb_eval"])
        est = lower_bound(policy, lb_bundle, params)
        timings["lb_eval_s"] = time.perf_counter() - t0
        bounds["LB"] = replace(est, wall_time_s=timings["lb_eval_s"])

    if "TM" in cfg.bounds:
        t0 = time.perf_counter()
        tm_fit_bundle = simulate_paths(params, grids, cfg.n_fit_integrands,
                                       seed=seeds["integrand_fit"])
        model = fit_integrands(
            policy, tm_fit_bundle, params, grids,
            basis_w=BasisSpec("rho_W", cfg.basis_w_variant),
            basis_p=BasisSpec("rho_P", cfg.basis_p_variant),
            per_step=cfg.tm_per_step, targets=cfg.tm_targets)
        timings["tm_fit_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        tm_bundle = simulate_paths(params, grids, cfg.n_tm, seed=seeds["tm_eval"])
        est = tm_upper_bound(model, tm_bundle, params)
        timings["tm_eval_s"] = time.perf_counter() - t0
        bounds["TM"] = replace(est, wall_time_s=timings["tm_eval_s"])

    if "AB" in cfg.bounds:
        t0 = time.perf_counter()
        est = ab_upper_bound(policy, params, grids,
                             NestedConfig(cfg.n_outer, cfg.n_inner),
                             seed=seeds["ab"])
        timings["ab_s"] = time.perf_counter() - t0
        bounds["AB"] = replace(est, wall_time_s=timings["ab_s"])

    if "TM" in bounds and "AB" in bounds and timings["ab_s"] > 0:
        # Bound-evaluation stages only: the integrand fit is a one-time
        # precomputation, the nested scheme pays per estimate.
        timings["tm_vs_ab_time_ratio"] = timings["tm_eval_s"] / timings["ab_s"]

    report = {
        "config": cfg.to_json_dict(),
        "seeds": {k: list(v) for k, v in seeds.items()},
        "immediate_exercise_value": float(
            min_put_payoff(params.x0_vec, params.sk)),
        "bounds": {k: est.as_record() for k, est in bounds.items()},
    }
    if "LB" in bounds:
        report["lb_final"] = max(report["immediate_exercise_value"],
                                 bounds["LB"].mean)
    if "LB" in bounds and "TM" in bounds:
        report["duality_gap_tm"] = bounds["TM"].mean - bounds["LB"].mean
    return report, timings


def _scaled(size: int, scale: float, floor: int = 16) -> int:
    return max(floor, int(round(size * scale)))


def _scale_config(cfg: ExperimentConfig, scale: float) -> ExperimentConfig:
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    return replace(
        cfg,
        n_fit_policy=_scaled(cfg.n_fit_policy, scale),
        n_fit_integrands=_scaled(cfg.n_fit_integrands, scale),
        n_lb=_scaled(cfg.n_lb, scale),
        n_outer=_scaled(cfg.n_outer, scale),
        n_inner=max(2, int(round(cfg.n_inner * scale))),
        n_tm=_scaled(cfg.n_tm, scale),
    )


def _overlap_fields(prefix: str, est: BoundEstimate, ref: tuple | None) -> dict:
    row = {
        f"{prefix}_estimate": est.mean,
        f"{prefix}_stderr": est.stderr,
        f"{prefix}_ci95": est.ci95_halfwidth,
        f"{prefix}_paper_value": "" if ref is None else ref[0],
        f"{prefix}_overlap": "",
    }
    if ref is not None:
        row[f"{prefix}_overlap"] = int(intervals_overlap(
            est.mean, est.stderr, ref[0], ref[1] / 1.96))
    return row


def reproduce_table(table_id: str, scale: float = 1.0, *,
                    seed: int = 20240, include_two_asset: bool = False,
                    base_config: ExperimentConfig | None = None) -> list[dict]:
    """Reproduce one results table as a list of CSV-ready row dicts.

    ``scale`` shrinks every sample size for quick runs.  Two-asset rows of
    table 5.1 sit behind ``include_two_asset`` (the multi-asset European
    evaluations dominate the runtime).
    """
    if table_id not in TABLE_IDS:
        raise ValueError(f"unknown table id {table_id!r}; expected one of {TABLE_IDS}")
    base = base_config if base_config is not None else ExperimentConfig(seed=seed)
    base = _scale_config(replace(base, seed=seed), scale)

    if table_id == "5.1":
        return _table_51(base, include_two_asset)
    if table_id == "5.2":
        return _table_52(base)
    return _table_54(base)


def _table_51(base: ExperimentConfig, include_two_asset: bool) -> list[dict]:
    rows = []
    asset_counts = (1, 2) if include_two_asset else (1,)
    for n in asset_counts:
        for lam in (1.0, 3.0):
            for x0 in (36.0, 40.0, 44.0):
                cfg = replace(base, lam=lam, x0=(x0,) * n)
                report, _ = run_experiment(cfg)
                ref = REFERENCE_51.get((n, int(lam), int(x0)), {})
                row = {"table": "5.1", "n": n, "lam": lam, "x0": x0}
                for key, kind in (("lb", "LB"), ("tm", "TM"), ("ab", "AB")):
                    rec = report["bounds"][kind]
                    est = BoundEstimate(kind=kind, mean=rec["mean"],
                                        stderr=rec["stderr"],
                                        n_paths=rec["n_paths"])
                    row.update(_overlap_fields(key, est, ref.get(key)))
                rows.append(row)
    return rows


def _basis_variant_bounds(base: ExperimentConfig, lam: float, x0: float,
                          variants: tuple[int, ...]) -> dict[int, BoundEstimate]:
    """TM bounds for several basis variants sharing the policy and both
    bundles, so variant comparisons ride on common random numbers."""
    cfg = replace(base, lam=lam, x0=(x0,))
    params = cfg.model_params()
    grids = DiscretizationGrids.build(params, cfg.euler_step, cfg.n_cells)
    seeds = cfg.stage_seeds()
    fit_bundle = simulate_paths(params, grids, cfg.n_fit_policy,
                                seed=seeds["policy_fit"])
    policy = fit_policy(fit_bundle, params, itm_only=cfg.itm_only)
    tm_fit_bundle = simulate_paths(params, grids, cfg.n_fit_integrands,
                                   seed=seeds["integrand_fit"])
    tm_bundle = simulate_paths(params, grids, cfg.n_tm, seed=seeds["tm_eval"])
    out = {}
    for variant in variants:
        model = fit_integrands(policy, tm_fit_bundle, params, grids,
                               basis_w=BasisSpec("rho_W", variant),
                               basis_p=BasisSpec("rho_P", variant))
        out[variant] = tm_upper_bound(model, tm_bundle, params)
    return out


def _table_52(base: ExperimentConfig) -> list[dict]:
    rows = []
    for lam in (1.0, 3.0):
        for x0 in (36.0, 40.0, 44.0):
            bounds = _basis_variant_bounds(base, lam, x0, (1, 2, 3, 4))
            ref = REFERENCE_52.get((int(lam), int(x0)), {})
            row = {"table": "5.2", "n": 1, "lam": lam, "x0": x0}
            for variant in (1, 2, 3, 4):
                row.update(_overlap_fields(f"bases{variant}", bounds[variant],
                                           ref.get(f"bases{variant}")))
            rows.append(row)
    return rows


def _table_54(base: ExperimentConfig) -> list[dict]:
    rows = []
    for lam in (1.0, 3.0):
        for x0 in (36.0, 40.0, 44.0):
            cfg = replace(base, lam=lam, x0=(x0,))
            params = cfg.model_params()
            grids = DiscretizationGrids.build(params, cfg.euler_step, cfg.n_cells)
            seeds = cfg.stage_seeds()
            fit_bundle = simulate_paths(params, grids, cfg.n_fit_policy,
                                        seed=seeds["policy_fit"])
            policy = fit_policy(fit_bundle, params, itm_only=cfg.itm_only)
            tm_fit_bundle = simulate_paths(params, grids, cfg.n_fit_integrands,
                                           seed=seeds["integrand_fit"])
            model = fit_integrands(policy, tm_fit_bundle, params, grids)
            tm_bundle = simulate_paths(params, grids, cfg.n_tm,
                                       seed=seeds["tm_eval"])
            parts = {
                "wiener_term": tm_upper_bound(model, tm_bundle, params,
                                              include_jump=False),
                "jump_term": tm_upper_bound(model, tm_bundle, params,
                                            include_wiener=False),
                "complete": tm_upper_bound(model, tm_bundle, params),
            }
            ref = REFERENCE_54.get((int(lam), int(x0)), {})
            row = {"table": "5.4", "n": 1, "lam": lam, "x0": x0}
            for key, est in parts.items():
                row.update(_overlap_fields(key, est, ref.get(key)))
            rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    """Serialize table rows with a stable column order."""
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_report(report: dict, timings: dict, out_path: str) -> None:
    """Write the deterministic report to ``out_path`` and the volatile
    timings next to it (suffix ``.timings.json``)."""
    with open(out_path, "w") as fh:
        fh.write(report_to_json(report))
    with open(out_path + ".timings.json", "w") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
