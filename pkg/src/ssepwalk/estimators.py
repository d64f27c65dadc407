"""Replicated experiments: annealed/quenched estimation and the lemma probes.

Replicas draw from disjoint streams indexed by replica number, so results
are deterministic given the master seed and independent of scheduling;
multi-point studies (t-grids, scaling comparisons) separate their batches by
stream blocks so no draw is shared between grid points.  Aggregation is a
deterministic fold in replica order.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import (
    LatticeSpec,
    ModelParams,
    SeedSpec,
    default_lattice,
    derive_stream,
    env_seed,
    theoretical_targets,
    walk_seed,
)
from .ssep import generate_log_from_seed, run_site_occupation
from .stats import Z_99, ks_normal, mean_ci, wilson_ci
from .walk import simulate_joint, simulate_walk

# Doob L^6 constant (6/5)^6 reported with the sixth-moment probe: it converts
# a sixth-moment bound into a bound on the running maximum of the walk.
DOOB_L6_CONSTANT = (6.0 / 5.0) ** 6

CSV_COLUMNS = (
    "replica_id",
    "env_id",
    "T",
    "X_T",
    "jump_count",
    "max_abs_X",
    "occ_integral",
    "qv_integral",
    "y_integral",
    "winding_flag",
)


class InvalidPlan(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one experiment bit for bit."""

    params: ModelParams
    lattice: LatticeSpec
    horizon: float
    replicas: int = 0
    mode: str = "annealed"
    environments: int = 0
    walks_per_env: int = 0
    master_seed: int = 0
    t_grid: tuple[float, ...] = ()
    stream_block: int = 0
    workers: int = 1

    def validate(self) -> None:
        self.params.validate()
        self.lattice.validate()
        if self.horizon < 0:
            raise InvalidPlan(f"horizon must be >= 0, got {self.horizon}")
        if self.mode == "annealed":
            if self.replicas < 2:
                raise InvalidPlan("annealed mode needs replicas >= 2")
        elif self.mode == "quenched":
            if self.environments < 2:
                raise InvalidPlan("quenched mode needs environments >= 2")
            if self.walks_per_env < 2:
                raise InvalidPlan("quenched mode needs walks_per_env >= 2")
        else:
            raise InvalidPlan(f"unknown mode {self.mode!r}")

    def validate_grid(self, min_points: int = 3) -> None:
        if len(self.t_grid) < min_points:
            raise InvalidPlan(f"t-grid needs at least {min_points} points")
        if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise InvalidPlan("t-grid must be strictly increasing")


@dataclass(frozen=True)
class ReplicaRow:
    """One per-walk record; the CSV row schema of the harness."""

    replica_id: int
    env_id: int
    horizon: float
    displacement: int
    jump_count: int
    max_abs_position: int
    occ_integral: float
    qv_integral: float
    y_integral: float
    winding_flag: int

    def as_csv_fields(self) -> tuple:
        return (
            self.replica_id,
            self.env_id,
            repr(self.horizon),
            self.displacement,
            self.jump_count,
            self.max_abs_position,
            repr(self.occ_integral),
            repr(self.qv_integral),
            repr(self.y_integral),
            self.winding_flag,
        )


def _annealed_task(args) -> ReplicaRow:
    master_seed, block, replica, rho, lam, size, horizon = args
    params = ModelParams(rho, lam)
    lattice = LatticeSpec(size)
    es = derive_stream(env_seed(master_seed, replica, block))
    ws = derive_stream(walk_seed(master_seed, replica, block))
    _, real, acc = simulate_joint(params, lattice, horizon, es, ws, record_log=False)
    return ReplicaRow(
        replica_id=replica,
        env_id=block * 2**20 + replica,
        horizon=horizon,
        displacement=real.displacement,
        jump_count=real.jump_count,
        max_abs_position=real.max_abs_position,
        occ_integral=acc.occ_integral,
        qv_integral=acc.qv_integral,
        y_integral=acc.y_integral,
        winding_flag=int(real.winding_flag),
    )


def run_replicas(
    params: ModelParams,
    lattice: LatticeSpec,
    horizon: float,
    replicas: int,
    master_seed: int,
    block: int = 0,
    workers: int = 1,
) -> list[ReplicaRow]:
    """Independent joint simulations, merged in replica order."""
    tasks = [
        (master_seed, block, r, params.rho, params.lam, lattice.size, horizon)
        for r in range(replicas)
    ]
    if workers <= 1:
        return [_annealed_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, replicas // (workers * 8))
        return list(pool.map(_annealed_task, tasks, chunksize=chunk))


@dataclass(frozen=True)
class QuantityEstimate:
    quantity: str
    estimate: float
    se: float
    ci99: tuple[float, float]
    target: float | None
    tolerance: float | None = None
    kind: str = "two-sided"
    verdict: str = "NA"

    def to_json_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "estimate": self.estimate,
            "se": self.se,
            "ci99": list(self.ci99),
            "target": self.target,
            "tolerance": self.tolerance,
            "kind": self.kind,
            "verdict": self.verdict,
        }


def _estimate(
    quantity: str,
    values: np.ndarray,
    target: float | None,
    tolerance: float | None = None,
    kind: str = "two-sided",
) -> QuantityEstimate:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    ci = (mean - Z_99 * se, mean + Z_99 * se)
    verdict = "NA"
    if target is not None:
        if kind == "upper-bound":
            slack = tolerance if tolerance is not None else 0.0
            verdict = "PASS" if mean <= target + slack else "FAIL"
        else:
            in_ci = ci[0] <= target <= ci[1]
            in_tol = tolerance is not None and abs(mean - target) <= tolerance
            verdict = "PASS" if (in_ci or in_tol) else "FAIL"
    return QuantityEstimate(quantity, mean, se, ci, target, tolerance, kind, verdict)


def _variance_estimate(
    quantity: str, values: np.ndarray, scale: float, target: float, tolerance
) -> QuantityEstimate:
    """Variance of the values divided by `scale`, with the normal-theory
    standard error s^2 sqrt(2/(n-1))."""
    n = values.size
    var = float(values.var(ddof=1)) / scale
    se = var * math.sqrt(2.0 / (n - 1))
    ci = (var - Z_99 * se, var + Z_99 * se)
    in_ci = ci[0] <= target <= ci[1]
    in_tol = tolerance is not None and abs(var - target) <= tolerance
    verdict = "PASS" if (in_ci or in_tol) else "FAIL"
    return QuantityEstimate(quantity, var, se, ci, target, tolerance, "two-sided", verdict)


@dataclass(frozen=True)
class EstimateReport:
    plan: ExperimentPlan
    entries: tuple[QuantityEstimate, ...]
    ks_statistic: float | None
    ks_pvalue: float | None
    winding_count: int
    rows_used: int
    rows: tuple[ReplicaRow, ...] = field(repr=False)

    def entry(self, quantity: str) -> QuantityEstimate:
        for e in self.entries:
            if e.quantity == quantity:
                return e
        raise KeyError(quantity)

    def to_json_dict(self) -> dict:
        targets = theoretical_targets(self.plan.params)
        return {
            "schema": "ssepwalk-report 1",
            "mode": self.plan.mode,
            "rho": self.plan.params.rho,
            "lambda": self.plan.params.lam,
            "T": self.plan.horizon,
            "L": self.plan.lattice.size,
            "replicas": self.plan.replicas,
            "master_seed": f"0x{self.plan.master_seed:x}",
            "targets": {"sigma_sq": targets.sigma_sq, "occ_limit": targets.occ_limit},
            "entries": [e.to_json_dict() for e in self.entries],
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "winding_count": self.winding_count,
            "rows_used": self.rows_used,
        }


def run_annealed(
    plan: ExperimentPlan, tolerances: dict[str, float] | None = None
) -> EstimateReport:
    """R independent joint simulations and the limit-quantity estimates.

    Windings are excluded from estimation but counted in the report; they
    are practically impossible at the default lattice sizes.
    """
    plan.validate()
    if plan.mode != "annealed":
        raise InvalidPlan("run_annealed needs an annealed-mode plan")
    tol = tolerances or {}
    rows = run_replicas(
        plan.params,
        plan.lattice,
        plan.horizon,
        plan.replicas,
        plan.master_seed,
        plan.stream_block,
        plan.workers,
    )
    return summarize_rows(plan, rows, tol)


def summarize_rows(
    plan: ExperimentPlan,
    rows: list[ReplicaRow],
    tol: dict[str, float],
) -> EstimateReport:
    targets = theoretical_targets(plan.params)
    T = plan.horizon
    winding = sum(r.winding_flag for r in rows)
    used = [r for r in rows if not r.winding_flag]
    if len(used) < 2:
        raise InvalidPlan("fewer than two usable (non-winding) replicas")
    x = np.array([r.displacement for r in used], dtype=np.float64)
    jumps = np.array([r.jump_count for r in used], dtype=np.float64)
    occ = np.array([r.occ_integral for r in used])
    qv = np.array([r.qv_integral for r in used])
    entries = [
        _estimate("occupation_fraction", occ / T, targets.occ_limit,
                  tol.get("occupation_fraction")),
        _estimate("qv_per_t", qv / T, targets.sigma_sq, tol.get("qv_per_t")),
        _variance_estimate("var_x_per_t", x, T, targets.sigma_sq,
                           tol.get("var_x_per_t")),
    ]
    mx = _estimate("mean_x", x, 0.0)
    entries.append(
        QuantityEstimate("mean_x", mx.estimate, mx.se, mx.ci99, 0.0,
                         4.0 * mx.se, "two-sided",
                         "PASS" if abs(mx.estimate) <= 4.0 * mx.se else "FAIL")
    )
    gap = (x * x - qv) / T
    g = _estimate("isometry_gap_per_t", gap, 0.0)
    entries.append(
        QuantityEstimate("isometry_gap_per_t", g.estimate, g.se, g.ci99, 0.0,
                         4.0 * g.se, "two-sided",
                         "PASS" if abs(g.estimate) <= 4.0 * g.se else "FAIL")
    )
    comp = jumps - qv
    c = _estimate("compensated_jump_mean", comp, 0.0)
    entries.append(
        QuantityEstimate("compensated_jump_mean", c.estimate, c.se, c.ci99, 0.0,
                         4.0 * c.se, "two-sided",
                         "PASS" if abs(c.estimate) <= 4.0 * c.se else "FAIL")
    )
    ratio = x**6 / T**3
    bound = (jumps + 15.0 * jumps**2 + 90.0 * jumps**3) / T**3
    diff = ratio - bound
    diff_se = float(diff.std(ddof=1) / math.sqrt(diff.size))
    entries.append(
        _estimate("sixth_moment_ratio", ratio, float(bound.mean()),
                  4.0 * diff_se, "upper-bound")
    )
    ks_d = ks_p = None
    if targets.sigma_sq > 0 and T > 0 and x.size >= 20:
        ks_d, ks_p = ks_normal(x / math.sqrt(targets.sigma_sq * T))
    return EstimateReport(
        plan=plan,
        entries=tuple(entries),
        ks_statistic=ks_d,
        ks_pvalue=ks_p,
        winding_count=winding,
        rows_used=len(used),
        rows=tuple(rows),
    )


# --- quenched mode ---------------------------------------------------------


@dataclass(frozen=True)
class QuenchedEnvSummary:
    env_id: int
    walks: int
    occ_mean: float
    occ_se: float
    y_mean: float
    y_se: float
    winding_count: int


@dataclass(frozen=True)
class QuenchedReport:
    plan: ExperimentPlan
    envs: tuple[QuenchedEnvSummary, ...]
    pooled_occ_mean: float
    across_env_std: float
    mean_within_env_se: float
    occ_target: float
    rows: tuple[ReplicaRow, ...] = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "schema": "ssepwalk-quenched-report 1",
            "rho": self.plan.params.rho,
            "lambda": self.plan.params.lam,
            "T": self.plan.horizon,
            "L": self.plan.lattice.size,
            "environments": self.plan.environments,
            "walks_per_env": self.plan.walks_per_env,
            "master_seed": f"0x{self.plan.master_seed:x}",
            "occ_target": self.occ_target,
            "pooled_occ_mean": self.pooled_occ_mean,
            "across_env_std": self.across_env_std,
            "mean_within_env_se": self.mean_within_env_se,
            "envs": [
                {
                    "env_id": e.env_id,
                    "walks": e.walks,
                    "occ_mean": e.occ_mean,
                    "occ_se": e.occ_se,
                    "y_mean": e.y_mean,
                    "y_se": e.y_se,
                    "winding_count": e.winding_count,
                }
                for e in self.envs
            ],
        }


def _quenched_env_task(args):
    master_seed, block, env_idx, walks, rho, lam, size, horizon = args
    params = ModelParams(rho, lam)
    lattice = LatticeSpec(size)
    log = generate_log_from_seed(rho, lattice, horizon, env_seed(master_seed, env_idx, block))
    rows = []
    for w in range(walks):
        ws = derive_stream(walk_seed(master_seed, env_idx * walks + w, block))
        real, acc = simulate_walk(log, params, ws)
        rows.append(
            ReplicaRow(
                replica_id=w,
                env_id=env_idx,
                horizon=horizon,
                displacement=real.displacement,
                jump_count=real.jump_count,
                max_abs_position=real.max_abs_position,
                occ_integral=acc.occ_integral,
                qv_integral=acc.qv_integral,
                y_integral=acc.y_integral,
                winding_flag=int(real.winding_flag),
            )
        )
    return env_idx, rows


def run_quenched(plan: ExperimentPlan) -> QuenchedReport:
    """E environments, W walks on each shared log, with per-environment means."""
    plan.validate()
    if plan.mode != "quenched":
        raise InvalidPlan("run_quenched needs a quenched-mode plan")
    tasks = [
        (plan.master_seed, plan.stream_block, e, plan.walks_per_env,
         plan.params.rho, plan.params.lam, plan.lattice.size, plan.horizon)
        for e in range(plan.environments)
    ]
    if plan.workers <= 1:
        results = [_quenched_env_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_quenched_env_task, tasks))
    results.sort(key=lambda pair: pair[0])
    T = plan.horizon
    envs = []
    all_rows: list[ReplicaRow] = []
    for env_idx, rows in results:
        all_rows.extend(rows)
        occ = np.array([r.occ_integral for r in rows]) / T
        y = np.array([r.y_integral for r in rows]) / T
        envs.append(
            QuenchedEnvSummary(
                env_id=env_idx,
                walks=len(rows),
                occ_mean=float(occ.mean()),
                occ_se=float(occ.std(ddof=1) / math.sqrt(occ.size)),
                y_mean=float(y.mean()),
                y_se=float(y.std(ddof=1) / math.sqrt(y.size)),
                winding_count=sum(r.winding_flag for r in rows),
            )
        )
    env_means = np.array([e.occ_mean for e in envs])
    targets = theoretical_targets(plan.params)
    return QuenchedReport(
        plan=plan,
        envs=tuple(envs),
        pooled_occ_mean=float(np.mean([r.occ_integral / T for r in all_rows])),
        across_env_std=float(env_means.std(ddof=1)),
        mean_within_env_se=float(np.mean([e.occ_se for e in envs])),
        occ_target=targets.occ_limit,
        rows=tuple(all_rows),
    )


# --- probes ----------------------------------------------------------------


@dataclass(frozen=True)
class RateProbeEntry:
    t: float
    replicas: int
    exceed_count: int
    p_hat: float
    wilson95: tuple[float, float]


@dataclass(frozen=True)
class RateProbeResult:
    epsilon: float
    entries: tuple[RateProbeEntry, ...]
    non_increasing_within_ci: bool

    def to_json_dict(self) -> dict:
        return {
            "schema": "ssepwalk-rate-probe 1",
            "epsilon": self.epsilon,
            "non_increasing_within_ci": self.non_increasing_within_ci,
            "entries": [
                {
                    "t": e.t,
                    "replicas": e.replicas,
                    "exceed_count": e.exceed_count,
                    "p_hat": e.p_hat,
                    "wilson95": list(e.wilson95),
                }
                for e in self.entries
            ],
        }


def rate_probe(plan: ExperimentPlan, epsilon: float) -> RateProbeResult:
    """Empirical P(|Y_t|/t >= epsilon) over the t-grid.

    Checks the sequence is non-increasing up to overlap of the Wilson 95%
    intervals; the asymptotic decay exponent itself is far below desk-scale
    resolution and is not estimated.
    """
    plan.validate_grid()
    if plan.replicas < 2:
        raise InvalidPlan("rate probe needs replicas >= 2")
    if epsilon <= 0:
        raise InvalidPlan("epsilon must be positive")
    entries = []
    for i, t in enumerate(plan.t_grid):
        lattice = plan.lattice if plan.lattice.size >= default_lattice(t).size else default_lattice(t)
        rows = run_replicas(
            plan.params, lattice, t, plan.replicas, plan.master_seed,
            plan.stream_block + i, plan.workers,
        )
        y = np.array([abs(r.y_integral) / t for r in rows])
        exceed = int(np.sum(y >= epsilon))
        lo, hi = wilson_ci(exceed, len(rows), 0.95)
        entries.append(
            RateProbeEntry(t, len(rows), exceed, exceed / len(rows), (lo, hi))
        )
    ok = all(
        b.wilson95[0] <= a.wilson95[1]
        for a, b in zip(entries, entries[1:])
    )
    return RateProbeResult(epsilon, tuple(entries), ok)


@dataclass(frozen=True)
class MomentProbeEntry:
    t: float
    replicas: int
    ratio: float
    se: float
    ci99: tuple[float, float]
    poisson_bound: float
    diff_mean: float
    diff_se: float
    dominated: bool


@dataclass(frozen=True)
class MomentProbeResult:
    entries: tuple[MomentProbeEntry, ...]
    bounded_trend: bool
    doob_l6_constant: float = DOOB_L6_CONSTANT

    def to_json_dict(self) -> dict:
        return {
            "schema": "ssepwalk-moment-probe 1",
            "bounded_trend": self.bounded_trend,
            "doob_l6_constant": self.doob_l6_constant,
            "entries": [
                {
                    "t": e.t,
                    "replicas": e.replicas,
                    "ratio": e.ratio,
                    "se": e.se,
                    "ci99": list(e.ci99),
                    "poisson_bound": e.poisson_bound,
                    "dominated": e.dominated,
                }
                for e in self.entries
            ],
        }


def sixth_moment_probe(plan: ExperimentPlan) -> MomentProbeResult:
    """E[X_t^6]/t^3 over the t-grid, against the jump-count moment bound.

    For each replica the bound sample is J + 15 J^2 + 90 J^3 with J the
    observed jump count; domination is asserted on the paired difference.
    """
    plan.validate_grid()
    if plan.replicas < 2:
        raise InvalidPlan("moment probe needs replicas >= 2")
    entries = []
    for i, t in enumerate(plan.t_grid):
        lattice = plan.lattice if plan.lattice.size >= default_lattice(t).size else default_lattice(t)
        rows = run_replicas(
            plan.params, lattice, t, plan.replicas, plan.master_seed,
            plan.stream_block + i, plan.workers,
        )
        x = np.array([r.displacement for r in rows], dtype=np.float64)
        j = np.array([r.jump_count for r in rows], dtype=np.float64)
        ratio = x**6 / t**3
        bound = (j + 15.0 * j**2 + 90.0 * j**3) / t**3
        diff = ratio - bound
        mean = float(ratio.mean())
        se = float(ratio.std(ddof=1) / math.sqrt(ratio.size))
        diff_mean = float(diff.mean())
        diff_se = float(diff.std(ddof=1) / math.sqrt(diff.size))
        entries.append(
            MomentProbeEntry(
                t=t,
                replicas=len(rows),
                ratio=mean,
                se=se,
                ci99=(mean - Z_99 * se, mean + Z_99 * se),
                poisson_bound=float(bound.mean()),
                diff_mean=diff_mean,
                diff_se=diff_se,
                dominated=diff_mean <= 4.0 * diff_se,
            )
        )
    ok = all(
        b.ci99[0] <= a.ci99[1] for a, b in zip(entries, entries[1:])
    )
    return MomentProbeResult(tuple(entries), ok)


@dataclass(frozen=True)
class DecouplingEntry:
    separation: int
    replicas: int
    covariance: float
    se: float
    ci99: tuple[float, float]
    f1_mean: float
    f2_mean: float


@dataclass(frozen=True)
class DecouplingResult:
    box_size: int
    threshold1: float
    threshold2: float
    entries: tuple[DecouplingEntry, ...]

    def to_json_dict(self) -> dict:
        return {
            "schema": "ssepwalk-decoupling-probe 1",
            "box_size": self.box_size,
            "threshold1": self.threshold1,
            "threshold2": self.threshold2,
            "entries": [
                {
                    "separation": e.separation,
                    "replicas": e.replicas,
                    "covariance": e.covariance,
                    "se": e.se,
                    "ci99": list(e.ci99),
                    "f1_mean": e.f1_mean,
                    "f2_mean": e.f2_mean,
                }
                for e in self.entries
            ],
        }


def decoupling_probe(
    rho: float,
    box_size: int,
    separations: list[int],
    replicas: int,
    master_seed: int,
    threshold1: float | None = None,
    threshold2: float | None = None,
) -> DecouplingResult:
    """Covariance of thresholded box densities at the given separations.

    Box 1 covers lattice sites [0, H] (space window [-H, 0] of the bound),
    box 2 covers [H+y, 2H+y]; both average occupation over the time window
    [0, H] and threshold the density (default threshold rho, mapping each
    box to a {0,1}-valued functional of the environment only).
    """
    if box_size < 2 or replicas < 2:
        raise InvalidPlan("need box_size >= 2 and replicas >= 2")
    if not separations:
        raise InvalidPlan("need at least one separation")
    thr1 = rho if threshold1 is None else threshold1
    thr2 = rho if threshold2 is None else threshold2
    H = box_size
    max_y = max(separations)
    size = 4 * H + max_y
    if size % 2:
        size += 1
    lattice = LatticeSpec(max(256, size))
    norm = (H + 1) * H  # sites per box * time horizon
    entries = []
    for i, y in enumerate(separations):
        if y < 0:
            raise InvalidPlan("separations must be >= 0")
        f1 = np.empty(replicas)
        f2 = np.empty(replicas)
        for r in range(replicas):
            stream = derive_stream(env_seed(master_seed, r, i))
            site_occ, _, _ = run_site_occupation(rho, lattice, float(H), stream)
            d1 = site_occ[0 : H + 1].sum() / norm
            d2 = site_occ[H + y : 2 * H + y + 1].sum() / norm
            f1[r] = 1.0 if d1 > thr1 else 0.0
            f2[r] = 1.0 if d2 > thr2 else 0.0
        cov = float(np.mean(f1 * f2) - f1.mean() * f2.mean())
        centered = (f1 - f1.mean()) * (f2 - f2.mean())
        se = float(centered.std(ddof=1) / math.sqrt(replicas))
        entries.append(
            DecouplingEntry(
                separation=y,
                replicas=replicas,
                covariance=cov,
                se=se,
                ci99=(cov - Z_99 * se, cov + Z_99 * se),
                f1_mean=float(f1.mean()),
                f2_mean=float(f2.mean()),
            )
        )
    return DecouplingResult(box_size, thr1, thr2, tuple(entries))


# --- persistence -----------------------------------------------------------


def write_rows_csv(path: str, rows, meta: dict) -> None:
    """Versioned CSV: a comment header echoing the experiment parameters,
    the column row, then one line per replica.  Floats are written with
    repr so files are bit-reproducible."""
    echo = " ".join(f"{k}={v}" for k, v in meta.items())
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# ssepwalk-csv 1 {echo}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row.as_csv_fields()) + "\n")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
