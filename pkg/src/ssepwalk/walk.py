"""Walk coupled to the environment, with exact functional accumulators.

The walker at site x jumps to each neighbour at rate 1 - lam * occ(x), so the
total jump rate is 2 - 2 lam xi0 where xi0 is the occupancy under the walker.
Simulation is by thinning: proposals arrive at rate 2 (the maximal total
rate), a proposal at time s is accepted with probability 1 - lam * xi0(s-),
and accepted proposals pick a fair direction.  This is exact for the
piecewise-constant intensity between environment events.

Three time integrals of the occupancy under the walker are reported.  Since
xi0 takes values in {0,1} they are linearly dependent, so the accumulator
tracks the occupied time

    A = int_0^T xi0(s) ds

exactly (compensated summation at every breakpoint) and derives

    occ_integral = A
    qv_integral  = int (2 - 2 lam xi0)          = 2 T - 2 lam A
    y_integral   = int (2 - lam xi0)(xi0 - rho) = (2 - lam + lam rho) A - 2 rho T

which makes the algebraic relations between the three hold to the last bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import LatticeConfiguration, LatticeSpec, ModelParams, SeedSpec
from .ssep import EnvironmentEventLog, _ring_chunks, init_stationary


@dataclass(frozen=True)
class WalkRealization:
    """Jump times/directions plus summary statistics of one walk on [0, T].

    The position is lifted to the integers through winding counts;
    winding_flag marks runs whose range reached L/2, where torus reads can
    no longer be trusted as a stand-in for the infinite lattice.
    """

    final_time: float
    jump_times: np.ndarray
    jump_directions: np.ndarray
    displacement: int
    max_abs_position: int
    winding_flag: bool

    def __post_init__(self):
        self.jump_times.flags.writeable = False
        self.jump_directions.flags.writeable = False

    @property
    def jump_count(self) -> int:
        return int(self.jump_times.shape[0])

    def validate(self) -> None:
        if self.jump_count:
            if not np.all(np.diff(self.jump_times) > 0):
                raise AssertionError("jump times not strictly increasing")
            if self.jump_times[0] < 0 or self.jump_times[-1] > self.final_time:
                raise AssertionError("jump times outside [0, T]")
        if int(self.jump_directions.sum()) != self.displacement:
            raise AssertionError("displacement != sum of directions")
        if (self.displacement - self.jump_count) % 2 != 0:
            raise AssertionError("parity mismatch between X_T and jump count")


@dataclass(frozen=True)
class FunctionalAccumulator:
    """Exact piecewise-constant integrals of the walker-site occupancy."""

    horizon: float
    occ_integral: float
    qv_integral: float
    y_integral: float

    @classmethod
    def from_occupied_time(
        cls, horizon: float, params: ModelParams, occupied_time: float
    ) -> "FunctionalAccumulator":
        lam, rho = params.lam, params.rho
        return cls(
            horizon=horizon,
            occ_integral=occupied_time,
            qv_integral=2.0 * horizon - 2.0 * lam * occupied_time,
            y_integral=(2.0 - lam + lam * rho) * occupied_time
            - 2.0 * rho * horizon,
        )

    def validate(self, params: ModelParams) -> None:
        T, lam = self.horizon, params.lam
        if not (-1e-9 <= self.occ_integral <= T + 1e-9):
            raise AssertionError("occ_integral outside [0, T]")
        if not (
            2.0 * (1.0 - lam) * T - 1e-9
            <= self.qv_integral
            <= 2.0 * T + 1e-9
        ):
            raise AssertionError("qv_integral outside [2(1-lam)T, 2T]")


@dataclass(frozen=True)
class EnvironmentView:
    """Environment re-centred at the walker: xi(k) = occupancy at x + k."""

    configuration: LatticeConfiguration
    position: int

    def xi(self, k: int = 0) -> int:
        L = self.configuration.size
        return int(self.configuration.occupancy[(self.position + k) % L])


def _draw_proposals(horizon: float, stream: np.random.Generator):
    """Rate-2 Poisson proposal process with acceptance and direction draws."""
    n = int(stream.poisson(2.0 * horizon)) if horizon > 0 else 0
    times = np.sort(stream.uniform(0.0, horizon, n)) if n else np.empty(0)
    accept_u = stream.random(n)
    directions = (stream.integers(0, 2, n, dtype=np.int64) * 2 - 1).astype(np.int8)
    return times, accept_u, directions


class _WalkState:
    """Mutable walk state threaded through the chunked kernel calls."""

    __slots__ = (
        "x", "site", "xi0", "t_anchor", "occ_sum", "occ_comp",
        "max_abs", "prop_idx", "n_jumps",
    )

    def __init__(self, occ: np.ndarray):
        self.x = 0
        self.site = 0
        self.xi0 = int(occ[0])
        self.t_anchor = 0.0
        self.occ_sum = 0.0
        self.occ_comp = 0.0
        self.max_abs = 0
        self.prop_idx = 0
        self.n_jumps = 0

    def advance(self, occ, lam, ev_t, ev_b, t_end, final, props, jt, jd):
        p_times, p_u, p_dirs = props
        (
            self.x, self.site, self.xi0, self.t_anchor,
            self.occ_sum, self.occ_comp, self.max_abs,
            self.prop_idx, self.n_jumps,
        ) = _kernels.walk_chunk(
            occ, lam,
            ev_t, ev_b, ev_t.shape[0],
            p_times, p_u, p_dirs, p_times.shape[0],
            t_end, final, jt, jd,
            self.x, self.site, self.xi0, self.t_anchor,
            self.occ_sum, self.occ_comp, self.max_abs,
            self.prop_idx, self.n_jumps,
        )


def _finish(
    state: _WalkState,
    jt: np.ndarray,
    jd: np.ndarray,
    horizon: float,
    params: ModelParams,
    L: int,
) -> tuple[WalkRealization, FunctionalAccumulator]:
    realization = WalkRealization(
        final_time=horizon,
        jump_times=jt[: state.n_jumps].copy(),
        jump_directions=jd[: state.n_jumps].copy(),
        displacement=int(state.x),
        max_abs_position=int(state.max_abs),
        winding_flag=bool(state.max_abs >= L // 2),
    )
    occupied = state.occ_sum + state.occ_comp
    accumulator = FunctionalAccumulator.from_occupied_time(horizon, params, occupied)
    return realization, accumulator


def simulate_walk(
    log: EnvironmentEventLog,
    params: ModelParams,
    stream: np.random.Generator,
) -> tuple[WalkRealization, FunctionalAccumulator]:
    """Replay one walk over a fixed environment log (the quenched picture)."""
    params.validate()
    T = log.horizon
    L = log.lattice.size
    occ = log.initial.occupancy.copy()
    props = _draw_proposals(T, stream)
    n_prop = props[0].shape[0]
    jt = np.empty(n_prop, np.float64)
    jd = np.empty(n_prop, np.int8)
    state = _WalkState(occ)
    state.advance(occ, params.lam, log.times, log.bonds, T, True, props, jt, jd)
    return _finish(state, jt, jd, T, params, L)


def simulate_joint(
    params: ModelParams,
    lattice: LatticeSpec,
    horizon: float,
    env_stream: np.random.Generator,
    walk_stream: np.random.Generator,
    record_log: bool = False,
) -> tuple[EnvironmentEventLog | None, WalkRealization, FunctionalAccumulator]:
    """Generate environment and walk in one streaming pass.

    The environment is autonomous, so this is distributed (and, with matching
    streams, bit-) identically to generate_log followed by simulate_walk.  In
    the default no-log mode nothing is stored beyond one chunk of swaps.
    """
    params.validate()
    lattice.validate()
    L = lattice.size
    initial = init_stationary(params.rho, lattice, env_stream)
    occ_env = initial.occupancy.copy()
    occ_walk = initial.occupancy.copy()
    props = _draw_proposals(horizon, walk_stream)
    n_prop = props[0].shape[0]
    jt = np.empty(n_prop, np.float64)
    jd = np.empty(n_prop, np.int8)
    state = _WalkState(occ_walk)
    chunks_t: list[np.ndarray] = []
    chunks_b: list[np.ndarray] = []
    if horizon > 0:
        for eff_t, eff_b, t_end, finished in _ring_chunks(occ_env, horizon, env_stream):
            state.advance(
                occ_walk, params.lam, eff_t, eff_b, t_end, finished, props, jt, jd
            )
            if record_log and eff_t.shape[0]:
                chunks_t.append(eff_t)
                chunks_b.append(eff_b)
    realization, accumulator = _finish(state, jt, jd, horizon, params, L)
    log = None
    if record_log:
        log = EnvironmentEventLog(
            lattice=lattice,
            rho=params.rho,
            horizon=horizon,
            seed=SeedSpec(0, 0),
            initial=initial,
            times=np.concatenate(chunks_t) if chunks_t else np.empty(0, np.float64),
            bonds=np.concatenate(chunks_b) if chunks_b else np.empty(0, np.int32),
        )
    return log, realization, accumulator


def martingale_residual(
    realization: WalkRealization, accumulator: FunctionalAccumulator
) -> float:
    """Compensated jump count N_T - <N>_T, a mean-zero sample."""
    return realization.jump_count - accumulator.qv_integral


def recompute_accumulator(
    log: EnvironmentEventLog,
    realization: WalkRealization,
    params: ModelParams,
) -> FunctionalAccumulator:
    """Post-hoc accumulator recomputation from a log and a realization.

    Independent of the streaming kernel: walks the merged event sequence in
    pure Python and integrates with math.fsum.  Test instrument only; slow on
    large logs.
    """
    L = log.lattice.size
    occ = log.initial.occupancy.copy()
    x = 0
    t_prev = 0.0
    occupied_spans: list[float] = []
    ei, ji = 0, 0
    n_ev, n_j = len(log), realization.jump_count
    while ei < n_ev or ji < n_j:
        te = log.times[ei] if ei < n_ev else math.inf
        tj = realization.jump_times[ji] if ji < n_j else math.inf
        t_next = min(te, tj)
        if occ[x % L]:
            occupied_spans.append(t_next - t_prev)
        t_prev = t_next
        if te <= tj:
            b = int(log.bonds[ei])
            bb = (b + 1) % L
            occ[b], occ[bb] = occ[bb], occ[b]
            ei += 1
        else:
            x += int(realization.jump_directions[ji])
            ji += 1
    if occ[x % L]:
        occupied_spans.append(realization.final_time - t_prev)
    occupied = math.fsum(occupied_spans)
    return FunctionalAccumulator.from_occupied_time(
        realization.final_time, params, occupied
    )
