"""Stirring SSEP on the periodic lattice: generation, replay, probes, log IO.

Each bond swaps its two endpoint occupancies at rate 1.  Clock rings are
sampled by superposition: exponential(L) inter-ring times and a uniformly
chosen bond, which is distributionally identical to independent rate-1 bond
clocks but needs O(1) clock state.  Only *effective* swaps (the two sites
differ) are recorded; no-op rings leave nothing behind.

Initial configurations are i.i.d. Bernoulli(rho), which is exactly
stationary for symmetric exclusion on the torus.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _kernels
from .model import (
    LatticeConfiguration,
    LatticeSpec,
    ModelParams,
    SeedSpec,
    derive_stream,
    env_seed,
)
from .stats import mean_ci

# Ring attempts are generated and filtered in chunks of this size; the value
# only affects memory, not the sampled process.
RING_CHUNK = 1 << 21


class OutOfHorizon(ValueError):
    """Requested replay time lies outside [0, T]."""


class MalformedLog(ValueError):
    """An event-log file failed validation; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class SwapEvent:
    """One effective swap: at `time`, bond `bond` exchanged differing sites."""

    time: float
    bond: int


@dataclass(frozen=True)
class EnvironmentEventLog:
    """Initial configuration plus time-ordered effective swaps on [0, T].

    Replaying `initial` through the events reproduces the trajectory (and
    conserves the particle count at every step).  Instances are immutable and
    may be shared by any number of concurrent walk replays.
    """

    lattice: LatticeSpec
    rho: float
    horizon: float
    seed: SeedSpec
    initial: LatticeConfiguration
    times: np.ndarray
    bonds: np.ndarray

    def __post_init__(self):
        self.times.flags.writeable = False
        self.bonds.flags.writeable = False

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def event(self, i: int) -> SwapEvent:
        return SwapEvent(time=float(self.times[i]), bond=int(self.bonds[i]))


def init_stationary(
    rho: float, lattice: LatticeSpec, stream: np.random.Generator
) -> LatticeConfiguration:
    """Sample the stationary product measure: each site Bernoulli(rho)."""
    lattice.validate()
    occ = (stream.random(lattice.size) < rho).astype(np.uint8)
    return LatticeConfiguration.from_array(occ)


def _ring_chunks(
    occ: np.ndarray, horizon: float, stream: np.random.Generator
) -> Iterator[tuple[np.ndarray, np.ndarray, float, bool]]:
    """Drive the ring process on `occ` (mutated in place), chunk by chunk.

    Yields (eff_times, eff_bonds, t_end, finished) where t_end is the time up
    to which this chunk covers the dynamics (the horizon on the final chunk).
    A full chunk of draws is consumed per iteration regardless of how many
    rings land inside the horizon, so stream consumption is reproducible.
    """
    L = occ.shape[0]
    t = 0.0
    out_t = np.empty(RING_CHUNK, np.float64)
    out_b = np.empty(RING_CHUNK, np.int32)
    while True:
        gaps = stream.exponential(1.0 / L, RING_CHUNK)
        bonds = stream.integers(0, L, RING_CHUNK, dtype=np.int32)
        k, _, t_last, finished = _kernels.ring_chunk(
            occ, gaps, bonds, t, horizon, out_t, out_b
        )
        t_end = horizon if finished else t_last
        yield out_t[:k].copy(), out_b[:k].copy(), t_end, finished
        if finished:
            return
        t = t_last


def generate_log(
    initial: LatticeConfiguration,
    horizon: float,
    stream: np.random.Generator,
    rho: float = float("nan"),
    seed: SeedSpec = SeedSpec(0, 0),
) -> EnvironmentEventLog:
    """Run the SSEP from `initial` over [0, T], returning the effective-swap log.

    `rho` and `seed` are carried as metadata for the log header; they do not
    influence the dynamics (the stream does).
    """
    if horizon < 0:
        raise OutOfHorizon(f"horizon must be >= 0, got {horizon}")
    occ = initial.occupancy.copy()
    chunks_t: list[np.ndarray] = []
    chunks_b: list[np.ndarray] = []
    if horizon > 0:
        for eff_t, eff_b, _, _ in _ring_chunks(occ, horizon, stream):
            if eff_t.shape[0]:
                chunks_t.append(eff_t)
                chunks_b.append(eff_b)
    times = np.concatenate(chunks_t) if chunks_t else np.empty(0, np.float64)
    bonds = np.concatenate(chunks_b) if chunks_b else np.empty(0, np.int32)
    log = EnvironmentEventLog(
        lattice=LatticeSpec(initial.size),
        rho=rho,
        horizon=horizon,
        seed=seed,
        initial=initial,
        times=times,
        bonds=bonds,
    )
    # conservation is structural for swaps; recount to catch kernel bugs early
    if int(occ.sum()) != initial.particle_count:
        raise AssertionError("particle count drifted during generation")
    return log


def generate_log_from_seed(
    rho: float,
    lattice: LatticeSpec,
    horizon: float,
    seed: SeedSpec,
) -> EnvironmentEventLog:
    """Sample the initial configuration and the log from one seeded stream."""
    stream = derive_stream(seed)
    initial = init_stationary(rho, lattice, stream)
    return generate_log(initial, horizon, stream, rho=rho, seed=seed)


def state_at(log: EnvironmentEventLog, t: float) -> LatticeConfiguration:
    """Configuration at time t: `initial` with all events of time <= t applied."""
    if t < 0 or t > log.horizon:
        raise OutOfHorizon(f"t={t} outside [0, {log.horizon}]")
    n = int(np.searchsorted(log.times, t, side="right"))
    occ = log.initial.occupancy.copy()
    _kernels.apply_swaps(occ, log.bonds, n)
    config = LatticeConfiguration.from_array(occ)
    if config.particle_count != log.initial.particle_count:
        raise AssertionError("replay broke particle conservation")
    return config


def final_state(log: EnvironmentEventLog) -> LatticeConfiguration:
    return state_at(log, log.horizon)


@dataclass(frozen=True)
class StationarityProbeResult:
    """Replicate-averaged density at site 0 and distance-1 covariance."""

    replicas: int
    horizon: float
    density: float
    density_halfwidth: float
    covariance: float
    covariance_halfwidth: float
    level: float


def run_site_occupation(
    rho: float,
    lattice: LatticeSpec,
    horizon: float,
    stream: np.random.Generator,
) -> tuple[np.ndarray, float, LatticeConfiguration]:
    """Environment-only run returning per-site occupation times.

    Returns (site_occ_time, pair01_time, initial) where site_occ_time[s] is
    the time site s spent occupied over [0, T] and pair01_time the time both
    sites 0 and 1 were simultaneously occupied.
    """
    lattice.validate()
    initial = init_stationary(rho, lattice, stream)
    occ = initial.occupancy.copy()
    L = lattice.size
    site_occ = np.zeros(L, np.float64)
    site_last = np.zeros(L, np.float64)
    pair_state = np.zeros(2, np.float64)
    t = 0.0
    if horizon > 0:
        while True:
            gaps = stream.exponential(1.0 / L, RING_CHUNK)
            bonds = stream.integers(0, L, RING_CHUNK, dtype=np.int32)
            _, t_last, finished = _kernels.ring_chunk_site_occ(
                occ, gaps, bonds, t, horizon, site_occ, site_last, pair_state
            )
            if finished:
                break
            t = t_last
    _kernels.finalize_site_occ(occ, horizon, site_occ, site_last, pair_state)
    return site_occ, float(pair_state[0]), initial


def stationarity_probe(
    params: ModelParams,
    lattice: LatticeSpec,
    horizon: float,
    replicas: int,
    master_seed: int,
    level: float = 0.99,
) -> StationarityProbeResult:
    """Check product-measure stationarity: time-averaged site density and
    distance-1 covariance over independent replicas."""
    if horizon <= 0 or replicas <= 0:
        raise ValueError("horizon and replicas must be positive")
    params.validate()
    densities = np.empty(replicas)
    covariances = np.empty(replicas)
    for r in range(replicas):
        stream = derive_stream(env_seed(master_seed, r))
        site_occ, pair_time, _ = run_site_occupation(
            params.rho, lattice, horizon, stream
        )
        densities[r] = site_occ[0] / horizon
        covariances[r] = pair_time / horizon - params.rho**2
    d_mean, d_hw = mean_ci(densities, level)
    c_mean, c_hw = mean_ci(covariances, level)
    return StationarityProbeResult(
        replicas=replicas,
        horizon=horizon,
        density=d_mean,
        density_halfwidth=d_hw,
        covariance=c_mean,
        covariance_halfwidth=c_hw,
        level=level,
    )


# --- SSEPLOG text format -------------------------------------------------
#
# line 1: SSEPLOG 1 <L> <rho> <T> <master_seed_hex> <stream_id>
# line 2: occupancy as a 0/1 string of length L
# then one line per event: "<time> <bond>", times strictly increasing,
# printed with 17 significant digits so replay is bit-exact.


def write_log(log: EnvironmentEventLog, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"SSEPLOG 1 {log.lattice.size} {log.rho!r} {log.horizon!r} "
            f"{log.seed.master_seed:x} {log.seed.stream_id}\n"
        )
        fh.write("".join("1" if v else "0" for v in log.initial.occupancy))
        fh.write("\n")
        times = log.times
        bonds = log.bonds
        for i in range(times.shape[0]):
            fh.write(f"{times[i]:.17g} {bonds[i]}\n")


def read_log(path: str) -> EnvironmentEventLog:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header:
            raise MalformedLog(1, "empty file")
        parts = header.split()
        if len(parts) != 7 or parts[0] != "SSEPLOG" or parts[1] != "1":
            raise MalformedLog(1, f"bad header: {header.strip()!r}")
        try:
            L = int(parts[2])
            rho = float(parts[3])
            horizon = float(parts[4])
            master = int(parts[5], 16)
            stream_id = int(parts[6])
        except ValueError as exc:
            raise MalformedLog(1, f"unparseable header field: {exc}") from exc
        lattice = LatticeSpec(L)
        try:
            lattice.validate()
        except ValueError as exc:
            raise MalformedLog(1, str(exc)) from exc
        occ_line = fh.readline()
        occ_str = occ_line.strip()
        if len(occ_str) != L or set(occ_str) - {"0", "1"}:
            raise MalformedLog(2, "occupancy line must be a 0/1 string of length L")
        initial = LatticeConfiguration.from_array(
            np.frombuffer(occ_str.encode("ascii"), dtype=np.uint8) - ord("0")
        )
        times: list[float] = []
        bonds: list[int] = []
        prev = -np.inf
        for line_no, line in enumerate(fh, start=3):
            line = line.strip()
            if not line:
                raise MalformedLog(line_no, "blank event line")
            fields = line.split()
            if len(fields) != 2:
                raise MalformedLog(line_no, f"expected '<time> <bond>', got {line!r}")
            try:
                t = float(fields[0])
                b = int(fields[1])
            except ValueError as exc:
                raise MalformedLog(line_no, f"unparseable event: {exc}") from exc
            if not (0.0 <= t <= horizon):
                raise MalformedLog(line_no, f"event time {t} outside [0, {horizon}]")
            if t <= prev:
                raise MalformedLog(line_no, f"times not strictly increasing at {t}")
            if not (0 <= b < L):
                raise MalformedLog(line_no, f"bond {b} outside [0, {L})")
            prev = t
            times.append(t)
            bonds.append(b)
    # validate effectiveness by replay: every logged swap must change state
    occ = initial.occupancy.copy()
    for i, b in enumerate(bonds):
        bb = (b + 1) % L
        if occ[b] == occ[bb]:
            raise MalformedLog(i + 3, f"ineffective swap recorded at bond {b}")
        occ[b], occ[bb] = occ[bb], occ[b]
    return EnvironmentEventLog(
        lattice=lattice,
        rho=rho,
        horizon=horizon,
        seed=SeedSpec(master, stream_id),
        initial=initial,
        times=np.asarray(times, np.float64),
        bonds=np.asarray(bonds, np.int32),
    )
