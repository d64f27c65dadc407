"""Shared domain types: model parameters, lattice, configurations, seeds.

The physical model has two knobs: the particle density ``rho`` of the
environment and the slowdown ``lam`` of the walker on occupied sites.  The
walker jumps to each neighbour at rate ``1 - lam * occ``, so the rate is 1 on
holes and ``1 - lam`` on particles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OutOfRange(ValueError):
    """A parameter violates its documented bounds; names field and value."""

    def __init__(self, name: str, value):
        super().__init__(f"{name} out of range: {value!r}")
        self.name = name
        self.value = value


@dataclass(frozen=True)
class ModelParams:
    """Density rho in [0,1] and slowdown lam in [0,1] (both dimensionless)."""

    rho: float
    lam: float

    def validate(self) -> None:
        if not (0.0 <= self.rho <= 1.0):
            raise OutOfRange("rho", self.rho)
        if not (0.0 <= self.lam <= 1.0):
            raise OutOfRange("lambda", self.lam)


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic lattice of L sites; bond b joins sites (b, b+1 mod L).

    L must be even and at least 4 so that +-1 shifts and winding counts are
    unambiguous.
    """

    size: int

    def validate(self) -> None:
        if self.size < 4 or self.size % 2 != 0:
            raise OutOfRange("L", self.size)


@dataclass(frozen=True)
class LatticeConfiguration:
    """Occupancy of the lattice, one uint8 per site, with a cached count."""

    occupancy: np.ndarray
    particle_count: int

    @classmethod
    def from_array(cls, occupancy: np.ndarray) -> "LatticeConfiguration":
        occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
        if not np.all((occ == 0) | (occ == 1)):
            raise OutOfRange("occupancy", "values outside {0,1}")
        occ.flags.writeable = False
        return cls(occupancy=occ, particle_count=int(occ.sum()))

    @property
    def size(self) -> int:
        return int(self.occupancy.shape[0])

    def check_count(self) -> None:
        """Recount set bits; raises if the cached count drifted."""
        actual = int(self.occupancy.sum())
        if actual != self.particle_count:
            raise AssertionError(
                f"particle_count {self.particle_count} != popcount {actual}"
            )


@dataclass(frozen=True)
class TheoreticalTargets:
    """Closed-form limits: diffusivity sigma_sq and occupation fraction."""

    sigma_sq: float
    occ_limit: float


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus a stream id; distinct pairs give independent streams.

    Streams are counter-based: Philox4x64 keyed by the pair
    (master_seed, stream_id).  The same pair always reproduces the same
    draws bit for bit.  This keying scheme is fixed for the lifetime of the
    repository; changing it invalidates every recorded log and report.
    """

    master_seed: int
    stream_id: int = 0

    def validate(self) -> None:
        if not (0 <= self.master_seed < 2**64):
            raise OutOfRange("master_seed", self.master_seed)
        if not (0 <= self.stream_id < 2**64):
            raise OutOfRange("stream_id", self.stream_id)


# Walk streams live in a disjoint id range from environment streams so that
# quenched replays never share draws with environment generation.
WALK_STREAM_BASE = 2**32
# Experiments that run several independent batches (t-grids, scaling studies)
# separate them by blocks of this many stream ids.
STREAM_BLOCK = 2**20


def validate(params: ModelParams, lattice: LatticeSpec) -> None:
    """Raise OutOfRange unless every type invariant holds."""
    params.validate()
    lattice.validate()


def theoretical_targets(params: ModelParams) -> TheoreticalTargets:
    """Limiting occupation fraction and diffusivity for given (rho, lam).

    occ_limit = 2 rho / (2 - lam + lam rho)
    sigma_sq  = 2 - 4 lam rho / (2 - lam (1 - rho)) = 2 - 2 lam * occ_limit
    """
    params.validate()
    rho, lam = params.rho, params.lam
    denom = 2.0 - lam * (1.0 - rho)
    occ_limit = 2.0 * rho / denom
    sigma_sq = 2.0 - 4.0 * lam * rho / denom
    return TheoreticalTargets(sigma_sq=sigma_sq, occ_limit=occ_limit)


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Deterministic, independent random stream for (master_seed, stream_id)."""
    seed.validate()
    key = np.array([seed.master_seed, seed.stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def env_seed(master_seed: int, env_index: int, block: int = 0) -> SeedSpec:
    """Stream spec for environment number ``env_index`` in a batch block."""
    return SeedSpec(master_seed, block * STREAM_BLOCK + env_index)


def walk_seed(master_seed: int, walk_index: int, block: int = 0) -> SeedSpec:
    """Stream spec for walk number ``walk_index`` in a batch block."""
    return SeedSpec(master_seed, WALK_STREAM_BASE + block * STREAM_BLOCK + walk_index)


def default_lattice(horizon: float) -> LatticeSpec:
    """Default torus size: max(4096, next even integer >= 16 sqrt(T)).

    Walk displacement is O(sqrt(T)), so this keeps the winding probability
    negligible over the horizon.
    """
    need = int(np.ceil(16.0 * np.sqrt(max(horizon, 0.0))))
    if need % 2:
        need += 1
    return LatticeSpec(max(4096, need))
