import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import chi2

from ssepwalk import (
    EnvironmentEventLog,
    EnvironmentView,
    LatticeConfiguration,
    LatticeSpec,
    ModelParams,
    SeedSpec,
    derive_stream,
    env_seed,
    generate_log_from_seed,
    martingale_residual,
    recompute_accumulator,
    simulate_joint,
    simulate_walk,
    state_at,
    walk_seed,
)


def run_joint(rho, lam, L=512, T=100.0, seed=0, replica=0, record=False):
    params = ModelParams(rho, lam)
    lattice = LatticeSpec(L)
    es = derive_stream(env_seed(seed, replica))
    ws = derive_stream(walk_seed(seed, replica))
    return simulate_joint(params, lattice, T, es, ws, record_log=record)


def test_frozen_walker_on_full_lattice():
    # lam=1, rho=1: jump rate 0 everywhere, occupation total
    _, real, acc = run_joint(1.0, 1.0, T=50.0)
    assert real.jump_count == 0 and real.displacement == 0
    assert acc.qv_integral == 0.0
    assert acc.occ_integral == 50.0
    assert martingale_residual(real, acc) == 0.0


def test_empty_environment_exact_integrals():
    _, real, acc = run_joint(0.0, 0.7, T=50.0)
    assert acc.occ_integral == 0.0
    assert acc.qv_integral == 100.0  # 2T exactly
    real.validate()


def test_zero_horizon():
    _, real, acc = run_joint(0.5, 0.5, T=0.0)
    assert real.jump_count == 0 and real.displacement == 0
    assert acc.occ_integral == acc.qv_integral == acc.y_integral == 0.0


def test_free_walk_jump_counts_poisson():
    # lam=0: jump count is Poisson(2T); mean over 200 replicas within 5 sigma
    T, R = 50.0, 200
    counts = [run_joint(0.5, 0.0, L=64, T=T, seed=1, replica=r)[1].jump_count
              for r in range(R)]
    assert abs(np.mean(counts) - 2 * T) <= 5 * math.sqrt(2 * T / R)


def test_accumulator_identities_exact():
    # qv = 2T - 2 lam occ and y = (2 - lam + lam rho) occ - 2 rho T, to the bit
    for seed, (rho, lam) in enumerate([(0.3, 0.8), (0.5, 1.0), (0.9, 0.2)]):
        T = 80.0
        _, real, acc = run_joint(rho, lam, T=T, seed=40 + seed)
        assert acc.qv_integral == 2.0 * T - 2.0 * lam * acc.occ_integral
        assert acc.y_integral == (2.0 - lam + lam * rho) * acc.occ_integral - 2.0 * rho * T
        assert 0.0 <= acc.occ_integral <= T
        acc.validate(ModelParams(rho, lam))


def test_realization_invariants():
    for r in range(5):
        _, real, _ = run_joint(0.4, 0.6, T=60.0, seed=50, replica=r)
        real.validate()  # parity, ordering, displacement consistency


def test_streaming_equals_two_phase_bitwise():
    params = ModelParams(0.45, 0.85)
    lattice = LatticeSpec(256)
    T = 40.0
    log, real_a, acc_a = simulate_joint(
        params, lattice, T,
        derive_stream(env_seed(9, 3)), derive_stream(walk_seed(9, 3)),
        record_log=True,
    )
    log_b = generate_log_from_seed(0.45, lattice, T, env_seed(9, 3))
    real_b, acc_b = simulate_walk(log_b, params, derive_stream(walk_seed(9, 3)))
    assert np.array_equal(log.times, log_b.times)
    assert real_a.displacement == real_b.displacement
    assert np.array_equal(real_a.jump_times, real_b.jump_times)
    assert np.array_equal(real_a.jump_directions, real_b.jump_directions)
    assert acc_a.occ_integral == acc_b.occ_integral
    assert acc_a.qv_integral == acc_b.qv_integral


def test_recompute_path_agrees_with_kernel():
    for replica in range(4):
        params = ModelParams(0.5, 0.9)
        log, real, acc = run_joint(0.5, 0.9, L=128, T=30.0, seed=60,
                                   replica=replica, record=True)
        again = recompute_accumulator(log, real, params)
        assert abs(again.occ_integral - acc.occ_integral) <= 1e-9


def test_winding_flag_on_tiny_torus():
    _, real, _ = run_joint(0.5, 0.0, L=8, T=50.0, seed=2)
    assert real.max_abs_position >= 4
    assert real.winding_flag


def test_no_winding_on_ample_torus():
    _, real, _ = run_joint(0.5, 0.5, L=2048, T=200.0, seed=3)
    assert not real.winding_flag


def test_environment_view():
    occ = np.array([1, 0, 0, 1], np.uint8)
    view = EnvironmentView(LatticeConfiguration.from_array(occ), position=3)
    assert view.xi(0) == 1 and view.xi(1) == 1 and view.xi(-1) == 0
    assert view.xi(5) == occ[(3 + 5) % 4]


def test_compensated_jump_martingale_free_case():
    # rho=0: N_T - 2T has mean 0 (pure Poisson); 4 SE tolerance
    T, R = 50.0, 300
    residuals = []
    for r in range(R):
        _, real, acc = run_joint(0.0, 0.9, L=64, T=T, seed=4, replica=r)
        residuals.append(martingale_residual(real, acc))
    se = np.std(residuals, ddof=1) / math.sqrt(R)
    assert abs(np.mean(residuals)) <= 4 * se


def test_compensated_jump_martingale_interacting_case():
    T, R = 100.0, 300
    residuals = []
    xs = []
    qvs = []
    for r in range(R):
        _, real, acc = run_joint(0.5, 0.5, L=512, T=T, seed=5, replica=r)
        residuals.append(martingale_residual(real, acc))
        xs.append(real.displacement)
        qvs.append(acc.qv_integral)
    se = np.std(residuals, ddof=1) / math.sqrt(R)
    assert abs(np.mean(residuals)) <= 4 * se
    # E[X_T] = 0 and the martingale isometry E[X^2] = E[<X>]
    xs = np.asarray(xs, dtype=float)
    se_x = xs.std(ddof=1) / math.sqrt(R)
    assert abs(xs.mean()) <= 4 * se_x
    gap = xs**2 - np.asarray(qvs)
    se_gap = gap.std(ddof=1) / math.sqrt(R)
    assert abs(gap.mean()) <= 4 * se_gap


def test_thinning_against_matrix_exponential():
    """Jump-count law on a frozen environment vs direct CTMC computation.

    With no swap events the walk is a time-homogeneous CTMC on the 8-site
    torus with per-neighbour rates 1 - lam * occ(site).  The jump-count
    distribution comes from the generator on (site, jumps<=K) states via
    expm; the empirical histogram must match (chi-square at 0.001).
    """
    L, T, lam, R = 8, 5.0, 0.7, 3000
    pattern = np.array([1, 1, 0, 1, 0, 0, 1, 0], np.uint8)
    initial = LatticeConfiguration.from_array(pattern)
    log = EnvironmentEventLog(
        lattice=LatticeSpec(L), rho=0.5, horizon=T, seed=SeedSpec(0, 0),
        initial=initial,
        times=np.empty(0, np.float64), bonds=np.empty(0, np.int32),
    )
    params = ModelParams(0.5, lam)
    counts = np.array([
        simulate_walk(log, params, derive_stream(walk_seed(6, r)))[0].jump_count
        for r in range(R)
    ])

    K = 60
    dim = L * (K + 1)
    Q = np.zeros((dim, dim))
    for s in range(L):
        rate = 1.0 - lam * float(pattern[s])
        for k in range(K + 1):
            i = s * (K + 1) + k
            Q[i, i] -= 2.0 * rate
            if k < K:
                Q[i, ((s + 1) % L) * (K + 1) + k + 1] += rate
                Q[i, ((s - 1) % L) * (K + 1) + k + 1] += rate
    p0 = np.zeros(dim)
    p0[0] = 1.0  # walker at site 0 with 0 jumps
    pT = p0 @ expm(Q * T)
    pmf = pT.reshape(L, K + 1).sum(axis=0)
    pmf[K] += max(0.0, 1.0 - pmf.sum())  # truncated tail mass into the last bin

    # merge bins until every expected count is at least 5
    edges = []
    acc = 0.0
    start = 0
    for k in range(K + 1):
        acc += pmf[k] * R
        if acc >= 5.0:
            edges.append((start, k))
            acc = 0.0
            start = k + 1
    if start <= K:
        s0, _ = edges[-1]
        edges[-1] = (s0, K)
    observed = np.array([np.sum((counts >= a) & (counts <= b)) for a, b in edges])
    expected = np.array([pmf[a : b + 1].sum() * R for a, b in edges])
    stat = float(((observed - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.999, len(edges) - 1)


def test_walker_site_occupancy_consistent_with_replay():
    # xi_0 at jump times must match the replayed environment at the walker
    params = ModelParams(0.5, 1.0)
    log, real, _ = run_joint(0.5, 1.0, L=128, T=20.0, seed=7, record=True)
    x = 0
    for i in range(real.jump_count):
        t = float(real.jump_times[i])
        # the jump happened from the pre-jump position; at lam=1 the rate on
        # a particle is zero, so the walker must have sat on a hole
        config = state_at(log, t)
        view = EnvironmentView(config, x)
        assert view.xi(0) == 0
        x += int(real.jump_directions[i])
