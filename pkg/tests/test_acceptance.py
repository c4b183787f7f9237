"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line (visible with -s, or in the
captured output on failure) and asserts the stated tolerance.  Criteria
6 and 9 share one ell-sweep, computed once per session.
"""

import itertools
import time
import warnings

import numpy as np
import pytest

from rdmdelay.ci_model import (
    CiSystem,
    DeterminantIndexMap,
    FieldProfile,
    build_B,
    build_one_electron_system,
    one_electron_index_map,
    oracle_B,
)
from rdmdelay.constraint_prop import (
    ConstraintSpec,
    DelayPropagator,
    run_delay_propagation,
)
from rdmdelay.delay_core import DelayConfig
from rdmdelay.ground_truth import propagate_coefficients, reduced_density_series
from rdmdelay.harness import (
    ExperimentConfig,
    generate_synthetic_system,
    mz_compare,
    run_experiment,
)
from rdmdelay.numkit import matexp_hermitian, random_hermitian, random_unitary

DT_COARSE = 0.082680
DT_FINE = 0.008268


def _report(criterion, ok, detail):
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)


@pytest.fixture(scope="module")
def synth4():
    system = generate_synthetic_system(4, 2, seed=3)
    return system, build_B(system)


@pytest.fixture(scope="module")
def ell_sweep(synth4):
    """RMSE vs memory depth at two time steps (shared by criteria 6 and 9)."""
    system, b = synth4
    out = {}
    for dt, n_steps, ells in ((DT_COARSE, 2000, (2, 4, 8, 16)),
                              (DT_FINE, 20000, (20, 40, 80, 160))):
        run = propagate_coefficients(system, dt, n_steps)
        q_true = reduced_density_series(run, b)
        rows = []
        for ell in ells:
            cfg = ExperimentConfig(system=system, dt=dt, n_steps=n_steps, ell=ell)
            rep = run_experiment(cfg, b=b, q_true=q_true)
            s = rep.summary()
            rows.append({"ell": ell, "rmse": rep.rmse,
                         "final_residual": s["final_residual"],
                         "max_cond": s["max_cond"],
                         "total_memory": s["total_memory"]})
        out[dt] = rows
    return out


def test_criterion_01_printed_reduction_matrix():
    t0 = time.time()
    oe = build_one_electron_system(np.diag([1.0, 2.0]), np.zeros((2, 2)),
                                   c="identity")
    b = build_B(oe.system)
    printed = np.array([
        [2, 0, 0, 0],
        [0, 0, 1, 0],
        [0, 0, 1, 0],
        [0, 0, 0, 0],
        [0, 1, 0, 0],
        [1, 0, 0, 1],
        [0, 0, 0, 0],
        [0, 0, 1, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 0],
        [1, 0, 0, 1],
        [0, 0, 1, 0],
        [0, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 2],
    ], dtype=float)
    got = b.printed_layout
    elapsed = time.time() - t0
    ok = np.array_equal(got.real, printed) and np.max(np.abs(got.imag)) == 0.0
    _report(1, ok and elapsed < 1.0,
            f"integer 16x4 reduction matrix, exact match, {elapsed:.2f}s")
    assert np.array_equal(got.real, printed)
    assert np.max(np.abs(got.imag)) == 0.0
    assert elapsed < 1.0


def test_criterion_02_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(1234)
    worst = 0.0
    for trial in range(20):
        k = (2, 3, 4)[trial % 3]
        n_so = 2 * k
        combos = tuple(itertools.combinations(range(1, n_so + 1), 2))
        imap = DeterminantIndexMap(2, n_so, combos)
        n_c = len(combos)
        system = CiSystem(
            n_electrons=2,
            n_orbitals=k,
            c_matrix=random_unitary(n_c, rng),
            index_map=imap,
            h0_diag=np.sort(rng.standard_normal(n_c)),
            m_dip=random_hermitian(n_c, rng),
        )
        dev = np.max(np.abs(build_B(system).data - oracle_B(system).data))
        worst = max(worst, dev)
    elapsed = time.time() - t0
    ok = worst < 1e-12 and elapsed < 30.0
    _report(2, ok, f"20 systems, max |build_B - oracle_B| = {worst:.2e}, "
                   f"{elapsed:.1f}s")
    assert worst < 1e-12
    assert elapsed < 30.0


def test_criterion_03_constant_trace(synth4):
    t0 = time.time()
    system, b = synth4
    n_steps = 20000
    run = propagate_coefficients(system, DT_FINE, n_steps)
    q_true = reduced_density_series(run, b)
    truth_dev = np.max(np.abs(np.trace(q_true, axis1=1, axis2=2).real - 2.0))
    _, records = run_delay_propagation(system, b, DT_FINE, n_steps,
                                       DelayConfig(ell=20), q_true)
    scheme_dev = max(abs(r.trace_q - 2.0) for r in records)
    elapsed = time.time() - t0
    ok = truth_dev < 1e-8 and scheme_dev < 1e-8 and elapsed < 120.0
    _report(3, ok, f"20000 steps: |tr Q - 2| truth {truth_dev:.2e}, "
                   f"delay {scheme_dev:.2e}, {elapsed:.0f}s")
    assert truth_dev < 1e-8
    assert scheme_dev < 1e-8
    assert elapsed < 120.0


@pytest.mark.parametrize("k_orbitals", [2, 4])
def test_criterion_04_one_electron_memoryless(k_orbitals):
    rng = np.random.default_rng(100 + k_orbitals)
    h = random_hermitian(k_orbitals, rng)
    mu = random_hermitian(k_orbitals, rng)
    c = random_unitary(k_orbitals * k_orbitals, rng)
    field = FieldProfile(amplitude=0.5, omega=0.9, cycles=5)
    oe = build_one_electron_system(h, mu, c=c, field=field)
    system = oe.system
    b = build_B(system)
    n_steps = 1000
    run = propagate_coefficients(system, DT_FINE, n_steps)
    q_true = reduced_density_series(run, b)
    q_scheme, _ = run_delay_propagation(system, b, DT_FINE, n_steps,
                                        DelayConfig(ell=0), q_true)
    # K x K Liouville-von Neumann reference in the orbital space
    q_lvn = [q_true[0]]
    for j in range(n_steps):
        e = matexp_hermitian(oe.orbital_hamiltonian(j * DT_FINE), -1j * DT_FINE)
        q_lvn.append(e @ q_lvn[-1] @ e.conj().T)
    dev = np.max(np.abs(q_scheme - np.array(q_lvn)))
    ok = dev < 1e-10
    _report(4, ok, f"K={k_orbitals}, ell=0, 1000 steps, "
                   f"max |Q_scheme - Q_LvN| = {dev:.2e}")
    assert dev < 1e-10


def test_criterion_05_full_rank_exactness(synth4):
    t0 = time.time()
    system, b = synth4
    cfg = ExperimentConfig(system=system, dt=DT_COARSE, n_steps=2000, ell=20)
    rep = run_experiment(cfg, b=b)
    s = rep.summary()
    elapsed = time.time() - t0
    full_rank = s["min_rank"] == system.n_configs ** 2 - 1
    well_conditioned = s["max_cond"] < 1e8
    ok = full_rank and well_conditioned and rep.rmse < 1e-6 and elapsed < 120.0
    _report(5, ok, f"rank {s['min_rank']}/15, cond {s['max_cond']:.1e}, "
                   f"rmse {rep.rmse:.2e}, {elapsed:.0f}s")
    assert full_rank
    assert well_conditioned
    assert rep.rmse < 1e-6
    assert elapsed < 120.0


def test_criterion_06_memory_convergence(ell_sweep):
    coarse = ell_sweep[DT_COARSE]
    fine = ell_sweep[DT_FINE]
    gain_coarse = coarse[0]["rmse"] / coarse[-1]["rmse"]
    gain_fine = fine[0]["rmse"] / fine[-1]["rmse"]
    # matched total memory, in the converging regime (not the numerical
    # floor): ell = 4 at the coarse step vs ell = 40 at the fine step
    r_coarse, r_fine = coarse[1]["rmse"], fine[1]["rmse"]
    assert coarse[1]["total_memory"] == pytest.approx(fine[1]["total_memory"],
                                                      rel=1e-12)
    factor = max(r_coarse, r_fine) / min(r_coarse, r_fine)
    ok = gain_coarse >= 10 and gain_fine >= 10 and factor <= 2.0
    _report(6, ok, f"sweep gain {gain_coarse:.1e}x (coarse), {gain_fine:.1e}x "
                   f"(fine); matched-memory ratio {factor:.2f}")
    assert gain_coarse >= 10
    assert gain_fine >= 10
    assert factor <= 2.0


def test_criterion_07_stride_efficacy():
    t0 = time.time()
    system = generate_synthetic_system(16, 4, seed=5, h0_scale=10.0)
    b = build_B(system)
    rng = np.random.default_rng(11)
    a0 = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    a0 /= np.linalg.norm(a0)
    n_steps = 800
    run = propagate_coefficients(system, DT_FINE, n_steps, a0=a0)
    q_true = reduced_density_series(run, b)
    results = {}
    for k in (1, 2, 4, 8):
        cfg = ExperimentConfig(system=system, dt=DT_FINE, n_steps=n_steps,
                               ell=32, stride=k, r_tol=1e-6)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = run_experiment(cfg, b=b, q_true=q_true)
        results[k] = (rep.rmse, rep.wall_seconds / n_steps)
    elapsed = time.time() - t0
    rmse1, per_step1 = results[1]
    rmse8, per_step8 = results[8]
    ok = (rmse8 * 10 <= rmse1 and per_step8 <= 2 * per_step1
          and elapsed < 1200.0)
    _report(7, ok, f"rmse k=1 {rmse1:.2e} vs k=8 {rmse8:.2e}; per-step "
                   f"{1e3 * per_step1:.1f} vs {1e3 * per_step8:.1f} ms, "
                   f"{elapsed:.0f}s")
    assert rmse8 * 10 <= rmse1
    assert per_step8 <= 2 * per_step1
    assert elapsed < 1200.0


def test_criterion_08_constraint_preservation(synth4):
    # constrained propagation with a decoupled configuration declared zero
    rng = np.random.default_rng(2)
    n_c = 4
    h0 = np.sort(rng.standard_normal(n_c) * 2.0)
    m_dip = rng.standard_normal((n_c, n_c)) + 1j * rng.standard_normal((n_c, n_c))
    m_dip = m_dip + m_dip.conj().T
    m_dip[3, :] = 0.0
    m_dip[:, 3] = 0.0  # configuration 4 never couples; P row/col 4 stays 0
    system = CiSystem(
        n_electrons=2,
        n_orbitals=2,
        c_matrix=np.eye(n_c, dtype=complex),
        index_map=one_electron_index_map(2),
        h0_diag=h0,
        m_dip=m_dip,
        field=FieldProfile(amplitude=0.5, omega=0.9, cycles=5),
    )
    b = build_B(system)
    run = propagate_coefficients(system, DT_COARSE, 300)
    q_true = reduced_density_series(run, b)
    zeros = frozenset({(3, j) for j in range(4)})
    spec = ConstraintSpec(n_c, trace_value=1.0, zero_pairs=zeros)
    cfg = DelayConfig(ell=8)
    prop = DelayPropagator(system, b, cfg, DT_COARSE, mode="constrained",
                           spec=spec)
    prop.warm_start(q_true[:cfg.depth + 1])
    herm_dev = trace_dev = zero_dev = 0.0
    for _ in range(300 - cfg.depth):
        prop.step()
        p = prop.last_p_hat
        herm_dev = max(herm_dev, float(np.max(np.abs(p - p.conj().T))))
        trace_dev = max(trace_dev, abs(np.trace(p).real - 1.0))
        zero_dev = max(zero_dev, float(np.max(np.abs(p[3, :]))),
                       float(np.max(np.abs(p[:, 3]))))

    # raw solve on a rank-deficient configuration loses Hermiticity
    system3, b3 = synth4
    run3 = propagate_coefficients(system3, DT_FINE, 2000)
    q3 = reduced_density_series(run3, b3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _, records = run_delay_propagation(system3, b3, DT_FINE, 2000,
                                           DelayConfig(ell=3), q3, mode="raw")
    raw_herm = max(r.hermiticity_defect_q for r in records)
    min_rank = min(r.effective_rank for r in records)
    ok = (herm_dev == 0.0 and trace_dev == 0.0 and zero_dev == 0.0
          and raw_herm > 1e-6 and min_rank < 16)
    _report(8, ok, f"constrained: herm {herm_dev}, trace {trace_dev}, "
                   f"zeros {zero_dev}; raw (rank {min_rank}/16): "
                   f"herm defect {raw_herm:.2e}")
    assert herm_dev == 0.0
    assert trace_dev == 0.0
    assert zero_dev == 0.0
    assert min_rank < 16
    assert raw_herm > 1e-6


def test_criterion_09_residual_sanity(ell_sweep):
    rows = ell_sweep[DT_COARSE] + ell_sweep[DT_FINE]
    residuals = [r["final_residual"] for r in rows]
    conds = [r["max_cond"] for r in rows]
    worst = max(residuals)
    ok = all(np.isfinite(residuals)) and worst < 1e-5 and all(
        np.isfinite(conds))
    _report(9, ok, f"8 sweep points, final residuals <= {worst:.2e}, "
                   f"conditions logged up to {max(conds):.1e}")
    assert all(np.isfinite(residuals))
    assert worst < 1e-5
    assert all(np.isfinite(conds))


def test_criterion_10_memory_sum_comparison():
    diag = mz_compare(8, 4, 200, seed=0, diagonal=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dense = mz_compare(8, 4, 200, seed=0, diagonal=False)
        truncated = mz_compare(8, 4, 200, seed=0, diagonal=False,
                               truncate_memory_half=True)
    # trajectories are O(1) (unitary dynamics), so the absolute truncation
    # error doubles as a relative one
    ok = (diag["mz_max_error"] < 1e-8 and dense["mz_max_error"] < 1e-8
          and truncated["mz_max_error"] > 1e-3
          and truncated["mz_max_error"] > 1e3 * dense["mz_max_error"])
    _report(10, ok, f"diagonal {diag['mz_max_error']:.2e}, dense full "
                    f"{dense['mz_max_error']:.2e}, memory truncated "
                    f"{truncated['mz_max_error']:.2e}")
    assert diag["mz_max_error"] < 1e-8
    assert dense["mz_max_error"] < 1e-8
    assert truncated["mz_max_error"] > 1e-3
    assert truncated["mz_max_error"] > 1e3 * dense["mz_max_error"]
