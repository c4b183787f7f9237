"""Constraint-preserving delay propagation of 1RDMs.

The 1RDM delay equation reconstructs the full density P(t) from a stack of
present and past reduced densities, then advances one Liouville-von Neumann
step.  Solving for P in a real Hermitian-basis coordinate system — with the
trace condition eliminated by a pivot column and identically-zero density
entries removed — makes the reconstructed P exactly Hermitian, exactly
trace-1, and exactly zero where declared, at no accuracy cost.  The raw
(unconstrained) least-squares variant is kept for comparison.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .ci_model import BTensor, CiSystem
from .delay_core import DelayConfig
from .numkit import (
    NumericalError,
    ValidationError,
    as_complex_matrix,
    flatten,
    hermiticity_defect,
    matexp_hermitian,
    pinv_thresholded,
    unflatten,
)


class HermitianBasis:
    """Real-coordinate basis S^1..S^{n^2} of the n x n Hermitian matrices.

    Enumeration: the n diagonal indicator matrices, then for each strictly
    upper pair (i, j) in row-wise order the symmetric matrix
    e_i e_j^T + e_j e_i^T, then in the same pair order the antisymmetric
    matrix i e_i e_j^T - i e_j e_i^T.  Every Hermitian Z has unique real
    coordinates x with Z = sum_j x_j S^j.
    """

    def __init__(self, n_c: int):
        if n_c < 1:
            raise ValidationError(f"n_c must be >= 1, got {n_c}")
        self.n_c = n_c
        self.pairs = [(i, j) for i in range(n_c) for j in range(i + 1, n_c)]
        mats = []
        for i in range(n_c):
            m = np.zeros((n_c, n_c), dtype=complex)
            m[i, i] = 1.0
            mats.append(m)
        for i, j in self.pairs:
            m = np.zeros((n_c, n_c), dtype=complex)
            m[i, j] = m[j, i] = 1.0
            mats.append(m)
        for i, j in self.pairs:
            m = np.zeros((n_c, n_c), dtype=complex)
            m[i, j] = 1.0j
            m[j, i] = -1.0j
            mats.append(m)
        self.matrices = mats
        self.s_tilde = np.column_stack([flatten(m) for m in mats])

    @property
    def dim(self) -> int:
        return self.n_c * self.n_c

    def coords(self, z: np.ndarray) -> np.ndarray:
        """Real coordinates of a Hermitian matrix (exact, no least squares)."""
        z = as_complex_matrix(z, "Z")
        n = self.n_c
        x = np.empty(n * n)
        x[:n] = np.real(np.diag(z))
        off = np.array([z[i, j] for i, j in self.pairs])
        n_p = len(self.pairs)
        x[n:n + n_p] = off.real
        x[n + n_p:] = off.imag
        return x

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """Hermitian matrix from real coordinates."""
        x = np.asarray(x, dtype=float)
        return unflatten(self.s_tilde @ x, self.n_c, self.n_c)


def build_hermitian_basis(n_c: int) -> HermitianBasis:
    return HermitianBasis(n_c)


@dataclass(frozen=True)
class ConstraintSpec:
    """Trace value and identically-zero entries of the full density.

    The trace condition eliminates one diagonal coordinate (the pivot,
    coordinate n_c by default, moved to the largest-index nonzero diagonal
    if that entry is a declared zero).  Declared zeros delete one coordinate
    per diagonal entry and two (real + imaginary) per off-diagonal entry.
    """

    n_c: int
    trace_value: float = 1.0
    zero_pairs: frozenset = frozenset()

    def __post_init__(self):
        pairs = frozenset((min(i, j), max(i, j)) for i, j in self.zero_pairs)
        object.__setattr__(self, "zero_pairs", pairs)
        for i, j in pairs:
            if not (0 <= i <= j < self.n_c):
                raise ValidationError(f"zero pair {(i, j)} out of range")
        zero_diags = {i for i, j in pairs if i == j}
        pivot_diag = self.n_c - 1
        while pivot_diag in zero_diags:
            pivot_diag -= 1
        if pivot_diag < 0:
            raise ValidationError("all diagonal entries declared zero; trace "
                                  f"{self.trace_value} is unreachable")
        object.__setattr__(self, "_pivot_diag", pivot_diag)

    @property
    def pivot(self) -> int:
        """Index of the trace-eliminated diagonal coordinate."""
        return self._pivot_diag

    def deleted_coords(self, basis: HermitianBasis) -> list[int]:
        """Coordinate indices removed by the zero pattern (sorted)."""
        n, n_p = self.n_c, len(basis.pairs)
        pair_pos = {p: idx for idx, p in enumerate(basis.pairs)}
        out = []
        for i, j in self.zero_pairs:
            if i == j:
                out.append(i)
            else:
                out.append(n + pair_pos[(i, j)])
                out.append(n + n_p + pair_pos[(i, j)])
        return sorted(out)

    def kept_coords(self, basis: HermitianBasis) -> list[int]:
        drop = set(self.deleted_coords(basis))
        drop.add(self.pivot)
        return [j for j in range(basis.dim) if j not in drop]

    def reconstruct(self, x_reduced: np.ndarray, basis: HermitianBasis) -> np.ndarray:
        """Affine map from the reduced solution back to all n_c^2 coordinates."""
        x = np.zeros(basis.dim)
        kept = self.kept_coords(basis)
        if len(x_reduced) != len(kept):
            raise ValidationError(
                f"reduced coordinate vector has length {len(x_reduced)}, "
                f"expected {len(kept)}")
        x[kept] = x_reduced
        x[self.pivot] = self.trace_value - (np.sum(x[:self.n_c]) - x[self.pivot])
        return x


def assemble_constrained_system(m: np.ndarray, basis: HermitianBasis,
                                spec: ConstraintSpec, q_hist: np.ndarray):
    """Reduce M x = q_hist to the free real coordinates.

    Returns (M'', b_ell):  M' = M S~ with the pivot column subtracted from
    the other retained diagonal columns and then deleted; M'' additionally
    drops the zero-pattern columns; b_ell = q_hist - trace_value * (M S~)
    pivot column.
    """
    m = as_complex_matrix(m, "M")
    if m.shape[1] != basis.dim:
        raise ValidationError(f"M has {m.shape[1]} columns, expected {basis.dim}")
    q_hist = np.asarray(q_hist, dtype=complex).ravel()
    if q_hist.size != m.shape[0]:
        raise ValidationError(f"q_hist has length {q_hist.size}, expected {m.shape[0]}")
    ms = m @ basis.s_tilde
    pivot_col = ms[:, spec.pivot].copy()
    deleted = set(spec.deleted_coords(basis))
    cols = []
    for j in spec.kept_coords(basis):
        col = ms[:, j]
        if j < spec.n_c:  # retained diagonal coordinate
            col = col - pivot_col
        cols.append(col)
    m_red = np.column_stack(cols) if cols else np.zeros((m.shape[0], 0), dtype=complex)
    b_ell = q_hist - spec.trace_value * pivot_col
    return m_red, b_ell


def solve_constrained(m_red: np.ndarray, b_ell: np.ndarray, r_tol: float):
    """Real least-squares solve of M'' x = b_ell.

    Stacking real and imaginary parts keeps the solution exactly real, so
    the reconstructed density is exactly Hermitian.  An exact real solution
    of the complex system also solves the stacked system exactly.
    """
    a = np.vstack([m_red.real, m_red.imag])
    rhs = np.concatenate([b_ell.real, b_ell.imag])
    pinv, rank, cond = pinv_thresholded(a, r_tol)
    x = np.real(pinv @ rhs)
    residual = float(np.linalg.norm(m_red @ x - b_ell))
    return x, residual, rank, cond


@dataclass(frozen=True)
class StepRecord:
    """Per-step diagnostics of the delay solve."""

    step: int
    t: float
    residual: float
    effective_rank: int
    condition_number: float
    trace_q: float
    hermiticity_defect_q: float
    min_eig_p: float

    CSV_HEADER = "step,t,residual,effective_rank,condition_number,trace_q,hermiticity_defect,min_eig_p"

    def csv_row(self) -> str:
        return (f"{self.step},{self.t:.17g},{self.residual:.17g},"
                f"{self.effective_rank},{self.condition_number:.17g},"
                f"{self.trace_q:.17g},{self.hermiticity_defect_q:.17g},"
                f"{self.min_eig_p:.17g}")


class DelayPropagator:
    """Strided-memory delay propagation of Q(t) for a TDCI system.

    The memory window spans ell * stride steps; the state must be warm-started
    with the ell*stride + 1 reduced densities Q(0) .. Q(ell*stride*dt) (ground
    truth, per the standard experimental procedure) before stepping.
    """

    def __init__(self, system: CiSystem, b: BTensor, cfg: DelayConfig, dt: float,
                 mode: str = "constrained", spec: ConstraintSpec | None = None):
        if dt <= 0:
            raise ValidationError(f"dt must be positive, got {dt}")
        if mode not in ("constrained", "raw"):
            raise ValidationError(f"mode must be 'constrained' or 'raw', got {mode!r}")
        if b.n_configs != system.n_configs or b.n_orbitals != system.n_orbitals:
            raise ValidationError("B tensor does not match the system dimensions")
        self.system = system
        self.b = b
        self.cfg = cfg
        self.dt = dt
        self.mode = mode
        self.n_c = system.n_configs
        self.k_orb = system.n_orbitals
        self.basis = HermitianBasis(self.n_c) if mode == "constrained" else None
        self.spec = spec if spec is not None else ConstraintSpec(self.n_c)
        if self.spec.n_c != self.n_c:
            raise ValidationError("constraint spec dimension mismatch")
        self.b_tilde = b.matricized
        depth = cfg.depth
        self._q_hist = deque(maxlen=depth + 1)  # vec(Q), newest last
        self._cprods = []  # _cprods[m-1] = C_m(t): product of the last m step unitaries
        self._step_index = None
        self.records: list[StepRecord] = []

    # -- warm start -------------------------------------------------------

    def warm_start(self, q_seed: Sequence[np.ndarray], start_step: int = 0):
        """Seed the history with Q at steps start_step .. start_step + ell*k.

        Also precomputes the step unitaries interior to the seed window so
        the first memory stack is available immediately.
        """
        depth = self.cfg.depth
        if len(q_seed) != depth + 1:
            raise ValidationError(
                f"warm start needs {depth + 1} reduced densities, got {len(q_seed)}")
        self._q_hist.clear()
        for q in q_seed:
            q = as_complex_matrix(q, "Q")
            if q.shape != (self.k_orb, self.k_orb):
                raise ValidationError(f"seed Q has shape {q.shape}")
            self._q_hist.append(flatten(q))
        # forward products C_m = E(t - dt) ... E(t - m dt), newest factor left
        prods = []
        acc = None
        for m in range(1, depth + 1):
            e = matexp_hermitian(
                self.system.hamiltonian((start_step + depth - m) * self.dt),
                -1j * self.dt)
            acc = e.copy() if acc is None else acc @ e
            prods.append(acc.copy())
        self._cprods = prods  # prods[m-1] = C_m(t)
        self._step_index = start_step + depth

    # -- stepping ---------------------------------------------------------

    def _memory_matrix(self) -> np.ndarray:
        blocks = [self.b_tilde]
        for j in range(1, self.cfg.ell + 1):
            c = self._cprods[j * self.cfg.stride - 1]
            blocks.append(self.b_tilde @ np.kron(c.T, c.conj().T))
        return np.vstack(blocks)

    def _stacked_history(self) -> np.ndarray:
        return np.concatenate(
            [self._q_hist[-1 - j * self.cfg.stride] for j in range(self.cfg.ell + 1)])

    def step(self) -> np.ndarray:
        """Advance one step: reconstruct P(t), apply the superoperator, emit Q(t+dt)."""
        if self._step_index is None:
            raise ValidationError("propagator is not warm-started")
        t = self._step_index * self.dt
        m = self._memory_matrix()
        q_hist = self._stacked_history()
        if self.mode == "constrained":
            m_red, b_ell = assemble_constrained_system(m, self.basis, self.spec, q_hist)
            x_red, residual, rank, cond = solve_constrained(m_red, b_ell, self.cfg.r_tol)
            x = self.spec.reconstruct(x_red, self.basis)
            p_hat = self.basis.matrix(x)
        else:
            pinv, rank, cond = pinv_thresholded(m, self.cfg.r_tol)
            vec_p = pinv @ q_hist
            residual = float(np.linalg.norm(m @ vec_p - q_hist))
            p_hat = unflatten(vec_p, self.n_c, self.n_c)
        e = matexp_hermitian(self.system.hamiltonian(t), -1j * self.dt)
        p_next = e @ p_hat @ e.conj().T
        q_next_vec = self.b_tilde @ flatten(p_next)
        q_next = unflatten(q_next_vec, self.k_orb, self.k_orb)
        # advance history
        if self.cfg.depth > 0:
            self._cprods = [e] + [e @ c for c in self._cprods[:self.cfg.depth - 1]]
        self._q_hist.append(q_next_vec)
        self._step_index += 1
        herm = np.abs(p_hat - p_hat.conj().T).max()
        min_eig = float(np.linalg.eigvalsh((p_hat + p_hat.conj().T) / 2).min())
        self.records.append(StepRecord(
            step=self._step_index, t=t, residual=residual, effective_rank=rank,
            condition_number=cond, trace_q=float(np.trace(q_next).real),
            hermiticity_defect_q=float(np.abs(q_next - q_next.conj().T).max()),
            min_eig_p=min_eig))
        self.last_p_hat = p_hat
        return q_next


def run_delay_propagation(system: CiSystem, b: BTensor, dt: float, n_steps: int,
                          cfg: DelayConfig, q_true, mode: str = "constrained",
                          spec: ConstraintSpec | None = None):
    """Full trajectory: warm start from ground truth, then the delay equation.

    `q_true` supplies at least the first ell*stride + 1 reference 1RDMs.
    Returns (q_series, records) with q_series[j] = Q(j dt) for j = 0..n_steps;
    the warm-start segment is copied from the reference.
    """
    depth = cfg.depth
    if n_steps < depth:
        raise ValidationError(f"n_steps = {n_steps} shorter than memory depth {depth}")
    if len(q_true) < depth + 1:
        raise ValidationError("reference series shorter than the warm-start window")
    prop = DelayPropagator(system, b, cfg, dt, mode=mode, spec=spec)
    prop.warm_start([np.asarray(q_true[j]) for j in range(depth + 1)])
    series = [np.asarray(q_true[j], dtype=complex) for j in range(depth + 1)]
    for _ in range(n_steps - depth):
        series.append(prop.step())
    return np.asarray(series), prop.records


def suggest_zero_pattern(coefficients: np.ndarray, threshold: float = 1e-12) -> frozenset:
    """Propose density zero pairs from CI coefficients that never activate.

    A coefficient j with max_t |a_j(t)| < threshold forces row and column j
    of P(t) = a a† to vanish identically.  The proposal is advisory; it is
    applied only when passed explicitly into a ConstraintSpec.
    """
    amp = np.abs(np.asarray(coefficients, dtype=complex)).max(axis=0)
    dead = [int(j) for j in np.nonzero(amp < threshold)[0]]
    n_c = amp.size
    pairs = set()
    for j in dead:
        for i in range(n_c):
            pairs.add((min(i, j), max(i, j)))
    return frozenset(pairs)


def schur_rank_check(b_tilde: np.ndarray, d1: np.ndarray, r_tol: float = 1e-12) -> dict:
    """Sufficient-rank diagnostic for the one-block memory matrix [B~; D1].

    Selects K^2 columns G of B~ by pivoted QR, forms the Schur complement
    D1^{-G} - D1^G (B~^G)^{-1} B~^{-G}, and reports whether it has full row
    rank K^2 — the sufficient condition for rank([B~; D1]) = 2 K^2.  The
    direct SVD rank of the stack is reported alongside as a cross-check.
    The check is a report, not a certificate, for deeper memory stacks.
    """
    b_tilde = as_complex_matrix(b_tilde, "B~")
    d1 = as_complex_matrix(d1, "D1")
    if d1.shape != b_tilde.shape:
        raise ValidationError("B~ and D1 must have the same shape")
    k2, n2 = b_tilde.shape
    if 2 * k2 > n2:
        raise ValidationError(f"need 2 K^2 <= N_C^2, got {2 * k2} > {n2}")
    sv_b = np.linalg.svd(b_tilde, compute_uv=False)
    if sv_b[-1] <= r_tol * sv_b[0]:
        raise NumericalError("B~ is not full row rank")
    _, _, piv = scipy.linalg.qr(b_tilde, pivoting=True)
    g, rest = piv[:k2], piv[k2:]
    bg = b_tilde[:, g]
    schur = d1[:, rest] - d1[:, g] @ np.linalg.solve(bg, b_tilde[:, rest])
    sv = np.linalg.svd(schur, compute_uv=False)
    # threshold against the scale of the inputs, not of the (possibly zero)
    # complement itself
    schur_rank = int(np.sum(sv > r_tol * max(sv_b[0], np.linalg.norm(d1, 2))))
    stacked = np.vstack([b_tilde, d1])
    sv_m = np.linalg.svd(stacked, compute_uv=False)
    stack_rank = int(np.sum(sv_m > r_tol * sv_m[0]))
    return {
        "columns": [int(j) for j in g],
        "schur_rank": schur_rank,
        "condition_holds": schur_rank == k2,
        "stack_rank_svd": stack_rank,
        "full_rank": stack_rank == 2 * k2,
    }
