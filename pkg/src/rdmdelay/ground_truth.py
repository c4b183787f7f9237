"""Reference TDCI propagation.

Advances the CI coefficient vector with the left-endpoint exponential scheme
a(t + dt) = exp(-i H(t) dt) a(t), forms full densities P(t) = a(t) a(t)†,
reduces them to the 1RDM series Q_true(t), and provides the eigenvalue-drift
diagnostic showing that no K x K Hamiltonian generates Q(t) by a
Liouville-von Neumann equation in the interacting case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ci_model import BTensor, CiSystem, FieldProfile, reduce_density
from .numkit import ValidationError, as_complex_matrix, matexp_hermitian

__all__ = [
    "FieldProfile",
    "GroundTruthRun",
    "propagate_coefficients",
    "full_density_series",
    "reduced_density_series",
    "eigenvalue_drift",
]


@dataclass(frozen=True)
class GroundTruthRun:
    """Coefficient trajectory of one reference propagation."""

    system: CiSystem
    dt: float
    coefficients: np.ndarray  # shape (n_steps + 1, N_C)

    @property
    def n_steps(self) -> int:
        return self.coefficients.shape[0] - 1

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.coefficients.shape[0])


def propagate_coefficients(system: CiSystem, dt: float, n_steps: int,
                           a0: np.ndarray | None = None) -> GroundTruthRun:
    """Left-endpoint exponential stepping of the CI coefficients.

    a(0) defaults to the first basis vector (the system prepared in the
    lowest CI state when H0 is diagonal and sorted).
    """
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise ValidationError(f"n_steps must be nonnegative, got {n_steps}")
    n_c = system.n_configs
    if a0 is None:
        a = np.zeros(n_c, dtype=complex)
        a[0] = 1.0
    else:
        a = np.asarray(a0, dtype=complex).ravel()
        if a.shape != (n_c,):
            raise ValidationError(f"a0 has length {a.size}, expected {n_c}")
        nrm = np.linalg.norm(a)
        if abs(nrm - 1.0) > 1e-10:
            raise ValidationError(f"a0 must be unit norm, got {nrm}")
    traj = np.empty((n_steps + 1, n_c), dtype=complex)
    traj[0] = a
    for j in range(n_steps):
        u = matexp_hermitian(system.hamiltonian(j * dt), -1j * dt)
        a = u @ a
        traj[j + 1] = a
    return GroundTruthRun(system=system, dt=dt, coefficients=traj)


def full_density_series(run: GroundTruthRun) -> np.ndarray:
    """P(t) = a(t) a(t)†, shape (n_steps + 1, N_C, N_C)."""
    a = run.coefficients
    return np.einsum("tk,tl->tkl", a, a.conj())


def reduced_density_series(run: GroundTruthRun, b: BTensor) -> np.ndarray:
    """Q_true(t) series, shape (n_steps + 1, K, K)."""
    a = run.coefficients
    return np.einsum("tk,tl,klbc->tbc", a, a.conj(), b.data, optimize=True)


def eigenvalue_drift(q_series) -> np.ndarray:
    """|lambda_j(t) - lambda_j(0)| per step, eigenvalues sorted descending."""
    q_series = np.asarray(q_series)
    drifts = []
    lam0 = None
    for q in q_series:
        q = as_complex_matrix(q, "Q")
        if np.abs(q - q.conj().T).max() > 1e-10 * max(1.0, np.abs(q).max()):
            raise ValidationError("eigenvalue_drift requires Hermitian matrices")
        lam = np.linalg.eigvalsh(q)[::-1]
        if lam0 is None:
            lam0 = lam
        drifts.append(np.abs(lam - lam0))
    return np.asarray(drifts)
