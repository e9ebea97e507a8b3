"""Quantitative stability machinery: generalized eigenvalue bounds, the
subspace angle between the two coarse spaces, maximal stable time steps for
the explicit and partially explicit schemes, and energy-estimate audits.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, spaces
from .fractional import L1Kernel
from .linalg import SolveError, gamma_fn
from .schemes import ReducedSystem, Trajectory, reduce

DENSE_LIMIT = 2000


@dataclass
class GammaEstimate:
    """Subspace angle summary between the two coarse spaces.

    gamma is the cosine of the minimal L2 angle; min_ratio is the directly
    verified minimum of ||u1+u2||^2 / ||u2||^2; gamma_effective is the
    smallest gamma for which the splitting's first condition
    ||u1+u2||^2 >= 2(1-gamma^2)||u2||^2 holds (min_ratio = 2(1-gamma_eff^2)).
    """

    gamma: float
    min_ratio: float
    gamma_effective: float


@dataclass
class StabilityReport:
    lambda_max_full: float
    lambda_max_v2: float
    gamma: float
    gamma_effective: float
    min_ratio: float
    dt_max_explicit: float
    dt_max_partial: float
    alpha: float

    def to_text(self) -> str:
        buf = io.StringIO()
        for k, v in vars(self).items():
            buf.write(f"{k} = {v:.12g}\n")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


def lambda_max(A, M, tol: float = 1e-8) -> float:
    """Largest lambda of A v = lambda M v for symmetric A, SPD M."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        return float(sla.eigh(Ad, Md, eigvals_only=True,
                              subset_by_index=(n - 1, n - 1))[0])
    try:
        vals = spla.eigsh(sp.csc_matrix(A), k=1, M=sp.csc_matrix(M),
                          which="LA", tol=tol, maxiter=5000,
                          return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise SolveError(
            f"eigensolver did not converge ({exc})") from exc
    return float(vals[0])


def estimate_gamma(M11, M12, M22) -> GammaEstimate:
    """Minimal L2 angle between the block subspaces, verified directly.

    The cosine gamma is the largest singular value of L11^{-1} M12 L22^{-T};
    the quadratic-form condition is re-verified by the generalized
    eigenproblem for the Schur complement, which is the actual contract.
    """
    M11 = np.asarray(M11, dtype=float)
    M22 = np.asarray(M22, dtype=float)
    M12 = np.asarray(M12, dtype=float)
    try:
        L1 = sla.cholesky(M11, lower=True)
        L2 = sla.cholesky(M22, lower=True)
    except sla.LinAlgError as exc:
        raise SolveError("diagonal mass block is singular") from exc
    X = sla.solve_triangular(L1, M12, lower=True)
    X = sla.solve_triangular(L2, X.T, lower=True).T
    gamma = float(np.linalg.svd(X, compute_uv=False)[0]) if X.size else 0.0
    gamma = min(gamma, 1.0)

    # Direct verification: min over u2 of ||u1 + u2||^2 / ||u2||^2 equals the
    # smallest eigenvalue of (M22 - M21 M11^{-1} M12) w = theta M22 w.
    Schur = M22 - M12.T @ sla.cho_solve((L1, True), M12)
    theta = float(sla.eigh(0.5 * (Schur + Schur.T), M22, eigvals_only=True,
                           subset_by_index=(0, 0))[0])
    theta = max(theta, 0.0)
    gamma_eff = float(np.sqrt(min(max(1.0 - theta / 2.0, 0.0), 1.0)))
    return GammaEstimate(gamma=gamma, min_ratio=theta, gamma_effective=gamma_eff)


def dt_max_explicit(alpha: float, lambda_max_full: float) -> float:
    """Largest dt with alpha0 * lambda <= 1/2 for the explicit scheme."""
    if lambda_max_full < 0:
        raise ValueError("lambda must be nonnegative")
    if lambda_max_full == 0:
        return float("inf")
    return (1.0 / (2.0 * gamma_fn(2.0 - alpha) * lambda_max_full)) ** (1.0 / alpha)


def dt_max_partial(alpha: float, gamma: float, lambda_max_v2: float) -> float:
    """Largest dt with alpha0 * lambda <= 1 - gamma^2 for the splitting."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0,1), got {gamma}")
    if lambda_max_v2 < 0:
        raise ValueError("lambda must be nonnegative")
    if lambda_max_v2 == 0:
        return float("inf")
    return ((1.0 - gamma * gamma)
            / (gamma_fn(2.0 - alpha) * lambda_max_v2)) ** (1.0 / alpha)


@dataclass
class EnergyAudit:
    lhs: float          # ||u^N||_a^2
    rhs: float          # ||u^0||_a^2 + alpha0 * sum ||f^{k+1}||^2
    slack: float


def energy_audit(traj: Trajectory, A, f_norms_sq, kernel: L1Kernel) -> EnergyAudit:
    """Check ||u^N||_a^2 <= ||u^0||_a^2 + alpha0 sum_k ||f^{k+1}||^2.

    ``f_norms_sq`` holds the squared L2 norms of the forcing at T_1..T_N in
    the space of the trajectory.  Negative slack is a reported finding.
    """
    uN = traj.states[-1]
    u0 = traj.states[0]
    lhs = float(uN @ (A @ uN))
    rhs = float(u0 @ (A @ u0)) + kernel.alpha0 * float(np.sum(f_norms_sq))
    return EnergyAudit(lhs=lhs, rhs=rhs, slack=rhs - lhs)


def build_report(grid, field_, alpha: float, L: int = spaces.DEFAULT_NBASIS,
                 J: int = spaces.DEFAULT_NBASIS,
                 layers: int = spaces.DEFAULT_LAYERS,
                 basis1: spaces.ReducedBasis | None = None,
                 basis2: spaces.ReducedBasis | None = None) -> StabilityReport:
    """Construct the coarse spaces and evaluate every stability quantity.

    lambda_max_full is taken over the combined coarse space V_H (the space
    all three schemes act on); lambda_max_v2 over the second block alone.
    """
    if basis1 is None or basis2 is None:
        pou = assembly.msfem_partition(grid, field_)
        kt = assembly.kappa_tilde(field_, pou)
        aux1 = spaces.aux_spectral(grid, field_, kt, L)
        if basis1 is None:
            basis1 = spaces.cem_basis(grid, field_, aux1, layers)
        if basis2 is None:
            aux2 = spaces.v2_aux_spectral(grid, field_, aux1, J)
            basis2 = spaces.v2_basis(grid, field_, aux1, aux2, layers)
    A = assembly.assemble(grid, field_, "stiffness")
    M = assembly.assemble(grid, None, "mass")
    combined = spaces.combine(basis1, basis2)
    sysc = reduce(A, M, combined)
    n1 = sysc.n1
    lam_full = lambda_max(sysc.A, sysc.M)
    A22 = np.asarray(sysc.A)[n1:, n1:]
    M22 = np.asarray(sysc.M)[n1:, n1:]
    lam_v2 = lambda_max(A22, M22)
    ge = estimate_gamma(np.asarray(sysc.M)[:n1, :n1],
                        np.asarray(sysc.M)[:n1, n1:], M22)
    return StabilityReport(
        lambda_max_full=lam_full, lambda_max_v2=lam_v2, gamma=ge.gamma,
        gamma_effective=ge.gamma_effective, min_ratio=ge.min_ratio,
        dt_max_explicit=dt_max_explicit(alpha, lam_full),
        dt_max_partial=dt_max_partial(alpha, ge.gamma, lam_v2),
        alpha=alpha)


def contrast_sweep(grid, geometry_mask: np.ndarray, contrasts, alpha: float,
                   L: int = spaces.DEFAULT_NBASIS, J: int = spaces.DEFAULT_NBASIS,
                   layers: int = spaces.DEFAULT_LAYERS) -> list:
    """Stability quantities per contrast on a fixed high-kappa geometry.

    Returns a list of dict rows with keys contrast, lambda_full, lambda_v2,
    gamma, dt_exp, dt_partial (the CSV schema of the sweep output).
    """
    mask = np.asarray(geometry_mask, dtype=bool).ravel()
    rows = []
    for c in contrasts:
        if c <= 0:
            raise ValueError("contrasts must be positive")
        kappa = np.where(mask, float(c), 1.0)
        field_ = assembly.PermeabilityField(values=kappa)
        rep = build_report(grid, field_, alpha, L=L, J=J, layers=layers)
        rows.append({"contrast": float(c),
                     "lambda_full": rep.lambda_max_full,
                     "lambda_v2": rep.lambda_max_v2,
                     "gamma": rep.gamma,
                     "dt_exp": rep.dt_max_explicit,
                     "dt_partial": rep.dt_max_partial})
    return rows


def sweep_to_csv(rows, path) -> None:
    cols = ["contrast", "lambda_full", "lambda_v2", "gamma", "dt_exp", "dt_partial"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.12g}" for c in cols) + "\n")
