"""Reduced-basis stage: Galerkin projection with a certified estimator.

The basis grows adaptively by POD of the projection error of absorbed
full-order trajectories (POD-Greedy).  All error estimation runs through
precomputed Riesz cross-Gramians, so the online cost per time step is
O((Q+1)^2 N^2) and never touches full-order vectors.  The estimator

    Delta(mu)^2 = ||u0 - V a0||_M^2
                  + dt / alpha_LB(mu) * sum_k ||r^k||_{X'}^2

bounds the final-time M-norm error of ANY coefficient sequence in the
reduced space, which is what lets the machine-learning stage reuse it
unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, StaleGenerationError
from .fom import AffineSystem, ParabolicResult, Trajectory
from .hierarchy import ModelLevel, ModelOutput


@dataclass(frozen=True)
class ReducedBasis:
    V: np.ndarray       # (n_h, N), X-orthonormal columns
    generation: int

    @property
    def N(self) -> int:
        return self.V.shape[1]

    @staticmethod
    def empty(n_h: int) -> "ReducedBasis":
        return ReducedBasis(V=np.zeros((n_h, 0)), generation=0)


@dataclass(frozen=True)
class BasisChanged:
    """Notification payload emitted after a basis extension."""

    generation: int


@dataclass
class ReducedTrajectory:
    """Coefficient vectors a^0..a^K in the basis of one generation.

    The shared currency between the reduced-basis and the learned stage;
    ``generation`` ties it to the reduced system it may be interpreted in.
    """

    coefficients: np.ndarray  # (K+1, N)
    mu: np.ndarray
    generation: int
    producer: str  # "rb" | "ml"


@dataclass(frozen=True)
class ReducedSystem:
    """Galerkin-projected operators plus the online estimator blocks.

    The g_* arrays are Riesz cross-Gramians L_a^T X^{-1} L_b for
    L in {F, M V, A_q V}; together with the initial-error blocks they make
    residual dual norms and the error bound computable from coefficients
    alone.
    """

    generation: int
    N: int
    K: int
    T: float
    dt: float
    Q: int
    M_N: np.ndarray
    A_N: tuple
    F_N: np.ndarray
    a0: np.ndarray
    qoi_N: np.ndarray
    g_ff: float
    g_fm: np.ndarray      # (N,)
    g_fa: np.ndarray      # (Q, N)
    g_mm: np.ndarray      # (N, N)
    g_ma: np.ndarray      # (Q, N, N)
    g_aa: np.ndarray      # (Q, Q, N, N), g_aa[q, p] == g_aa[p, q].T
    u0_m_sq: float        # u0^T M u0
    m_u0_N: np.ndarray    # V^T M u0


def build_reduced_system(system: AffineSystem, basis: ReducedBasis) -> ReducedSystem:
    """Offline stage: project operators and precompute estimator blocks."""
    V = basis.V
    MV = system.M @ V
    AV = [A_q @ V for A_q in system.A]
    R_f = system.x_solve(system.F)
    R_m = system.x_solve(MV) if basis.N else MV
    R_a = [system.x_solve(av) if basis.N else av for av in AV]

    def sym(G):
        return 0.5 * (G + G.T)

    Q = system.Q
    N = basis.N
    g_aa = np.zeros((Q, Q, N, N))
    for q in range(Q):
        for p in range(q, Q):
            block = AV[q].T @ R_a[p]
            if p == q:
                block = sym(block)
            g_aa[q, p] = block
            if p != q:
                g_aa[p, q] = block.T
    m_u0 = system.M @ system.u0
    return ReducedSystem(
        generation=basis.generation, N=N,
        K=system.K, T=system.T, dt=system.dt, Q=Q,
        M_N=sym(V.T @ MV), A_N=tuple(sym(V.T @ av) for av in AV),
        F_N=V.T @ system.F,
        a0=V.T @ (system.X @ system.u0),
        qoi_N=V.T @ system.qoi_vector,
        g_ff=float(system.F @ R_f),
        g_fm=system.F @ R_m,
        g_fa=np.array([system.F @ ra for ra in R_a]).reshape(Q, N),
        g_mm=sym(MV.T @ R_m),
        g_ma=np.array([MV.T @ ra for ra in R_a]).reshape(Q, N, N),
        g_aa=g_aa,
        u0_m_sq=float(system.u0 @ m_u0),
        m_u0_N=V.T @ m_u0,
    )


def _x_orthonormalize(system: AffineSystem, V: np.ndarray,
                      W: np.ndarray) -> np.ndarray:
    """Two modified Gram-Schmidt passes of W against [V, W] in the X inner
    product; near-dependent vectors are dropped."""
    kept = []
    for j in range(W.shape[1]):
        w = W[:, j].copy()
        norm0 = np.sqrt(max(w @ (system.X @ w), 0.0))
        if norm0 <= 0.0:
            continue
        for _ in range(2):
            xw = system.X @ w
            if V.shape[1]:
                w = w - V @ (V.T @ xw)
                xw = system.X @ w
            for v in kept:
                w = w - v * (v @ xw)
                xw = system.X @ w
        norm = np.sqrt(max(w @ (system.X @ w), 0.0))
        if norm <= 1e-10 * norm0:
            continue
        kept.append(w / norm)
    if not kept:
        return np.zeros((W.shape[0], 0))
    return np.column_stack(kept)


def extend_basis(basis: ReducedBasis, reduced_system: ReducedSystem,
                 system: AffineSystem, trajectory: Trajectory,
                 pod_tol: float = 1e-13, n_add_max: int = 12,
                 n_max: int = 60):
    """POD-Greedy step: append leading POD modes of the projection error.

    Subtracts the X-orthogonal projection onto the current span from every
    snapshot, takes the POD of the residual snapshots in the X inner
    product (eigendecomposition of the (K+1)x(K+1) Gramian) and appends
    modes until the trajectory's uncaptured X-energy fraction drops below
    ``pod_tol``, capped at ``n_add_max`` new modes and ``n_max`` total.

    Returns ``(basis, reduced_system, n_added)``; adding zero modes keeps
    the generation (and the reduced system) unchanged.
    """
    S = trajectory.states.T  # (n_h, K+1)
    XS = system.X @ S
    traj_energy = float(np.einsum("ij,ij->", S, XS))
    if traj_energy <= 0.0:
        return basis, reduced_system, 0

    if basis.N:
        C = basis.V.T @ XS
        E = S - basis.V @ C
        XE = system.X @ E
    else:
        E, XE = S, XS
    gramian = E.T @ XE
    gramian = 0.5 * (gramian + gramian.T)
    evals, evecs = np.linalg.eigh(gramian)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    evals = np.clip(evals, 0.0, None)
    total_residual = float(evals.sum())

    target = pod_tol * traj_energy
    if total_residual <= target:
        return basis, reduced_system, 0
    room = min(n_add_max, n_max - basis.N)
    if room <= 0:
        return basis, reduced_system, 0

    # smallest mode count that leaves at most `target` uncaptured energy
    remaining = total_residual - np.cumsum(evals)
    n_new = int(np.searchsorted(-remaining, -target) + 1)
    n_new = min(n_new, room)
    # modes below the eigensolver noise floor are not meaningful directions
    floor = max(evals[0] * 1e-14, 0.0)
    while n_new > 0 and evals[n_new - 1] <= floor:
        n_new -= 1
    if n_new == 0:
        return basis, reduced_system, 0

    modes = E @ (evecs[:, :n_new] / np.sqrt(evals[:n_new]))
    modes = _x_orthonormalize(system, basis.V, modes)
    if modes.shape[1] == 0:
        return basis, reduced_system, 0
    new_basis = ReducedBasis(V=np.hstack([basis.V, modes]),
                             generation=basis.generation + 1)
    return new_basis, build_reduced_system(system, new_basis), modes.shape[1]


def coercivity_lower_bound(mu) -> float:
    """min-theta bound; exact here since a(v,v;mu) >= min_q mu_q * v^T X v."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise DomainError("coercivity lost for non-positive diffusivity")
    return float(mu.min())


def solve_rb(reduced_system: ReducedSystem, mu) -> ReducedTrajectory:
    """Reduced implicit Euler; one dense factorization reused over steps."""
    rs = reduced_system
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise DomainError("diffusivity must be strictly positive")
    coeffs = np.zeros((rs.K + 1, rs.N))
    if rs.N:
        B = np.asfortranarray(
            rs.M_N + rs.dt * sum(m_q * A_q for m_q, A_q in zip(mu, rs.A_N)))
        potrf, potrs = scipy.linalg.get_lapack_funcs(("potrf", "potrs"), (B,))
        factor, info = potrf(B, lower=1, overwrite_a=1)
        if info != 0:
            raise DomainError(f"reduced system not positive definite (info={info})")
        dt_f = rs.dt * rs.F_N
        coeffs[0] = rs.a0
        a = rs.a0
        for k in range(1, rs.K + 1):
            a, _ = potrs(factor, rs.M_N @ a + dt_f, lower=1)
            coeffs[k] = a
    return ReducedTrajectory(coefficients=coeffs, mu=mu,
                             generation=rs.generation, producer="rb")


def _check_generation(reduced_system: ReducedSystem,
                      trajectory: ReducedTrajectory) -> None:
    if trajectory.generation != reduced_system.generation:
        raise StaleGenerationError(
            f"coefficients of generation {trajectory.generation} cannot be "
            f"used with reduced system of generation {reduced_system.generation}")


def _residual_dual_norms_sq(reduced_system: ReducedSystem, mu,
                            trajectory: ReducedTrajectory) -> np.ndarray:
    """Squared dual norms ||r^k||_{X'}^2, k = 1..K, from Gramian blocks only.

    r^k = F - (1/dt) M V (a^k - a^{k-1}) - sum_q mu_q A_q V a^k; tiny
    negative round-off is clamped to zero.
    """
    rs = reduced_system
    _check_generation(rs, trajectory)
    mu = np.asarray(mu, dtype=float)
    a = trajectory.coefficients
    ak = a[1:]                      # (K, N)
    d = (a[1:] - a[:-1]) / rs.dt    # (K, N)

    sq = np.empty(rs.K)
    sq.fill(rs.g_ff)
    if rs.N:
        # fold the parameter sums into one symmetric block over z = [d, a];
        # the whole time loop is then a single quadratic form per step
        N = rs.N
        g_fa_w = mu @ rs.g_fa
        g_ma_w = (mu[:, None, None] * rs.g_ma).sum(axis=0)
        g_aa_w = ((mu[:, None] * mu[None, :])[:, :, None, None]
                  * rs.g_aa).sum(axis=(0, 1))
        big = np.empty((2 * N, 2 * N))
        big[:N, :N] = rs.g_mm
        big[:N, N:] = g_ma_w
        big[N:, :N] = g_ma_w.T
        big[N:, N:] = g_aa_w
        z = np.empty((rs.K, 2 * N))
        z[:, :N] = d
        z[:, N:] = ak
        lin = np.concatenate([rs.g_fm, g_fa_w])
        sq -= 2.0 * (z @ lin)
        sq += ((z @ big) * z).sum(axis=1)
    return np.clip(sq, 0.0, None)


def residual_dual_norms(reduced_system: ReducedSystem, mu,
                        trajectory: ReducedTrajectory) -> np.ndarray:
    return np.sqrt(_residual_dual_norms_sq(reduced_system, mu, trajectory))


def error_estimate(reduced_system: ReducedSystem, mu,
                   trajectory: ReducedTrajectory) -> float:
    """Rigorous bound on ||u^K_h(mu) - V a^K||_M for any coefficients."""
    rs = reduced_system
    _check_generation(rs, trajectory)
    a0 = trajectory.coefficients[0]
    e0_sq = rs.u0_m_sq
    if rs.N:
        e0_sq += a0 @ (rs.M_N @ a0) - 2.0 * (a0 @ rs.m_u0_N)
    e0_sq = max(e0_sq, 0.0)
    res_sq = _residual_dual_norms_sq(rs, mu, trajectory)
    alpha = coercivity_lower_bound(mu)
    return float(np.sqrt(e0_sq + rs.dt / alpha * float(res_sq.sum())))


def reconstruct(basis: ReducedBasis, trajectory: ReducedTrajectory) -> np.ndarray:
    """Lift coefficients to full space: row k is V a^k; shape (K+1, n_h)."""
    if trajectory.generation != basis.generation:
        raise StaleGenerationError("trajectory does not match basis generation")
    return trajectory.coefficients @ basis.V.T


def reconstruct_final(basis: ReducedBasis,
                      trajectory: ReducedTrajectory) -> np.ndarray:
    if trajectory.generation != basis.generation:
        raise StaleGenerationError("trajectory does not match basis generation")
    return basis.V @ trajectory.coefficients[-1]


def dump_basis(basis: ReducedBasis, pod_tol: float, path) -> None:
    """CSV dump (n_h rows x N columns) plus a sidecar metadata line."""
    np.savetxt(path, basis.V, delimiter=",", fmt="%.17g")
    with open(f"{path}.meta", "w", encoding="utf-8") as fh:
        fh.write(f"generation={basis.generation},N={basis.N},pod_tol={pod_tol:g}\n")


class ReducedBasisLevel(ModelLevel):
    """Middle stage: certified Galerkin surrogate on an adaptive basis.

    Absorbs full-order trajectories into the basis; emits a
    :class:`BasisChanged` notification downward whenever the generation
    bumps, so the learned stage can re-express its training data.
    """

    name = "rb"

    def __init__(self, system: AffineSystem, pod_tol: float = 1e-13,
                 n_add_max: int = 12, n_max: int = 60):
        self.system = system
        self.pod_tol = pod_tol
        self.n_add_max = n_add_max
        self.n_max = n_max
        self.basis = ReducedBasis.empty(system.n_h)
        self.reduced_system = build_reduced_system(system, self.basis)

    @property
    def generation(self) -> int:
        return self.basis.generation

    def evaluate(self, mu) -> ModelOutput:
        trajectory = solve_rb(self.reduced_system, mu)
        u_final = reconstruct_final(self.basis, trajectory)
        payload = ParabolicResult(
            qoi=float(self.system.qoi_vector @ u_final),
            mu=trajectory.mu, producer="rb",
            u_final=u_final, reduced=trajectory)
        return ModelOutput(payload=payload, adaptation=trajectory)

    def estimate_error(self, output, mu, next_level=None):
        # self-contained estimator; the next-level handle is not needed
        return error_estimate(self.reduced_system, mu, output.payload.reduced)

    def absorb(self, payload):
        if not isinstance(payload, Trajectory):
            return None
        old_generation = self.basis.generation
        self.basis, self.reduced_system, _ = extend_basis(
            self.basis, self.reduced_system, self.system, payload,
            pod_tol=self.pod_tol, n_add_max=self.n_add_max, n_max=self.n_max)
        if self.basis.generation != old_generation:
            return [BasisChanged(self.basis.generation)]
        return []

    def is_ready(self) -> bool:
        return self.basis.N >= 1
