"""Rigor and effectivity of the residual-based error bound.

The bound certifies the final-time error of ANY coefficient sequence in
the reduced space, whether it came from a Galerkin solve or from the
learned regressor.  This script samples random reduced bases, reduced
solves and deliberately perturbed trajectories, compares the bound against
the true error from fresh full-order solves, and checks the online
residual evaluation against a brute-force full-space computation.
"""

import numpy as np

from mfhier import (ParameterBox, SplitMix64, assemble, build_reduced_system,
                    error_estimate, reconstruct_final, residual_dual_norms,
                    solve_fom, solve_rb)
from mfhier.rb import ReducedBasis, ReducedTrajectory, _x_orthonormalize

system = assemble(n_h=200, K=100, T=1.0, Q=2)
box = ParameterBox([[0.1, 10.0], [0.1, 10.0]])
rng = SplitMix64(2024)


def random_basis(n_vectors):
    W = np.array([[rng.uniform(-1.0, 1.0) for _ in range(n_vectors)]
                  for _ in range(system.n_h)])
    return ReducedBasis(V=_x_orthonormalize(system, np.zeros((system.n_h, 0)), W),
                        generation=1)


print("sampling 60 (parameter, basis, trajectory) triples ...")
effectivities = []
violations = 0
for trial in range(60):
    basis = random_basis(2 + trial % 6)
    reduced = build_reduced_system(system, basis)
    mu = box.sample(rng)
    trajectory = solve_rb(reduced, mu)
    if trial % 2:  # perturb: same certificate machinery, worse trajectory
        noise = np.array([[rng.uniform(-0.02, 0.02) for _ in range(basis.N)]
                          for _ in range(system.K + 1)])
        trajectory = ReducedTrajectory(trajectory.coefficients + noise,
                                       mu, 1, "ml")
    delta = error_estimate(reduced, mu, trajectory)
    truth = solve_fom(system, mu).states[-1]
    true_error = system.m_norm(truth - reconstruct_final(basis, trajectory))
    if delta + 1e-10 < true_error:
        violations += 1
    effectivities.append(delta / max(true_error, 1e-14))

eff = np.array(effectivities)
print(f"bound violations: {violations} of {len(eff)}")
print(f"effectivity (bound / true error): min {eff.min():.1f}, "
      f"median {np.median(eff):.1f}, max {eff.max():.1f}")

print("\nonline vs. brute-force residual dual norms (one random case):")
basis = random_basis(5)
reduced = build_reduced_system(system, basis)
mu = box.sample(rng)
coeffs = np.array([[rng.uniform(-1, 1) for _ in range(basis.N)]
                   for _ in range(system.K + 1)])
trajectory = ReducedTrajectory(coeffs, mu, 1, "rb")
online = residual_dual_norms(reduced, mu, trajectory)
U = coeffs @ basis.V.T
direct = np.empty(system.K)
for k in range(1, system.K + 1):
    r = (system.F - (system.M @ (U[k] - U[k - 1])) / system.dt
         - sum(m * (A @ U[k]) for m, A in zip(mu, system.A)))
    direct[k - 1] = np.sqrt(max(float(r @ system.x_solve(r)), 0.0))
print(f"  max |online - direct| / max(direct) = "
      f"{np.max(np.abs(online - direct)) / np.max(direct):.2e}")
