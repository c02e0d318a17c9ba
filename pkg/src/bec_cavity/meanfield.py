"""Self-consistent mean-field steady state of the condensate-cavity system.

The coupled equations are

    i d(alpha)/dt = [-delta_c + N <U> - i kappa] alpha + i eta
    i d(phi)/dt   = [-d^2/dx^2 + |alpha|^2 U(x)] phi

with <U> = integral of U |phi|^2.  The stationary cavity amplitude for a
given <U> is the closed form ``steady_alpha``.  The condensate ground
state is found by imaginary-time propagation with second-order operator
splitting, with the cavity amplitude updated under-relaxed after every
step; a Rayleigh-quotient refinement stage then polishes the fixed point
to near machine precision (the splitting alone leaves an O(dt^2) bias in
phi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, kinetic_matrix, potential_profile
from .params import SystemParams


class ConvergenceError(RuntimeError):
    """Imaginary-time iteration exhausted max_iters.

    Carries the final residuals in ``residual_phi`` and ``residual_alpha``.
    """

    def __init__(self, message: str, residual_phi: float, residual_alpha: float):
        super().__init__(message)
        self.residual_phi = residual_phi
        self.residual_alpha = residual_alpha


@dataclass
class MeanFieldState:
    """Converged self-consistent solution.

    phi is gauge fixed: real, nonnegative at the potential minimum, and
    normalized so that integrate(|phi|^2) = 1.  mu is the chemical
    potential <phi|H0|phi> of the final single-particle Hamiltonian
    H0 = kinetic + |alpha|^2 U(x).  heating flags delta_c - N<U> > 0,
    the regime where cavity back-action amplifies atomic motion.
    """

    phi: np.ndarray
    alpha: complex
    u_avg: float
    mu: float
    converged: bool
    residual_phi: float
    residual_alpha: float
    iterations: int
    heating: bool
    history: dict | None = field(default=None, repr=False)


def steady_alpha(params: SystemParams, u_avg: float) -> complex:
    """Stationary cavity amplitude i*eta / (delta_c - N*u_avg + i*kappa).

    The denominator never vanishes for kappa > 0, so the root is unique
    and finite; |alpha|^2 = eta^2 / ((delta_c - N*u_avg)^2 + kappa^2).
    """
    return 1j * params.eta / (params.delta_c - params.n_atoms * u_avg + 1j * params.kappa)


def _kinetic_energy(phi_hat: np.ndarray, q2: np.ndarray, dx: float, n: int) -> float:
    # Parseval: dx * sum_j phi (K phi) = (dx/n) * sum_q q^2 |phi_hat|^2
    return float((q2 * np.abs(phi_hat) ** 2).sum() * dx / n)


def solve_ground_state(
    params: SystemParams,
    grid: Grid,
    *,
    itp_dt: float = 1e-3,
    tol_phi: float = 1e-9,
    tol_alpha: float = 1e-10,
    mixing: float = 0.3,
    max_iters: int = 1_000_000,
    frozen_alpha: complex | None = None,
    refine: bool = True,
    record_history: bool = False,
) -> MeanFieldState:
    """Solve the coupled mean-field equations for the steady state.

    Starts from the uniform condensate, alternates split-step
    imaginary-time propagation of phi with under-relaxed updates of
    alpha, and stops when the sup-norm change of phi per step falls
    below tol_phi*itp_dt and the change of alpha below tol_alpha.

    frozen_alpha pins the cavity amplitude (an externally imposed
    lattice); refine=False skips the final eigenpair polish.

    Raises ConvergenceError when max_iters is exhausted.
    """
    n = grid.n
    dx = grid.dx
    u_pot = potential_profile(grid, params.u0)
    q2 = grid.wavenumbers**2
    kin_phase = np.exp(-itp_dt * q2)

    phi = np.full(n, 1.0 / np.sqrt(np.pi))
    u_avg = float((u_pot * phi**2).sum() * dx)
    alpha = frozen_alpha if frozen_alpha is not None else steady_alpha(params, u_avg)

    history: dict | None = None
    if record_history:
        history = {"energy": [], "alpha": [], "u_avg": []}

    d_phi = np.inf
    d_alpha = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        v = np.abs(alpha) ** 2 * u_pot
        half = np.exp(-0.5 * itp_dt * v)
        phi_new = half * phi
        phi_hat = np.fft.fft(phi_new)
        phi_new = np.fft.ifft(kin_phase * phi_hat).real
        phi_new *= half
        phi_new /= np.sqrt((phi_new**2).sum() * dx)

        u_new = float((u_pot * phi_new**2).sum() * dx)
        if frozen_alpha is not None:
            alpha_new = alpha
        else:
            alpha_new = (1.0 - mixing) * alpha + mixing * steady_alpha(params, u_new)

        d_phi = float(np.abs(phi_new - phi).max())
        d_alpha = abs(alpha_new - alpha)
        phi, alpha, u_avg = phi_new, alpha_new, u_new

        if history is not None:
            e_kin = _kinetic_energy(np.fft.fft(phi), q2, dx, n)
            e_pot = float((np.abs(alpha) ** 2 * u_pot * phi**2).sum() * dx)
            history["energy"].append(e_kin + e_pot)
            history["alpha"].append(alpha)
            history["u_avg"].append(u_avg)

        if d_phi < tol_phi * itp_dt and d_alpha < tol_alpha:
            converged = True
            break

    if not converged:
        raise ConvergenceError(
            f"no convergence after {max_iters} imaginary-time steps "
            f"(|d phi| = {d_phi:.3e}, |d alpha| = {d_alpha:.3e})",
            residual_phi=d_phi,
            residual_alpha=float(d_alpha),
        )

    kin = kinetic_matrix(grid)
    if refine:
        phi, alpha, u_avg = _refine_fixed_point(
            params, grid, kin, u_pot, phi, alpha, frozen_alpha, mixing
        )

    # gauge: real phi, nonnegative at the potential minimum
    if phi[int(np.argmin(u_pot))] < 0:
        phi = -phi

    h0 = kin + np.diag(np.abs(alpha) ** 2 * u_pot)
    h_phi = h0 @ phi
    mu = float((phi * h_phi).sum() * dx)
    residual_phi = float(np.abs(h_phi - mu * phi).max())
    if frozen_alpha is None:
        residual_alpha = abs(alpha - steady_alpha(params, u_avg))
    else:
        residual_alpha = 0.0
    heating = (params.delta_c - params.n_atoms * u_avg) > 0

    return MeanFieldState(
        phi=phi.astype(complex),
        alpha=complex(alpha),
        u_avg=u_avg,
        mu=mu,
        converged=True,
        residual_phi=residual_phi,
        residual_alpha=float(residual_alpha),
        iterations=iterations,
        heating=heating,
        history=history,
    )


def _refine_fixed_point(params, grid, kin, u_pot, phi, alpha, frozen_alpha, mixing):
    """Polish (phi, alpha) with Rayleigh-quotient inverse iteration.

    The split-step fixed point carries an O(dt^2) bias relative to the
    discrete ground state of H0; a few shifted solves remove it.  The
    self-consistent alpha is re-converged along the way, with the same
    under-relaxation as the main loop so the map stays contractive near
    the cavity resonance.
    """
    n = grid.n
    dx = grid.dx
    eye = np.eye(n)
    w = phi * np.sqrt(dx)  # unit 2-norm eigenvector of the dense matrix
    for _ in range(400):
        h = kin + np.diag(np.abs(alpha) ** 2 * u_pot)
        for _ in range(3):
            mu_r = float(w @ h @ w)
            try:
                w_next = np.linalg.solve(h - mu_r * eye, w)
            except np.linalg.LinAlgError:
                break
            w_next /= np.linalg.norm(w_next)
            if w_next[int(np.argmax(np.abs(w_next)))] < 0:
                w_next = -w_next
            w = w_next
            if np.abs(h @ w - (w @ h @ w) * w).max() < 1e-13 * max(
                1.0, np.abs(h).max()
            ):
                break
        # w*w already carries the quadrature weight: sum(u w^2) = <U>
        u_new = float((u_pot * w**2).sum())
        if frozen_alpha is not None:
            break
        alpha_new = (1.0 - mixing) * alpha + mixing * steady_alpha(params, u_new)
        done = abs(alpha_new - alpha) < 1e-14 * max(1.0, abs(alpha_new))
        alpha = alpha_new
        if done:
            alpha = steady_alpha(params, u_new)
            break
    phi = w / np.sqrt(dx)
    u_avg = float((u_pot * phi**2).sum() * dx)
    return phi, alpha, u_avg
