"""Cavity-noise-induced condensate depletion.

Two independent routes to the same number:

* the quasi-normal-mode double sum

      dN(t) = 2 kappa  sum_{k,l} f(w_k + w_l, t) l1_k l2_l O_kl,

  with f(z, t) = (1 - exp(-i z t)) / (i z), the photon components
  l1_k = left[k, 0], l2_l = left[l, 1] of the left vectors, and the
  unconjugated overlap O_kl = dx * sum_j r4_k(x_j) r3_l(x_j); the
  steady state drops the exponential;

* the second-moment (Lyapunov) oracle, which never touches the
  eigenbasis: the ordered moment matrix S = <R R^T> obeys
  dS/dt = -i M S - i S M^T + D with the single noise entry
  D[0, 1] = 2 kappa, and dN = dx * trace of the (dPsi^dag, dPsi) block.

The condensate phase/number chain sector is excluded from the sums by
default and its noise drive is projected out of the oracle: photon noise
leaking through the number mode makes the condensate phase diffuse,
which shows up in the unprojected <dPsi^dag dPsi> as secular growth that
is condensate bookkeeping, not occupation of other modes.  Both routes
apply the same exclusion, so they remain directly comparable (and
``include_goldstone=True`` restores the literal sums on both sides).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .fluctuation import FluctuationMatrix, build_matrix
from .grid import Grid
from .meanfield import ConvergenceError, solve_ground_state
from .params import SystemParams
from .spectral import (
    DecompositionError,
    ModeDecomposition,
    StabilityReport,
    classify_stability,
    decompose,
)


class StabilityError(RuntimeError):
    """Steady-state depletion requested for a non-stable steady state."""


class OracleSingularError(RuntimeError):
    """The steady second-moment equation has no solution: noise drives an
    undamped direction (marginal or unstable dynamics)."""


@dataclass
class DepletionResult:
    """Depletion values at the requested times.

    times may contain math.inf for the steady-state entry.  skipped_pairs
    lists (k, l, reason) tuples for excluded double-sum terms.
    """

    times: list[float]
    values: list[float]
    pair_contributions: list[tuple[int, int, complex]] | None
    skipped_pairs: list[tuple[int, int, str]]


@dataclass
class SteadyDepletion:
    """Steady-state double sum, or a divergence marker.

    value is None exactly when diverged is True: some pair has a
    frequency denominator below the numerical resolution floor while
    carrying non-negligible photon noise weight, the signature of the
    cavity resonance.  excluded_modes lists the modes whose own
    symmetry pair fell under the zero-denominator skip rule; feeding
    them to the Lyapunov oracle's deflation makes the two routes
    compute the same observable.
    """

    value: float | None
    diverged: bool
    dominated_fraction: float | None
    pair_contributions: list[tuple[int, int, complex]]
    skipped_pairs: list[tuple[int, int, str]]
    excluded_modes: tuple[int, ...] = ()


def finite_time_kernel(z, t: float):
    """(1 - exp(-i z t)) / (i z), series branch near z t = 0.

    The four-term series keeps the relative error below 1e-12 at the
    switchover |z t| = 1e-4 and removes the 0/0 at z = 0 (the kernel
    tends to t there).
    """
    z = np.asarray(z, dtype=complex)
    zt = z * t
    small = np.abs(zt) < 1e-4
    w = -1j * np.where(small, zt, 0.0)
    series = t * (1.0 + w * (0.5 + w * (1.0 / 6.0 + w / 24.0)))
    safe = np.where(small, 1.0, z)
    direct = (1.0 - np.exp(-1j * np.where(small, 0.0, zt))) / (1j * safe)
    return np.where(small, series, direct)


def _pair_data(dec: ModeDecomposition):
    n = dec.n_grid
    l1 = dec.left[:, 0]
    l2 = dec.left[:, 1]
    r3 = dec.right[2 : 2 + n, :]
    r4 = dec.right[2 + n :, :]
    overlap = dec.dx * (r4.T @ r3)  # no conjugation anywhere in O_kl
    weight = np.outer(l1, l2) * overlap
    zsum = dec.omegas[:, None] + dec.omegas[None, :]
    return weight, zsum, l1, l2


def _to_real(value: complex, floor: float = 1e-10) -> float:
    if abs(value.imag) > max(1e-8 * abs(value.real), floor):
        raise RuntimeError(
            f"depletion acquired a non-negligible imaginary part: {value!r}"
        )
    return float(value.real)


def _goldstone_mask_and_log(dec: ModeDecomposition):
    dim = dec.omegas.size
    keep = np.ones((dim, dim), dtype=bool)
    skipped: list[tuple[int, int, str]] = []
    for g in dec.goldstone:
        for other in range(dim):
            if keep[g, other]:
                keep[g, other] = False
                skipped.append((g, other, "goldstone-cluster"))
            if keep[other, g]:
                keep[other, g] = False
                skipped.append((other, g, "goldstone-cluster"))
    return keep, skipped


def depletion_at_times(
    dec: ModeDecomposition,
    grid: Grid,
    times,
    *,
    include_goldstone: bool = False,
    exclude_modes=(),
) -> DepletionResult:
    """Finite-time depletion from the mode double sum.

    Well defined for any spectrum and any t >= 0; dN(0) = 0 exactly.
    exclude_modes drops additional modes from the double sum (e.g. the
    steady-state rule's exclusion set, for like-for-like comparison with
    a deflated oracle run).
    """
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be nonnegative")
    weight, zsum, _, _ = _pair_data(dec)
    if include_goldstone:
        keep = np.ones_like(weight, dtype=bool)
        skipped: list[tuple[int, int, str]] = []
    else:
        keep, skipped = _goldstone_mask_and_log(dec)
    for k in exclude_modes:
        keep[k, :] = False
        keep[:, k] = False
    values = []
    for t in times:
        if t == 0.0:
            values.append(0.0)
            continue
        kernel = finite_time_kernel(zsum, t)
        total = 2.0 * dec.kappa * (weight * kernel)[keep].sum()
        values.append(_to_real(total))
    return DepletionResult(
        times=times, values=values, pair_contributions=None, skipped_pairs=skipped
    )


def steady_state_depletion(
    dec: ModeDecomposition,
    grid: Grid,
    stability: StabilityReport,
    *,
    heating: bool = False,
    tol_pair: float = 1e-8,
    tol_noise: float = 1e-10,
    z_floor: float = 1e-11,
    include_goldstone: bool = False,
    top_pairs: int = 20,
) -> SteadyDepletion:
    """Steady-state depletion, refusing non-stable states.

    Zero-denominator policy: pairs with |w_k + w_l| < tol_pair and
    photon noise weight |l1_k l2_l| < tol_noise are dropped and logged
    (they are exactly the numerically unresolvable, noise-free pairs).
    A pair below the resolution floor z_floor that still carries weight
    above tol_noise makes the sum meaningless and the result is flagged
    diverged.  Pairs between z_floor and tol_pair with real weight are
    kept: their denominators are accurate, since the paired eigenvalues
    are symmetrized against the exact G M G = -conj(M) relation.  The
    dominated_fraction is the share contributed by symmetry-paired
    (k, pairing[k]) terms.
    """
    if heating:
        raise StabilityError(
            "steady-state depletion refused: heating regime (delta_c > N<U>)"
        )
    if stability.label != "stable":
        raise StabilityError(
            f"steady-state depletion requires a stable spectrum, got "
            f"'{stability.label}' (max growth rate {stability.max_growth_rate:.3e})"
        )
    weight, zsum, l1, l2 = _pair_data(dec)
    if include_goldstone:
        keep = np.ones_like(weight, dtype=bool)
        skipped: list[tuple[int, int, str]] = []
    else:
        keep, skipped = _goldstone_mask_and_log(dec)

    absz = np.abs(zsum)
    noise_mag = np.abs(np.outer(l1, l2))
    blocking = (absz < z_floor) & (noise_mag >= tol_noise) & keep
    if blocking.any():
        ks, ls = np.nonzero(blocking)
        skipped.extend(
            (int(k), int(l), "zero-denominator, non-negligible noise")
            for k, l in zip(ks, ls)
        )
        return SteadyDepletion(
            value=None,
            diverged=True,
            dominated_fraction=None,
            pair_contributions=[],
            skipped_pairs=skipped,
        )
    small = (absz < tol_pair) & (noise_mag < tol_noise) & keep
    ks, ls = np.nonzero(small)
    skipped.extend(
        (int(k), int(l), "zero-denominator, negligible noise") for k, l in zip(ks, ls)
    )
    keep &= ~small
    excluded = tuple(
        int(k)
        for k in range(dec.omegas.size)
        if k not in dec.goldstone and small[k, dec.pairing[k]]
    )

    contrib = np.zeros_like(weight)
    contrib[keep] = 2.0 * dec.kappa * weight[keep] / (1j * zsum[keep])
    total = contrib.sum()
    value = _to_real(total)

    paired = np.zeros_like(keep)
    paired[np.arange(dec.omegas.size), dec.pairing] = True
    paired_sum = contrib[paired & keep].sum().real
    dominated = paired_sum / value if value != 0.0 else None

    flat = np.abs(contrib).ravel()
    order = np.argsort(flat)[::-1][:top_pairs]
    dim = dec.omegas.size
    top = [
        (int(i // dim), int(i % dim), complex(contrib.ravel()[i]))
        for i in order
        if flat[i] > 0.0
    ]
    return SteadyDepletion(
        value=value,
        diverged=False,
        dominated_fraction=dominated,
        pair_contributions=top,
        skipped_pairs=skipped,
        excluded_modes=excluded,
    )


def relaxation_time(dec: ModeDecomposition, *, tol_noise: float = 1e-10) -> float:
    """1 / |slowest decay| over the noise-coupled, non-Goldstone modes.

    Infinity when no damped noise-coupled mode exists (decoupled cavity).
    """
    dim = dec.omegas.size
    idx = np.array([k for k in range(dim) if k not in dec.goldstone], dtype=int)
    coupled = idx[np.abs(dec.left[idx, 0] * dec.left[idx, 1]) > tol_noise]
    if coupled.size == 0:
        return math.inf
    max_im = float(dec.omegas[coupled].imag.max())
    if max_im >= 0.0:
        return math.inf
    return 1.0 / abs(max_im)


# ---------------------------------------------------------------------------
# second-moment (Lyapunov) oracle


def _noise_matrix(dim: int, kappa: float) -> np.ndarray:
    # only <xi xi^dag> is nonvanishing, so only (row da, col da^dag) sources
    d = np.zeros((dim, dim), dtype=complex)
    d[0, 1] = 2.0 * kappa
    return d


def _refined_lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares with one step of iterative refinement."""
    x = np.linalg.lstsq(a, b, rcond=None)[0]
    x = x + np.linalg.lstsq(a, b - a @ x, rcond=None)[0]
    return x


def _chain_projector(fm: FluctuationMatrix) -> np.ndarray | None:
    """Oblique projector onto the complement of the phase/number chain.

    Built from the analytic null vectors and least-squares solves only,
    so the oracle stays independent of the eigendecomposition.  Returns
    None when the chain structure is absent (e.g. decoupled cavity or
    unshifted matter blocks).
    """
    m = fm.m
    n = fm.n_grid
    dim = m.shape[0]
    scale = float(np.abs(m).max())
    phi = fm.phi

    r1 = np.zeros(dim, dtype=complex)
    r1[2 : 2 + n] = phi
    r1[2 + n :] = -phi
    r1 /= np.linalg.norm(r1)
    l2 = np.zeros(dim, dtype=complex)
    l2[2 : 2 + n] = phi
    l2[2 + n :] = phi
    l2 /= np.linalg.norm(l2)
    if np.abs(m @ r1).max() > 1e-7 * scale or np.abs(l2 @ m).max() > 1e-7 * scale:
        return None
    r2 = _refined_lstsq(m, r1)
    if np.linalg.norm(m @ r2 - r1) > 1e-7:
        return None
    l1 = _refined_lstsq(m.T, l2)
    if np.linalg.norm(l1 @ m - l2) > 1e-7:
        return None
    c1 = l1 @ r1
    c2 = l2 @ r2
    if abs(c1) < 1e-12 or abs(c2) < 1e-12:
        return None
    l1 = l1 - ((l1 @ r2) / c2) * l2  # gauge: l1 r2 = 0 (l2 r1 = 0 already)
    c1 = l1 @ r1
    q = np.outer(r1, l1) / c1 + np.outer(r2, l2) / c2
    return np.eye(dim) - q


def mode_projector(dec: ModeDecomposition, modes) -> np.ndarray:
    """Oblique projector annihilating the given decomposition modes.

    Used to hand the double sum's excluded sector to the Lyapunov
    oracle: the exclusion defines the observable, while the oracle still
    computes its value without touching the eigenbasis.
    """
    modes = sorted(set(int(k) for k in modes))
    dim = dec.omegas.size
    p = np.eye(dim, dtype=complex)
    if modes:
        p -= dec.right[:, modes] @ dec.left[modes, :]
    return p


def _moment_to_depletion(s_mat: np.ndarray, n: int, dx: float) -> float:
    total = dx * np.trace(s_mat[2 + n :, 2 : 2 + n])
    return _to_real(complex(total))


def _gershgorin_bound(m: np.ndarray) -> float:
    return float(np.abs(m).sum(axis=1).max())


def lyapunov_oracle(
    fm: FluctuationMatrix,
    grid: Grid,
    times=None,
    *,
    steady: bool = False,
    z_floor: float = 1e-11,
    include_goldstone: bool = False,
    deflate: np.ndarray | None = None,
) -> DepletionResult:
    """Depletion from direct second-moment propagation.

    Time-dependent values integrate dS/dt = -i M S - i S M^T + D with a
    fixed-step fourth-order Runge-Kutta rule, dt <= 0.1 / max|w|
    (Gershgorin bound); the one-step update of this linear ODE is itself
    a fixed affine map, so the N-step result is evaluated by repeated
    squaring of that map, which is the same scheme reorganized to run in
    O(log N) dense products.  The steady state solves the vectorized
    linear system, truncating singular directions below the z_floor
    resolution limit; directions dropped that way must carry negligible
    noise, otherwise no steady state exists and OracleSingularError is
    raised.

    ``deflate`` optionally projects the noise input (e.g. the
    mode_projector of the double sum's excluded modes, so both routes
    evaluate the same observable).  Without it the phase/number chain is
    deflated from analytic null vectors alone.

    Intended for moderate grids (n <= 32); cost grows as dim^6 with the
    matrix dimension.
    """
    m = fm.m
    dim = m.shape[0]
    n = fm.n_grid
    d = _noise_matrix(dim, fm.kappa)
    proj = deflate
    if proj is None and not include_goldstone:
        proj = _chain_projector(fm)
    if proj is not None:
        d = proj @ d @ proj.T

    if steady:
        value = _steady_moment_value(m, d, n, fm.dx, z_floor, proj)
        return DepletionResult(
            times=[math.inf], values=[value], pair_contributions=None, skipped_pairs=[]
        )

    times = [float(t) for t in times or []]
    if any(t < 0 for t in times):
        raise ValueError("times must be nonnegative")
    eye = np.eye(dim)
    l_super = -1j * (np.kron(m, eye) + np.kron(eye, m))
    rhs = d.ravel()
    h_max = 0.1 / _gershgorin_bound(m)
    values = []
    for t in times:
        if t == 0.0:
            values.append(0.0)
            continue
        n_steps = max(1, math.ceil(t / h_max))
        h = t / n_steps
        s_mat = _rk4_fixed_steps(l_super, rhs, h, n_steps).reshape(dim, dim)
        if proj is not None:
            # noise deflation is exact only to the projector's own defect;
            # projecting the moments removes the amplified leftover exactly
            s_mat = proj @ s_mat @ proj.T
        values.append(_moment_to_depletion(s_mat, n, fm.dx))
    return DepletionResult(
        times=times, values=values, pair_contributions=None, skipped_pairs=[]
    )


def _steady_moment_value(m, d, n, dx, z_floor, proj=None):
    dim = m.shape[0]
    eye = np.eye(dim)
    k_super = np.kron(m, eye) + np.kron(eye, m)  # vec(M S + S M^T), row-major
    rhs = (-1j * d).ravel()
    u, s, vh = np.linalg.svd(k_super)
    coeff = u.conj().T @ rhs
    keep = s >= z_floor
    dropped = np.abs(coeff[~keep]) if (~keep).any() else np.zeros(1)
    if dropped.max() > 1e-6 * max(np.abs(rhs).max(), 1e-300):
        raise OracleSingularError(
            "noise drives an undamped direction of the second-moment flow; "
            "the steady state does not exist (marginal or unstable dynamics)"
        )
    x = vh.conj().T @ np.where(keep, coeff / np.where(keep, s, 1.0), 0.0)
    s_mat = x.reshape(dim, dim)
    if proj is not None:
        s_mat = proj @ s_mat @ proj.T
    return _moment_to_depletion(s_mat, n, dx)


def _rk4_fixed_steps(l_super, forcing_vec, h, n_steps):
    """N identical RK4 steps of vec' = L vec + c from vec(0) = 0."""
    a = h * l_super
    a2 = a @ a
    a3 = a2 @ a
    eye = np.eye(a.shape[0])
    k_step = eye + a + a2 / 2.0 + a3 / 6.0 + (a3 @ a) / 24.0
    d_step = h * ((eye + a / 2.0 + a2 / 6.0 + a3 / 24.0) @ forcing_vec)

    acc = np.zeros_like(d_step)
    base_k = k_step
    base_d = d_step
    steps = n_steps
    while steps:
        if steps & 1:
            acc = base_k @ acc + base_d
        steps >>= 1
        if steps:
            base_d = base_k @ base_d + base_d
            base_k = base_k @ base_k
    return acc


# ---------------------------------------------------------------------------
# sweep orchestration


@dataclass
class DepletionPoint:
    """One row of a depletion sweep."""

    delta_c: float
    u0: float
    status: str
    depletion: float | None = None
    stability: str | None = None
    dominated_fraction: float | None = None
    time: float | None = None
    oracle: float | None = None


def solve_depletion_point(
    params: SystemParams,
    grid: Grid,
    delta_c: float,
    u0: float,
    *,
    eta_follows_detuning: bool = True,
    times=None,
    oracle: bool = False,
    solver_options: dict | None = None,
    subtract_mu: bool = True,
    tol_pair: float = 1e-8,
    tol_noise: float = 1e-10,
    tol_zero: float = 1e-6,
) -> list[DepletionPoint]:
    """Full pipeline at one (detuning, light shift) point.

    Returns one row for the steady state, or one row per requested time.
    Divergences and refusals land in the status field, never in the
    numeric columns.
    """
    eta = -delta_c if eta_follows_detuning else params.eta
    point = dc_replace(params, delta_c=float(delta_c), u0=float(u0), eta=float(eta))
    opts = dict(solver_options or {})
    try:
        state = solve_ground_state(point, grid, **opts)
        fm = build_matrix(state, point, grid, subtract_mu=subtract_mu)
        dec = decompose(fm)
    except (ConvergenceError, DecompositionError) as exc:
        return [DepletionPoint(delta_c=delta_c, u0=u0, status=f"error: {exc}")]
    stability = classify_stability(dec, tol_zero=tol_zero, tol_noise=tol_noise)

    if times:
        result = depletion_at_times(dec, grid, times)
        rows = []
        for t, value in zip(result.times, result.values):
            row = DepletionPoint(
                delta_c=delta_c,
                u0=u0,
                status="ok",
                depletion=value,
                stability=stability.label,
                time=t,
            )
            rows.append(row)
        if oracle and grid.n <= 32:
            oracle_result = lyapunov_oracle(fm, grid, times)
            for row, value in zip(rows, oracle_result.values):
                row.oracle = value
        return rows

    if state.heating:
        return [
            DepletionPoint(
                delta_c=delta_c, u0=u0, status="heating", stability=stability.label
            )
        ]
    if stability.label != "stable":
        return [
            DepletionPoint(
                delta_c=delta_c,
                u0=u0,
                status=stability.label,
                stability=stability.label,
            )
        ]
    steady = steady_state_depletion(
        dec, grid, stability, heating=state.heating,
        tol_pair=tol_pair, tol_noise=tol_noise,
    )
    if steady.diverged:
        return [
            DepletionPoint(
                delta_c=delta_c, u0=u0, status="diverged", stability=stability.label
            )
        ]
    row = DepletionPoint(
        delta_c=delta_c,
        u0=u0,
        status="ok",
        depletion=steady.value,
        stability=stability.label,
        dominated_fraction=steady.dominated_fraction,
    )
    if oracle and grid.n <= 32:
        try:
            proj = mode_projector(dec, steady.excluded_modes + dec.goldstone)
            oracle_result = lyapunov_oracle(fm, grid, steady=True, deflate=proj)
            row.oracle = oracle_result.values[0]
        except OracleSingularError:
            pass
    return [row]


def depletion_sweep(
    params: SystemParams,
    grid: Grid,
    u0_values,
    detunings=None,
    **point_options,
) -> list[DepletionPoint]:
    """Steady-state (or finite-time) depletion over a grid of
    (detuning, light shift) points; per-point failures are recorded in
    the status column and the sweep continues."""
    detunings = list(detunings) if detunings is not None else [params.delta_c]
    rows: list[DepletionPoint] = []
    for delta_c in detunings:
        for u0 in u0_values:
            rows.extend(
                solve_depletion_point(params, grid, delta_c, u0, **point_options)
            )
    return rows
