"""Biorthogonal eigendecomposition of the fluctuation generator.

The generator is non-normal, so left and right eigenvectors differ.  We
compute right eigenpairs with a dense general eigensolver, take the left
matrix as the (refined) inverse of the right one, and report the right
basis condition number as the honesty metric.  Rows of ``left`` satisfy
left @ right = I, so row k conjugated is the left eigenvector in the
conjugate-linear scalar product convention; the noise weights used by
the depletion sums are exactly left[k, 0] and left[k, 1].

Phase symmetry of the condensate makes the generator defective: with the
chemical potential subtracted the vector (0, 0, phi, -phi) is an exact
null vector whose dual partner (the number fluctuation) forms a 2 x 2
Jordan chain with it.  A naive eigensolve splits this pair into two
spurious eigenvalues ~ +/- sqrt(eps) with nearly parallel vectors, which
poisons the inverse.  ``decompose`` detects the cluster and replaces it
by the analytically known chain basis (exact zeros, well conditioned);
the cluster indices are exposed so downstream sums can treat them
separately.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .fluctuation import FluctuationMatrix, build_matrix
from .grid import Grid
from .meanfield import ConvergenceError, solve_ground_state
from .params import SystemParams


class DecompositionError(RuntimeError):
    """Eigendecomposition unusable (non-convergence or singular basis)."""


class DegenerateClusterError(ValueError):
    """Petermann factor requested for a mode inside a degenerate cluster."""

    def __init__(self, message: str, cluster: tuple[int, ...], condition_number: float):
        super().__init__(message)
        self.cluster = cluster
        self.condition_number = condition_number


@dataclass
class StabilityReport:
    label: str  # "stable", "unstable" or "marginal"
    max_growth_rate: float  # max Im omega over non-Goldstone modes


@dataclass
class ModeDecomposition:
    """Eigenvalues with paired left/right vectors, biorthonormalized.

    omegas    -- complex mode frequencies, sorted by (Re, Im); the
                 Goldstone cluster entries are exact zeros when the
                 chain basis was substituted
    right     -- columns are right vectors (unit norm, canonical phase)
    left      -- rows, with left @ right = I
    pairing   -- involution k -> k' with omega_k' ~ -conj(omega_k)
    goldstone -- indices of the condensate phase/number cluster
    chain     -- True when the cluster is a Jordan chain
                 (M r2 = c r1, M r1 = 0) rather than two eigenvectors;
                 the coupling c is stored in chain_coupling
    """

    omegas: np.ndarray
    right: np.ndarray
    left: np.ndarray
    cond_r: float
    pairing: np.ndarray
    pairing_error: float
    goldstone: tuple[int, ...]
    chain: bool
    chain_coupling: complex
    eigen_residual: float
    biorth_defect: float
    n_grid: int
    dx: float
    kappa: float


def eigendecompose(m: np.ndarray, *, cond_limit: float = 1e12):
    """Plain biorthogonal decomposition of a dense complex matrix.

    Returns (omegas, right, left, cond_r) with columns of ``right``
    normalized and phase-fixed, rows of ``left`` from the refined
    inverse.  Raises DecompositionError when the right basis is
    numerically singular; the second-moment (Lyapunov) path does not
    need the eigenbasis and is the fallback in that case.
    """
    omegas, right = np.linalg.eig(m)
    order = np.lexsort((omegas.imag, omegas.real))
    omegas = omegas[order]
    right = right[:, order]
    right, _ = _canonical_columns(right)
    cond_r = float(np.linalg.cond(right))
    if not np.isfinite(cond_r) or cond_r > cond_limit:
        raise DecompositionError(
            f"right eigenvector basis is numerically singular "
            f"(cond = {cond_r:.3e} > {cond_limit:.1e}); "
            "use the Lyapunov second-moment oracle instead"
        )
    left = _refined_inverse(right)
    return omegas, right, left, cond_r


def _canonical_columns(vecs: np.ndarray):
    """Unit-normalize columns and rotate the largest entry real positive."""
    norms = np.linalg.norm(vecs, axis=0)
    vecs = vecs / norms
    idx = np.argmax(np.abs(vecs), axis=0)
    pivots = vecs[idx, np.arange(vecs.shape[1])]
    phases = pivots / np.abs(pivots)
    return vecs / phases, norms


def _physical_norm_factors(vecs: np.ndarray, dx: float) -> np.ndarray:
    """Column factors giving unit photon + quadrature-weighted matter norm.

    Makes per-mode quantities such as the photon noise weights |l1 l2|
    grid-resolution invariant, so the absolute skip tolerances of the
    depletion sums mean the same thing at every grid size.
    """
    photon = np.abs(vecs[0, :]) ** 2 + np.abs(vecs[1, :]) ** 2
    atom = np.linalg.norm(vecs[2:, :], axis=0) ** 2
    return 1.0 / np.sqrt(photon + dx * atom)


def _degenerate_groups(omegas: np.ndarray, skip: set[int], tol_abs: float):
    """Runs of consecutive (sorted) eigenvalues closer than tol_abs."""
    dim = omegas.size
    groups = []
    start = 0
    for k in range(1, dim + 1):
        if k == dim or abs(omegas[k] - omegas[start]) > tol_abs:
            members = [j for j in range(start, k) if j not in skip]
            if len(members) > 1:
                groups.append(members)
            start = k
    return groups


def _householder_concentrating(v: np.ndarray) -> np.ndarray:
    """Unitary H (Hermitian involution) with H v proportional to e_0."""
    nv = np.linalg.norm(v)
    beta = v[0] / abs(v[0]) if v[0] != 0 else 1.0
    u = v.copy()
    u[0] += beta * nv
    un = np.linalg.norm(u)
    if un < 1e-300:
        return np.eye(v.size, dtype=complex)
    u /= un
    return np.eye(v.size, dtype=complex) - 2.0 * np.outer(u, u.conj())


def _align_degenerate_clusters(
    omegas: np.ndarray,
    right: np.ndarray,
    left: np.ndarray,
    skip: set[int],
    tol_abs: float = 1e-7,
):
    """Concentrate the photon noise inside numerically degenerate clusters.

    When eigenvalues coincide below the eigensolver's resolution the
    returned basis inside the cluster is arbitrary, which smears photon
    components over modes that are exactly decoupled by parity.  A
    unitary rotation aligning the cluster's l1 components (which, by
    parity, aligns l2 as well) restores the physical split: one coupled
    mode carrying the noise and damping, the rest exactly noiseless.

    The rotation is applied to the right columns and, contragrediently
    and exactly, to the left rows, so left @ right is untouched.
    Returns the updated (right, left) and the affected clusters.
    """
    groups = _degenerate_groups(omegas, skip, tol_abs)
    if not groups:
        return right, left, []
    right = right.copy()
    left = left.copy()
    for members in groups:
        # orthonormalize the cluster basis first: the eigensolver's columns
        # inside a degenerate eigenspace can be visibly non-orthogonal
        q, rf = np.linalg.qr(right[:, members])
        right[:, members] = q
        left[members, :] = rf @ left[members, :]
        sub = left[np.ix_(members, [0, 1])]
        col = 0 if np.abs(sub[:, 0]).max() >= np.abs(sub[:, 1]).max() else 1
        v = sub[:, col]
        if np.linalg.norm(v) < 1e-300:
            continue
        h = _householder_concentrating(v)
        # left rows transform with H, right columns with H^{-1} = H
        left[members, :] = h @ left[members, :]
        right[:, members] = right[:, members] @ h
    return right, left, groups


def _refined_inverse(right: np.ndarray) -> np.ndarray:
    # one Newton step on the inverse knocks the biorthogonality defect
    # down to the product-evaluation noise floor
    left = np.linalg.inv(right)
    left = left + (np.eye(right.shape[0]) - left @ right) @ left
    return left


def _match_pairs(omegas: np.ndarray):
    """Involution pairing each omega with its -conj partner."""
    dim = omegas.size
    targets = -omegas.conj()
    pairing = np.full(dim, -1, dtype=int)
    free = list(range(dim))
    for k in range(dim):
        if pairing[k] >= 0:
            continue
        free = [l for l in free if pairing[l] < 0]
        best = min(free, key=lambda l: abs(omegas[l] - targets[k]))
        pairing[k] = best
        pairing[best] = k
    error = float(np.abs(omegas[pairing] - targets).max())
    return pairing, error


def _goldstone_cluster(
    omegas: np.ndarray,
    right: np.ndarray,
    phi: np.ndarray,
    n: int,
    tol_abs: float,
) -> tuple[int, ...]:
    """Indices of near-zero modes living in the condensate direction."""
    phi_unit = phi / np.linalg.norm(phi)
    r3 = right[2 : 2 + n, :]
    r4 = right[2 + n :, :]
    photon_frac = np.abs(right[0, :]) ** 2 + np.abs(right[1, :]) ** 2
    c3 = phi_unit @ r3
    c4 = phi_unit @ r4
    atom_norm = np.linalg.norm(r3, axis=0) ** 2 + np.linalg.norm(r4, axis=0) ** 2
    cond_frac = np.where(
        atom_norm > 0, (np.abs(c3) ** 2 + np.abs(c4) ** 2) / np.maximum(atom_norm, 1e-300), 0.0
    )
    mask = (np.abs(omegas) < tol_abs) & (photon_frac < 1e-6) & (cond_frac > 0.5)
    return tuple(int(i) for i in np.nonzero(mask)[0])


def _canonical_goldstone(m: np.ndarray, phi: np.ndarray, n: int):
    """Analytic basis for the phase/number sector.

    Returns (kind, v1, v2) with kind "chain" when M v2 = v1, M v1 = 0
    (the generic defective case) or "pair" when both are eigenvectors
    (decoupled cavity), or None when neither structure is present to
    solver accuracy.
    """
    dim = m.shape[0]
    scale = float(np.abs(m).max())
    r1 = np.zeros(dim, dtype=complex)
    r1[2 : 2 + n] = phi
    r1[2 + n :] = -phi
    r1 /= np.linalg.norm(r1)
    if np.abs(m @ r1).max() > 1e-7 * scale:
        return None
    r2 = np.linalg.lstsq(m, r1, rcond=None)[0]
    if np.linalg.norm(m @ r2 - r1) < 1e-7:
        r2 = r2 - (r1.conj() @ r2) * r1  # still a chain vector: M r1 = 0
        return ("chain", r1, r2)
    ra = np.zeros(dim, dtype=complex)
    ra[2 : 2 + n] = phi
    ra /= np.linalg.norm(ra)
    rb = np.zeros(dim, dtype=complex)
    rb[2 + n :] = phi
    rb /= np.linalg.norm(rb)
    if np.abs(m @ ra).max() < 1e-7 * scale and np.abs(m @ rb).max() < 1e-7 * scale:
        return ("pair", ra, rb)
    return None


def decompose(
    fm: FluctuationMatrix,
    *,
    cond_limit: float = 1e12,
    goldstone_tol: float = 1e-3,
) -> ModeDecomposition:
    """Full decomposition of a fluctuation matrix.

    Detects the condensate phase/number cluster among the near-zero
    modes and substitutes the analytic (chain or pair) basis for it
    before inverting, which keeps the left matrix well conditioned.
    """
    m = fm.m
    n = fm.n_grid
    omegas, right = np.linalg.eig(m)
    order = np.lexsort((omegas.imag, omegas.real))
    omegas = omegas[order].copy()
    right = right[:, order]
    right, _ = _canonical_columns(right)

    cluster = _goldstone_cluster(omegas, right, fm.phi, n, goldstone_tol)
    chain = False
    if len(cluster) == 2:
        canonical = _canonical_goldstone(m, fm.phi, n)
        if canonical is not None:
            kind, v1, v2 = canonical
            right[:, cluster[0]] = v1
            right[:, cluster[1]] = v2
            omegas[list(cluster)] = 0.0
            chain = kind == "chain"

    cond_r = float(np.linalg.cond(right))
    if not np.isfinite(cond_r) or cond_r > cond_limit:
        raise DecompositionError(
            f"right eigenvector basis is numerically singular "
            f"(cond = {cond_r:.3e} > {cond_limit:.1e}); "
            "use the Lyapunov second-moment oracle instead"
        )
    left = _refined_inverse(right)

    right, left, aligned = _align_degenerate_clusters(
        omegas, right, left, set(cluster)
    )
    if aligned:
        # rotated columns are no longer tied to single solver eigenvalues;
        # the Rayleigh quotient recovers each canonical mode's frequency
        m_right = m @ right
        for members in aligned:
            for k in members:
                omegas[k] = (left[k] @ m_right[:, k]) / (left[k] @ right[:, k])

    # rescaling columns by f and rows by 1/f keeps left @ right = I exactly
    factors = _physical_norm_factors(right, fm.dx)
    right = right * factors[None, :]
    left = left / factors[:, None]
    biorth_defect = float(np.abs(left @ right - np.eye(m.shape[0])).max())

    chain_coupling = 0.0 + 0.0j
    if chain:
        chain_coupling = complex(factors[cluster[1]] / factors[cluster[0]])

    pairing, pairing_error = _match_pairs(omegas)
    # G M G = -conj(M) holds exactly for the assembled matrix, so the true
    # spectrum is exactly (-conj)-symmetric; averaging each pair removes the
    # eigensolver's asymmetric noise, which otherwise leaks a spurious real
    # part into the near-zero pair denominators of the depletion sums
    omegas = 0.5 * (omegas - omegas[pairing].conj())

    residual = m @ right - right * omegas[None, :]
    if chain:
        # the chain column satisfies M r2 = c r1 instead of an eigen relation
        residual[:, cluster[1]] -= chain_coupling * right[:, cluster[0]]
    eigen_residual = float(np.abs(residual).max())

    return ModeDecomposition(
        omegas=omegas,
        right=right,
        left=left,
        cond_r=cond_r,
        pairing=pairing,
        pairing_error=pairing_error,
        goldstone=cluster,
        chain=chain,
        chain_coupling=chain_coupling,
        eigen_residual=eigen_residual,
        biorth_defect=biorth_defect,
        n_grid=n,
        dx=fm.dx,
        kappa=fm.kappa,
    )


def reconstruction_defect(dec: ModeDecomposition, m: np.ndarray) -> float:
    """Relative norm of M - R B L, with B the (quasi-)diagonal block."""
    block = np.diag(dec.omegas.astype(complex))
    if dec.chain:
        g1, g2 = dec.goldstone
        block[g1, g2] = dec.chain_coupling
    rebuilt = dec.right @ block @ dec.left
    return float(np.linalg.norm(rebuilt - m) / np.linalg.norm(m))


def classify_stability(
    dec: ModeDecomposition,
    *,
    tol_zero: float = 1e-6,
    tol_noise: float = 1e-10,
    damping_floor: float = 5e-12,
) -> StabilityReport:
    """Stability of the steady state from the mode spectrum.

    Unstable when any non-Goldstone mode grows faster than tol_zero.
    Otherwise the verdict rests on the noise-coupled modes only (photon
    weight |l1 l2| above tol_noise): a steady state exists when every
    such mode decays at a numerically resolvable rate (at least
    damping_floor).  No coupled mode at all (decoupled cavity), or a
    coupled one whose decay is unresolvable, means marginal.  Modes with
    negligible photon weight never receive noise, so their numerically
    zero damping is harmless for the existence of the steady state.
    """
    dim = dec.omegas.size
    non_g = np.array([k for k in range(dim) if k not in dec.goldstone], dtype=int)
    growth = dec.omegas[non_g].imag
    max_growth = float(growth.max())
    if max_growth > tol_zero:
        return StabilityReport("unstable", max_growth)
    weights = np.abs(dec.left[non_g, 0] * dec.left[non_g, 1])
    coupled = weights > tol_noise
    if coupled.any() and (growth[coupled] < -damping_floor).all():
        return StabilityReport("stable", max_growth)
    return StabilityReport("marginal", max_growth)


def petermann_factor(
    dec: ModeDecomposition,
    k: int,
    *,
    cluster_rtol: float = 1e-6,
    on_degenerate: str = "cluster_cond",
):
    """Excess-noise factor K_k = |l|^2 |r|^2 under (l, r) = 1.

    Equals 1 exactly for normal matrices and exceeds 1 when the
    eigenbasis is skewed.  For a mode inside a degenerate cluster the
    per-mode factor is ill defined; depending on ``on_degenerate`` this
    returns the condition number of the cluster's right-vector block
    ("cluster_cond"), raises ("raise"), or computes the raw product
    anyway ("raw").
    """
    omegas = dec.omegas
    scale = float(np.abs(omegas).max())
    cluster = np.nonzero(np.abs(omegas - omegas[k]) <= cluster_rtol * max(scale, 1.0))[0]
    if cluster.size > 1 and on_degenerate != "raw":
        cond = float(np.linalg.cond(dec.right[:, cluster]))
        if on_degenerate == "raise":
            raise DegenerateClusterError(
                f"mode {k} sits in a degenerate cluster of size {cluster.size} "
                f"(basis condition number {cond:.3e})",
                cluster=tuple(int(i) for i in cluster),
                condition_number=cond,
            )
        return cond
    return float(
        (np.linalg.norm(dec.left[k]) * np.linalg.norm(dec.right[:, k])) ** 2
    )


def petermann_raw(dec: ModeDecomposition) -> np.ndarray:
    """Raw K_k for every mode (no degeneracy handling), for sweep tables."""
    return (
        np.linalg.norm(dec.left, axis=1) * np.linalg.norm(dec.right, axis=0)
    ) ** 2


@dataclass
class SpectrumPoint:
    """One sweep point: either a full mode table or a failure record."""

    u0: float
    status: str
    omegas: np.ndarray | None = None
    abs_l1: np.ndarray | None = None
    abs_l2: np.ndarray | None = None
    petermann: np.ndarray | None = None
    stability: str | None = None


def solve_spectrum_point(
    params: SystemParams,
    grid: Grid,
    u0: float,
    solver_options: dict | None = None,
    *,
    subtract_mu: bool = True,
) -> SpectrumPoint:
    """Mean-field solve plus decomposition at a single light shift."""
    point_params = dc_replace(params, u0=float(u0))
    opts = dict(solver_options or {})
    try:
        state = solve_ground_state(point_params, grid, **opts)
        fm = build_matrix(state, point_params, grid, subtract_mu=subtract_mu)
        dec = decompose(fm)
    except (ConvergenceError, DecompositionError) as exc:
        return SpectrumPoint(u0=float(u0), status=f"error: {exc}")
    stability = classify_stability(dec)
    return SpectrumPoint(
        u0=float(u0),
        status="ok",
        omegas=dec.omegas,
        abs_l1=np.abs(dec.left[:, 0]),
        abs_l2=np.abs(dec.left[:, 1]),
        petermann=petermann_raw(dec),
        stability=stability.label,
    )


def spectrum_sweep(
    params: SystemParams,
    grid: Grid,
    u0_values,
    solver_options: dict | None = None,
    *,
    subtract_mu: bool = True,
) -> list[SpectrumPoint]:
    """Spectrum at each light shift of a monotone range; failures are
    recorded per point and the sweep continues."""
    return [
        solve_spectrum_point(params, grid, u0, solver_options, subtract_mu=subtract_mu)
        for u0 in u0_values
    ]
