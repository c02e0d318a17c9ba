"""Periodic spatial grid on one half-wavelength cell.

The cell is x in [0, pi), sampled uniformly with the endpoint excluded.
Plane waves exp(i*2n*x) are periodic on the cell, so the wavenumbers are
the even integers and the free-particle energies are 4 n^2 in recoil
units.  The quadrature rule is the periodic trapezoid rule (identical to
the midpoint rule on a uniform periodic grid), which is spectrally
accurate for smooth periodic integrands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with quadrature weight and plane-wave set."""

    n: int
    points: np.ndarray
    dx: float
    wavenumbers: np.ndarray


def make_grid(n_points: int) -> Grid:
    """Build the grid with x_j = j*pi/n, j = 0 .. n-1."""
    if n_points < 8 or n_points % 2 != 0:
        raise ValueError(f"grid size must be even and >= 8, got {n_points}")
    points = np.arange(n_points) * (np.pi / n_points)
    # fftfreq(n, 1/n) enumerates the integers 0..n/2-1, -n/2..-1 in FFT order
    wavenumbers = 2.0 * np.fft.fftfreq(n_points, 1.0 / n_points)
    points.setflags(write=False)
    wavenumbers.setflags(write=False)
    return Grid(n=n_points, points=points, dx=np.pi / n_points, wavenumbers=wavenumbers)


def potential_profile(grid: Grid, u0: float) -> np.ndarray:
    """Lattice potential u0 * cos(x)^2 sampled on the grid."""
    return u0 * np.cos(grid.points) ** 2


def kinetic_matrix(grid: Grid) -> np.ndarray:
    """Dense matrix of -d^2/dx^2 in the point basis.

    Built by conjugating diag(q^2) in the plane-wave basis with the DFT,
    then symmetrized, so its eigenvalues are the exact free-particle
    energies 4 n^2 up to roundoff.
    """
    q2 = grid.wavenumbers**2
    mat = np.fft.ifft(q2[:, None] * np.fft.fft(np.eye(grid.n), axis=0), axis=0)
    mat = mat.real
    return 0.5 * (mat + mat.T)


def integrate(grid: Grid, values: np.ndarray) -> complex:
    """Quadrature of a grid function: sum of the samples times dx."""
    values = np.asarray(values)
    if values.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} samples, got shape {values.shape}")
    return complex(values.sum() * grid.dx)
