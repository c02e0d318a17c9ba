"""Parameter container and validation for the cavity-condensate model.

Unit conventions used everywhere in this package: hbar = 1, all
frequencies and energies in units of the recoil frequency, lengths in
units of the inverse pump wavenumber (dimensionless coordinate x), time
in inverse recoil frequencies.  One half-wavelength lattice cell then
maps to x in [0, pi) and the kinetic operator is -d^2/dx^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ParameterError(ValueError):
    """A parameter set violates one of its invariants."""


@dataclass(frozen=True)
class SystemParams:
    """Physical and numerical parameters, frequencies in recoil units.

    delta_c     -- cavity detuning (pump frequency minus cavity resonance)
    kappa       -- cavity half-linewidth, must be positive
    eta         -- pump strength (any real; the sign only rotates the
                   phase of the cavity amplitude)
    u0          -- light shift per atom at a field antinode (negative
                   values trap the atoms at the antinodes)
    n_atoms     -- condensate atom number
    grid_points -- spatial grid size, even and at least 8 so the
                   plane-wave index set is symmetric
    """

    delta_c: float
    kappa: float
    eta: float
    u0: float
    n_atoms: int
    grid_points: int = 200


def validate(params: SystemParams) -> SystemParams:
    """Return ``params`` unchanged if every invariant holds.

    Raises ParameterError with a description of the first violation
    found.  Idempotent by construction.
    """
    for name in ("delta_c", "kappa", "eta", "u0"):
        value = getattr(params, name)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParameterError(f"{name} must be a real number, got {value!r}")
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite, got {value!r}")
    if params.kappa <= 0:
        raise ParameterError(f"kappa must be positive, got {params.kappa}")
    if not isinstance(params.n_atoms, int) or params.n_atoms < 1:
        raise ParameterError(f"n_atoms must be a positive integer, got {params.n_atoms}")
    if (
        not isinstance(params.grid_points, int)
        or params.grid_points < 8
        or params.grid_points % 2 != 0
    ):
        raise ParameterError(
            f"grid_points must be even and >= 8, got {params.grid_points}"
        )
    return params
