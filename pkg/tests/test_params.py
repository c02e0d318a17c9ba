import math

import pytest

from bec_cavity import ParameterError, SystemParams, validate


def fig_params(**overrides):
    base = dict(
        delta_c=-1000.0, kappa=100.0, eta=1000.0, u0=-0.5,
        n_atoms=1000, grid_points=200,
    )
    base.update(overrides)
    return SystemParams(**base)


def test_reference_parameter_set_is_valid():
    p = fig_params()
    assert validate(p) is p


def test_zero_kappa_rejected():
    with pytest.raises(ParameterError, match="kappa must be positive"):
        validate(fig_params(kappa=0.0))


def test_negative_kappa_rejected():
    with pytest.raises(ParameterError, match="kappa"):
        validate(fig_params(kappa=-3.0))


def test_odd_grid_rejected():
    with pytest.raises(ParameterError, match="grid_points"):
        validate(fig_params(grid_points=7))


def test_small_grid_rejected():
    with pytest.raises(ParameterError, match="grid_points"):
        validate(fig_params(grid_points=6))


def test_zero_atom_number_rejected():
    with pytest.raises(ParameterError, match="n_atoms"):
        validate(fig_params(n_atoms=0))


def test_nonfinite_frequency_rejected():
    with pytest.raises(ParameterError, match="finite"):
        validate(fig_params(delta_c=math.inf))
    with pytest.raises(ParameterError, match="finite"):
        validate(fig_params(eta=math.nan))


def test_negative_eta_allowed():
    # figure conventions use eta = -delta_c, which can be any real
    validate(fig_params(eta=-250.0))


def test_validate_is_idempotent():
    p = fig_params()
    assert validate(validate(p)) == p
