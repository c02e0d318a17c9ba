import pytest

from bec_cavity import (
    SystemParams,
    build_matrix,
    decompose,
    make_grid,
    solve_ground_state,
    validate,
)

_CACHE = {}


def run_pipeline(
    u0=-0.5,
    ng=16,
    delta_c=-1000.0,
    kappa=100.0,
    eta=1000.0,
    n_atoms=1000,
    subtract_mu=True,
    **solver_options,
):
    """Solve + build + decompose, cached across the whole test session."""
    key = (
        u0, ng, delta_c, kappa, eta, n_atoms, subtract_mu,
        tuple(sorted(solver_options.items())),
    )
    if key not in _CACHE:
        params = validate(
            SystemParams(
                delta_c=delta_c, kappa=kappa, eta=eta, u0=u0,
                n_atoms=n_atoms, grid_points=ng,
            )
        )
        grid = make_grid(ng)
        state = solve_ground_state(params, grid, **solver_options)
        fm = build_matrix(state, params, grid, subtract_mu=subtract_mu)
        dec = decompose(fm)
        _CACHE[key] = (params, grid, state, fm, dec)
    return _CACHE[key]


@pytest.fixture(scope="session")
def pipeline():
    return run_pipeline
