import numpy as np
import pytest

from bec_cavity import (
    DegenerateClusterError,
    classify_stability,
    decompose,
    eigendecompose,
    petermann_factor,
    petermann_raw,
    reconstruction_defect,
    spectrum_sweep,
    solve_spectrum_point,
)
from conftest import run_pipeline


def test_eigendecompose_diagonal_matrix():
    m = np.diag([1.0 + 2.0j, 3.0 + 0.0j])
    omegas, right, left, cond_r = eigendecompose(m)
    assert np.allclose(sorted(omegas, key=lambda z: z.real), [1.0 + 2.0j, 3.0])
    assert np.abs(left @ right - np.eye(2)).max() < 1e-14
    assert np.abs(np.abs(right) - np.eye(2)).max() < 1e-14
    assert cond_r == pytest.approx(1.0, rel=1e-12)


def test_eigendecompose_random_matrix_diagonalizes():
    rng = np.random.default_rng(12)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    omegas, right, left, _ = eigendecompose(m)
    diag = left @ m @ right
    assert np.abs(diag - np.diag(omegas)).max() < 1e-9


def test_zero_coupling_spectrum(pipeline):
    *_, dec = pipeline(u0=0.0, ng=16)
    omegas = dec.omegas
    photon = omegas[np.argmin(np.abs(omegas - (1000.0 - 100.0j)))]
    assert abs(photon - (1000.0 - 100.0j)) < 1e-8 * abs(1000.0 - 100.0j)
    for n in (1, 2, 3):
        target = 4.0 * n**2
        assert (np.abs(omegas - target) < 1e-8 * target).sum() >= 2


def test_pairing_is_a_covering_involution(pipeline):
    *_, dec = pipeline(u0=-0.5, ng=16)
    pairing = dec.pairing
    assert np.array_equal(pairing[pairing], np.arange(pairing.size))
    scale = np.abs(dec.omegas).max()
    mism = np.abs(dec.omegas[pairing] + dec.omegas.conj())
    assert mism.max() <= 1e-8 * scale


def test_biorthonormality_and_reconstruction(pipeline):
    *_, fm, dec = pipeline(u0=-0.5, ng=16)
    assert dec.biorth_defect <= 1e-10
    assert reconstruction_defect(dec, fm.m) < 1e-8


def test_goldstone_cluster_detected(pipeline):
    *_, dec = pipeline(u0=-0.5, ng=16)
    assert len(dec.goldstone) == 2
    assert dec.chain
    assert max(abs(dec.omegas[k]) for k in dec.goldstone) < 1e-6
    # the zero mode proper carries no photon component at all
    photon = min(float(np.abs(dec.right[:2, k]).max()) for k in dec.goldstone)
    assert photon <= 1e-8
    # and the cluster's left space contains a photonless row
    left_photon = min(
        float(np.abs(dec.left[k, :2]).max() / np.linalg.norm(dec.left[k]))
        for k in dec.goldstone
    )
    assert left_photon <= 1e-8


def test_petermann_of_normal_spectrum_is_unity(pipeline):
    *_, dec = pipeline(u0=0.0, ng=16)
    raw = petermann_raw(dec)
    assert raw.min() >= 1.0 - 1e-10
    assert raw.max() <= 1.0 + 1e-6


def test_petermann_isolated_mode(pipeline):
    *_, dec = pipeline(u0=0.0, ng=16)
    photon = int(np.argmin(np.abs(dec.omegas - (1000.0 - 100.0j))))
    assert petermann_factor(dec, photon) == pytest.approx(1.0, abs=1e-9)


def test_petermann_degenerate_cluster_reports_condition(pipeline):
    *_, dec = pipeline(u0=0.0, ng=16)
    motional = int(np.argmin(np.abs(dec.omegas - 4.0)))
    cond = petermann_factor(dec, motional)  # default: cluster condition number
    assert cond == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(DegenerateClusterError):
        petermann_factor(dec, motional, on_degenerate="raise")


def test_petermann_exceeds_unity_near_crossing():
    *_, dec = run_pipeline(u0=-1.0, ng=64)
    assert petermann_raw(dec).max() > 1.0 + 1e-6
    assert petermann_raw(dec).min() >= 1.0 - 1e-10


def test_stability_plateau_is_stable(pipeline):
    *_, dec = pipeline(u0=-0.5, ng=16)
    report = classify_stability(dec)
    assert report.label == "stable"
    assert report.max_growth_rate <= 1e-6


def test_stability_decoupled_is_marginal(pipeline):
    *_, dec = pipeline(u0=0.0, ng=16)
    report = classify_stability(dec)
    assert report.label == "marginal"
    assert abs(report.max_growth_rate) <= 1e-6


def test_stability_beyond_critical_is_unstable():
    *_, dec = run_pipeline(u0=-1.2, ng=64)
    report = classify_stability(dec)
    assert report.label == "unstable"
    assert report.max_growth_rate > 1e-6


def test_spectrum_sweep_rows(pipeline):
    params, grid, *_ = pipeline(u0=0.0, ng=16)
    points = spectrum_sweep(params, grid, [0.0, -0.25, -0.5])
    assert [p.u0 for p in points] == [0.0, -0.25, -0.5]
    assert all(p.status == "ok" for p in points)
    # photon line at (-delta_c, -kappa) when the coupling is off
    omegas0 = points[0].omegas
    k = int(np.argmin(np.abs(omegas0 - (1000.0 - 100.0j))))
    assert omegas0[k].real == pytest.approx(1000.0, rel=1e-10)
    assert omegas0[k].imag == pytest.approx(-100.0, rel=1e-10)
    # low-lying motional branches stay flat across the plateau (the weak
    # lattice splits the lowest pair by a few percent at u0 = -0.5)
    for point in points:
        lowest = np.sort(point.omegas.real[point.omegas.real > 2.0])[0]
        assert lowest == pytest.approx(4.0, rel=0.05)


def test_spectrum_sweep_records_failures(pipeline):
    params, grid, *_ = pipeline(u0=0.0, ng=16)
    point = solve_spectrum_point(params, grid, -0.5, {"max_iters": 2})
    assert point.status.startswith("error:")
    assert point.omegas is None
