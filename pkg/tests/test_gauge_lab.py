import math

import numpy as np
import pytest

from acyl_lab.field_core import field_from_function, make_grid
from acyl_lab.gauge_lab import (
    DisplacementMode, ObstructionError, diffeo_apply, diffeo_jacobian,
    ddbar_lemma_solve, extract_expansion, find_holomorphic_cylinders,
    gauge_structure, kappa_regularity_check, make_perturbed_structure,
    planted_image_deviation, torsion_residual,
)
from acyl_lab.kahler_kernel import Form11Field, iddbar


def _spec(amp=0.02):
    return [DisplacementMode("x", amp, 1.0, phase=0.3),
            DisplacementMode("y", 0.8 * amp, 1.2, phase=1.1)]


def test_displacement_mode_validation():
    with pytest.raises(ValueError):
        DisplacementMode("z", 0.1, 1.0)


def test_diffeo_jacobian_matches_differences():
    spec = _spec(0.05)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.5, 3.0, size=(40, 4))
    J = diffeo_jacobian(spec, pts)
    eps = 1e-6
    for col in range(4):
        dp = np.zeros(4)
        dp[col] = eps
        num = (diffeo_apply(spec, pts + dp) - diffeo_apply(spec, pts - dp)) \
            / (2.0 * eps)
        assert np.max(np.abs(num - J[..., :, col])) < 1e-7


def test_structure_certification():
    s = make_perturbed_structure(_spec(), 0.9)
    assert s.j_squared_error < 1e-12
    assert s.min_jacobian_det > 0.2
    assert s.measured_rate >= 0.9
    with pytest.raises(ValueError, match="too large"):
        make_perturbed_structure([DisplacementMode("t", 5.0, 0.2)], 0.1)
    with pytest.raises(ValueError, match="decay rate"):
        make_perturbed_structure(_spec(), 5.0)


def test_cylinders_on_unperturbed_structure():
    s = make_perturbed_structure([], 1.0)
    fam = find_holomorphic_cylinders(s, n_t=61, n_theta=8, torus_shape=(4, 4),
                                     length=6.0)
    assert np.max(np.abs(fam.zeta1)) < 1e-14
    assert np.max(np.abs(fam.zeta2)) < 1e-14
    assert fam.residual < 1e-12


def test_cylinder_recovery_and_torsion():
    s = make_perturbed_structure(_spec(), 0.9)
    fam = find_holomorphic_cylinders(s, n_theta=32, torus_shape=(4, 4))
    assert fam.residual < 1e-8
    assert planted_image_deviation(s, fam) < 1e-6
    Jg = gauge_structure(s, fam)
    assert torsion_residual(Jg, fam.t) < 1e-8


def test_extract_expansion_planted():
    t = np.linspace(2.0, 14.0, 241)
    th = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
    T, TH = np.meshgrid(t, th, indexing="ij")
    K1 = 0.7 - 0.2j
    w = np.exp(-T - 1j * TH)
    K = K1 * w + 0.3 * np.exp(-1.5 * T) * np.exp(-2j * TH)
    rec, slope, spread = extract_expansion(K, t, 0.5)
    assert abs(rec - K1) < 1e-10
    assert spread < 1e-10
    assert slope == pytest.approx(1.5, abs=0.02)
    # a slowly decaying structure cannot be separated
    with pytest.raises(ValueError, match="insufficient decay"):
        extract_expansion(np.exp(-0.3 * T) * np.exp(-1j * TH), t, 0.5)


def test_ddbar_roundtrip_and_obstruction():
    g = make_grid(0.0, 12.0, 121, 8, 8, 8, half_cylinder=True)
    xi = field_from_function(
        g, lambda t, th, x, y: np.exp(-0.8 * np.sqrt(1.0 + t ** 2))
        * (np.cos(th) + np.cos(2.0 * np.pi * x) * np.cos(2.0 * np.pi * y)),
        "full")
    eta = iddbar(xi)
    sol = ddbar_lemma_solve(eta, 0.8)
    assert sol.residual < 1e-8
    assert sol.xi_slope > 0.5
    # a constant vertical part has nonzero fiberwise mean: obstructed
    bad = Form11Field(g, eta.h11, eta.h12, eta.h22 + 1.0, "full")
    with pytest.raises(ObstructionError):
        ddbar_lemma_solve(bad, 0.8)


def test_kappa_regularity():
    t = np.linspace(1.0, 6.0, 201)
    th = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
    T, TH = np.meshgrid(t, th, indexing="ij")
    w = np.exp(-T - 1j * TH)
    rep = kappa_regularity_check(2.0 * w + 0.5 * w ** 2, t)
    assert rep["transport_residual"] < 1e-10
    assert rep["negative_coefficient"] < 1e-10
    assert rep["slope"] == pytest.approx(1.0, abs=0.05)
    # w-bar fails the transport equation outright
    with pytest.raises(ValueError, match="transport"):
        kappa_regularity_check(np.conj(w), t)
    # a holomorphic datum with a pole is flagged through the negative
    # Laurent coefficient
    rep = kappa_regularity_check(w + 0.5 / w, t)
    assert rep["negative_coefficient"] > 1e-3
