import math

import numpy as np
import pytest

from acyl_lab.cyl_elliptic import (
    CokernelError, cokernel_conditions, critical_weights,
    cross_section_eigenvalues, dbar_residual, degeneracy_scan,
    first_positive_critical, is_critical, laplacian_residual,
    normalize_kernel, solve_dbar_cylinder, solve_dbar_mode,
    solve_laplacian_mode, solve_laplacian_weighted,
    solve_laplacian_zero_mode,
)
from acyl_lab.field_core import ScalarField, field_from_function, make_grid


def test_cross_section_spectra():
    circ = cross_section_eigenvalues("circle", 10.0)
    assert circ[0][0] == 0.0 and circ[0][1] == 1
    assert (1.0, 2) in circ and (4.0, 2) in circ
    ct = cross_section_eigenvalues("circle_torus", 50.0)
    # 4 pi^2 (m^2 + n^2) joins the circle modes on the product section
    vals = [v for v, _ in ct]
    assert any(abs(v - 4.0 * math.pi ** 2) < 1e-9 for v in vals)


def test_critical_weights_laplacian():
    ws = critical_weights("laplacian", "circle", (-5.0, 5.0))
    deltas = [w.delta for w in ws]
    assert deltas == [float(k) for k in range(-5, 6)]
    # two homogeneous solutions per weight: cos/sin pairs at k != 0 and
    # the polynomials {1, t} at the zero weight
    for w in ws:
        assert w.solution_count == 2
    assert first_positive_critical("laplacian", "circle") == 1.0
    assert is_critical("laplacian", "circle", 3.0)
    assert not is_critical("laplacian", "circle", 2.5)


def test_critical_weights_dbar():
    ws = critical_weights("dbar", "circle", (-3.0, 3.0))
    assert [w.delta for w in ws] == [float(k) for k in range(-3, 4)]
    assert all(w.solution_count == 1 for w in ws)


def test_degeneracy_scan_dichotomy():
    deltas = np.linspace(-3.0, 3.0, 121)
    cond = degeneracy_scan("laplacian", "circle", deltas)
    spacing = deltas[1] - deltas[0]
    near = np.array([min(abs(d - k) for k in range(-3, 4))
                     <= 0.5 * spacing + 1e-12 for d in deltas])
    assert np.all((cond > 1e6) == near)


def test_cokernel_conditions():
    conds = cokernel_conditions("bi_infinite", 0.5)
    assert [c.profile for c in conds] == ["1", "t"]
    conds = cokernel_conditions("half_dirichlet", 0.5)
    assert [c.profile for c in conds] == ["t"]
    # crossing the first critical weight adds exponential functionals
    conds = cokernel_conditions("bi_infinite", 1.5)
    assert sum(1 for c in conds if c.profile == "exp") == 2
    with pytest.raises(ValueError):
        cokernel_conditions("bi_infinite", 1.0)
    with pytest.raises(ValueError):
        cokernel_conditions("bi_infinite", -0.5)
    with pytest.raises(ValueError):
        cokernel_conditions("quarter", 0.5)


def test_laplacian_mode_manufactured():
    # u'' - lam u = rhs with planted decaying u; transparent closures
    # reproduce the exponential profile to discretisation accuracy
    t = np.linspace(0.0, 20.0, 801)
    lam = 4.0
    u_true = np.exp(-1.2 * t)
    rhs = (1.2 ** 2 - lam) * u_true
    u = solve_laplacian_mode(t, lam, rhs, fallback_rate=1.2)
    assert np.max(np.abs(u - u_true)) < 1e-4
    with pytest.raises(ValueError):
        solve_laplacian_mode(t, -1.0, rhs)


def test_zero_mode_solver():
    t = np.linspace(-10.0, 10.0, 801)
    h = t[1] - t[0]
    # rhs with zero mean and zero t-moment so the Neumann problem is
    # solvable; compare second differences against the data
    rhs = np.exp(-t ** 2) * (4.0 * t ** 2 - 2.0)   # (e^{-t^2})''
    u = solve_laplacian_zero_mode(t, rhs, "bi_infinite")
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h ** 2
    assert np.max(np.abs(d2[5:-5] - rhs[1:-1][5:-5])) < 1e-3


def test_dbar_mode_closed_form():
    # (d/dt - k) f = rhs for the decaying side: planted f = e^{-2t}
    t = np.linspace(0.0, 12.0, 481)
    k = 1
    f_true = np.exp(-2.0 * t)
    rhs = -2.0 * f_true - k * f_true
    f = solve_dbar_mode(t, k, rhs)
    assert np.max(np.abs(f - f_true)) < 5e-4


def test_dbar_cylinder_residual_and_bound():
    g = make_grid(0.0, 14.0, 561, 16, 4, 4, half_cylinder=True)
    F = field_from_function(
        g, lambda t, th: np.exp(-1.3 * t + 2.0j * th), "ttheta")
    f, rep = solve_dbar_cylinder(F, 0.5)
    assert rep["relative_residual"] < 1e-6
    assert dbar_residual(f, F) == rep["relative_residual"]
    assert rep["bound_constant"] > 0.0
    assert rep["norm_solution"] <= rep["bound_constant"] * rep["norm_data"] \
        * (1.0 + 1e-12)
    with pytest.raises(ValueError):
        solve_dbar_cylinder(F, 1.0)        # integer weight is critical


def test_weighted_laplacian_solve_and_cokernel():
    g = make_grid(-12.0, 12.0, 481, 16, 4, 4)
    F = field_from_function(
        g, lambda t, th: np.exp(-t ** 2) * np.cos(th), "ttheta")
    u, satisfied = solve_laplacian_weighted(F, 0.5, "bi_infinite")
    assert laplacian_residual(u, F) < 1e-6
    # the zero mode of this datum vanishes, so both functionals are
    # satisfied to roundoff and get recorded
    assert len(satisfied) == 2
    assert all(abs(val) < 1e-10 for _, val in satisfied)
    # a pure zero-mode datum with nonzero mean violates <f, 1>
    bad = field_from_function(g, lambda t, th: np.exp(-t ** 2)
                              * np.ones_like(th), "ttheta")
    with pytest.raises(CokernelError):
        solve_laplacian_weighted(bad, 0.5, "bi_infinite")
    with pytest.raises(ValueError):
        solve_laplacian_weighted(F, 1.5, "bi_infinite")


def test_normalize_kernel_removes_affine():
    g = make_grid(-5.0, 5.0, 201, 4, 4, 4)
    u = field_from_function(g, lambda t: np.exp(-t ** 2) + 0.7 - 0.3 * t,
                            "t")
    v = normalize_kernel(u)
    w = normalize_kernel(field_from_function(g, lambda t: np.exp(-t ** 2),
                                             "t"))
    assert np.max(np.abs(v.values - w.values)) < 1e-12
