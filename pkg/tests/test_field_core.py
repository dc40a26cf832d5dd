import math
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acyl_lab.field_core import (
    CylinderGrid, ScalarField, cross_section_sup, fd_t, field_from_function,
    fit_decay_rate, make_grid, partial_deriv, read_field, spectral_deriv,
    t_integral, trapezoid_weights, weighted_sup_norm, write_field,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(0.0, 10.0, 11, 3, 4, 4)      # n_theta not a power of two
    with pytest.raises(ValueError):
        make_grid(-1.0, 10.0, 11, 4, 4, 4, half_cylinder=True)
    g = make_grid(0.0, 10.0, 101, 8, 4, 4, half_cylinder=True)
    assert g.h_t == pytest.approx(0.1)
    assert g.shape("ttheta") == (101, 8)
    assert g.shape("full") == (101, 8, 4, 4)


def test_field_shape_checked():
    g = make_grid(0.0, 5.0, 11, 4, 4, 4)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((11, 8)), "ttheta")
    with pytest.raises(ValueError):
        ScalarField(g, np.full(11, np.nan), "t")


def test_fd_t_exact_on_polynomials():
    # centred/one-sided first derivative is exact through quadratics,
    # the second derivative stencil through cubics
    t = np.linspace(-2.0, 3.0, 41)
    h = t[1] - t[0]
    d1 = fd_t(t ** 2 - 2.0 * t, h, order=1)
    d2 = fd_t(t ** 3 - 2.0 * t, h, order=2)
    assert np.max(np.abs(d1 - (2.0 * t - 2.0))) < 1e-12
    assert np.max(np.abs(d2 - 6.0 * t)) < 1e-9


def test_spectral_deriv_trig():
    n = 32
    th = np.arange(n) * 2.0 * np.pi / n
    u = np.sin(th)
    d1 = spectral_deriv(u, 0, 2.0 * np.pi, order=1)
    d2 = spectral_deriv(u, 0, 2.0 * np.pi, order=2)
    assert np.max(np.abs(d1 - np.cos(th))) < 1e-13
    assert np.max(np.abs(d2 + np.sin(th))) < 1e-12
    # unit-period torus direction
    x = np.arange(n) / n
    v = np.cos(2.0 * np.pi * x)
    dv = spectral_deriv(v, 0, 1.0, order=1)
    assert np.max(np.abs(dv + 2.0 * np.pi * np.sin(2.0 * np.pi * x))) < 1e-11


def test_weighted_sup_norm_closed_form():
    # [DERIVED] for u = t e^{-t} and weight delta = 1/2 the weighted sup
    # is max_t t e^{-t/2} = 2/e, attained at t = 2 (a grid node here)
    g = make_grid(0.0, 12.0, 241, 4, 4, 4, half_cylinder=True)
    f = field_from_function(g, lambda t: t * np.exp(-t), "t")
    rep = weighted_sup_norm(f, 0.5)
    assert rep.value == pytest.approx(2.0 / math.e, abs=1e-12)
    assert rep.window == (0.0, 12.0)
    with pytest.raises(ValueError):
        weighted_sup_norm(f, 0.5, k=3)


def test_fit_decay_rate_planted():
    g = make_grid(0.0, 15.0, 301, 4, 4, 4, half_cylinder=True)
    f = field_from_function(g, lambda t: 3.0 * np.exp(-1.3 * t), "t")
    rate, intercept, resid = fit_decay_rate(f)
    assert rate == pytest.approx(1.3, abs=1e-10)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-9)
    assert resid < 1e-10
    zero = ScalarField(g, np.zeros(301), "t")
    assert fit_decay_rate(zero)[0] == math.inf


def test_cross_section_sup_reduces():
    g = make_grid(0.0, 4.0, 9, 8, 4, 4)
    f = field_from_function(g, lambda t, th: np.exp(-t) * np.cos(th),
                            "ttheta")
    s = cross_section_sup(f)
    assert s.shape == (9,)
    assert np.allclose(s, np.exp(-g.t), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["t", "ttheta", "tx", "full"]),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_field_io_roundtrip_bit_exact(symmetry, seed):
    g = make_grid(-3.0, 3.0, 13, 4, 4, 4)
    rng = np.random.default_rng(seed)
    f = ScalarField(g, rng.standard_normal(g.shape(symmetry)), symmetry)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "field.acylf")
        write_field(path, f)
        back = read_field(path)
    assert back.symmetry == symmetry
    assert np.array_equal(back.values, f.values)
    assert back.grid == g


def test_field_io_complex(tmp_path):
    g = make_grid(0.0, 1.0, 9, 4, 4, 4)
    vals = np.exp(1j * np.linspace(0.0, 1.0, 9))
    f = ScalarField(g, vals, "t")
    write_field(tmp_path / "c.acylf", f)
    back = read_field(tmp_path / "c.acylf")
    assert np.array_equal(back.values, vals)


def test_field_io_malformed(tmp_path):
    g = make_grid(0.0, 1.0, 9, 4, 4, 4)
    f = ScalarField(g, np.zeros(9), "t")
    p = tmp_path / "f.acylf"
    write_field(p, f)
    raw = p.read_bytes()
    bad = tmp_path / "bad.acylf"
    bad.write_bytes(raw.replace(b"ACYLF1", b"NOPE42", 1))
    with pytest.raises(ValueError, match="bad magic"):
        read_field(bad)
    trunc = tmp_path / "trunc.acylf"
    trunc.write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="dimension mismatch"):
        read_field(trunc)


def test_trapezoid_quadrature():
    n, h = 1001, 1.0 / 1000
    t = np.linspace(0.0, 1.0, n)
    w = trapezoid_weights(n, h)
    assert np.dot(w, t ** 2) == pytest.approx(1.0 / 3.0, abs=1e-6)
    g = make_grid(0.0, 1.0, n, 4, 4, 4, half_cylinder=True)
    assert t_integral(g, np.ones(n)) == pytest.approx(1.0, abs=1e-13)


def test_partial_deriv_mixed():
    g = make_grid(0.0, 2.0, 81, 16, 4, 4)
    f = field_from_function(g, lambda t, th: np.sin(th) * t ** 2, "ttheta")
    d = partial_deriv(f, "theta", 1)
    truth = np.cos(g.theta)[None, :] * (g.t ** 2)[:, None]
    assert np.max(np.abs(d - truth)) < 1e-10
