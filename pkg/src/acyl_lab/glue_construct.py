"""Glued background Kahler metric on the model P^1 x T^2 minus two tori.

The open manifold is a single global cylinder R x S^1 x T^2 via
w = exp(-t - i theta) near one puncture and w' = exp(t - i theta) near
the other; both ends are glued with identical parameters, so every
background quantity is an even function of t.

Ingredients, all radially symmetric in w and flat along the torus:

* a Fubini-Study type base term i del dbar log(1 + |w|^2),
* the cylinder potential u(w) = (log|w| - log r)^2 interpolated by a
  cutoff chi on the annulus r - s < |w| < r + s and scaled by the
  calibration constant lambda,
* a compactly supported radial bump form beta of amplitude t_b on
  r - 2s < |w| < r + 2s, with full strength on r - s < |w| < r + s.

Conventions follow kahler_kernel: dt^dtheta carries h11 = 1/2, the
unit torus form 2 dx^dy carries h22 = 1, top powers are 4 det(h) and
the reference meromorphic volume density is 4.  Matching the deep-end
density therefore fixes lambda * h22 = 2, i.e. lambda = 2 here.

Background coefficients are assembled from closed-form derivatives, so
grid resolution only matters for quadratures and for the downstream
Monge-Ampere solve, never for the sharp annulus features themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field_core import CylinderGrid, ScalarField, fit_decay_rate, \
    trapezoid_weights
from .kahler_kernel import Form11Field, VolumeDensity, top_power

TWO_PI = 2.0 * math.pi

#: torus coefficient h22 of the flat torus form 2 dx^dy
TORUS_COEFF = 1.0
#: calibration constant: deep-end density 2*lambda*h22 equals the
#: reference density 4
LAMBDA = 2.0 / TORUS_COEFF


# ---------------------------------------------------------------------------
# radial profiles (disk picture)

@dataclass
class RadialProfile:
    """Samples of a radial function on a log-spaced grid over (0, 1]."""

    rho: np.ndarray
    values: np.ndarray
    support: tuple = (0.0, 1.0)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.rho.shape != self.values.shape:
            raise ValueError("radius and value arrays must match")


def make_radial_grid(n=20000, rho_min=1e-6):
    """Log-spaced radii over (rho_min, 1]."""
    return np.exp(np.linspace(math.log(rho_min), 0.0, n))


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def radial_potential(g: RadialProfile):
    """Radial potential with half the plane Laplacian equal to g.

    Returns (G, log_coeff, G_hat) with

        G(rho)     = int_1^rho (2/p) int_1^p g(q) q dq dp,
        G_hat(rho) = int_1^rho (2/p) int_0^p g(q) q dq dp,
        G = log_coeff * log(rho) + G_hat,
        log_coeff  = -2 int_0^1 g(q) q dq.

    G vanishes identically outside the support radius of g.
    """
    rho, val = g.rho, g.values
    if g.support[1] >= 1.0 - 1e-12 and np.abs(val[-1]) > 0:
        raise ValueError("bump support must stay inside the unit disk")
    inner_from0 = _cumtrapz(val * rho, rho)          # int_0^p g q dq
    total = inner_from0[-1]                           # int_0^1 g q dq
    inner_from1 = inner_from0 - total                 # int_1^p g q dq
    Gv = _cumtrapz(2.0 * inner_from1 / rho, rho)
    Gv -= Gv[-1]                                      # G(1) = 0
    log_coeff = -2.0 * total
    G = RadialProfile(rho, Gv, g.support)
    Ghat = RadialProfile(rho, Gv - log_coeff * np.log(rho), g.support)
    return G, float(log_coeff), Ghat


def profile_psi(g: RadialProfile):
    """Running maximum of |g| and the inner vanishing radius rho_0."""
    mag = np.abs(g.values)
    psi = np.maximum.accumulate(mag)
    nz = np.nonzero(mag > 0.0)[0]
    rho0 = g.rho[nz[0] - 1] if nz.size and nz[0] > 0 else \
        (g.rho[-1] if nz.size == 0 else 0.0)
    return psi, float(rho0)


def derivative_bounds_check(g: RadialProfile):
    """Pointwise first and second derivative bounds for G_hat.

    Checks |dG_hat/drho| <= psi(rho) (rho^2 - rho0^2)/rho and the
    Hessian magnitude sqrt(G_hat_rr^2 + (G_hat_r/rho)^2) against
    sqrt(10) psi(rho).  Returns the two maximal ratios; both should not
    exceed one by more than quadrature slack.
    """
    rho, val = g.rho, g.values
    inner = _cumtrapz(val * rho, rho)
    ghat_r = 2.0 * inner / rho
    ghat_rr = -ghat_r / rho + 2.0 * val
    psi, rho0 = profile_psi(g)
    grad_bound = psi * np.clip(rho ** 2 - rho0 ** 2, 0.0, None) / rho
    hess = np.sqrt(ghat_rr ** 2 + (ghat_r / rho) ** 2)
    hess_bound = math.sqrt(10.0) * psi
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(grad_bound > 0, np.abs(ghat_r) / grad_bound, 0.0)
        r2 = np.where(hess_bound > 0, hess / hess_bound, 0.0)
    ok1 = np.all(np.abs(ghat_r)[grad_bound == 0] < 1e-14)
    ok2 = np.all(hess[hess_bound == 0] < 1e-14)
    return {
        "grad_ratio": float(np.max(r1)),
        "hess_ratio": float(np.max(r2)),
        "rho0": rho0,
        "degenerate_ok": bool(ok1 and ok2),
    }


def random_bump_profile(rng, rho, rho_lo=1e-3, rho_hi=0.8, n_bumps=3):
    """A random compactly supported smooth radial profile."""
    val = np.zeros_like(rho)
    lo_used, hi_used = rho_hi, rho_lo
    for _ in range(rng.integers(1, n_bumps + 1)):
        c = rng.uniform(rho_lo * 3, rho_hi * 0.8)
        w = rng.uniform(0.2 * c, 0.8 * c)
        a = rng.uniform(-2.0, 2.0)
        x = (rho - c) / w
        inside = np.abs(x) < 1.0
        b = np.zeros_like(rho)
        b[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
        val += a * b
        lo_used = min(lo_used, c - w)
        hi_used = max(hi_used, c + w)
    return RadialProfile(rho, val, (max(lo_used, 0.0), min(hi_used, 1.0)))


# ---------------------------------------------------------------------------
# cutoff and bump in cylindrical coordinates

def _smoothstep7(x):
    """C^3 monotone step from 0 at x<=0 to 1 at x>=1."""
    x = np.clip(x, 0.0, 1.0)
    return ((( -20.0 * x + 70.0) * x - 84.0) * x + 35.0) * x ** 4


def _smoothstep7_d(x, order):
    xx = np.clip(x, 0.0, 1.0)
    if order == 1:
        core = (((-140.0 * xx + 420.0) * xx - 420.0) * xx + 140.0) * xx ** 3
    elif order == 2:
        core = (((-840.0 * xx + 2100.0) * xx - 1680.0) * xx + 420.0) * xx ** 2
    else:
        raise ValueError
    core = np.where((x <= 0.0) | (x >= 1.0), 0.0, core)
    return core


def cutoff_chi(t, r, s):
    """Cutoff chi(t): 1 deep in the cylinder end (|w| < r - s), 0 on the
    compact side (|w| > r + s), with a smooth polynomial transition in
    log|w|.  Returns (chi, chi_t, chi_tt)."""
    t_lo = -math.log(r + s)
    t_hi = -math.log(r - s)
    width = t_hi - t_lo
    x = (np.asarray(t, dtype=float) - t_lo) / width
    chi = _smoothstep7(x)
    chi_t = _smoothstep7_d(x, 1) / width
    chi_tt = _smoothstep7_d(x, 2) / width ** 2
    return chi, chi_t, chi_tt


def cylinder_potential_u(t, r):
    """u = (log|w| - log r)^2 as a function of t, with derivatives."""
    t_r = -math.log(r)
    u = (np.asarray(t, dtype=float) - t_r) ** 2
    return u, 2.0 * (t - t_r), np.full_like(u, 2.0)


def cylinder_cutoff_potential(r, s, grid: CylinderGrid, enforce_resolution=True):
    """The interpolated cylinder potential chi * u as a t-only field.

    Returns (field, report).  The report carries the measured annulus
    bound sup |u| <= C |log r| s^2 / r^2 and the scaled cutoff
    derivative constants.
    """
    if not 0.0 < s < r < 1.0:
        raise ValueError("need 0 < s < r < 1")
    width_t = math.log((r + 2 * s) / (r - 2 * s))
    if enforce_resolution and width_t / grid.h_t < 8.0:
        raise ValueError(
            f"annulus under-resolved: {width_t / grid.h_t:.1f} t-samples "
            "across the bump support (need at least 8)")
    t = grid.t
    chi, chi_t, chi_tt = cutoff_chi(t, r, s)
    u, u_t, u_tt = cylinder_potential_u(t, r)
    vals = chi * u
    f = ScalarField(grid, vals, "t")
    # annulus diagnostics
    t_lo, t_hi = -math.log(r + 2 * s), -math.log(r - 2 * s)
    ann = (t >= t_lo) & (t <= t_hi)
    sup_u = float(np.max(np.abs(u[ann]))) if ann.any() else 0.0
    bound = abs(math.log(r)) * s ** 2 / r ** 2
    # |chi_w| ~ |chi_t| / |w| etc; the scaled constants below are the
    # suprema of s|chi_w| and s^2 |chi_wwbar| over the annulus
    w_abs = np.exp(-t)
    c1 = float(np.max(s * np.abs(chi_t) / w_abs)) if ann.any() else 0.0
    c2 = float(np.max(s ** 2 * np.abs(chi_tt + chi_t) / w_abs ** 2)) \
        if ann.any() else 0.0
    report = {
        "sup_u_annulus": sup_u,
        "normalized_bound_constant": sup_u / bound if bound > 0 else 0.0,
        "cutoff_c1": c1,
        "cutoff_c2": c2,
    }
    return f, report


def bump_magnitude(t, r, s):
    """Radial bump magnitude m(|w|) in t-coordinates: 1 on the gluing
    annulus r-s < |w| < r+s, smooth ramps to 0 at r-2s and r+2s."""
    t = np.asarray(t, dtype=float)
    t_in_lo = -math.log(r + s)     # inner edge of full strength (small t)
    t_in_hi = -math.log(r - s)
    t_out_lo = -math.log(r + 2 * s)
    t_out_hi = -math.log(r - 2 * s)
    up = _smoothstep7((t - t_out_lo) / (t_in_lo - t_out_lo))
    down = 1.0 - _smoothstep7((t - t_in_hi) / (t_out_hi - t_in_hi))
    return up * down


# ---------------------------------------------------------------------------
# assembled background

def background_h11_parts(t, r, s):
    """Closed-form horizontal coefficient pieces of the glued form.

    Returns (P, Q): h11(t) = P(t) + t_b * Q(t).  P contains the base
    term and the lambda-scaled cylinder interpolation at both ends, Q
    the unit-amplitude bump at both ends.
    """
    t = np.asarray(t, dtype=float)
    base = 1.0 / (4.0 * np.cosh(t) ** 2)

    def cyl_piece(tt):
        chi, chi_t, chi_tt = cutoff_chi(tt, r, s)
        u, u_t, u_tt = cylinder_potential_u(tt, r)
        return chi_tt * u + 2.0 * chi_t * u_t + chi * u_tt

    P = base + (LAMBDA / 4.0) * (cyl_piece(t) + cyl_piece(-t))
    Q = 0.5 * (np.exp(-2.0 * t) * bump_magnitude(t, r, s)
               + np.exp(2.0 * t) * bump_magnitude(-t, r, s))
    return P, Q


@dataclass
class BackgroundMetric:
    """The glued background form with its parameter record."""

    omega: Form11Field
    r: float
    s: float
    r0: float
    t_b: float
    lam: float
    min_eigenvalue: float
    end_decay_rate: float

    @property
    def params(self):
        return {"r": self.r, "s": self.s, "r0": self.r0,
                "t_b": self.t_b, "lambda": self.lam}


def build_background(r, s, r0, t_b, grid: CylinderGrid,
                     require_positive=True) -> BackgroundMetric:
    """Assemble the glued Kahler form on a bi-infinite grid.

    Coefficients are sampled from closed-form derivatives; positivity
    and the exponential approach to the product form are certified
    numerically.
    """
    if not (0.0 < s < r < r0 < 1.0):
        raise ValueError("parameters must satisfy 0 < s < r < r0 < 1")
    if r + 2 * s >= r0:
        raise ValueError("bump support exceeds the gluing region r0")
    if grid.half_cylinder:
        raise ValueError("background lives on a bi-infinite grid")
    t = grid.t
    P, Q = background_h11_parts(t, r, s)
    h11 = P + t_b * Q
    omega = Form11Field(grid, h11, np.zeros_like(h11),
                        np.full_like(h11, TORUS_COEFF), "t")
    min_eig = float(min(h11.min(), TORUS_COEFF))
    if require_positive and min_eig <= 0.0:
        i = int(np.argmin(h11))
        need = 2.0 * abs(math.log(r)) / r ** 2
        raise ValueError(
            f"background loses positivity at t = {t[i]:.3f} "
            f"(h11 = {h11[i]:.3e}); amplitude of order {need:.3e} "
            "or larger restores it")
    # decay of the deviation from the product form at the ends
    dev = np.abs(h11 - LAMBDA / 2.0)
    t_r = -math.log(r)
    mask = t >= t_r + 1.0
    rate = math.inf
    if mask.sum() > 4 and np.any(dev[mask] > 0):
        f = ScalarField(grid, dev, "t")
        rate, _, _ = fit_decay_rate(f, (t[mask][0], t[-1]))
    return BackgroundMetric(omega, float(r), float(s), float(r0),
                            float(t_b), LAMBDA, min_eig, rate)


def _volume_defect_quadrature(grid, integrand_profile):
    """2 pi * (trapezoid over the grid + analytic base-term tails).

    The integrand must equal the base tail 1/cosh(t)^2 beyond the grid
    (true once the grid contains all supports), so the two half-line
    tails integrate to (1 - tanh(t_max)) each.
    """
    core = float(np.dot(trapezoid_weights(grid.n_t, grid.h_t),
                        integrand_profile))
    tail = (1.0 - math.tanh(grid.t_max)) + (1.0 + math.tanh(grid.t_min)) * 0.0
    # both ends are symmetric; t_min = -t_max for the model grids
    tail = 2.0 * (1.0 - math.tanh(grid.t_max))
    return TWO_PI * (core + tail)


def solve_volume_condition(r, s, r0, grid: CylinderGrid):
    """Bump amplitude solving the linear volume-matching condition.

    The total volume defect is c0 + c1 * t_b with

        c0 = int (top(omega_0 + lambda i ddbar(chi u)) - 4),
        c1 = int 4 * Q,

    both by grid quadrature with analytic tails.  Returns
    (t_b, c0, c1); c0 < 0 and c1 > 0 are asserted.
    """
    t = grid.t
    P, Q = background_h11_parts(t, r, s)
    c0 = _volume_defect_quadrature(grid, 4.0 * (P - 1.0))
    c1 = TWO_PI * float(np.dot(trapezoid_weights(grid.n_t, grid.h_t),
                               4.0 * Q))
    if c1 <= 0.0:
        raise RuntimeError("bump pairing c1 <= 0: grid failure")
    t_b = -c0 / c1
    if c0 >= 0.0:
        raise RuntimeError(f"volume defect c0 = {c0:.3e} >= 0")
    return float(t_b), float(c0), float(c1)


def volume_defect(bg: BackgroundMetric) -> float:
    """Integral of (top power - reference density) over the model."""
    dens = top_power(bg.omega).density
    return _volume_defect_quadrature(bg.omega.grid, dens - 4.0)


def compute_calibration_f(bg: BackgroundMetric):
    """Calibration f with e^f * (top power) = reference density.

    Returns (f, integral_residual, decay_rate).  The integral residual
    is int (e^f - 1) * top, evaluated with the same quadrature used to
    fix the bump amplitude, and the decay rate is fitted beyond the
    gluing annulus.
    """
    dens = top_power(bg.omega).density
    if np.any(dens <= 0.0):
        raise ValueError("background volume density is not positive")
    f_vals = np.log(4.0 / dens)
    f = ScalarField(bg.omega.grid, f_vals, "t")
    residual = volume_defect(bg)
    t = bg.omega.grid.t
    t_r = -math.log(bg.r)
    window = (min(t_r + 1.0, t[-1] - 2.0), t[-1])
    rate, _, _ = fit_decay_rate(f, window)
    return f, float(residual), float(rate)


def total_volume(bg: BackgroundMetric) -> float:
    dens = top_power(bg.omega).density
    w = trapezoid_weights(bg.omega.grid.n_t, bg.omega.grid.h_t)
    return TWO_PI * float(np.dot(w, dens))
