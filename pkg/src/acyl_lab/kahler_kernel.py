"""(1,1)-forms, i del dbar, top powers and the Monge-Ampere operator.

Global complex coordinates on the model are z1 = t + i*theta and
z2 = x + i*y, so complex dimension n = 2.  A real (1,1)-form is stored
through its pointwise Hermitian coefficient matrix

    [[h11, h12],
     [conj(h12), h22]]

with h11, h22 real.  Conventions pinned here and used everywhere:

* i dz ^ dzbar = 2 * (real area form), so dt^dtheta has h11 = 1/2 and
  2 dx^dy has h22 = 1.
* top_power returns 4*det(h) relative to dt^dtheta^dx^dy.
* the reference meromorphic volume density is the constant 4.
* Laplace convention Delta_g = 2 g^{jk} d_j d_kbar, so the
  linearisation of the Monge-Ampere operator is v -> g^{jk} v_{,jk}.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .field_core import (CylinderGrid, PERIODS, SYMMETRY_AXES, ScalarField,
                         fd_t, spectral_deriv)


def _deriv(values, grid, symmetry, axis_name, order=1):
    axes = SYMMETRY_AXES[symmetry]
    if axis_name not in axes:
        return np.zeros_like(np.asarray(values, dtype=float)) \
            if np.isrealobj(values) else np.zeros_like(values)
    ax = axes.index(axis_name)
    if axis_name == "t":
        return fd_t(values, grid.h_t, order=order, axis=ax)
    return spectral_deriv(values, ax, PERIODS[axis_name], order=order)


def complex_hessian(u: ScalarField):
    """The four second complex derivatives (h11, h12, h22) of u."""
    g, sym, v = u.grid, u.symmetry, u.values
    d = lambda name, order=1: _deriv(v, g, sym, name, order)
    u_tt = d("t", 2)
    u_hh = d("theta", 2)
    u_xx = d("x", 2)
    u_yy = d("y", 2)
    h11 = 0.25 * (u_tt + u_hh)
    h22 = 0.25 * (u_xx + u_yy)
    u_t = d("t")
    u_h = d("theta")
    u_tx = _deriv(u_t, g, sym, "x")
    u_ty = _deriv(u_t, g, sym, "y")
    u_hx = _deriv(u_h, g, sym, "x")
    u_hy = _deriv(u_h, g, sym, "y")
    h12 = 0.25 * ((u_tx + u_hy) + 1j * (u_ty - u_hx))
    return h11, h12, h22


@dataclass
class Form11Field:
    """Real (1,1)-form as a pointwise Hermitian 2x2 coefficient field."""

    grid: CylinderGrid
    h11: np.ndarray
    h12: np.ndarray
    h22: np.ndarray
    symmetry: str = "full"

    def __post_init__(self):
        shape = self.grid.shape(self.symmetry)
        self.h11 = np.broadcast_to(np.asarray(self.h11, dtype=float),
                                   shape).copy()
        self.h12 = np.broadcast_to(np.asarray(self.h12, dtype=complex),
                                   shape).copy()
        self.h22 = np.broadcast_to(np.asarray(self.h22, dtype=float),
                                   shape).copy()

    # component views
    @property
    def horizontal(self):
        return self.h11

    @property
    def mixed(self):
        return self.h12

    @property
    def vertical(self):
        return self.h22

    def det(self) -> np.ndarray:
        return self.h11 * self.h22 - np.abs(self.h12) ** 2

    def __add__(self, other: "Form11Field") -> "Form11Field":
        assert self.symmetry == other.symmetry
        return Form11Field(self.grid, self.h11 + other.h11,
                           self.h12 + other.h12, self.h22 + other.h22,
                           self.symmetry)

    def __sub__(self, other: "Form11Field") -> "Form11Field":
        assert self.symmetry == other.symmetry
        return Form11Field(self.grid, self.h11 - other.h11,
                           self.h12 - other.h12, self.h22 - other.h22,
                           self.symmetry)

    def __mul__(self, c: float) -> "Form11Field":
        return Form11Field(self.grid, c * self.h11, c * self.h12,
                           c * self.h22, self.symmetry)

    __rmul__ = __mul__

    def copy(self) -> "Form11Field":
        return Form11Field(self.grid, self.h11.copy(), self.h12.copy(),
                           self.h22.copy(), self.symmetry)


def constant_form(grid, h11, h22, h12=0.0, symmetry="full") -> Form11Field:
    shape = grid.shape(symmetry)
    return Form11Field(grid, np.full(shape, h11), np.full(shape, complex(h12)),
                       np.full(shape, h22), symmetry)


@dataclass
class VolumeDensity:
    """Density samples relative to the measure dt dtheta dx dy."""

    grid: CylinderGrid
    density: np.ndarray
    symmetry: str = "full"


def iddbar(u: ScalarField) -> Form11Field:
    """i del dbar of a real potential as a Form11Field."""
    h11, h12, h22 = complex_hessian(u)
    return Form11Field(u.grid, np.real(h11), h12, np.real(h22), u.symmetry)


def top_power(omega: Form11Field) -> VolumeDensity:
    """omega^n for n = 2, normalised to 4*det(h).

    Negative values are kept and reported as they stand; positivity is
    the caller's concern.
    """
    return VolumeDensity(omega.grid, 4.0 * omega.det(), omega.symmetry)


def holomorphic_volume_density(grid, scale=1.0,
                               symmetry="full") -> VolumeDensity:
    """Density of the model meromorphic volume form.

    The reference form is (dw/w) ^ dz2 = -dz1 ^ dz2 up to scale, whose
    pairing with its conjugate has the constant density 4*|scale|^2.
    """
    shape = grid.shape(symmetry)
    return VolumeDensity(grid, np.full(shape, 4.0 * abs(scale) ** 2),
                         symmetry)


class PositivityError(RuntimeError):
    def __init__(self, message, min_eig, where):
        super().__init__(message)
        self.min_eig = min_eig
        self.where = where


def positivity_spectrum(omega: Form11Field):
    """Pointwise smaller eigenvalue of h, plus the global minimum."""
    half_tr = 0.5 * (omega.h11 + omega.h22)
    rad = np.sqrt((0.5 * (omega.h11 - omega.h22)) ** 2
                  + np.abs(omega.h12) ** 2)
    lam = half_tr - rad
    idx = np.unravel_index(np.argmin(lam), lam.shape)
    return lam, float(lam[idx]), idx


def _require_positive(omega: Form11Field, what: str):
    _, m, where = positivity_spectrum(omega)
    if m <= 0.0:
        raise PositivityError(
            f"{what} loses positivity: min eigenvalue {m:.3e} at index "
            f"{where}", m, where)


def ma_operator(omega: Form11Field, u: ScalarField) -> ScalarField:
    """F(u) = log det(h + Hess_C u) - log det(h)."""
    _require_positive(omega, "background form")
    pert = omega + iddbar(u)
    _require_positive(pert, "perturbed form")
    vals = np.log(pert.det()) - np.log(omega.det())
    return ScalarField(omega.grid, vals, omega.symmetry)


class Linearization:
    """Handle applying v -> g^{jk} v_{,jk} for a fixed positive form.

    This equals half the metric Laplacian in the module's sign
    convention and is the derivative of ma_operator at the form.
    """

    def __init__(self, omega_u: Form11Field):
        _require_positive(omega_u, "linearisation base form")
        self.omega = omega_u
        det = omega_u.det()
        # inverse of the Hermitian coefficient matrix
        self.g11 = omega_u.h22 / det
        self.g22 = omega_u.h11 / det
        self.g12 = -omega_u.h12 / det

    def __call__(self, v: ScalarField) -> ScalarField:
        h11, h12, h22 = complex_hessian(v)
        out = (self.g11 * h11 + self.g22 * h22
               + 2.0 * np.real(np.conj(self.g12) * h12))
        return ScalarField(v.grid, np.real(out), v.symmetry)


def linearize(omega_u: Form11Field) -> Linearization:
    return Linearization(omega_u)


# ---------------------------------------------------------------------------
# serialization: a form travels as three scalar components

def write_form(path, form: Form11Field) -> None:
    """Serialize as three ACYLF1 blocks (h11 real, h12 complex, h22 real)."""
    from . import field_core as fc
    import json
    g = form.grid
    with open(path, "wb") as fh:
        for comp, dtype in (("h11", "f64"), ("h12", "c128"), ("h22", "f64")):
            header = {
                "magic": "ACYLF1", "t_min": g.t_min, "t_max": g.t_max,
                "n_t": g.n_t, "n_theta": g.n_theta, "n_x": g.n_x,
                "n_y": g.n_y, "symmetry": form.symmetry, "dtype": dtype,
                "half_cylinder": g.half_cylinder, "component": comp,
            }
            payload = np.ascontiguousarray(getattr(form, comp),
                                           dtype=fc._DTYPES[dtype])
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(payload.tobytes())


def read_form(path) -> Form11Field:
    from . import field_core as fc
    import json
    comps = {}
    meta = None
    with open(path, "rb") as fh:
        for _ in range(3):
            line = fh.readline()
            header = json.loads(line.decode())
            if header.get("magic") != "ACYLF1":
                raise ValueError("malformed form container")
            grid = fc.make_grid(header["t_min"], header["t_max"],
                                header["n_t"], header["n_theta"],
                                header["n_x"], header["n_y"],
                                header.get("half_cylinder", False))
            shape = grid.shape(header["symmetry"])
            dtype = fc._DTYPES[header["dtype"]]
            n = int(np.prod(shape)) * dtype.itemsize
            raw = fh.read(n)
            if len(raw) != n:
                raise ValueError("truncated form container")
            comps[header["component"]] = np.frombuffer(raw,
                                                       dtype=dtype).reshape(shape)
            meta = (grid, header["symmetry"])
    grid, sym = meta
    return Form11Field(grid, comps["h11"], comps["h12"], comps["h22"], sym)
