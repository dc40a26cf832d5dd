"""Grids, sampled fields, weighted norms, decay fitting and field I/O.

The model geometry is R x S^1 x T^2 with cylindrical coordinate t,
circle coordinate theta (period 2*pi) and unit torus coordinates x, y.
The disk picture is reached through w = exp(-t - i*theta); the second
end of a bi-infinite grid uses w' = exp(t - i*theta).

Fields may be stored symmetry-reduced.  The recognised symmetry tags
and the stored array shapes are

    "t"      -> (n_t,)
    "ttheta" -> (n_t, n_theta)
    "tx"     -> (n_t, n_x)
    "full"   -> (n_t, n_theta, n_x, n_y)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi

#: coordinate axes carried by each symmetry tag, in storage order
SYMMETRY_AXES = {
    "t": ("t",),
    "ttheta": ("t", "theta"),
    "tx": ("t", "x"),
    "full": ("t", "theta", "x", "y"),
}

#: period of each periodic coordinate
PERIODS = {"theta": TWO_PI, "x": 1.0, "y": 1.0}


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CylinderGrid:
    """Uniform discretisation of R (or R+) x S^1 x T^2."""

    t_min: float
    t_max: float
    n_t: int
    n_theta: int
    n_x: int
    n_y: int
    half_cylinder: bool = False

    def __post_init__(self):
        if self.t_max <= self.t_min:
            raise ValueError("degenerate t-range: t_max must exceed t_min")
        if self.n_t < 2:
            raise ValueError("need at least two t-samples")
        for name in ("n_theta", "n_x", "n_y"):
            if not _is_pow2(getattr(self, name)):
                raise ValueError(f"{name} must be a power of two (>= 2)")
        if self.half_cylinder and self.t_min != 0.0:
            raise ValueError("half cylinder requires t_min = 0")

    @property
    def h_t(self) -> float:
        return (self.t_max - self.t_min) / (self.n_t - 1)

    @property
    def t(self) -> np.ndarray:
        return self.t_min + self.h_t * np.arange(self.n_t)

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_theta) / self.n_theta

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) / self.n_x

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.n_y) / self.n_y

    def shape(self, symmetry: str) -> tuple:
        counts = {"t": self.n_t, "theta": self.n_theta,
                  "x": self.n_x, "y": self.n_y}
        return tuple(counts[a] for a in SYMMETRY_AXES[symmetry])


def make_grid(t_min, t_max, n_t, n_theta, n_x, n_y, half_cylinder=False):
    """Build a :class:`CylinderGrid`; see the class for the invariants."""
    return CylinderGrid(float(t_min), float(t_max), int(n_t),
                        int(n_theta), int(n_x), int(n_y), bool(half_cylinder))


@dataclass
class ScalarField:
    """Samples of a real or complex function on a cylinder grid.

    ``values`` is indexed in the storage order of the symmetry tag.
    """

    grid: CylinderGrid
    values: np.ndarray
    symmetry: str = "full"

    def __post_init__(self):
        if self.symmetry not in SYMMETRY_AXES:
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        self.values = np.asarray(self.values)
        want = self.grid.shape(self.symmetry)
        if self.values.shape != want:
            raise ValueError(
                f"value shape {self.values.shape} does not match "
                f"symmetry {self.symmetry!r} (expected {want})")
        if not np.all(np.isfinite(self.values.view(float))):
            raise ValueError("field contains non-finite samples")

    @property
    def axes(self) -> tuple:
        return SYMMETRY_AXES[self.symmetry]

    def axis_index(self, name: str) -> int:
        return self.axes.index(name)

    def copy(self) -> "ScalarField":
        return replace(self, values=self.values.copy())


def field_from_function(grid, fn, symmetry="full"):
    """Sample ``fn`` on the grid.  ``fn`` receives coordinate arrays
    broadcast to the storage shape, in the order of the symmetry axes."""
    axes = SYMMETRY_AXES[symmetry]
    coords = {"t": grid.t, "theta": grid.theta, "x": grid.x, "y": grid.y}
    arrays = np.meshgrid(*(coords[a] for a in axes), indexing="ij")
    return ScalarField(grid, np.asarray(fn(*arrays)), symmetry)


# ---------------------------------------------------------------------------
# derivatives

def fd_t(values: np.ndarray, h: float, order: int = 1, axis: int = 0):
    """Finite-difference derivative in t.

    Second-order centred stencils in the interior with second-order
    one-sided stencils at the two boundary samples.
    """
    v = np.moveaxis(np.asarray(values), axis, 0)
    out = np.empty_like(v, dtype=np.result_type(v.dtype, float))
    if order == 1:
        out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
        out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    elif order == 2:
        out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h ** 2
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h ** 2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h ** 2
    else:
        raise ValueError("order must be 1 or 2")
    return np.moveaxis(out, 0, axis)


def spectral_deriv(values: np.ndarray, axis: int, period: float,
                   order: int = 1):
    """Fourier differentiation along a periodic axis."""
    v = np.asarray(values)
    n = v.shape[axis]
    k = np.fft.fftfreq(n, d=1.0 / n) * (TWO_PI / period)
    shape = [1] * v.ndim
    shape[axis] = n
    mult = (1j * k.reshape(shape)) ** order
    if order % 2 == 0:
        # even derivatives keep the Nyquist mode real
        mult = mult.real.astype(complex)
    out = np.fft.ifft(np.fft.fft(v, axis=axis) * mult, axis=axis)
    if np.isrealobj(v):
        return out.real
    return out


def partial_deriv(field: ScalarField, axis_name: str, order: int = 1):
    """Derivative of a field along one named coordinate axis.

    t uses finite differences, periodic axes use spectral
    differentiation.  Returns a plain array in storage shape.
    """
    ax = field.axis_index(axis_name)
    if axis_name == "t":
        return fd_t(field.values, field.grid.h_t, order=order, axis=ax)
    return spectral_deriv(field.values, ax, PERIODS[axis_name], order=order)


def _all_derivatives(field: ScalarField, k: int):
    """Yield |d^a field| arrays for every multi-index with |a| <= k."""
    yield np.abs(field.values)
    if k == 0:
        return
    firsts = {}
    for name in field.axes:
        d = partial_deriv(field, name, 1)
        firsts[name] = d
        yield np.abs(d)
    if k == 1:
        return
    names = field.axes
    for i, a in enumerate(names):
        for b in names[i:]:
            if a == b:
                yield np.abs(partial_deriv(field, a, 2))
            else:
                # mixed derivative: differentiate the first derivative
                ax = field.axis_index(b)
                if b == "t":
                    d2 = fd_t(firsts[a], field.grid.h_t, 1, ax)
                else:
                    d2 = spectral_deriv(firsts[a], ax, PERIODS[b], 1)
                yield np.abs(d2)


@dataclass
class WeightedNormReport:
    delta: float
    k: int
    value: float
    window: tuple


def weighted_sup_norm(field: ScalarField, delta: float, k: int = 0):
    """Discrete surrogate of the weighted Holder norm.

    Returns max over samples with t >= 0 of e^{delta t} |d^{<=k} field|.
    Derivatives are spectral in periodic directions and second order
    finite differences in t.  k is capped at 2.
    """
    if k > 2:
        raise ValueError("derivative orders above 2 are unsupported")
    t = field.grid.t
    mask = t >= 0.0
    if not mask.any():
        raise ValueError("no samples with t >= 0")
    weight = np.exp(delta * t[mask])
    weight = weight.reshape((-1,) + (1,) * (field.values.ndim - 1))
    best = 0.0
    for mag in _all_derivatives(field, k):
        best = max(best, float(np.max(weight * mag[mask])))
    window = (float(t[mask][0]), float(t[mask][-1]))
    return WeightedNormReport(float(delta), int(k), best, window)


# ---------------------------------------------------------------------------
# decay fitting

def cross_section_sup(field: ScalarField) -> np.ndarray:
    """sup over the cross section of |field|, as a function of t."""
    v = np.abs(field.values)
    if v.ndim == 1:
        return v
    return v.max(axis=tuple(range(1, v.ndim)))


def fit_decay_rate(field: ScalarField, t_window=None):
    """Least-squares decay rate of a field along the end.

    Fits log(sup_{cross section} |field|) against t on the window and
    returns (rate, intercept, residual) with rate = -slope.  A field
    that vanishes identically on the window gets rate = +inf.
    """
    t = field.grid.t
    s = cross_section_sup(field)
    if t_window is not None:
        lo, hi = t_window
        if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12:
            raise ValueError("window outside grid")
        mask = (t >= lo) & (t <= hi)
    else:
        mask = np.ones_like(t, dtype=bool)
    tt, ss = t[mask], s[mask]
    nz = ss > 0.0
    if not nz.any():
        return math.inf, -math.inf, 0.0
    tt, ss = tt[nz], ss[nz]
    if tt.size < 2:
        raise ValueError("not enough nonzero samples on the window")
    logs = np.log(ss)
    A = np.column_stack([tt, np.ones_like(tt)])
    coef, res, _, _ = np.linalg.lstsq(A, logs, rcond=None)
    slope, intercept = coef
    resid = float(np.sqrt(np.mean((A @ coef - logs) ** 2)))
    return float(-slope), float(intercept), resid


# ---------------------------------------------------------------------------
# field I/O (container format "ACYLF1")

_DTYPES = {"f64": np.dtype("<f8"), "c128": np.dtype("<c16")}


def write_field(path, field: ScalarField) -> None:
    """Write a field in the ACYLF1 container.

    Line 1 is a JSON header, then the raw little-endian samples in
    row-major storage order follow.
    """
    g = field.grid
    dtype = "c128" if np.iscomplexobj(field.values) else "f64"
    header = {
        "magic": "ACYLF1",
        "t_min": g.t_min, "t_max": g.t_max, "n_t": g.n_t,
        "n_theta": g.n_theta, "n_x": g.n_x, "n_y": g.n_y,
        "symmetry": field.symmetry, "dtype": dtype,
        "half_cylinder": g.half_cylinder,
    }
    payload = np.ascontiguousarray(field.values, dtype=_DTYPES[dtype])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload.tobytes())


def read_field(path) -> ScalarField:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"malformed ACYLF1 header: {exc}") from exc
        if header.get("magic") != "ACYLF1":
            raise ValueError("malformed ACYLF1 header: bad magic")
        raw = fh.read()
    dtype = _DTYPES.get(header.get("dtype"))
    if dtype is None:
        raise ValueError("malformed ACYLF1 header: unknown dtype")
    grid = make_grid(header["t_min"], header["t_max"], header["n_t"],
                     header["n_theta"], header["n_x"], header["n_y"],
                     header.get("half_cylinder", False))
    symmetry = header["symmetry"]
    if symmetry not in SYMMETRY_AXES:
        raise ValueError("malformed ACYLF1 header: unknown symmetry")
    shape = grid.shape(symmetry)
    count = int(np.prod(shape))
    if len(raw) != count * dtype.itemsize:
        raise ValueError(
            f"dimension mismatch: payload holds {len(raw)} bytes, "
            f"header implies {count * dtype.itemsize}")
    values = np.frombuffer(raw, dtype=dtype).reshape(shape)
    return ScalarField(grid, values.copy(), symmetry)


# ---------------------------------------------------------------------------
# quadrature helpers shared by the other modules

def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def t_integral(grid: CylinderGrid, profile: np.ndarray) -> float:
    """Trapezoidal integral of a t-profile over the grid's t-range."""
    return float(np.dot(trapezoid_weights(grid.n_t, grid.h_t), profile))
