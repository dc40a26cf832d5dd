"""Translation-invariant elliptic analysis on cylinders.

Critical weights, per-Fourier-mode right inverses for the dbar operator
(d_t + i d_theta) and the Laplacian (d_t^2 + Laplace on the cross
section), and the cokernel bookkeeping for weighted solves.

Cross sections are "circle" (S^1 of period 2*pi, Laplace eigenvalues
k^2) or "circle_torus" (S^1 x T^2 with unit torus periods, eigenvalues
k^2 + 4 pi^2 (m^2 + n^2)).

All solvers invert the package's discrete operators exactly: centred
second-order stencils in t with transparent (exponential) closures at
the truncation boundaries, spectral transforms in the periodic
directions.  Residuals are therefore at round-off level away from the
first few boundary cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field_core import (CylinderGrid, PERIODS, ScalarField, fd_t,
                         spectral_deriv, trapezoid_weights)

TWO_PI = 2.0 * math.pi
_CRIT_TOL = 1e-9


# ---------------------------------------------------------------------------
# spectra and critical weights

def cross_section_eigenvalues(kind: str, max_value: float):
    """Distinct Laplace eigenvalues (value, multiplicity) up to max_value."""
    out = {}
    if kind == "circle":
        k = 0
        while k * k <= max_value:
            out[float(k * k)] = 1 if k == 0 else 2
            k += 1
    elif kind == "circle_torus":
        kmax = int(math.floor(math.sqrt(max_value))) + 1
        mmax = int(math.floor(math.sqrt(max_value) / TWO_PI)) + 1
        for k in range(-kmax, kmax + 1):
            for m in range(-mmax, mmax + 1):
                for n in range(-mmax, mmax + 1):
                    lam = k * k + 4.0 * math.pi ** 2 * (m * m + n * n)
                    if lam <= max_value + 1e-12:
                        out[lam] = out.get(lam, 0) + 1
    else:
        raise ValueError(f"unknown cross section {kind!r}")
    merged = {}
    for lam, mult in out.items():
        for seen in merged:
            if abs(seen - lam) < 1e-10:
                merged[seen] += mult
                break
        else:
            merged[lam] = mult
    return sorted(merged.items())


@dataclass(frozen=True)
class CriticalWeight:
    delta: float
    solution_count: int


def critical_weights(op_kind: str, cross_section: str, delta_range):
    """Critical weights with their t-polynomial solution counts.

    For dbar on R x S^1 the set is the integers (one exponential
    solution e^{k t} e^{i k theta} each).  For the Laplacian it is
    {+-sqrt(lambda_j)} over cross-section eigenvalues; the weight 0
    carries the two solutions 1 and t.
    """
    lo, hi = float(delta_range[0]), float(delta_range[1])
    out = []
    if op_kind == "dbar":
        if cross_section != "circle":
            raise ValueError("dbar mode analysis is for the circle section")
        for k in range(int(math.ceil(lo - 1e-12)),
                       int(math.floor(hi + 1e-12)) + 1):
            out.append(CriticalWeight(float(k), 1))
    elif op_kind == "laplacian":
        bound = max(lo * lo, hi * hi)
        for lam, mult in cross_section_eigenvalues(cross_section, bound):
            root = math.sqrt(lam)
            if lam == 0.0:
                if lo - 1e-12 <= 0.0 <= hi + 1e-12:
                    out.append(CriticalWeight(0.0, 2))
            else:
                for s in (-root, root):
                    if lo - 1e-12 <= s <= hi + 1e-12:
                        out.append(CriticalWeight(s, mult))
    else:
        raise ValueError(f"unknown operator {op_kind!r}")
    return sorted(out, key=lambda c: c.delta)


def is_critical(op_kind, cross_section, delta, tol=_CRIT_TOL):
    crits = critical_weights(op_kind, cross_section,
                             (delta - 1.0, delta + 1.0))
    return any(abs(c.delta - delta) <= tol for c in crits)


def first_positive_critical(op_kind, cross_section):
    for c in critical_weights(op_kind, cross_section, (1e-8, 100.0)):
        if c.delta > 1e-8:
            return c.delta
    raise RuntimeError("no positive critical weight found")


def degeneracy_scan(op_kind, cross_section, deltas, n_freq=128):
    """Symbol condition number of the weight-conjugated model operator.

    Substituting u = e^{-delta t} v turns the translation invariant
    operator into one whose Fourier symbol in (xi, mode) is
    (i xi - delta)^2 - lambda_j for the Laplacian and
    (i xi - delta) - k for dbar.  The condition number over a frequency
    grid blows up exactly at the critical weights.
    """
    xi = np.fft.fftfreq(n_freq, d=1.0 / n_freq) * (TWO_PI / 40.0)
    conds = []
    if op_kind == "laplacian":
        lams = [lam for lam, _ in cross_section_eigenvalues(
            cross_section, max(np.max(np.abs(deltas)) ** 2 * 1.2, 1.0))]
        lams = np.asarray(lams)
    for d in deltas:
        if op_kind == "dbar":
            ks = np.arange(-int(np.max(np.abs(deltas))) - 1,
                           int(np.max(np.abs(deltas))) + 2)
            sym = (1j * xi[:, None] - d) - ks[None, :]
        else:
            sym = (1j * xi[:, None] - d) ** 2 - lams[None, :]
        mags = np.abs(sym)
        conds.append(float(mags.max() / max(mags.min(), 1e-300)))
    return np.asarray(conds)


# ---------------------------------------------------------------------------
# cokernel conditions

@dataclass(frozen=True)
class CokernelCondition:
    """A linear functional pairing data against an adjoint kernel element.

    ``profile`` names the t-dependence ("1", "t" or "exp") and
    ``rate``/``theta_freq`` describe exponential kernel elements picked
    up when the weight crosses a critical value.
    """

    profile: str
    rate: float = 0.0
    theta_freq: int = 0

    def weights(self, t: np.ndarray) -> np.ndarray:
        if self.profile == "1":
            return np.ones_like(t)
        if self.profile == "t":
            return t.copy()
        return np.exp(self.rate * t)

    def evaluate(self, t: np.ndarray, profile: np.ndarray, h: float):
        w = trapezoid_weights(t.size, h)
        return complex(np.sum(w * self.weights(t) * profile))


def cokernel_conditions(domain_kind: str, delta: float,
                        cross_section: str = "circle"):
    """Solvability functionals for the weighted Laplacian at weight delta.

    On the bi-infinite cylinder below the first critical weight these
    are pairing with 1 and with t.  With Dirichlet data at t = 0 only
    the first moment survives.  Each critical weight crossed by delta
    adds its exponential solutions.
    """
    if delta <= 0.0:
        raise ValueError("weight must be positive")
    if is_critical("laplacian", cross_section, delta):
        raise ValueError(f"weight {delta} is critical")
    if domain_kind == "bi_infinite":
        conds = [CokernelCondition("1"), CokernelCondition("t")]
    elif domain_kind == "half_dirichlet":
        conds = [CokernelCondition("t")]
    else:
        raise ValueError(f"unknown domain kind {domain_kind!r}")
    for c in critical_weights("laplacian", cross_section, (1e-8, delta)):
        # each crossed weight contributes its exponential adjoint kernel
        k = int(round(math.sqrt(c.delta ** 2)))
        for _ in range(c.solution_count):
            conds.append(CokernelCondition("exp", rate=c.delta, theta_freq=k))
    return conds


class CokernelError(RuntimeError):
    def __init__(self, message, condition, value):
        super().__init__(message)
        self.condition = condition
        self.value = value


# ---------------------------------------------------------------------------
# per-mode solves

def _fitted_end_ratio(rhs, fallback_ratio, left=False, allow_growth=False):
    """Profile ratio a_0/a_1 (left) or a_{n-1}/a_{n-2} (right) near a
    boundary, estimated from the rhs.  With allow_growth the ratio may
    exceed one (the solution follows a profile that grows toward that
    boundary, as on the finite end of a half cylinder)."""
    r = np.abs(np.asarray(rhs))
    seg = r[:5] if left else r[-5:]
    scale = r.max()
    if scale == 0.0 or seg.min() < 1e-13 * scale:
        return fallback_ratio
    if left:
        ratios = seg[:-1] / seg[1:]
    else:
        ratios = seg[1:] / seg[:-1]
    hi = 10.0 if allow_growth else 1.0
    if np.any(ratios <= 0.0) or np.any(ratios >= hi):
        return fallback_ratio
    return float(np.exp(np.mean(np.log(ratios))))


def _mode_matrix_laplacian(n, h, lam, ratio_left, ratio_right, left_closure):
    rows, cols, vals = [], [], []
    inv_h2 = 1.0 / h ** 2
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [inv_h2, -2.0 * inv_h2 - lam, inv_h2]
    if left_closure == "dirichlet":
        rows += [0]
        cols += [0]
        vals += [1.0]
    elif left_closure == "transparent":
        # a_0 = ratio_left * a_1
        rows += [0, 0]
        cols += [0, 1]
        vals += [1.0, -ratio_left]
    elif left_closure == "rhs":
        # follow the data profile at the finite end of a half cylinder
        rows += [0, 0]
        cols += [0, 1]
        vals += [1.0, -ratio_left]
    else:
        raise ValueError(f"unknown left closure {left_closure!r}")
    rows += [n - 1, n - 1]
    cols += [n - 1, n - 2]
    vals += [1.0, -ratio_right]
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def solve_laplacian_mode(t, lam, rhs, *, left_closure="rhs",
                         fallback_rate=None):
    """Decaying solution of a'' - lam a = rhs on the truncated line.

    The right boundary row imposes the transparent exponential
    relation.  The left row depends on the domain: on a half line the
    solution follows the data profile ("rhs", the default, exact for
    exponential data), bi-infinite problems use a transparent left row
    and Dirichlet problems a zero row.  Interior rows are the centred
    stencil and are satisfied exactly.
    """
    n = t.size
    h = t[1] - t[0]
    rhs = np.asarray(rhs)
    if lam <= 0.0:
        raise ValueError("use the zero-mode path for lam <= 0")
    root = math.sqrt(lam) if fallback_rate is None else fallback_rate
    fb = math.exp(-min(root, math.sqrt(lam)) * h)
    ratio_r = max(_fitted_end_ratio(rhs, fb), math.exp(-math.sqrt(lam) * h))
    if left_closure == "rhs":
        ratio_l = _fitted_end_ratio(rhs, math.exp(math.sqrt(lam) * h),
                                    left=True, allow_growth=True)
    else:
        ratio_l = max(_fitted_end_ratio(rhs, fb, left=True),
                      math.exp(-math.sqrt(lam) * h))
    A = _mode_matrix_laplacian(n, h, lam, ratio_l, ratio_r, left_closure)
    b = rhs.copy().astype(np.result_type(rhs.dtype, float))
    b[0] = 0.0
    b[-1] = 0.0
    return spla.spsolve(A, b)


def solve_laplacian_zero_mode(t, rhs, domain_kind):
    """a'' = rhs with decaying derivative; saddle system pins the mean.

    For the bi-infinite cylinder the data must be orthogonal to 1 and
    t; for the half cylinder with Dirichlet data the first moment must
    vanish.  The caller checks those conditions.
    """
    n = t.size
    h = t[1] - t[0]
    rhs = np.asarray(rhs, dtype=complex)
    inv_h2 = 1.0 / h ** 2
    main = np.zeros((n, n))
    for i in range(1, n - 1):
        main[i, i - 1] = inv_h2
        main[i, i] = -2.0 * inv_h2
        main[i, i + 1] = inv_h2
    b = rhs.copy()
    if domain_kind == "half_dirichlet":
        main[0, 0] = 1.0
        b[0] = 0.0
        # second-order one-sided derivative vanishes at the far end
        main[-1, -1] = 3.0 / (2 * h)
        main[-1, -2] = -4.0 / (2 * h)
        main[-1, -3] = 1.0 / (2 * h)
        b[-1] = 0.0
        return np.linalg.solve(main, b)
    # bi-infinite: Neumann rows at both ends plus a mean constraint
    main[0, 0] = -3.0 / (2 * h)
    main[0, 1] = 4.0 / (2 * h)
    main[0, 2] = -1.0 / (2 * h)
    b[0] = 0.0
    main[-1, -1] = 3.0 / (2 * h)
    main[-1, -2] = -4.0 / (2 * h)
    main[-1, -3] = 1.0 / (2 * h)
    b[-1] = 0.0
    w = trapezoid_weights(n, h)
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = main
    big[:n, n] = w
    big[n, :n] = w
    bb = np.concatenate([b, [0.0]])
    sol = np.linalg.solve(big, bb)
    return sol[:n]


def solve_dbar_mode(t, k, rhs, *, half=True):
    """Decaying solution of a' - k a = rhs (theta-mode of d_t + i d_theta).

    Centred first differences in the interior; the left boundary row is
    the one-sided stencil of the same equation, the right boundary row
    is the transparent exponential relation fitted from the rhs decay.
    """
    n = t.size
    h = t[1] - t[0]
    rhs = np.asarray(rhs)
    fb = math.exp(-max(abs(k), 0.5) * h)
    ratio_r = _fitted_end_ratio(rhs, fb)
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [-1.0 / (2 * h), -float(k), 1.0 / (2 * h)]
    # one-sided first row of the same equation
    rows += [0, 0, 0]
    cols += [0, 1, 2]
    vals += [-3.0 / (2 * h) - float(k), 4.0 / (2 * h), -1.0 / (2 * h)]
    rows += [n - 1, n - 1]
    cols += [n - 1, n - 2]
    vals += [1.0, -ratio_r]
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    b = rhs.astype(complex).copy()
    b[-1] = 0.0
    return spla.spsolve(A, b)


# ---------------------------------------------------------------------------
# assembled solvers

@dataclass
class ModeSolver:
    """Per-mode right inverse at a fixed non-critical weight."""

    op_kind: str
    cross_section: str
    delta: float
    critical_set: list = field(default_factory=list)
    cokernel: list = field(default_factory=list)

    def __post_init__(self):
        if is_critical(self.op_kind, self.cross_section, self.delta):
            raise ValueError(f"weight {self.delta} is critical for "
                             f"{self.op_kind} on {self.cross_section}")
        self.critical_set = critical_weights(
            self.op_kind, self.cross_section,
            (-abs(self.delta) - 1.0, abs(self.delta) + 1.0))
        if self.op_kind == "laplacian" and self.delta > 0.0:
            self.cokernel = cokernel_conditions("bi_infinite", self.delta,
                                                self.cross_section)


def solve_dbar_cylinder(F: ScalarField, delta: float):
    """One fixed right inverse of d_t + i d_theta on the half cylinder.

    Returns (f, report).  The report carries the weighted norms and the
    measured bound constant C with ||f||_delta <= C ||F||_delta.
    """
    if abs(delta - round(delta)) < _CRIT_TOL:
        raise ValueError(f"integer weight {delta} is critical for dbar")
    if F.symmetry != "ttheta":
        raise ValueError("dbar data must carry (t, theta) dependence")
    t = F.grid.t
    Fhat = np.fft.fft(F.values, axis=1)
    n_th = F.grid.n_theta
    ks = np.fft.fftfreq(n_th, d=1.0 / n_th).astype(int)
    out = np.empty_like(Fhat)
    for j, k in enumerate(ks):
        out[:, j] = solve_dbar_mode(t, int(k), Fhat[:, j])
    f_vals = np.fft.ifft(out, axis=1)
    if np.isrealobj(F.values):
        f_vals = f_vals.real
    f = ScalarField(F.grid, f_vals, "ttheta")
    from .field_core import weighted_sup_norm
    nF = weighted_sup_norm(F, delta, 0).value
    nf = weighted_sup_norm(f, delta, 0).value
    resid = dbar_residual(f, F)
    report = {"norm_data": nF, "norm_solution": nf,
              "bound_constant": nf / nF if nF > 0 else 0.0,
              "relative_residual": resid}
    return f, report


def dbar_residual(f: ScalarField, F: ScalarField, interior_margin=3):
    """Relative residual of (d_t + i d_theta) f = F away from t-ends."""
    df = fd_t(f.values, f.grid.h_t, 1, 0) \
        + 1j * spectral_deriv(f.values, 1, TWO_PI, 1)
    sl = slice(interior_margin, -interior_margin)
    scale = max(float(np.max(np.abs(F.values))), 1e-300)
    return float(np.max(np.abs(df[sl] - F.values[sl]))) / scale


def _mode_grid(field: ScalarField):
    """FFT over all periodic axes; yields (index, eigenvalue, profile)."""
    v = field.values
    axes = tuple(range(1, v.ndim))
    vhat = np.fft.fftn(v, axes=axes) if axes else v[:, None]
    names = field.axes[1:]
    freq_arrays = []
    for i, name in enumerate(names):
        n = v.shape[1 + i]
        freq_arrays.append(np.fft.fftfreq(n, d=1.0 / n).astype(int))
    return vhat, names, freq_arrays


def _mode_eigenvalue(names, freqs):
    lam = 0.0
    for name, q in zip(names, freqs):
        if name == "theta":
            lam += float(q) ** 2
        else:
            lam += (TWO_PI * float(q)) ** 2
    return lam


def laplacian_apply(field: ScalarField) -> np.ndarray:
    """Euclidean cylinder Laplacian d_t^2 + Laplace_X, discrete."""
    out = fd_t(field.values, field.grid.h_t, 2, 0).astype(
        np.result_type(field.values.dtype, float))
    for i, name in enumerate(field.axes[1:], start=1):
        out = out + spectral_deriv(field.values, i, PERIODS[name], 2)
    return out


def solve_laplacian_weighted(f: ScalarField, delta: float, domain_kind: str,
                             cond_tol: float = 1e-8):
    """Solve Laplace u = f at weight delta below the first critical one.

    The data must satisfy the cokernel conditions of the domain kind;
    violations raise CokernelError with the offending functional value.
    Returns (u, satisfied_conditions).
    """
    section = "circle" if f.symmetry == "ttheta" else "circle_torus"
    if f.symmetry == "t":
        section = "circle"
    first = first_positive_critical("laplacian", section)
    if not 0.0 < delta < first:
        raise ValueError(f"weight must lie in (0, {first})")
    conds = cokernel_conditions(domain_kind, delta, section)
    t = f.grid.t
    h = f.grid.h_t
    vhat, names, freq_arrays = _mode_grid(f)
    shape = vhat.shape
    flat = vhat.reshape(shape[0], -1)
    out = np.empty_like(flat)
    idx_grids = np.meshgrid(*freq_arrays, indexing="ij") if names else []
    idx_flat = [g.ravel() for g in idx_grids]
    n_modes = flat.shape[1]
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    satisfied = []
    for j in range(n_modes):
        freqs = [arr[j] for arr in idx_flat]
        lam = _mode_eigenvalue(names, freqs)
        if lam == 0.0:
            for cond in conds:
                if cond.profile == "exp":
                    continue
                val = cond.evaluate(t, flat[:, j], h)
                # the zero mode carries the full cross-section volume
                norm = abs(val) / (scale * (t[-1] - t[0]) ** 2)
                if norm > cond_tol:
                    raise CokernelError(
                        f"cokernel condition <f,{cond.profile}> violated: "
                        f"{val:.3e}", cond, val)
                satisfied.append((cond, val))
            out[:, j] = solve_laplacian_zero_mode(t, flat[:, j], domain_kind)
        else:
            closure = ("dirichlet" if domain_kind == "half_dirichlet"
                       else "transparent")
            out[:, j] = solve_laplacian_mode(
                t, lam, flat[:, j], left_closure=closure,
                fallback_rate=delta)
    uhat = out.reshape(shape)
    axes = tuple(range(1, f.values.ndim))
    u_vals = np.fft.ifftn(uhat, axes=axes) if axes else uhat[:, 0]
    if np.isrealobj(f.values):
        u_vals = u_vals.real
    u = ScalarField(f.grid, u_vals, f.symmetry)
    if domain_kind == "bi_infinite":
        u = normalize_kernel(u)
    return u, satisfied


def normalize_kernel(u: ScalarField) -> ScalarField:
    """Remove the {1, t} kernel components (zero mean, zero t-moment)."""
    t = u.grid.t
    w = trapezoid_weights(t.size, u.grid.h_t)
    prof = u.values.mean(axis=tuple(range(1, u.values.ndim))) \
        if u.values.ndim > 1 else u.values
    tc = t - np.sum(w * t) / np.sum(w)
    alpha = np.sum(w * prof) / np.sum(w)
    beta = np.sum(w * tc * prof) / np.sum(w * tc * tc)
    shape = (-1,) + (1,) * (u.values.ndim - 1)
    vals = u.values - alpha - beta * tc.reshape(shape)
    return ScalarField(u.grid, vals, u.symmetry)


def laplacian_residual(u: ScalarField, f: ScalarField, interior_margin=3):
    r = laplacian_apply(u) - f.values
    sl = slice(interior_margin, -interior_margin)
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    return float(np.max(np.abs(r[sl]))) / scale
