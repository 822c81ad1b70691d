"""Smooth bump/step primitives and piecewise-Chebyshev machinery.

Everything here is plain real analysis on [0, 1] or on the circle; no
knowledge of diffeomorphisms.  The two building blocks are

* ``step``: the classical C-infinity step built from exp(-1/x), rising
  0 -> 1 on [0, 1] with all derivatives vanishing at both ends;
* ``flat_step``: the integral of a flat-topped bump, also a C-infinity
  step but with max slope close to 1 (useful when a slope budget is
  tight).

``PeriodicChebFun`` represents a smooth 1-periodic function as Chebyshev
polynomials on panels of [0, 1].  It is the workhorse representation for
flow maps and grid-compiled composites: evaluation is cheap, derivatives
are exact on the interpolant, and adaptive panel splitting concentrates
resolution where the function is least polynomial.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import ConstructionError

# exp(-1/u) underflows to 0 for u < ~1/745; clamp exponents there
_EXP_CLIP = 700.0


def step(u):
    """C-infinity step: 0 for u<=0, 1 for u>=1, e(u)/(e(u)+e(1-u)) between.

    e(x) = exp(-1/x).  Strictly increasing on (0,1), max slope ~2 at 1/2.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    out[u <= 0.0] = 0.0
    out[u >= 1.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    um = u[mid]
    z = 1.0 / um - 1.0 / (1.0 - um)
    z = np.clip(z, -_EXP_CLIP, _EXP_CLIP)
    out[mid] = 1.0 / (1.0 + np.exp(z))
    return out


def step_deriv(u):
    """Derivative of ``step``: theta*(1-theta)*(1/u^2 + 1/(1-u)^2), 0 outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    mid = (u > 0.0) & (u < 1.0)
    um = u[mid]
    th = step(um)
    out[mid] = th * (1.0 - th) * (1.0 / um**2 + 1.0 / (1.0 - um) ** 2)
    return out


def plateau(u, ramp=0.2):
    """Flat-topped C-infinity bump on [0,1]: step(u/r) * step((1-u)/r).

    Equals 1 exactly on [ramp, 1-ramp], 0 outside (0, 1).
    """
    return step(np.asarray(u, dtype=float) / ramp) * step((1.0 - np.asarray(u, dtype=float)) / ramp)


def plateau_deriv(u, ramp=0.2):
    u = np.asarray(u, dtype=float)
    a = step(u / ramp)
    b = step((1.0 - u) / ramp)
    da = step_deriv(u / ramp) / ramp
    db = -step_deriv((1.0 - u) / ramp) / ramp
    return da * b + a * db


class _FlatStepTable:
    """Normalized antiderivative of ``plateau`` as a Chebyshev series.

    flat_step(u) = int_0^u plateau / int_0^1 plateau rises 0 -> 1 with max
    slope 1/int(plateau) ~ 1.22 for ramp=0.2, well under the ~2 of ``step``.
    """

    def __init__(self, ramp=0.2, deg=900):
        self.ramp = ramp
        poly = C.Chebyshev.interpolate(lambda u: plateau(u, ramp), deg, domain=[0.0, 1.0])
        tail = np.max(np.abs(poly.coef[-4:]))
        if tail > 1e-13:
            raise ConstructionError(f"plateau interpolation tail {tail:.2e} too large at deg {deg}")
        anti = poly.integ(lbnd=0.0)
        total = anti(1.0)
        self.total = float(total)
        self.anti = anti / total
        self.poly = poly / total

    def value(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        out[u <= 0.0] = 0.0
        out[u >= 1.0] = 1.0
        mid = (u > 0.0) & (u < 1.0)
        out[mid] = self.anti(u[mid])
        return out

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        mid = (u > 0.0) & (u < 1.0)
        out[mid] = self.poly(u[mid])
        return out


_FLAT_CACHE: dict[float, _FlatStepTable] = {}


def _flat_table(ramp=0.2):
    if ramp not in _FLAT_CACHE:
        _FLAT_CACHE[ramp] = _FlatStepTable(ramp)
    return _FLAT_CACHE[ramp]


def flat_step(u, ramp=0.2):
    """C-infinity step with max slope ~1/(1-ramp); exact 0/1 outside (0,1)."""
    return _flat_table(ramp).value(u)


def flat_step_deriv(u, ramp=0.2):
    return _flat_table(ramp).deriv(u)


def flat_step_max_slope(ramp=0.2):
    return 1.0 / _flat_table(ramp).total


# ---------------------------------------------------------------------------
# Piecewise Chebyshev interpolants on the circle
# ---------------------------------------------------------------------------

def cheb_nodes(deg):
    """Chebyshev points of the second kind mapped to [0,1], ascending."""
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(deg + 1) / deg))


def _vandermonde_inv(deg):
    """Matrix sending values at second-kind nodes (ascending in [0,1]) to coeffs."""
    x = np.cos(np.pi * np.arange(deg + 1) / deg)[::-1]  # ascending in [-1,1]
    V = np.polynomial.chebyshev.chebvander(x, deg)
    return np.linalg.inv(V)


_VINV_CACHE: dict[int, np.ndarray] = {}


def vandermonde_inv(deg):
    if deg not in _VINV_CACHE:
        _VINV_CACHE[deg] = _vandermonde_inv(deg)
    return _VINV_CACHE[deg]


class PeriodicChebFun:
    """A 1-periodic smooth function stored panel-by-panel as Chebyshev series.

    ``breaks`` is an increasing array with breaks[0]=0, breaks[-1]=1;
    ``coeffs`` has shape (n_panels, deg+1).  Values outside [0,1) are
    reduced mod 1 before lookup.
    """

    __slots__ = ("breaks", "coeffs", "_widths")

    def __init__(self, breaks, coeffs):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self._widths = np.diff(self.breaks)
        if self.breaks[0] != 0.0 or abs(self.breaks[-1] - 1.0) > 1e-15:
            raise ConstructionError("panel breaks must span [0, 1]")

    @property
    def n_panels(self):
        return len(self._widths)

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xm = np.mod(x.ravel(), 1.0)
        idx = np.clip(np.searchsorted(self.breaks, xm, side="right") - 1, 0, self.n_panels - 1)
        out = np.empty_like(xm)
        for p in np.unique(idx):
            sel = idx == p
            t = 2.0 * (xm[sel] - self.breaks[p]) / self._widths[p] - 1.0
            out[sel] = C.chebval(t, self.coeffs[p])
        out = out.reshape(x.shape) if not scalar else out[0]
        return out

    def derivative(self):
        dcoeffs = np.zeros_like(self.coeffs)
        for p in range(self.n_panels):
            d = C.chebder(self.coeffs[p]) * (2.0 / self._widths[p])
            dcoeffs[p, : len(d)] = d
        return PeriodicChebFun(self.breaks, dcoeffs)

    def max_abs(self, samples_per_panel=32):
        m = 0.0
        for p in range(self.n_panels):
            t = np.linspace(-1.0, 1.0, samples_per_panel)
            m = max(m, float(np.max(np.abs(C.chebval(t, self.coeffs[p])))))
        return m

    def tail_estimate(self):
        """Max of the last two coefficients over panels; proxy for interp error."""
        return float(np.max(np.abs(self.coeffs[:, -2:])))

    @classmethod
    def from_node_values(cls, breaks, values, deg):
        """Build from values sampled at per-panel second-kind nodes.

        ``values`` has shape (n_panels, deg+1), node order ascending in x.
        """
        vinv = vandermonde_inv(deg)
        coeffs = values @ vinv.T
        return cls(breaks, coeffs)

    @classmethod
    def adaptive(cls, fun, tol=1e-13, deg=16, max_panels=4096, min_width=1e-9,
                 initial_panels=16):
        """Interpolate a smooth periodic callable, splitting panels until the
        Chebyshev tail per panel is below ``tol`` (relative to the global scale).
        """
        nodes01 = cheb_nodes(deg)
        vinv = vandermonde_inv(deg)

        def panel_data(lo, hi):
            x = lo + (hi - lo) * nodes01
            vals = np.asarray(fun(x), dtype=float)
            return vals @ vinv.T

        work = [(i / initial_panels, (i + 1) / initial_panels) for i in range(initial_panels)]
        done = []
        scale = 1.0
        while work:
            lo, hi = work.pop()
            coef = panel_data(lo, hi)
            scale = max(scale, float(np.max(np.abs(coef))))
            tail = float(np.max(np.abs(coef[-2:])))
            if tail <= tol * scale or hi - lo <= min_width:
                done.append((lo, hi, coef))
            else:
                if len(done) + len(work) + 2 > max_panels:
                    raise ConstructionError("adaptive interpolation exceeded panel budget")
                mid = 0.5 * (lo + hi)
                work.append((lo, mid))
                work.append((mid, hi))
        done.sort(key=lambda rec: rec[0])
        breaks = np.array([rec[0] for rec in done] + [1.0])
        coeffs = np.array([rec[2] for rec in done])
        return cls(breaks, coeffs)

    def to_json(self):
        return {"breaks": self.breaks.tolist(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["breaks"]), np.array(obj["coeffs"]))
