"""Circle diffeomorphisms as evaluable expression trees.

A map is represented by its lift F: R -> R with F(x+1) = F(x) + 1 and
F' > 0.  Expression nodes (rotations, explicit primitives, flow maps,
compositions, inverses, integer powers) each know how to evaluate their
lift, its derivative, and its inverse, vectorized over numpy arrays.
Nothing is ever discretized at construction time: a word of thousands of
letters evaluates by chaining through the tree, so pointwise error stays
at the roundoff of the participating primitives.

Module-level helpers provide the weighted C^r metric, support
computation, validation, and JSON serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, InvalidDiffeoError, NumericalError
from .smooth import (
    PeriodicChebFun,
    flat_step,
    flat_step_deriv,
)


def frac(x):
    """Fractional part in [0, 1)."""
    return np.mod(x, 1.0)


def wrap_half(d):
    """Reduce a displacement to the representative in [-1/2, 1/2)."""
    return d - np.round(d)


def circle_dist(a, b):
    """Distance on R/Z between two angle arrays."""
    return np.abs(wrap_half(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


# ---------------------------------------------------------------------------
# Intervals on the circle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """An arc [left, right] inside [0, 1]; arcs crossing 0 are stored as
    two pieces by the functions that produce them."""

    left: float
    right: float
    left_open: bool = True
    right_open: bool = True

    def __post_init__(self):
        right = float(self.right)
        if 1.0 < right <= 1.0 + 1e-12:
            right = 1.0
        object.__setattr__(self, "left", float(self.left))
        object.__setattr__(self, "right", right)
        if not (0.0 <= self.left < self.right <= 1.0):
            raise ConstructionError(f"bad interval [{self.left}, {self.right}]")

    @property
    def length(self):
        return self.right - self.left

    @property
    def mid(self):
        return 0.5 * (self.left + self.right)

    def contains_point(self, x, strict=False):
        lo = self.left
        hi = self.right
        if strict or self.left_open:
            okl = x > lo
        else:
            okl = x >= lo
        if strict or self.right_open:
            okr = x < hi
        else:
            okr = x <= hi
        return okl and okr

    def contains_interval(self, other, margin=0.0):
        return other.left >= self.left + margin and other.right <= self.right - margin

    def intersects(self, other):
        return not (other.right <= self.left or other.left >= self.right)

    def shifted(self, delta):
        """Shift mod 1; returns one or two pieces."""
        lo = frac(np.array(self.left + delta)).item()
        hi = lo + self.length
        if hi <= 1.0 + 1e-15:
            return [Interval(lo, min(hi, 1.0), self.left_open, self.right_open)]
        return [
            Interval(lo, 1.0, self.left_open, False),
            Interval(0.0, hi - 1.0, False, self.right_open),
        ]

    def grid(self, n):
        return np.linspace(self.left, self.right, n)

    def to_json(self):
        return {"left": self.left, "right": self.right,
                "left_open": self.left_open, "right_open": self.right_open}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["left"], obj["right"], obj.get("left_open", True),
                   obj.get("right_open", True))


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------

class Diffeo:
    """Base class: an orientation-preserving circle diffeomorphism."""

    kind = "abstract"

    def lift(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def inverse_lift(self, y):
        """Solve lift(x) = y; default safeguarded bisection + Newton."""
        return _generic_inverse(self, y)

    def __call__(self, x):
        return frac(self.lift(x))

    def disp(self, x):
        return self.lift(x) - np.asarray(x, dtype=float)

    def inverse(self):
        return Inverse(self)

    def then(self, other):
        """self followed by other, i.e. other o self."""
        return Compose(other, self)

    def disp_range(self, n=256):
        """Coarse (min, max) of the lift displacement, padded; used for
        inversion brackets."""
        x = np.arange(n) / n
        d = self.disp(x)
        pad = 2.0 * (np.max(d) - np.min(d)) / n + 1e-9
        return float(np.min(d) - pad), float(np.max(d) + pad)

    def params_json(self):
        return {}

    def to_json(self):
        return {"type": self.kind, **self.params_json()}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    def __repr__(self):
        return f"<{type(self).__name__}>"


def _generic_inverse(f, y, tol=1e-14, max_newton=60):
    """Vectorized monotone inversion of a lift: bracket from displacement
    bounds, bisect to a safe width, polish with safeguarded Newton."""
    y, scalar = _as_array(y)
    ys = y.ravel()
    dmin, dmax = f.disp_range()
    lo = ys - dmax
    hi = ys - dmin
    # monotone lift guarantees a sign change once the bracket is wide enough
    for widen in range(8):
        bad = (f.lift(lo) - ys > 0) | (f.lift(hi) - ys < 0)
        if not np.any(bad):
            break
        pad = 2.0 ** widen
        lo = np.where(bad, lo - pad, lo)
        hi = np.where(bad, hi + pad, hi)
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        fm = f.lift(mid) - ys
        take_lo = fm <= 0.0
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(max_newton):
        fx = f.lift(x) - ys
        if np.all(np.abs(fx) < tol):
            break
        dfx = f.deriv(x)
        step = fx / np.maximum(dfx, 1e-300)
        xn = x - step
        # keep iterates inside the bracket; fall back to bisection otherwise
        outside = (xn < lo) | (xn > hi)
        xn = np.where(outside, 0.5 * (lo + hi), xn)
        fxn = f.lift(xn) - ys
        lo = np.where(fxn <= 0.0, xn, lo)
        hi = np.where(fxn <= 0.0, hi, xn)
        x = xn
    else:
        fx = f.lift(x) - ys
        if np.any(np.abs(fx) > 1e-11):
            worst = int(np.argmax(np.abs(fx)))
            raise NumericalError(
                f"inverse solve stalled, |residual|={np.max(np.abs(fx)):.2e}",
                state={"y": float(ys[worst]), "lo": float(lo[worst]), "hi": float(hi[worst])},
            )
    x = x.reshape(y.shape)
    return x.item() if scalar else x


class Identity(Diffeo):
    kind = "identity"

    def lift(self, x):
        return np.asarray(x, dtype=float) + 0.0

    def deriv(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def inverse_lift(self, y):
        return np.asarray(y, dtype=float) + 0.0

    def inverse(self):
        return self


class Rotation(Diffeo):
    kind = "rotation"

    def __init__(self, alpha):
        self.alpha = float(alpha)

    def lift(self, x):
        return np.asarray(x, dtype=float) + self.alpha

    def deriv(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def inverse_lift(self, y):
        return np.asarray(y, dtype=float) - self.alpha

    def inverse(self):
        return Rotation(-self.alpha)

    def params_json(self):
        return {"alpha": self.alpha}

    def __repr__(self):
        return f"<Rotation {self.alpha:.6g}>"


HALF_TURN = Rotation(0.5)


class TwoFixedPointMap(Diffeo):
    """Morse-Smale map with a repelling fixed point at 1/2 (slope lam) and
    an attracting one at 0 == 1 (slope mu = 1/lam).

    Affine with slope lam on (1/10, 9/10) and slope mu outside
    (1/100, 99/100); the two gluing bands carry a C-infinity increasing
    blend whose derivative profile is an explicit Chebyshev series, so
    evaluation everywhere is exact-to-roundoff and fast.  The map is
    symmetric under x -> 1 - x, so one blend serves both bands.
    """

    kind = "two_fixed_point"
    A, B = 0.01, 0.1  # left gluing band

    def __init__(self, lam, _deg=900):
        if not (1.0 < lam < 1.237):
            raise ConstructionError(f"lambda {lam} outside feasible range (1, 1.237)")
        self.lam = float(lam)
        self.mu = 1.0 / self.lam
        a, b = self.A, self.B
        w = b - a
        va = self.mu * a
        vb = 0.5 - 0.4 * self.lam
        delta = vb - va
        if delta <= 0:
            raise ConstructionError("gluing infeasible: value gap non-positive")
        from numpy.polynomial.chebyshev import Chebyshev
        from .smooth import plateau
        theta = Chebyshev.interpolate(lambda x: flat_step((x - a) / w), _deg, domain=[a, b])
        pi_ = Chebyshev.interpolate(lambda x: plateau((x - a) / w), _deg, domain=[a, b])
        for series, name in ((theta, "step"), (pi_, "plateau")):
            tail = np.max(np.abs(series.coef[-4:]))
            if tail > 1e-11:
                raise ConstructionError(f"{name} blend tail {tail:.1e} too large")
        i_theta = float(theta.integ(lbnd=a)(b))
        i_pi = float(pi_.integ(lbnd=a)(b))
        c = (delta - self.mu * w - (self.lam - self.mu) * i_theta) / i_pi
        phi = self.mu + (self.lam - self.mu) * theta + c * pi_
        dense = np.linspace(a, b, 4001)
        phi_min = float(np.min(phi(dense)))
        if phi_min <= 1e-3:
            raise ConstructionError(
                f"blend derivative reaches {phi_min:.3e}; lambda {lam} infeasible")
        self._phi = phi
        self._G = phi.integ(lbnd=a) + va
        self._phi_min = phi_min
        gb = float(self._G(b))
        if abs(gb - vb) > 1e-12:
            raise ConstructionError(f"blend endpoint off by {gb - vb:.2e}")

    def _value01(self, u):
        lam, mu = self.lam, self.mu
        out = np.empty_like(u)
        m0 = u <= self.A
        m1 = (u > self.A) & (u < self.B)
        m2 = (u >= self.B) & (u <= 1.0 - self.B)
        m3 = (u > 1.0 - self.B) & (u < 1.0 - self.A)
        m4 = u >= 1.0 - self.A
        out[m0] = mu * u[m0]
        out[m1] = self._G(u[m1])
        out[m2] = 0.5 + lam * (u[m2] - 0.5)
        out[m3] = 1.0 - self._G(1.0 - u[m3])
        out[m4] = 1.0 + mu * (u[m4] - 1.0)
        return out

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        base = np.floor(x)
        return base + self._value01(x - base)

    def deriv(self, x):
        u = frac(np.asarray(x, dtype=float))
        lam, mu = self.lam, self.mu
        out = np.empty_like(u)
        m0 = (u <= self.A) | (u >= 1.0 - self.A)
        m1 = (u > self.A) & (u < self.B)
        m2 = (u >= self.B) & (u <= 1.0 - self.B)
        m3 = (u > 1.0 - self.B) & (u < 1.0 - self.A)
        out[m0] = mu
        out[m1] = self._phi(u[m1])
        out[m2] = lam
        out[m3] = self._phi(1.0 - u[m3])
        return out

    def inverse_lift(self, y):
        y = np.asarray(y, dtype=float)
        base = np.floor(y)
        v = y - base
        lam, mu = self.lam, self.mu
        ya = mu * self.A          # value at band start
        yb = 0.5 - 0.4 * lam      # value at band end
        out = np.empty_like(v)
        m0 = v <= ya
        m1 = (v > ya) & (v < yb)
        m2 = (v >= yb) & (v <= 1.0 - yb)
        m3 = (v > 1.0 - yb) & (v < 1.0 - ya)
        m4 = v >= 1.0 - ya
        out[m0] = v[m0] / mu
        if np.any(m1):
            out[m1] = self._invert_band(v[m1])
        out[m2] = 0.5 + (v[m2] - 0.5) / lam
        if np.any(m3):
            out[m3] = 1.0 - self._invert_band(1.0 - v[m3])
        out[m4] = 1.0 + (v[m4] - 1.0) / mu
        return base + out

    def _invert_band(self, v):
        lo = np.full_like(v, self.A)
        hi = np.full_like(v, self.B)
        x = 0.5 * (lo + hi)
        for _ in range(64):
            fx = self._G(x) - v
            dfx = self._phi(x)
            lo = np.where(fx <= 0.0, x, lo)
            hi = np.where(fx <= 0.0, hi, x)
            xn = x - fx / dfx
            bad = (xn <= lo) | (xn >= hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            if np.all(np.abs(xn - x) < 1e-16):
                x = xn
                break
            x = xn
        return x

    def params_json(self):
        return {"lam": self.lam}

    def __repr__(self):
        return f"<TwoFixedPointMap lam={self.lam:.6g}>"


class BumpTranslation(Diffeo):
    """x -> x + amp * psi(x) with psi a flat-topped bump: psi = 0 outside
    (a, d), psi = 1 exactly on [b, c], C-infinity ramps between.

    The ramps use the low-slope ``flat_step``, keeping |psi'| small enough
    that the map stays a diffeomorphism for the amplitudes used here.
    """

    kind = "bump_translation"

    def __init__(self, a, b, c, d, amp):
        if not (0.0 <= a < b <= c < d <= 1.0):
            raise ConstructionError(f"bad bump knots {(a, b, c, d)}")
        self.a, self.b, self.c, self.d, self.amp = float(a), float(b), float(c), float(d), float(amp)
        dense = np.linspace(a, d, 4001)
        worst = float(np.max(np.abs(self.amp * self._psi_deriv(dense))))
        if worst >= 0.95:
            raise ConstructionError(f"bump too steep: |amp*psi'| reaches {worst:.3f}")
        self._min_deriv = 1.0 - worst

    def _psi(self, u):
        up = flat_step((u - self.a) / (self.b - self.a))
        down = flat_step((self.d - u) / (self.d - self.c))
        return up * down

    def _psi_deriv(self, u):
        up = flat_step((u - self.a) / (self.b - self.a))
        down = flat_step((self.d - u) / (self.d - self.c))
        dup = flat_step_deriv((u - self.a) / (self.b - self.a)) / (self.b - self.a)
        ddown = -flat_step_deriv((self.d - u) / (self.d - self.c)) / (self.d - self.c)
        return dup * down + up * ddown

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.amp * self._psi(frac(x))

    def deriv(self, x):
        return 1.0 + self.amp * self._psi_deriv(frac(np.asarray(x, dtype=float)))

    def params_json(self):
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d, "amp": self.amp}

    def __repr__(self):
        return (f"<BumpTranslation ({self.a:.3g},{self.b:.3g},{self.c:.3g},"
                f"{self.d:.3g}) amp={self.amp:.3g}>")


class FourierDisplacement(Diffeo):
    """x -> x + u(x) with u a real trigonometric polynomial.

    Coefficients: u(x) = c0 + sum_k ac[k-1] cos(2 pi k x) + bs[k-1] sin(2 pi k x).
    Used for linearization conjugacies and synthetic perturbations.
    """

    kind = "fourier"

    def __init__(self, c0, ac, bs, validate=True):
        self.c0 = float(c0)
        self.ac = np.asarray(ac, dtype=float)
        self.bs = np.asarray(bs, dtype=float)
        if self.ac.shape != self.bs.shape:
            raise ConstructionError("cos/sin coefficient arrays must match")
        k = np.arange(1, len(self.ac) + 1)
        self._w = self.ac - 1j * self.bs
        self._wd = 2.0 * np.pi * k * (self.bs + 1j * self.ac)
        if validate and len(self.ac):
            dense = np.arange(4096) / 4096.0
            worst = float(np.min(self.deriv(dense)))
            if worst <= 1e-6:
                raise ConstructionError(f"fourier map derivative reaches {worst:.2e}")

    @classmethod
    def from_samples(cls, values, drop_tol=1e-15, validate=True):
        """Fit the trig polynomial interpolating periodic samples of u."""
        values = np.asarray(values, dtype=float)
        m = len(values)
        U = np.fft.rfft(values) / m
        c0 = float(U[0].real)
        ac = 2.0 * U[1:].real
        bs = -2.0 * U[1:].imag
        if m % 2 == 0:
            ac[-1] *= 0.5  # Nyquist mode appears once
        scale = max(np.max(np.abs(ac), initial=0.0), np.max(np.abs(bs), initial=0.0), 1e-300)
        live = np.nonzero((np.abs(ac) > drop_tol * scale) | (np.abs(bs) > drop_tol * scale))[0]
        kmax = int(live[-1]) + 1 if len(live) else 0
        return cls(c0, ac[:kmax], bs[:kmax], validate=validate)

    def _horner(self, coef, x):
        if len(coef) == 0:
            return np.zeros_like(x)
        z = np.exp(2j * np.pi * x)
        s = np.zeros_like(z)
        for w in coef[::-1]:
            s = (s + w) * z
        return s.real

    def u(self, x):
        return self.c0 + self._horner(self._w, np.asarray(x, dtype=float))

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.u(x)

    def deriv(self, x):
        return 1.0 + self._horner(self._wd, np.asarray(x, dtype=float))

    def inverse_lift(self, y):
        y, scalar = _as_array(y)
        x = y - self.c0
        for _ in range(80):
            r = self.lift(x) - y
            if np.all(np.abs(r) < 1e-14):
                break
            x = x - r / self.deriv(x)
        else:
            raise NumericalError("fourier inverse did not converge",
                                 state={"residual": float(np.max(np.abs(self.lift(x) - y)))})
        return x.item() if scalar else x

    def normalized(self):
        """Compose with a rotation so that the map fixes 0."""
        return FourierDisplacement(self.c0 - float(self.u(0.0)), self.ac, self.bs,
                                   validate=False)

    def params_json(self):
        return {"c0": self.c0, "ac": self.ac.tolist(), "bs": self.bs.tolist()}

    def __repr__(self):
        return f"<FourierDisplacement K={len(self.ac)}>"


class SampledDiffeo(Diffeo):
    """Grid-compiled map: displacement (and derivative) as periodic
    piecewise-Chebyshev interpolants.  Used to accelerate orbit iteration
    of expensive composites; accuracy is set by the fitting tolerance."""

    kind = "sampled"

    def __init__(self, disp_fun: PeriodicChebFun, deriv_fun: PeriodicChebFun | None = None):
        self._disp = disp_fun
        self._deriv = deriv_fun if deriv_fun is not None else disp_fun.derivative()
        self._deriv_is_slope = deriv_fun is None

    @classmethod
    def compile(cls, f: Diffeo, tol=1e-13, deg=16, max_panels=4096):
        disp = PeriodicChebFun.adaptive(lambda x: f.disp(x), tol=tol, deg=deg,
                                        max_panels=max_panels)
        return cls(disp)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return x + self._disp(x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        d = self._deriv(x)
        return 1.0 + d if self._deriv_is_slope else d

    def params_json(self):
        return {"disp": self._disp.to_json()}


class Compose(Diffeo):
    """f o g: apply g first."""

    kind = "compose"

    def __init__(self, f, g):
        self.f = f
        self.g = g

    def lift(self, x):
        return self.f.lift(self.g.lift(x))

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        gx = self.g.lift(x)
        return self.f.deriv(gx) * self.g.deriv(x)

    def inverse_lift(self, y):
        return self.g.inverse_lift(self.f.inverse_lift(y))

    def inverse(self):
        return Compose(self.g.inverse(), self.f.inverse())

    def params_json(self):
        return {"f": self.f.to_json(), "g": self.g.to_json()}


class Inverse(Diffeo):
    kind = "inverse"

    def __init__(self, f):
        self.f = f

    def lift(self, x):
        return self.f.inverse_lift(x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        xi = self.f.inverse_lift(x)
        return 1.0 / self.f.deriv(xi)

    def inverse_lift(self, y):
        return self.f.lift(y)

    def inverse(self):
        return self.f

    def params_json(self):
        return {"f": self.f.to_json()}


class Power(Diffeo):
    """Integer power by repeated application; Power(f, 0) is the identity."""

    kind = "power"

    def __init__(self, f, k):
        self.f = f
        self.k = int(k)

    def lift(self, x):
        y = np.asarray(x, dtype=float) + 0.0
        if self.k >= 0:
            for _ in range(self.k):
                y = self.f.lift(y)
        else:
            for _ in range(-self.k):
                y = self.f.inverse_lift(y)
        return y

    def deriv(self, x):
        y = np.asarray(x, dtype=float) + 0.0
        d = np.ones_like(y)
        if self.k >= 0:
            for _ in range(self.k):
                d = d * self.f.deriv(y)
                y = self.f.lift(y)
        else:
            for _ in range(-self.k):
                y = self.f.inverse_lift(y)
                d = d / self.f.deriv(y)
        return d

    def inverse_lift(self, y):
        return Power(self.f, -self.k).lift(y)

    def inverse(self):
        return Power(self.f, -self.k)

    def params_json(self):
        return {"f": self.f.to_json(), "k": self.k}


def compose(*maps):
    """compose(f, g, h) = f o g o h (rightmost applied first)."""
    maps = [m for m in maps if not isinstance(m, Identity)]
    if not maps:
        return Identity()
    out = maps[-1]
    for m in maps[-2::-1]:
        out = Compose(m, out)
    return out


def conjugate(u, f):
    """u f u^-1."""
    return compose(u, f, u.inverse())


def commutator(f, g):
    """[f, g] = f g f^-1 g^-1."""
    return compose(f, g, f.inverse(), g.inverse())


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def eval_point(f, x):
    """Circle value f(x) in [0, 1)."""
    return f(x)


def eval_inverse(f, y, check_tol=1e-13):
    """Point x with f(x) = y to within ``check_tol`` on the circle."""
    x = f.inverse_lift(np.asarray(y, dtype=float))
    err = circle_dist(f(x), y)
    if np.max(err) >= check_tol:
        raise NumericalError(f"inverse residual {np.max(err):.2e} above {check_tol:g}")
    return frac(x)


def derivative(f, x):
    d = f.deriv(x)
    if np.min(d) <= 0.0:
        raise InvalidDiffeoError(f"derivative {np.min(d):.3e} <= 0 at a probe point")
    return d


def validate_diffeo(f, grid_size=4096):
    """Check monotonicity of the lift and positivity of the derivative on a grid."""
    x = np.arange(grid_size) / grid_size
    d = f.deriv(x)
    if np.min(d) <= 0.0:
        i = int(np.argmin(d))
        raise InvalidDiffeoError(f"derivative {d[i]:.3e} at x={x[i]:.6f}")
    lifted = f.lift(x)
    if np.any(np.diff(lifted) <= 0.0):
        raise InvalidDiffeoError("lift not strictly increasing on the sample grid")
    return True


@dataclass(frozen=True)
class MetricConfig:
    """Weighted C^r metric: d(f,g) = sum_r weights[r] * min(1, ||f-g||_{C^r,grid}).

    The C^0 term measures displacement reduced to [-1/2, 1/2); order-1 uses
    exact derivatives; orders >= 2 apply centered finite differences to the
    order-1 samples with step 1/grid_size.
    """

    max_order: int = 3
    grid_size: int = 4096
    weights: tuple = field(default=None)

    def __post_init__(self):
        if self.grid_size < 64:
            raise ConstructionError("metric grid_size must be >= 64")
        if self.weights is None:
            object.__setattr__(self, "weights",
                               tuple(0.5 ** r for r in range(self.max_order + 1)))
        elif len(self.weights) != self.max_order + 1:
            raise ConstructionError("need one weight per order 0..R")


def seminorms(f, g, cfg: MetricConfig):
    """The per-order sup seminorms entering the metric, before min(1, .)."""
    x = np.arange(cfg.grid_size) / cfg.grid_size
    vals = [float(np.max(np.abs(wrap_half(f.lift(x) - g.lift(x)))))]
    if cfg.max_order >= 1:
        d = f.deriv(x) - g.deriv(x)
        vals.append(float(np.max(np.abs(d))))
        h = 1.0 / cfg.grid_size
        cur = d
        for _ in range(2, cfg.max_order + 1):
            cur = (np.roll(cur, -1) - np.roll(cur, 1)) / (2.0 * h)
            vals.append(float(np.max(np.abs(cur))))
    return vals


def distance(f, g, cfg: MetricConfig = MetricConfig()):
    """The weighted C^r metric on sampled representatives."""
    vals = seminorms(f, g, cfg)
    return float(sum(w * min(1.0, v) for w, v in zip(cfg.weights, vals)))


def c0_distance(f, g, grid_size=4096):
    x = np.arange(grid_size) / grid_size
    return float(np.max(np.abs(wrap_half(f.lift(x) - g.lift(x)))))


def support(f, tol, grid_size=4096):
    """Minimal union of grid-resolved intervals outside which |f(x)-x| <= tol.

    Runs of grid points with displacement above tol are merged (circularly)
    and padded by one grid step on each side; an arc crossing 0 comes back
    as two pieces.
    """
    if tol <= 0:
        raise ConstructionError("support tolerance must be positive")
    n = grid_size
    x = np.arange(n) / n
    mask = np.abs(wrap_half(f.disp(x))) > tol
    if not np.any(mask):
        return []
    if np.all(mask):
        return [Interval(0.0, 1.0, False, False)]
    # rotate so the array starts on a quiet point, then find runs
    start = int(np.argmin(mask))
    rolled = np.roll(mask, -start)
    edges = np.flatnonzero(np.diff(rolled.astype(int)))
    starts = edges[0::2] + 1
    ends = edges[1::2] + 1
    h = 1.0 / n
    pieces = []
    for s, e in zip(starts, ends):
        lo = frac(np.array((s + start - 1) * h)).item()
        hi_idx = (e + start) % n
        hi = hi_idx * h if hi_idx != 0 else 1.0
        if lo < hi:
            pieces.append(Interval(lo, hi, False, False))
        else:
            pieces.append(Interval(lo, 1.0, False, False))
            if hi > 0.0:
                pieces.append(Interval(0.0, hi, False, False))
    pieces.sort(key=lambda iv: iv.left)
    return pieces


def support_within(f, tol, region: Interval, grid_size=4096, margin=0.0):
    """True if every support piece of f sits inside ``region`` (enlarged by
    margin); returns (ok, overshoot)."""
    pieces = support(f, tol, grid_size)
    big = Interval(max(0.0, region.left - margin), min(1.0, region.right + margin),
                   False, False)
    overshoot = 0.0
    for piece in pieces:
        if not big.contains_interval(piece):
            overshoot = max(overshoot,
                            big.left - piece.left if piece.left < big.left else 0.0,
                            piece.right - big.right if piece.right > big.right else 0.0)
    return overshoot == 0.0, overshoot


def sample_rows(f, n):
    """Rows (x, f(x), f'(x)) for CSV export."""
    x = np.arange(n) / n
    return np.column_stack([x, f(x), f.deriv(x)])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def diffeo_from_json(obj, flow_resolver=None):
    """Rebuild a Diffeo from its JSON tree.

    ``flow_resolver(field_id, t)`` must return a FlowMap-compatible node;
    flow nodes without a resolver raise ConstructionError.
    """
    kind = obj["type"]
    rec = lambda sub: diffeo_from_json(sub, flow_resolver)
    if kind == "identity":
        return Identity()
    if kind == "rotation":
        return Rotation(obj["alpha"])
    if kind == "two_fixed_point":
        return TwoFixedPointMap(obj["lam"])
    if kind == "bump_translation":
        return BumpTranslation(obj["a"], obj["b"], obj["c"], obj["d"], obj["amp"])
    if kind == "fourier":
        return FourierDisplacement(obj["c0"], obj["ac"], obj["bs"], validate=False)
    if kind == "sampled":
        return SampledDiffeo(PeriodicChebFun.from_json(obj["disp"]))
    if kind == "compose":
        return Compose(rec(obj["f"]), rec(obj["g"]))
    if kind == "inverse":
        return Inverse(rec(obj["f"]))
    if kind == "power":
        return Power(rec(obj["f"]), obj["k"])
    if kind == "flow":
        if flow_resolver is None:
            raise ConstructionError(f"unresolved flow field id {obj['field']!r}")
        return flow_resolver(obj["field"], obj["t"])
    if kind == "slot_conjugation":
        from .generators import SlotConjugation
        return SlotConjugation.from_json(obj, flow_resolver)
    raise ConstructionError(f"unknown expression node type {kind!r}")
