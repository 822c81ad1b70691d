"""Vector fields v, w and the flow maps behind the perfectness step.

Both fields are non-negative, supported in (1/5, 4/5), with the sign
pattern that makes the commutator displacement of their flows strictly
positive on [11/50, 39/50]:

    v(x) = step((x - 0.2)/0.01) * (1 - step((x - 0.21)/0.575))
    w(x) = v(1 - x)

f_t and g_t are the time-t flows of -w and -v.  The composite family

    h_t = [R f_t R, R g_t R] o [f_t, g_t]          (R the half turn)

has strictly positive displacement for small t > 0, so its rotation
number leaves 0 and the t-scan can target Diophantine values.

Flow maps are realized through one dense-output integration per
(field, time-sign): trajectories start from the nodes of an adaptively
refined panelization of the circle, and each requested time t is turned
into a piecewise-Chebyshev interpolant of the displacement and of the
exact variational derivative.  A fixed-step RK4 integrator is kept as an
independent oracle.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .core import Diffeo, Identity, Rotation, commutator, compose, frac
from .errors import ConstructionError, NumericalError, PreconditionError
from .smooth import PeriodicChebFun, cheb_nodes, step, step_deriv, vandermonde_inv


class VectorField:
    """A smooth field on the circle with evaluator and exact derivative."""

    def __init__(self, field_id, fun, dfun, support_interval):
        self.field_id = field_id
        self._fun = fun
        self._dfun = dfun
        self.support_interval = support_interval

    def __call__(self, x):
        return self._fun(np.asarray(x, dtype=float))

    def d(self, x):
        return self._dfun(np.asarray(x, dtype=float))


def _v_raw(x):
    return step((x - 0.2) / 0.01) * (1.0 - step((x - 0.21) / 0.575))


def _v_raw_d(x):
    up = step((x - 0.2) / 0.01)
    dn = 1.0 - step((x - 0.21) / 0.575)
    dup = step_deriv((x - 0.2) / 0.01) / 0.01
    ddn = -step_deriv((x - 0.21) / 0.575) / 0.575
    return dup * dn + up * ddn


def build_fields(grid=4096):
    """The pair (v, w) with all five sign/support constraints verified on a grid."""
    v = VectorField("v", lambda x: _v_raw(frac(x)), lambda x: _v_raw_d(frac(x)),
                    (0.2, 0.8))
    w = VectorField("w", lambda x: _v_raw(1.0 - frac(x)),
                    lambda x: -_v_raw_d(1.0 - frac(x)), (0.2, 0.8))
    x = np.arange(grid) / grid
    checks = [
        ("v,w non-negative", np.all(v(x) >= 0.0) and np.all(w(x) >= 0.0)),
        ("supported in (1/5,4/5)",
         np.all(v(x[(x <= 0.2) | (x >= 0.8)]) == 0.0)
         and np.all(w(x[(x <= 0.2) | (x >= 0.8)]) == 0.0)),
        ("v'<0 and w'>0 on [11/50,39/50]",
         np.all(v.d(x[(x >= 0.22) & (x <= 0.78)]) < 0.0)
         and np.all(w.d(x[(x >= 0.22) & (x <= 0.78)]) > 0.0)),
        ("v'<=0 and w'>=0 on [21/100,79/100]",
         np.all(v.d(x[(x >= 0.21) & (x <= 0.79)]) <= 0.0)
         and np.all(w.d(x[(x >= 0.21) & (x <= 0.79)]) >= 0.0)),
        ("v=0 on [157/200,4/5)", np.all(v(x[(x >= 0.785) & (x < 0.8)]) == 0.0)),
        ("w=0 on (1/5,43/200]", np.all(w(x[(x > 0.2) & (x <= 0.215)]) == 0.0)),
    ]
    for name, ok in checks:
        if not ok:
            raise ConstructionError(f"field constraint failed: {name}")
    return v, w


class FlowBackend:
    """Dense trajectories of x' = -field(x) from panel nodes, one solve per
    (field, sign of t), plus per-time interpolants with an LRU cache.

    The variational factor J(t, x) = d/dx of the time-t map is integrated
    alongside as log J' = -field'(x(t)), so flow-map derivatives come from
    the ODE rather than from differencing.
    """

    def __init__(self, fields, t_max=1.0, rtol=1e-12, atol=1e-13, deg=16,
                 panel_tol=1e-12, max_panels=1024, cache_size=512):
        self.fields = {f.field_id: f for f in fields}
        self.t_max = float(t_max)
        self.rtol = rtol
        self.atol = atol
        self.deg = deg
        self.panel_tol = panel_tol
        self.max_panels = max_panels
        self._nodes01 = cheb_nodes(deg)
        self._vinv = vandermonde_inv(deg)
        self._solutions = {}
        self._cache = {}
        self._cache_order = []
        self._cache_size = cache_size

    # -- direct integration ------------------------------------------------

    def _rhs(self, field):
        def rhs(_t, y):
            half = len(y) // 2
            x = y[:half]
            return np.concatenate([-field(x), -field.d(x)])
        return rhs

    def integrate(self, field_id, t, x0, dense=False, t_span=None):
        """Adaptive integration from arbitrary initial points; returns
        (x_t, J_t) or the solver object when dense=True."""
        field = self.fields[field_id]
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        y0 = np.concatenate([x0, np.zeros_like(x0)])
        span = t_span if t_span is not None else (0.0, t)
        if span[0] == span[1]:
            if dense:
                raise PreconditionError("dense solve needs a nonzero time span")
            return x0, np.ones_like(x0)
        sol = solve_ivp(self._rhs(field), span, y0, method="DOP853",
                        dense_output=dense, rtol=self.rtol, atol=self.atol,
                        t_eval=None if dense else [span[1]])
        if not sol.success:
            raise NumericalError(f"flow integration failed: {sol.message}")
        if dense:
            return sol
        half = len(x0)
        return sol.y[:half, -1], np.exp(sol.y[half:, -1])

    def rk4_reference(self, field_id, t, x0, n_steps=4096):
        """Fixed-step RK4 oracle for cross-checks."""
        field = self.fields[field_id]
        x = np.asarray(x0, dtype=float) + 0.0
        h = t / n_steps
        for _ in range(n_steps):
            k1 = -field(x)
            k2 = -field(x + 0.5 * h * k1)
            k3 = -field(x + 0.5 * h * k2)
            k4 = -field(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return x

    # -- panelization ------------------------------------------------------

    def _panel_nodes(self, breaks):
        lo = breaks[:-1, None]
        wid = np.diff(breaks)[:, None]
        return (lo + wid * self._nodes01[None, :]).ravel()

    def _fit_values(self, breaks, values):
        vals = values.reshape(len(breaks) - 1, self.deg + 1)
        return vals @ self._vinv.T

    def _ensure_solution(self, field_id, sign):
        key = (field_id, sign)
        if key in self._solutions:
            return self._solutions[key]
        breaks = np.linspace(0.0, 1.0, 65)
        t_refs = [sign * self.t_max, 0.5 * sign * self.t_max]
        for _round in range(12):
            nodes = self._panel_nodes(breaks)
            field = self.fields[field_id]
            y0 = np.concatenate([nodes, np.zeros_like(nodes)])
            sol = solve_ivp(self._rhs(field), (0.0, sign * self.t_max), y0,
                            method="DOP853", rtol=self.rtol, atol=self.atol,
                            t_eval=t_refs)
            if not sol.success:
                raise NumericalError(f"panel probe failed: {sol.message}")
            bad = np.zeros(len(breaks) - 1, dtype=bool)
            for col in range(sol.y.shape[1]):
                disp = sol.y[: len(nodes), col] - nodes
                coeffs = self._fit_values(breaks, disp)
                scale = max(1e-9, float(np.max(np.abs(coeffs))))
                tails = np.max(np.abs(coeffs[:, -2:]), axis=1)
                bad |= tails > self.panel_tol * scale
            if not np.any(bad):
                break
            if len(breaks) - 1 + np.sum(bad) > self.max_panels:
                raise NumericalError("flow panelization exceeded panel budget")
            new_breaks = []
            for i, split in enumerate(bad):
                new_breaks.append(breaks[i])
                if split:
                    new_breaks.append(0.5 * (breaks[i] + breaks[i + 1]))
            new_breaks.append(1.0)
            breaks = np.array(new_breaks)
        else:
            raise NumericalError("flow panelization did not converge")
        nodes = self._panel_nodes(breaks)
        dense = self.integrate(field_id, None, nodes, dense=True,
                               t_span=(0.0, sign * self.t_max))
        self._solutions[key] = (breaks, nodes, dense)
        return self._solutions[key]

    def maps_at(self, field_id, t):
        """(displacement, derivative) interpolants of the time-t flow map."""
        t = float(t)
        if abs(t) > self.t_max:
            raise PreconditionError(f"|t|={abs(t):.3g} beyond backend horizon {self.t_max}")
        key = (field_id, t)
        if key in self._cache:
            return self._cache[key]
        if t == 0.0:
            raise PreconditionError("t=0 handled by Identity fast path")
        sign = 1.0 if t > 0 else -1.0
        breaks, nodes, dense = self._ensure_solution(field_id, sign)
        y = dense.sol(t)
        half = len(nodes)
        disp_fun = PeriodicChebFun(breaks, self._fit_values(breaks, y[:half] - nodes))
        deriv_fun = PeriodicChebFun(breaks, self._fit_values(breaks, np.exp(y[half:])))
        pair = (disp_fun, deriv_fun)
        self._cache[key] = pair
        self._cache_order.append(key)
        if len(self._cache_order) > self._cache_size:
            dead = self._cache_order.pop(0)
            self._cache.pop(dead, None)
        return pair


class FlowMap(Diffeo):
    """Time-t map of the flow x' = -field(x), backed by interpolants.

    The inverse is the time-(-t) map of the same field (exact group
    inverse), so inverse evaluation costs the same as forward evaluation.
    """

    kind = "flow"

    def __init__(self, backend: FlowBackend, field_id: str, t: float):
        if field_id not in backend.fields:
            raise ConstructionError(f"unresolved flow field id {field_id!r}")
        self.backend = backend
        self.field_id = field_id
        self.t = float(t)

    def _maps(self, t):
        return self.backend.maps_at(self.field_id, t)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        if self.t == 0.0:
            return x + 0.0
        disp, _ = self._maps(self.t)
        return x + disp(x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.t == 0.0:
            return np.ones_like(x)
        _, dv = self._maps(self.t)
        return dv(x)

    def inverse_lift(self, y):
        y = np.asarray(y, dtype=float)
        if self.t == 0.0:
            return y + 0.0
        disp, _ = self._maps(-self.t)
        return y + disp(y)

    def inverse(self):
        return FlowMap(self.backend, self.field_id, -self.t)

    def params_json(self):
        return {"field": self.field_id, "t": self.t}

    def __repr__(self):
        return f"<FlowMap {self.field_id} t={self.t:.6g}>"


class FlowFamily:
    """The flows f_t, g_t of -w and -v, the half turn, and h_t.

    Holds the shared backend; ``t0`` and ``rho0`` are attached once by the
    rotation-number scan and treated as frozen afterwards.
    """

    def __init__(self, t_max=1.0, rtol=1e-12, atol=1e-13, grid=4096, panel_tol=1e-12):
        self.v, self.w = build_fields(grid)
        self.backend = FlowBackend((self.v, self.w), t_max=t_max, rtol=rtol,
                                   atol=atol, panel_tol=panel_tol)
        self.half_turn = Rotation(0.5)
        self.t0 = None
        self.rho0 = None
        self._linearization = None

    def f(self, t) -> Diffeo:
        """Flow of -w at time t."""
        return Identity() if t == 0.0 else FlowMap(self.backend, "w", t)

    def g(self, t) -> Diffeo:
        """Flow of -v at time t."""
        return Identity() if t == 0.0 else FlowMap(self.backend, "v", t)

    def h(self, t) -> Diffeo:
        """[R f_t R, R g_t R] o [f_t, g_t]."""
        if t == 0.0:
            return Identity()
        R = self.half_turn
        ft, gt = self.f(t), self.g(t)
        outer = commutator(compose(R, ft, R), compose(R, gt, R))
        return compose(outer, commutator(ft, gt))

    def set_t0(self, t0, rho0):
        if self.t0 is not None:
            raise PreconditionError("t0 already fixed for this family")
        self.t0 = float(t0)
        self.rho0 = float(rho0)

    def flow_resolver(self):
        backend = self.backend
        return lambda field_id, t: FlowMap(backend, field_id, t)

    def to_json(self):
        return {"t0": self.t0, "rho0": self.rho0, "t_max": self.backend.t_max}


def build_ht(t, family: FlowFamily) -> Diffeo:
    return family.h(t)
