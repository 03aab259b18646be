"""Pure-Python numerical core for the coupled 1-d system.

Mirrors ``_ckernels.AffineCore`` step for step so both backends agree to
rounding. This version accepts arbitrary Python callables for the fields.
"""
from __future__ import annotations

import math

from .errors import DomainError, FlowExitError, QuadratureError, RootNotFoundError

POT_A = 0
POT_B = 1

_MIN_DEPTH = 1
_TINY = 1e-300


class PyDsCore:
    def __init__(self, f, d, h, lo, hi, x_ref, quad_tol=1e-9, root_tol=1e-10,
                 max_depth=60, max_iter=200):
        self.f = f
        self.d = d
        self.h = h
        self.lo = float(lo)
        self.hi = float(hi)
        self.x_ref = float(x_ref)
        self.quad_tol = float(quad_tol)
        self.root_tol = float(root_tol)
        self.max_depth = int(max_depth)
        self.max_iter = int(max_iter)

    # -- integrands -------------------------------------------------------
    def pot_integrand(self, which, x):
        v = self.f(x)
        if which == POT_B:
            v = v + self.d(x)
        if not v > 0.0 or not math.isfinite(v):
            raise DomainError(f"vector field is not positive at x={x!r}")
        return 1.0 / v

    def _check_x(self, x):
        if not (self.lo < x < self.hi):
            raise DomainError(f"x={x!r} outside domain ({self.lo}, {self.hi})")

    # -- adaptive Simpson --------------------------------------------------
    def simpson(self, g, a, b):
        if a == b:
            return 0.0
        fa = g(a)
        fb = g(b)
        m = 0.5 * (a + b)
        fm = g(m)
        whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        scale = max(abs(whole), abs(b - a) * max(abs(fa), abs(fm), abs(fb)))
        eps = self.quad_tol * scale
        if eps == 0.0:
            eps = _TINY
        return self._simpson_rec(g, a, b, fa, fm, fb, whole, eps, 0)

    def _simpson_rec(self, g, a, b, fa, fm, fb, whole, eps, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = g(lm)
        frm = g(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= _MIN_DEPTH and abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        if depth >= self.max_depth:
            raise QuadratureError(
                f"adaptive Simpson exceeded depth {self.max_depth} on [{a!r}, {b!r}]")
        return (self._simpson_rec(g, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1)
                + self._simpson_rec(g, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))

    # -- potentials ---------------------------------------------------------
    def potential_diff(self, which, x0, x1):
        return self.simpson(lambda x: self.pot_integrand(which, x), x0, x1)

    def potential(self, which, x):
        self._check_x(x)
        return self.potential_diff(which, self.x_ref, x)

    def invert(self, which, v, x0=None, p0=None):
        """x with potential(x) == v, bracketing outward from the anchor (x0, p0)."""
        if x0 is None:
            x0, p0 = self.x_ref, 0.0
        if not math.isfinite(v):
            raise DomainError(f"potential value {v!r} is not finite")
        if v == p0:
            return x0
        s = 1.0 if v > p0 else -1.0
        bound = self.hi if s > 0 else self.lo
        step = abs(v - p0) / self.pot_integrand(which, x0) * 1.5
        if step == 0.0:
            step = 1e-12 * max(1.0, abs(x0))
        xa, pa = x0, p0
        for _ in range(self.max_iter):
            xb = xa + s * step
            if (xb - bound) * s >= 0.0:
                xb = xa + 0.5 * (bound - xa)
                if xb == xa:
                    break
            pb = pa + self.potential_diff(which, xa, xb)
            if (pb - v) * s >= 0.0:
                return self._bisect_potential(which, v, xa, pa, xb, pb)
            xa, pa = xb, pb
            step *= 2.0
        raise DomainError(f"potential value {v!r} is not attainable inside the domain")

    def _bisect_potential(self, which, v, xa, pa, xb, pb):
        # xa/pa is the side short of v; each midpoint integrates only [xa, mid]
        for _ in range(self.max_iter):
            mid = 0.5 * (xa + xb)
            pm = pa + self.potential_diff(which, xa, mid)
            r = pm - v
            if abs(r) <= self.root_tol or mid == xa or mid == xb:
                g = self.pot_integrand(which, mid)
                polished = mid - r / g
                lo_x, hi_x = (xa, xb) if xa < xb else (xb, xa)
                if lo_x < polished < hi_x:
                    return polished
                return mid
            if (pm - v) * (pb - v) > 0.0:
                xb, pb = mid, pm
            else:
                xa, pa = mid, pm
        raise RootNotFoundError(f"potential inversion did not converge for v={v!r}")

    # -- learned mappings ----------------------------------------------------
    def _coupled_integral(self, inner, c0, xa, pa, T):
        """Integral over [0, T] of exp(-tau) * h(P^-1(tau + c0)), P = A or B."""

        def g(tau):
            return math.exp(-tau) * self.h(self.invert(inner, tau + c0, xa, pa))

        return self.simpson(g, 0.0, T)

    def y2_slb(self, xslb, x2, y1, xi_t=1.0, xi_e=1.0):
        self._check_x(xslb)
        self._check_x(x2)
        T = self.potential_diff(POT_B, xslb, x2) / xi_t
        a2 = self.potential(POT_A, x2)
        integral = self._coupled_integral(POT_A, a2 - T, x2, a2, T)
        return math.exp(T) * (integral + y1) / xi_e

    def y2_trad(self, x1, x2, y1):
        self._check_x(x1)
        self._check_x(x2)
        T = self.potential_diff(POT_A, x1, x2)
        a1 = self.potential(POT_A, x1)
        integral = self._coupled_integral(POT_A, a1, x1, a1, T)
        return math.exp(T) * (integral + y1)

    def y2_fs(self, x1, x2, y1):
        self._check_x(x1)
        self._check_x(x2)
        T = self.potential_diff(POT_B, x1, x2)
        b1 = self.potential(POT_B, x1)
        integral = self._coupled_integral(POT_B, b1, x1, b1, T)
        return math.exp(T) * (integral + y1)

    def eq3_y2(self, x2, y1, t, a2=None):
        if a2 is None:
            self._check_x(x2)
            a2 = self.potential(POT_A, x2)
        integral = self._coupled_integral(POT_A, a2 - t, x2, a2, t)
        return math.exp(t) * (integral + y1)

    def infer_time(self, x2, y1, y2, t_max=50.0):
        self._check_x(x2)
        if y2 == y1:
            return 0.0
        a2 = self.potential(POT_A, x2)

        def F(t):
            return self.eq3_y2(x2, y1, t, a2) - y2

        f0 = y1 - y2
        slope = y1 + self.h(x2)
        t = abs(f0 / slope) if slope != 0.0 else 1e-2
        t = min(max(t, 1e-12), t_max)
        t_prev, f_prev = 0.0, f0
        t_bad = None
        for _ in range(self.max_iter):
            try:
                ft = F(t)
            except DomainError:
                t_bad = t
                t = 0.5 * (t_prev + t_bad)
                if t_bad - t_prev <= self.root_tol:
                    break
                continue
            if ft == 0.0:
                return t
            if (ft > 0.0) != (f_prev > 0.0):
                return self._bisect_time(F, t_prev, f_prev, t, ft)
            if t >= t_max:
                break
            t_prev, f_prev = t, ft
            if t_bad is not None:
                t = 0.5 * (t_prev + t_bad)
                if t_bad - t_prev <= self.root_tol:
                    break
            else:
                t = min(2.0 * t, t_max)
        raise RootNotFoundError(
            f"no interaction time in [0, {t_max}] reproduces y2={y2!r}")

    def _bisect_time(self, F, ta, fa, tb, fb):
        for _ in range(self.max_iter):
            mid = 0.5 * (ta + tb)
            if tb - ta <= self.root_tol:
                return mid
            fm = F(mid)
            if fm == 0.0:
                return mid
            if (fm > 0.0) == (fa > 0.0):
                ta, fa = mid, fm
            else:
                tb = mid
        return 0.5 * (ta + tb)

    def dy2slb(self, xslb, x2, y1, xi_t=1.0):
        self._check_x(xslb)
        self._check_x(x2)
        T = self.potential_diff(POT_B, xslb, x2) / xi_t
        a2 = self.potential(POT_A, x2)
        x_arg = self.invert(POT_A, a2 - T, x2, a2)
        return (-self.pot_integrand(POT_B, xslb) / xi_t * math.exp(T)
                * (y1 + self.h(x_arg)))

    # -- flow ---------------------------------------------------------------------
    def flow(self, x1, y1, t_end, dt):
        self._check_x(x1)
        f, d, h = self.f, self.d, self.h

        def fx(x):
            return f(x) + d(x)

        n = _n_steps(t_end, dt)
        ts = [0.0]
        xs = [float(x1)]
        ys = [float(y1)]
        x, y, t = float(x1), float(y1), 0.0
        for i in range(n):
            step = dt if i < n - 1 else t_end - (n - 1) * dt
            k1x = fx(x)
            k1y = y + h(x)
            xm = x + 0.5 * step * k1x
            k2x = fx(xm)
            k2y = (y + 0.5 * step * k1y) + h(xm)
            xm = x + 0.5 * step * k2x
            k3x = fx(xm)
            k3y = (y + 0.5 * step * k2y) + h(xm)
            xe = x + step * k3x
            k4x = fx(xe)
            k4y = (y + step * k3y) + h(xe)
            x = x + step / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y = y + step / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            t = (i + 1) * dt if i < n - 1 else t_end
            if not (self.lo < x < self.hi) or not math.isfinite(y):
                raise FlowExitError(f"state left the domain at t={t!r}", t)
            ts.append(t)
            xs.append(x)
            ys.append(y)
        return ts, xs, ys


def _n_steps(t_end, dt):
    if t_end < 0.0 or not dt > 0.0:
        raise ValueError("need t_end >= 0 and dt > 0")
    if t_end == 0.0:
        return 0
    return max(1, int(math.ceil(t_end / dt - 1e-9)))
