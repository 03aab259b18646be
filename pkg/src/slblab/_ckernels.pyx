# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

``AffineCore`` evaluates the coupled-system quantities for affine fields
(every built-in field kind is affine). ``simulate_two_balls`` is the
fixed-step integrator for the two-ball drop. Both mirror the pure-Python
modules ``_pydslab`` and ``_pyballs`` operation for operation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, ceil, sqrt, isfinite

from .errors import DomainError, FlowExitError, QuadratureError, RootNotFoundError

cnp.import_array()

DEF MIN_DEPTH = 1

cdef enum:
    OK = 0
    ERR_DOMAIN = 1
    ERR_QUAD = 2
    ERR_ROOT = 3
    ERR_RANGE = 4

cdef struct Ctx:
    double fa, fb, da, db, ha, hb
    double lo, hi, x_ref
    double quad_tol, root_tol
    int max_depth, max_iter
    int err
    double err_x
    # potential integrand selector
    int pwhich
    # coupled integrand state
    int inner
    double c0, anchor_x, anchor_p

ctypedef double (*integrand_t)(double, Ctx*) noexcept nogil


cdef inline double pot_integrand(double x, Ctx* c) noexcept nogil:
    cdef double v = c.fa * x + c.fb
    if c.pwhich == 1:
        v = v + (c.da * x + c.db)
    if not (v > 0.0) or not isfinite(v):
        if c.err == OK:
            c.err = ERR_DOMAIN
            c.err_x = x
        return 1.0
    return 1.0 / v


cdef double simpson_rec(integrand_t g, Ctx* c, double a, double b, double fa,
                        double fm, double fb, double whole, double eps,
                        int depth) noexcept nogil:
    cdef double m = 0.5 * (a + b)
    cdef double lm = 0.5 * (a + m)
    cdef double rm = 0.5 * (m + b)
    cdef double flm = g(lm, c)
    cdef double frm = g(rm, c)
    cdef double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    cdef double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    cdef double delta = left + right - whole
    if c.err != OK:
        return 0.0
    if depth >= MIN_DEPTH and fabs(delta) <= 15.0 * eps:
        return left + right + delta / 15.0
    if depth >= c.max_depth:
        c.err = ERR_QUAD
        return 0.0
    return (simpson_rec(g, c, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1)
            + simpson_rec(g, c, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))


cdef double simpson(integrand_t g, Ctx* c, double a, double b) noexcept nogil:
    if a == b:
        return 0.0
    cdef double fa = g(a, c)
    cdef double fb = g(b, c)
    cdef double m = 0.5 * (a + b)
    cdef double fm = g(m, c)
    cdef double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    cdef double scale = max(fabs(whole), fabs(b - a) * max(fabs(fa), max(fabs(fm), fabs(fb))))
    cdef double eps = c.quad_tol * scale
    if c.err != OK:
        return 0.0
    if eps == 0.0:
        eps = 1e-300
    return simpson_rec(g, c, a, b, fa, fm, fb, whole, eps, 0)


cdef inline double potential_diff(Ctx* c, int which, double x0, double x1) noexcept nogil:
    c.pwhich = which
    return simpson(pot_integrand, c, x0, x1)


cdef double bisect_potential(Ctx* c, int which, double v, double xa, double pa,
                             double xb, double pb) noexcept nogil:
    cdef int it
    cdef double mid, pm, r, g, polished, lo_x, hi_x
    for it in range(c.max_iter):
        mid = 0.5 * (xa + xb)
        pm = pa + potential_diff(c, which, xa, mid)
        if c.err != OK:
            return mid
        r = pm - v
        if fabs(r) <= c.root_tol or mid == xa or mid == xb:
            c.pwhich = which
            g = pot_integrand(mid, c)
            polished = mid - r / g
            if xa < xb:
                lo_x = xa
                hi_x = xb
            else:
                lo_x = xb
                hi_x = xa
            if lo_x < polished and polished < hi_x:
                return polished
            return mid
        if (pm - v) * (pb - v) > 0.0:
            xb = mid
            pb = pm
        else:
            xa = mid
            pa = pm
    c.err = ERR_ROOT
    return 0.5 * (xa + xb)


cdef double invert(Ctx* c, int which, double v, double x0, double p0) noexcept nogil:
    cdef double s, bound, step, xa, pa, xb, pb
    cdef int it
    if not isfinite(v):
        c.err = ERR_RANGE
        return x0
    if v == p0:
        return x0
    s = 1.0 if v > p0 else -1.0
    bound = c.hi if s > 0 else c.lo
    c.pwhich = which
    step = fabs(v - p0) / pot_integrand(x0, c) * 1.5
    if c.err != OK:
        return x0
    if step == 0.0:
        step = 1e-12 * max(1.0, fabs(x0))
    xa = x0
    pa = p0
    for it in range(c.max_iter):
        xb = xa + s * step
        if (xb - bound) * s >= 0.0:
            xb = xa + 0.5 * (bound - xa)
            if xb == xa:
                break
        pb = pa + potential_diff(c, which, xa, xb)
        if c.err != OK:
            return xa
        if (pb - v) * s >= 0.0:
            return bisect_potential(c, which, v, xa, pa, xb, pb)
        xa = xb
        pa = pb
        step *= 2.0
    c.err = ERR_RANGE
    return xa


cdef double coupled_integrand(double tau, Ctx* c) noexcept nogil:
    cdef double x = invert(c, c.inner, tau + c.c0, c.anchor_x, c.anchor_p)
    return exp(-tau) * (c.ha * x + c.hb)


cdef double coupled_integral(Ctx* c, int inner, double c0, double xa, double pa,
                             double T) noexcept nogil:
    c.inner = inner
    c.c0 = c0
    c.anchor_x = xa
    c.anchor_p = pa
    return simpson(coupled_integrand, c, 0.0, T)


cdef class AffineCore:
    """Coupled-system core with f, d, h of the form a*x + b."""

    cdef Ctx c

    def __init__(self, f, d, h, double lo, double hi, double x_ref,
                 double quad_tol=1e-9, double root_tol=1e-10,
                 int max_depth=60, int max_iter=200):
        self.c.fa, self.c.fb = f
        self.c.da, self.c.db = d
        self.c.ha, self.c.hb = h
        self.c.lo = lo
        self.c.hi = hi
        self.c.x_ref = x_ref
        self.c.quad_tol = quad_tol
        self.c.root_tol = root_tol
        self.c.max_depth = max_depth
        self.c.max_iter = max_iter
        self.c.err = OK

    cdef void _reset(self):
        self.c.err = OK
        self.c.err_x = 0.0

    cdef void _raise(self, str what) except *:
        cdef int err = self.c.err
        self.c.err = OK
        if err == ERR_DOMAIN:
            raise DomainError(f"{what}: vector field is not positive at x={self.c.err_x!r}")
        if err == ERR_QUAD:
            raise QuadratureError(f"{what}: adaptive Simpson exceeded depth {self.c.max_depth}")
        if err == ERR_ROOT:
            raise RootNotFoundError(f"{what}: potential inversion did not converge")
        if err == ERR_RANGE:
            raise DomainError(f"{what}: potential value is not attainable inside the domain")

    cdef void _check_x(self, double x) except *:
        if not (self.c.lo < x < self.c.hi):
            raise DomainError(f"x={x!r} outside domain ({self.c.lo}, {self.c.hi})")

    def pot_integrand(self, int which, double x):
        self._reset()
        self.c.pwhich = which
        cdef double v = pot_integrand(x, &self.c)
        if self.c.err != OK:
            self._raise("potential")
        return v

    def potential_diff(self, int which, double x0, double x1):
        self._reset()
        cdef double v = potential_diff(&self.c, which, x0, x1)
        if self.c.err != OK:
            self._raise("potential")
        return v

    def potential(self, int which, double x):
        self._check_x(x)
        return self.potential_diff(which, self.c.x_ref, x)

    def invert(self, int which, double v, x0=None, p0=None):
        cdef double ax = self.c.x_ref
        cdef double ap = 0.0
        if x0 is not None:
            ax = x0
            ap = p0
        self._reset()
        cdef double x = invert(&self.c, which, v, ax, ap)
        if self.c.err != OK:
            self._raise("inversion")
        return x

    cdef double _a(self, double x) except? -1.0:
        self._check_x(x)
        return self.potential_diff(0, self.c.x_ref, x)

    def y2_slb(self, double xslb, double x2, double y1, double xi_t=1.0, double xi_e=1.0):
        self._check_x(xslb)
        self._check_x(x2)
        cdef double T = self.potential_diff(1, xslb, x2) / xi_t
        cdef double a2 = self._a(x2)
        self._reset()
        cdef double integral = coupled_integral(&self.c, 0, a2 - T, x2, a2, T)
        if self.c.err != OK:
            self._raise("y2_slb")
        return exp(T) * (integral + y1) / xi_e

    def y2_trad(self, double x1, double x2, double y1):
        self._check_x(x1)
        self._check_x(x2)
        cdef double T = self.potential_diff(0, x1, x2)
        cdef double a1 = self._a(x1)
        self._reset()
        cdef double integral = coupled_integral(&self.c, 0, a1, x1, a1, T)
        if self.c.err != OK:
            self._raise("y2_trad")
        return exp(T) * (integral + y1)

    def y2_fs(self, double x1, double x2, double y1):
        self._check_x(x1)
        self._check_x(x2)
        cdef double T = self.potential_diff(1, x1, x2)
        self._check_x(x1)
        cdef double b1 = self.potential_diff(1, self.c.x_ref, x1)
        self._reset()
        cdef double integral = coupled_integral(&self.c, 1, b1, x1, b1, T)
        if self.c.err != OK:
            self._raise("y2_fs")
        return exp(T) * (integral + y1)

    cdef double _eq3(self, double x2, double y1, double t, double a2) noexcept nogil:
        cdef double integral = coupled_integral(&self.c, 0, a2 - t, x2, a2, t)
        return exp(t) * (integral + y1)

    def eq3_y2(self, double x2, double y1, double t, a2=None):
        cdef double a
        if a2 is None:
            a = self._a(x2)
        else:
            a = a2
        self._reset()
        cdef double v = self._eq3(x2, y1, t, a)
        if self.c.err != OK:
            self._raise("eq3")
        return v

    def infer_time(self, double x2, double y1, double y2, double t_max=50.0):
        self._check_x(x2)
        if y2 == y1:
            return 0.0
        cdef double a2 = self._a(x2)
        cdef double f0 = y1 - y2
        cdef double slope = y1 + (self.c.ha * x2 + self.c.hb)
        cdef double t = fabs(f0 / slope) if slope != 0.0 else 1e-2
        cdef double t_prev = 0.0, f_prev = f0, ft, t_bad = -1.0
        cdef int it
        t = min(max(t, 1e-12), t_max)
        for it in range(self.c.max_iter):
            self._reset()
            ft = self._eq3(x2, y1, t, a2) - y2
            if self.c.err == ERR_DOMAIN or self.c.err == ERR_RANGE:
                t_bad = t
                t = 0.5 * (t_prev + t_bad)
                if t_bad - t_prev <= self.c.root_tol:
                    break
                continue
            if self.c.err != OK:
                self._raise("infer_time")
            if ft == 0.0:
                return t
            if (ft > 0.0) != (f_prev > 0.0):
                return self._bisect_time(x2, y1, y2, a2, t_prev, f_prev, t, ft)
            if t >= t_max:
                break
            t_prev = t
            f_prev = ft
            if t_bad >= 0.0:
                t = 0.5 * (t_prev + t_bad)
                if t_bad - t_prev <= self.c.root_tol:
                    break
            else:
                t = min(2.0 * t, t_max)
        self._reset()
        raise RootNotFoundError(
            f"no interaction time in [0, {t_max}] reproduces y2={y2!r}")

    cdef double _bisect_time(self, double x2, double y1, double y2, double a2,
                             double ta, double fa, double tb, double fb) except? -1.0:
        cdef int it
        cdef double mid, fm
        for it in range(self.c.max_iter):
            mid = 0.5 * (ta + tb)
            if tb - ta <= self.c.root_tol:
                return mid
            self._reset()
            fm = self._eq3(x2, y1, mid, a2) - y2
            if self.c.err != OK:
                self._raise("infer_time")
            if fm == 0.0:
                return mid
            if (fm > 0.0) == (fa > 0.0):
                ta = mid
                fa = fm
            else:
                tb = mid
                fb = fm
        return 0.5 * (ta + tb)

    def dy2slb(self, double xslb, double x2, double y1, double xi_t=1.0):
        self._check_x(xslb)
        self._check_x(x2)
        cdef double T = self.potential_diff(1, xslb, x2) / xi_t
        cdef double a2 = self._a(x2)
        x_arg = self.invert(0, a2 - T, x2, a2)
        return (-self.pot_integrand(1, xslb) / xi_t * exp(T)
                * (y1 + (self.c.ha * x_arg + self.c.hb)))

    def flow(self, double x1, double y1, double t_end, double dt):
        self._check_x(x1)
        if t_end < 0.0 or not dt > 0.0:
            raise ValueError("need t_end >= 0 and dt > 0")
        cdef int n = 0
        if t_end > 0.0:
            n = max(1, <int>ceil(t_end / dt - 1e-9))
        cdef cnp.ndarray[cnp.float64_t, ndim=1] ts = np.empty(n + 1)
        cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.empty(n + 1)
        cdef cnp.ndarray[cnp.float64_t, ndim=1] ys = np.empty(n + 1)
        cdef double x = x1, y = y1, t = 0.0, step, xm, xe
        cdef double k1x, k2x, k3x, k4x, k1y, k2y, k3y, k4y
        cdef double fa = self.c.fa, fb = self.c.fb, da = self.c.da, db = self.c.db
        cdef double ha = self.c.ha, hb = self.c.hb
        cdef int i
        ts[0] = 0.0
        xs[0] = x
        ys[0] = y
        for i in range(n):
            step = dt if i < n - 1 else t_end - (n - 1) * dt
            k1x = (fa * x + fb) + (da * x + db)
            k1y = y + (ha * x + hb)
            xm = x + 0.5 * step * k1x
            k2x = (fa * xm + fb) + (da * xm + db)
            k2y = (y + 0.5 * step * k1y) + (ha * xm + hb)
            xm = x + 0.5 * step * k2x
            k3x = (fa * xm + fb) + (da * xm + db)
            k3y = (y + 0.5 * step * k2y) + (ha * xm + hb)
            xe = x + step * k3x
            k4x = (fa * xe + fb) + (da * xe + db)
            k4y = (y + step * k3y) + (ha * xe + hb)
            x = x + step / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y = y + step / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            t = (i + 1) * dt if i < n - 1 else t_end
            if not (self.c.lo < x < self.c.hi) or not isfinite(y):
                raise FlowExitError(f"state left the domain at t={t!r}", t)
            ts[i + 1] = t
            xs[i + 1] = x
            ys[i + 1] = y
        return ts, xs, ys


# ---------------------------------------------------------------------------
# two-ball drop
# ---------------------------------------------------------------------------

cdef int resolve_c(double* p1, double* v1, double* p2, double* v2, double radius,
                   int* impacted) noexcept nogil:
    cdef double dx = p2[0] - p1[0]
    cdef double dy = p2[1] - p1[1]
    cdef double dz = p2[2] - p1[2]
    cdef double d2 = dx * dx + dy * dy + dz * dz
    cdef double reach = 2.0 * radius
    cdef double dist, nx, ny, nz, rel, push
    impacted[0] = 0
    if d2 >= reach * reach:
        return 0
    dist = sqrt(d2)
    if dist > 0.0:
        nx = dx / dist
        ny = dy / dist
        nz = dz / dist
    else:
        nx = 0.0
        ny = 0.0
        nz = 1.0
    rel = (v2[0] - v1[0]) * nx + (v2[1] - v1[1]) * ny + (v2[2] - v1[2]) * nz
    if rel < 0.0:
        v1[0] += rel * nx
        v1[1] += rel * ny
        v1[2] += rel * nz
        v2[0] -= rel * nx
        v2[1] -= rel * ny
        v2[2] -= rel * nz
        impacted[0] = 1
    push = 0.5 * (reach - dist)
    p1[0] -= push * nx
    p1[1] -= push * ny
    p1[2] -= push * nz
    p2[0] += push * nx
    p2[1] += push * ny
    p2[2] += push * nz
    return 1


def resolve_pair(p1, v1, p2, v2, double radius):
    """Equal-mass elastic contact. Returns (p1, v1, p2, v2, impacted)."""
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef double d[3]
    cdef int imp, j
    for j in range(3):
        a[j] = p1[j]
        b[j] = v1[j]
        c[j] = p2[j]
        d[j] = v2[j]
    resolve_c(a, b, c, d, radius, &imp)
    return ([a[0], a[1], a[2]], [b[0], b[1], b[2]], [c[0], c[1], c[2]],
            [d[0], d[1], d[2]], bool(imp))


def simulate_two_balls(pos0, vel0, drop_steps, params, int settle_steps, int wind_ball,
                       wind_acc, wind_steps, int max_steps):
    cdef double dt = params[0], g = params[1], r = params[2], e = params[3]
    cdef double v_bounce = params[4], drag = params[5], half = params[6]
    cdef double v_settle = params[7]
    cdef double p[2][3]
    cdef double v[2][3]
    cdef int drop[2]
    cdef long rebounds[2]
    cdef double wax = wind_acc[0], way = wind_acc[1]
    cdef int w_lo = wind_steps[0], w_hi = wind_steps[1]
    cdef double wall = half - r
    cdef double settle2 = v_settle * v_settle
    cdef int i, j, k, ax, prev, imp, touching
    cdef int collided = 0, n_impacts = 0, slow = 0, settle_step = -1
    cdef int last = max_steps, released
    cdef double s0, s1
    for i in range(2):
        for j in range(3):
            p[i][j] = pos0[i][j]
            v[i][j] = vel0[i][j]
        drop[i] = drop_steps[i]
        rebounds[i] = 0
    released = max(drop[0], drop[1])

    states_arr = np.empty((max_steps + 1, 2, 6))
    cdef double[:, :, ::1] states = states_arr
    for i in range(2):
        for j in range(3):
            states[0, i, j] = p[i][j]
            states[0, i, 3 + j] = v[i][j]

    with nogil:
        for k in range(1, max_steps + 1):
            prev = k - 1
            for i in range(2):
                if prev < drop[i]:
                    p[i][0] += v[i][0] * dt
                    p[i][1] += v[i][1] * dt
                    continue
                v[i][2] -= g * dt
                if i == wind_ball and w_lo <= prev and prev < w_hi:
                    v[i][0] += wax * dt
                    v[i][1] += way * dt
                p[i][0] += v[i][0] * dt
                p[i][1] += v[i][1] * dt
                p[i][2] += v[i][2] * dt
                if p[i][2] < r:
                    if v[i][2] < 0.0:
                        if -v[i][2] > v_bounce:
                            v[i][2] = -e * v[i][2]
                            rebounds[i] += 1
                        else:
                            v[i][2] = 0.0
                    p[i][2] = r
                if p[i][2] <= r:
                    v[i][0] *= drag
                    v[i][1] *= drag
                for ax in range(2):
                    if p[i][ax] > wall:
                        p[i][ax] = wall
                        v[i][ax] = fabs(v[i][ax]) * -1.0
                    elif p[i][ax] < -wall:
                        p[i][ax] = -wall
                        v[i][ax] = fabs(v[i][ax])
            touching = resolve_c(p[0], v[0], p[1], v[1], r, &imp)
            if touching:
                for i in range(2):
                    if p[i][2] < r:
                        p[i][2] = r
            if imp:
                collided = 1
                n_impacts += 1
            for i in range(2):
                for j in range(3):
                    states[k, i, j] = p[i][j]
                    states[k, i, 3 + j] = v[i][j]
            if prev >= released:
                s0 = v[0][0] * v[0][0] + v[0][1] * v[0][1] + v[0][2] * v[0][2]
                s1 = v[1][0] * v[1][0] + v[1][1] * v[1][1] + v[1][2] * v[1][2]
                if s0 < settle2 and s1 < settle2:
                    slow += 1
                    if slow >= settle_steps:
                        settle_step = k
                        last = k
                        break
                else:
                    slow = 0
    return (states_arr[:last + 1].copy(), np.array([rebounds[0], rebounds[1]], dtype=np.int64),
            bool(collided), settle_step, n_impacts)
