"""Coupled 1-d dynamical system and the learned-mapping analysis.

Two scalar systems interact as

    x' = f(x) + d(x)
    y' = y + h(x)

where ``d`` is a perturbation modelling concept drift. The potentials
``A(x) = int 1/f`` and ``B(x) = int 1/(f + d)`` (both from ``x_ref``) turn the
x-flow into a time shift, and every learned mapping below is evaluated by
adaptive quadrature plus potential inversion.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import _backend
from ._pydslab import POT_A, POT_B
from .errors import BoundInversionError, DomainError, RootNotFoundError

DEFAULT_DOMAIN = (1e-6, 1e6)


@dataclass(frozen=True)
class ScalarField:
    """A real function on an open interval.

    ``affine`` holds ``(a, b)`` when the field is ``a*x + b``; such fields run
    on the compiled core.
    """

    eval: Callable[[float], float]
    domain: tuple[float, float] = DEFAULT_DOMAIN
    affine: tuple[float, float] | None = None
    name: str = "custom"

    def __call__(self, x: float) -> float:
        return self.eval(x)

    @classmethod
    def linear(cls, a: float, b: float, domain=DEFAULT_DOMAIN, name: str | None = None):
        a, b = float(a), float(b)
        return cls(lambda x: a * x + b, tuple(domain), (a, b), name or f"linear:{a!r},{b!r}")

    @classmethod
    def parse(cls, spec: str, domain=DEFAULT_DOMAIN) -> "ScalarField":
        """Built-in fields: ``identity``, ``zero``, ``constant:c``, ``linear:a,b``."""
        spec = spec.strip()
        kind, _, arg = spec.partition(":")
        try:
            if kind == "identity" and not arg:
                return cls.linear(1.0, 0.0, domain, "identity")
            if kind == "zero" and not arg:
                return cls.linear(0.0, 0.0, domain, "zero")
            if kind == "constant":
                return cls.linear(0.0, float(arg), domain, spec)
            if kind == "linear":
                a, b = (float(v) for v in arg.split(","))
                return cls.linear(a, b, domain, spec)
        except ValueError as exc:
            raise ValueError(f"bad field spec {spec!r}: {exc}") from None
        raise ValueError(f"unknown field spec {spec!r}")


IDENTITY = ScalarField.parse("identity")
ZERO = ScalarField.parse("zero")


@dataclass(frozen=True)
class CoupledSystem:
    f: ScalarField
    d: ScalarField
    h: ScalarField
    x_ref: float = 1.0
    quad_tol: float = 1e-9
    root_tol: float = 1e-10
    t_max: float = 50.0
    force_python: bool = field(default=False, compare=False)

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < self.x_ref < hi:
            raise DomainError(f"x_ref={self.x_ref} outside the working domain ({lo}, {hi})")
        for fl, label in ((self.f, "f"), (self.d, "d")):
            if not fl.domain[0] < self.x_ref < fl.domain[1]:
                raise DomainError(f"x_ref outside the domain of {label}")
        object.__setattr__(self, "_core", _backend.ds_core(
            (self.f, self.d, self.h), lo, hi, self.x_ref, self.quad_tol,
            self.root_tol, force_python=self.force_python))

    @property
    def domain(self) -> tuple[float, float]:
        doms = [self.f.domain, self.d.domain, self.h.domain]
        return max(d[0] for d in doms), min(d[1] for d in doms)

    @property
    def core(self):
        return self._core

    @classmethod
    def identity(cls, **kw) -> "CoupledSystem":
        """``f = d = h = x`` on (1e-6, 1e6) with ``x_ref = 1``."""
        return cls(IDENTITY, IDENTITY, IDENTITY, **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "CoupledSystem":
        domain = tuple(doc.get("domain", DEFAULT_DOMAIN))
        if len(domain) != 2:
            raise ValueError("domain must be [lo, hi]")
        kw = {k: float(doc[k]) for k in ("x_ref", "quad_tol", "root_tol", "t_max") if k in doc}
        fields = {}
        for name in ("f", "d", "h"):
            if name not in doc:
                raise ValueError(f"system document is missing field {name!r}")
            fields[name] = ScalarField.parse(str(doc[name]), domain)
        return cls(**fields, **kw)

    @classmethod
    def from_json(cls, text: str) -> "CoupledSystem":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"f": self.f.name, "d": self.d.name, "h": self.h.name,
                "domain": list(self.domain), "x_ref": self.x_ref,
                "quad_tol": self.quad_tol, "root_tol": self.root_tol, "t_max": self.t_max}


@dataclass(frozen=True)
class ErrorFactors:
    """Multiplicative inaccuracy of the ITM (``xi_t``) and ESD (``xi_e``)."""

    xi_t: float = 1.0
    xi_e: float = 1.0

    def __post_init__(self):
        if not (self.xi_t > 0 and self.xi_e > 0):
            raise ValueError(f"error factors must be positive, got {self}")


NO_ERROR = ErrorFactors()


@dataclass(frozen=True)
class SamplingBounds:
    epsilon: float
    y2_fs: float
    y2_low: float
    y2_high: float
    t_if_low: float
    t_if_high: float
    t_if_nominal: float
    y2_slb_nominal: float
    within_bounds: bool


def _which(which) -> int:
    if which in ("A", "a", POT_A):
        return POT_A
    if which in ("B", "b", POT_B):
        return POT_B
    raise ValueError(f"potential must be 'A' or 'B', got {which!r}")


def potential(system: CoupledSystem, which, x: float) -> float:
    """A(x) or B(x), integrated from ``system.x_ref``."""
    return system.core.potential(_which(which), float(x))


def invert_potential(system: CoupledSystem, which, v: float) -> float:
    """x with potential(x) = v.

    The bracketing search sums piecewise integrals; two Newton steps against
    the full integral from ``x_ref`` make the result consistent with
    :func:`potential` to rounding.
    """
    core, w, v = system.core, _which(which), float(v)
    x = core.invert(w, v)
    lo, hi = system.domain
    for _ in range(2):
        step = (core.potential(w, x) - v) / core.pot_integrand(w, x)
        if step == 0.0 or not lo < x - step < hi:
            break
        x -= step
    return x


def simulate_flow(system: CoupledSystem, x1: float, y1: float, t_end: float,
                  dt: float) -> list[tuple[float, float, float]]:
    """RK4 trajectory samples ``(t, x, y)`` at 0, dt, ..., t_end."""
    ts, xs, ys = system.core.flow(float(x1), float(y1), float(t_end), float(dt))
    return [(float(t), float(x), float(y)) for t, x, y in zip(ts, xs, ys)]


def infer_interaction_time(system: CoupledSystem, x2: float, y1: float, y2: float) -> float:
    """Interaction time that carries ``y1`` to ``y2`` along the unperturbed flow ending at ``x2``."""
    return system.core.infer_time(float(x2), float(y1), float(y2), system.t_max)


def y2_learned(system: CoupledSystem, method: str, x_in: float, x2: float, y1: float,
               errors: ErrorFactors = NO_ERROR) -> float:
    """Effect predicted by the mapping each labeling method learns.

    ``method`` is ``SLB`` (``x_in`` is the self-labeled cause), ``TRAD`` or
    ``FS`` (``x_in`` is the true cause ``x1``). Error factors apply to SLB only.
    """
    method = method.upper()
    core = system.core
    if method == "SLB":
        return core.y2_slb(float(x_in), float(x2), float(y1), errors.xi_t, errors.xi_e)
    if errors != NO_ERROR:
        raise ValueError(f"error factors only apply to SLB, not {method}")
    if method == "TRAD":
        return core.y2_trad(float(x_in), float(x2), float(y1))
    if method == "FS":
        return core.y2_fs(float(x_in), float(x2), float(y1))
    raise ValueError(f"unknown method {method!r}")


def closed_form_example(x_slb: float, x2: float, y1: float,
                        errors: ErrorFactors = NO_ERROR) -> float:
    """SLB mapping for f = d = h = x, in closed form."""
    if not (x_slb > 0 and x2 > 0):
        raise ValueError("x_slb and x2 must be positive")
    p = 1.0 / (2.0 * errors.xi_t)
    ratio = x2 / x_slb
    return (x2 * p * math.log(ratio) + y1 * ratio ** p) / errors.xi_e


def dy2slb_dxslb(system: CoupledSystem, x_slb: float, x2: float, y1: float,
                 xi_t: float = 1.0) -> float:
    if not xi_t > 0:
        raise ValueError("xi_t must be positive")
    return system.core.dy2slb(float(x_slb), float(x2), float(y1), float(xi_t))


def itm_sampling_bounds(system: CoupledSystem, x1: float, x2: float, y1: float,
                        epsilon: float) -> SamplingBounds:
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    y2_fs = y2_learned(system, "FS", x1, x2, y1)
    y2_low = (1.0 - epsilon) * y2_fs
    y2_high = (1.0 + epsilon) * y2_fs
    times = {}
    for bound, target in (("low", y2_low), ("high", y2_high)):
        try:
            times[bound] = infer_interaction_time(system, x2, y1, target)
        except (RootNotFoundError, DomainError) as exc:
            raise BoundInversionError(f"t_if_{bound}: {exc}", bound) from exc
    t_nom = potential(system, "B", x2) - potential(system, "B", x1)
    y2_slb = y2_learned(system, "SLB", x1, x2, y1)
    return SamplingBounds(
        epsilon=float(epsilon), y2_fs=y2_fs, y2_low=y2_low, y2_high=y2_high,
        t_if_low=times["low"], t_if_high=times["high"], t_if_nominal=t_nom,
        y2_slb_nominal=y2_slb,
        within_bounds=bool(times["low"] <= t_nom <= times["high"]),
    )


def error_sweep(system: CoupledSystem, x_grid: Sequence[float], x2: float, y1: float,
                xi_values: Iterable[ErrorFactors]) -> list[tuple[float, float, float, float]]:
    """Rows ``(x_slb, xi_t, xi_e, y2)``, x-major."""
    xi_values = list(xi_values)
    if len(x_grid) == 0:
        raise ValueError("x grid is empty")
    return [(float(x), xi.xi_t, xi.xi_e, y2_learned(system, "SLB", x, x2, y1, xi))
            for x in x_grid for xi in xi_values]


SWEEP_HEADER = ("x_slb", "xi_t", "xi_e", "y2")


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
