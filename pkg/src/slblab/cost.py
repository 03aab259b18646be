"""Post-deployment cost index and the self-labeling cost-efficiency condition.

Monetary values are US dollars, power is kW, compute time is hours per sample.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence

C_M = 0.104      # dollars per manual label
P_KW = 0.4
RATE = 0.09      # dollars per kWh


def unit_electricity_cost(t_compute: float, p_kw: float, rate: float) -> float:
    if t_compute < 0 or p_kw < 0 or rate < 0:
        raise ValueError("electricity cost inputs must be nonnegative")
    return t_compute * p_kw * rate


def cost_index(delta_acc: float, e_dollars: float, m_dollars: float) -> float:
    """Accuracy change per dollar of electricity plus manual labeling."""
    denom = e_dollars + m_dollars
    if not denom > 0:
        raise ZeroDivisionError("cost index needs a positive total cost")
    return delta_acc / denom


def fs_cost_index(delta_acc: float, n: int, c_m: float, t_compute: float, p_kw: float,
                  rate: float) -> float:
    """Cost index of manually labeled retraining: every sample pays c_m plus training."""
    unit = unit_electricity_cost(t_compute, p_kw, rate)
    return cost_index(delta_acc, n * unit, n * c_m)


def slb_cost_index(delta_acc: float, n: int, alpha: float, t_compute: float, p_kw: float,
                   rate: float) -> float:
    """Cost index of self-labeled retraining: training plus ESD and ITM inference."""
    unit = unit_electricity_cost(t_compute, p_kw, rate)
    return cost_index(delta_acc, n * (1.0 + 2.0 * alpha) * unit, 0.0)


@dataclass(frozen=True)
class CostParams:
    delta_acc_slb: float = 0.0
    delta_acc_fs: float = 0.0
    n_slb: int | None = None
    n_fs: int | None = None
    c_m: float = C_M
    t_compute: float = 0.0
    p_kw: float = P_KW
    rate: float = RATE
    alpha: float = 0.5
    beta: float = 1.0

    def __post_init__(self):
        if self.c_m < 0 or self.t_compute < 0:
            raise ValueError("c_m and t_compute must be nonnegative")
        if not (self.p_kw > 0 and self.rate > 0):
            raise ValueError("p_kw and rate must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n_slb is not None and self.n_fs is not None:
            if self.n_slb <= 0 or self.n_fs <= 0:
                raise ValueError("sample counts must be positive")
            if not math.isclose(self.beta, self.n_slb / self.n_fs, rel_tol=1e-12):
                raise ValueError(f"beta={self.beta} disagrees with n_slb/n_fs")

    @property
    def unit_cost(self) -> float:
        return unit_electricity_cost(self.t_compute, self.p_kw, self.rate)


def slb_condition_rhs(params: CostParams) -> float:
    """Accuracy-gain ratio (SLB over FS) above which self-labeling is cheaper per point."""
    e = params.unit_cost
    denom = e + params.c_m
    if denom == 0:
        raise ZeroDivisionError("t_compute and c_m are both zero")
    return (1.0 + 2.0 * params.alpha) * e / denom * params.beta


def solve_t_compute_threshold(params: CostParams, acc_ratio: float) -> float:
    """Largest per-sample compute time at which SLB stays cost-favorable.

    Returns ``inf`` when the ratio is at or beyond the asymptote
    ``(1 + 2 alpha) beta``, where no compute time makes SLB unfavorable.
    """
    if acc_ratio < 0:
        raise ValueError("acc_ratio must be nonnegative")
    cap = (1.0 + 2.0 * params.alpha) * params.beta
    if acc_ratio >= cap:
        return math.inf
    if acc_ratio == 0:
        return 0.0
    if params.c_m == 0:
        raise ValueError("with c_m = 0 the threshold is not positive")
    return acc_ratio * params.c_m / (params.p_kw * params.rate * (cap - acc_ratio))


def pre_deployment_cost(n_itm_labels: int, n_esd_labels: int, c_m: float = C_M,
                        train_hours: float = 0.0, p_kw: float = P_KW,
                        rate: float = RATE) -> float:
    """Informational one-off cost of labeling and training the ESD and ITMs."""
    return (n_itm_labels + n_esd_labels) * c_m + unit_electricity_cost(train_hours, p_kw, rate)


SWEEP_HEADER = ("alpha", "beta", "acc_ratio", "t_compute_hours")


def cost_sweep(alphas: Sequence[float], betas: Sequence[float], acc_ratios: Sequence[float],
               c_m: float = C_M, p_kw: float = P_KW, rate: float = RATE):
    """Threshold per grid point, alpha-major. Monotonicity is checked on the grid."""
    if not (len(alphas) and len(betas) and len(acc_ratios)):
        raise ValueError("cost grid is empty")
    table = {}
    for a, b, r in itertools.product(alphas, betas, acc_ratios):
        p = CostParams(c_m=c_m, p_kw=p_kw, rate=rate, alpha=float(a), beta=float(b))
        table[(a, b, r)] = solve_t_compute_threshold(p, float(r))
    _check_monotone(table, alphas, sorted(set(betas)), sorted(set(acc_ratios)))
    return [(float(a), float(b), float(r), table[(a, b, r)])
            for a, b, r in itertools.product(alphas, betas, acc_ratios)]


def _check_monotone(table, alphas, betas, ratios):
    for a in alphas:
        for r in ratios:
            col = [table[(a, b, r)] for b in betas]
            for lo, hi in zip(col, col[1:]):
                # Not strict where both are infinite or both are zero.
                assert hi <= lo, f"threshold not decreasing in beta at alpha={a}, ratio={r}"
        for b in betas:
            row = [table[(a, b, r)] for r in ratios]
            for lo, hi in zip(row, row[1:]):
                assert hi >= lo, f"threshold not increasing in acc_ratio at alpha={a}, beta={b}"


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


EXTREME_CASE = dict(alpha=0.9, beta=15.0, acc_ratio=0.25)
NOMINAL_CASE = dict(alpha=0.5, beta=1.0, acc_ratio=0.5)


def reference_solves(c_m: float = C_M, p_kw: float = P_KW, rate: float = RATE) -> dict:
    out = {}
    for name, case in (("extreme", EXTREME_CASE), ("nominal", NOMINAL_CASE)):
        p = CostParams(c_m=c_m, p_kw=p_kw, rate=rate, alpha=case["alpha"], beta=case["beta"])
        out[name] = {**case, "t_compute_hours": solve_t_compute_threshold(p, case["acc_ratio"])}
    return out


def with_t(params: CostParams, t: float) -> CostParams:
    return replace(params, t_compute=t)
