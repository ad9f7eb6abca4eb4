"""Decay-rate extraction and flow diagnostics from recorded traces.

Everything here consumes the snapshot arrays of a `FlowTrace` (or plain
arrays) and returns small report dataclasses; nothing re-runs the flow.
Fits are ordinary least squares on log-log axes over a late time window,
chosen either explicitly or as the trailing fraction of positive-time rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .evolution import FlowTrace
from .scaling import ScalingToolkit


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    intercept: float
    window: tuple[float, float]
    n_points: int


def _late_rows(t: np.ndarray, good: np.ndarray, window_fraction: float) -> np.ndarray:
    idx = np.nonzero(good)[0]
    if idx.size == 0:
        return idx
    keep = max(2, int(np.ceil(window_fraction * idx.size)))
    return idx[-keep:]


def fit_power_law(t: Sequence[float], y: Sequence[float],
                  t_window: Optional[tuple[float, float]] = None,
                  window_fraction: float = 0.4,
                  min_points: int = 10) -> PowerLawFit:
    """Least-squares exponent of y ~ t^s on the selected window.

    With `t_window = (lo, hi)` the rows with lo <= t <= hi are used;
    otherwise the trailing `window_fraction` of usable rows.  Rows with
    nonpositive t or y are never used.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape:
        raise ValueError("t and y must have matching shapes")
    good = np.isfinite(t) & np.isfinite(y) & (t > 0.0) & (y > 0.0)
    if t_window is not None:
        lo, hi = t_window
        if not lo < hi:
            raise ValueError("window must satisfy lo < hi")
        idx = np.nonzero(good & (t >= lo) & (t <= hi))[0]
    else:
        if not 0.0 < window_fraction <= 1.0:
            raise ValueError("window_fraction must lie in (0, 1]")
        idx = _late_rows(t, good, window_fraction)
    if idx.size < min_points:
        raise ValueError(f"only {idx.size} usable points, need {min_points}")
    x = np.log(t[idx])
    z = np.log(y[idx])
    n = idx.size
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("window spans a single time value")
    slope = float(np.sum((x - x.mean()) * (z - z.mean())) / sxx)
    intercept = float(z.mean() - slope * x.mean())
    resid = z - (intercept + slope * x)
    stderr = float(np.sqrt(np.sum(resid ** 2) / max(n - 2, 1) / sxx))
    return PowerLawFit(slope, stderr, intercept,
                       (float(t[idx[0]]), float(t[idx[-1]])), n)


# -- scale-invariant decay statistic ------------------------------------------

@dataclass(frozen=True)
class InvariantReport:
    """Q(t) = (omega^{-1}(|u|_inf^{p-2} t))^{N-p} |u|_inf^{p-1} t M(0).

    On a flow decaying at the structural rate, Q is time-independent up to
    lattice and window effects; `ratio` is max/min over the late window and
    `late_decade_slope` the log-log slope over the last decade of usable
    points (None when fewer than three exist).
    """
    t: np.ndarray
    Q: np.ndarray
    n_skipped: int
    q_max: float
    q_min: float
    ratio: float
    late_decade_slope: Optional[float]


def invariant_statistic(trace: FlowTrace, tk: ScalingToolkit,
                        mass0: Optional[float] = None,
                        window_fraction: float = 0.4) -> InvariantReport:
    p, N = tk.p, tk.N
    mass0 = float(trace.mass[0]) if mass0 is None else float(mass0)
    t, linf = trace.t, trace.linf
    good = (t > 0.0) & (linf > 0.0)
    idx = _late_rows(t, good, window_fraction)
    rho1 = tk.rho1()
    ts, qs, skipped = [], [], 0
    for i in idx:
        arg = float(linf[i]) ** (p - 2.0) * float(t[i])
        if arg < rho1 * (1.0 - 1e-12):
            skipped += 1
            continue
        xi = tk.omega_inv(max(arg, rho1))
        ts.append(float(t[i]))
        qs.append(xi ** (N - p) * float(linf[i]) ** (p - 1.0) * float(t[i]) * mass0)
    if not qs:
        raise ValueError("no usable rows: the inverse argument never reaches omega(1)")
    t_arr, q_arr = np.array(ts), np.array(qs)
    slope = None
    decade = t_arr >= t_arr[-1] / 10.0
    if decade.sum() >= 3:
        x = np.log(t_arr[decade])
        z = np.log(q_arr[decade])
        sxx = float(np.sum((x - x.mean()) ** 2))
        if sxx > 0.0:
            slope = float(np.sum((x - x.mean()) * (z - z.mean())) / sxx)
    return InvariantReport(t_arr, q_arr, skipped, float(q_arr.max()),
                           float(q_arr.min()), float(q_arr.max() / q_arr.min()),
                           slope)


# -- logarithmically corrected fit --------------------------------------------

@dataclass(frozen=True)
class CorrectedFit:
    fit: PowerLawFit
    target: float             # -(N-alpha)/H
    correction: float         # beta (N-p)/H, coefficient of loglog removed
    n_masked: int


def log_corrected_fit(trace: FlowTrace, tk: ScalingToolkit,
                      window_fraction: float = 0.4,
                      min_points: int = 10) -> CorrectedFit:
    """Power-law fit of the sup norm with the predicted double-log factor removed.

    For densities with a logarithmic factor the sup norm decays like
    t^(-rate) (log(t L0^(p-2)))^(-beta (N-p)/H); removing the predicted
    log factor should recover the pure rate.  Rows with t L0^(p-2) <= e are
    masked since the double logarithm is not meaningful there.  For
    beta = 0 this reduces exactly to `fit_power_law` on the sup norm.
    """
    p, N = tk.p, tk.N
    exps = tk.exponents()
    beta = tk.profile.beta
    correction = beta * (N - p) / exps.H
    t, linf = trace.t, trace.linf
    L0 = float(linf[0])
    good = (t > 0.0) & (linf > 0.0)
    n_masked = 0
    if beta != 0.0:
        arg = t * L0 ** (p - 2.0)
        loggable = arg > np.e
        n_masked = int(np.count_nonzero(good & ~loggable))
        good = good & loggable
    idx = _late_rows(t, good, window_fraction)
    if idx.size < min_points:
        raise ValueError(f"only {idx.size} usable points, need {min_points}")
    x = np.log(t[idx])
    z = np.log(linf[idx])
    if beta != 0.0:
        z = z + correction * np.log(np.log(t[idx] * L0 ** (p - 2.0)))
    n = idx.size
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope = float(np.sum((x - x.mean()) * (z - z.mean())) / sxx)
    intercept = float(z.mean() - slope * x.mean())
    resid = z - (intercept + slope * x)
    stderr = float(np.sqrt(np.sum(resid ** 2) / max(n - 2, 1) / sxx))
    fit = PowerLawFit(slope, stderr, intercept,
                      (float(t[idx[0]]), float(t[idx[-1]])), n)
    return CorrectedFit(fit, -exps.rate, correction, n_masked)


# -- universal (initial-data-free) bound --------------------------------------

@dataclass(frozen=True)
class UniversalReport:
    """Late-window medians of t^(1/(p-2)) |u|_inf per initial-data scale.

    For p > 2 with strongly decaying density the compensated sup norm is
    bounded independently of the initial data, so the medians across scales
    agree (`s_spread` = max/min close to 1).  For p = 2 the compensating
    exponent is zero and the spread reproduces the scale ratio: the
    negative control.  The integral statistic uses E_{1+nu} when available
    (recorded extra norm, or E_2 when nu = 1).
    """
    nu: float
    s_exponent: float
    s_values: np.ndarray
    s_spread: float
    i_exponent: Optional[float]
    i_values: Optional[np.ndarray]
    i_spread: Optional[float]


def _extra_norm_column(trace: FlowTrace, nu: float) -> Optional[np.ndarray]:
    if trace.extra is not None and trace.extra_q is not None \
            and abs(trace.extra_q - (1.0 + nu)) <= 1e-12:
        return trace.extra
    if abs(nu - 1.0) <= 1e-12:
        return trace.E2
    return None


def universal_bound_statistic(traces: Sequence[FlowTrace], nu: float = 1.0,
                              window_fraction: float = 0.25) -> UniversalReport:
    if not traces:
        raise ValueError("need at least one trace")
    ps = [float(tr.meta["p"]) for tr in traces]
    p = ps[0]
    if any(abs(q - p) > 1e-12 for q in ps):
        raise ValueError("traces mix different p values")
    s_exp = 1.0 / (p - 2.0) if p > 2.0 else 0.0
    i_exp = (1.0 + nu) / (p - 2.0) if p > 2.0 else 0.0
    s_vals, i_vals, have_i = [], [], True
    for tr in traces:
        good = (tr.t > 0.0) & (tr.linf > 0.0)
        idx = _late_rows(tr.t, good, window_fraction)
        if idx.size == 0:
            raise ValueError("a trace has no usable positive-time rows")
        s_vals.append(float(np.median(tr.t[idx] ** s_exp * tr.linf[idx])))
        col = _extra_norm_column(tr, nu)
        if col is None:
            have_i = False
        else:
            i_vals.append(float(np.median(tr.t[idx] ** i_exp * col[idx])))
    s_arr = np.array(s_vals)
    if s_arr.min() <= 0.0:
        raise ValueError("degenerate statistic: a median is nonpositive")
    i_arr = np.array(i_vals) if have_i else None
    i_spread = float(i_arr.max() / i_arr.min()) if have_i and i_arr.min() > 0 else None
    return UniversalReport(nu, s_exp, s_arr, float(s_arr.max() / s_arr.min()),
                           i_exp if have_i else None, i_arr, i_spread)


# -- report files -------------------------------------------------------------

def _fmt(v: object) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_stats_csv(path, stats: Mapping[str, object]) -> None:
    """`stat,value` rows in insertion order; None renders empty."""
    with open(path, "w", newline="\n") as fh:
        fh.write("stat,value\n")
        for k, v in stats.items():
            fh.write(f"{k},{_fmt(v)}\n")


def format_report(title: str, stats: Mapping[str, object]) -> str:
    width = max((len(k) for k in stats), default=0)
    lines = [title, "-" * len(title)]
    lines += [f"{k.ljust(width)}  {_fmt(v)}" for k, v in stats.items()]
    return "\n".join(lines) + "\n"
