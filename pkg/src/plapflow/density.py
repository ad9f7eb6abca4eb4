"""Radial density profiles rho(d(x)) in (0, 1].

Three families are supported:

* ``constant``: rho = 1.
* ``power``: rho(s) = s^(-alpha) for s >= 1, frozen at 1 below.
* ``power_log``: rho(s) = s^(-alpha) (log s)^beta for large s.  For beta > 0
  the raw formula rises from 0 at s = 1 before decaying, so it is frozen at
  its peak s* = exp(beta/alpha); for beta < 0 it blows up near s = 1 and is
  capped at 1.  Either way the profile stays positive, nonincreasing and <= 1.

The structural window (alpha1, alpha2) means: rho(s) s^alpha2 nondecreasing
and rho(s) s^alpha1 nonincreasing, with 0 <= alpha1 <= alpha2 < p.  All the
scaling-function sandwiches downstream assume it, so ``check_h1_window``
verifies it on explicit grids before those are trusted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import WeightedGraph

_FAMILIES = ("constant", "power", "power_log")


@dataclass(frozen=True)
class DensityProfile:
    family: str
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown density family {self.family!r}")
        if self.family == "constant":
            if self.alpha != 0.0 or self.beta != 0.0:
                raise ValueError("constant density takes no exponents")
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if self.family == "power" and self.beta != 0.0:
            raise ValueError("power density takes no beta")
        if self.family == "power_log" and self.beta > 0.0 and self.alpha == 0.0:
            raise ValueError("power_log with beta > 0 needs alpha > 0 to decay")

    def freeze_point(self) -> float:
        """Radius below which the profile is held constant."""
        if self.family == "power_log" and self.beta > 0.0:
            return float(np.exp(self.beta / self.alpha))
        return 1.0


def eval_rho(profile: DensityProfile, s) -> np.ndarray:
    """Evaluate rho on radii s >= 0 (scalar or array), vectorized.

    The value is min(1, formula(max(s, s_freeze))), which keeps the profile
    in (0, 1] and nonincreasing for every family.
    """
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0):
        raise ValueError("radii must be >= 0")
    if profile.family == "constant":
        out = np.ones_like(s_arr)
        return out if out.shape else np.float64(1.0)

    s_eff = np.maximum(s_arr, profile.freeze_point())
    if profile.family == "power":
        out = s_eff ** (-profile.alpha)
    else:
        logs = np.log(s_eff)
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(
                logs > 0.0,
                s_eff ** (-profile.alpha) * logs ** profile.beta,
                np.inf if profile.beta < 0.0 else 0.0,
            )
        # logs == 0 means s_eff == 1: either beta <= 0 (cap to 1 below) or a
        # freeze point e^(beta/alpha) so close to 1 that it rounded down, in
        # which case the frozen peak value e^-beta (beta/alpha)^beta applies.
        if profile.beta == 0.0:
            out = np.where(logs > 0.0, out, 1.0)
        elif profile.beta > 0.0:
            peak = np.exp(-profile.beta) * (profile.beta / profile.alpha) ** profile.beta
            out = np.where(logs > 0.0, out, peak)
    out = np.minimum(out, 1.0)
    if np.any(out <= 0.0) or np.any(~np.isfinite(out)):
        raise ValueError("density profile left (0, 1]; check alpha/beta")
    return out if out.shape else np.float64(out)


def rho_on_graph(profile: DensityProfile, g: WeightedGraph) -> np.ndarray:
    """Per-vertex density rho(d(x))."""
    return np.asarray(eval_rho(profile, g.dist.astype(np.float64)))


@dataclass(frozen=True)
class H1Report:
    ok: bool
    worst_increase_violation: float
    worst_decrease_violation: float
    grid_size: int


def check_h1_window(profile: DensityProfile, p: float, alpha1: float,
                    alpha2: float, grid, rtol: float = 1e-12) -> H1Report:
    """Check rho(s) s^a2 nondecreasing and rho(s) s^a1 nonincreasing on a grid.

    Args:
        grid: strictly increasing radii, all >= 1.

    Returns:
        H1Report; `ok` is True when both monotonicity conditions hold up to a
        relative slack `rtol` between consecutive grid points.
    """
    if not (0.0 <= alpha1 <= alpha2):
        raise ValueError("need 0 <= alpha1 <= alpha2")
    if alpha2 >= p:
        raise ValueError("need alpha2 < p")
    s = np.asarray(grid, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("grid must be a 1-d array with >= 2 points")
    if np.any(s < 1.0) or np.any(np.diff(s) <= 0.0):
        raise ValueError("grid must be strictly increasing with all points >= 1")

    rho = np.asarray(eval_rho(profile, s))
    up = rho * s ** alpha2    # should be nondecreasing
    down = rho * s ** alpha1  # should be nonincreasing
    # Relative one-step violations; positive means the condition failed.
    up_viol = (up[:-1] - up[1:]) / np.maximum(up[:-1], up[1:])
    down_viol = (down[1:] - down[:-1]) / np.maximum(down[:-1], down[1:])
    worst_up = float(up_viol.max())
    worst_down = float(down_viol.max())
    ok = worst_up <= rtol and worst_down <= rtol
    return H1Report(ok, worst_up, worst_down, s.size)


@dataclass(frozen=True)
class SummabilityReport:
    exponent: float          # the power applied to rho in the tail sum
    beta_effective: float    # alpha * exponent, compared against N
    convergent: bool
    radii: np.ndarray
    partial_sums: np.ndarray
    last_to_half: float


def rho_summability_check(g: WeightedGraph, profile: DensityProfile,
                          p: float, nu: float) -> SummabilityReport:
    """Partial sums of rho^e m over balls, e = N(p-1+nu)/(lambda+p nu).

    The tail converges iff beta = alpha * e exceeds N; this flag gates the
    universal-decay analysis.  Partial sums over n = 0..R provide the
    empirical signal at desk scale.
    """
    if p <= 2.0:
        raise ValueError("need p > 2")
    if nu <= 0.0:
        raise ValueError("need nu > 0")
    N = g.N
    lam = N * (p - 2.0) + p
    expo = N * (p - 1.0 + nu) / (lam + p * nu)
    rho = rho_on_graph(profile, g)
    contrib = rho ** expo * g.m
    shell = np.bincount(g.dist, weights=contrib, minlength=g.R + 1)
    partial = np.cumsum(shell)
    beta_eff = profile.alpha * expo
    convergent = beta_eff > N
    half = partial[g.R // 2]
    last_to_half = float(partial[-1] / half) if half > 0 else np.inf
    return SummabilityReport(
        exponent=float(expo), beta_effective=float(beta_eff),
        convergent=bool(convergent), radii=np.arange(g.R + 1),
        partial_sums=partial, last_to_half=last_to_half,
    )


def universal_nu_default(N: int, p: float, alpha: float) -> float:
    """Smallest convenient nu for the universal-decay integral statistic.

    The convergence threshold is nu > (N-p)(p-2)/(alpha-p) - p + 1 (only
    meaningful for alpha > p).  The default is floored at 1 so that the
    recorded E_2 column doubles as E_{1+nu}.
    """
    if alpha <= p:
        raise ValueError("universal-decay analysis needs alpha > p")
    eps = alpha - p
    threshold = (N - p) * (p - 2.0) / eps - p + 1.0
    return max(1.0, 1.05 * threshold)
