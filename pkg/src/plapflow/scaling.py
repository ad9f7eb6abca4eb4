"""Scaling functions for the degenerate flow and their numerical inverses.

For a radial density rho and exponent p > 2 on Z^N (N > p):

    omega(S)    = S^p rho(S)                          S >= 1
    psi_r(S)    = omega(S) S^((N-p)(p-r)/p)           S >= 1, 0 < r < p
    Psi         = psi_1
    phi_qr(S)   = (S omega(psi_r^{-1}(S^{-r/p})))^((q-r)/(p-r))
    Phi         = phi_{2,1}

phi_qr lives on (0, rho(1)^(-p/r)]: the inner inverse needs its argument to
be at least psi_r(1) = rho(1).  All inverses are numerical (bracket + bisect)
so that non-power densities need no special casing; power densities reduce to
closed-form exponents, which the tests pin against these routines.

Derived rate exponents for 0 <= alpha < p < N:

    lambda  = N(p-2) + p
    H       = (N-alpha)(p-2) + p - alpha = lambda - alpha(p-1)
    rate    = (N-alpha)/H
    p*      = Np/(N-p)
    h(q)    = N(p-q) + qp
    alpha*  = lambda/(p-1)     (H vanishes there; rejected as ill-posed)

The two-sided scaling sandwiches use the elasticity windows implied by the
structural window (alpha1, alpha2):

    omega:  [p-alpha2, p-alpha1]        Psi:  [(lam+N-p a2)/p, (lam+N-p a1)/p]
    Phi:    [A1, A2]                    inverses: reciprocal windows

with A1 = (lam+N+a1-p a2-p)/((lam+N-p a2)(p-1)) and A2 symmetric.  For any
increasing f with elasticity window [e_lo, e_hi], the ratio f(gamma R)/f(R)
lies between gamma^{e_lo} and gamma^{e_hi} (endpoints swap roles across
gamma = 1); that orientation is the internally consistent one and collapses
to equality for pure power densities where A1 = A2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .density import DensityProfile, eval_rho


class InversionError(ValueError):
    """Base class for monotone-inversion failures."""


class NoBracketError(InversionError):
    """Target value is outside the reachable range of f."""


class NonMonotoneError(InversionError):
    """Bracketing detected a decrease of f."""


class DomainError(ValueError):
    """Argument outside the domain of a scaling function."""


def invert_monotone(f: Callable[[float], float], y: float, x_lo: float = 1.0,
                    x_hi: Optional[float] = None, rtol: float = 1e-10,
                    max_iter: int = 200) -> float:
    """Invert an increasing function by bracket doubling and bisection.

    Args:
        f: increasing callable on [x_lo, x_hi) (x_hi may be None for an
            unbounded domain).
        y: target value; must satisfy y >= f(x_lo).
        rtol: residual tolerance, |f(x) - y| <= rtol * max(1, |y|).

    Raises:
        NoBracketError: y below f(x_lo) or above f(x_hi).
        NonMonotoneError: f decreased while expanding the bracket.
        InversionError: no convergence within max_iter bisections.
    """
    tol = rtol * max(1.0, abs(y))
    f_lo = f(x_lo)
    if y < f_lo - tol:
        raise NoBracketError(f"target {y!r} below f({x_lo!r}) = {f_lo!r}")
    if abs(y - f_lo) <= tol:
        return x_lo
    if x_hi is None:
        hi = 2.0 * x_lo
        prev = f_lo
        for _ in range(max_iter):
            f_hi = f(hi)
            if f_hi < prev * (1.0 - 1e-12) - tol:
                raise NonMonotoneError(f"f decreased near x = {hi!r}")
            if f_hi >= y:
                break
            prev = f_hi
            hi *= 2.0
        else:
            raise NoBracketError(f"no upper bracket for {y!r} within doubling budget")
    else:
        hi = x_hi
        f_hi = f(hi)
        if f_hi < y - tol:
            raise NoBracketError(f"target {y!r} above f({x_hi!r}) = {f_hi!r}")
    lo = x_lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid - y) <= tol:
            return mid
        if f_mid < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(lo)):
            break
    mid = 0.5 * (lo + hi)
    if abs(f(mid) - y) <= 10.0 * tol:
        return mid
    raise InversionError(f"inversion of target {y!r} did not converge")


@dataclass(frozen=True)
class RateExponents:
    lam: float
    H: float
    rate: float
    p_star: float
    alpha_crit: float


def critical_alpha(N: int, p: float) -> float:
    return (N * (p - 2.0) + p) / (p - 1.0)


def rate_exponents(N: int, p: float, alpha: float) -> RateExponents:
    """Decay exponents for the mass-driven regime (0 <= alpha < p < N)."""
    if not (2.0 <= p < N):
        raise ValueError("need 2 <= p < N")
    if not (0.0 <= alpha < p):
        raise ValueError("need 0 <= alpha < p")
    lam = N * (p - 2.0) + p
    a_crit = critical_alpha(N, p)
    if abs(alpha - a_crit) <= 1e-6:
        raise ValueError(f"alpha within 1e-6 of the critical value {a_crit!r}")
    H = lam - alpha * (p - 1.0)
    return RateExponents(lam=lam, H=H, rate=(N - alpha) / H,
                         p_star=N * p / (N - p), alpha_crit=a_crit)


def h_exponent(N: int, p: float, q: float) -> float:
    """h(q) = N(p - q) + qp, positive for 0 < q < p* = Np/(N-p)."""
    p_star = N * p / (N - p)
    if not (0.0 < q < p_star):
        raise ValueError(f"need 0 < q < p* = {p_star!r}")
    return N * (p - q) + q * p


def sandwich_exponents(N: int, p: float, alpha1: float, alpha2: float) -> tuple[float, float]:
    """(A1, A2) elasticity endpoints of Phi for the window (alpha1, alpha2)."""
    if not (0.0 <= alpha1 <= alpha2 < p):
        raise ValueError("need 0 <= alpha1 <= alpha2 < p")
    lamN = N * (p - 1.0) + p  # lambda + N
    a1 = (lamN + alpha1 - p * alpha2 - p) / ((lamN - p * alpha2) * (p - 1.0))
    a2 = (lamN + alpha2 - p * alpha1 - p) / ((lamN - p * alpha1) * (p - 1.0))
    if a2 <= 0.0:
        raise ValueError("upper Phi elasticity A2 must be positive")
    return a1, a2


@dataclass(frozen=True)
class ScalingToolkit:
    """Bundle of scaling functions for one (p, N, density) triple."""

    p: float
    N: int
    profile: DensityProfile
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    rtol: float = 1e-12

    def __post_init__(self):
        if not self.p > 2.0:
            raise ValueError("toolkit needs p > 2")
        if not (isinstance(self.N, (int, np.integer)) and self.N > self.p):
            raise ValueError("N must be an integer > p")
        window = (self.alpha1, self.alpha2)
        if (window[0] is None) != (window[1] is None):
            raise ValueError("give both window endpoints or neither")
        if window[0] is None and self.profile.family in ("constant", "power"):
            object.__setattr__(self, "alpha1", self.profile.alpha)
            object.__setattr__(self, "alpha2", self.profile.alpha)
        if self.alpha1 is not None:
            if not (0.0 <= self.alpha1 <= self.alpha2 < self.p):
                raise ValueError("window must satisfy 0 <= alpha1 <= alpha2 < p")

    # -- direct functions ---------------------------------------------------

    def rho1(self) -> float:
        return float(eval_rho(self.profile, 1.0))

    def omega(self, S) -> np.ndarray:
        S_arr = np.asarray(S, dtype=np.float64)
        if np.any(S_arr < 1.0):
            raise DomainError("omega needs S >= 1")
        out = S_arr ** self.p * np.asarray(eval_rho(self.profile, S_arr))
        return out if out.shape else float(out)

    def psi(self, S, r: float = 1.0) -> np.ndarray:
        if not (0.0 < r < self.p):
            raise ValueError("need 0 < r < p")
        S_arr = np.asarray(S, dtype=np.float64)
        if np.any(S_arr < 1.0):
            raise DomainError("psi needs S >= 1")
        out = (np.asarray(self.omega(S_arr))
               * S_arr ** ((self.N - self.p) * (self.p - r) / self.p))
        return out if out.shape else float(out)

    def Psi(self, S) -> np.ndarray:
        return self.psi(S, 1.0)

    def phi_domain_max(self, r: float = 1.0) -> float:
        """Upper end of the phi domain: S <= rho(1)^(-p/r)."""
        return self.rho1() ** (-self.p / r)

    def phi(self, S: float, q: float = 2.0, r: float = 1.0) -> float:
        if not (0.0 < r < q < self.p):
            raise ValueError("need 0 < r < q < p")
        if S <= 0.0:
            raise DomainError("phi needs S > 0")
        arg = S ** (-r / self.p)
        psi1 = self.rho1()
        if arg < psi1 * (1.0 - 1e-12):
            raise DomainError(
                f"inner inverse argument {arg!r} below psi(1) = {psi1!r}")
        xi = self.psi_inv(max(arg, psi1), r)
        return float((S * self.omega(xi)) ** ((q - r) / (self.p - r)))

    def Phi(self, S: float) -> float:
        return self.phi(S, 2.0, 1.0)

    # -- inverses -----------------------------------------------------------

    def omega_inv(self, y: float) -> float:
        return invert_monotone(lambda x: float(self.omega(x)), y, rtol=self.rtol)

    def psi_inv(self, y: float, r: float = 1.0) -> float:
        return invert_monotone(lambda x: float(self.psi(x, r)), y, rtol=self.rtol)

    def Psi_inv(self, y: float) -> float:
        return self.psi_inv(y, 1.0)

    def phi_inv(self, y: float, q: float = 2.0, r: float = 1.0) -> float:
        """Inverse of phi on its bounded domain (0, rho(1)^(-p/r)]."""
        if y <= 0.0:
            raise DomainError("phi_inv needs y > 0")
        hi = self.phi_domain_max(r)
        f = lambda S: self.phi(S, q, r)
        tol = self.rtol * max(1.0, abs(y))
        if f(hi) < y - tol:
            raise NoBracketError(f"target {y!r} above phi at the domain end")
        lo = hi
        for _ in range(200):
            lo *= 0.5
            if f(lo) <= y:
                break
        else:
            raise NoBracketError(f"no lower bracket for {y!r}")
        return invert_monotone(f, y, x_lo=lo, x_hi=hi, rtol=self.rtol)

    def Phi_inv(self, y: float) -> float:
        return self.phi_inv(y, 2.0, 1.0)

    # -- exponents ----------------------------------------------------------

    def exponents(self, alpha: Optional[float] = None) -> RateExponents:
        a = self.profile.alpha if alpha is None else alpha
        return rate_exponents(self.N, self.p, a)

    def window_exponents(self) -> tuple[float, float]:
        if self.alpha1 is None:
            raise ValueError("toolkit has no structural window (alpha1, alpha2)")
        return sandwich_exponents(self.N, self.p, self.alpha1, self.alpha2)


# -- sandwich and convexity checks -------------------------------------------


@dataclass(frozen=True)
class SandwichCheck:
    family: str
    gamma: float
    R: float
    lower: float
    value: float
    upper: float

    @property
    def margin(self) -> float:
        return min(self.value / self.lower - 1.0, self.upper / self.value - 1.0)


@dataclass(frozen=True)
class SandwichReport:
    ok: bool
    worst_margin: float
    checks: tuple
    skipped: int


def _elasticity_windows(tk: ScalingToolkit) -> dict:
    a1, a2 = tk.alpha1, tk.alpha2
    p, N = tk.p, tk.N
    lamN = N * (p - 1.0) + p
    A1, A2 = tk.window_exponents()
    return {
        "omega": (p - a2, p - a1),
        "omega_inv": (1.0 / (p - a1), 1.0 / (p - a2)),
        "Psi": ((lamN - p * a2) / p, (lamN - p * a1) / p),
        "Psi_inv": (p / (lamN - p * a1), p / (lamN - p * a2)),
        "Phi": (A1, A2),
        "Phi_inv": (1.0 / A2, 1.0 / A1),
    }


def scaling_sandwich_check(tk: ScalingToolkit, gammas: Sequence[float],
                         radii: Sequence[float], rtol: float = 1e-9) -> SandwichReport:
    """Verify the two-sided scaling sandwiches for all six function families.

    For each family f and tested pair, the ratio f(gamma R)/f(R) must lie
    between gamma^{e_lo} and gamma^{e_hi} (relative slack rtol), where
    [e_lo, e_hi] is the family's elasticity window.  Pairs that leave a
    function's domain are skipped and counted.
    """
    windows = _elasticity_windows(tk)
    rho1 = tk.rho1()
    s_max = tk.phi_domain_max(1.0)
    checks = []
    skipped = 0

    def bound_pair(gamma: float, e_lo: float, e_hi: float) -> tuple[float, float]:
        b1, b2 = gamma ** e_lo, gamma ** e_hi
        return (min(b1, b2), max(b1, b2))

    for R in radii:
        if R < 1.0:
            raise ValueError("radii must be >= 1")
        for gamma in gammas:
            if gamma <= 0.0:
                raise ValueError("gamma must be positive")
            # Direct families on [1, inf).
            for name, fn in (("omega", tk.omega), ("Psi", tk.Psi)):
                if gamma * R < 1.0:
                    skipped += 1
                    continue
                lo, hi = bound_pair(gamma, *windows[name])
                ratio = float(fn(gamma * R)) / float(fn(R))
                checks.append(SandwichCheck(name, gamma, R, lo, ratio, hi))
            # Inverses, probed at y = f(R).
            for name, fn, inv in (("omega_inv", tk.omega, tk.omega_inv),
                                  ("Psi_inv", tk.Psi, tk.Psi_inv)):
                y = float(fn(R))
                if gamma * y < rho1 * (1.0 - 1e-12):
                    skipped += 1
                    continue
                lo, hi = bound_pair(gamma, *windows[name])
                ratio = inv(gamma * y) / R
                checks.append(SandwichCheck(name, gamma, R, lo, ratio, hi))
            # Phi on its bounded domain, probed at S = s_max / R.
            S = s_max / R
            if gamma * S <= s_max * (1.0 + 1e-12):
                lo, hi = bound_pair(gamma, *windows["Phi"])
                ratio = tk.Phi(min(gamma * S, s_max)) / tk.Phi(S)
                checks.append(SandwichCheck("Phi", gamma, R, lo, ratio, hi))
            else:
                skipped += 1
            yS = tk.Phi(S)
            y_top = tk.Phi(s_max)
            if gamma * yS <= y_top * (1.0 + 1e-12):
                lo, hi = bound_pair(gamma, *windows["Phi_inv"])
                ratio = tk.Phi_inv(min(gamma * yS, y_top)) / S
                checks.append(SandwichCheck("Phi_inv", gamma, R, lo, ratio, hi))
            else:
                skipped += 1

    worst = min((c.margin for c in checks), default=np.inf)
    ok = worst >= -rtol
    return SandwichReport(ok=ok, worst_margin=float(worst),
                         checks=tuple(checks), skipped=skipped)


@dataclass(frozen=True)
class ConvexityReport:
    ok: bool
    min_second_difference: float
    grid_size: int


def convexity_check_phi_inverse(tk: ScalingToolkit, n: int = 65,
                                y_lo: Optional[float] = None,
                                y_hi: Optional[float] = None,
                                tol: float = 1e-10) -> ConvexityReport:
    """Check discrete convexity of Phi^{-1} on a uniform grid of its range."""
    top = tk.Phi(tk.phi_domain_max(1.0))
    y_hi = top if y_hi is None else y_hi
    y_lo = top * 1e-3 if y_lo is None else y_lo
    if not (0.0 < y_lo < y_hi <= top * (1.0 + 1e-12)):
        raise ValueError("grid must sit inside the range of Phi")
    ys = np.linspace(y_lo, y_hi, n)
    xs = np.array([tk.Phi_inv(float(y)) for y in ys])
    second = xs[2:] - 2.0 * xs[1:-1] + xs[:-2]
    scale = max(1.0, float(np.abs(xs).max()))
    min_second = float(second.min())
    return ConvexityReport(ok=min_second >= -tol * scale,
                           min_second_difference=min_second, grid_size=n)
