"""Empirical verification of the functional inequalities behind the decay theory.

Each verifier returns the constant a random candidate function *requires*;
suites aggregate over seeded trials and report the worst case together with
a witness field.  Trials derive independent child seeds from one root seed,
so results do not depend on scheduling; PLAPFLOW_THREADS (or the `threads`
argument) only changes how the trial loop is executed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .density import DensityProfile, rho_on_graph
from .lattice import WeightedGraph, VertexSet, sub_ball
from .operators import caccioppoli_ratio, dirichlet_energy, weighted_norm
from .scaling import DomainError, ScalingToolkit, h_exponent


def thread_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PLAPFLOW_THREADS", "1")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _map_trials(fn: Callable, args: Sequence, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


# -- candidate fields ---------------------------------------------------------

_FIELD_KINDS = ("bump", "ball", "signed", "mixed")


def random_field(g: WeightedGraph, rng: np.random.Generator,
                 kind: Optional[str] = None) -> np.ndarray:
    """One random candidate field; kinds cycle through bumps, indicators,
    sign-mixed noise and bump combinations."""
    kind = kind or _FIELD_KINDS[int(rng.integers(len(_FIELD_KINDS)))]
    coords = g.coords.astype(np.float64)
    if kind == "bump":
        center = coords[int(rng.integers(g.num_vertices))]
        width = float(rng.uniform(0.8, max(1.5, g.R / 3.0)))
        r2 = ((coords - center) ** 2).sum(axis=1)
        return np.exp(-r2 / (2.0 * width ** 2))
    if kind == "ball":
        center = int(rng.integers(g.num_vertices))
        radius = int(rng.integers(0, max(1, g.R // 2) + 1))
        l1 = np.abs(g.coords - g.coords[center]).sum(axis=1)
        return (l1 <= radius).astype(np.float64)
    if kind == "signed":
        f = rng.standard_normal(g.num_vertices)
        keep = rng.random(g.num_vertices) < rng.uniform(0.05, 0.5)
        f = np.where(keep, f, 0.0)
        if not np.any(f):
            f[int(rng.integers(g.num_vertices))] = 1.0
        return f
    if kind == "mixed":
        f = random_field(g, rng, "bump") - rng.uniform(0.0, 1.0) * random_field(g, rng, "bump")
        return f
    raise ValueError(f"unknown field kind {kind!r}")


def _child_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


# -- Sobolev and Faber-Krahn --------------------------------------------------

def verify_sobolev(g: WeightedGraph, f: np.ndarray, p: float) -> float:
    """Required constant (sum |f|^p* m)^(1/p*) / D_p(f)^(1/p), p* = Np/(N-p)."""
    if not (1.0 < p < g.N):
        raise ValueError("need 1 < p < N")
    f = np.asarray(f, dtype=np.float64)
    if not np.any(f):
        raise ValueError("field must not vanish identically")
    p_star = g.N * p / (g.N - p)
    lhs = float(np.sum(np.abs(f) ** p_star * g.m)) ** (1.0 / p_star)
    rhs = dirichlet_energy(g, f, p) ** (1.0 / p)
    return lhs / rhs


def verify_faber_krahn(g: WeightedGraph, f: np.ndarray, U: VertexSet, p: float) -> float:
    """Required constant for sum |f|^p m <= C mu(U)^p D_p(f), f = 0 off U."""
    f = np.asarray(f, dtype=np.float64)
    outside = np.ones(g.num_vertices, dtype=bool)
    outside[U.indices] = False
    if np.any(f[outside] != 0.0):
        raise ValueError("field must vanish outside U")
    if not np.any(f):
        raise ValueError("field must not vanish identically")
    lhs = float(np.sum(np.abs(f) ** p * g.m))
    rhs = U.measure ** p * dirichlet_energy(g, f, p)
    return lhs / rhs


@dataclass(frozen=True)
class SuiteResult:
    name: str
    trials: int
    worst_ratio: float
    seed: int
    witness: Optional[np.ndarray]
    ratios: np.ndarray
    details: dict


def run_sobolev_suite(g: WeightedGraph, p: float, trials: int, seed: int,
                      polish_passes: int = 2, threads: Optional[int] = None) -> SuiteResult:
    """Randomized lower estimate of the best Sobolev constant.

    The best random candidate gets a coordinate-ascent polish: greedy single
    vertex perturbations, retained when the required constant grows.
    """
    rngs = _child_rngs(seed, trials)
    fields = _map_trials(lambda r: random_field(g, r), rngs, thread_count(threads))
    ratios = np.array([verify_sobolev(g, f, p) for f in fields])
    best = int(np.argmax(ratios))
    f = fields[best].copy()
    best_ratio = float(ratios[best])
    step = 0.25 * float(np.abs(f).max())
    for _ in range(polish_passes):
        improved = False
        for i in range(g.num_vertices):
            for delta in (step, -step):
                trial = f.copy()
                trial[i] += delta
                if not np.any(trial):
                    continue
                r = verify_sobolev(g, trial, p)
                if r > best_ratio * (1.0 + 1e-12):
                    f, best_ratio, improved = trial, r, True
        if not improved:
            step *= 0.5
    return SuiteResult("sobolev", trials, best_ratio, seed, f, ratios,
                       {"polished_gain": best_ratio / float(ratios[best])})


def run_faber_krahn_suite(g: WeightedGraph, p: float, trials: int, seed: int,
                          threads: Optional[int] = None) -> SuiteResult:
    """Worst required Faber-Krahn constant over random (U, f) pairs; also
    checks the chain ratio_FK <= ratio_Sobolev^p for every trial."""
    rngs = _child_rngs(seed, trials)

    def one(rng: np.random.Generator) -> tuple[float, float, np.ndarray]:
        radius = int(rng.integers(1, g.R + 1))
        U = sub_ball(g, radius)
        f = random_field(g, rng)
        mask = np.zeros(g.num_vertices, dtype=bool)
        mask[U.indices] = True
        f = np.where(mask, f, 0.0)
        if not np.any(f):
            f = np.zeros(g.num_vertices)
            f[0] = 1.0
        fk = verify_faber_krahn(g, f, U, p)
        sob = verify_sobolev(g, f, p) if p < g.N else np.inf
        return fk, sob, f

    out = _map_trials(one, rngs, thread_count(threads))
    ratios = np.array([r[0] for r in out])
    chain_ok = all(r[0] <= r[1] ** p * (1.0 + 1e-9) for r in out) if p < g.N else None
    worst = int(np.argmax(ratios))
    return SuiteResult("faber_krahn", trials, float(ratios[worst]), seed,
                       out[worst][2], ratios, {"chain_ok": chain_ok})


# -- Gagliardo-Nirenberg ------------------------------------------------------

@dataclass(frozen=True)
class GNResult:
    admissible: bool
    constant: Optional[float]
    constant_phi: Optional[float]
    constant_floor: Optional[float]
    constant_power: Optional[float]
    skip_reason: Optional[str]


def verify_gn(g: WeightedGraph, profile: DensityProfile, tk: ScalingToolkit,
              f: np.ndarray, q: float, r: float) -> GNResult:
    """Required constant of the weighted interpolation inequality.

    Admissibility needs the inner inverse argument D_p^{-r/p} E_r to reach
    psi_r(1) = rho(1); inadmissible fields are reported, not errors.  The
    inverse is real-valued; `constant_floor` records the integer-floor
    variant of the inner scale as a diagnostic.
    """
    p, N = tk.p, tk.N
    if not (0.0 < r < q < p):
        raise ValueError("need 0 < r < q < p")
    rho = rho_on_graph(profile, g)
    f = np.asarray(f, dtype=np.float64)
    if not np.any(f):
        raise ValueError("field must not vanish identically")
    E_q = weighted_norm(g, rho, f, q)
    E_r = weighted_norm(g, rho, f, r)
    D = dirichlet_energy(g, f, p)
    arg = D ** (-r / p) * E_r
    rho1 = tk.rho1()
    if arg < rho1 * (1.0 - 1e-12):
        return GNResult(False, None, None, None, None,
                        f"inner argument {arg:.3e} below psi(1) = {rho1:.3e}")
    xi = tk.psi_inv(max(arg, rho1), r)
    rhs = (D ** (q - r) * float(tk.omega(xi)) ** (q - r)
           * E_r ** (p - q)) ** (1.0 / (p - r))
    constant = E_q / rhs

    xi_floor = max(1.0, float(np.floor(xi)))
    rhs_floor = (D ** (q - r) * float(tk.omega(xi_floor)) ** (q - r)
                 * E_r ** (p - q)) ** (1.0 / (p - r))
    constant_floor = E_q / rhs_floor

    constant_phi = None
    if q == 2.0 and r == 1.0:
        try:
            constant_phi = E_q / (E_r ** 2 * tk.Phi(D * E_r ** (-p)))
        except DomainError:
            constant_phi = None

    constant_power = None
    if profile.family in ("constant", "power"):
        alpha = profile.alpha
        h_q, h_r = h_exponent(N, p, q), h_exponent(N, p, r)
        rhs_power = (E_r ** (h_q - p * alpha)
                     * D ** ((N - alpha) * (q - r))) ** (1.0 / (h_r - p * alpha))
        constant_power = E_q / rhs_power

    return GNResult(True, constant, constant_phi, constant_floor,
                    constant_power, None)


def run_gn_suite(g: WeightedGraph, profile: DensityProfile, tk: ScalingToolkit,
                 q: float, r: float, trials: int, seed: int,
                 threads: Optional[int] = None) -> SuiteResult:
    rngs = _child_rngs(seed, trials)

    def one(rng: np.random.Generator) -> tuple[GNResult, np.ndarray]:
        f = random_field(g, rng)
        return verify_gn(g, profile, tk, f, q, r), f

    out = _map_trials(one, rngs, thread_count(threads))
    admitted = [(res, f) for res, f in out if res.admissible]
    skipped = len(out) - len(admitted)
    if not admitted:
        return SuiteResult("gn", trials, np.nan, seed, None,
                           np.array([]), {"skipped": skipped})
    constants = np.array([res.constant for res, _ in admitted])
    worst = int(np.argmax(constants))
    details = {
        "skipped": skipped,
        "median": float(np.median(constants)),
        "max_over_median": float(constants.max() / np.median(constants)),
        "q": q, "r": r,
    }
    return SuiteResult("gn", trials, float(constants.max()), seed,
                       admitted[worst][1], constants, details)


# -- volume-weighted tail sums ------------------------------------------------

@dataclass(frozen=True)
class TailSumReport:
    beta: float
    mode: str                 # "growth" (beta < N) or "tail" (beta > N)
    radii: np.ndarray
    sums: np.ndarray
    ratios: Optional[np.ndarray]   # sums / n^(N - beta) in growth mode
    band: Optional[tuple[float, float]]
    last_to_half: Optional[float]


def radial_tail_sums(g: WeightedGraph, beta: float,
                     radii: Optional[Sequence[int]] = None) -> TailSumReport:
    """Partial sums sum_{x in B(n)} max(d,1)^(-beta) m(x).

    Growth mode (0 < beta < N): the sums scale like n^(N-beta) and the
    normalized ratios stay in a bounded band.  Tail mode (beta > N): the
    sums converge and the last-to-half ratio approaches 1.  beta = N sits on
    the divergence edge and is rejected.
    """
    if beta <= 0.0:
        raise ValueError("need beta > 0")
    if beta == g.N:
        raise ValueError("beta = N is the excluded borderline case")
    ns = np.array(sorted(radii)) if radii is not None else np.arange(1, g.R + 1)
    if ns.min() < 1 or ns.max() > g.R:
        raise ValueError("radii must lie in 1..R")
    contrib = np.maximum(g.dist, 1) ** (-beta) * g.m
    shell = np.bincount(g.dist, weights=contrib, minlength=g.R + 1)
    partial = np.cumsum(shell)
    sums = partial[ns]
    if beta < g.N:
        ratios = sums / ns.astype(np.float64) ** (g.N - beta)
        band = (float(ratios.min()), float(ratios.max()))
        return TailSumReport(beta, "growth", ns, sums, ratios, band, None)
    half_idx = ns.max() // 2
    last_to_half = float(partial[ns.max()] / partial[half_idx])
    return TailSumReport(beta, "tail", ns, sums, None, None, last_to_half)


# -- Caccioppoli sample suite -------------------------------------------------

def run_caccioppoli_suite(p: float, q: float, samples: int, seed: int,
                          h: float = 1.0, hi: float = 10.0) -> SuiteResult:
    """Minimum pointwise cutoff ratio over seeded uniform sample pairs."""
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.uniform(0.0, hi, samples)
    b = rng.uniform(0.0, hi, samples)
    ratio = caccioppoli_ratio(a, b, h, q, p)
    # Witness: the minimizing pair, for reproduction.
    e = (q - 1.0 + p) / p
    ta, tb = np.maximum(a - h, 0.0), np.maximum(b - h, 0.0)
    rhs = np.abs(tb ** e - ta ** e) ** p
    lhs = (np.sign(b - a) * np.abs(b - a) ** (p - 1.0)) * (tb ** q - ta ** q)
    live = rhs > 0.0
    idx = np.nonzero(live)[0][int(np.argmin(lhs[live] / rhs[live]))] if np.any(live) else 0
    witness = np.array([a[idx], b[idx]])
    return SuiteResult("caccioppoli", samples, float(ratio), seed, witness,
                       np.array([ratio]), {"p": p, "q": q, "h": h})


# -- report files -------------------------------------------------------------

def write_witness(path, values: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        for i, v in enumerate(np.asarray(values).ravel()):
            fh.write(f"{i} {v:.17g}\n")


def write_suite_report(path, results: Sequence[SuiteResult],
                       witness_files: Sequence[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("inequality,trials,worst_ratio,seed,witness_file\n")
        for res, wf in zip(results, witness_files):
            fh.write(f"{res.name},{res.trials},{res.worst_ratio:.17g},{res.seed},{wf}\n")
