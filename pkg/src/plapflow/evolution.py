"""Explicit time stepping for rho(x) du/dt = L_p u with grounded exterior.

The step size follows the local monotonicity budget

    dt <= theta * min_x  rho(x) m(x) / ((p-1) sum_y w(x,y) max(|u(y)-u(x)|, eps)^(p-2))

(exterior neighbors enter with value 0), additionally capped by T/1000 so a
flat field cannot freeze the schedule.  Under that budget a forward Euler
step is a convex combination, so nonnegativity and the maximum principle
hold up to rounding; a step producing values below -1e-12 signals a
stability violation and is treated as an error, not retried.

Traces record max norm, weighted mass and E_2, Dirichlet energy, the
boundary-band maximum, and the dissipation integrand sum rho u_t^2 m; a run
is flagged tainted the first time the outermost shell exceeds
leak_threshold * ||u0||_inf, which marks decay statistics as truncation
limited.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density import DensityProfile, rho_on_graph
from .lattice import WeightedGraph
from .operators import dirichlet_energy, p_laplacian, phi_p, weighted_norm

TRACE_VERSION = "plap-flow v1"
TRACE_COLUMNS = ("t", "dt", "linf", "mass", "E2", "Dp", "boundary_max")


class UnstableStepError(RuntimeError):
    """A forward Euler step left the admissible cone."""


@dataclass(frozen=True)
class EvolutionConfig:
    p: float
    T: float
    theta: float = 0.5
    snapshots: int = 200
    snapshot_t0: Optional[float] = None
    delta_floor: float = 1e-12
    dt_cap_fraction: float = 1e-3
    leak_threshold: float = 1e-8
    extra_norm_q: Optional[float] = None
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError("need p >= 2")
        if self.T <= 0.0:
            raise ValueError("need T > 0")
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("need 0 < theta <= 1")
        if self.snapshots < 2:
            raise ValueError("need at least 2 snapshots")
        if self.snapshot_t0 is not None and not (0.0 < self.snapshot_t0 < self.T):
            raise ValueError("snapshot_t0 must lie in (0, T)")
        if self.extra_norm_q is not None and self.extra_norm_q <= 0.0:
            raise ValueError("extra_norm_q must be positive")

    @property
    def dt_cap(self) -> float:
        return self.T * self.dt_cap_fraction

    @property
    def first_snapshot(self) -> float:
        return self.snapshot_t0 if self.snapshot_t0 is not None else self.T * 1e-4


def stable_dt(g: WeightedGraph, rho: np.ndarray, u: np.ndarray, p: float,
              theta: float, delta_floor: float = 1e-12,
              cap: Optional[float] = None) -> float:
    """Adaptive step bound; the cap is returned for flat fields."""
    if theta <= 0.0:
        raise ValueError("need theta > 0")
    src = np.repeat(np.arange(g.num_vertices), np.diff(g.indptr))
    local = g.weights * np.maximum(np.abs(u[g.indices] - u[src]), delta_floor) ** (p - 2.0)
    denom = np.bincount(src, weights=local, minlength=g.num_vertices)
    denom += g.cut_w * np.maximum(np.abs(u), delta_floor) ** (p - 2.0)
    denom *= (p - 1.0)
    dt = theta * float(np.min(rho * g.m / denom))
    if cap is not None:
        dt = min(dt, cap)
    return dt


def step_explicit(g: WeightedGraph, rho: np.ndarray, u: np.ndarray, p: float,
                  dt: float) -> np.ndarray:
    """One forward Euler step u + dt * (L_p u) / rho."""
    if dt <= 0.0:
        raise ValueError("need dt > 0")
    out = u + dt * p_laplacian(g, u, p) / rho
    if not np.all(np.isfinite(out)):
        raise UnstableStepError("step produced non-finite values")
    if float(out.min()) < -1e-12:
        raise UnstableStepError(
            f"step produced negative values down to {float(out.min())!r}")
    return out


@dataclass
class FlowTrace:
    """Snapshot table of one evolution run.

    The seven public columns round-trip through the versioned CSV; `diss`
    (sum rho u_t^2 m) and the optional extra norm `extra` are in-memory only
    and are None on traces loaded from disk.
    """

    t: np.ndarray
    dt: np.ndarray
    linf: np.ndarray
    mass: np.ndarray
    E2: np.ndarray
    Dp: np.ndarray
    boundary_max: np.ndarray
    meta: dict = field(default_factory=dict)
    tainted: bool = False
    taint_t: Optional[float] = None
    diss: Optional[np.ndarray] = None
    extra: Optional[np.ndarray] = None
    extra_q: Optional[float] = None

    def __len__(self) -> int:
        return self.t.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in TRACE_COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    def to_csv(self) -> str:
        """Serialize to the versioned trace format (deterministic bytes)."""
        buf = io.StringIO()
        buf.write(f"# {TRACE_VERSION}\n")
        meta = dict(self.meta)
        meta.setdefault("tainted", self.tainted)
        if self.taint_t is not None:
            meta.setdefault("taint_t", self.taint_t)
        for key in sorted(meta):
            buf.write(f"# {key} = {_fmt_meta(meta[key])}\n")
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        cols = [self.column(c) for c in TRACE_COLUMNS]
        for row in zip(*cols):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    @staticmethod
    def from_csv(text_or_path) -> "FlowTrace":
        if hasattr(text_or_path, "read"):
            text = text_or_path.read()
        else:
            text = str(text_or_path)
            if not text.lstrip().startswith("#"):
                with open(text_or_path) as fh:
                    text = fh.read()
        lines = text.splitlines()
        if not lines or lines[0].strip() != f"# {TRACE_VERSION}":
            raise ValueError(f"not a '{TRACE_VERSION}' trace")
        meta = {}
        i = 1
        while i < len(lines) and lines[i].startswith("#"):
            body = lines[i][1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = _parse_meta(val.strip())
            i += 1
        if i >= len(lines) or lines[i].strip() != ",".join(TRACE_COLUMNS):
            raise ValueError("trace column header missing or unexpected")
        data = np.loadtxt(io.StringIO("\n".join(lines[i + 1:])), delimiter=",", ndmin=2)
        if data.shape[1] != len(TRACE_COLUMNS):
            raise ValueError("trace has the wrong number of columns")
        cols = {name: data[:, j].copy() for j, name in enumerate(TRACE_COLUMNS)}
        tainted = bool(meta.pop("tainted", False))
        taint_t = meta.pop("taint_t", None)
        return FlowTrace(**cols, meta=meta, tainted=tainted, taint_t=taint_t)


def _fmt_meta(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _parse_meta(s: str):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def make_initial(g: WeightedGraph, kind: str, radius: int = 0,
                 width: float = 1.0, amplitude: float = 1.0,
                 path=None) -> np.ndarray:
    """Standard nonnegative initial fields.

    Kinds: "delta" (unit mass at the origin vertex), "box" (indicator of the
    centered sub-ball of the given radius), "gaussian" (of the given width),
    "from_file" (`index value` lines covering every vertex).
    """
    if amplitude <= 0.0:
        raise ValueError("amplitude must be positive")
    if kind == "delta":
        u = np.zeros(g.num_vertices)
        u[0] = 1.0
    elif kind == "box":
        u = (g.dist <= radius).astype(np.float64)
    elif kind == "gaussian":
        if width <= 0.0:
            raise ValueError("width must be positive")
        r2 = (g.coords.astype(np.float64) ** 2).sum(axis=1)
        u = np.exp(-r2 / (2.0 * width ** 2))
    elif kind == "from_file":
        if path is None:
            raise ValueError("kind 'from_file' needs a path")
        data = np.loadtxt(path, dtype=np.float64, ndmin=2)
        if data.shape != (g.num_vertices, 2):
            raise ValueError(
                f"field file has {data.shape[0]} rows, graph has "
                f"{g.num_vertices} vertices")
        idx = data[:, 0].astype(np.int64)
        if not np.array_equal(np.sort(idx), np.arange(g.num_vertices)):
            raise ValueError("field file must list every vertex index once")
        u = np.empty(g.num_vertices)
        u[idx] = data[:, 1]
    else:
        raise ValueError(f"unknown initial kind {kind!r}")
    return amplitude * u


def evolve(g: WeightedGraph, profile: DensityProfile, u0: np.ndarray,
           cfg: EvolutionConfig, meta: Optional[dict] = None) -> FlowTrace:
    """Integrate the flow to T, recording log-spaced snapshots plus t = 0.

    The field starts nonnegative and stays so under the adaptive budget;
    snapshot times are hit exactly by clipping the last step before each.
    """
    u = np.array(u0, dtype=np.float64)
    if u.shape != (g.num_vertices,):
        raise ValueError("initial field shape does not match the graph")
    if np.any(u < 0.0) or not np.all(np.isfinite(u)):
        raise ValueError("initial field must be finite and nonnegative")
    linf0 = float(np.abs(u).max())
    if linf0 == 0.0:
        raise ValueError("initial field must not be identically zero")

    rho = rho_on_graph(profile, g)
    shell = np.nonzero(g.dist == g.R)[0]
    targets = np.geomspace(cfg.first_snapshot, cfg.T, cfg.snapshots)
    targets[-1] = cfg.T

    rows = {name: [] for name in TRACE_COLUMNS}
    diss_rows, extra_rows = [], []

    def record(t: float, dt: float) -> None:
        lap = p_laplacian(g, u, cfg.p)
        rows["t"].append(t)
        rows["dt"].append(dt)
        rows["linf"].append(float(np.abs(u).max()))
        rows["mass"].append(weighted_norm(g, rho, u, 1.0))
        rows["E2"].append(weighted_norm(g, rho, u, 2.0))
        rows["Dp"].append(dirichlet_energy(g, u, cfg.p))
        rows["boundary_max"].append(float(u[shell].max()) if shell.size else 0.0)
        diss_rows.append(float(np.sum(lap * lap * g.m / rho)))
        if cfg.extra_norm_q is not None:
            extra_rows.append(weighted_norm(g, rho, u, cfg.extra_norm_q))

    tainted = False
    taint_t: Optional[float] = None
    threshold = cfg.leak_threshold * linf0
    record(0.0, 0.0)
    t = 0.0
    steps = 0
    last_dt = 0.0
    for target in targets:
        while t < target:
            dt_free = stable_dt(g, rho, u, cfg.p, cfg.theta,
                                cfg.delta_floor, cap=cfg.dt_cap)
            if t + dt_free >= target:
                dt = target - t
                t_new = target
            else:
                dt = dt_free
                t_new = t + dt
            u = step_explicit(g, rho, u, cfg.p, dt)
            t = t_new
            last_dt = dt
            steps += 1
            if steps > cfg.max_steps:
                raise RuntimeError("step budget exceeded; raise max_steps or T resolution")
            if not tainted and shell.size and float(u[shell].max()) > threshold:
                tainted = True
                taint_t = t
        record(t, last_dt)

    full_meta = {
        "N": g.N, "R": g.R, "family": profile.family, "alpha": profile.alpha,
        "beta": profile.beta, "p": cfg.p, "T": cfg.T, "theta": cfg.theta,
        "snapshots": cfg.snapshots, "leak_threshold": cfg.leak_threshold,
        "steps": steps,
    }
    if meta:
        full_meta.update(meta)
    trace = FlowTrace(
        t=np.array(rows["t"]), dt=np.array(rows["dt"]),
        linf=np.array(rows["linf"]), mass=np.array(rows["mass"]),
        E2=np.array(rows["E2"]), Dp=np.array(rows["Dp"]),
        boundary_max=np.array(rows["boundary_max"]),
        meta=full_meta, tainted=tainted, taint_t=taint_t,
        diss=np.array(diss_rows),
        extra=np.array(extra_rows) if extra_rows else None,
        extra_q=cfg.extra_norm_q,
    )
    return trace


@dataclass(frozen=True)
class DissipationReport:
    monotone_ok: bool
    max_relative_increase: float
    identity_ok: Optional[bool]
    identity_max_residual: Optional[float]
    identity_median_residual: Optional[float]
    bound_ok: bool
    bound_worst: float


def check_dissipation(trace: FlowTrace, p: Optional[float] = None,
                      identity_rtol: float = 0.01, mono_rtol: float = 1e-8,
                      skip_frac: float = 0.5) -> DissipationReport:
    """Energy bookkeeping checks on a trace.

    (a) D_p is nonincreasing up to relative slack mono_rtol.
    (b) sum rho u_t^2 m + (1/2p) dD_p/dt ~ 0 at snapshot triples in the late
        part of the schedule (centered differences on the nonuniform grid);
        needs the in-memory dissipation column.
    (c) D_p(t) * t <= 2 ||u0||_inf M(0) at every snapshot.
    """
    if p is None:
        p = float(trace.meta["p"])
    Dp, t = trace.Dp, trace.t
    steps = np.diff(Dp)
    scale = np.maximum(Dp[:-1], Dp[1:])
    max_inc = float((steps / scale).max()) if steps.size else 0.0
    monotone_ok = max_inc <= mono_rtol

    identity_ok = identity_max = identity_median = None
    if trace.diss is not None and len(trace) >= 3:
        start = max(1, int(skip_frac * len(trace)))
        residuals = []
        for i in range(max(start, 1), len(trace) - 1):
            slope = (Dp[i + 1] - Dp[i - 1]) / (t[i + 1] - t[i - 1])
            lhs = trace.diss[i] + slope / (2.0 * p)
            residuals.append(abs(lhs) / max(abs(trace.diss[i]), 1e-300))
        if residuals:
            residuals = np.array(residuals)
            identity_max = float(residuals.max())
            identity_median = float(np.median(residuals))
            identity_ok = identity_max <= identity_rtol

    linf0, mass0 = float(trace.linf[0]), float(trace.mass[0])
    budget = 2.0 * linf0 * mass0
    live = t > 0.0
    ratios = Dp[live] * t[live] / budget
    bound_worst = float(ratios.max()) if ratios.size else 0.0
    bound_ok = bound_worst <= 1.0 + 1e-9
    return DissipationReport(monotone_ok, max_inc, identity_ok, identity_max,
                             identity_median, bound_ok, bound_worst)


def mass_drift(trace: FlowTrace) -> float:
    """Max relative deviation of the weighted mass from its initial value."""
    m0 = float(trace.mass[0])
    return float(np.abs(trace.mass - m0).max() / abs(m0))
