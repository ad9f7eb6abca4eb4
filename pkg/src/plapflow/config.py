"""Experiment configuration: TOML files with dotted-path overrides.

A single config file drives every CLI subcommand.  Sections mirror the
pipeline: [graph], [density], [flow], [initial], [analysis], [verify].
Unknown keys are rejected so typos fail loudly.  Overrides are given as
`section.key=value` strings whose values parse as TOML scalars (falling
back to plain strings), e.g. `flow.p=2.5` or `density.family="power"`.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .density import DensityProfile
from .evolution import EvolutionConfig

EXPERIMENTS = ("decay", "universal")


@dataclass(frozen=True)
class GraphConfig:
    N: int = 3
    R: int = 14
    weight_scheme: str = "unit"


@dataclass(frozen=True)
class DensityConfig:
    family: str = "constant"
    alpha: float = 0.0
    beta: float = 0.0

    def to_profile(self) -> DensityProfile:
        return DensityProfile(self.family, self.alpha, self.beta)


@dataclass(frozen=True)
class FlowConfig:
    p: float = 2.0
    T: float = 10.0
    theta: float = 0.5
    snapshots: int = 200
    snapshot_t0: Optional[float] = None
    leak_threshold: float = 1e-8
    linear_mode: bool = True
    extra_norm_q: Optional[float] = None

    def to_evolution(self) -> EvolutionConfig:
        return EvolutionConfig(p=self.p, T=self.T, theta=self.theta,
                               snapshots=self.snapshots,
                               snapshot_t0=self.snapshot_t0,
                               leak_threshold=self.leak_threshold,
                               extra_norm_q=self.extra_norm_q)


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "delta"
    radius: int = 0
    width: float = 1.0
    amplitude: float = 1.0
    path: Optional[str] = None
    scales: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class AnalysisConfig:
    window_fraction: float = 0.4
    fit_window: Optional[tuple[float, float]] = None
    nu: Optional[float] = None
    rate_tolerance: float = 0.2
    spread_budget: float = 2.0


@dataclass(frozen=True)
class VerifyConfig:
    suites: tuple[str, ...] = ("sobolev", "faber_krahn", "gn",
                               "caccioppoli", "tail_sums", "sandwich")
    trials: int = 100
    seed: int = 0
    gn_q: float = 2.0
    gn_r: float = 1.0
    caccioppoli_q: float = 1.0
    caccioppoli_samples: int = 10_000
    tail_betas: Optional[tuple[float, ...]] = None
    budgets: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "decay"
    seed: int = 0
    output_dir: str = "out"
    graph: GraphConfig = field(default_factory=GraphConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def echo_meta(self) -> dict:
        """Flat scalars echoed into trace metadata for provenance."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "initial_kind": self.initial.kind,
            "initial_radius": self.initial.radius,
            "initial_width": self.initial.width,
            "initial_amplitude": self.initial.amplitude,
        }


def _take(section: dict, key: str, default: Any, cast=None) -> Any:
    if key not in section:
        return default
    value = section.pop(key)
    if cast is not None and value is not None:
        value = cast(value)
    return value


def _reject_unknown(name: str, section: dict) -> None:
    if section:
        raise ValueError(f"unknown keys in [{name}]: {sorted(section)}")


def _float_tuple(v: Sequence) -> tuple[float, ...]:
    return tuple(float(x) for x in v)


def _pair(v: Sequence) -> tuple[float, float]:
    lo, hi = (float(x) for x in v)
    return (lo, hi)


def config_from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    data = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in data.items()}
    g = data.pop("graph", {})
    d = data.pop("density", {})
    f = data.pop("flow", {})
    i = data.pop("initial", {})
    a = data.pop("analysis", {})
    v = data.pop("verify", {})

    graph = GraphConfig(
        N=_take(g, "N", 3, int),
        R=_take(g, "R", 14, int),
        weight_scheme=_take(g, "weight_scheme", "unit", str),
    )
    _reject_unknown("graph", g)

    density = DensityConfig(
        family=_take(d, "family", "constant", str),
        alpha=_take(d, "alpha", 0.0, float),
        beta=_take(d, "beta", 0.0, float),
    )
    _reject_unknown("density", d)

    flow = FlowConfig(
        p=_take(f, "p", 2.0, float),
        T=_take(f, "T", 10.0, float),
        theta=_take(f, "theta", 0.5, float),
        snapshots=_take(f, "snapshots", 200, int),
        snapshot_t0=_take(f, "snapshot_t0", None, float),
        leak_threshold=_take(f, "leak_threshold", 1e-8, float),
        linear_mode=_take(f, "linear_mode", None),
        extra_norm_q=_take(f, "extra_norm_q", None, float),
    )
    if flow.linear_mode is None:
        flow = replace(flow, linear_mode=(flow.p == 2.0))
    _reject_unknown("flow", f)

    initial = InitialConfig(
        kind=_take(i, "kind", "delta", str),
        radius=_take(i, "radius", 0, int),
        width=_take(i, "width", 1.0, float),
        amplitude=_take(i, "amplitude", 1.0, float),
        path=_take(i, "path", None, str),
        scales=_take(i, "scales", (1.0,), _float_tuple),
    )
    _reject_unknown("initial", i)

    analysis = AnalysisConfig(
        window_fraction=_take(a, "window_fraction", 0.4, float),
        fit_window=_take(a, "fit_window", None, _pair),
        nu=_take(a, "nu", None, float),
        rate_tolerance=_take(a, "rate_tolerance", 0.2, float),
        spread_budget=_take(a, "spread_budget", 2.0, float),
    )
    _reject_unknown("analysis", a)

    budgets = v.pop("budgets", {})
    if not isinstance(budgets, Mapping):
        raise ValueError("[verify.budgets] must be a table of suite -> number")
    verify = VerifyConfig(
        suites=tuple(_take(v, "suites", VerifyConfig().suites, tuple)),
        trials=_take(v, "trials", 100, int),
        seed=_take(v, "seed", 0, int),
        gn_q=_take(v, "gn_q", 2.0, float),
        gn_r=_take(v, "gn_r", 1.0, float),
        caccioppoli_q=_take(v, "caccioppoli_q", 1.0, float),
        caccioppoli_samples=_take(v, "caccioppoli_samples", 10_000, int),
        tail_betas=_take(v, "tail_betas", None, _float_tuple),
        budgets={str(k): float(val) for k, val in budgets.items()},
    )
    _reject_unknown("verify", v)

    cfg = ExperimentConfig(
        experiment=_take(data, "experiment", "decay", str),
        seed=_take(data, "seed", 0, int),
        output_dir=_take(data, "output_dir", "out", str),
        graph=graph, density=density, flow=flow,
        initial=initial, analysis=analysis, verify=verify,
    )
    _reject_unknown("top level", data)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}")
    if cfg.graph.weight_scheme != "unit":
        raise ValueError("only the 'unit' weight scheme is wired to the CLI")
    if cfg.graph.N < 1 or cfg.graph.R < 1:
        raise ValueError("graph needs N >= 1 and R >= 1")
    if cfg.flow.p < 2.0:
        raise ValueError("flow.p must be >= 2")
    if cfg.flow.linear_mode != (cfg.flow.p == 2.0):
        raise ValueError("flow.linear_mode must be true exactly when p = 2")
    # The two experiment kinds sit on opposite sides of the density scale:
    # rate extraction needs alpha < p, the data-free bound needs alpha > p.
    if cfg.experiment == "decay" and cfg.density.alpha >= cfg.flow.p:
        raise ValueError("decay experiments need density.alpha < flow.p")
    if cfg.experiment == "universal":
        if cfg.density.alpha <= cfg.flow.p and cfg.flow.p > 2.0:
            raise ValueError("universal experiments need density.alpha > flow.p")
        if len(cfg.initial.scales) < 2:
            raise ValueError("universal experiments need at least two initial scales")
    if cfg.initial.kind not in ("delta", "box", "gaussian", "from_file"):
        raise ValueError("initial.kind must be delta, box, gaussian or from_file")
    if cfg.initial.kind == "from_file" and not cfg.initial.path:
        raise ValueError("initial.kind = from_file needs initial.path")
    if any(s <= 0 for s in cfg.initial.scales):
        raise ValueError("initial.scales must be positive")
    if not 0.0 < cfg.analysis.window_fraction <= 1.0:
        raise ValueError("analysis.window_fraction must lie in (0, 1]")
    if cfg.analysis.fit_window is not None:
        lo, hi = cfg.analysis.fit_window
        if not 0.0 < lo < hi:
            raise ValueError("analysis.fit_window must satisfy 0 < lo < hi")


def parse_override(assignment: str) -> tuple[list[str], Any]:
    """Split `a.b.c=value`; the value is parsed as a TOML scalar when possible."""
    if "=" not in assignment:
        raise ValueError(f"override {assignment!r} must look like key.path=value")
    path, raw = assignment.split("=", 1)
    keys = [k.strip() for k in path.strip().split(".")]
    if not all(keys):
        raise ValueError(f"override {assignment!r} has an empty key component")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return keys, value


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    for assignment in overrides:
        keys, value = parse_override(assignment)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {assignment!r} descends through a scalar")
        node[keys[-1]] = value
    return data


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    apply_overrides(data, overrides)
    return config_from_mapping(data)
