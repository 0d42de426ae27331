"""Experiment configuration: TOML in, fully resolved TOML echoed out.

Example::

    scenario = "terrain_course"    # terrain_course | wall_probe | replay
    seed = 7
    output_dir = "out"
    dump_particles = false

    [map]
    generated = "terrain_course"   # or: file = "course.txt"
    resolution = 0.02

    [filter]
    particles = 1000
    init_cov_diag = [0.04, 0.04, 0.04, 0.0, 0.0, 0.01]

    [noise]
    bias_z = 0.001

Unknown keys are rejected and every problem is reported in one go.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .filter import FilterConfig
from .likelihood import DEFAULT_RHO_FRACTION, LikelihoodConfig, gaussian_peak
from .se3 import Covariance6, SampleSpaceMask
from .simulator import NoiseSpec

SCENARIOS = ("terrain_course", "wall_probe", "replay")
GENERATED_MAPS = ("terrain_course", "room")
MAP_KINDS = ("auto", "elevation", "point_cloud")
SAMPLE_DIMS = ("x", "y", "z", "yaw")
U64_MAX = 2**64 - 1

# the probing robot stands on a mapped floor, so its height is known far
# better than its horizontal position
WALL_PROBE_INIT_COV = (0.04, 0.04, 0.0004, 0.0, 0.0, 0.01)


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class MapSource:
    file: Optional[str] = None
    generated: Optional[str] = None
    kind: str = "auto"
    resolution: float = 0.02


@dataclass(frozen=True)
class FilterSection:
    particles: int = 1000
    init_cov_diag: Optional[tuple[float, ...]] = None  # None: scenario default
    sigma_z: float = 0.01
    rho: Optional[float] = None  # None: DEFAULT_RHO_FRACTION of the Gaussian peak
    resample_weight_variance_threshold: float = 1e-6
    xy_variance_gate_factor: float = 4.0
    sample_dims: tuple[str, ...] = SAMPLE_DIMS
    use_ess_trigger: bool = False
    ess_fraction: float = 0.5


@dataclass(frozen=True)
class NoiseSection:
    std: tuple[float, float, float, float] = (0.005, 0.005, 0.002, 0.002)
    bias_z: float = 0.001
    bias_yaw: float = 0.0005
    cov_inflation: float = 4.0


@dataclass(frozen=True)
class TerrainSection:
    loops: int = 2
    lateral: float = 1.0
    lead: float = 1.0


@dataclass(frozen=True)
class ProbingSection:
    initial_offset: tuple[float, float, float] = (0.1, 0.1, 0.0)
    start: tuple[float, float, float] = (1.4, -0.2, 0.5)
    lateral_steps: int = 5
    lateral_step: float = 0.2


@dataclass(frozen=True)
class ReplaySection:
    events: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int
    output_dir: str = "out"
    dump_particles: bool = False
    map: MapSource = field(default_factory=MapSource)
    filter: FilterSection = field(default_factory=FilterSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    terrain: TerrainSection = field(default_factory=TerrainSection)
    probing: ProbingSection = field(default_factory=ProbingSection)
    replay: ReplaySection = field(default_factory=ReplaySection)

    def filter_config(self) -> FilterConfig:
        f = self.filter
        return FilterConfig(
            particle_count=f.particles,
            init_cov=Covariance6.diag(f.init_cov_diag),
            likelihood=LikelihoodConfig(f.sigma_z, f.rho),
            resample_weight_variance_threshold=f.resample_weight_variance_threshold,
            xy_variance_gate_factor=f.xy_variance_gate_factor,
            sample_mask=SampleSpaceMask.of(f.sample_dims),
            use_ess_trigger=f.use_ess_trigger,
            ess_fraction=f.ess_fraction,
        )

    def noise_spec(self) -> NoiseSpec:
        n = self.noise
        return NoiseSpec(tuple(n.std), n.bias_z, n.bias_yaw, n.cov_inflation)

    def to_dict(self) -> dict:
        """Plain nested dict; None-valued keys are dropped (TOML has no null)."""

        def section(obj) -> dict:
            out = {}
            for k, v in obj.__dict__.items():
                if v is None:
                    continue
                out[k] = list(v) if isinstance(v, tuple) else v
            return out

        d = {"scenario": self.scenario, "seed": self.seed, "output_dir": self.output_dir, "dump_particles": self.dump_particles}
        for name in ("map", "filter", "noise", "terrain", "probing", "replay"):
            d[name] = section(getattr(self, name))
        return d

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


# --- validation ---------------------------------------------------------------


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


class _Checker:
    def __init__(self):
        self.errors: list[str] = []

    def fail(self, where: str, msg: str):
        self.errors.append(f"{where}: {msg}")

    def number(self, where, v, lo=None, hi=None, lo_open=False):
        if not _is_number(v):
            self.fail(where, f"expected a finite number, got {v!r}")
            return None
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.fail(where, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
            return None
        if hi is not None and v > hi:
            self.fail(where, f"must be <= {hi}, got {v!r}")
            return None
        return float(v)

    def integer(self, where, v, lo=None, hi=None):
        if not isinstance(v, int) or isinstance(v, bool):
            self.fail(where, f"expected an integer, got {v!r}")
            return None
        if lo is not None and v < lo:
            self.fail(where, f"must be >= {lo}, got {v}")
            return None
        if hi is not None and v > hi:
            self.fail(where, f"must be <= {hi}, got {v}")
            return None
        return v

    def boolean(self, where, v):
        if not isinstance(v, bool):
            self.fail(where, f"expected true or false, got {v!r}")
            return None
        return v

    def string(self, where, v, choices=None):
        if not isinstance(v, str):
            self.fail(where, f"expected a string, got {v!r}")
            return None
        if choices is not None and v not in choices:
            self.fail(where, f"must be one of {', '.join(choices)}; got {v!r}")
        return v

    def vector(self, where, v, n, lo=None):
        if not isinstance(v, list) or len(v) != n:
            self.fail(where, f"expected a list of {n} numbers, got {v!r}")
            return None
        vals = [self.number(f"{where}[{i}]", x, lo=lo) for i, x in enumerate(v)]
        return None if any(x is None for x in vals) else tuple(vals)


def _section(c: _Checker, raw: dict, name: str) -> dict:
    v = raw.get(name, {})
    if not isinstance(v, dict):
        c.fail(name, "expected a table")
        return {}
    return v


def _unknown(c: _Checker, table: dict, allowed, prefix: str = ""):
    for k in table:
        if k not in allowed:
            c.fail(prefix + k, "unknown key")


def _from_table(c: _Checker, cls, table: dict, prefix: str, checks: dict):
    _unknown(c, table, checks, prefix)
    kwargs = {}
    for key, check in checks.items():
        if key in table:
            val = check(prefix + key, table[key])
            if val is not None:
                kwargs[key] = val
    return cls(**kwargs)


def build_config(raw: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Validate a parsed TOML document, apply CLI overrides, resolve defaults."""
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "particles":
            raw["filter"] = {**raw.get("filter", {}), "particles": v}
        else:
            raw[k] = v

    c = _Checker()
    _unknown(c, raw, ("scenario", "seed", "output_dir", "dump_particles", "map", "filter", "noise", "terrain", "probing", "replay"))

    scenario = c.string("scenario", raw["scenario"], SCENARIOS) if "scenario" in raw else None
    if "scenario" not in raw:
        c.fail("scenario", "required")
    seed = c.integer("seed", raw["seed"], 0, U64_MAX) if "seed" in raw else None
    if "seed" not in raw:
        c.fail("seed", "required (pass --seed or set it in the config)")
    output_dir = c.string("output_dir", raw.get("output_dir", "out"))
    dump = c.boolean("dump_particles", raw.get("dump_particles", False))

    map_src = _from_table(
        c,
        MapSource,
        _section(c, raw, "map"),
        "map.",
        {
            "file": lambda w, v: c.string(w, v),
            "generated": lambda w, v: c.string(w, v, GENERATED_MAPS),
            "kind": lambda w, v: c.string(w, v, MAP_KINDS),
            "resolution": lambda w, v: c.number(w, v, 0, lo_open=True),
        },
    )
    flt = _from_table(
        c,
        FilterSection,
        _section(c, raw, "filter"),
        "filter.",
        {
            "particles": lambda w, v: c.integer(w, v, 1),
            "init_cov_diag": lambda w, v: c.vector(w, v, 6, lo=0.0),
            "sigma_z": lambda w, v: c.number(w, v, 0, lo_open=True),
            "rho": lambda w, v: c.number(w, v, 0, lo_open=True),
            "resample_weight_variance_threshold": lambda w, v: c.number(w, v, 0, lo_open=True),
            "xy_variance_gate_factor": lambda w, v: c.number(w, v, 0, lo_open=True),
            "sample_dims": lambda w, v: _dims(c, w, v),
            "use_ess_trigger": lambda w, v: c.boolean(w, v),
            "ess_fraction": lambda w, v: c.number(w, v, 0, 1, lo_open=True),
        },
    )
    noise = _from_table(
        c,
        NoiseSection,
        _section(c, raw, "noise"),
        "noise.",
        {
            "std": lambda w, v: c.vector(w, v, 4, lo=0.0),
            "bias_z": lambda w, v: c.number(w, v),
            "bias_yaw": lambda w, v: c.number(w, v),
            "cov_inflation": lambda w, v: c.number(w, v, 0),
        },
    )
    terrain = _from_table(
        c,
        TerrainSection,
        _section(c, raw, "terrain"),
        "terrain.",
        {
            "loops": lambda w, v: c.integer(w, v, 1),
            "lateral": lambda w, v: c.number(w, v, 0),
            "lead": lambda w, v: c.number(w, v, 0, lo_open=True),
        },
    )
    probing = _from_table(
        c,
        ProbingSection,
        _section(c, raw, "probing"),
        "probing.",
        {
            "initial_offset": lambda w, v: c.vector(w, v, 3),
            "start": lambda w, v: c.vector(w, v, 3),
            "lateral_steps": lambda w, v: c.integer(w, v, 0),
            "lateral_step": lambda w, v: c.number(w, v, 0, lo_open=True),
        },
    )
    replay = _from_table(c, ReplaySection, _section(c, raw, "replay"), "replay.", {"events": lambda w, v: c.string(w, v)})

    # map source: exactly one; generated maps default per scenario
    if map_src.file is not None and map_src.generated is not None:
        c.fail("map", "give exactly one of 'file' or 'generated'")
    elif map_src.file is None and map_src.generated is None:
        if scenario == "terrain_course":
            map_src = replace(map_src, generated="terrain_course")
        elif scenario == "wall_probe":
            map_src = replace(map_src, generated="room")
        elif scenario == "replay":
            c.fail("map", "replay needs a map: set 'file' or 'generated'")
    if scenario == "terrain_course" and map_src.generated == "room":
        c.fail("map.generated", "terrain_course walks on an elevation map; 'room' is a point cloud")
    if scenario == "wall_probe" and map_src.generated == "terrain_course":
        c.fail("map.generated", "wall_probe needs the 'room' point cloud")
    if scenario == "replay" and replay.events is None:
        c.fail("replay.events", "required for the replay scenario")

    if flt.init_cov_diag is None:
        flt = replace(flt, init_cov_diag=WALL_PROBE_INIT_COV if scenario == "wall_probe" else (0.04, 0.04, 0.04, 0.0, 0.0, 0.01))
    peak = gaussian_peak(flt.sigma_z)
    if flt.rho is None:
        flt = replace(flt, rho=DEFAULT_RHO_FRACTION * peak)
    elif flt.rho >= peak:
        c.fail("filter.rho", f"must be below the Gaussian peak {peak!r}")

    if c.errors:
        raise ConfigError(c.errors)
    return ExperimentConfig(scenario, seed, output_dir, dump, map_src, flt, noise, terrain, probing, replay)


def _dims(c: _Checker, where: str, v) -> Optional[tuple[str, ...]]:
    if not isinstance(v, list) or not all(isinstance(d, str) for d in v):
        c.fail(where, f"expected a list of dimension names, got {v!r}")
        return None
    bad = [d for d in v if d not in SAMPLE_DIMS]
    if bad:
        c.fail(where, f"unknown or unsampled dimension(s) {bad}; allowed: {', '.join(SAMPLE_DIMS)}")
        return None
    return tuple(d for d in SAMPLE_DIMS if d in v)


def validate_config(source, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse TOML text or bytes (or an empty document) and validate it."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        raw = tomllib.loads(source or "")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax: {exc}"]) from None
    return build_config(raw, overrides)


def resolved_toml(cfg: ExperimentConfig) -> str:
    return cfg.to_toml()

