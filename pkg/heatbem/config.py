"""
Run configuration: a JSON document parsed into RunConfig.

Every validation failure raises ConfigError naming the offending field.
dump_config writes the canonical form (sorted keys, two-space indent, all
defaults filled in), so dump_config(parse_config(doc)) is stable.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from heatbem.cq import CQScheme, parse_scheme
from heatbem.errors import ConfigError, GeometryError, SchemeError
from heatbem.geometry import Polygon, make_polygon, mesh_polygon
from heatbem.trace_spaces import TraceSpacePair, build_spaces

logger = logging.getLogger(__name__)

PRESET_VERTICES = {
    "paper-quad": [[0.0, 0.0], [1.0, 0.0], [0.8, 0.8], [0.2, 1.0]],
    # U-shaped inclusion opening upwards
    "horseshoe": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.7, 1.0],
                  [0.7, 0.3], [0.3, 0.3], [0.3, 1.0], [0.0, 1.0]],
}

DEMO_SNAPSHOT_TIMES = [0.0, 0.06, 0.2, 0.375, 0.75, 1.0]


@dataclass
class SourceConfig:
    count: int = 8
    center: List[float] = field(default_factory=lambda: [0.5, 0.5])
    radius: float = 0.9


@dataclass
class GridConfig:
    x_min: float = -0.5
    x_max: float = 1.5
    y_min: float = -0.5
    y_max: float = 1.5
    nx: int = 21
    ny: int = 21


@dataclass
class RunConfig:
    geometry: Union[str, List[List[float]]] = "paper-quad"
    rho: float = 1.5
    kappa: float = 1.2
    scheme: str = "bdf:2"
    k: float = 0.0625
    T: float = 1.0
    p: int = 0
    h: float = 0.25
    levels: int = 1
    manufactured: bool = True
    x_sc: List[float] = field(default_factory=lambda: [1.5, 1.6])
    t_lag: float = 0.001
    sources: SourceConfig = field(default_factory=SourceConfig)
    snapshot_times: List[float] = field(default_factory=list)
    grid: GridConfig = field(default_factory=GridConfig)
    output_dir: str = "out"
    contour_points: Optional[int] = None

    @property
    def m(self) -> float:
        return self.kappa / self.rho

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.k)))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def build_spaces(self, polygon: Polygon) -> TraceSpacePair:
        return build_spaces(mesh_polygon(polygon, self.h), self.p)


def _number(body: Dict, key: str, default, positive: bool = False, integer: bool = False, prefix: str = ""):
    value = body.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(prefix + key, f"must be a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(prefix + key, f"must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not math.isfinite(value):
        raise ConfigError(prefix + key, "must be finite")
    if positive and value <= 0:
        raise ConfigError(prefix + key, f"must be positive, got {value}")
    return value


def _point(body: Dict, key: str, default, prefix: str = "") -> List[float]:
    value = body.get(key, default)
    try:
        point = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(prefix + key, f"must be a 2D point, got {value!r}") from None
    if len(point) != 2 or not all(math.isfinite(v) for v in point):
        raise ConfigError(prefix + key, f"must be a finite 2D point, got {value!r}")
    return point


def _check_keys(body: Dict, allowed, prefix: str = ""):
    unknown = sorted(set(body) - set(allowed))
    if unknown:
        raise ConfigError(prefix + unknown[0], "unknown configuration key")


def parse_config(body: Dict[str, Any]) -> RunConfig:
    if not isinstance(body, dict):
        raise ConfigError("config", "top level must be a JSON object")
    defaults = RunConfig()
    _check_keys(body, defaults.to_dict())

    geometry = body.get("geometry", defaults.geometry)
    if isinstance(geometry, str):
        if geometry not in PRESET_VERTICES:
            raise ConfigError("geometry", f"unknown preset {geometry!r}; choose from {sorted(PRESET_VERTICES)}")
    else:
        try:
            geometry = [[float(x), float(y)] for x, y in geometry]
        except (TypeError, ValueError):
            raise ConfigError("geometry", "must be a preset name or a list of [x, y] vertices") from None
        try:
            make_polygon(geometry)
        except GeometryError as e:
            raise ConfigError("geometry", str(e)) from None

    scheme = body.get("scheme", defaults.scheme)
    if not isinstance(scheme, str):
        raise ConfigError("scheme", f"must be a string like 'bdf:2', got {scheme!r}")
    try:
        parse_scheme(scheme, 1.0, 1)
    except SchemeError as e:
        raise ConfigError("scheme", str(e)) from None

    src_body = body.get("sources", {})
    if not isinstance(src_body, dict):
        raise ConfigError("sources", "must be an object")
    _check_keys(src_body, asdict(SourceConfig()), "sources.")
    sources = SourceConfig(
        count=_number(src_body, "count", 8, integer=True, prefix="sources."),
        center=_point(src_body, "center", [0.5, 0.5], prefix="sources."),
        radius=_number(src_body, "radius", 0.9, positive=True, prefix="sources."),
    )
    if sources.count < 0:
        raise ConfigError("sources.count", "must be nonnegative")

    grid_body = body.get("grid", {})
    if not isinstance(grid_body, dict):
        raise ConfigError("grid", "must be an object")
    _check_keys(grid_body, asdict(GridConfig()), "grid.")
    grid_defaults = GridConfig()
    grid = GridConfig(**{
        key: _number(grid_body, key, getattr(grid_defaults, key), positive=key in ("nx", "ny"),
                     integer=key in ("nx", "ny"), prefix="grid.")
        for key in asdict(grid_defaults)
    })
    if grid.x_max <= grid.x_min:
        raise ConfigError("grid.x_max", "must exceed grid.x_min")
    if grid.y_max <= grid.y_min:
        raise ConfigError("grid.y_max", "must exceed grid.y_min")

    times = body.get("snapshot_times", [])
    try:
        times = [float(t) for t in times]
    except (TypeError, ValueError):
        raise ConfigError("snapshot_times", "must be a list of numbers") from None
    if any(t < 0 or not math.isfinite(t) for t in times):
        raise ConfigError("snapshot_times", "times must be finite and nonnegative")

    manufactured = body.get("manufactured", defaults.manufactured)
    if not isinstance(manufactured, bool):
        raise ConfigError("manufactured", "must be true or false")

    contour_points = body.get("contour_points")
    if contour_points is not None:
        contour_points = _number(body, "contour_points", None, positive=True, integer=True)

    output_dir = body.get("output_dir", defaults.output_dir)
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "must be a nonempty string")

    config = RunConfig(
        geometry=geometry,
        rho=_number(body, "rho", defaults.rho, positive=True),
        kappa=_number(body, "kappa", defaults.kappa, positive=True),
        scheme=scheme.strip().lower(),
        k=_number(body, "k", defaults.k, positive=True),
        T=_number(body, "T", defaults.T, positive=True),
        p=_number(body, "p", defaults.p, integer=True),
        h=_number(body, "h", defaults.h, positive=True),
        levels=_number(body, "levels", defaults.levels, positive=True, integer=True),
        manufactured=manufactured,
        x_sc=_point(body, "x_sc", defaults.x_sc),
        t_lag=_number(body, "t_lag", defaults.t_lag),
        sources=sources,
        snapshot_times=times,
        grid=grid,
        output_dir=output_dir,
        contour_points=contour_points,
    )
    if config.p < 0:
        raise ConfigError("p", "must be nonnegative")
    if config.t_lag < 0:
        raise ConfigError("t_lag", "must be nonnegative")
    if abs(config.n_steps * config.k - config.T) > 1e-9 * config.T:
        logger.warning("T=%g is not a multiple of k=%g; using N=%d steps", config.T, config.k, config.n_steps)
    if contour_points is not None and contour_points < config.n_steps + 1:
        raise ConfigError("contour_points", f"must be at least N + 1 = {config.n_steps + 1}")
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    try:
        body = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON in {path}: {e}") from None
    return parse_config(body)


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def build_geometry(config: RunConfig) -> Polygon:
    vertices = PRESET_VERTICES[config.geometry] if isinstance(config.geometry, str) else config.geometry
    return make_polygon(vertices)


def build_scheme(config: RunConfig) -> CQScheme:
    return parse_scheme(config.scheme, config.k, config.n_steps)


def grid_points(grid: GridConfig) -> np.ndarray:
    """Row-major grid: x varies fastest"""
    xs = np.linspace(grid.x_min, grid.x_max, grid.nx)
    ys = np.linspace(grid.y_min, grid.y_max, grid.ny)
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()])
