import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .core import config as defaults
from .gridset import Grid
from .map_model import MapSpec


def get_config_filename() -> str:
    """Run-file name; DYNLAB_CONFIG_NAME overrides ``dynlab.yaml``."""
    return os.environ.get("DYNLAB_CONFIG_NAME", "dynlab.yaml")


def get_global_config_path() -> Path | None:
    candidate = Path.home() / ".dynlab" / get_config_filename()
    return candidate if candidate.exists() else None


def find_local_config_paths() -> list[Path]:
    """Run files from the filesystem root down to cwd.

    Within one directory ``dynlab.yaml`` comes before ``.dynlab/dynlab.yaml``.
    """
    name = get_config_filename()
    here = Path.cwd()
    found: list[Path] = []
    for directory in reversed([here, *here.parents]):
        for candidate in (directory / name, directory / ".dynlab" / name):
            if candidate.exists():
                found.append(candidate)
    return found


def _read_yaml(path: Path) -> dict:
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}


def _isolates(layer: dict) -> bool:
    run = layer.get("run") or {}
    return isinstance(run, dict) and bool(run.get("isolate", False))


def load_and_merge_configs(explicit: Optional[str | Path] = None) -> dict:
    """
    Read and merge the run files that apply to the current directory.

    An explicit path (``--config``) or an existing DYNLAB_CONFIG file is read
    on its own. Otherwise the global ``~/.dynlab/dynlab.yaml`` is layered
    under the local files, nearest last. The nearest local file with
    ``run.isolate: true`` drops the global file and every file above it.
    Top-level keys are replaced whole.
    """
    if explicit is not None:
        return _read_yaml(Path(explicit))

    env_path = os.environ.get("DYNLAB_CONFIG")
    if env_path and Path(env_path).exists():
        return _read_yaml(Path(env_path))

    layers = [_read_yaml(path) for path in find_local_config_paths()]
    cut = next((i for i in range(len(layers) - 1, -1, -1) if _isolates(layers[i])), None)
    if cut is None:
        global_path = get_global_config_path()
        if global_path is not None:
            layers.insert(0, _read_yaml(global_path))
    else:
        layers = layers[cut:]

    merged: dict = {}
    for layer in layers:
        merged.update(layer)
    return merged


@dataclass(frozen=True)
class Tolerances:
    num: float = defaults.TOL_NUM
    cycle: float = defaults.TOL_CYCLE
    mult: float = defaults.TOL_MULT
    inclusion: float = defaults.TOL_INCLUSION


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one run; embedded verbatim in every report."""

    seed: int = defaults.SEED
    # None means 2**-GRID_EXP * λ(M)
    grid_h: Optional[float] = None
    budget: int = defaults.BUDGET
    n_samples: int = defaults.SAMPLES
    p_max: int = defaults.P_MAX
    threads: int = defaults.THREADS
    out: Optional[str] = None
    burn_in: int = defaults.BURN_IN
    visit_min: int = defaults.VISIT_MIN
    cascade_min: int = defaults.CASCADE_MIN
    r_min: int = defaults.R_MIN
    component_min: float = defaults.COMPONENT_MIN
    support_exp: int = defaults.SUPPORT_EXP
    signature_exp: int = defaults.SIGNATURE_EXP
    recurrence_exp: int = defaults.RECURRENCE_EXP
    lambda_exp: int = defaults.LAMBDA_EXP
    tolerances: Tolerances = field(default_factory=Tolerances)
    params: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_mapping(cls, data: Optional[Dict[str, Any]] = None, **overrides: Any) -> "RunConfig":
        """Build from a YAML ``run:`` block, then apply non-None overrides."""
        data = dict(data or {})
        data.pop("isolate", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"Unknown run settings: {', '.join(unknown)}")
        tol = data.pop("tolerances", None) or {}
        if not isinstance(tol, Tolerances):
            tol = Tolerances(**{k: float(v) for k, v in tol.items()})
        values = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        values.setdefault("tolerances", tol)
        for name in ("seed", "budget", "n_samples", "p_max", "threads", "burn_in", "visit_min",
                     "cascade_min", "r_min", "support_exp", "signature_exp", "recurrence_exp", "lambda_exp"):
            if name in values:
                values[name] = int(values[name])
        if values.get("grid_h") is not None:
            values["grid_h"] = float(values["grid_h"])
        if "component_min" in values:
            values["component_min"] = float(values["component_min"])
        return cls(**values)

    def with_params(self, **params: Any) -> "RunConfig":
        return replace(self, params={**self.params, **params})

    def resolve_grid_h(self, map: MapSpec) -> float:
        return self.grid_h if self.grid_h is not None else map.measure * 2.0**-defaults.GRID_EXP

    def support_grid(self, map: MapSpec) -> Grid:
        return Grid.dyadic(map.hull, self.support_exp)

    def signature_grid(self, map: MapSpec) -> Grid:
        return Grid.dyadic(map.hull, self.signature_exp)

    def recurrence_grid(self, map: MapSpec) -> Grid:
        return Grid.dyadic(map.hull, self.recurrence_exp)

    def lambda_grid(self, map: MapSpec) -> Grid:
        return Grid.dyadic(map.hull, self.lambda_exp)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["params"] = dict(self.params)
        return data


def load_run_config(explicit: Optional[str | Path] = None, **overrides: Any) -> RunConfig:
    """Defaults <- merged YAML ``run:`` block <- CLI overrides."""
    merged = load_and_merge_configs(explicit)
    return RunConfig.from_mapping(merged.get("run", {}) or {}, **overrides)
