"""Scenario files: JSON-declared runs (model family, grid, time stepping,
initial bumps, optional limit-ODE settings) with validation and bundled
reference scenarios."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .grid import TraitGrid, build_grid
from .models import (AssumptionConstants, DiffusionCoefficient,
                     MODEL_FAMILIES, ModelError, build_model,
                     constant_diffusion, sine_diffusion)
from .pde import SimulationConfig


class ScenarioError(ValueError):
    """Scenario file failed validation; message names the offending field."""


def _require(d, key, types, path):
    if key not in d:
        raise ScenarioError(f"missing field {path}.{key}")
    v = d[key]
    if not isinstance(v, types):
        raise ScenarioError(f"field {path}.{key} has type "
                            f"{type(v).__name__}, expected "
                            f"{'/'.join(t.__name__ for t in types)}")
    return v


_NUM = (int, float)


@dataclass
class Scenario:
    """Validated scenario; `raw` is the exact parsed JSON object (bit-exact
    round-trip through to_json)."""

    raw: dict

    def __post_init__(self):
        d = self.raw
        if not isinstance(d, dict):
            raise ScenarioError("scenario root must be a JSON object")
        _require(d, "name", (str,), "$")
        dim = _require(d, "dimension", (int,), "$")
        if dim not in (1, 2):
            raise ScenarioError(f"field $.dimension must be 1 or 2, got {dim}")

        model = _require(d, "model", (dict,), "$")
        family = _require(model, "family", (str,), "$.model")
        if family not in MODEL_FAMILIES:
            raise ScenarioError(f"field $.model.family: unknown family "
                                f"{family!r}; known: {sorted(MODEL_FAMILIES)}")

        grid = _require(d, "grid", (dict,), "$")
        for key in ("lower", "upper"):
            _require(grid, key, _NUM + (list,), "$.grid")
        _require(grid, "points_per_axis", (int, list), "$.grid")

        cfg = _require(d, "config", (dict,), "$")
        for key in ("epsilon", "dt"):
            v = _require(cfg, key, _NUM, "$.config")
            if v <= 0:
                raise ScenarioError(f"field $.config.{key} must be positive, "
                                    f"got {v}")
        steps = _require(cfg, "steps", (int,), "$.config")
        if steps < 0:
            raise ScenarioError(f"field $.config.steps must be nonnegative, "
                                f"got {steps}")
        variant = cfg.get("variant", "global")
        if variant not in ("global", "local", "variable_diffusion"):
            raise ScenarioError(f"field $.config.variant: unknown variant "
                                f"{variant!r}")
        if variant == "variable_diffusion" and "diffusion" not in d:
            raise ScenarioError("field $.diffusion required for the "
                                "variable_diffusion variant")

        u0 = _require(d, "u0", (list,), "$")
        if not u0:
            raise ScenarioError("field $.u0 must list at least one bump")
        for k, bump in enumerate(u0):
            if not isinstance(bump, dict):
                raise ScenarioError(f"field $.u0[{k}] must be an object")
            center = _require(bump, "center", (list,), f"$.u0[{k}]")
            weights = _require(bump, "weights", (list,), f"$.u0[{k}]")
            if len(center) != dim or len(weights) != dim:
                raise ScenarioError(f"field $.u0[{k}]: center/weights must "
                                    f"have length {dim}")
            if any(w <= 0 for w in weights):
                raise ScenarioError(f"field $.u0[{k}].weights must be "
                                    "positive (concave bumps)")

        can = d.get("canonical")
        if can is not None:
            mode = _require(can, "closure", (str,), "$.canonical")
            if mode not in ("from_pde", "frozen", "riccati"):
                raise ScenarioError(f"field $.canonical.closure: unknown "
                                    f"mode {mode!r}")

        if "constants" in d:
            try:
                AssumptionConstants.from_dict(d["constants"])
            except ModelError as exc:
                raise ScenarioError(f"field $.constants: {exc}") from exc

    # --- accessors -----------------------------------------------------

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def dimension(self) -> int:
        return self.raw["dimension"]

    @property
    def u0(self) -> list:
        return self.raw["u0"]

    @property
    def probes(self) -> list:
        return self.raw.get("probes", [])

    def build_grid(self) -> TraitGrid:
        g = self.raw["grid"]
        return build_grid(self.dimension, g["lower"], g["upper"],
                          g["points_per_axis"])

    def build_model(self):
        return build_model(self.raw["model"], self.dimension)

    def build_config(self) -> SimulationConfig:
        c = self.raw["config"]
        return SimulationConfig(
            epsilon=c["epsilon"], dt=c["dt"], steps=c["steps"],
            model_variant=c.get("variant", "global"),
            snapshot_every=c.get("snapshot_every", 0),
            mass_target=c.get("mass_target", 0.3),
            picard=c.get("picard", 0))

    def build_diffusion(self) -> DiffusionCoefficient:
        spec = self.raw.get("diffusion")
        if spec is None:
            return None
        kind = spec.get("type", "constant")
        if kind == "constant":
            return constant_diffusion(spec.get("value", 1.0))
        if kind == "sine":
            return sine_diffusion(spec.get("base", 1.0),
                                  spec.get("amp", 0.5),
                                  spec.get("freq", 1.0),
                                  spec.get("axis", 0))
        raise ScenarioError(f"field $.diffusion.type: unknown type {kind!r}")

    def build_constants(self) -> AssumptionConstants:
        return AssumptionConstants.from_dict(self.raw.get("constants", {}))

    def canonical_settings(self) -> dict:
        """Closure mode and ODE time grid; defaults mirror the PDE config."""
        can = dict(self.raw.get("canonical") or {})
        cfg = self.raw["config"]
        can.setdefault("closure", "from_pde")
        can.setdefault("dt", cfg["dt"])
        can.setdefault("T", cfg["steps"] * cfg["dt"])
        return can

    def domain(self):
        grid = self.build_grid()
        return (np.array(grid.lower), np.array(grid.upper))

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def load_scenario(path) -> Scenario:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return Scenario(raw)


def bundled_scenario_names() -> list:
    base = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> Scenario:
    base = resources.files(__package__) / "scenarios"
    path = base / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}; available: "
                            f"{bundled_scenario_names()}")
    return Scenario(json.loads(path.read_text()))
