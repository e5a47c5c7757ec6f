"""Run configuration: YAML tree, strict validation, builtin instances.

Unknown keys are errors, not warnings, so a typo in a tolerance name cannot
silently fall back to a default.  The fully-resolved configuration is echoed
beside every run's outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import yaml

from .algebra import PrimitiveBasis
from .errors import ConfigError
from .fields import (GridSpec, SymmField, VectorField, load_field,
                     metric_product, sym_grad, sym_pairs)
from .solver import SolveConfig
from .stage import StageConfig

_SCHEMA: dict[str, dict[str, type | tuple]] = {
    "problem": {
        "dimension": int,
        "domain_lo": list,
        "domain_hi": list,
        "points_per_axis": int,
        "margin": (int, float),
    },
    "data": {
        "matrix": {
            "kind": str,
            "magnitude": (int, float),
            "quad_scale": (int, float),
            "trig_amplitude": (int, float),
            "trig_frequency": (int, float),
            "path": str,
        },
        "fields": {
            "kind": str,
            "scale": (int, float),
            "seed": int,
            "v_path": str,
            "w_path": str,
        },
    },
    "stage": {
        "sigma": (int, float),
        "steps": int,
        "reduction": int,
        "bound_m": (int, float),
        "reg_r": int,
        "reg_beta": (int, float),
        "fd_order": int,
        "points_per_oscillation": (int, float),
        "constant_cap": (int, float),
        "error_slack": (int, float),
        "coefficient_floor": (int, float),
    },
    "solve": {
        "max_stages": int,
        "target_defect": (int, float),
        "alphas": list,
        "holder_budget": int,
    },
    "sweep": {
        "sigmas": list,
    },
    "output": {
        "directory": str,
        "snapshots": bool,
        "seed": int,
    },
}

_MATRIX_KINDS = ("constant", "quadratic", "trig", "file")
_FIELD_KINDS = ("zero", "affine", "trig", "file")


def _validate(tree: Any, schema: dict, path: str):
    if not isinstance(tree, dict):
        raise ConfigError(f"section '{path or '<root>'}' must be a mapping")
    for key, value in tree.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{path}{key}'; known keys here:"
                              f" {sorted(schema)}")
        want = schema[key]
        if isinstance(want, dict):
            _validate(value, want, f"{path}{key}.")
        elif not isinstance(value, want):
            raise ConfigError(
                f"key '{path}{key}' expects {want}, got {type(value).__name__}")


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    tree: dict

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        try:
            tree = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"config is not valid YAML: {err}") from err
        if tree is None:
            tree = {}
        _validate(tree, _SCHEMA, "")
        for required in ("problem", "data", "stage"):
            if required not in tree:
                raise ConfigError(f"missing required section '{required}'")
        return cls(tree)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.parse(fh.read())

    def section(self, name: str, default=None) -> dict:
        return self.tree.get(name, default if default is not None else {})

    def grid(self) -> GridSpec:
        p = self.section("problem")
        try:
            return GridSpec.for_domain(p["domain_lo"], p["domain_hi"],
                                       p["points_per_axis"], p["margin"])
        except KeyError as err:
            raise ConfigError(f"problem section is missing {err}") from err
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def stage_config(self) -> StageConfig:
        s = dict(self.section("stage"))
        if "sigma" not in s:
            raise ConfigError("stage section must set sigma")
        try:
            return StageConfig(**s)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    def solve_config(self) -> SolveConfig:
        s = dict(self.section("solve"))
        if "alphas" in s and s["alphas"] is not None:
            s["alphas"] = tuple(float(a) for a in s["alphas"])
        seed = self.section("output").get("seed", 0)
        return SolveConfig(stage=self.stage_config(), holder_seed=seed, **s)

    def sweep_sigmas(self) -> list[float]:
        sigmas = self.section("sweep").get("sigmas")
        if not sigmas:
            raise ConfigError("sweep section must list sigmas")
        return [float(s) for s in sigmas]

    def build_instance(self) -> tuple[VectorField, VectorField, SymmField]:
        """Materialize (v, w, A) from the data section."""
        spec = self.grid()
        data = self.section("data")
        v, w = _build_fields(spec, data.get("fields", {"kind": "affine"}))
        A = _build_matrix(spec, data.get("matrix", {"kind": "constant"}), v, w)
        return v, w, A

    def resolved(self) -> dict:
        return self.tree


def _affine_maps(spec: GridSpec, scale: float) -> tuple[VectorField, VectorField]:
    from .algebra import Dims
    d = spec.dim
    codim = Dims(d).codim
    rng = np.random.default_rng(7)
    slopes_v = rng.uniform(-0.2, 0.2, size=(codim, d)) * scale
    slopes_w = rng.uniform(-0.1, 0.1, size=(d, d)) * scale
    coords = spec.coords()
    v = VectorField(spec, np.stack([
        sum(slopes_v[n, q] * coords[q] for q in range(d)) for n in range(codim)]),
        spec.margin)
    w = VectorField(spec, np.stack([
        sum(slopes_w[p, q] * coords[q] for q in range(d)) for p in range(d)]),
        spec.margin)
    return v, w


def _trig_maps(spec: GridSpec, scale: float, seed: int) -> tuple[VectorField, VectorField]:
    from .algebra import Dims
    d = spec.dim
    codim = Dims(d).codim
    rng = np.random.default_rng(seed)
    coords = spec.coords()

    def smooth(k):
        amp = rng.uniform(0.2, 1.0) * scale
        ks = rng.uniform(0.5, 1.5, size=d)
        phase = rng.uniform(0, 2 * np.pi)
        return amp * np.sin(sum(kq * c for kq, c in zip(ks, coords)) + phase)

    v = VectorField(spec, np.stack([smooth(n) for n in range(codim)]), spec.margin)
    w = VectorField(spec, np.stack([smooth(n) for n in range(d)]), spec.margin)
    return v, w


def _build_fields(spec: GridSpec, cfg: dict) -> tuple[VectorField, VectorField]:
    kind = cfg.get("kind", "affine")
    if kind not in _FIELD_KINDS:
        raise ConfigError(f"unknown field kind '{kind}'; choose from {_FIELD_KINDS}")
    scale = float(cfg.get("scale", 1.0))
    if kind == "zero":
        from .algebra import Dims
        return (VectorField.zeros(spec, Dims(spec.dim).codim),
                VectorField.zeros(spec, spec.dim))
    if kind == "affine":
        return _affine_maps(spec, scale)
    if kind == "trig":
        return _trig_maps(spec, scale, int(cfg.get("seed", 11)))
    v = load_field(cfg["v_path"])
    w = load_field(cfg["w_path"])
    if not isinstance(v, VectorField) or not isinstance(w, VectorField):
        raise ConfigError("field files must hold vector fields")
    return v, w


def _build_matrix(spec: GridSpec, cfg: dict, v: VectorField,
                  w: VectorField) -> SymmField:
    kind = cfg.get("kind", "constant")
    if kind not in _MATRIX_KINDS:
        raise ConfigError(f"unknown matrix kind '{kind}'; choose from {_MATRIX_KINDS}")
    if kind == "file":
        A = load_field(cfg["path"])
        if not isinstance(A, SymmField):
            raise ConfigError("matrix file must hold a symmetric matrix field")
        return A
    basis = PrimitiveBasis(spec.dim)
    magnitude = float(cfg.get("magnitude", 0.5))
    scale = magnitude / np.abs(basis.center).max()
    base = 0.5 * metric_product(v) + sym_grad(w)
    coords = spec.coords()
    pairs = sym_pairs(spec.dim)
    if kind == "constant":
        extra = np.stack([np.full(spec.shape, scale * basis.center[i, j])
                          for i, j in pairs])
    elif kind == "quadratic":
        q = float(cfg.get("quad_scale", 0.1))
        extra = np.stack([scale * basis.center[i, j]
                          + q * (coords[i] * coords[j]) for i, j in pairs])
    else:  # trig
        amp = float(cfg.get("trig_amplitude", 0.2))
        freq = float(cfg.get("trig_frequency", 2.0))
        wobble = 1.0 + amp * np.sin(freq * coords[0]
                                    + 0.5 * freq * coords[min(1, spec.dim - 1)])
        extra = np.stack([scale * basis.center[i, j] * wobble for i, j in pairs])
    return SymmField(spec, base.data + extra, base.valid_margin)


TEMPLATE = """\
# vkcorr run configuration (YAML). Unknown keys are rejected.

problem:
  dimension: 2              # base dimension d (>= 2)
  domain_lo: [0.0, 0.0]     # user domain lower corner
  domain_hi: [0.4, 0.4]     # user domain upper corner (equal extents required)
  points_per_axis: 1025     # grid points across the inflated box
  margin: 0.85              # inflation per side; must cover 1/mu0 + stencils

data:
  matrix:
    kind: constant          # constant | quadratic | trig | file
    magnitude: 0.6          # target defect size (0 < |D| <= 1)
    # quad_scale: 0.1       # quadratic kind: curvature of the data
    # trig_amplitude: 0.2   # trig kind: relative modulation
    # trig_frequency: 2.0
    # path: A.mafield       # file kind
  fields:
    kind: affine            # zero | affine | trig | file
    scale: 1.0
    # seed: 11              # trig kind
    # v_path: v.mafield     # file kind
    # w_path: w.mafield

stage:
  sigma: 6.0                # relative frequency (must exceed the measured sigma_0 ~ 5.5)
  steps: 1                  # K inner steps
  reduction: 1              # N integration-by-parts depth
  reg_r: 1                  # data regularity (r, beta)
  reg_beta: 1.0
  fd_order: 4               # 2 or 4
  points_per_oscillation: 8.0
  constant_cap: 100.0
  error_slack: 200.0
  coefficient_floor: 0.25

solve:
  max_stages: 1
  target_defect: 0.0
  # alphas: [0.07, 0.13, 0.29]   # default: 0.5/0.9/2.0 x alpha window
  holder_budget: 2000000

# sweep:
#   sigmas: [6.0, 6.75, 7.5]

output:
  directory: out
  snapshots: false          # dump MAFIELD1 field snapshots
  seed: 0                   # sampling seed for Hoelder estimation
"""
