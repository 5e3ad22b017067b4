"""Experiment configuration: one YAML tree, schema-validated up front.

Unknown keys are rejected and every schema error names the offending
key path, with the YAML line number when the file provides one. Two
environment variables override the tree: FLOWREFINE_OUT replaces the
output directory and FLOWREFINE_THREADS caps BLAS thread pools.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field

import numpy as np
import yaml

from .datasets import DATASET_NAMES, AugSpec, DatasetSpec
from .errors import ConfigError
from .generator import DEFAULT_INVERT_SOLVER, DEFAULT_SAMPLE_SOLVER, TrainConfig
from .interpolant import MixSpec
from .metrics import MetricSpec
from .ode import SolverSpec
from .refine import DEFAULT_REFINE_SOLVER, REFINER_KINDS

ENV_OUT = "FLOWREFINE_OUT"
ENV_THREADS = "FLOWREFINE_THREADS"

SIGMA_D_GRID = (0.01, 0.05, 0.1, 0.2)
SIGMA_F_GRID = (0.01, 0.05, 0.1, 0.2)
ALPHA_GRID = (0.0, 0.1, 0.2, 0.3, 0.5)
NFE_GRID = (1, 2, 5, 10)

ABLATE_PARAMS = ("sigma_d", "sigma_f", "alpha", "nfe")


@dataclass
class RefinerSettings:
    kind: str = "dfr"
    steps: int = 2000
    batch_size: int = 256
    lr: float = 1e-3
    eval_every: int = 500
    aug: AugSpec = dc_field(default_factory=AugSpec)
    mix: MixSpec = dc_field(default_factory=MixSpec)
    sigma_d: float = 0.1
    sigma_f: float = 0.05
    sigma_z: float = 0.1
    sample_pool: int = 0
    invert_n: int | None = 4096

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=seed,
            eval_every=self.eval_every,
        )


@dataclass
class SolverSettings:
    base: SolverSpec = DEFAULT_SAMPLE_SOLVER
    invert: SolverSpec = DEFAULT_INVERT_SOLVER
    refine: SolverSpec = DEFAULT_REFINE_SOLVER


@dataclass
class AblateSettings:
    param: str = "sigma_d"
    values: list[float] | None = None


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    base: TrainConfig = dc_field(default_factory=TrainConfig)
    refiner: RefinerSettings = dc_field(default_factory=RefinerSettings)
    solvers: SolverSettings = dc_field(default_factory=SolverSettings)
    metrics: MetricSpec = dc_field(default_factory=MetricSpec)
    ablate: AblateSettings = dc_field(default_factory=AblateSettings)
    seeds: list[int] = dc_field(default_factory=lambda: [0])
    out_dir: str = "runs/out"


class _LineMap:
    """Key-path to line-number index built from the YAML node tree."""

    def __init__(self, text: str):
        self.lines: dict[str, int] = {}
        try:
            root = yaml.compose(text)
        except yaml.YAMLError:
            root = None
        if root is not None:
            self._walk(root, "")

    def _walk(self, node, prefix: str) -> None:
        if not isinstance(node, yaml.MappingNode):
            return
        for key_node, val_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            self.lines[path] = key_node.start_mark.line + 1
            self._walk(val_node, path)

    def describe(self, path: str) -> str:
        line = self.lines.get(path)
        return f"'{path}' (line {line})" if line else f"'{path}'"


def _convert(value, kind: str, where: str):
    try:
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "int_list":
            if not isinstance(value, list) or not value:
                raise TypeError
            return [_convert(v, "int", where) for v in value]
        if kind == "float_list":
            if not isinstance(value, list) or not value:
                raise TypeError
            return [_convert(v, "float", where) for v in value]
        if kind == "int_pair":
            pair = _convert(value, "int_list", where)
            if len(pair) != 2:
                raise TypeError
            return tuple(pair)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind.replace('_', ' ')}, got {value!r}")
    raise ConfigError(f"internal: unknown field kind {kind}")


def _section(tree: dict, name: str, fields: dict, lines: _LineMap) -> dict:
    """Extract one mapping, rejecting unknown keys and coercing types."""
    raw = tree.get(name)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{lines.describe(name)}: expected a mapping")
    out = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        if key not in fields:
            raise ConfigError(f"unknown key {lines.describe(path)}")
        kind = fields[key]
        if value is None:
            out[key] = None
        else:
            out[key] = _convert(value, kind, lines.describe(path))
    return out


_DATASET_FIELDS = {
    "name": "str",
    "n": "int",
    "seed": "int",
    "radius": "float",
    "mode_std": "float",
    "center": "float_list",
    "noise": "float",
    "grid": "int_pair",
}
_TRAIN_FIELDS = {
    "steps": "int",
    "batch_size": "int",
    "lr": "float",
    "seed": "int",
    "eval_every": "int",
    "hidden": "int_list",
    "freq_count": "int",
}
_REFINER_FIELDS = {
    "kind": "str",
    "steps": "int",
    "batch_size": "int",
    "lr": "float",
    "eval_every": "int",
    "aug": "mapping",
    "mix": "mapping",
    "sigma_d": "float",
    "sigma_f": "float",
    "sigma_z": "float",
    "sample_pool": "int",
    "invert_n": "int",
}
_AUG_FIELDS = {"noise_std": "float", "blur_width": "int", "prob": "float"}
_MIX_FIELDS = {"alpha_max": "float", "mode": "str"}
_SOLVER_FIELDS = {"kind": "str", "steps": "int"}
_METRIC_FIELDS = {
    "tau": "float",
    "n_projections": "int",
    "e_max": "float",
    "seed": "int",
    "eval_n": "int",
}
_ABLATE_FIELDS = {"param": "str", "values": "float_list"}
_TOP_KEYS = (
    "dataset",
    "base",
    "refiner",
    "solvers",
    "metrics",
    "ablate",
    "seeds",
    "out_dir",
)


def _solver_from(tree: dict, name: str, lines: _LineMap, default: SolverSpec) -> SolverSpec:
    got = _section(tree, name, _SOLVER_FIELDS, lines)
    if not got:
        return default
    return SolverSpec(
        kind=got.get("kind", default.kind),
        steps=got.get("steps", default.steps),
        direction=default.direction,
    )


def config_from_tree(tree: dict, lines: _LineMap | None = None) -> ExperimentConfig:
    if lines is None:
        lines = _LineMap("")
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")
    for key in tree:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown key {lines.describe(str(key))}")

    ds = _section(tree, "dataset", _DATASET_FIELDS, lines)
    if "name" not in ds:
        raise ConfigError(f"missing required key {lines.describe('dataset.name')}")
    if ds["name"] not in DATASET_NAMES:
        raise ConfigError(
            f"{lines.describe('dataset.name')}: unknown dataset {ds['name']!r}"
        )
    if "center" in ds:
        ds["center"] = tuple(ds["center"])
    try:
        dataset = DatasetSpec(**ds)
    except ConfigError as exc:
        raise ConfigError(f"dataset: {exc}") from exc

    tr = _section(tree, "base", _TRAIN_FIELDS, lines)
    if "hidden" in tr:
        tr["hidden"] = tuple(tr["hidden"])
    try:
        base = TrainConfig(**tr)
    except ConfigError as exc:
        raise ConfigError(f"base: {exc}") from exc

    rf_raw = dict(tree.get("refiner") or {})
    aug_spec = AugSpec(**_section(rf_raw, "aug", _AUG_FIELDS, lines))
    mix_spec = MixSpec(**_section(rf_raw, "mix", _MIX_FIELDS, lines))
    rf_raw.pop("aug", None)
    rf_raw.pop("mix", None)
    rf = _section({"refiner": rf_raw}, "refiner", _REFINER_FIELDS, lines)
    if "kind" in rf and rf["kind"] not in REFINER_KINDS:
        raise ConfigError(
            f"{lines.describe('refiner.kind')}: unknown refiner {rf['kind']!r}"
        )
    refiner = RefinerSettings(aug=aug_spec, mix=mix_spec, **rf)

    solvers_raw = tree.get("solvers") or {}
    if not isinstance(solvers_raw, dict):
        raise ConfigError(f"{lines.describe('solvers')}: expected a mapping")
    for key in solvers_raw:
        if key not in ("base", "invert", "refine"):
            raise ConfigError(f"unknown key {lines.describe(f'solvers.{key}')}")
    solvers = SolverSettings(
        base=_solver_from(solvers_raw, "base", lines, DEFAULT_SAMPLE_SOLVER),
        invert=_solver_from(solvers_raw, "invert", lines, DEFAULT_INVERT_SOLVER),
        refine=_solver_from(solvers_raw, "refine", lines, DEFAULT_REFINE_SOLVER),
    )

    mt = _section(tree, "metrics", _METRIC_FIELDS, lines)
    metrics = MetricSpec(**mt)

    ab = _section(tree, "ablate", _ABLATE_FIELDS, lines)
    if "param" in ab and ab["param"] not in ABLATE_PARAMS:
        raise ConfigError(
            f"{lines.describe('ablate.param')}: expected one of {ABLATE_PARAMS}"
        )
    ablate = AblateSettings(**ab)

    seeds = tree.get("seeds", [0])
    seeds = _convert(seeds, "int_list", lines.describe("seeds"))

    out_dir = tree.get("out_dir", "runs/out")
    out_dir = _convert(out_dir, "str", lines.describe("out_dir"))
    if os.environ.get(ENV_OUT):
        out_dir = os.environ[ENV_OUT]

    return ExperimentConfig(
        dataset=dataset,
        base=base,
        refiner=refiner,
        solvers=solvers,
        metrics=metrics,
        ablate=ablate,
        seeds=seeds,
        out_dir=out_dir,
    )


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value pairs (CLI flags mirror the tree)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        value = yaml.safe_load(raw)
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} crosses a non-mapping node")
        node[parts[-1]] = value
    return tree


def load_config(path: str, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if tree is None:
        tree = {}
    lines = _LineMap(text)
    if overrides:
        tree = apply_overrides(tree, overrides)
    return config_from_tree(tree, lines)


def seed_for(root: int, role: str) -> int:
    """Stable per-role child seed for a multi-seed run."""
    roles = {"base": 1, "refiner": 2, "sample": 3, "eval": 4, "degraded": 5}
    if role not in roles:
        raise ConfigError(f"unknown seed role {role!r}")
    seq = np.random.SeedSequence([root, roles[role]])
    return int(seq.generate_state(1)[0])
