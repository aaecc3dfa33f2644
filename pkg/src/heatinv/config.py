"""Run configuration: a single YAML file plus ``--set key=value`` overrides.

Schema (all keys optional unless noted)::

    command: forward | invert | roundtrip | closedform | validate
    problem:
      u1, u2, h: <function>          # default: zero
      f: [<term>, ...]               # default: no source
      a_true: <function>             # required by forward / roundtrip
      a_floor: 1.0e-6
    grid:
      t_max: 1.0                     # required
      n: 200                         # required
    solver:
      modes: 16
      tol: 1.0e-10
      max_iter: 200
      method: picard-global | volterra-marching
      inversion_tol: 1.0e-14
      clamp_policy: clamp-to-zero | monotone-projection
      relaxation: 0.5
      smoothing_window: null
    data:
      g_csv: path/to/g.csv           # columns t,g; relative to the config file
    output:
      x_count: 64                    # spatial intervals for field snapshots
      snapshots: [1.0]               # times at which fields are written
      oracle: false                  # forward: also run the finite-difference solver
    roundtrip:
      noise: 0.0                     # uniform noise amplitude added to g
      seed: 0
    closedform:
      scenario: unit-mode-source     # required by closedform
      t_min: 0.01

A ``<function>`` is ``{kind: ..., params: [...]}`` (see
:class:`heatinv.model.FunctionSpec`); a table may instead give
``csv: path`` with two columns.  A source ``<term>`` is
``{space: <function>, time: <function>}``; ``time`` defaults to 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .exceptions import ConfigError, CoefficientError, InvalidGrid
from .inverse import SolverOptions
from .model import FunctionSpec, ProblemSpec, SourceTerm, TimeGrid

COMMANDS = ("forward", "invert", "roundtrip", "closedform", "validate")
CLOSED_FORM_SCENARIO = "unit-mode-source"

_MISSING = object()


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    grid: TimeGrid
    solver: SolverOptions
    command: Optional[str] = None
    g_csv: Optional[Path] = None
    x_count: int = 64
    snapshots: tuple = ()
    oracle: bool = False
    noise: float = 0.0
    seed: int = 0
    closedform_scenario: Optional[str] = None
    t_min: float = 0.01
    source: Optional[Path] = None

    def for_command(self, command: str) -> "RunConfig":
        """Check the keys that ``command`` needs and return a copy bound to it."""
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}", key="command")
        if command in ("forward", "roundtrip") and self.problem.a_true is None:
            raise ConfigError(f"{command} requires problem.a_true", key="problem.a_true")
        if command == "invert" and self.problem.a_true is None and self.g_csv is None:
            raise ConfigError(
                "invert requires either problem.a_true or data.g_csv", key="data.g_csv"
            )
        if command == "closedform":
            if self.closedform_scenario != CLOSED_FORM_SCENARIO:
                raise ConfigError(
                    f"closedform requires closedform.scenario: {CLOSED_FORM_SCENARIO}",
                    key="closedform.scenario",
                )
            if self.problem.a_true is None and self.g_csv is None:
                raise ConfigError(
                    "closedform requires either problem.a_true or data.g_csv", key="data.g_csv"
                )
        return replace(self, command=command)


class _Doc:
    """Parsed YAML mapping plus the source line of every key path."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def line(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None

    def error(self, path, message):
        return ConfigError(message, key=path, line=self.line(path))

    def get(self, path, default=None):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def require(self, path):
        value = self.get(path, _MISSING)
        if value is _MISSING:
            raise self.error(path, f"missing required key {path}")
        return value

    def number(self, path, default=None, *, integer=False, required=False):
        value = self.require(path) if required else self.get(path, default)
        if value is None:
            return None
        if isinstance(value, bool):
            raise self.error(path, f"{path} must be a number")
        try:
            num = float(value)
        except (TypeError, ValueError):
            raise self.error(path, f"{path} must be a number, got {value!r}") from None
        if not math.isfinite(num):
            raise self.error(path, f"{path} must be finite")
        if integer:
            if num != int(num):
                raise self.error(path, f"{path} must be an integer")
            return int(num)
        return num


def _line_map(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _line_map(value_node, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = item.start_mark.line + 1
            _line_map(item, path, out)
    return out


def _load_yaml(text):
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            data = loader.construct_document(node) if node is not None else {}
        finally:
            loader.dispose()
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"malformed YAML: {exc.problem}", line=line) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level", line=1)
    return _Doc(data, _line_map(node) if node is not None else {})


def _set_path(data, path, value):
    parts = path.split(".")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def apply_overrides(doc: _Doc, overrides):
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} must look like key=value", key=key or None)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"cannot parse override value {raw!r}", key=key) from None
        _set_path(doc.data, key, value)
        doc.lines.pop(key, None)
    return doc


def _read_table_csv(path: Path, doc, key):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise doc.error(key, f"cannot read {path}: {exc.strerror}") from None
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    try:
        arr = np.array([[float(v) for v in r[:2]] for r in rows])
    except ValueError:
        raise doc.error(key, f"{path} must hold two numeric columns") from None
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise doc.error(key, f"{path} must hold at least two rows of two columns")
    return arr[:, 0], arr[:, 1]


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _function(doc, path, base_dir, default=None):
    raw = doc.get(path, None)
    if raw is None:
        return default
    if not isinstance(raw, dict):
        raise doc.error(path, f"{path} must be a mapping with 'kind' and 'params'")
    kind = raw.get("kind")
    if kind is None:
        raise doc.error(path, f"missing required key {path}.kind")
    if kind == "table" and "csv" in raw:
        s, y = _read_table_csv(base_dir / str(raw["csv"]), doc, f"{path}.csv")
        try:
            return FunctionSpec.table(s, y)
        except ValueError as exc:
            raise doc.error(f"{path}.csv", f"{path}: {exc}") from None
    params = raw.get("params", [])
    if not isinstance(params, list):
        params = [params]
    try:
        params = [float(p) for p in params]
    except (TypeError, ValueError):
        raise doc.error(f"{path}.params", f"{path}.params must be a list of numbers") from None
    try:
        return FunctionSpec(str(kind), tuple(params))
    except ValueError as exc:
        sub = f"{path}.kind" if "kind" in str(exc) else f"{path}.params"
        raise doc.error(sub, f"{path}: {exc}") from None


def _source(doc, base_dir):
    raw = doc.get("problem.f", None)
    if raw is None:
        return ()
    if isinstance(raw, dict):
        raw = [raw]
        doc.lines.setdefault("problem.f[0]", doc.line("problem.f"))
        doc.data["problem"]["f"] = raw
    if not isinstance(raw, list):
        raise doc.error("problem.f", "problem.f must be a list of {space, time} terms")
    terms = []
    for i, item in enumerate(raw):
        path = f"problem.f[{i}]"
        if not isinstance(item, dict) or "space" not in item:
            raise doc.error(path, f"{path} needs a 'space' function")
        space = _function(_Sub(doc, path, item), "space", base_dir)
        time = _function(_Sub(doc, path, item), "time", base_dir, FunctionSpec.constant(1.0))
        terms.append(SourceTerm(space, time))
    return tuple(terms)


class _Sub(_Doc):
    """View of a nested mapping that reports errors with the full key path."""

    def __init__(self, parent, prefix, data):
        self.parent = parent
        self.prefix = prefix
        self.data = data

    def line(self, path):
        return self.parent.line(f"{self.prefix}.{path}")

    def error(self, path, message):
        full = f"{self.prefix}.{path}"
        return ConfigError(message.replace(path, full, 1), key=full, line=self.line(path))


def build_config(doc: _Doc, base_dir: Path, source=None) -> RunConfig:
    u1 = _function(doc, "problem.u1", base_dir, FunctionSpec.zero())
    u2 = _function(doc, "problem.u2", base_dir, FunctionSpec.zero())
    h = _function(doc, "problem.h", base_dir, FunctionSpec.zero())
    a_true = _function(doc, "problem.a_true", base_dir)
    f = _source(doc, base_dir)
    a_floor = doc.number("problem.a_floor", 1e-6)
    if a_floor <= 0:
        raise doc.error("problem.a_floor", "problem.a_floor must be > 0")
    try:
        problem = ProblemSpec(u1=u1, u2=u2, h=h, f=f, a_true=a_true, a_floor=a_floor)
    except (ValueError, CoefficientError) as exc:
        raise doc.error("problem", f"problem: {exc}") from None

    t_max = doc.number("grid.t_max", required=True)
    n = doc.number("grid.n", required=True, integer=True)
    try:
        grid = TimeGrid(t_max, n)
    except InvalidGrid as exc:
        raise doc.error("grid", f"grid: {exc}") from None

    opts = {}
    for key, integer in (
        ("modes", True),
        ("tol", False),
        ("max_iter", True),
        ("inversion_tol", False),
        ("relaxation", False),
        ("smoothing_window", True),
    ):
        value = doc.number(f"solver.{key}", integer=integer)
        if value is not None:
            opts[key] = value
    for key in ("method", "clamp_policy"):
        value = doc.get(f"solver.{key}")
        if value is not None:
            opts[key] = str(value)
    try:
        solver = SolverOptions(**opts)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split(" ", 1)[0] if msg.startswith("solver.") else "solver"
        raise doc.error(key, msg) from None
    if problem.a_true is not None:
        try:
            problem.check_coefficient(grid)
        except CoefficientError as exc:
            raise doc.error("problem.a_true", f"problem.a_true: {exc}") from None

    g_csv = doc.get("data.g_csv")
    x_count = doc.number("output.x_count", 64, integer=True)
    if x_count < 8:
        raise doc.error("output.x_count", "output.x_count must be >= 8")
    snaps = doc.get("output.snapshots", [grid.t_max])
    if not isinstance(snaps, list):
        snaps = [snaps]
    try:
        snapshots = tuple(float(s) for s in snaps)
    except (TypeError, ValueError):
        raise doc.error("output.snapshots", "output.snapshots must be a list of times") from None
    if any(s < 0 or s > grid.t_max + 1e-12 for s in snapshots):
        raise doc.error("output.snapshots", "output.snapshots must lie in [0, grid.t_max]")
    noise = doc.number("roundtrip.noise", 0.0)
    if noise < 0:
        raise doc.error("roundtrip.noise", "roundtrip.noise must be >= 0")
    t_min = doc.number("closedform.t_min", 0.01)
    if t_min <= 0:
        raise doc.error("closedform.t_min", "closedform.t_min must be > 0")
    command = doc.get("command")
    if command is not None and command not in COMMANDS:
        raise doc.error("command", f"command must be one of {', '.join(COMMANDS)}")
    scenario = doc.get("closedform.scenario")
    return RunConfig(
        problem=problem,
        grid=grid,
        solver=solver,
        command=command,
        g_csv=(base_dir / str(g_csv)) if g_csv else None,
        x_count=x_count,
        snapshots=snapshots,
        oracle=bool(doc.get("output.oracle", False)),
        noise=noise,
        seed=doc.number("roundtrip.seed", 0, integer=True),
        closedform_scenario=None if scenario is None else str(scenario),
        t_min=t_min,
        source=source,
    )


def parse_config(path, overrides=()) -> RunConfig:
    """Read and validate a config file; raises :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    doc = apply_overrides(_load_yaml(text), overrides)
    return build_config(doc, path.parent, source=path)


def parse_config_text(text, base_dir=".", overrides=()) -> RunConfig:
    doc = apply_overrides(_load_yaml(text), overrides)
    return build_config(doc, Path(base_dir))


def load_flux_csv(path: Path, grid: TimeGrid):
    """Read a ``t,g`` table and interpolate it linearly onto ``grid``."""
    from .model import FluxData

    doc = _Doc({}, {})
    t, g = _read_table_csv(path, doc, "data.g_csv")
    try:
        return FluxData.from_samples(t, g, grid)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}", key="data.g_csv") from None
