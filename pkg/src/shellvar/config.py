"""Run configuration: JSON parsing, validation and defaults.

Every error carries the dotted path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .admissibility import BoundaryConditions, ShellConfig, gamma0_mask
from .energy import (
    PRIMITIVES,
    EnergySpec,
    GammaSpec,
    Helfrich,
    LoadSpec,
    PolyFamily,
    PolyTerm,
)
from .errors import ConfigError, ShellvarError
from .geometry import SurfaceConfiguration, build_grid
from .minimize import SolverConfig
from .surfaces import PRESETS, make_surface

TOP_KEYS = {"schema_version", "grid", "reference_surface", "surface", "epsilon", "energy",
            "loads", "bc", "solver", "verify", "seed", "output"}
DEFAULT_VERIFY = {"polyconvexity": 10_000, "coercivity": 10_000, "blowup": 25}
DEFAULT_OUTPUT = {"directory": "shellvar_out", "formats": ["json", "csv", "obj"]}
FORMATS = {"json", "csv", "obj"}


def _obj(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"expected an object, got {type(value).__name__}", path)
    return value


def _keys(d, allowed, path):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {extra}; allowed: {sorted(allowed)}", path)


def _num(value, path, *, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if not np.isfinite(value):
        raise ConfigError("must be finite", path)
    return int(value) if integer else float(value)


def _wrap(fn, path):
    try:
        return fn()
    except ConfigError:
        raise
    except (ShellvarError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from exc


def _vec3(value, path):
    if not (isinstance(value, list) and len(value) == 3):
        raise ConfigError("expected a list of 3 numbers", path)
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(value)]


@dataclass
class RunConfig:
    grid: object
    reference_surface: object
    surface: object
    epsilon: float
    energy: EnergySpec
    loads: dict
    bc: dict | None
    solver: SolverConfig
    verify: dict
    seed: int
    output: dict
    base_dir: Path = field(default=Path("."))
    raw: dict = field(default_factory=dict, repr=False)

    # built objects ----------------------------------------------------

    def reference_config(self):
        return self.reference_surface.discretize(self.grid)

    def shell(self):
        return _wrap(lambda: ShellConfig.build(self.reference_config(), self.epsilon),
                     "reference_surface")

    def configuration(self):
        """The surface acted on by curvature/evaluate and the minimizer start."""
        return self.surface.discretize(self.grid)

    def load_spec(self):
        L = self.loads
        if "file" in L:
            return _load_file(self.base_dir / L["file"], self.grid)
        return LoadSpec.constant(self.grid, L["f"], L["m"])

    def boundary_conditions(self, reference=None):
        if self.bc is None or self.bc.get("gamma0") is None:
            return None
        reference = reference or self.reference_config()
        return _wrap(lambda: BoundaryConditions.clamp(
            reference, self.bc["gamma0"], self.bc["normal_penalty_weight"]), "bc.gamma0")


def _load_file(path, grid):
    from .io import read_csv

    try:
        cols = read_csv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read load file: {exc}", "loads.file") from exc
    need = ["node_i", "node_j", "f1", "f2", "f3", "m1", "m2", "m3"]
    missing = [k for k in need if k not in cols]
    if missing:
        raise ConfigError(f"load file lacks columns {missing}", "loads.file")
    if len(cols["node_i"]) != grid.nx * grid.ny:
        raise ConfigError(
            f"load file has {len(cols['node_i'])} rows, grid has {grid.nx * grid.ny} nodes",
            "loads.file")
    i = cols["node_i"].astype(int)
    j = cols["node_j"].astype(int)
    if i.min() < 0 or j.min() < 0 or i.max() >= grid.nx or j.max() >= grid.ny:
        raise ConfigError("load file node index outside the grid", "loads.file")
    f = np.zeros(grid.shape + (3,))
    m = np.zeros(grid.shape + (3,))
    f[i, j] = np.stack([cols["f1"], cols["f2"], cols["f3"]], -1)
    m[i, j] = np.stack([cols["m1"], cols["m2"], cols["m3"]], -1)
    return _wrap(lambda: LoadSpec(f, m), "loads.file")


def _surface(value, path):
    d = _obj(value, path)
    _keys(d, {"preset", "params"}, path)
    if "preset" not in d:
        raise ConfigError("missing 'preset'", path)
    name = d["preset"]
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", f"{path}.preset")
    params = _obj(d.get("params", {}), f"{path}.params")
    params = {("colatitude" if k == "colatitude_range" else k): v for k, v in params.items()}
    return _wrap(lambda: make_surface(name, **params), f"{path}.params")


def _grid(value, surface):
    d = _obj(value, "grid")
    _keys(d, {"rect", "nx", "ny", "periodic"}, "grid")
    for k in ("nx", "ny"):
        if k not in d:
            raise ConfigError("missing", f"grid.{k}")
    nx, ny = _num(d["nx"], "grid.nx", integer=True), _num(d["ny"], "grid.ny", integer=True)
    rect = d.get("rect")
    if rect is None:
        rect = surface.default_rect()
    elif not (isinstance(rect, list) and len(rect) == 2
              and all(isinstance(r, list) and len(r) == 2 for r in rect)):
        raise ConfigError("expected [[x1_min, x1_max], [x2_min, x2_max]]", "grid.rect")
    else:
        rect = [[_num(v, f"grid.rect[{i}][{k}]") for k, v in enumerate(r)]
                for i, r in enumerate(rect)]
    periodic = d.get("periodic", list(surface.default_periodic()))
    if not (isinstance(periodic, list) and len(periodic) == 2
            and all(isinstance(p, bool) for p in periodic)):
        raise ConfigError("expected [bool, bool]", "grid.periodic")
    return _wrap(lambda: build_grid(rect, nx, ny, periodic), "grid")


def _gamma_spec(value, path):
    if not isinstance(value, list):
        raise ConfigError("expected a list of primitives", path)
    prims = []
    for k, item in enumerate(value):
        p = f"{path}[{k}]"
        item = dict(_obj(item, p))
        kind = item.pop("type", None)
        if kind not in PRIMITIVES:
            raise ConfigError(f"primitive type must be one of {sorted(PRIMITIVES)}", f"{p}.type")
        cls = PRIMITIVES[kind]
        _keys(item, set(cls.__dataclass_fields__), p)
        prims.append(_wrap(lambda: cls(**item), p))
    return GammaSpec(tuple(prims))


def _energy(value, epsilon):
    d = _obj(value, "energy")
    kind = d.get("type", "helfrich")
    if kind == "helfrich":
        _keys(d, {"type", "k_c", "c0", "k_bar", "lambda"}, "energy")
        kw = {k: _num(d[k], f"energy.{k}") for k in ("k_c", "c0", "k_bar") if k in d}
        if "lambda" in d:
            kw["lam"] = _num(d["lambda"], "energy.lambda")
        variant = _wrap(lambda: Helfrich(**kw), "energy")
    elif kind == "poly":
        _keys(d, {"type", "terms", "gamma_spec"}, "energy")
        terms = d.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigError("expected a non-empty list of terms", "energy.terms")
        built = []
        for i, t in enumerate(terms):
            p = f"energy.terms[{i}]"
            t = _obj(t, p)
            _keys(t, {"a", "b", "gamma", "u", "v", "w"}, p)
            for k in ("a", "b"):
                if k not in t:
                    raise ConfigError("missing", f"{p}.{k}")
            kw = {k: _num(v, f"{p}.{k}") for k, v in t.items()}
            gpath = f"{p}.gamma" if "gamma" in kw and kw["gamma"] < 2 else p
            built.append(_wrap(lambda: PolyTerm(**kw), gpath))
        gamma = _gamma_spec(d.get("gamma_spec", []), "energy.gamma_spec")
        variant = _wrap(lambda: PolyFamily(tuple(built), gamma), "energy")
    else:
        raise ConfigError("type must be 'helfrich' or 'poly'", "energy.type")
    return _wrap(lambda: EnergySpec(variant, epsilon), "energy.terms")


def _loads(value, grid):
    if value is None:
        return {"f": [0.0, 0.0, 0.0], "m": [0.0, 0.0, 0.0]}
    d = _obj(value, "loads")
    _keys(d, {"f", "m", "file"}, "loads")
    if "file" in d:
        if set(d) != {"file"}:
            raise ConfigError("'file' cannot be combined with 'f'/'m'", "loads")
        if not isinstance(d["file"], str):
            raise ConfigError("expected a path string", "loads.file")
        return {"file": d["file"]}
    return {"f": _vec3(d.get("f", [0, 0, 0]), "loads.f"),
            "m": _vec3(d.get("m", [0, 0, 0]), "loads.m")}


def _bc(value, grid):
    if value is None:
        return None
    d = _obj(value, "bc")
    _keys(d, {"gamma0", "normal_penalty_weight"}, "bc")
    gamma0 = d.get("gamma0", "all")
    w = _num(d.get("normal_penalty_weight", 1e6), "bc.normal_penalty_weight")
    if w < 0:
        raise ConfigError("must be >= 0", "bc.normal_penalty_weight")
    if gamma0 is not None and gamma0 != "all":
        if not isinstance(gamma0, list):
            raise ConfigError("expected 'all', a list of edge names or a list of [i, j]", "bc.gamma0")
        _wrap(lambda: gamma0_mask(grid, gamma0), "bc.gamma0")
    elif gamma0 == "all" and not grid.boundary_mask.any():
        raise ConfigError("grid has no boundary nodes (fully periodic)", "bc.gamma0")
    return {"gamma0": gamma0, "normal_penalty_weight": w}


def _solver(value):
    d = dict(_obj(value or {}, "solver"))
    allowed = set(SolverConfig.__dataclass_fields__)
    _keys(d, allowed, "solver")
    kw = {}
    for k, v in d.items():
        if k == "preconditioner":
            kw[k] = v
        elif k in ("sobolev_tangential", "sobolev_normal"):
            if not (isinstance(v, list) and len(v) == 3):
                raise ConfigError("expected 3 numbers", f"solver.{k}")
            kw[k] = tuple(_num(x, f"solver.{k}[{i}]") for i, x in enumerate(v))
        else:
            kw[k] = _num(v, f"solver.{k}", integer=k in ("max_outer", "max_inner"))
    return _wrap(lambda: SolverConfig(**kw), "solver")


def _verify(value):
    d = dict(_obj(value if value is not None else {}, "verify"))
    _keys(d, set(DEFAULT_VERIFY), "verify")
    out = {}
    for k, v in d.items():
        if v is None:
            continue
        n = _num(v, f"verify.{k}", integer=True)
        if n < (4 if k == "blowup" else 1):
            raise ConfigError("too small", f"verify.{k}")
        out[k] = n
    return out or dict(DEFAULT_VERIFY)


def _output(value):
    d = dict(_obj(value if value is not None else {}, "output"))
    _keys(d, set(DEFAULT_OUTPUT), "output")
    out = {**DEFAULT_OUTPUT, **d}
    if not isinstance(out["directory"], str):
        raise ConfigError("expected a string", "output.directory")
    fm = out["formats"]
    if not (isinstance(fm, list) and set(fm) <= FORMATS):
        raise ConfigError(f"expected a subset of {sorted(FORMATS)}", "output.formats")
    return out


def parse_config(text, base_dir=None):
    """Validate a JSON config document and fill in defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          "$") from exc
    d = _obj(raw, "$")
    _keys(d, TOP_KEYS, "$")
    for k in ("grid", "reference_surface", "epsilon"):
        if k not in d:
            raise ConfigError("missing required key", k)
    ref = _surface(d["reference_surface"], "reference_surface")
    surf = _surface(d["surface"], "surface") if d.get("surface") is not None else ref
    grid = _grid(d["grid"], ref)
    eps = _num(d["epsilon"], "epsilon")
    if eps <= 0:
        raise ConfigError("must be > 0", "epsilon")
    energy = _energy(d.get("energy", {"type": "helfrich"}), eps)
    seed = _num(d.get("seed", 0), "seed", integer=True)
    cfg = RunConfig(
        grid=grid, reference_surface=ref, surface=surf, epsilon=eps, energy=energy,
        loads=_loads(d.get("loads"), grid), bc=_bc(d.get("bc"), grid),
        solver=_solver(d.get("solver")), verify=_verify(d.get("verify")), seed=seed,
        output=_output(d.get("output")), base_dir=Path(base_dir or "."), raw=d,
    )
    if "file" in cfg.loads:
        cfg.load_spec()
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    return parse_config(text, base_dir=path.parent)


__all__ = ["RunConfig", "parse_config", "load_config", "SurfaceConfiguration"]
