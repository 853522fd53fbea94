"""Scenario configuration, audit pipelines, sweeps and CSV/manifest reports."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import platform
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import algebra, decay, dynamics, interactions, lattice, models, quasilocal, spectralflow, weightfn
from .audit import AuditRecord
from .errors import ConfigurationError, QlocError

__all__ = ["PIPELINES", "SCHEMA", "ScenarioConfig", "RunReport", "Table", "SweepReport",
           "parse_config", "load_config", "default_config", "run", "sweep", "catalog",
           "rng_for", "instance_seed", "stable_hash"]

VERSION = "0.1.0"

# schema --------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    kind: str
    default: object
    doc: str


def _f(kind, default, doc):
    return Field(kind, default, doc)


SCHEMA: dict[str, dict[str, Field]] = {
    "scenario": {
        "name": _f("str", "scenario", "label written to the manifest"),
        "pipeline": _f("str", "weights", "audit pipeline to run"),
        "seed": _f("int", 20240601, "base seed for every random probe"),
        "out": _f("str", "qloc-out", "output directory"),
    },
    "lattice": {
        "nu": _f("int", 1, "box dimension"),
        "lengths": _f("ints", [6], "box side lengths"),
        "metric": _f("str", "l1", "box metric; only l1"),
    },
    "model": {
        "preset": _f("str", "tfi_chain", "catalog preset"),
        "J": _f("schedule", "1", "coupling schedule: number, affine(a,b) or sine(a,b[,omega])"),
        "h": _f("schedule", "1", "field schedule"),
        "Jx": _f("schedule", "1", "xy preset only"),
        "Jy": _f("schedule", "1", "xy preset only"),
        "range": _f("float", 1.0, "random_local only: bond range"),
        "decay": _f("float", 1.0, "random_local only: bond-norm decay rate"),
        "seed": _f("int", 0, "random_local only: term seed"),
    },
    "decay": {
        "power": _f("pos_float", 2.0, "base polynomial decay exponent p"),
        "weight": _f("str", "power", "weight kind: zero, power or log"),
        "rate": _f("nonneg_float", 1.0, "weight scale a"),
        "theta": _f("pos_float", 1.0, "power weight exponent"),
    },
    "grid": {
        "t_start": _f("float", 0.0, "first time node"),
        "t_stop": _f("float", 1.0, "last time node"),
        "t_nodes": _f("count", 21, "number of time nodes"),
        "s_start": _f("float", 0.0, "first curve parameter"),
        "s_stop": _f("float", 1.0, "last curve parameter"),
        "s_nodes": _f("count", 11, "number of curve-parameter nodes"),
    },
    "tolerances": {
        "unitarity": _f("tol", 1e-8, "propagator and flow unitarity"),
        "cocycle": _f("tol", 1e-7, "propagator cocycle"),
        "quadrature": _f("tol", 1e-6, "weight-function quadrature and kernel identities"),
        "audit": _f("tol", 1e-6, "default slack added to audited inequalities"),
    },
    "cutoffs": {
        "gamma_T": _f("nonneg_float", 0.0, "time cutoff in units of 1/gamma; 0 selects the exact kernels"),
        "step": _f("pos_float", 0.1, "quadrature step for cut-off kernels"),
        "ode_step": _f("pos_float", 0.05, "spectral-flow rk4 step"),
        "refine": _f("bool", True, "rerun with doubled cutoff and halved steps"),
    },
    "audit": {
        "observable_a": _f("str", "x@0", "pauli@site-index for A"),
        "observable_b": _f("str", "x@-1", "pauli@site-index for B (negative indices count from the end)"),
        "methods": _f("strs", ["rk4", "dyson"], "propagator methods compared"),
        "dyson_order": _f("count", 12, "Dyson series order"),
        "constant_control": _f("bool", True, "also compare against the eigenbasis exponential"),
        "agreement": _f("tol", 1e-6, "cross-method agreement"),
        "cone_time": _f("nonneg_float", 0.0, "time of the early light-cone check; 0 disables"),
        "cone_max": _f("tol", 1e-3, "commutator ceiling at cone_time"),
        "cone_floor": _f("tol", 1e-2, "commutator floor at the last node"),
        "time": _f("float", 0.5, "evaluation time"),
        "subvolume": _f("count", 8, "sites kept for the volume comparison"),
        "perturbation": _f("float", 0.01, "relative change of the perturbed schedule"),
        "perturb": _f("str", "J", "schedule changed in perturbation audits"),
        "sizes": _f("ints", [3, 5, 6], "chain lengths of the localizer suite"),
        "states": _f("strs", ["tracial", "pure", "random"], "product states of the localizer suite"),
        "trials": _f("count", 5, "random operators per identity"),
        "epsilon": _f("pos_float", 0.1, "engineered perturbation size"),
        "identity_tol": _f("tol", 1e-12, "exact-identity tolerance"),
        "residual_tol": _f("tol", 1e-10, "reconstruction tolerance"),
        "pairs": _f("str", "0-7,0-4,2-5,1-2", "site-index pairs for difference-of-dynamics audits"),
        "gammas": _f("floats", [1.0, 2.0], "weight-function scales"),
        "a1_reference": _f("float", 0.1608, "reference value of the series constant"),
        "a1_tol": _f("tol", 1e-3, "allowed distance from the reference"),
        "band_tol": _f("tol", 1e-4, "Fourier transform ceiling outside the band"),
        "gamma": _f("nonneg_float", 0.0, "gap scale; 0 uses gamma_fraction of the audited gap"),
        "gamma_fraction": _f("pos_float", 0.5, "gamma as a fraction of the minimum gap"),
        "transport_tol": _f("tol", 0.05, "projector transport ceiling"),
        "control_tol": _f("tol", 1e-9, "constant-curve transport ceiling"),
        "refine_factor": _f("pos_float", 2.0, "required residual reduction under refinement"),
        "refine_floor": _f("tol", 1e-13, "residuals below this count as converged"),
        "s_points": _f("floats", [0.0, 0.5, 1.0], "curve parameters of the interaction audit"),
        "min_diameter": _f("nonneg_float", 2.0, "monotonicity starts at this diameter"),
        "interior_only": _f("bool", True, "skip supports touching the chain ends"),
        "gap_floor": _f("tol", 1e-9, "smallest acceptable gap"),
        "volumes": _f("ints", [], "chain lengths of nested volumes; empty uses the lattice"),
        "box": _f("ints", [5, 5], "box side lengths of the appendix audits"),
        "R": _f("nonneg_float", 1.0, "inflation radius"),
        "step_a": _f("nonneg_float", 1.0, "step transform: radius"),
        "dilation": _f("pos_float", 0.5, "dilation transform: epsilon"),
        "shift": _f("nonneg_float", 1.0, "shift transform: offset"),
        "cf_reference": _f("float", 41 / 16, "reference convolution constant on the 3-site chain"),
        "rho": _f("str", "tracial", "product state for shell decompositions"),
    },
}

PIPELINE_DEFAULTS: dict[str, dict[str, dict[str, object]]] = {
    "propagator": {"lattice": {"lengths": [6]}, "model": {"h": "sine(1,0.5)"},
                   "grid": {"t_start": 0.0, "t_stop": 1.0, "t_nodes": 21}},
    "lr": {"lattice": {"lengths": [10]}, "model": {"J": "2", "h": "2"},
           "grid": {"t_start": 0.0, "t_stop": 2.0, "t_nodes": 41},
           "audit": {"cone_time": 0.1}},
    "difference": {"lattice": {"lengths": [10]}},
    "localization": {},
    "transform": {"lattice": {"lengths": [8]}, "grid": {"t_start": 0.0, "t_stop": 1.0},
                  "audit": {"perturb": "h"}},
    "weights": {"grid": {"t_start": -10.0, "t_stop": 10.0, "t_nodes": 81}},
    "liouvillean": {"lattice": {"lengths": [5]}, "model": {"h": "2"},
                    "cutoffs": {"gamma_T": 100.0, "step": 0.1}},
    "flow": {"lattice": {"lengths": [6]}, "model": {"h": "affine(2,2)"}},
    "gap": {"lattice": {"lengths": [6]}, "model": {"h": "affine(2,2)"}},
    "equivalence": {"lattice": {"lengths": [6]}, "model": {"h": "affine(2,2)"},
                    "grid": {"s_nodes": 5}},
    "hastings": {"lattice": {"lengths": [8]}, "model": {"h": "affine(4,4)"}},
    "appendix": {},
}

PIPELINES = tuple(PIPELINE_DEFAULTS)

COLUMNS_DOC = {
    "audits": "name, lhs, rhs, tol, slack, passed, detail (JSON); one row per checked inequality",
    "propagator": "method, t, unitarity_defect, distance_to_reference",
    "lr": "t, exact, bound, trivial, velocity_bound, passed",
    "difference": "kind, t, exact, bound, slack, passed",
    "localization": "n_sites, state, identity, residual, tol, passed",
    "transform": "x, y, exact, bound, slack, passed",
    "weights": "t, w_gamma, W_gamma",
    "liouvillean": "level, gamma_T, step, identity, residual",
    "flow": "s, residual, refined_residual, gap, gamma, gamma_T, step, ode_step",
    "gap": "n_sites, s, cluster, width, gap, ambiguous",
    "equivalence": "s, t, residual, gamma, ode_step",
    "hastings": "s, diameter, interior_max, overall_max, count",
    "appendix": "check, measured, bound, slack, passed",
}


# parsing -------------------------------------------------------------------------------------------

_SCHEDULE_RE = re.compile(r"^\s*(affine|sine)\s*\(([^)]*)\)\s*$")


def parse_schedule(text: str) -> interactions.Schedule:
    """``"2"``, ``"affine(a, b)"`` (a + b s) or ``"sine(a, b[, omega])"``."""
    m = _SCHEDULE_RE.match(str(text))
    if m is None:
        return interactions.Schedule.constant_value(float(text))
    args = [float(x) for x in m.group(2).split(",") if x.strip()]
    kind = m.group(1)
    if kind == "affine" and len(args) == 2:
        return interactions.Schedule.affine(*args)
    if kind == "sine" and len(args) in (2, 3):
        return interactions.Schedule.sine(*args)
    raise ValueError(f"bad {kind} arguments {args}")


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "count":
        v = int(raw)
        if v < 1:
            raise ValueError("must be at least 1")
        return v
    if kind == "float":
        return float(raw)
    if kind in ("pos_float", "tol"):
        v = float(raw)
        if not v > 0:
            raise ValueError("must be positive")
        return v
    if kind == "nonneg_float":
        v = float(raw)
        if not v >= 0:
            raise ValueError("must be non-negative")
        return v
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true or false")
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if kind == "ints":
        return [int(p) for p in parts]
    if kind == "floats":
        return [float(p) for p in parts]
    if kind == "strs":
        return parts
    if kind == "schedule":
        parse_schedule(raw)
        return raw
    raise ValueError(f"unknown field kind {kind}")


def _as_text(kind: str, value) -> str:
    """Raw text for an already-typed override so it passes the same validation as file input."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_as_text(kind, v) for v in value)
    if kind in ("int", "count"):
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if float(value) != int(value):
            raise ValueError("expected an integer")
        return str(int(value))
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def _line_numbers(text: str) -> dict:
    """``(section, key) -> line`` for diagnostics."""
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            lines[(section, None)] = no
        elif section and "=" in s and not s.startswith(("#", ";")):
            lines[(section, s.split("=", 1)[0].strip())] = no
    return lines


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: every schema field resolved, with its source for diagnostics."""

    values: dict
    source: str = "<defaults>"

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    @property
    def pipeline(self) -> str:
        return self.values["scenario"]["pipeline"]

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        """New config with ``{"section.key": raw string or value}`` applied and revalidated."""
        values = json.loads(self.canonical())
        for dotted, raw in overrides.items():
            section, key = _split_key(dotted, f"override {dotted}")
            fld = SCHEMA[section][key]
            try:
                values[section][key] = _convert(fld.kind, _as_text(fld.kind, raw))
            except ValueError as exc:
                raise ConfigurationError(f"override {dotted}={raw!r}: {exc}") from None
        return _finish(values, self.source, {})

    def to_text(self) -> str:
        out = io.StringIO()
        for section, fields in self.values.items():
            out.write(f"[{section}]\n")
            for key, v in fields.items():
                if isinstance(v, list):
                    v = ", ".join(str(x) for x in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                out.write(f"{key} = {v}\n")
            out.write("\n")
        return out.getvalue()


def _split_key(dotted: str, where: str):
    if "." not in dotted:
        raise ConfigurationError(f"{where}: expected section.key")
    section, key = dotted.split(".", 1)
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigurationError(f"{where}: unknown key {dotted!r}")
    return section, key


def _defaults(pipeline: str) -> dict:
    values = {s: {k: f.default for k, f in fs.items()} for s, fs in SCHEMA.items()}
    for section, upd in PIPELINE_DEFAULTS.get(pipeline, {}).items():
        values[section].update(upd)
    values["scenario"]["pipeline"] = pipeline
    return json.loads(json.dumps(values))


def _finish(values: dict, source: str, lines: dict) -> ScenarioConfig:
    def err(section, key, msg):
        no = lines.get((section, key))
        where = f"{source}:{no}" if no else source
        raise ConfigurationError(f"{where}: {section}.{key}: {msg}")

    if values["scenario"]["pipeline"] not in PIPELINES:
        err("scenario", "pipeline", f"unknown pipeline; choose from {list(PIPELINES)}")
    if values["model"]["preset"] not in models.CATALOG:
        err("model", "preset", f"unknown preset; known: {sorted(models.CATALOG)}")
    if values["decay"]["weight"] not in ("zero", "power", "log"):
        err("decay", "weight", "expected zero, power or log")
    if values["lattice"]["metric"] != "l1":
        err("lattice", "metric", "only l1 is supported")
    lengths = values["lattice"]["lengths"]
    if len(lengths) != values["lattice"]["nu"] or any(n < 1 for n in lengths):
        err("lattice", "lengths", "need nu positive side lengths")
    for axis in ("t", "s"):
        if values["grid"][f"{axis}_stop"] < values["grid"][f"{axis}_start"]:
            err("grid", f"{axis}_stop", "grid is empty")
    for pauli in ("observable_a", "observable_b"):
        try:
            _parse_observable(values["audit"][pauli])
        except ValueError as exc:
            err("audit", pauli, str(exc))
    return ScenarioConfig(values, source)


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse ``[section]`` / ``key = value`` text against :data:`SCHEMA`.

    Unspecified keys take the schema default, overlaid with the defaults of the
    selected pipeline.  Errors name the offending line.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    lines = _line_numbers(text)
    pipeline = parser.get("scenario", "pipeline", fallback=SCHEMA["scenario"]["pipeline"].default).strip()
    values = _defaults(pipeline if pipeline in PIPELINES else "weights")
    values["scenario"]["pipeline"] = pipeline
    for section in parser.sections():
        if section not in SCHEMA:
            no = lines.get((section, None))
            raise ConfigurationError(f"{source}:{no}: unknown section [{section}]")
        for key, raw in parser.items(section):
            no = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"{source}:{no}: unknown key {section}.{key}")
            try:
                values[section][key] = _convert(SCHEMA[section][key].kind, raw)
            except ValueError as exc:
                raise ConfigurationError(f"{source}:{no}: {section}.{key} = {raw!r}: {exc}") from None
    return _finish(values, source, lines)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def default_config(pipeline: str = "weights", **overrides) -> ScenarioConfig:
    """Defaults for ``pipeline``; keyword overrides use ``section__key`` names."""
    if pipeline not in PIPELINES:
        raise ConfigurationError(f"unknown pipeline {pipeline!r}; choose from {list(PIPELINES)}")
    cfg = ScenarioConfig(_defaults(pipeline))
    return cfg.with_overrides({k.replace("__", "."): v for k, v in overrides.items()})


# seeds ---------------------------------------------------------------------------------------------

def stable_hash(*parts) -> int:
    """64-bit hash of the string forms of ``parts``, stable across processes."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for one (seed, purpose) pair."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stable_hash(purpose),)))


def instance_seed(base_seed: int, axis: str, value) -> int:
    """Seed of a sweep instance, derived from the base seed and the axis value only."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(stable_hash(axis, repr(value)),))
    return int(ss.generate_state(1, np.uint64)[0])


# reports -------------------------------------------------------------------------------------------

@dataclass
class Table:
    name: str
    columns: list
    rows: list

    def csv_text(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(row.get(c)) for c in self.columns])
        return out.getvalue()


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (tuple, list, frozenset, set)):
        items = [_plain(x) for x in v]
        return sorted(items, key=repr) if isinstance(v, (set, frozenset)) else items
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _audit_table(records) -> Table:
    rows = [{"name": r.name, "lhs": r.lhs, "rhs": r.rhs, "tol": r.tol, "slack": r.slack,
             "passed": r.passed, "detail": json.dumps(_plain(r.detail), sort_keys=True)}
            for r in records]
    return Table("audits", ["name", "lhs", "rhs", "tol", "slack", "passed", "detail"], rows)


@dataclass
class RunReport:
    """Audit records, tables and provenance of one pipeline run."""

    pipeline: str
    config: ScenarioConfig
    records: list
    tables: list
    cutoffs: dict = field(default_factory=dict)
    wall_time: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.records)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.passed]

    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def files(self) -> dict:
        """``file name -> CSV text`` for the audit records and every table."""
        out = {"audits.csv": _audit_table(self.records).csv_text()}
        for t in self.tables:
            out[f"{t.name}.csv"] = t.csv_text()
        return out

    def manifest(self) -> dict:
        import scipy

        files = self.files()
        return {
            "scenario": self.config["scenario.name"],
            "pipeline": self.pipeline,
            "config_hash": self.config.hash(),
            "config": self.config.values,
            "versions": {"artifact": VERSION, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "cutoffs": _plain(self.cutoffs),
            "passed": self.passed,
            "error": self.error,
            "audits": len(self.records),
            "failures": [r.name for r in self.failures],
            "wall_time": self.wall_time,
            "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(files.items())},
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files().items():
            (out / name).write_text(text)
        (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return out


# shared builders -----------------------------------------------------------------------------------

_PAULI = {"x": algebra.SX, "y": algebra.SY, "z": algebra.SZ}


def _parse_observable(text: str):
    m = re.fullmatch(r"\s*([xyzXYZ])\s*@\s*(-?\d+)\s*", text)
    if m is None:
        raise ValueError("expected pauli@index such as x@0")
    return m.group(1).lower(), int(m.group(2))


def _observable(text: str, G: lattice.MetricSpace) -> algebra.LocalOperator:
    pauli, idx = _parse_observable(text)
    if not -len(G) <= idx < len(G):
        raise ConfigurationError(f"observable {text!r} lies outside the {len(G)}-site lattice")
    return algebra.product_operator({G.sites[idx]: _PAULI[pauli]})


def _lattice(cfg: ScenarioConfig, lengths=None) -> lattice.MetricSpace:
    lengths = cfg["lattice.lengths"] if lengths is None else lengths
    return lattice.build_box(len(lengths), lengths, cfg["lattice.metric"])


def _model_params(cfg: ScenarioConfig, freeze_at: float | None = None, scale: dict | None = None) -> dict:
    preset = cfg["model.preset"]
    params = {}
    for key in models.CATALOG[preset].params:
        raw = cfg[f"model.{key}"]
        if SCHEMA["model"][key].kind == "schedule":
            sched = parse_schedule(raw)
            if scale and key in scale:
                sched = sched.scaled(scale[key])
            params[key] = float(sched(freeze_at)) if freeze_at is not None else sched
        else:
            params[key] = raw
    return params


def _model(cfg, G, freeze_at=None, scale=None) -> interactions.Interaction:
    return models.build(cfg["model.preset"], G, **_model_params(cfg, freeze_at, scale))


def _decay(cfg: ScenarioConfig):
    """``(F_a, base, rate)``: the weighted decay function and its factors."""
    base = decay.DecayFunction.power(cfg["decay.power"])
    kind, rate = cfg["decay.weight"], cfg["decay.rate"]
    if kind == "zero" or rate == 0:
        return base, base, None
    g = decay.Weight.power(rate, cfg["decay.theta"]) if kind == "power" else decay.Weight.log(rate)
    exp_rate = rate if kind == "power" and cfg["decay.theta"] == 1.0 else None
    return decay.weighted_f(base, g), base, exp_rate


def _grid(cfg, axis: str) -> np.ndarray:
    return np.linspace(cfg[f"grid.{axis}_start"], cfg[f"grid.{axis}_stop"], cfg[f"grid.{axis}_nodes"])


def _cutoff(cfg, gamma: float, level: int = 0):
    gT = cfg["cutoffs.gamma_T"]
    if gT == 0:
        return None
    return spectralflow.Cutoff(gT * 2**level / gamma, cfg["cutoffs.step"] / 2**level)


def _cutoff_info(cfg, gamma: float) -> dict:
    if cfg["cutoffs.gamma_T"] == 0:
        return {"kernel": "exact_support", "gamma": gamma, "ode_step": cfg["cutoffs.ode_step"]}
    return {"kernel": "truncated", "gamma": gamma, "gamma_T": cfg["cutoffs.gamma_T"],
            "T": cfg["cutoffs.gamma_T"] / gamma, "step": cfg["cutoffs.step"],
            "ode_step": cfg["cutoffs.ode_step"]}


def _eigvalsh(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues through the cached eigensolver (disk layer under ``QLOC_CACHE_DIR``)."""
    return algebra.eigh(H)[0]


def _gap_profile(cfg, Phi, volumes, s_grid):
    return spectralflow.gap_audit(Phi, volumes, s_grid)


def _gamma(cfg, Phi, G, s_grid) -> tuple[float, spectralflow.GapProfile]:
    prof = _gap_profile(cfg, Phi, [G.sites], s_grid)
    gamma = cfg["audit.gamma"] or cfg["audit.gamma_fraction"] * prof.min_gap
    return gamma, prof


def _refinement_record(name, base, refined, factor, floor, detail) -> AuditRecord:
    """``factor * refined <= base``; both sides below ``floor`` count as converged."""
    tol = floor * factor if base <= floor else 0.0
    return AuditRecord(name, factor * refined, base, tol, {"base": base, "refined": refined, **detail})


def _pmap(fn: Callable, items: list, parallelism: int) -> list:
    """Ordered map, through joblib processes when ``parallelism > 1``."""
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=min(parallelism, len(items)))(delayed(fn)(x) for x in items)


# pipelines -----------------------------------------------------------------------------------------

def _pipe_propagator(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    times = _grid(cfg, "t")
    tu, tc, agree = cfg["tolerances.unitarity"], cfg["tolerances.cocycle"], cfg["audit.agreement"]
    records, rows, props = [], [], {}
    for m in cfg["audit.methods"]:
        P = dynamics.propagator(Phi, G.sites, times=times, method=m, dyson_order=cfg["audit.dyson_order"],
                                tol_unitary=tu, tol_cocycle=tc)
        props[m] = P
        records.append(AuditRecord("unitarity", P.residuals["unitarity"], tu, 0.0, {"method": m}))
        records.append(AuditRecord("cocycle", P.residuals["cocycle"], tc, 0.0, {"method": m}))
    ref = cfg["audit.methods"][0]
    for m, P in props.items():
        for k, t in enumerate(times):
            rows.append({"method": m, "t": float(t), "unitarity_defect": algebra.opnorm(
                P.U[k].conj().T @ P.U[k] - np.eye(len(P.U[k]))),
                "distance_to_reference": algebra.opnorm(P.U[k] - props[ref].U[k])})
        if m != ref:
            worst = max(algebra.opnorm(a - b) for a, b in zip(P.U, props[ref].U))
            records.append(AuditRecord("agreement", worst, agree, 0.0, {"method": m, "reference": ref}))
    if cfg["audit.constant_control"]:
        Phic = _model(cfg, G, freeze_at=float(times[0]))
        Pe = dynamics.propagator(Phic, G.sites, times=times, method="eig_const")
        for m in cfg["audit.methods"]:
            Pm = dynamics.propagator(Phic, G.sites, times=times, method=m,
                                     dyson_order=cfg["audit.dyson_order"], check=False)
            worst = max(algebra.opnorm(a - b) for a, b in zip(Pm.U, Pe.U))
            records.append(AuditRecord("constant_agreement", worst, agree, 0.0,
                                       {"method": m, "reference": "eig_const"}))
            for k, t in enumerate(times):
                rows.append({"method": f"constant_{m}", "t": float(t),
                             "unitarity_defect": algebra.opnorm(Pm.U[k].conj().T @ Pm.U[k] - np.eye(len(Pm.U[k]))),
                             "distance_to_reference": algebra.opnorm(Pm.U[k] - Pe.U[k])})
    return records, [Table("propagator", ["method", "t", "unitarity_defect", "distance_to_reference"], rows)], {}


def _pipe_lr(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    Fa, base, rate = _decay(cfg)
    A, B = _observable(cfg["audit.observable_a"], G), _observable(cfg["audit.observable_b"], G)
    times = _grid(cfg, "t")
    rep = dynamics.lr_audit(Phi, Fa, G, A, B, times, base=base, rate=rate, tol=cfg["tolerances.audit"])
    records = list(rep.rows)
    rows = [{"t": r.detail["t"], "exact": r.lhs, "bound": r.detail["bound"], "trivial": r.detail["trivial"],
             "velocity_bound": r.detail.get("velocity_bound"), "passed": r.passed} for r in rep.rows]
    if cfg["audit.cone_time"] > 0:
        k = int(np.argmin(np.abs(times - cfg["audit.cone_time"])))
        records.append(AuditRecord("light_cone_early", rep.rows[k].lhs, cfg["audit.cone_max"], 0.0,
                                   {"t": float(times[k])}))
        records.append(AuditRecord("light_cone_late", cfg["audit.cone_floor"], rep.rows[-1].lhs, 0.0,
                                   {"t": float(times[-1])}))
    return records, [Table("lr", ["t", "exact", "bound", "trivial", "velocity_bound", "passed"], rows)], {}


def _pipe_difference(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    key = cfg["audit.perturb"]
    Psi = _model(cfg, G, scale={key: 1.0 + cfg["audit.perturbation"]})
    Fa, _, _ = _decay(cfg)
    A = _observable(cfg["audit.observable_a"], G)
    sub = G.sites[:cfg["audit.subvolume"]]
    recs = dynamics.dynamics_difference_audit(Phi, Psi, Fa, G, G.sites, sub, A,
                                              cfg["grid.t_start"], cfg["audit.time"])
    records, rows = [], []
    for r in recs:
        r.detail.update({"perturb": key, "perturbation": cfg["audit.perturbation"], "subvolume": len(sub)})
        records.append(r)
        records.append(AuditRecord(f"{r.name}_slack", 1.0, r.slack, 0.0, {"t": r.detail["t"]}))
        rows.append({"kind": r.name, "t": r.detail["t"], "exact": r.lhs, "bound": r.rhs,
                     "slack": r.slack, "passed": r.passed})
    return records, [Table("difference", ["kind", "t", "exact", "bound", "slack", "passed"], rows)], {}


def _state(kind: str, sites, rng):
    if kind == "tracial":
        return algebra.ProductState.tracial(sites)
    if kind == "pure":
        return algebra.ProductState.pure(sites)
    if kind == "random":
        return algebra.ProductState.random(sites, rng)
    raise ConfigurationError(f"unknown product state {kind!r}")


def _localization_unit(args):
    cfg_values, n, kind = args
    cfg = ScenarioConfig(cfg_values)
    G = models.chain(n)
    rng = rng_for(cfg.seed, f"localization/{n}/{kind}")
    rho = _state(kind, G.sites, rng)
    out = []
    for r in algebra.localizer_audit(G, G.sites, rho, rng, trials=cfg["audit.trials"],
                                     tol=cfg["audit.identity_tol"]):
        r.detail.update({"n_sites": n, "state": kind})
        out.append(r)
    X = G.sites[: max(1, n // 3)]
    for r in algebra.engineered_epsilon_audit(G.sites, X, cfg["audit.epsilon"], rho, rng,
                                              trials=cfg["audit.trials"]):
        r.detail.update({"n_sites": n, "state": kind})
        out.append(r)
    return out


def _pipe_localization(cfg, par):
    units = [(cfg.values, n, kind) for n in cfg["audit.sizes"] for kind in cfg["audit.states"]]
    records = [r for chunk in _pmap(_localization_unit, units, par) for r in chunk]
    rows = [{"n_sites": r.detail["n_sites"], "state": r.detail["state"], "identity": r.name,
             "residual": r.lhs, "tol": r.rhs + r.tol, "passed": r.passed} for r in records]
    return records, [Table("localization", ["n_sites", "state", "identity", "residual", "tol", "passed"],
                           rows)], {}


def _pairs(text: str, G) -> list:
    out = []
    for part in text.split(","):
        a, b = part.split("-")
        out.append((G.sites[int(a)], G.sites[int(b)]))
    return out


def _pipe_transform(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    Fa, _, _ = _decay(cfg)
    s, t = cfg["grid.t_start"], cfg["grid.t_stop"]
    K = quasilocal.QuasiLocalMap.from_dynamics(Phi, Fa, G, G.sites, s, t)
    tol = cfg["audit.residual_tol"]
    records = []
    transforms = {}
    for kind in ("tracial", "pure"):
        rho = _state(kind, G.sites, None)
        T = quasilocal.transform_interaction(K, Phi, G.sites, rho, G, s, tol=math.inf)
        transforms[kind] = T
        records.append(AuditRecord("reconstruction", T.residual, tol, 0.0, {"rho": kind, "terms": len(T.terms)}))
    diff = algebra.opnorm(transforms["tracial"].total() - transforms["pure"].total())
    records.append(AuditRecord("rho_independence", diff, tol, 0.0, {}))
    nu = float(cfg["lattice.nu"])
    records += quasilocal.transform_decay_audit(transforms["tracial"], Phi, Fa, G, K.params, s, nu=nu)
    key = cfg["audit.perturb"]
    Psi = _model(cfg, G, scale={key: 1.0 + cfg["audit.perturbation"]})
    rows = []
    for x, y in _pairs(cfg["audit.pairs"], G):
        A = algebra.product_operator({x: algebra.SX})
        B = algebra.product_operator({y: algebra.SZ})
        r = quasilocal.diff_dynamics_audit(Phi, Psi, Fa, G, A, B, s, t, nu=nu)
        r.detail.update({"x": x, "y": y})
        records.append(r)
        rows.append({"x": x, "y": y, "exact": r.lhs, "bound": r.rhs, "slack": r.slack, "passed": r.passed})
    cut = {"params_C": K.params.C, "params_q": K.params.q}
    return records, [Table("transform", ["x", "y", "exact", "bound", "slack", "passed"], rows)], cut


def _pipe_weights(cfg, par):
    tables = weightfn.constants()
    qt = cfg["tolerances.quadrature"]
    records = []
    for g in cfg["audit.gammas"]:
        r = weightfn.normalization_record(tables, g)
        records.append(AuditRecord("normalization", r.lhs, qt, 0.0, {"gamma": g}))
    records.append(weightfn.series_sum_record(tables))
    a1 = tables.a1
    records.append(AuditRecord("a1_lower", 1 / 7, a1, 0.0, {}))
    records.append(AuditRecord("a1_upper", a1, 0.5, 0.0, {}))
    records.append(AuditRecord("a1_reference", abs(a1 - cfg["audit.a1_reference"]), cfg["audit.a1_tol"], 0.0,
                               {"a1": a1, "reference": cfg["audit.a1_reference"]}))
    W0 = float(tables.W(0.0))
    records.append(AuditRecord("W_at_zero", abs(W0 - 0.5), 0.0, 0.0, {"W0": W0}))
    for r in weightfn.fourier_support_audit(tables, tol=cfg["audit.band_tol"]):
        records.append(r)
    records += weightfn.decay_audit(tables)
    t = _grid(cfg, "t")
    g0 = cfg["audit.gammas"][0]
    rows = weightfn.weight_table(tables, g0, t)
    info = {"gamma": g0, "series_N": tables.series_N, "factors": tables.factors,
            "grid_step": tables.grid_step, "grid_T": tables.grid_T}
    return records, [Table("weights", ["t", "w_gamma", "W_gamma"], rows)], info


def _pipe_liouvillean(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G, freeze_at=cfg["grid.s_start"])
    H = interactions.hamiltonian(Phi, G.sites).matrix
    E = _eigvalsh(H)
    split = spectralflow.cluster_split(E)
    gamma = cfg["audit.gamma"] or cfg["audit.gamma_fraction"] * split.gap
    A = algebra.random_matrix(len(H), rng_for(cfg.seed, "liouvillean/A"))
    tables = weightfn.constants()
    tol = cfg["tolerances.quadrature"]
    levels = [0, 1] if cfg["cutoffs.refine"] else [0]
    results, rows = {}, []
    for lv in levels:
        cut = _cutoff(cfg, gamma, lv)
        recs = spectralflow.inverse_liouvillean_audit(A, H, gamma, cutoff=cut, tables=tables)
        results[lv] = {r.name: r.lhs for r in recs}
        for r in recs:
            rows.append({"level": lv, "gamma_T": None if cut is None else cut.T * gamma,
                         "step": None if cut is None else cut.step, "identity": r.name, "residual": r.lhs})
    records = [AuditRecord(name, v, tol, 0.0, {"level": 0, "gap": split.gap, "gamma": gamma})
               for name, v in results[0].items()]
    if 1 in results:
        for name, v in results[0].items():
            records.append(_refinement_record(f"{name}_refinement", v, results[1][name],
                                              cfg["audit.refine_factor"], cfg["audit.refine_floor"], {}))
    return records, [Table("liouvillean", ["level", "gamma_T", "step", "identity", "residual"], rows)], \
        _cutoff_info(cfg, gamma)


def _pipe_flow(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    s_grid = _grid(cfg, "s")
    gamma, prof = _gamma(cfg, Phi, G, s_grid)
    tables = weightfn.constants()
    cut, h = _cutoff(cfg, gamma), cfg["cutoffs.ode_step"]
    tu, ttol = cfg["tolerances.unitarity"], cfg["audit.transport_tol"]
    res = spectralflow.flow(Phi, G.sites, gamma, s_grid, h, cut, tables, tol_unitary=tu)
    records = [AuditRecord("gapped", cfg["audit.gap_floor"], prof.min_gap, 0.0, {"gamma": gamma})]
    records.append(AuditRecord("flow_unitarity", res.unitarity, tu, 0.0, {"ode_step": h}))
    refined = None
    if cfg["cutoffs.refine"]:
        refined = spectralflow.flow(Phi, G.sites, gamma, s_grid, h / 2, _cutoff(cfg, gamma, 1), tables,
                                    tol_unitary=tu)
        records.append(_refinement_record("transport_refinement", float(res.transport.max()),
                                          float(refined.transport.max()), cfg["audit.refine_factor"],
                                          cfg["audit.refine_floor"], {"ode_step": h}))
    gaps = {round(r["s"], 12): r["gap"] for r in prof.rows}
    rows = []
    for k, s in enumerate(s_grid):
        records.append(AuditRecord("transport", float(res.transport[k]), ttol, 0.0, {"s": float(s)}))
        rows.append({"s": float(s), "residual": float(res.transport[k]),
                     "refined_residual": None if refined is None else float(refined.transport[k]),
                     "gap": gaps.get(round(float(s), 12)), "gamma": gamma,
                     "gamma_T": cfg["cutoffs.gamma_T"] or None,
                     "step": cfg["cutoffs.step"] if cut is not None else None, "ode_step": h})
    if cfg["audit.constant_control"]:
        Phic = _model(cfg, G, freeze_at=float(s_grid[0]))
        ctrl = spectralflow.flow(Phic, G.sites, gamma, s_grid, h, cut, tables, tol_unitary=tu)
        records.append(AuditRecord("constant_control", float(ctrl.transport.max()), cfg["audit.control_tol"],
                                   0.0, {}))
    cols = ["s", "residual", "refined_residual", "gap", "gamma", "gamma_T", "step", "ode_step"]
    return records, [Table("flow", cols, rows)], _cutoff_info(cfg, gamma)


def _gap_unit(args):
    cfg_values, n, s = args
    cfg = ScenarioConfig(cfg_values)
    lengths = list(cfg["lattice.lengths"])
    lengths[0] = n
    G = _lattice(cfg, lengths)
    return spectralflow.gap_audit(_model(cfg, G), [G.sites], [s]).rows


def _pipe_gap(cfg, par):
    sizes = cfg["audit.volumes"] or [cfg["lattice.lengths"][0]]
    units = [(cfg.values, n, float(s)) for n in sizes for s in _grid(cfg, "s")]
    rows = [r for chunk in _pmap(_gap_unit, units, par) for r in chunk]
    floor = cfg["audit.gap_floor"]
    records = [AuditRecord("gap", floor, r["gap"], 0.0, {"n_sites": r["n_sites"], "s": r["s"]}) for r in rows]
    records += [AuditRecord("unambiguous", float(r["ambiguous"]), 0.0, 0.0, {"n_sites": r["n_sites"], "s": r["s"]})
                for r in rows]
    cols = ["n_sites", "s", "cluster", "width", "gap", "ambiguous"]
    return records, [Table("gap", cols, rows)], {}


def _pipe_equivalence(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    s_grid = _grid(cfg, "s")
    gamma, prof = _gamma(cfg, Phi, G, s_grid)
    tables = weightfn.constants()
    h = cfg["cutoffs.ode_step"]
    out = spectralflow.automorphic_equivalence_audit(Phi, G.sites, gamma, s_grid, h, _cutoff(cfg, gamma), tables,
                                                     tol=cfg["audit.transport_tol"], profile=prof)
    records = [AuditRecord("equivalence", r["residual"], cfg["audit.transport_tol"], 0.0,
                           {"s": r["s"], "t": r["t"]}) for r in out["rows"]]
    rows = [{**r, "gamma": gamma, "ode_step": h} for r in out["rows"]]
    return records, [Table("equivalence", ["s", "t", "residual", "gamma", "ode_step"], rows)], \
        _cutoff_info(cfg, gamma)


# terms at or below this norm are rounding noise of exactly vanishing shells
NEGLIGIBLE = 1e-12


def _hastings_unit(args):
    cfg_values, s, gamma = args
    cfg = ScenarioConfig(cfg_values)
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    rho = _state(cfg["audit.rho"], G.sites, None)
    T = spectralflow.hastings_interaction(Phi, G.sites, s, gamma, rho, G, _cutoff(cfg, gamma),
                                          weightfn.constants())
    ends = {G.sites[0], G.sites[-1]}
    overall, interior, count = {}, {}, {}
    for Z, op in sorted(T.terms.items(), key=lambda kv: tuple(sorted(kv[0]))):
        d = int(round(G.diameter(Z)))
        n = algebra.opnorm(op)
        if n <= NEGLIGIBLE:
            continue
        overall[d] = max(overall.get(d, 0.0), n)
        count[d] = count.get(d, 0) + 1
        if not set(Z) & ends:
            interior[d] = max(interior.get(d, 0.0), n)
    return T.residual, overall, interior, count


def _pipe_hastings(cfg, par):
    G = _lattice(cfg)
    Phi = _model(cfg, G)
    gamma, prof = _gamma(cfg, Phi, G, _grid(cfg, "s"))
    points = [float(s) for s in cfg["audit.s_points"]]
    results = _pmap(_hastings_unit, [(cfg.values, s, gamma) for s in points], par)
    tol, dmin = cfg["audit.residual_tol"], cfg["audit.min_diameter"]
    records, rows = [], []
    for s, (resid, overall, interior, count) in zip(points, results):
        records.append(AuditRecord("reconstruction", resid, tol, 0.0, {"s": s, "gamma": gamma}))
        audited = interior if cfg["audit.interior_only"] else overall
        ds = sorted(d for d in audited if d >= dmin)
        for a, b in zip(ds[:-1], ds[1:]):
            records.append(AuditRecord("monotone_diameter", audited[b], audited[a], 1e-12,
                                       {"s": s, "diameter": b, "previous": a}))
        for d in sorted(overall):
            rows.append({"s": s, "diameter": d, "interior_max": interior.get(d), "overall_max": overall[d],
                         "count": count[d]})
    cols = ["s", "diameter", "interior_max", "overall_max", "count"]
    info = _cutoff_info(cfg, gamma)
    info["min_gap"] = prof.min_gap
    return records, [Table("hastings", cols, rows)], info


def _pipe_appendix(cfg, par):
    F = decay.DecayFunction.power(cfg["decay.power"])
    records, rows = [], []

    def add(r, check):
        records.append(r)
        rows.append({"check": check, "measured": r.lhs, "bound": r.rhs, "slack": r.slack, "passed": r.passed})

    cf = decay.f_constants(F, models.chain(3)).conv_constant
    add(AuditRecord("chain3_conv_constant", abs(cf - cfg["audit.cf_reference"]), cfg["audit.identity_tol"], 0.0,
                    {"value": cf, "reference": cfg["audit.cf_reference"]}), "chain3_conv_constant")
    box = cfg["audit.box"]
    G = lattice.build_box(len(box), box, cfg["lattice.metric"])
    nu = float(len(box))
    Fa, _, _ = _decay(cfg)
    a = cfg["audit.step_a"]
    transforms = {
        "step": decay.transform_step(F, a, float(F(0.0)), G, nu=nu),
        "dilate": decay.transform_dilate(Fa, cfg["audit.dilation"], G),
        "shift": decay.transform_shift(Fa, cfg["audit.shift"], G),
    }
    for name, (Ft, bounds) in transforms.items():
        c = decay.f_constants(Ft, G)
        add(AuditRecord(f"{name}_norm", c.uniform_norm, bounds.norm_bound, 1e-12 * bounds.norm_bound, {}),
            f"{name}_norm")
        add(AuditRecord(f"{name}_conv", c.conv_constant, bounds.conv_bound, 1e-12 * bounds.conv_bound, {}),
            f"{name}_conv")
    Phi = _model(cfg, G)
    center = G.sites[len(G) // 2]
    for r in interactions.appendix_sum_audit(Phi, Fa, G, [center], cfg["audit.R"], nu=nu):
        add(r, r.name)
    return records, [Table("appendix", ["check", "measured", "bound", "slack", "passed"], rows)], {}


_RUNNERS = {
    "propagator": _pipe_propagator, "lr": _pipe_lr, "difference": _pipe_difference,
    "localization": _pipe_localization, "transform": _pipe_transform, "weights": _pipe_weights,
    "liouvillean": _pipe_liouvillean, "flow": _pipe_flow, "gap": _pipe_gap,
    "equivalence": _pipe_equivalence, "hastings": _pipe_hastings, "appendix": _pipe_appendix,
}


# orchestration -------------------------------------------------------------------------------------

def run(config, pipeline: str | None = None, out=None, parallelism: int = 1, overrides: dict | None = None,
        catch: bool = False) -> RunReport:
    """Execute one pipeline and, when ``out`` is given, write its CSV tables and manifest.

    ``config`` is a path, config text object or :class:`ScenarioConfig`.  With
    ``catch`` a numerical error inside the pipeline becomes a failed report
    instead of an exception; configuration errors always raise.
    """
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    over = dict(overrides or {})
    if pipeline is not None:
        if pipeline not in PIPELINES:
            raise ConfigurationError(f"unknown pipeline {pipeline!r}; choose from {list(PIPELINES)}")
        if pipeline != cfg.pipeline:
            # pipeline defaults apply beneath the explicit file values
            cfg = _rebase(cfg, pipeline)
    if over:
        cfg = cfg.with_overrides(over)
    start = time.perf_counter()
    try:
        records, tables, cutoffs = _RUNNERS[cfg.pipeline](cfg, max(1, int(parallelism)))
        report = RunReport(cfg.pipeline, cfg, records, tables, cutoffs)
    except ConfigurationError:
        raise
    except QlocError as exc:
        if not catch:
            raise
        report = RunReport(cfg.pipeline, cfg, [], [], {}, error=f"{type(exc).__name__}: {exc}")
    report.wall_time = time.perf_counter() - start
    if out is not None:
        report.write(out)
    return report


def _rebase(cfg: ScenarioConfig, pipeline: str) -> ScenarioConfig:
    """Switch pipeline, keeping values that differ from the old pipeline's defaults."""
    old = _defaults(cfg.pipeline)
    new = _defaults(pipeline)
    for section, fields in cfg.values.items():
        for key, v in fields.items():
            if v != old[section][key]:
                new[section][key] = v
    new["scenario"]["pipeline"] = pipeline
    return _finish(new, cfg.source, {})


@dataclass
class SweepReport:
    axis: str
    values: list
    reports: list
    seeds: list
    skipped: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.skipped and all(r.passed for r in self.reports)

    def table(self) -> Table:
        rows = []
        for v, seed, r in zip(self.values, self.seeds, self.reports):
            rows.append({"value": v, "seed": seed, "passed": r.passed, "audits": len(r.records),
                         "failures": len(r.failures), "error": r.error, "config_hash": r.config.hash()})
        for v in self.skipped:
            rows.append({"value": v, "passed": False, "error": "skipped after failure"})
        return Table("sweep", ["value", "seed", "passed", "audits", "failures", "error", "config_hash"], rows)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for v, r in zip(self.values, self.reports):
            r.write(out / _instance_dir(self.axis, v))
        (out / "sweep.csv").write_text(self.table().csv_text())
        return out


def _instance_dir(axis: str, value) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]", "_", f"{axis}={value}")


def _sweep_unit(args):
    cfg_values, source = args
    return run(ScenarioConfig(cfg_values, source), catch=True)


def sweep(config, axis: str, values, parallelism: int = 1, fail_fast: bool = False, out=None,
          overrides: dict | None = None) -> SweepReport:
    """Run one instance per axis value with seeds derived from (base seed, value).

    Instances run in batches of ``parallelism`` processes; results are kept in
    ascending value order whatever the input or completion order.  With ``fail_fast``
    no batch starts after one containing a failure.
    """
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    section, key = _split_key(axis, "sweep axis")
    if SCHEMA[section][key].kind not in ("int", "count", "float", "pos_float", "nonneg_float", "tol"):
        raise ConfigurationError(f"sweep axis {axis} is not numeric")
    values = sorted(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    units, seeds = [], []
    for v in values:
        seed = instance_seed(cfg.seed, axis, v)
        inst = cfg.with_overrides({axis: v, "scenario.seed": seed})
        seeds.append(seed)
        units.append((inst.values, cfg.source))
    par = max(1, int(parallelism))
    batch = par if fail_fast else len(units)
    reports, skipped = [], []
    for i in range(0, len(units), batch):
        reports += _pmap(_sweep_unit, units[i:i + batch], par)
        if fail_fast and not all(r.passed for r in reports):
            skipped = values[i + batch:]
            break
    report = SweepReport(axis, values[:len(reports)], reports, seeds[:len(reports)], skipped)
    if out is not None:
        report.write(out)
    return report


def catalog() -> list[dict]:
    """Presets with parameter schemas and desk-scale sizes."""
    return [{"name": p.name, "summary": p.summary, "params": dict(p.params), "desk_sizes": list(p.desk_sizes),
             "tags": list(p.tags)} for p in models.catalog()]


def schema_text() -> str:
    """Human-readable schema listing, one key per line."""
    lines = []
    for section, fields in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, f in fields.items():
            lines.append(f"  {key} ({f.kind}, default {f.default!r}): {f.doc}")
    return "\n".join(lines)
