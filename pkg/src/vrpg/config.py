"""Line-oriented experiment config: ``[section]`` headers, ``key = value``
pairs and ``#`` comments.

Vectors are comma-separated numerals. Matrices are either ``diag: v1, v2``
or rows separated by ``;`` (``1, 0; 0, 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import prox as P
from .instances import RandomCurvatureInstance, make_quadratic_instance, quadratic_from_spectrum

REQUIRED = object()

# section -> key -> (kind, default)
SCHEMA = {
    "instance": {
        "id": ("str", REQUIRED),
        "family": ("choice:quadratic|random_curvature", "quadratic"),
        "A": ("mat", None),
        "eigenvalues": ("vec", None),
        "rotation_seed": ("int", None),
        "theta": ("vec", REQUIRED),
        "Sigma": ("mat", REQUIRED),
        "noise": ("choice:gaussian|uniform", "gaussian"),
        "curvature_scale": ("float", None),
    },
    "regularizer": {
        "kind": ("choice:zero|l1|box|ball2|orthant|simplex|halfspaces", REQUIRED),
        "id": ("str", None),
        "weight": ("float", None),
        "lower": ("vec", None),
        "upper": ("vec", None),
        "center": ("vec", None),
        "radius": ("float", None),
        "scale": ("float", None),
        "normals": ("mat", None),
        "offsets": ("vec", None),
    },
    "method": {
        "name": ("choice:vrpg|sgd_pr|m_estimator", "vrpg"),
        "schedule": ("choice:constant_paper|doubling", "constant_paper"),
        "t0": ("int", None),
        "log_base": ("logbase", math.e),
        "sgd_schedule": ("choice:polynomial|constant", "polynomial"),
        "sgd_c": ("float", 1.0),
        "sgd_omega": ("float", 0.6),
    },
    "experiment": {
        "n_grid": ("ivec", REQUIRED),
        "replications": ("int", REQUIRED),
        "master_seed": ("int", REQUIRED),
        "output": ("str", None),
        "anchor_dist": ("float", 1.0),
        "lemma1_mode": ("choice:fixed|random|both", "fixed"),
        "delta_replications": ("int", 200),
        "rate_factor": ("int", 4),
        "compare_doubling": ("bool", False),
    },
    "tolerances": {
        "solver_tol": ("float", 1e-10),
        "active_tol": ("float", 1e-7),
    },
}


class ConfigError(ValueError):
    """Collected config problems; ``errors`` holds ``(line, message)`` pairs
    (line 0 when the problem is not tied to a line)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" for ln, msg in self.errors))


@dataclass
class ExperimentConfig:
    instance: dict
    regularizer: dict
    method: dict
    experiment: dict
    tolerances: dict
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_grid(self) -> tuple:
        return self.experiment["n_grid"]

    @property
    def replications(self) -> int:
        return self.experiment["replications"]

    @property
    def master_seed(self) -> int:
        return self.experiment["master_seed"]

    @property
    def instance_id(self) -> str:
        return self.instance["id"]

    @property
    def reg_id(self) -> str:
        return self.regularizer["id"] or self.regularizer["kind"]


def _floats(text):
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ValueError("expected comma-separated numbers")
    return tuple(float(p) for p in parts)


def _parse_value(kind, text):
    if kind == "str":
        if not text:
            raise ValueError("expected a non-empty string")
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError("expected true or false")
    if kind == "logbase":
        return math.e if text == "e" else float(text)
    if kind == "vec":
        return _floats(text)
    if kind == "ivec":
        if not text.strip():
            return ()
        return tuple(int(p.strip()) for p in text.split(","))
    if kind == "mat":
        if text.startswith("diag:"):
            return ("diag", _floats(text[5:]))
        rows = tuple(_floats(r) for r in text.split(";"))
        if len({len(r) for r in rows}) != 1:
            raise ValueError("matrix rows differ in length")
        return ("rows", rows)
    if kind.startswith("choice:"):
        options = kind[7:].split("|")
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    raise AssertionError(kind)


def _type_name(kind):
    return {"str": "string", "int": "integer", "float": "number", "bool": "boolean",
            "logbase": "number or 'e'", "vec": "vector", "ivec": "integer list",
            "mat": "matrix"}.get(kind, "choice")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config; raises :class:`ConfigError` listing every problem."""
    errors = []
    raw = {}
    lines = {}
    section = None
    skipping = False  # keys under a rejected header are not reported again
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            name = body[1:-1].strip()
            skipping = True
            if name not in SCHEMA:
                errors.append((ln, f"unknown section [{name}]"))
                section = None
            elif name in raw:
                errors.append((ln, f"duplicate section [{name}]"))
                section = None
            else:
                section = name
                skipping = False
                raw[name] = {}
                lines[name] = ln
            continue
        if "=" not in body:
            errors.append((ln, "expected 'key = value'"))
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if section is None:
            if not skipping:
                errors.append((ln, f"key {key!r} outside a section"))
            continue
        if key not in SCHEMA[section]:
            errors.append((ln, f"unknown key {section}.{key}"))
            continue
        if key in raw[section]:
            errors.append((ln, f"duplicate key {section}.{key}"))
            continue
        kind = SCHEMA[section][key][0]
        try:
            raw[section][key] = _parse_value(kind, value)
        except ValueError as exc:
            errors.append((ln, f"{section}.{key}: type mismatch, expected {_type_name(kind)} ({exc})"))
            continue
        lines[f"{section}.{key}"] = ln

    values = {}
    for sec, keys in SCHEMA.items():
        got = raw.get(sec, {})
        values[sec] = {}
        for key, (kind, default) in keys.items():
            if key in got:
                values[sec][key] = got[key]
            elif default is REQUIRED:
                if not any(msg.startswith(f"{sec}.{key}:") for _, msg in errors):
                    errors.append((lines.get(sec, 0), f"missing required key {sec}.{key}"))
            else:
                values[sec][key] = default
    errors.extend(_validate(values, lines))
    if errors:
        raise ConfigError(sorted(errors, key=lambda e: e[0]))
    return ExperimentConfig(values["instance"], values["regularizer"], values["method"],
                            values["experiment"], values["tolerances"], lines)


def _validate(v, lines):
    errs = []

    def at(key):
        return lines.get(key, lines.get(key.split(".")[0], 0))

    inst, reg, exp = v["instance"], v["regularizer"], v["experiment"]
    if "A" in inst and "eigenvalues" in inst:
        if inst["A"] is None and inst["eigenvalues"] is None:
            errs.append((at("instance"), "instance needs A or eigenvalues"))
        elif inst["A"] is not None and inst["eigenvalues"] is not None:
            errs.append((at("instance.eigenvalues"), "instance takes A or eigenvalues, not both"))
    if inst.get("family") == "random_curvature":
        cs = inst.get("curvature_scale")
        if cs is None:
            errs.append((at("instance"), "random_curvature needs instance.curvature_scale"))
        elif cs < 0:
            errs.append((at("instance.curvature_scale"), "instance.curvature_scale must be >= 0"))

    kind = reg.get("kind")
    needs = {"l1": ("weight",), "box": ("lower", "upper"), "ball2": ("radius",),
             "simplex": ("scale",), "halfspaces": ("normals", "offsets")}
    for key in needs.get(kind, ()):
        if reg.get(key) is None:
            errs.append((at("regularizer"), f"missing required key regularizer.{key} for {kind}"))
    if kind == "ball2" and reg.get("radius") is not None and not reg["radius"] > 0:
        errs.append((at("regularizer.radius"), "ball2.radius must be > 0"))
    if kind == "l1" and reg.get("weight") is not None and not reg["weight"] >= 0:
        errs.append((at("regularizer.weight"), "l1.weight must be >= 0"))
    if kind == "simplex" and reg.get("scale") is not None and not reg["scale"] > 0:
        errs.append((at("regularizer.scale"), "simplex.scale must be > 0"))
    if kind == "halfspaces" and reg.get("normals") is not None and reg["normals"][0] == "diag":
        errs.append((at("regularizer.normals"), "halfspaces.normals must be given as rows"))

    grid = exp.get("n_grid")
    if grid is not None:
        if len(grid) == 0:
            errs.append((at("experiment.n_grid"), "experiment.n_grid must be non-empty"))
        elif any(n < 1 for n in grid):
            errs.append((at("experiment.n_grid"), "experiment.n_grid entries must be positive"))
        elif list(grid) != sorted(grid):
            errs.append((at("experiment.n_grid"), "experiment.n_grid must be sorted ascending"))
    for key in ("replications", "delta_replications"):
        if exp.get(key) is not None and exp[key] < 1:
            errs.append((at(f"experiment.{key}"), f"experiment.{key} must be >= 1"))
    if exp.get("rate_factor") is not None and exp["rate_factor"] < 2:
        errs.append((at("experiment.rate_factor"), "experiment.rate_factor must be >= 2"))
    if exp.get("anchor_dist") is not None and exp["anchor_dist"] < 0:
        errs.append((at("experiment.anchor_dist"), "experiment.anchor_dist must be >= 0"))
    lb = v["method"].get("log_base")
    if lb is not None and not lb > 1:
        errs.append((at("method.log_base"), "method.log_base must be > 1"))
    for key, val in v["tolerances"].items():
        if val is not None and not val > 0:
            errs.append((at(f"tolerances.{key}"), f"tolerances.{key} must be > 0"))
    return errs


def _format_value(kind, val):
    if kind == "bool":
        return "true" if val else "false"
    if kind == "logbase":
        return "e" if val == math.e else repr(float(val))
    if kind == "float":
        return repr(float(val))
    if kind == "vec":
        return ", ".join(repr(float(x)) for x in val)
    if kind == "ivec":
        return ", ".join(str(int(x)) for x in val)
    if kind == "mat":
        form, data = val
        if form == "diag":
            return "diag: " + _format_value("vec", data)
        return "; ".join(_format_value("vec", r) for r in data)
    return str(val)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (``None`` values are omitted)."""
    out = []
    for sec, keys in SCHEMA.items():
        out.append(f"[{sec}]")
        values = getattr(cfg, sec)
        for key, (kind, _) in keys.items():
            val = values.get(key)
            if val is not None:
                out.append(f"{key} = {_format_value(kind, val)}")
        out.append("")
    return "\n".join(out)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def matrix(spec) -> np.ndarray:
    form, data = spec
    if form == "diag":
        return np.diag(np.array(data, dtype=float))
    return np.array(data, dtype=float)


def build_instance(cfg: ExperimentConfig):
    s = cfg.instance
    theta = np.array(s["theta"], dtype=float)
    Sigma = matrix(s["Sigma"])
    if s["family"] == "random_curvature":
        A = matrix(s["A"]) if s["A"] is not None else quadratic_from_spectrum(
            s["eigenvalues"], theta, Sigma, s["rotation_seed"]).A
        return RandomCurvatureInstance(A, theta, Sigma, s["curvature_scale"])
    if s["A"] is not None:
        return make_quadratic_instance(matrix(s["A"]), theta, Sigma, s["noise"])
    return quadratic_from_spectrum(s["eigenvalues"], theta, Sigma, s["rotation_seed"], s["noise"])


def build_regularizer(cfg: ExperimentConfig, dim: int):
    s = cfg.regularizer
    kind = s["kind"]
    if kind == "zero":
        return P.Zero(dim)
    if kind == "l1":
        return P.L1(dim, s["weight"])
    if kind == "box":
        return P.Box(s["lower"], s["upper"])
    if kind == "ball2":
        center = np.zeros(dim) if s["center"] is None else np.array(s["center"])
        return P.Ball2(center, s["radius"])
    if kind == "orthant":
        return P.Orthant(dim)
    if kind == "simplex":
        return P.Simplex(dim, s["scale"])
    return P.Halfspaces(matrix(s["normals"]), s["offsets"])
