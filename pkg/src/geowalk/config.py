"""Experiment configuration: JSON schema, semantic checks and canonical hashing."""
import copy
import dataclasses
import hashlib
import json
import math

import jsonschema
import numpy as np

from .errors import GeowalkError
from .lemmas import LEMMA_IDS
from .manifolds import get_manifold
from .measures import KINDS, MeasureFamily, RadialSpec


class ConfigError(GeowalkError, ValueError):
    """Configuration rejected before any computation starts."""


_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["manifold", "family"],
    "properties": {
        "manifold": {"type": "string"},
        "x0": _VECTOR,
        "family": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "r"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "dimension": {"type": "integer", "minimum": 1},
            },
        },
        "walk": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "replicas": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["walk-path", "geodesic-anchored"]},
                "pullback": {"type": "boolean"},
            },
        },
        "targets": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "oneOf": [{"required": ["point"]}, {"required": ["distance"]}],
                "properties": {
                    "point": _VECTOR,
                    "distance": {"type": "number", "minimum": 0},
                    "direction": _VECTOR,
                },
            },
        },
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0},
        },
        "legendre": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"v": {"type": "array", "items": {"type": "number", "minimum": 0}}},
        },
        "lemmas": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ids": {"type": "array", "items": {"enum": list(LEMMA_IDS) + ["all"]}},
                "manifolds": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "overrides": {"type": "object", "additionalProperties": {"type": "object"}},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
    },
}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description.  ``raw`` is the normalized JSON form."""

    raw: dict

    @classmethod
    def from_dict(cls, data):
        data = copy.deepcopy(data)
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        try:
            man = get_manifold(data["manifold"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"unknown manifold {data['manifold']!r}") from exc
        fam = data["family"]
        fam.setdefault("dimension", man.dim)
        if fam["dimension"] != man.dim:
            raise ConfigError(f"family dimension {fam['dimension']} does not match manifold dimension {man.dim}")
        try:
            RadialSpec(fam["kind"], float(fam["r"]), fam["dimension"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        data.setdefault("seed", 0)
        data.setdefault("output", "out")
        walk = data.setdefault("walk", {})
        walk.setdefault("n", [])
        walk.setdefault("replicas", 1)
        walk.setdefault("pullback", False)
        if "x0" in data:
            try:
                man.check_point(np.asarray(data["x0"], float))
            except GeowalkError as exc:
                raise ConfigError(f"x0 is not a point of {man.id}: {exc}") from None
        if walk["pullback"] or "m" in walk:
            x0 = np.asarray(data.get("x0", man.origin), float)
            inj = man.injectivity_radius(x0)
            if not fam["r"] < inj:
                raise ConfigError(f"constraint r < injectivity radius violated: r = {fam['r']} but "
                                  f"injectivity radius at x0 is {inj:.6g}; pullback constructions need it")
        for i, t in enumerate(data.get("targets", [])):
            if "point" in t:
                try:
                    man.check_point(np.asarray(t["point"], float))
                except GeowalkError as exc:
                    raise ConfigError(f"target {i} is not a point of {man.id}: {exc}") from None
            elif "direction" in t and len(t["direction"]) != man.dim:
                raise ConfigError(f"target {i} direction needs {man.dim} frame coordinates")
        return cls(data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def to_json(self):
        return json.dumps(self.raw, sort_keys=True, indent=2)

    def with_overrides(self, seed=None, output=None):
        data = self.to_dict()
        if seed is not None:
            data["seed"] = int(seed)
        if output is not None:
            data["output"] = str(output)
        return ExperimentConfig.from_dict(data)

    @property
    def hash(self):
        """SHA-256 of the canonical JSON form, output directory excluded."""
        data = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # --- typed views -----------------------------------------------------------

    @property
    def manifold(self):
        return get_manifold(self.raw["manifold"])

    @property
    def family(self):
        return MeasureFamily.from_config(self.raw["family"], self.manifold)

    @property
    def x0(self):
        return np.asarray(self.raw.get("x0", self.manifold.origin), float)

    @property
    def seed(self):
        return self.raw["seed"]

    @property
    def output(self):
        return self.raw["output"]

    @property
    def walk(self):
        return self.raw["walk"]

    @property
    def epsilon(self):
        return self.raw.get("epsilon", 0.05)

    def tolerance(self, name, default):
        return self.raw.get("tolerances", {}).get(name, default)

    def target_points(self):
        """Targets as manifold points; distance targets are shot from ``x0`` along a frame direction."""
        man, x0 = self.manifold, self.x0
        frame = man.frame(x0)
        out = []
        for t in self.raw.get("targets", []):
            if "point" in t:
                out.append(np.asarray(t["point"], float))
                continue
            coords = np.asarray(t.get("direction", [1.0] + [0.0] * (man.dim - 1)), float)
            if not np.linalg.norm(coords) > 0:
                raise ConfigError("target direction must be nonzero")
            u = frame @ (coords / np.linalg.norm(coords))
            out.append(man.exp(x0, t["distance"] * u))
        return out

    def legendre_grid(self):
        r = self.raw["family"]["r"]
        v = self.raw.get("legendre", {}).get("v")
        return list(v) if v is not None else [r * k / 10 for k in range(11)] + [1.1 * r]

    def lemma_plan(self, requested=None):
        """``[(lemma_id, manifold_id, overrides)]`` in a fixed order."""
        spec = self.raw.get("lemmas", {})
        ids = list(requested) if requested else spec.get("ids", ["all"])
        if "all" in ids:
            ids = list(LEMMA_IDS)
        manifolds = spec.get("manifolds", [self.raw["manifold"]])
        overrides = spec.get("overrides", {})
        return [(lid, m, overrides.get(lid, {})) for m in manifolds for lid in ids]


def default_verify_config():
    """Configuration used by ``verify`` when no file is given."""
    return ExperimentConfig.from_dict({
        "manifold": "sphere2",
        "family": {"kind": "uniform-sphere-shell", "r": 0.5},
        "lemmas": {"ids": ["all"]},
    })


def canonical_number(x):
    """Deterministic text for a float (``repr`` round-trips; infinities spelled out)."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)
