"""JSON and CSV file formats.

Instance file::

    {
      "edges": 3, "states": 2,
      "prior": [0.5, 0.5],
      "slope":     [[...], ...],   # edges x states
      "intercept": [[...], ...],   # edges x states
      "profiles":  [[...], ...]    # K x edges, rows on the simplex
    }

Policy file: ``{"weights": [[...], ...]}`` (states x K), optionally with a
``"profiles"`` key when the policy lives on a different profile set than the
instance file.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError
from .model import GameInstance, RecommendationSet, SignalingPolicy

INSTANCE_KEYS = ("edges", "states", "prior", "slope", "intercept", "profiles")


def instance_to_dict(inst: GameInstance, X: RecommendationSet) -> dict:
    out = inst.to_dict()
    out["profiles"] = X.profiles.tolist()
    return out


def instance_from_dict(data: dict) -> tuple[GameInstance, RecommendationSet]:
    missing = [k for k in INSTANCE_KEYS if k not in data]
    if missing:
        raise InputError(f"instance is missing keys: {', '.join(missing)}")
    try:
        inst = GameInstance(np.asarray(data["prior"], dtype=np.float64),
                            np.asarray(data["slope"], dtype=np.float64),
                            np.asarray(data["intercept"], dtype=np.float64))
        X = RecommendationSet(np.asarray(data["profiles"], dtype=np.float64))
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    if inst.edge_count != int(data["edges"]) or inst.state_count != int(data["states"]):
        raise InputError("declared edges/states disagree with array shapes")
    if X.edge_count != inst.edge_count:
        raise InputError("profiles have the wrong number of edges")
    return inst, X


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def load_instance(path) -> tuple[GameInstance, RecommendationSet]:
    return instance_from_dict(_read_json(path))


def save_instance(path, inst: GameInstance, X: RecommendationSet) -> None:
    write_json(path, instance_to_dict(inst, X))


def load_policy(path, X: RecommendationSet) -> tuple[SignalingPolicy, RecommendationSet]:
    data = _read_json(path)
    if "weights" not in data:
        raise InputError("policy file needs a 'weights' key")
    try:
        if "profiles" in data:
            X = RecommendationSet(np.asarray(data["profiles"], dtype=np.float64))
        return SignalingPolicy(np.asarray(data["weights"], dtype=np.float64)), X
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def policy_to_dict(policy: SignalingPolicy, X: RecommendationSet | None = None) -> dict:
    out = {"weights": policy.weights.tolist()}
    if X is not None:
        out["profiles"] = X.profiles.tolist()
    return out


def _clean(obj):
    """Make floats JSON-safe (inf/nan become strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2) + "\n")
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "" if math.isnan(f) else repr(f)
    return str(v)


def write_csv(path, columns: list[str], rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
