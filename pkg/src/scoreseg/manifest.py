"""Run manifests: schema, defaults, validation that reports every problem at once."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

from .experiments import (
    CinematicConfig,
    CorpusConfig,
    ExperimentConfig,
    HmmConfig,
    MixgenConfig,
    SeparatorConfig,
    ToyConfig,
)
from .mixgen import AugmentationConfig
from .score import INSTRUMENTS


class ManifestError(ValueError):
    def __init__(self, problems: list):
        self.problems = problems
        lines = "; ".join(f"{p['path']}: {p['problem']}" for p in problems)
        super().__init__(f"invalid manifest ({len(problems)} problem(s)): {lines}")


@dataclass(frozen=True)
class F:
    """One manifest field: accepted kind, default, optional extra check returning a message or None."""

    kind: str  # int, num, str, bool, range, path, map
    default: object = None
    check: object = None
    required: bool = False


def _pos(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be non-negative"


def _prob(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


def _one_of(*opts):
    def check(v):
        return None if v in opts else f"must be one of {list(opts)}"
    return check


def _pow2(v):
    return None if v > 0 and v & (v - 1) == 0 else "must be a positive power of two"


SCHEMA = {
    "seed": F("int", required=True, check=_nonneg),
    "out_dir": F("str", "runs/default"),
    "corpus": {
        "path": F("path", None),
        "n_clips": F("int", 100, _pos),
        "n_test_clips": F("int", 50, _pos),
        "sample_rate": F("int", 44100, _pos),
        "timbre_distance": F("num", 1.0, lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]"),
        "audio_encoding": F("str", "float32", _one_of("float32", "pcm16")),
    },
    "instrument_map": F("map", {"piano": "piano", "bass": "bass"}),
    "hmm": {
        "n_states": F("int", 20, _pos),
        "n_mix": F("int", 2, _pos),
        "n_iter": F("int", 5, _nonneg),
        "mode": F("str", "baum_welch", _one_of("baum_welch", "viterbi")),
        "loop_penalty": F("num", 0.0),
        "feature_rate": F("int", 16000, _pos),
    },
    "segment": {
        "min_len_frames": F("int", 300, _pos),
        "source": F("str", "alignment", _one_of("alignment", "oracle")),
    },
    "mixgen": {
        "n_draws": F("int", 10000, _pos),
        "n_write": F("int", 20, _nonneg),
        "crop_s": F("num", 3.0, _pos),
        "min_seg_s": F("num", 3.0, _pos),
        "gain_range_db": F("range", [-10.0, 10.0]),
        "channel_swap_prob": F("num", 0.5, _prob),
        "drop_prob": F("num", 0.1, _prob),
        "drop_mode": F("str", "independent", _one_of("independent", "exactly_one")),
        "target": F("str", "piano", _one_of(*INSTRUMENTS)),
    },
    "separator": {
        "n_bases": F("int", 10, _pos),
        "n_iter": F("int", 60, _nonneg),
        "fit_iter": F("int", 30, _nonneg),
        "window_size": F("int", 4096, _pow2),
        "hop": F("int", 1024, _pos),
        "window": F("str", "hamming", _one_of("hamming", "hann", "rect")),
        "max_frames": F("int", 2000, _nonneg),
        "knowledge": F("str", "alignment", _one_of("alignment", "oracle", "none")),
    },
    "cinematic": {
        "n_train_clips": F("int", 20, _pos),
        "n_test_clips": F("int", 50, _pos),
        "duration_s": F("num", 10.0, _pos),
        "on_s": F("range", [0.5, 2.0]),
        "off_s": F("range", [1.5, 4.0]),
    },
    "toy": {
        "n_models": F("int", 200, _pos),
        "em_inits": F("int", 50, _pos),
        "em_iters": F("int", 10, _pos),
        "em_clips": F("int", 3, _pos),
        "em_states": F("int", 3, _pos),
        "em_mix": F("int", 2, _pos),
        "nmf_problems": F("int", 20, _pos),
        "nmf_iters": F("int", 100, _pos),
    },
    "projector": {"n_iter": F("int", 2000, _pos)},
}


def _kind_ok(kind: str, v) -> bool:
    if kind == "int":
        return isinstance(v, int) and not isinstance(v, bool)
    if kind == "num":
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind == "str":
        return isinstance(v, str)
    if kind == "bool":
        return isinstance(v, bool)
    if kind == "path":
        return v is None or isinstance(v, str)
    if kind == "range":
        return (isinstance(v, list) and len(v) == 2
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v))
    if kind == "map":
        return isinstance(v, dict) and all(isinstance(k, str) and isinstance(x, str) for k, x in v.items())
    raise AssertionError(kind)


_KIND_TEXT = {"int": "an integer", "num": "a number", "str": "a string", "bool": "a boolean",
              "path": "a path string or null", "range": "a [low, high] pair of numbers",
              "map": "an object of string values"}


def _walk(schema: dict, doc, path: str, base_dir: str, problems: list) -> dict:
    out = {}
    if not isinstance(doc, dict):
        problems.append({"path": path, "problem": "must be an object"})
        doc = {}
    for key in doc:
        if key not in schema:
            problems.append({"path": f"{path}.{key}", "problem": "unknown field"})
    for key, spec in schema.items():
        p = f"{path}.{key}"
        if isinstance(spec, dict):
            out[key] = _walk(spec, doc.get(key, {}), p, base_dir, problems)
            continue
        if key not in doc:
            if spec.required:
                problems.append({"path": p, "problem": "required field is missing"})
            out[key] = copy.deepcopy(spec.default)
            continue
        v = doc[key]
        if not _kind_ok(spec.kind, v):
            problems.append({"path": p, "problem": f"must be {_KIND_TEXT[spec.kind]}, got {json.dumps(v)}"})
            out[key] = copy.deepcopy(spec.default)
            continue
        msg = spec.check(v) if spec.check else None
        if spec.kind == "range" and v[0] > v[1]:
            msg = f"lower bound {v[0]} exceeds upper bound {v[1]}"
        if spec.kind == "path" and v is not None:
            resolved = v if os.path.isabs(v) else os.path.join(base_dir, v)
            if not os.path.exists(resolved):
                msg = f"path does not exist: {resolved}"
            v = resolved
        if spec.kind == "map":
            bad = [x for x in v.values() if x not in INSTRUMENTS]
            if bad:
                msg = f"values must be instruments {list(INSTRUMENTS)}, got {bad}"
        if msg:
            problems.append({"path": p, "problem": msg})
        out[key] = v
    return out


def _cross_checks(m: dict, problems: list):
    s = m["separator"]
    if isinstance(s["hop"], int) and isinstance(s["window_size"], int) and s["hop"] > s["window_size"]:
        problems.append({"path": "$.separator.hop", "problem": "must not exceed window_size"})
    g = m["mixgen"]
    if g["crop_s"] > g["min_seg_s"]:
        problems.append({"path": "$.mixgen.crop_s", "problem": "must not exceed min_seg_s"})


@dataclass
class RunManifest:
    doc: dict  # fully defaulted, validated document
    source: str = ""
    problems: list = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.doc["seed"]

    @property
    def out_dir(self) -> str:
        return self.doc["out_dir"]

    def experiment_config(self) -> ExperimentConfig:
        d = self.doc
        c, h, s, cc, g, t = d["corpus"], d["hmm"], d["separator"], d["cinematic"], d["mixgen"], d["toy"]
        aug = AugmentationConfig(crop_s=g["crop_s"], min_seg_s=g["min_seg_s"], gain_range_db=tuple(g["gain_range_db"]),
                                 channel_swap_prob=g["channel_swap_prob"], drop_prob=g["drop_prob"],
                                 seed=d["seed"], drop_mode=g["drop_mode"])
        return ExperimentConfig(
            seed=d["seed"],
            corpus=CorpusConfig(c["n_clips"], c["n_test_clips"], c["sample_rate"], c["timbre_distance"]),
            hmm=HmmConfig(h["n_states"], h["n_mix"], h["n_iter"], h["mode"], h["loop_penalty"], h["feature_rate"]),
            separator=SeparatorConfig(s["n_bases"], s["n_iter"], s["fit_iter"], s["window_size"], s["hop"],
                                      s["window"], s["max_frames"], d["segment"]["min_len_frames"]),
            cinematic=CinematicConfig(cc["n_train_clips"], cc["n_test_clips"], cc["duration_s"],
                                      tuple(cc["on_s"]), tuple(cc["off_s"])),
            mixgen=MixgenConfig(g["n_draws"], aug),
            toy=ToyConfig(**t),
            projector_iter=d["projector"]["n_iter"],
        )


def parse_override(text: str):
    """``a.b=value`` with value parsed as JSON when possible, else taken as a string."""
    if "=" not in text:
        raise ManifestError([{"path": text, "problem": "override must look like key.path=value"}])
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(doc: dict, overrides: list) -> dict:
    doc = copy.deepcopy(doc)
    for key, value in overrides:
        parts = key.split(".")
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ManifestError([{"path": "$." + key, "problem": "cannot override inside a non-object"}])
        node[parts[-1]] = value
    return doc


def validate_manifest(doc, base_dir: str = ".", source: str = "") -> RunManifest:
    problems = []
    m = _walk(SCHEMA, doc, "$", base_dir, problems)
    if not problems:
        _cross_checks(m, problems)
    if problems:
        raise ManifestError(problems)
    return RunManifest(m, source)


def load_manifest(path, overrides=()) -> RunManifest:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError([{"path": str(path), "problem": f"cannot read manifest: {exc.strerror}"}]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError([{"path": f"line {exc.lineno} column {exc.colno}",
                              "problem": f"invalid JSON: {exc.msg}"}]) from exc
    doc = apply_overrides(doc, list(overrides))
    return validate_manifest(doc, os.path.dirname(os.path.abspath(path)), str(path))
