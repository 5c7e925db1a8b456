"""On-disk corpora: one JSON-lines manifest plus WAV, SMF, score JSON and activity files."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .fsutil import atomic_write_bytes, atomic_write_json, atomic_write_text
from .score import UnitTimeline, parse_smf, score_to_json, write_smf
from .wavio import read_wav, write_wav

MANIFEST = "corpus.jsonl"


@dataclass
class ClipRecord:
    doc: dict
    root: str

    @property
    def clip_id(self) -> str:
        return self.doc["id"]

    @property
    def kind(self) -> str:
        return self.doc["kind"]

    @property
    def split(self) -> str:
        return self.doc["split"]

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def mixture(self):
        return read_wav(self.path(self.doc["wav"]["mixture"]))

    def stems(self) -> dict:
        return {k: read_wav(self.path(v)) for k, v in self.doc["wav"].items() if k != "mixture"}

    def timeline(self) -> UnitTimeline:
        return UnitTimeline.from_list(self.doc["timeline"])

    def score(self):
        with open(self.path(self.doc["score"]), "rb") as fh:
            return parse_smf(fh.read())

    def activity(self) -> np.ndarray:
        with open(self.path(self.doc["activity"])) as fh:
            return np.array(json.load(fh)["frames"], dtype=np.int8)


def _write_wavs(root, clip_id, mixture, stems, encoding) -> dict:
    paths = {"mixture": f"{clip_id}.mixture.wav"}
    write_wav(os.path.join(root, paths["mixture"]), mixture, encoding)
    for name, w in stems.items():
        paths[name] = f"{clip_id}.{name}.wav"
        write_wav(os.path.join(root, paths[name]), w, encoding)
    return paths


def music_record(root, clip, split: str, encoding: str = "float32") -> dict:
    cid = clip.clip_id
    wav = _write_wavs(root, cid, clip.mixture, clip.stems, encoding)
    atomic_write_bytes(os.path.join(root, f"{cid}.mid"), write_smf(clip.score))
    atomic_write_text(os.path.join(root, f"{cid}.score.json"), score_to_json(clip.score) + "\n")
    return {"id": cid, "kind": "music", "split": split, "seed": clip.spec.seed,
            "spec": {"section_order": list(clip.spec.section_order), "sample_rate": clip.spec.sample_rate,
                     "timbre_distance": clip.spec.timbre_distance},
            "wav": wav, "timeline": clip.timeline.to_list(), "score": f"{cid}.mid",
            "score_json": f"{cid}.score.json", "activity": None}


def cinematic_record(root, clip, split: str, encoding: str = "float32") -> dict:
    cid = clip.clip_id
    wav = _write_wavs(root, cid, clip.mixture, clip.stems, encoding)
    act_path = f"{cid}.activity.json"
    atomic_write_json(os.path.join(root, act_path), {"plan": clip.plan.to_dict(),
                                                     "frames": clip.activity.astype(int).tolist()})
    return {"id": cid, "kind": "cinematic", "split": split, "seed": None, "spec": None, "wav": wav,
            "timeline": None, "score": None, "score_json": None, "activity": act_path}


def write_corpus_manifest(root, records: list):
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    atomic_write_text(os.path.join(root, MANIFEST), text)


def read_corpus(root) -> list:
    path = os.path.join(root, MANIFEST)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no corpus manifest at {path}; run 'scoreseg synth' first")
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(ClipRecord(json.loads(line), root))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path} line {line_no}: invalid JSON ({exc.msg})") from exc
    return records
