"""Cinematic activity vectors and the affine knowledge projector."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .dsp import FeatureSequence
from .rng import CounterRng

BITS = ("speech", "dialog", "nonverbal", "music", "sfx", "fg_sfx", "bg_sfx")
LEAVES = ("dialog", "nonverbal", "music", "fg_sfx", "bg_sfx")
CATEGORIES = ("speech", "music", "sfx")
CATEGORY_INDEX = tuple(BITS.index(c) for c in CATEGORIES)


@dataclass(frozen=True)
class ActivityVector:
    """Leaf activity flags; the speech and sfx bits are derived, never stored."""

    dialog: int = 0
    nonverbal: int = 0
    music: int = 0
    fg_sfx: int = 0
    bg_sfx: int = 0

    def __post_init__(self):
        for name in LEAVES:
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {getattr(self, name)!r}")

    @property
    def speech(self) -> int:
        return self.dialog | self.nonverbal

    @property
    def sfx(self) -> int:
        return self.fg_sfx | self.bg_sfx

    @property
    def bits(self) -> tuple:
        return tuple(getattr(self, b) for b in BITS)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.float64)

    @classmethod
    def from_bits(cls, bits) -> "ActivityVector":
        bits = [int(b) for b in bits]
        if len(bits) != 7:
            raise ValueError(f"expected 7 bits, got {len(bits)}")
        vec = cls(*(bits[BITS.index(leaf)] for leaf in LEAVES))
        if vec.bits != tuple(bits):
            raise ValueError(f"bits {bits} violate speech = dialog|nonverbal, sfx = fg|bg")
        return vec


def enumerate_activity_vectors() -> list:
    """All 32 leaf assignments, ordered as a 5-bit counter with dialog as MSB."""
    out = []
    for code in range(32):
        leaves = [(code >> (4 - i)) & 1 for i in range(5)]
        out.append(ActivityVector(*leaves))
    return out


def activity_frames_from_leaves(leaves: np.ndarray) -> np.ndarray:
    """``(n, 5)`` leaf matrix -> ``(n, 7)`` activity matrix in ``BITS`` order."""
    leaves = np.asarray(leaves, dtype=np.int8)
    dialog, nonverbal, music, fg, bg = leaves.T
    return np.stack([dialog | nonverbal, dialog, nonverbal, music, fg | bg, fg, bg], axis=1)


@dataclass
class Projector:
    matrix: np.ndarray
    bias: np.ndarray
    losses: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(BITS):
            raise ValueError(f"projector matrix must be (k, 7), got {self.matrix.shape}")
        if self.bias.shape != (self.matrix.shape[0],):
            raise ValueError(f"bias must have shape ({self.matrix.shape[0]},), got {self.bias.shape}")
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.bias))):
            raise ValueError("projector entries must be finite")

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return np.atleast_2d(vectors).astype(np.float64)
    return np.array([v.bits if isinstance(v, ActivityVector) else v for v in vectors], dtype=np.float64)


def project(p: Projector, a) -> np.ndarray:
    x = a.as_array() if isinstance(a, ActivityVector) else np.asarray(a, dtype=np.float64)
    return p.matrix @ x + p.bias if x.ndim == 1 else x @ p.matrix.T + p.bias


def _logistic_loss(z: np.ndarray, y: np.ndarray) -> float:
    # mean binary cross-entropy with logits
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def train_projector(vectors=None, targets=None, n_iter: int = 2000, seed: int = 0,
                    step=None, k: int = 3) -> Projector:
    """Fit a k x 7 affine map whose outputs predict the top-level category bits.

    Plain gradient descent on the mean logistic loss. The default step is
    ``1 / L`` with ``L`` the Lipschitz constant of the gradient, so the loss
    is non-increasing. ``Projector.losses`` holds the loss before each update
    and after the last one.
    """
    if k != 3:
        raise ValueError(f"k must be 3 (speech, music, sfx), got {k}")
    vectors = enumerate_activity_vectors() if vectors is None else vectors
    X = _as_matrix(vectors)
    Y = X[:, list(CATEGORY_INDEX)] if targets is None else np.asarray(targets, dtype=np.float64)
    rng = CounterRng(seed, "projector")
    W = rng.normal(0.0, 0.1, size=(k, X.shape[1]))
    b = np.zeros(k)
    Xa = np.hstack([X, np.ones((len(X), 1))])
    n_out = Y.size
    if step is None:
        lipschitz = 0.25 * np.linalg.eigvalsh(Xa.T @ Xa).max() / n_out
        step = 1.0 / lipschitz
    losses = []
    for _ in range(n_iter):
        Z = X @ W.T + b
        losses.append(_logistic_loss(Z, Y))
        G = (1.0 / (1.0 + np.exp(-Z)) - Y) / n_out
        W = W - step * G.T @ X
        b = b - step * G.sum(axis=0)
    losses.append(_logistic_loss(X @ W.T + b, Y))
    return Projector(W, b, losses)


def concat_features(features, embeddings) -> np.ndarray:
    """Per-frame ``[features, embedding]`` concatenation."""
    f = features.data if isinstance(features, FeatureSequence) else np.asarray(features, dtype=np.float64)
    e = np.asarray(embeddings, dtype=np.float64)
    if f.ndim == 1 and f.size == 0:
        f = f.reshape(0, 0)
    if e.ndim == 1 and e.size == 0:
        e = e.reshape(0, 0)
    if len(f) != len(e):
        raise ValueError(f"frame count mismatch: {len(f)} feature frames, {len(e)} embeddings")
    if len(f) == 0:
        return np.zeros((0, (f.shape[1] if f.ndim == 2 else 0) + (e.shape[1] if e.ndim == 2 else 0)))
    return np.hstack([f, e])


def is_linearly_separable(points, labels) -> bool:
    """LP feasibility: exists (w, c) with ``y_i (w . x_i + c) >= 1`` for every point."""
    X = np.asarray(points, dtype=np.float64)
    y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
    if np.all(y == y[0]):
        return True
    n, d = X.shape
    # variables: w (d), c (1); constraints: -y_i (x_i . w + c) <= -1
    A = -y[:, None] * np.hstack([X, np.ones((n, 1))])
    res = linprog(np.zeros(d + 1), A_ub=A, b_ub=-np.ones(n), bounds=[(None, None)] * (d + 1),
                  method="highs")
    return res.status == 0


def projection_table(p: Projector, vectors=None) -> list:
    vectors = enumerate_activity_vectors() if vectors is None else vectors
    rows = []
    for v in vectors:
        z = project(p, v)
        rows.append(list(v.bits) + [float(c) for c in z] + [v.speech, v.music, v.sfx])
    return rows


PROJECTION_HEADER = list(BITS) + ["proj_0", "proj_1", "proj_2"] + ["label_speech", "label_music", "label_sfx"]


def projection_csv(p: Projector) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PROJECTION_HEADER)
    for row in projection_table(p):
        writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def read_projection_csv(text: str):
    """Return (bits (n, 7), coords (n, 3), labels (n, 3)) from an export."""
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != PROJECTION_HEADER:
        raise ValueError(f"unexpected header {rows[0]}")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return data[:, :7].astype(int), data[:, 7:10], data[:, 10:13].astype(int)
