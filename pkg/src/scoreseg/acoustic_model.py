"""Left-to-right GMM-HMM unit models.

Every unit is a chain of emitting states without skips: from state i the
only moves are the self-loop and i -> i+1, so a unit occupies at least
``n_states`` frames. Probabilities are handled in the natural-log domain
throughout. A composed path must start in the first state of its first
unit and end in the last state of its last unit; no exit probability is
charged at the final frame.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dsp import FeatureSequence
from .rng import CounterRng
from .score import UNITS, UnitTimeline

log = logging.getLogger(__name__)

SCHEMA = "scoreseg.modelset/1"
LOG_2PI = np.log(2.0 * np.pi)
SELF_LOOP_RANGE = (1e-4, 1.0 - 1e-4)


class AlignmentError(ValueError):
    pass


def _data(f) -> np.ndarray:
    return f.data if isinstance(f, FeatureSequence) else np.asarray(f, dtype=np.float64)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass
class Gmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def log_likelihood(self, X) -> np.ndarray:
        return logsumexp(_component_loglik(_data(X), self.means, self.variances) + _log(self.weights), axis=1)

    def check(self, var_floor=0.0, tol: float = 1e-9):
        if abs(self.weights.sum() - 1.0) > tol or np.any(self.weights < 0):
            raise ValueError(f"GMM weights not on the simplex: {self.weights}")
        if np.any(self.variances < np.asarray(var_floor) - 1e-15) or np.any(self.variances <= 0):
            raise ValueError("GMM variance below floor")


def _component_loglik(X: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log densities, ``(T, K)`` for ``K`` components."""
    T = X.shape[0]
    out = np.empty((T, means.shape[0]))
    const = -0.5 * (X.shape[1] * LOG_2PI + np.log(variances).sum(axis=1))
    for k in range(means.shape[0]):
        out[:, k] = const[k] - 0.5 * (((X - means[k]) ** 2) / variances[k]).sum(axis=1)
    return out


@dataclass
class UnitHmm:
    unit: str
    self_loop: np.ndarray  # (S,)
    weights: np.ndarray  # (S, M)
    means: np.ndarray  # (S, M, D)
    variances: np.ndarray  # (S, M, D)

    def __post_init__(self):
        self.self_loop = np.asarray(self.self_loop, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        S, M, D = self.means.shape
        if self.self_loop.shape != (S,) or self.weights.shape != (S, M) or self.variances.shape != (S, M, D):
            raise ValueError(f"inconsistent shapes for unit {self.unit!r}")
        if np.any((self.self_loop < 0) | (self.self_loop > 1)):
            raise ValueError("self-loop probabilities must lie in [0, 1]")

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def n_mix(self) -> int:
        return self.means.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    def state_gmm(self, i: int) -> Gmm:
        return Gmm(self.weights[i], self.means[i], self.variances[i])

    def component_loglik(self, X) -> np.ndarray:
        """``(T, S, M)`` log(weight) + log density per state component."""
        S, M, D = self.means.shape
        comp = _component_loglik(_data(X), self.means.reshape(S * M, D), self.variances.reshape(S * M, D))
        return comp.reshape(-1, S, M) + _log(self.weights)[np.newaxis]

    def emission_loglik(self, X) -> np.ndarray:
        return logsumexp(self.component_loglik(X), axis=2)


@dataclass
class ModelSet:
    models: dict
    feature_dim: int
    var_floor: np.ndarray = None

    def __post_init__(self):
        for unit, m in self.models.items():
            if m.dim != self.feature_dim:
                raise ValueError(f"model {unit!r} has dim {m.dim}, expected {self.feature_dim}")
        if self.var_floor is None:
            self.var_floor = np.zeros(self.feature_dim)
        self.var_floor = np.asarray(self.var_floor, dtype=np.float64)

    @property
    def units(self) -> list:
        return list(self.models)

    def require(self, units):
        missing = [u for u in units if u not in self.models]
        if missing:
            raise AlignmentError(f"model set lacks units {missing}; has {self.units}")

    def check(self):
        for unit, m in self.models.items():
            for s in range(m.n_states):
                m.state_gmm(s).check(self.var_floor)


@dataclass
class Alignment:
    timeline: UnitTimeline
    states: np.ndarray  # per-frame index into the composed state space
    log_likelihood: float
    units: list = field(default_factory=list)  # per-frame unit label


# -- composition ------------------------------------------------------------------

@dataclass
class _Chain:
    """Concatenation of unit models in a fixed order."""

    stay: np.ndarray
    adv: np.ndarray
    position: np.ndarray  # state -> index in unit sequence
    local: np.ndarray  # state -> state index within its unit
    sequence: list


def _chain(ms: ModelSet, unit_sequence) -> _Chain:
    ms.require(unit_sequence)
    stay, adv, pos, local = [], [], [], []
    for p, unit in enumerate(unit_sequence):
        m = ms.models[unit]
        stay.append(_log(m.self_loop))
        adv.append(_log(1.0 - m.self_loop))
        pos.append(np.full(m.n_states, p))
        local.append(np.arange(m.n_states))
    return _Chain(np.concatenate(stay), np.concatenate(adv), np.concatenate(pos),
                  np.concatenate(local), list(unit_sequence))


def _chain_emissions(ms: ModelSet, chain: _Chain, X: np.ndarray, with_components: bool = False):
    cache = {}
    for unit in dict.fromkeys(chain.sequence):
        comp = ms.models[unit].component_loglik(X)
        cache[unit] = comp if with_components else logsumexp(comp, axis=2)
    parts = [cache[u] for u in chain.sequence]
    return np.concatenate(parts, axis=1)


def _check_sequence(ms: ModelSet, X: np.ndarray, unit_sequence):
    if len(unit_sequence) == 0:
        raise AlignmentError("empty unit sequence")
    for a, b in zip(unit_sequence, unit_sequence[1:]):
        if a == b:
            raise AlignmentError(f"unit sequence repeats {a!r} back to back")
    ms.require(unit_sequence)
    min_frames = sum(ms.models[u].n_states for u in unit_sequence)
    if X.shape[0] < min_frames:
        raise AlignmentError(f"{X.shape[0]} frames cannot hold the minimum duration {min_frames} "
                             f"of unit sequence {list(unit_sequence)}")
    if X.shape[1] != ms.feature_dim:
        raise AlignmentError(f"features have dim {X.shape[1]}, models expect {ms.feature_dim}")


def _viterbi_chain(stay, adv, B, beam=None):
    """Best path through a skip-free left-to-right chain ending in the last state."""
    T, S = B.shape
    delta = np.full(S, -np.inf)
    delta[0] = B[0, 0]
    from_prev = np.zeros((T, S), dtype=bool)
    adv_score = np.full(S, -np.inf)
    for t in range(1, T):
        stay_score = delta + stay
        adv_score[1:] = delta[:-1] + adv[:-1]
        take = adv_score >= stay_score  # ties go to the lower predecessor, s - 1
        delta = np.where(take, adv_score, stay_score) + B[t]
        from_prev[t] = take
        if beam is not None:
            delta[delta < delta.max() - beam] = -np.inf
    score = delta[S - 1]
    if not np.isfinite(score):
        raise AlignmentError("no feasible path (beam too narrow or durations infeasible)")
    path = np.empty(T, dtype=np.int64)
    s = S - 1
    for t in range(T - 1, -1, -1):
        path[t] = s
        if t and from_prev[t, s]:
            s -= 1
    return float(score), path


def _forward_chain(stay, adv, B):
    T, S = B.shape
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = B[0, 0]
    shifted = np.full(S, -np.inf)
    for t in range(1, T):
        prev = alpha[t - 1]
        shifted[1:] = prev[:-1] + adv[:-1]
        alpha[t] = np.logaddexp(prev + stay, shifted) + B[t]
    return alpha


def _backward_chain(stay, adv, B):
    T, S = B.shape
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = 0.0
    nxt = np.full(S, -np.inf)
    for t in range(T - 2, -1, -1):
        after = B[t + 1] + beta[t + 1]
        nxt[:-1] = adv[:-1] + after[1:]
        beta[t] = np.logaddexp(stay + after, nxt)
    return beta


def _timeline_from_positions(positions, sequence) -> UnitTimeline:
    labels = [sequence[p] for p in positions]
    return UnitTimeline.from_labels(labels)


def viterbi_align(ms: ModelSet, f, unit_sequence, beam=None) -> Alignment:
    """Forced alignment of ``f`` to the given ordered units."""
    X = _data(f)
    unit_sequence = list(unit_sequence)
    _check_sequence(ms, X, unit_sequence)
    chain = _chain(ms, unit_sequence)
    B = _chain_emissions(ms, chain, X)
    score, path = _viterbi_chain(chain.stay, chain.adv, B, beam)
    positions = chain.position[path]
    timeline = _timeline_from_positions(positions, unit_sequence)
    return Alignment(timeline, path, score, [unit_sequence[p] for p in positions])


def log_likelihood(ms: ModelSet, f, unit_sequence) -> float:
    """Forward log-likelihood over all paths through the unit sequence."""
    X = _data(f)
    unit_sequence = list(unit_sequence)
    _check_sequence(ms, X, unit_sequence)
    chain = _chain(ms, unit_sequence)
    alpha = _forward_chain(chain.stay, chain.adv, _chain_emissions(ms, chain, X))
    return float(alpha[-1, -1])


def recognize(ms: ModelSet, f, loop_penalty: float = 0.0, units=None) -> Alignment:
    """Viterbi decoding over a unit loop: any unit may follow any other unit.

    Entry into the loop is uniform over units, each unit exit chooses one of
    the other units uniformly, and ``loop_penalty`` (nats) is added at every
    unit change.
    """
    X = _data(f)
    units = list(units or ms.units)
    ms.require(units)
    if X.shape[0] == 0:
        raise AlignmentError("cannot recognize an empty feature sequence")
    min_states = min(ms.models[u].n_states for u in units)
    if X.shape[0] < min_states:
        raise AlignmentError(f"{X.shape[0]} frames shorter than the shortest unit ({min_states} states)")
    U = len(units)
    chain = _chain(ms, units)
    B = _chain_emissions(ms, chain, X)
    T, S = B.shape
    sizes = [ms.models[u].n_states for u in units]
    first = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    last = first + np.array(sizes) - 1
    is_first = np.zeros(S, dtype=bool)
    is_first[first] = True
    exit_lp = chain.adv[last]
    switch = (np.log(1.0 / (U - 1)) if U > 1 else -np.inf) + loop_penalty
    order = np.argsort(last, kind="stable")

    delta = np.full(S, -np.inf)
    delta[first] = np.log(1.0 / U) + B[0, first]
    pred = np.zeros((T, S), dtype=np.int64)
    state_idx = np.arange(S)
    cand = np.full(S, -np.inf)
    cand_pred = np.zeros(S, dtype=np.int64)
    for t in range(1, T):
        stay_score = delta + chain.stay
        cand[:] = -np.inf
        cand[1:] = delta[:-1] + chain.adv[:-1]
        cand_pred[:] = state_idx - 1
        cand[is_first] = -np.inf
        exits = delta[last] + exit_lp + switch
        for u in range(U):
            best, best_pred = -np.inf, -1
            for v in order:
                if v != u and exits[v] > best:
                    best, best_pred = exits[v], last[v]
            cand[first[u]] = best
            cand_pred[first[u]] = best_pred
        take = (cand > stay_score) | ((cand == stay_score) & (cand_pred < state_idx) & np.isfinite(cand))
        delta = np.where(take, cand, stay_score) + B[t]
        pred[t] = np.where(take, cand_pred, state_idx)
    finals = delta[last]
    k = int(np.argmax(finals))  # first max = lowest state index among ties
    score = float(finals[k])
    path = np.empty(T, dtype=np.int64)
    s = int(last[k])
    for t in range(T - 1, -1, -1):
        path[t] = s
        s = int(pred[t, s])
    unit_of_state = np.repeat(np.arange(U), sizes)
    labels = [units[i] for i in unit_of_state[path]]
    return Alignment(UnitTimeline.from_labels(labels), path, score, labels)


# -- training -----------------------------------------------------------------------

def _fit_gaussian(frames: np.ndarray, floor: np.ndarray):
    mean = frames.mean(axis=0)
    var = np.maximum(frames.var(axis=0), floor)
    return mean, var


def _split_components(weights, means, variances, n_mix, perturb=0.2):
    """Split the heaviest component until there are ``n_mix``."""
    weights, means, variances = list(weights), list(means), list(variances)
    while len(weights) < n_mix:
        k = int(np.argmax(weights))
        offset = perturb * np.sqrt(variances[k])
        w = weights[k] / 2.0
        weights[k] = w
        weights.append(w)
        means.append(means[k] - offset)
        means[k] = means[k] + offset
        variances.append(variances[k].copy())
    return np.array(weights), np.array(means), np.array(variances)


def _corpus_items(corpus):
    for item in corpus:
        f, timeline = item[0], item[1]
        yield _data(f), timeline


def flat_start_init(corpus, n_states: int, n_mix: int = 1, units=UNITS,
                    var_floor_scale: float = 1e-3) -> ModelSet:
    """Models from uniform segmentation of the labeled corpus.

    Each labeled segment is cut into ``n_states`` equal parts; part k of
    every segment of a unit is pooled into that unit's state k.
    """
    items = list(_corpus_items(corpus))
    if not items:
        raise ValueError("empty corpus")
    all_frames = np.concatenate([X for X, _ in items])
    floor = var_floor_scale * all_frames.var(axis=0)
    floor = np.where(floor > 0, floor, var_floor_scale)
    dim = all_frames.shape[1]
    models = {}
    for unit in units:
        pools = [[] for _ in range(n_states)]
        lengths = []
        for X, timeline in items:
            for u, start, end in timeline.segments:
                if u != unit:
                    continue
                end = min(end, len(X))
                length = end - start
                if length <= 0:
                    continue
                lengths.append(length)
                cuts = start + (np.arange(n_states + 1) * length) // n_states
                for k in range(n_states):
                    if cuts[k + 1] > cuts[k]:
                        pools[k].append(X[cuts[k]:cuts[k + 1]])
        if not lengths:
            raise ValueError(f"unit {unit!r} does not appear in any corpus timeline")
        unit_frames = np.concatenate([np.concatenate(p) for p in pools if p])
        weights = np.zeros((n_states, n_mix))
        means = np.zeros((n_states, n_mix, dim))
        variances = np.zeros((n_states, n_mix, dim))
        for k in range(n_states):
            frames = np.concatenate(pools[k]) if pools[k] else unit_frames
            mean, var = _fit_gaussian(frames, floor)
            w, m, v = _split_components([1.0], [mean], [var], n_mix)
            weights[k], means[k], variances[k] = w, m, v
        per_state = np.mean(lengths) / n_states
        p_stay = np.clip(1.0 - 1.0 / per_state, *SELF_LOOP_RANGE) if per_state > 1 else SELF_LOOP_RANGE[0]
        models[unit] = UnitHmm(unit, np.full(n_states, p_stay), weights, means, variances)
    return ModelSet(models, dim, floor)


@dataclass
class _Stats:
    occ: dict
    sx: dict
    sxx: dict
    stay: dict
    adv: dict
    loglik: float = 0.0

    @classmethod
    def zeros(cls, ms: ModelSet):
        stats = cls({}, {}, {}, {}, {})
        for u, m in ms.models.items():
            S, M, D = m.means.shape
            stats.occ[u] = np.zeros((S, M))
            stats.sx[u] = np.zeros((S, M, D))
            stats.sxx[u] = np.zeros((S, M, D))
            stats.stay[u] = np.zeros(S)
            stats.adv[u] = np.zeros(S)
        return stats

    def add(self, other: "_Stats"):
        for u in self.occ:
            self.occ[u] += other.occ[u]
            self.sx[u] += other.sx[u]
            self.sxx[u] += other.sxx[u]
            self.stay[u] += other.stay[u]
            self.adv[u] += other.adv[u]
        self.loglik += other.loglik


def _accumulate(stats: _Stats, ms: ModelSet, chain: _Chain, X: np.ndarray, comp_post: np.ndarray,
                stay_counts: np.ndarray, adv_counts: np.ndarray):
    """Scatter per-chain-state statistics back onto unit models."""
    X2 = X * X
    offset = 0
    for unit in chain.sequence:
        S = ms.models[unit].n_states
        sl = slice(offset, offset + S)
        g = comp_post[:, sl, :]  # (T, S, M)
        stats.occ[unit] += g.sum(axis=0)
        stats.sx[unit] += np.einsum("tsm,td->smd", g, X)
        stats.sxx[unit] += np.einsum("tsm,td->smd", g, X2)
        stats.stay[unit] += stay_counts[sl]
        stats.adv[unit] += adv_counts[sl]
        offset += S


def _clip_stats_baum_welch(ms: ModelSet, X: np.ndarray, sequence) -> _Stats:
    chain = _chain(ms, sequence)
    comp = _chain_emissions(ms, chain, X, with_components=True)  # (T, S, M)
    B = logsumexp(comp, axis=2)
    alpha = _forward_chain(chain.stay, chain.adv, B)
    beta = _backward_chain(chain.stay, chain.adv, B)
    total = alpha[-1, -1]
    if not np.isfinite(total):
        raise AlignmentError("zero likelihood for training clip")
    gamma = alpha + beta - total  # (T, S)
    with np.errstate(invalid="ignore"):
        comp_post = np.exp(gamma[:, :, None] + comp - B[:, :, None])
    comp_post = np.nan_to_num(comp_post, nan=0.0)
    after = B[1:] + beta[1:]
    stay_counts = np.exp(alpha[:-1] + chain.stay + after - total).sum(axis=0)
    adv_counts = np.zeros_like(stay_counts)
    adv_counts[:-1] = np.exp(alpha[:-1, :-1] + chain.adv[:-1] + after[:, 1:] - total).sum(axis=0)
    stats = _Stats.zeros(ms)
    _accumulate(stats, ms, chain, X, comp_post, stay_counts, adv_counts)
    stats.loglik = float(total)
    return stats


def _clip_stats_viterbi(ms: ModelSet, X: np.ndarray, sequence) -> _Stats:
    chain = _chain(ms, sequence)
    comp = _chain_emissions(ms, chain, X, with_components=True)
    B = logsumexp(comp, axis=2)
    score, path = _viterbi_chain(chain.stay, chain.adv, B)
    T, S, M = comp.shape
    comp_post = np.zeros_like(comp)
    t = np.arange(T)
    comp_post[t, path, :] = np.exp(comp[t, path, :] - B[t, path][:, None])
    stay_counts = np.zeros(S)
    adv_counts = np.zeros(S)
    moved = path[1:] != path[:-1]
    np.add.at(stay_counts, path[:-1][~moved], 1.0)
    np.add.at(adv_counts, path[:-1][moved], 1.0)
    stats = _Stats.zeros(ms)
    _accumulate(stats, ms, chain, X, comp_post, stay_counts, adv_counts)
    stats.loglik = score
    return stats


def _clip_stats(args):
    ms, X, sequence, mode = args
    if mode == "baum_welch":
        return _clip_stats_baum_welch(ms, X, sequence)
    return _clip_stats_viterbi(ms, X, sequence)


def _update(ms: ModelSet, stats: _Stats, min_occupancy: float) -> ModelSet:
    floor = ms.var_floor
    models = {}
    for unit, m in ms.models.items():
        occ = stats.occ[unit]
        weights = m.weights.copy()
        means = m.means.copy()
        variances = m.variances.copy()
        self_loop = m.self_loop.copy()
        for s in range(m.n_states):
            state_occ = occ[s].sum()
            if state_occ <= 0:
                continue
            alive = (weights[s] > 0) & (occ[s] >= min_occupancy)
            starved = (weights[s] > 0) & ~alive
            if starved.any():
                log.info("unit %s state %d: dropping %d starved component(s)", unit, s, int(starved.sum()))
            if not alive.any():
                continue
            w = np.where(alive, occ[s], 0.0)
            weights[s] = w / w.sum()
            for k in np.flatnonzero(alive):
                mu = stats.sx[unit][s, k] / occ[s, k]
                var = stats.sxx[unit][s, k] / occ[s, k] - mu * mu
                means[s, k] = mu
                variances[s, k] = np.maximum(var, floor)
            trans = stats.stay[unit][s] + stats.adv[unit][s]
            if trans > 0:
                self_loop[s] = np.clip(stats.stay[unit][s] / trans, *SELF_LOOP_RANGE)
        models[unit] = UnitHmm(unit, self_loop, weights, means, variances)
    return ModelSet(models, ms.feature_dim, floor)


@dataclass
class TrainingResult:
    models: ModelSet
    log_likelihoods: list


def reestimate(ms: ModelSet, corpus, mode: str = "baum_welch", n_iter: int = 5,
               min_occupancy: float = 1e-3, jobs: int = 1) -> TrainingResult:
    """Embedded re-estimation against each clip's labeled unit sequence.

    ``corpus`` holds ``(features, timeline)`` pairs. ``log_likelihoods[i]``
    is the corpus total under the parameters entering iteration i (forward
    likelihood for Baum-Welch, best-path score for Viterbi training).
    Statistics are reduced in corpus order regardless of ``jobs``.
    """
    if mode not in ("baum_welch", "viterbi"):
        raise ValueError(f"mode must be 'baum_welch' or 'viterbi', got {mode!r}")
    items = [(X, timeline.units) for X, timeline in _corpus_items(corpus)]
    history = []
    for it in range(n_iter):
        args = [(ms, X, seq, mode) for X, seq in items]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                per_clip = list(pool.map(_clip_stats, args))
        else:
            per_clip = [_clip_stats(a) for a in args]
        total = _Stats.zeros(ms)
        for st in per_clip:
            total.add(st)
        history.append(total.loglik)
        log.debug("iteration %d (%s): log-likelihood %.6f", it, mode, total.loglik)
        ms = _update(ms, total, min_occupancy)
    return TrainingResult(ms, history)


# -- serialization --------------------------------------------------------------------

def modelset_to_dict(ms: ModelSet) -> dict:
    return {
        "schema": SCHEMA,
        "feature_dim": ms.feature_dim,
        "var_floor": ms.var_floor.tolist(),
        "units": {
            unit: {
                "self_loop": m.self_loop.tolist(),
                "weights": m.weights.tolist(),
                "means": m.means.tolist(),
                "variances": m.variances.tolist(),
            }
            for unit, m in ms.models.items()
        },
    }


def modelset_from_dict(doc: dict) -> ModelSet:
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {doc.get('schema')!r}, expected {SCHEMA!r}")
    models = {unit: UnitHmm(unit, d["self_loop"], d["weights"], d["means"], d["variances"])
              for unit, d in doc["units"].items()}
    return ModelSet(models, int(doc["feature_dim"]), np.array(doc["var_floor"]))


def dumps_modelset(ms: ModelSet) -> str:
    """Canonical JSON: sorted keys, no whitespace, floats in shortest round-trip form."""
    return json.dumps(modelset_to_dict(ms), sort_keys=True, separators=(",", ":"))


def loads_modelset(text: str) -> ModelSet:
    return modelset_from_dict(json.loads(text))


def random_init(corpus, n_states: int, n_mix: int, units, seed: int, var_floor_scale: float = 1e-3) -> ModelSet:
    """Random starting point for EM: means drawn from corpus frames, global variances, random loops."""
    frames = np.concatenate([X for X, _ in _corpus_items(corpus)])
    floor = var_floor_scale * frames.var(axis=0)
    floor = np.where(floor > 0, floor, var_floor_scale)
    var = np.maximum(frames.var(axis=0), floor)
    rng = CounterRng(seed, "random_init")
    models = {}
    for unit in units:
        r = rng.child(unit)
        idx = r.integers(0, len(frames), size=n_states * n_mix)
        means = frames[idx].reshape(n_states, n_mix, -1)
        w = r.uniform(0.5, 1.5, size=(n_states, n_mix))
        models[unit] = UnitHmm(unit, r.uniform(0.5, 0.99, size=n_states), w / w.sum(axis=1, keepdims=True),
                               means, np.broadcast_to(var, means.shape).copy())
    return ModelSet(models, frames.shape[1], floor)
