"""Exhaustive-enumeration references for tiny HMMs.

These deliberately share no code with the decoders: paths are enumerated
with itertools and scored from the raw parameters, so agreement with
:mod:`scoreseg.acoustic_model` is meaningful evidence.
"""

import itertools

import numpy as np
from scipy.special import logsumexp

from .acoustic_model import ModelSet, UnitHmm


def random_toy_modelset(rng: np.random.Generator, units, max_total_states=4, dim=2, n_mix=None):
    """Random diagonal-Gaussian left-to-right units whose chain has at most ``max_total_states`` states."""
    budget = max_total_states - len(units)
    models = {}
    for u in units:
        extra = rng.integers(0, budget + 1)
        budget -= extra
        S = 1 + extra
        M = n_mix or int(rng.integers(1, 3))
        w = rng.uniform(0.2, 1.0, size=(S, M))
        models[u] = UnitHmm(u, rng.uniform(0.05, 0.95, size=S), w / w.sum(axis=1, keepdims=True),
                            rng.normal(size=(S, M, dim)), rng.uniform(0.3, 2.0, size=(S, M, dim)))
    return ModelSet(models, dim)


def chain_arrays(ms, sequence, X):
    """Per-state self-loop/advance log-probs and emission log-likelihoods, computed directly."""
    stay, adv, B = [], [], []
    for u in sequence:
        m = ms.models[u]
        for s in range(m.n_states):
            stay.append(np.log(m.self_loop[s]))
            adv.append(np.log1p(-m.self_loop[s]))
            comp = []
            for k in range(m.n_mix):
                var = m.variances[s, k]
                diff = X - m.means[s, k]
                comp.append(np.log(m.weights[s, k]) - 0.5 * np.sum(np.log(2 * np.pi * var) + diff ** 2 / var, axis=1))
            B.append(logsumexp(np.stack(comp), axis=0))
    return np.array(stay), np.array(adv), np.stack(B, axis=1)


def enumerate_chain_paths(stay, adv, B):
    """Every legal state path with its log score: start in state 0, end in the last state."""
    T, S = B.shape
    out = []
    for path in itertools.product(range(S), repeat=T):
        if path[0] != 0 or path[-1] != S - 1:
            continue
        score = B[0, 0]
        ok = True
        for t in range(1, T):
            a, b = path[t - 1], path[t]
            if b == a:
                score += stay[a]
            elif b == a + 1:
                score += adv[a]
            else:
                ok = False
                break
            score += B[t, b]
        if ok:
            out.append((path, score))
    return out


def enumerate_loop_paths(ms, units, X, loop_penalty=0.0):
    """Every unit-loop path: uniform entry, exits switch uniformly to another unit."""
    sizes = [ms.models[u].n_states for u in units]
    first = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    last = first + np.array(sizes) - 1
    stay, adv, B = chain_arrays(ms, units, X)
    T, S = B.shape
    U = len(units)
    switch = np.log(1.0 / (U - 1)) + loop_penalty if U > 1 else -np.inf
    out = []
    for path in itertools.product(range(S), repeat=T):
        if path[0] not in first or path[-1] not in last:
            continue
        score = np.log(1.0 / U) + B[0, path[0]]
        for t in range(1, T):
            a, b = path[t - 1], path[t]
            if b == a:
                step = stay[a]
            elif b == a + 1 and b not in first:
                step = adv[a]
            elif a in last and b in first and list(first).index(b) != list(last).index(a):
                step = adv[a] + switch
            else:
                step = -np.inf
            score += step + B[t, b]
        if np.isfinite(score):
            out.append((path, score))
    return out
