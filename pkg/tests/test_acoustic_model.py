import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from scoreseg.oracles import chain_arrays, enumerate_chain_paths, enumerate_loop_paths, random_toy_modelset
from scoreseg.acoustic_model import (
    AlignmentError,
    ModelSet,
    UnitHmm,
    dumps_modelset,
    flat_start_init,
    log_likelihood,
    loads_modelset,
    recognize,
    reestimate,
    viterbi_align,
)
from scoreseg.score import UnitTimeline


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 2), st.integers(2, 6))
def test_viterbi_and_forward_match_enumeration(seed, n_units, T):
    rng = np.random.default_rng(seed)
    units = ["a", "b"][:n_units]
    ms = random_toy_modelset(rng, units)
    X = rng.normal(size=(T, 2))
    S = sum(ms.models[u].n_states for u in units)
    if T < S:
        with pytest.raises(AlignmentError, match="minimum duration"):
            viterbi_align(ms, X, units)
        return
    paths = enumerate_chain_paths(*chain_arrays(ms, units, X))
    best = max(s for _, s in paths)
    ali = viterbi_align(ms, X, units)
    assert abs(ali.log_likelihood - best) < 1e-9
    assert abs(log_likelihood(ms, X, units) - logsumexp([s for _, s in paths])) < 1e-9
    # the returned path attains the best score
    assert any(tuple(ali.states) == p and abs(s - best) < 1e-9 for p, s in paths)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.floats(-3.0, 1.0))
def test_recognition_matches_loop_enumeration(seed, T, penalty):
    rng = np.random.default_rng(seed)
    units = ["a", "b", "c"][: int(rng.integers(2, 4))]
    ms = random_toy_modelset(rng, units, max_total_states=4)
    X = rng.normal(size=(T, 2))
    if T < min(m.n_states for m in ms.models.values()):
        with pytest.raises(AlignmentError):
            recognize(ms, X, penalty)
        return
    paths = enumerate_loop_paths(ms, units, X, penalty)
    best = max(s for _, s in paths)
    ali = recognize(ms, X, penalty)
    assert abs(ali.log_likelihood - best) < 1e-9


def test_viterbi_tie_prefers_lower_predecessor():
    # identical emissions and p = 0.5 everywhere: all paths tie, so the latest advance wins
    m = UnitHmm("a", [0.5, 0.5], [[1.0], [1.0]], np.zeros((2, 1, 1)), np.ones((2, 1, 1)))
    ali = viterbi_align(ModelSet({"a": m}, 1), np.zeros((4, 1)), ["a"])
    assert ali.states.tolist() == [0, 0, 0, 1]


def test_repeated_unit_and_missing_model_rejected():
    ms = random_toy_modelset(np.random.default_rng(0), ["a"], 2)
    with pytest.raises(AlignmentError, match="back to back"):
        viterbi_align(ms, np.zeros((6, 2)), ["a", "a"])
    with pytest.raises(AlignmentError, match="lacks units"):
        viterbi_align(ms, np.zeros((6, 2)), ["a", "z"])


def test_flat_start_four_frame_fixture():
    X = np.array([[0.0], [2.0], [10.0], [14.0]])
    tl = UnitTimeline([("a", 0, 4)])
    ms = flat_start_init([(X, tl)], n_states=2, units=["a"])
    m = ms.models["a"]
    assert m.means[:, 0, 0].tolist() == [1.0, 12.0]
    assert m.variances[:, 0, 0].tolist() == [1.0, 4.0]
    # two frames per state on average -> self-loop 1 - 1/2
    assert m.self_loop.tolist() == [0.5, 0.5]


def test_flat_start_mixture_split():
    X = np.array([[0.0], [2.0], [10.0], [14.0]])
    ms = flat_start_init([(X, UnitTimeline([("a", 0, 4)]))], n_states=1, n_mix=2, units=["a"])
    m = ms.models["a"]
    sd = np.sqrt(np.var(X))
    assert m.weights[0].tolist() == [0.5, 0.5]
    assert np.allclose(sorted(m.means[0, :, 0]), [6.5 - 0.2 * sd, 6.5 + 0.2 * sd])


def test_single_state_update_is_closed_form():
    rng = np.random.default_rng(1)
    X = rng.normal(3.0, 2.0, size=(50, 2))
    tl = UnitTimeline([("a", 0, 50)])
    ms = flat_start_init([(X, tl)], n_states=1, units=["a"])
    res = reestimate(ms, [(X, tl)], n_iter=1)
    m = res.models.models["a"]
    assert np.allclose(m.means[0, 0], X.mean(axis=0))
    assert np.allclose(m.variances[0, 0], np.maximum(X.var(axis=0), ms.var_floor))


def test_baum_welch_means_match_path_posteriors():
    rng = np.random.default_rng(5)
    ms = random_toy_modelset(rng, ["a", "b"], 3, n_mix=1)
    ms.var_floor = np.zeros(2)
    X = rng.normal(size=(5, 2))
    seq = ["a", "b"]
    paths = enumerate_chain_paths(*chain_arrays(ms, seq, X))
    logw = np.array([s for _, s in paths])
    w = np.exp(logw - logsumexp(logw))
    S = sum(ms.models[u].n_states for u in seq)
    occ = np.zeros(S)
    sx = np.zeros((S, 2))
    for (path, _), p in zip(paths, w):
        for t, s in enumerate(path):
            occ[s] += p
            sx[s] += p * X[t]
    res = reestimate(ms, [(X, UnitTimeline([("a", 0, 2), ("b", 2, 5)]))], n_iter=1)
    got = np.concatenate([res.models.models[u].means[:, 0, :] for u in seq])
    assert np.allclose(got, sx / occ[:, None], atol=1e-9)


@pytest.mark.parametrize("mode", ["baum_welch", "viterbi"])
def test_training_monotone_on_small_corpus(mode):
    rng = np.random.default_rng(2)
    corpus = []
    for _ in range(4):
        lens = rng.integers(5, 15, size=3)
        labels = ["a"] * lens[0] + ["b"] * lens[1] + ["a"] * lens[2]
        means = {"a": 0.0, "b": 3.0}
        X = np.array([[means[u] + rng.normal(), rng.normal()] for u in labels])
        corpus.append((X, UnitTimeline.from_labels(labels)))
    ms = flat_start_init(corpus, 2, 2, units=["a", "b"])
    hist = reestimate(ms, corpus, mode=mode, n_iter=6).log_likelihoods
    assert all(b >= a - 1e-6 for a, b in zip(hist, hist[1:]))


def test_jobs_do_not_change_results():
    rng = np.random.default_rng(3)
    corpus = [(rng.normal(size=(12, 2)), UnitTimeline([("a", 0, 6), ("b", 6, 12)])) for _ in range(3)]
    ms = flat_start_init(corpus, 2, 1, units=["a", "b"])
    one = reestimate(ms, corpus, n_iter=2, jobs=1)
    two = reestimate(ms, corpus, n_iter=2, jobs=2)
    assert dumps_modelset(one.models) == dumps_modelset(two.models)


def test_modelset_serialization_round_trip():
    ms = random_toy_modelset(np.random.default_rng(4), ["a", "b"])
    text = dumps_modelset(ms)
    assert dumps_modelset(loads_modelset(text)) == text
    with pytest.raises(ValueError, match="schema"):
        loads_modelset(text.replace("scoreseg.modelset/1", "other/9"))


def test_variance_floor_respected():
    X = np.zeros((10, 2))
    X[:, 1] = np.arange(10)
    ms = flat_start_init([(X, UnitTimeline([("a", 0, 10)]))], 1, units=["a"])
    res = reestimate(ms, [(X, UnitTimeline([("a", 0, 10)]))], n_iter=2).models
    res.check()
    assert np.all(res.models["a"].variances >= res.var_floor)
