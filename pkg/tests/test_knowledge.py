import numpy as np
import pytest
from hypothesis import given, strategies as st

from scoreseg.knowledge import (
    BITS,
    CATEGORY_INDEX,
    ActivityVector,
    Projector,
    activity_frames_from_leaves,
    concat_features,
    enumerate_activity_vectors,
    is_linearly_separable,
    project,
    projection_csv,
    read_projection_csv,
    train_projector,
)


def test_thirty_two_distinct_consistent_vectors():
    vecs = enumerate_activity_vectors()
    assert len(vecs) == 32 == len({v.bits for v in vecs})
    for v in vecs:
        b = dict(zip(BITS, v.bits))
        assert b["speech"] == (b["dialog"] | b["nonverbal"])
        assert b["sfx"] == (b["fg_sfx"] | b["bg_sfx"])


def test_enumeration_order_dialog_is_msb():
    vecs = enumerate_activity_vectors()
    assert vecs[0].bits == (0,) * 7
    assert vecs[16] == ActivityVector(dialog=1)
    assert vecs[1] == ActivityVector(bg_sfx=1)


def test_from_bits_rejects_inconsistent_hierarchy():
    with pytest.raises(ValueError, match="violate"):
        ActivityVector.from_bits([0, 1, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        ActivityVector(dialog=2)


@given(st.lists(st.tuples(*[st.integers(0, 1)] * 5), min_size=1, max_size=20))
def test_frame_expansion_matches_vector_bits(leaves):
    frames = activity_frames_from_leaves(np.array(leaves))
    for row, leaf in zip(frames, leaves):
        assert tuple(row) == ActivityVector(*leaf).bits


def test_zero_projector_maps_everything_to_bias():
    p = Projector(np.zeros((3, 7)), np.array([1.0, 2.0, 3.0]))
    for v in enumerate_activity_vectors():
        assert np.array_equal(project(p, v), [1.0, 2.0, 3.0])


def test_projector_validation():
    with pytest.raises(ValueError):
        Projector(np.zeros((3, 6)), np.zeros(3))
    with pytest.raises(ValueError):
        Projector(np.full((3, 7), np.nan), np.zeros(3))


def test_training_loss_non_increasing_and_separable():
    p = train_projector(n_iter=500, seed=4)
    assert all(b <= a + 1e-12 for a, b in zip(p.losses, p.losses[1:]))
    coords = project(p, np.array([v.bits for v in enumerate_activity_vectors()]))
    labels = np.array([v.bits for v in enumerate_activity_vectors()])[:, list(CATEGORY_INDEX)]
    for j in range(3):
        assert is_linearly_separable(coords, labels[:, j])


def test_separability_oracle_on_xor():
    pts = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    assert not is_linearly_separable(pts, [0, 1, 1, 0])
    assert is_linearly_separable(pts, [0, 0, 1, 1])


def test_concat_features_shapes():
    out = concat_features(np.ones((5, 39)), np.zeros((5, 3)))
    assert out.shape == (5, 42)
    assert concat_features(np.zeros((0, 39)), np.zeros((0, 3))).shape == (0, 42)
    with pytest.raises(ValueError, match="mismatch"):
        concat_features(np.ones((5, 39)), np.zeros((4, 3)))


def test_projection_csv_round_trip():
    p = train_projector(n_iter=50)
    bits, coords, labels = read_projection_csv(projection_csv(p))
    assert bits.shape == (32, 7)
    assert np.array_equal(coords, np.array([project(p, b.astype(float)) for b in bits]))
    assert np.array_equal(labels, bits[:, list(CATEGORY_INDEX)])
