import numpy as np
import pytest
from hypothesis import given, strategies as st

from scoreseg.score import UNITS, UnitTimeline
from scoreseg.segmenter import (
    BoundaryReport,
    ConfusionMatrix,
    boundary_mae,
    boundary_table_csv,
    confusion_matrix,
    extract_segments,
    mixture_adjacent,
    parse_boundary_table_csv,
    silence_adjacent,
)


def test_extract_segments_threshold_and_samples():
    tl = UnitTimeline([("silence", 0, 100), ("piano", 100, 450), ("bass", 450, 749), ("mixture", 749, 1100)])
    segs = extract_segments(tl, 300, 44100, clip_id="c")
    assert [(s.unit, s.start_frame, s.end_frame) for s in segs] == [("piano", 100, 450), ("mixture", 749, 1100)]
    assert segs[0].start_sample == 44100 and segs[0].end_sample == 198450
    assert segs[0].segment_id == "c:piano:100-450"
    assert segs[0].duration_s == pytest.approx(3.5)


def test_boundary_mae_by_hand():
    ref = UnitTimeline([("silence", 0, 10), ("piano", 10, 30), ("mixture", 30, 50)])
    hyp = UnitTimeline([("silence", 0, 12), ("piano", 12, 25), ("mixture", 25, 50)])
    rep = boundary_mae(hyp, ref)
    assert rep.cell_mae("silence", "piano") == 2
    assert rep.cell_mae("piano", "mixture") == 5
    assert rep.overall_mae == 3.5


def test_boundary_mae_rejects_different_unit_sequences():
    a = UnitTimeline([("silence", 0, 10), ("piano", 10, 30)])
    b = UnitTimeline([("silence", 0, 10), ("bass", 10, 30)])
    with pytest.raises(ValueError, match="confusion_matrix"):
        boundary_mae(a, b)


def test_adjacency_groups():
    assert silence_adjacent("silence", "mixture")
    assert not mixture_adjacent("silence", "mixture")
    assert mixture_adjacent("piano", "mixture")
    assert not mixture_adjacent("piano", "bass")


def test_boundary_table_round_trip():
    rep = BoundaryReport.from_cells({("silence", "piano"): 1.5, ("mixture", "bass"): 20.25})
    cells = parse_boundary_table_csv(boundary_table_csv(rep))
    assert cells == {("silence", "piano"): 1.5, ("mixture", "bass"): 20.25}


def test_group_mae_is_count_weighted():
    rep = BoundaryReport({("piano", "mixture"): 3, ("mixture", "bass"): 1},
                         {("piano", "mixture"): 30.0, ("mixture", "bass"): 2.0})
    assert rep.group_mae(mixture_adjacent) == 8.0
    assert np.isnan(rep.group_mae(silence_adjacent))


def test_confusion_majority_vote():
    ref = UnitTimeline([("silence", 0, 10), ("piano", 10, 30), ("mixture", 30, 40)])
    rec = UnitTimeline([("silence", 0, 9), ("mixture", 9, 25), ("piano", 25, 40)])
    cm = confusion_matrix(rec, ref)
    idx = {u: i for i, u in enumerate(UNITS)}
    # silence: 9 of 10 frames silence; piano: 15 mixture vs 5 piano; mixture: all piano
    assert cm.counts[idx["silence"], idx["silence"]] == 1
    assert cm.counts[idx["mixture"], idx["piano"]] == 1
    assert cm.counts[idx["piano"], idx["mixture"]] == 1
    assert cm.accuracy == pytest.approx(1 / 3)
    assert cm.pair_confusions()[frozenset(("piano", "mixture"))] == 2


def test_published_confusion_counts():
    # published recognition counts; rows recognized, columns reference (silence, piano, mixture, bass)
    counts = np.array([[2000, 3, 1, 16], [0, 1742, 86, 14], [0, 247, 1834, 23], [0, 1, 79, 1947]])
    order = ["silence", "piano", "mixture", "bass"]
    perm = [order.index(u) for u in UNITS]
    cm = ConfusionMatrix(counts[np.ix_(perm, perm)])
    assert cm.accuracy == pytest.approx(7523 / 7993)
    assert round(cm.accuracy, 2) == 0.94
    pairs = cm.pair_confusions()
    assert pairs[frozenset(("piano", "mixture"))] == 333
    assert pairs[frozenset(("piano", "mixture"))] == max(pairs.values())


labels = st.lists(st.sampled_from(UNITS), min_size=1, max_size=60)


@given(labels)
def test_perfect_recognition_is_diagonal(lab):
    tl = UnitTimeline.from_labels(lab)
    cm = confusion_matrix(tl, tl)
    assert cm.accuracy == 1.0
    assert cm.counts.sum() == len(tl.segments)


@given(labels, st.randoms(use_true_random=False))
def test_frame_level_counts_every_frame(lab, rnd):
    ref = UnitTimeline.from_labels(lab)
    rec = UnitTimeline.from_labels([rnd.choice(UNITS) for _ in lab])
    assert confusion_matrix(rec, ref, frame_level=True).counts.sum() == len(lab)


@given(labels, st.integers(0, 5))
def test_boundary_shift_oracle(lab, shift):
    ref = UnitTimeline.from_labels(lab)
    # shifting every interior boundary later by up to `shift` frames, where room allows
    segs = [list(s) for s in ref.segments]
    moved = []
    for i in range(len(segs) - 1):
        room = segs[i + 1][2] - segs[i + 1][1] - 1
        d = min(shift, room)
        segs[i][2] += d
        segs[i + 1][1] += d
        moved.append(d)
    hyp = UnitTimeline([tuple(s) for s in segs])
    rep = boundary_mae(hyp, ref)
    expected = float(np.mean(moved)) if moved else 0.0
    assert rep.overall_mae == pytest.approx(expected)
