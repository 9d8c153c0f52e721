import json
import math

import numpy as np
import pytest

import oracles
from cellws.metrics import (
    EvalReport,
    det_measure,
    evaluate_frames,
    jaccard,
    match_frame,
    op_csb,
    seg_measure,
)


def block_labels(blocks, shape=(20, 40)):
    """Lay out labeled rectangles: blocks = [(label, y0, y1, x0, x1), ...]."""
    out = np.zeros(shape, np.int32)
    for lab, y0, y1, x0, x1 in blocks:
        out[y0:y1, x0:x1] = lab
    return out


def ten_blocks(shape=(22, 52)):
    blocks = []
    lab = 1
    for row in range(2):
        for col in range(5):
            y0 = 2 + row * 10
            x0 = 2 + col * 10
            blocks.append((lab, y0, y0 + 6, x0, x0 + 6))
            lab += 1
    return block_labels(blocks, shape)


def random_label_pair(gen, side=18):
    refs = np.zeros((side, side), np.int32)
    for lab in range(1, gen.integers(2, 5)):
        cy, cx = gen.integers(2, side - 2, 2)
        refs[cy - 2 : cy + 2, cx - 2 : cx + 2] = lab
    segs = refs.copy()
    # randomly erode, shift, merge or drop segments
    for lab in np.unique(segs):
        if lab == 0:
            continue
        roll = gen.random()
        if roll < 0.2:
            segs[segs == lab] = 0
        elif roll < 0.4:
            segs[segs == lab] = max(1, lab - 1)
    noise = gen.random((side, side)) < 0.03
    segs[noise] = gen.integers(0, segs.max() + 2)
    return refs, segs


class TestJaccard:
    def test_identical(self):
        r = np.zeros((8, 8), bool)
        r[2:6, 2:6] = True
        assert jaccard(r, r) == 1.0

    def test_disjoint(self):
        r = np.zeros((8, 8), bool)
        r[:2] = True
        s = np.zeros((8, 8), bool)
        s[6:] = True
        assert jaccard(r, s) == 0.0

    def test_sixty_of_hundred(self):
        r = np.zeros((16, 16), bool)
        r[0:10, 0:10] = True  # |R| = 100
        s = np.zeros((16, 16), bool)
        s[0:6, 0:10] = True  # 60 inside R
        s[10:12, 0:10] = True  # 20 outside
        assert s.sum() == 80
        assert jaccard(r, s) == 0.5

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            jaccard(np.zeros((4, 4), bool), np.ones((4, 4), bool))

    def test_empty_segment_scores_zero(self):
        r = np.zeros((4, 4), bool)
        r[1:3, 1:3] = True
        assert jaccard(r, np.zeros((4, 4), bool)) == 0.0


class TestSegMeasure:
    def test_perfect(self):
        refs = ten_blocks()
        score, detail = seg_measure(refs, refs.copy())
        assert score == 1.0
        assert all(d["jaccard"] == 1.0 for d in detail)

    def test_one_of_two_missed(self):
        refs = block_labels([(1, 0, 4, 0, 4), (2, 0, 4, 10, 14)])
        segs = block_labels([(7, 0, 4, 0, 4)])
        score, detail = seg_measure(refs, segs)
        assert score == 0.5
        assert {d["ref"]: d["jaccard"] for d in detail} == {1: 1.0, 2: 0.0}

    def test_single_region_partial_overlap(self):
        refs = np.zeros((16, 16), np.int32)
        refs[0:10, 0:10] = 1
        segs = np.zeros((16, 16), np.int32)
        segs[0:6, 0:10] = 3
        segs[10:12, 0:10] = 3
        score, _ = seg_measure(refs, segs)
        assert score == 0.5

    def test_exact_half_is_not_a_match(self):
        refs = np.array([[1, 1]], np.int32)
        segs = np.array([[5, 0]], np.int32)
        score, _ = seg_measure(refs, segs)
        assert score == 0.0

    def test_just_over_half_matches(self):
        refs = np.array([[1, 1, 1]], np.int32)
        segs = np.array([[4, 4, 0]], np.int32)
        score, _ = seg_measure(refs, segs)
        assert score == pytest.approx(2.0 / 3.0)

    def test_relabel_invariance(self, rng):
        refs, segs = random_label_pair(np.random.default_rng(3))
        base, _ = seg_measure(refs, segs)
        perm_refs = np.where(refs > 0, refs + 17, 0)
        perm_segs = np.where(segs > 0, (segs * 7) % 91 + 1, 0)
        score, _ = seg_measure(perm_refs, perm_segs)
        assert score == pytest.approx(base, rel=1e-12)

    def test_matches_brute(self):
        gen = np.random.default_rng(11)
        for _ in range(10):
            refs, segs = random_label_pair(gen)
            got, detail = seg_measure(refs, segs)
            want, per_region = oracles.seg_brute(refs, segs)
            assert got == pytest.approx(want, rel=1e-12)
            assert [d["jaccard"] for d in detail] == pytest.approx(per_region)

    def test_no_regions_rejected(self):
        with pytest.raises(ValueError):
            seg_measure(np.zeros((4, 4), np.int32), np.zeros((4, 4), np.int32))


class TestDetMeasure:
    def test_perfect(self):
        refs = ten_blocks()
        det, events = det_measure(refs, refs.copy())
        assert det == 1.0
        assert (events.missed_refs, events.spurious_segs, events.needed_splits) == (0, 0, 0)

    def test_one_miss_in_ten(self):
        refs = ten_blocks()
        segs = np.where(refs == 10, 0, refs)
        det, events = det_measure(refs, segs)
        assert det == 0.9
        assert events.missed_refs == 1 and events.cost() == 10

    def test_one_spurious_in_ten(self):
        refs = ten_blocks()
        segs = refs.copy()
        segs[18:21, 44:50] = 99
        det, events = det_measure(refs, segs)
        assert det == 0.99
        assert events.spurious_segs == 1 and events.cost() == 1

    def test_merge_costs_split_penalty(self):
        refs = block_labels([(1, 0, 4, 0, 4), (2, 0, 4, 4, 8)])
        segs = block_labels([(9, 0, 4, 0, 8)])
        det, events = det_measure(refs, segs)
        assert events.needed_splits == 1 and events.cost() == 5
        assert det == 1.0 - 5.0 / 20.0

    def test_floor_at_zero(self):
        refs = block_labels([(1, 0, 2, 0, 2)], shape=(30, 30))
        segs = np.zeros((30, 30), np.int32)
        lab = 1
        for y in range(0, 30, 6):
            for x in range(6, 30, 6):
                segs[y + 4, x + 4] = lab
                lab += 1
        det, events = det_measure(refs, segs)
        assert events.cost() > 10
        assert det == 0.0

    def test_each_deletion_costs_ten(self):
        refs = ten_blocks()
        segs = refs.copy()
        costs = []
        for lab in (1, 2, 3):
            segs = np.where(segs == lab, 0, segs)
            _, events = det_measure(refs, segs)
            costs.append(events.cost())
        assert costs == [10, 20, 30]

    def test_matches_brute(self):
        gen = np.random.default_rng(23)
        for _ in range(12):
            refs, segs = random_label_pair(gen)
            det, events = det_measure(refs, segs)
            fn, fp, ns = oracles.det_events_brute(refs, segs)
            assert (events.missed_refs, events.spurious_segs, events.needed_splits) == (fn, fp, ns)
            assert det == pytest.approx(oracles.det_brute(refs, segs), rel=1e-12)

    def test_relabel_invariance(self):
        refs, segs = random_label_pair(np.random.default_rng(4))
        base, _ = det_measure(refs, segs)
        det, _ = det_measure(np.where(refs > 0, refs + 31, 0), np.where(segs > 0, segs * 3, 0))
        assert det == base

    def test_no_references_rejected(self):
        with pytest.raises(ValueError):
            det_measure(np.zeros((4, 4), np.int32), np.ones((4, 4), np.int32))


class TestMatchTable:
    def test_each_reference_matches_at_most_once(self):
        gen = np.random.default_rng(8)
        for _ in range(10):
            refs, segs = random_label_pair(gen)
            m = match_frame(refs, segs)
            assert m.ref_match.shape == m.ref_ids.shape
            assert (m.ref_match < len(m.seg_ids)).all()
            matched = int((m.ref_match >= 0).sum())
            assert int(m.seg_match_counts.sum()) == matched


class TestOpCsb:
    def test_mean(self):
        assert op_csb(1.0, 1.0) == 1.0
        assert op_csb(0.863, 0.961) == pytest.approx(0.912, abs=5e-4)
        assert op_csb(0.715, 0.967) == pytest.approx(0.841, abs=5e-4)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            op_csb(1.2, 0.5)
        with pytest.raises(ValueError):
            op_csb(0.5, -0.1)


class TestEvaluateFrames:
    def test_seg_pools_regions_not_frames(self):
        refs_a = block_labels([(1, 0, 4, 0, 4), (2, 0, 4, 10, 14)])
        segs_a = block_labels([(1, 0, 4, 0, 4), (2, 0, 4, 10, 13)])  # J = 1 and 0.75
        refs_b = block_labels([(1, 2, 8, 2, 8)])
        segs_b = block_labels([(1, 2, 8, 2, 7)])
        j_b = jaccard(refs_b == 1, segs_b == 1)
        report = evaluate_frames([(refs_a, segs_a), (refs_b, segs_b)])
        pooled = (1.0 + 0.75 + j_b) / 3.0
        per_frame = ((1.0 + 0.75) / 2.0 + j_b) / 2.0
        assert report.seg == pytest.approx(pooled, rel=1e-12)
        assert abs(report.seg - per_frame) > 1e-3
        assert report.n_refs == 3 and report.n_frames == 2

    def test_det_floors_once_after_summing(self):
        refs_a = block_labels([(1, 0, 2, 0, 2)], shape=(30, 30))
        segs_a = np.zeros((30, 30), np.int32)
        lab = 1
        for y in range(0, 30, 6):
            for x in range(6, 30, 6):
                segs_a[y + 4, x + 4] = lab
                lab += 1
        refs_b = block_labels([(1, 0, 4, 0, 4)], shape=(30, 30))
        report = evaluate_frames([(refs_a, segs_a), (refs_b, refs_b.copy())])
        _, events_a = det_measure(refs_a, segs_a)
        pooled_cost = events_a.cost()
        assert report.det == max(0.0, 1.0 - pooled_cost / 20.0)

    def test_report_consistency(self):
        refs = ten_blocks()
        segs = np.where(refs == 10, 0, refs)
        report = evaluate_frames([(refs, segs)])
        assert report.op_csb == pytest.approx((report.seg + report.det) / 2.0, rel=1e-12)
        assert len(report.per_region_jaccard) == report.n_refs == 10
        assert report.det_event_counts == {"fn": 1, "fp": 0, "ns": 0}

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            evaluate_frames([])


class TestEvalReport:
    def sample(self):
        refs = ten_blocks()
        segs = np.where(refs == 4, 0, refs)
        return evaluate_frames([(refs, segs)])

    def test_json_roundtrip(self):
        report = self.sample()
        back = EvalReport.from_json(report.to_json())
        assert back == report
        payload = json.loads(report.to_json())
        assert set(payload) >= {"seg", "det", "op_csb", "per_region_jaccard"}

    def test_csv_line_matches_header(self):
        report = self.sample()
        header_cols = EvalReport.CSV_HEADER.split(",")
        line_cols = report.csv_line().split(",")
        assert len(header_cols) == len(line_cols)
        assert math.isclose(float(line_cols[0]), report.seg, rel_tol=1e-5)
        assert int(line_cols[header_cols.index("fn")]) == 1
