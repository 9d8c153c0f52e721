import logging

import numpy as np
import pytest

import oracles
from cellws import raster
from cellws.markerseg import (
    PipelineParams,
    calibrate_foreground_threshold,
    cell_region_mask,
    distance_baseline,
    extract_markers,
    marker_filter_diameter,
    remove_border_cells,
    segment_image,
    segmentation_function,
    watershed,
)
from cellws.morphology import disk_footprint
from cellws.oracle import OracleSpec, oracle_predictions


def gaussian_blob(shape, cy, cx, peak, sigma):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return peak * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))


def random_fixture(gen, side=12):
    relief = gen.random((side, side)).astype(np.float32)
    region = gen.random((side, side)) < 0.85
    markers = np.zeros((side, side), np.int32)
    n = gen.integers(1, 5)
    placed = 0
    while placed < n:
        y, x = gen.integers(0, side, 2)
        if markers[y, x] == 0:
            placed += 1
            markers[y, x] = placed
    return markers, relief, region


class TestPipelineParams:
    def test_derived_filter_diameter(self):
        p = PipelineParams(contrast=5, foreground_threshold=216,
                           size_ratio=0.8, min_cell_diameter=60.0)
        assert p.filter_diameter() == 48.0

    def test_explicit_diameter_wins(self):
        p = PipelineParams(contrast=5, foreground_threshold=216,
                           size_ratio=0.8, min_cell_diameter=60.0,
                           marker_diameter=7.0)
        assert p.filter_diameter() == 7.0

    def test_sub_pixel_filter_rejected(self):
        p = PipelineParams(contrast=5, foreground_threshold=216,
                           size_ratio=0.05, min_cell_diameter=10.0)
        with pytest.raises(ValueError):
            p.filter_diameter()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"marker_threshold": 0.0},
            {"marker_threshold": 1.0},
            {"contrast": 0},
            {"contrast": 256},
            {"contrast": 2.5},
            {"foreground_threshold": -1},
            {"foreground_threshold": 256},
            {"size_ratio": 1.5},
            {"connectivity": 5},
        ],
    )
    def test_invalid_fields_rejected(self, kwargs):
        base = dict(contrast=5, foreground_threshold=216, marker_diameter=7.0)
        base.update(kwargs)
        with pytest.raises(ValueError):
            PipelineParams(**base)

    def test_needs_some_diameter_source(self):
        with pytest.raises(ValueError):
            PipelineParams(contrast=5, foreground_threshold=216)
        with pytest.raises(ValueError):
            PipelineParams(contrast=5, foreground_threshold=216, size_ratio=0.8)


class TestMarkerFilterDiameter:
    def test_table_values(self):
        assert marker_filter_diameter([60.0, 72.0, 65.0], 0.8) == 48.0
        assert marker_filter_diameter([10.0], 1.0) == 10.0
        assert marker_filter_diameter([6.0, 9.0], 0.5) == 3.0

    def test_accepts_masks(self):
        cells = [disk_footprint(9), disk_footprint(11)]
        assert marker_filter_diameter(cells, 1.0) == 9.0

    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError):
            marker_filter_diameter([], 0.8)
        with pytest.raises(ValueError):
            marker_filter_diameter([10.0], 0.0)
        with pytest.raises(ValueError):
            marker_filter_diameter([10.0], 1.2)


class TestExtractMarkers:
    def test_blank_prediction(self):
        assert extract_markers(np.zeros((32, 32), np.float32), 3.0, 5).max() == 0

    def test_two_blobs_two_markers(self):
        a = gaussian_blob((64, 64), 20, 20, 0.95, 6.0)
        b = gaussian_blob((64, 64), 44, 44, 0.95, 6.0)
        pred = np.maximum(a, b).astype(np.float32)
        assert pred[32, 32] < 0.3  # valley between the blobs
        markers = extract_markers(pred, 7.0, 5, 0.6)
        assert markers.max() == 2
        for cy, cx in ((20, 20), (44, 44)):
            ids = np.unique(markers[cy - 3 : cy + 4, cx - 3 : cx + 4])
            assert len(ids[ids > 0]) == 1

    def test_sub_threshold_blob_removed(self):
        pred = gaussian_blob((64, 64), 32, 32, 0.5, 6.0).astype(np.float32)
        assert extract_markers(pred, 7.0, 5, 0.6).max() == 0

    def test_count_non_increasing_in_each_knob(self, rng):
        pred = np.zeros((64, 64), np.float32)
        for _ in range(6):
            cy, cx = rng.integers(8, 56, 2)
            peak = float(rng.uniform(0.5, 0.98))
            sigma = float(rng.uniform(2.0, 5.0))
            pred = np.maximum(pred, gaussian_blob((64, 64), cy, cx, peak, sigma))
        pred = pred.astype(np.float32)

        counts = [extract_markers(pred, d, 5, 0.6).max() for d in (1, 3, 5, 9)]
        assert counts == sorted(counts, reverse=True)
        counts = [extract_markers(pred, 3, 5, t).max() for t in (0.3, 0.5, 0.7, 0.9)]
        assert counts == sorted(counts, reverse=True)
        counts = [extract_markers(pred, 3, h, 0.6).max() for h in (1, 5, 20, 60)]
        assert counts == sorted(counts, reverse=True)

    def test_rejects_thin_filter(self):
        with pytest.raises(ValueError):
            extract_markers(np.zeros((8, 8), np.float32), 0.5, 5)


class TestSegmentationFunction:
    def test_inversion(self):
        fg = np.full((4, 4), 1.0, np.float32)
        assert not segmentation_function(fg).any()
        fg = np.full((4, 4), 0.8, np.float32)
        assert segmentation_function(fg) == pytest.approx(0.2, abs=1e-7)

    def test_involution(self, rng):
        fg = rng.random((16, 16)).astype(np.float32)
        back = segmentation_function(segmentation_function(fg))
        assert np.abs(back - fg).max() <= 1.2e-7
        dyadic = (rng.integers(0, 257, (16, 16)) / 256.0).astype(np.float32)
        assert np.array_equal(
            segmentation_function(segmentation_function(dyadic)), dyadic
        )


class TestCellRegionMask:
    def test_zero_threshold_everything(self):
        fg = np.random.default_rng(0).random((8, 8)).astype(np.float32)
        assert cell_region_mask(fg, 0).all()

    def test_half_probability_below_psc_threshold(self):
        fg = np.full((8, 8), 0.5, np.float32)
        assert not cell_region_mask(fg, 156).any()

    def test_checkerboard_at_dic_threshold(self):
        fg = np.where(np.indices((8, 8)).sum(0) % 2 == 0, 0.9, 0.1).astype(np.float32)
        mask = cell_region_mask(fg, 216)
        assert np.array_equal(mask, fg == np.float32(0.9))

    @pytest.mark.parametrize("bad", [-1, 256, 2.5])
    def test_rejects_bad_threshold(self, bad):
        with pytest.raises(ValueError):
            cell_region_mask(np.zeros((4, 4), np.float32), bad)


class TestCalibrate:
    def test_exact_prediction_tie_rule(self):
        y = np.zeros((16, 16), bool)
        y[4:12, 4:12] = True
        t, curve = calibrate_foreground_threshold([(y.astype(np.float32), y)])
        assert t == 1
        assert curve[1] == 1.0 and curve[255] == 1.0
        assert curve[0] < 1.0

    def test_soft_background_lifts_threshold(self):
        y = np.zeros((16, 16), bool)
        y[4:12, 4:12] = True
        pred = (0.9 * y + 0.1).astype(np.float32)
        t, curve = calibrate_foreground_threshold([(pred, y)])
        assert t == 27
        assert curve[27] == 1.0 and curve[26] < 1.0

    def test_matches_exhaustive_sweep(self, rng):
        pairs = []
        for _ in range(3):
            y = rng.random((10, 10)) < 0.3
            pred = np.clip(
                y.astype(np.float64) * rng.uniform(0.6, 1.0)
                + rng.random((10, 10)) * 0.3,
                0,
                1,
            ).astype(np.float32)
            pairs.append((pred, y))
        t, curve = calibrate_foreground_threshold(pairs)
        bt, bcurve = oracles.calibrate_brute(pairs)
        assert t == bt
        assert np.allclose(curve, bcurve, rtol=0, atol=0)

    def test_pools_over_pairs(self):
        # one pair favours t<=128, the other t<=64; pooling decides jointly
        a = np.zeros((8, 8), bool)
        a[:4] = True
        b = np.zeros((8, 8), bool)
        b[:, :4] = True
        pairs = [((a * 0.5).astype(np.float32), a), ((b * 0.25).astype(np.float32), b)]
        t, _ = calibrate_foreground_threshold(pairs)
        bt, _ = oracles.calibrate_brute(pairs)
        assert t == bt

    def test_rejects_empty_and_mismatched(self):
        with pytest.raises(ValueError):
            calibrate_foreground_threshold([])
        with pytest.raises(ValueError):
            calibrate_foreground_threshold(
                [(np.zeros((4, 4), np.float32), np.zeros((4, 5), bool))]
            )


class TestWatershed:
    def test_line_fixture(self):
        relief = np.array([[0, 0, 1, 0, 0]], np.float32)
        markers = np.array([[1, 0, 0, 0, 2]], np.int32)
        out = watershed(markers, relief)
        assert out.tolist() == [[1, 1, 1, 2, 2]]

    def test_line_fixture_stable(self):
        relief = np.array([[0, 0, 1, 0, 0]], np.float32)
        markers = np.array([[1, 0, 0, 0, 2]], np.int32)
        runs = {watershed(markers, relief).tobytes() for _ in range(20)}
        assert len(runs) == 1

    def test_single_marker_fills_region(self, rng):
        region = np.zeros((16, 16), bool)
        region[3:13, 2:14] = True
        markers = np.zeros((16, 16), np.int32)
        markers[8, 8] = 1
        out = watershed(markers, rng.random((16, 16)).astype(np.float32), region)
        assert np.array_equal(out > 0, region)
        assert set(np.unique(out)) == {0, 1}

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_sorted_flood(self, connectivity):
        gen = np.random.default_rng(99)
        for _ in range(8):
            markers, relief, region = random_fixture(gen)
            got = watershed(markers, relief, region, connectivity)
            want = oracles.watershed_brute(markers, relief, region, connectivity)
            assert np.array_equal(got, want)

    def test_straddling_marker_clipped(self):
        region = np.zeros((8, 8), bool)
        region[:, :4] = True
        markers = np.zeros((8, 8), np.int32)
        markers[3:6, 2:6] = 1  # spans the region edge
        relief = np.zeros((8, 8), np.float32)
        out = watershed(markers, relief, region)
        assert not out[~region].any()
        assert (out[markers.astype(bool) & region] == 1).all()

    def test_outside_marker_dropped_with_warning(self, caplog):
        region = np.zeros((8, 8), bool)
        region[:, :4] = True
        markers = np.zeros((8, 8), np.int32)
        markers[2, 1] = 1
        markers[5, 6] = 2  # entirely outside the region
        relief = np.zeros((8, 8), np.float32)
        with caplog.at_level(logging.WARNING, logger="cellws.markerseg"):
            out = watershed(markers, relief, region)
        assert "dropped" in caplog.text
        assert set(np.unique(out)) == {0, 1}

    def test_unseeded_component_stays_background(self):
        region = np.zeros((10, 10), bool)
        region[1:4, 1:4] = True
        region[6:9, 6:9] = True
        markers = np.zeros((10, 10), np.int32)
        markers[2, 2] = 1
        with_warning = watershed(markers, np.zeros((10, 10), np.float32), region)
        assert (with_warning[6:9, 6:9] == 0).all()
        assert (with_warning[1:4, 1:4] == 1).all()

    def test_invariant_under_relief_square(self, rng):
        for _ in range(5):
            markers, relief, region = random_fixture(np.random.default_rng(rng.integers(1 << 30)))
            a = watershed(markers, relief, region)
            b = watershed(markers, relief * relief, region)
            assert np.array_equal(a, b)

    def test_segments_contain_their_markers(self, rng):
        markers, relief, region = random_fixture(np.random.default_rng(7), side=16)
        out = watershed(markers, relief, region)
        inside = (markers > 0) & region
        assert np.array_equal(out[inside], markers[inside])
        lost = np.setdiff1d(np.unique(markers), np.unique(np.where(region, markers, 0)))
        assert out.max() <= markers.max()
        present = set(np.unique(out)) - {0}
        expected = set(np.unique(markers)) - {0} - set(lost.tolist())
        assert present == expected

    def test_rejects_shape_mismatch_and_bad_connectivity(self):
        m = np.zeros((4, 4), np.int32)
        r = np.zeros((4, 5), np.float32)
        with pytest.raises(ValueError):
            watershed(m, r)
        with pytest.raises(ValueError):
            watershed(m, np.zeros((4, 4), np.float32), connectivity=6)


class TestDistanceBaseline:
    def test_single_marker(self):
        region = np.ones((6, 6), bool)
        markers = np.zeros((6, 6), np.int32)
        markers[2, 3] = 1
        out = distance_baseline(markers, region)
        assert (out == 1).all()

    def test_tie_goes_to_smaller_label(self):
        region = np.ones((1, 5), bool)
        markers = np.array([[2, 0, 0, 0, 1]], np.int32)
        out = distance_baseline(markers, region)
        assert out.tolist() == [[2, 2, 1, 1, 1]]

    def test_matches_exhaustive_scan(self):
        gen = np.random.default_rng(5)
        for _ in range(6):
            markers, _, region = random_fixture(gen, side=10)
            got = distance_baseline(markers, region)
            want = oracles.nearest_marker_brute(markers, region)
            assert np.array_equal(got, want)


class TestRemoveBorderCells:
    def test_interior_untouched(self):
        labels = np.zeros((8, 8), np.int32)
        labels[2:5, 2:5] = 1
        assert np.array_equal(remove_border_cells(labels), labels)

    def test_edge_spanning_cell_removed(self):
        labels = np.zeros((6, 6), np.int32)
        labels[0, :] = 1
        assert not remove_border_cells(labels).any()

    def test_corner_cell_removed_interior_kept(self):
        labels = np.zeros((8, 8), np.int32)
        labels[0:2, 0:2] = 1
        labels[4:6, 4:6] = 2
        out = remove_border_cells(labels)
        assert set(np.unique(out)) == {0, 1}
        assert np.array_equal(out > 0, labels == 2)


class TestSegmentImage:
    def three_cell_truth(self):
        labels = np.zeros((64, 64), np.int32)
        for lab, (cy, cx, d) in enumerate(
            ((16, 16, 15), (16, 46, 17), (46, 30, 19)), start=1
        ):
            fp = disk_footprint(d)
            r = fp.shape[0] // 2
            labels[cy - r : cy + r + 1, cx - r : cx + r + 1][fp] = lab
        return labels

    def params(self):
        return PipelineParams(
            contrast=30,
            foreground_threshold=128,
            size_ratio=0.4,
            min_cell_diameter=15.0,
        )

    def test_three_cells_recovered(self):
        truth = self.three_cell_truth()
        marker, fg = oracle_predictions(truth, OracleSpec(sigma=2.0, size_ratio=0.6))
        out = segment_image(marker, fg, self.params())
        assert out.max() == 3
        for lab in (1, 2, 3):
            cell = truth == lab
            ids, counts = np.unique(out[cell], return_counts=True)
            winner = ids[np.argmax(counts)]
            assert winner != 0
            seg = out == winner
            jac = (cell & seg).sum() / (cell | seg).sum()
            assert jac >= 0.8

    def test_blank_markers_blank_output(self):
        fg = np.full((32, 32), 0.9, np.float32)
        out = segment_image(np.zeros((32, 32), np.float32), fg, self.params())
        assert not out.any()

    def test_empty_region_blank_output(self, caplog):
        truth = self.three_cell_truth()
        marker, fg = oracle_predictions(truth, OracleSpec(sigma=2.0, size_ratio=0.6))
        params = PipelineParams(
            contrast=30,
            foreground_threshold=255,
            size_ratio=0.4,
            min_cell_diameter=15.0,
        )
        fg = np.minimum(fg, 0.99).astype(np.float32)
        with caplog.at_level(logging.WARNING, logger="cellws.markerseg"):
            out = segment_image(marker, fg, params)
        assert not out.any()

    def test_deterministic(self):
        truth = self.three_cell_truth()
        marker, fg = oracle_predictions(truth, OracleSpec(sigma=2.0, size_ratio=0.6))
        a = segment_image(marker, fg, self.params())
        b = segment_image(marker, fg, self.params())
        assert np.array_equal(a, b)

    def test_border_removal_toggle(self):
        truth = np.zeros((32, 32), np.int32)
        truth[0:10, 0:10] = 1  # touches the border
        truth[18:30, 18:30] = 2
        marker, fg = oracle_predictions(truth, OracleSpec(sigma=1.0, size_ratio=0.8))
        base = dict(
            contrast=10,
            foreground_threshold=128,
            size_ratio=0.5,
            min_cell_diameter=9.0,
        )
        keep = segment_image(marker, fg, PipelineParams(**base))
        drop = segment_image(
            marker, fg, PipelineParams(**base, remove_border=True)
        )
        assert keep.max() == 2
        assert drop.max() == 1
        assert not drop[0, :].any()
