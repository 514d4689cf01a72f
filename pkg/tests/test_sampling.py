"""Segment planning, hybrid index sampling, and frame loading."""

import numpy as np
import pytest

from hdvila.checkpoint import save_checkpoint
from hdvila.sampling import (
    ListFrameSource,
    TensorFileSource,
    area_downscale,
    load_frames,
    plan_segments,
    sample_hybrid,
)


class TestPlanSegments:
    def test_even_split(self):
        plan = plan_segments(140, 2, 7, 2)
        assert plan.windows == ((0, 70), (70, 140))
        assert plan.n_neighbors == 3

    def test_single_frame_segment(self):
        plan = plan_segments(30, 1, 1, 1)
        assert plan.windows == ((0, 30),)
        assert plan.n_neighbors == 0

    def test_remainder_goes_to_last_window(self):
        plan = plan_segments(10, 3, 3, 1)
        assert plan.windows == ((0, 3), (3, 6), (6, 10))

    def test_reference_config(self):
        plan = plan_segments(200, 2, 7, 2)
        assert plan.segment_count == 2
        assert plan.frames_per_segment == 7
        assert plan.n_neighbors == 3

    def test_even_frames_per_segment_rejected(self):
        with pytest.raises(ValueError):
            plan_segments(100, 2, 6, 2)

    def test_too_many_segments_rejected(self):
        with pytest.raises(ValueError):
            plan_segments(3, 4, 1, 1)


class TestSampleHybrid:
    def test_neighbor_formula(self):
        rng = np.random.default_rng(0)
        seq = sample_hybrid((0, 100), 3, 2, rng)
        t = seq.hr_index
        assert seq.lr_indices == (t - 6, t - 4, t - 2, t + 2, t + 4, t + 6)

    def test_no_neighbors_when_n_zero(self):
        seq = sample_hybrid((0, 10), 0, 1, np.random.default_rng(1))
        assert seq.lr_indices == ()

    def test_clamped_small_window(self):
        # Interior is empty, so t falls on the midpoint and neighbors clamp.
        seq = sample_hybrid((0, 5), 3, 2, np.random.default_rng(2))
        assert seq.hr_index == 2
        assert seq.lr_indices == (0, 0, 0, 4, 4, 4)

    def test_indices_stay_in_window(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            start = int(rng.integers(0, 20))
            end = start + int(rng.integers(1, 30))
            n = int(rng.integers(0, 4))
            r = int(rng.integers(1, 4))
            seq = sample_hybrid((start, end), n, r, rng)
            assert start <= seq.hr_index < end
            assert len(seq.lr_indices) == 2 * n
            for idx in seq.lr_indices:
                assert start <= idx < end

    def test_symmetry_before_clamping(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n, r = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            seq = sample_hybrid((0, 200), n, r, rng)
            t = seq.hr_index
            left = [t - idx for idx in seq.lr_indices[:n]]
            right = [idx - t for idx in seq.lr_indices[n:]]
            assert left == list(reversed(right))

    def test_equal_seeds_equal_indices(self):
        a = sample_hybrid((5, 90), 3, 2, np.random.default_rng(42))
        b = sample_hybrid((5, 90), 3, 2, np.random.default_rng(42))
        assert (a.hr_index, a.lr_indices) == (b.hr_index, b.lr_indices)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            sample_hybrid((4, 4), 1, 1, np.random.default_rng(0))


class TestAreaDownscale:
    def test_constant_blocks(self):
        frame = np.full((3, 8, 8), 2.0, np.float32)
        out = area_downscale(frame)
        assert out.shape == (3, 2, 2)
        np.testing.assert_allclose(out, 2.0)

    def test_block_mean_exact(self):
        frame = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
        out = area_downscale(frame)
        # top-left 4x4 block mean of 0,1,2,3,4,5,6,7,8,... over whole frame
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == np.float32(np.arange(16).mean())

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError):
            area_downscale(np.zeros((3, 6, 8), np.float32))


class TestLoadFrames:
    def _indexed_source(self, n, h=16, w=16):
        # Frame i is the constant image of value i: loaded indices are
        # readable straight from the pixels.
        return ListFrameSource([np.full((3, h, w), float(i), np.float32) for i in range(n)])

    def test_quarter_resolution_rule(self):
        plan = plan_segments(40, 2, 3, 1)
        seqs = load_frames(plan, self._indexed_source(40, 64, 64), np.random.default_rng(0), 16, 16)
        for seq in seqs:
            assert seq.hr_image.shape == (3, 16, 16)
            for lr in seq.lr_images:
                assert lr.shape == (3, 4, 4)

    def test_loaded_indices_match_pixels(self):
        plan = plan_segments(60, 2, 7, 2)
        seqs = load_frames(plan, self._indexed_source(60), np.random.default_rng(1), 8, 8)
        for seq in seqs:
            assert float(seq.hr_image.data[0, 0, 0]) == float(seq.hr_index)
            for idx, lr in zip(seq.lr_indices, seq.lr_images):
                assert float(lr.data[0, 0, 0]) == float(idx)

    def test_crop_alignment_between_hr_and_lr(self):
        # Paint a horizontal ramp; the LR crop must be the area-averaged HR crop.
        ramp = np.tile(np.arange(32, dtype=np.float32), (3, 32, 1))
        source = ListFrameSource([ramp, ramp, ramp])
        plan = plan_segments(3, 1, 3, 1)
        seqs = load_frames(plan, source, np.random.default_rng(2), 8, 8)
        seq = seqs[0]
        expect = area_downscale(seq.hr_image.data, 4)
        np.testing.assert_allclose(seq.lr_images[0].data, expect, atol=1e-6)

    def test_determinism_across_runs(self):
        plan = plan_segments(50, 2, 5, 2)
        src = self._indexed_source(50)
        a = load_frames(plan, src, np.random.default_rng(7), 8, 8)
        b = load_frames(plan, src, np.random.default_rng(7), 8, 8)
        for sa, sb in zip(a, b):
            assert sa.hr_index == sb.hr_index
            assert sa.lr_indices == sb.lr_indices
            np.testing.assert_array_equal(sa.hr_image.data, sb.hr_image.data)

    def test_out_of_range_index_raises(self):
        plan = plan_segments(10, 1, 3, 5)
        src = self._indexed_source(4)
        with pytest.raises(IndexError):
            load_frames(plan, src, np.random.default_rng(3), 8, 8)

    def test_indivisible_crop_rejected(self):
        plan = plan_segments(10, 1, 3, 1)
        with pytest.raises(ValueError):
            load_frames(plan, self._indexed_source(10), np.random.default_rng(4), 10, 8)


class TestTensorFileSource:
    def test_reads_frames_from_container(self, tmp_path):
        frames = {f"frame_{i:05d}": np.full((3, 8, 8), float(i), np.float32) for i in range(5)}
        path = tmp_path / "frames.hdvk"
        save_checkpoint(frames, path)
        source = TensorFileSource(path)
        assert len(source) == 5
        np.testing.assert_array_equal(source(3), frames["frame_00003"])
        with pytest.raises(IndexError):
            source(9)
