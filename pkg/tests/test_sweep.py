"""Frame-count accounting across neighbor settings."""

import pytest

from hdvila.config import RunConfig
from hdvila.sweep import frame_count_sweep, render_sweep_table


@pytest.fixture
def config():
    return RunConfig().validate()


class TestFrameCountSweep:
    def test_hybrid_counts_per_segment(self, config):
        rows = frame_count_sweep(config, (1, 2, 3))
        for row, n in zip(rows, (1, 2, 3)):
            assert row.n_neighbors == n
            assert row.hr_per_segment == 1
            assert row.lr_per_segment == 2 * n
            assert row.frames_per_segment == 2 * n + 1

    def test_clip_totals(self, config):
        rows = frame_count_sweep(config, (3,))
        row = rows[0]
        assert row.segment_count == config.segment_count
        assert row.frames_per_clip == row.segment_count * row.frames_per_segment

    def test_grid_and_tokens_from_crop(self, config):
        row = frame_count_sweep(config, (2,))[0]
        assert (row.grid_h, row.grid_w) == (10, 16)
        assert row.tokens == 160

    def test_counts_measured_not_assumed(self, config):
        # the sweep samples real index plans, so every row reflects an
        # actual plan over the configured clip length
        rows = frame_count_sweep(config, (1, 4))
        assert rows[0].frames_per_clip < rows[1].frames_per_clip

    def test_empty_n_values_rejected(self, config):
        with pytest.raises(ValueError):
            frame_count_sweep(config, ())


class TestRenderSweepTable:
    def test_header_and_row_shape(self, config):
        text = render_sweep_table(frame_count_sweep(config, (1, 2)))
        lines = text.strip().splitlines()
        assert lines[0].split("\t") == [
            "n_neighbors",
            "frames_per_segment",
            "hr_per_segment",
            "lr_per_segment",
            "segment_count",
            "frames_per_clip",
            "grid",
            "tokens",
        ]
        assert len(lines) == 3
        assert lines[1].split("\t")[0] == "1"
