"""Scatter figure rendering: file creation and determinism."""

from __future__ import annotations

import pytest

from decenergy.errors import ValidationError
from decenergy.evaluation import EvaluationReport, RecordResult
from decenergy.figures import render_scatter


def sample_report(n=20):
    records = tuple(
        RecordResult(f"r{i}", 10.0 + i, 10.0 + i * 1.02, i % 3) for i in range(n)
    )
    return EvaluationReport(
        setup_label="Synthetic",
        catalog_kind="FV",
        epsilon_bar=0.02,
        fold_count=3,
        seed=1,
        records=records,
    )


class TestRenderScatter:
    def test_writes_png(self, tmp_path):
        p = render_scatter(sample_report(), tmp_path / "scatter.png")
        data = p.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000

    def test_writes_pdf_and_svg(self, tmp_path):
        assert render_scatter(sample_report(), tmp_path / "s.pdf").read_bytes()[:5] == b"%PDF-"
        svg = render_scatter(sample_report(), tmp_path / "s.svg").read_text()
        assert "<svg" in svg

    def test_png_output_is_byte_deterministic(self, tmp_path):
        a = render_scatter(sample_report(), tmp_path / "a.png")
        b = render_scatter(sample_report(), tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()

    def test_svg_output_is_byte_deterministic(self, tmp_path):
        a = render_scatter(sample_report(), tmp_path / "a.svg")
        b = render_scatter(sample_report(), tmp_path / "b.svg")
        assert a.read_bytes() == b.read_bytes()

    def test_single_record_report(self, tmp_path):
        p = render_scatter(sample_report(n=1), tmp_path / "one.png")
        assert p.exists()

    def test_empty_report_rejected(self, tmp_path):
        report = EvaluationReport(
            setup_label="CTC",
            catalog_kind="FV",
            epsilon_bar=0.0,
            fold_count=0,
            seed=None,
            records=(),
        )
        with pytest.raises(ValidationError, match="empty"):
            render_scatter(report, tmp_path / "x.png")
