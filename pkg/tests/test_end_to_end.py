"""
End-to-end identification runs on synthetic panels and the bundled cases.
"""
import logging
import time

import numpy as np

from app.models.schema import RunConfig
from app.models.subspace import StatusCodeSeq
from app.services.data_pipeline import panel_from_records
from app.services.identification_service import IdentificationService
from app.services.identify import align_truth, match_rows, miscode
from tests.conftest import synthetic_panel

logger = logging.getLogger(__name__)


def _truth_from_batch(batch) -> StatusCodeSeq:
    status = np.column_stack([record.status for record in batch.records])
    return StatusCodeSeq(
        status,
        tuple(str(line_id) for line_id in batch.ptdf.line_ids),
        tuple(record.timestamp for record in batch.records),
    )


def _score(result, truth: StatusCodeSeq):
    aligned = align_truth(result.codes, truth)
    return miscode(result.codes, aligned, match_rows(result.codes, aligned))


class TestSyntheticPanels:
    """Noise-free panels with a planted basis are decoded without error."""

    def test_fifty_datasets_zero_miscode(self):
        service = IdentificationService(RunConfig())
        worst = 0.0
        for dataset in range(50):
            k = 2 + dataset % 5
            panel, _, status = synthetic_panel(k, 500, 30, seed=100 + dataset)
            started = time.time()
            result = service.identify_panel(panel)
            elapsed = time.time() - started
            worst = max(worst, elapsed)

            truth = StatusCodeSeq(status, tuple(str(j + 1) for j in range(k)), panel.timestamps)
            report = _score(result, truth)
            assert result.basis.k == k, f"dataset {dataset}"
            assert report.total_miscode == 0.0, f"dataset {dataset}"
            assert elapsed < 5.0
        logger.info(f"slowest synthetic dataset: {worst:.3f}s")

    def test_rerun_is_identical(self):
        panel, _, _ = synthetic_panel(4, 300, 20, seed=42)
        first = IdentificationService(RunConfig(seed=9)).identify_panel(panel)
        second = IdentificationService(RunConfig(seed=9)).identify_panel(panel)
        assert np.array_equal(first.codes.codes, second.codes.codes)
        assert np.array_equal(first.basis.working, second.basis.working)


class TestBundledCases:
    """Simulated market data through the full pipeline."""

    def test_case30_bottom_up_only(self, case30_batch):
        """Four pockets resolved by two bottom-up rounds of two directions each."""
        result = IdentificationService(RunConfig()).identify_panel(panel_from_records(case30_batch.records))
        assert result.basis.k == 4
        assert [r.harvested for r in result.bottom_up.rounds] == [2, 2]
        assert result.top_down is None
        assert all(r.seconds <= 1.0 for r in result.bottom_up.rounds)

        report = _score(result, _truth_from_batch(case30_batch))
        logger.info(f"case30 miscode {report.total_miscode:.4%}")
        assert not report.k_mismatch
        assert report.total_miscode <= 0.02

    def test_case118_needs_top_down(self, case118_batch):
        """Two always-congested lines hide every rank-one cluster from bottom-up."""
        result = IdentificationService(RunConfig()).identify_panel(panel_from_records(case118_batch.records))
        assert result.bottom_up.rounds[0].harvested == 0
        assert result.top_down is not None
        assert result.basis.k == 4
        assert result.top_down.seconds <= 30.0

        report = _score(result, _truth_from_batch(case118_batch))
        logger.info(f"case118 miscode {report.total_miscode:.4%}")
        assert report.total_miscode <= 0.01
