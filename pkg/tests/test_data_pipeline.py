"""
Tests for LMP ingestion and working-matrix preparation.
"""
import numpy as np
import pandas as pd
import pytest

from app.models.schema import LmpCsvSchema, MarketMode
from app.models.subspace import LmpPanel
from app.services.case_library import case3
from app.services.data_pipeline import (
    dedupe_nodes,
    eliminate_loss_term,
    filter_congested,
    ingest_lmp_csv,
    panel_from_records,
    pca_reduce,
    prepare_working_matrix,
    sort_nodes,
)
from app.services.market_sim import SimulationConfig, generate_scenarios
from app.utils.artifacts import read_truth_csv
from app.utils.errors import DataIngestionError, NoCongestionError


def _write(tmp_path, rows, name="lmp.csv"):
    path = tmp_path / name
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


def _panel(congestion, nodes=None):
    congestion = np.asarray(congestion, dtype=float)
    nodes = nodes or tuple(str(i + 1) for i in range(congestion.shape[0]))
    stamps = tuple(f"2020-01-01T00:{t:02d}:00" for t in range(congestion.shape[1]))
    return LmpPanel(node_ids=tuple(nodes), timestamps=stamps, congestion=congestion)


class TestIngestion:
    """Long-format CSV to dense panel."""

    def test_pivot_and_ordering(self, tmp_path):
        """Nodes sort numerically, timestamps chronologically."""
        path = _write(tmp_path, [
            {"node": "10", "timestamp": "2020-01-01 00:05", "mcc": 3.0},
            {"node": "2", "timestamp": "2020-01-01 00:05", "mcc": 2.0},
            {"node": "10", "timestamp": "2020-01-01 00:00", "mcc": 1.0},
            {"node": "2", "timestamp": "2020-01-01 00:00", "mcc": 0.5},
        ])
        panel = ingest_lmp_csv(path)
        assert panel.node_ids == ("2", "10")
        assert panel.timestamps == ("2020-01-01T00:00:00", "2020-01-01T00:05:00")
        assert panel.congestion.tolist() == [[0.5, 2.0], [1.0, 3.0]]
        assert panel.energy is None and panel.loss is None

    def test_identical_duplicates_are_dropped(self, tmp_path):
        row = {"node": "1", "timestamp": "2020-01-01 00:00", "mcc": 1.0}
        panel = ingest_lmp_csv(_write(tmp_path, [row, row]))
        assert panel.shape == (1, 1)

    def test_conflicting_duplicates_raise(self, tmp_path):
        path = _write(tmp_path, [
            {"node": "1", "timestamp": "2020-01-01 00:00", "mcc": 1.0},
            {"node": "1", "timestamp": "2020-01-01 00:00", "mcc": 2.0},
        ])
        with pytest.raises(DataIngestionError, match="conflicting"):
            ingest_lmp_csv(path)

    def test_gap_raises_unless_forward_filled(self, tmp_path):
        path = _write(tmp_path, [
            {"node": "1", "timestamp": "2020-01-01 00:00", "mcc": 1.0},
            {"node": "1", "timestamp": "2020-01-01 00:05", "mcc": 2.0},
            {"node": "2", "timestamp": "2020-01-01 00:00", "mcc": 4.0},
        ])
        with pytest.raises(DataIngestionError, match="missing"):
            ingest_lmp_csv(path)
        panel = ingest_lmp_csv(path, forward_fill=True)
        assert panel.congestion[1].tolist() == [4.0, 4.0]

    def test_missing_column_raises(self, tmp_path):
        path = _write(tmp_path, [{"node": "1", "timestamp": "2020-01-01 00:00", "price": 1.0}])
        with pytest.raises(DataIngestionError, match="mcc"):
            ingest_lmp_csv(path)

    def test_spp_layout(self, tmp_path):
        """The SPP export layout with every component present."""
        path = _write(tmp_path, [
            {"Settlement Location": "A", "GMT Interval": "2021-02-01 06:00", "MCC": 1.5, "MLC": 0.1, "MEC": 20.0},
            {"Settlement Location": "B", "GMT Interval": "2021-02-01 06:00", "MCC": -1.0, "MLC": 0.2, "MEC": 20.0},
        ])
        panel = ingest_lmp_csv(path, schema=LmpCsvSchema.spp())
        assert panel.node_ids == ("A", "B")
        assert panel.energy.tolist() == [[20.0], [20.0]]
        assert panel.loss.tolist() == [[0.1], [0.2]]

    def test_column_order_does_not_matter(self, tmp_path):
        """Permuted CSV columns and rows give the same congested working columns."""
        rng = np.random.default_rng(7)
        rows = [
            {"node": str(n), "timestamp": f"2020-01-01 00:{5 * t:02d}", "mcc": 0.0 if t == 2 else float(rng.normal()),
             "mec": 20.0}
            for n in range(1, 5) for t in range(6)
        ]
        frame = pd.DataFrame(rows)
        original = _write(tmp_path, frame, "original.csv")
        shuffled = _write(tmp_path, frame.sample(frac=1.0, random_state=3)[["mec", "mcc", "timestamp", "node"]],
                          "shuffled.csv")
        first = filter_congested(ingest_lmp_csv(original))
        second = filter_congested(ingest_lmp_csv(shuffled))
        assert first.node_ids == second.node_ids
        assert first.intervals == second.intervals
        assert "2020-01-01T00:10:00" in first.dropped
        assert np.array_equal(first.values, second.values)

    def test_offset_timestamps_normalized_to_utc(self, tmp_path):
        path = _write(tmp_path, [
            {"node": "1", "timestamp": "2020-01-01T01:05:00+01:00", "mcc": 1.0},
            {"node": "1", "timestamp": "2020-01-01T01:00:00+01:00", "mcc": 2.0},
        ])
        assert ingest_lmp_csv(path).timestamps == ("2020-01-01T00:00:00", "2020-01-01T00:05:00")

    def test_truth_intervals_normalized_like_prices(self, tmp_path):
        """Truth rows in another timestamp style align with ingested price intervals."""
        path = _write(tmp_path, [
            {"interval": "2020-01-01 00:05", "line_id": "2", "congested": 1, "mu": 3.0},
            {"interval": "2020-01-01 00:00", "line_id": "2", "congested": 0, "mu": 0.0},
        ], "truth.csv")
        truth = read_truth_csv(path)
        assert truth.intervals == ("2020-01-01T00:00:00", "2020-01-01T00:05:00")
        assert truth.codes.tolist() == [[False, True]]

    def test_unparseable_truth_interval(self, tmp_path):
        path = _write(tmp_path, [{"interval": "not a time", "line_id": "1", "congested": 1}], "truth.csv")
        with pytest.raises(DataIngestionError):
            read_truth_csv(path)

    def test_sort_nodes(self):
        assert sort_nodes(["b", "10", "a", "9"]) == ["9", "10", "a", "b"]


class TestPreprocessing:
    """Dedupe, loss-term elimination, filtering and PCA."""

    def test_dedupe_merges_identical_nodes(self):
        panel = dedupe_nodes(_panel([[1.0, 2.0], [1.0, 2.0], [3.0, 1.0]]), tol=1e-9)
        assert panel.node_ids == ("1", "3")
        assert panel.aliases == {"2": "1"}

    def test_dedupe_keeps_nodes_two_tolerances_apart(self):
        panel = dedupe_nodes(_panel([[1.0, 2.0], [1.002, 2.0], [1.0005, 2.0]]), tol=1e-3)
        assert panel.node_ids == ("1", "2")
        assert panel.aliases == {"3": "1"}

    def test_eliminate_loss_term_is_idempotent(self):
        panel = _panel(np.random.default_rng(1).standard_normal((4, 6)))
        once = eliminate_loss_term(panel)
        twice = eliminate_loss_term(once)
        assert np.array_equal(once.congestion, twice.congestion)

    def test_eliminate_loss_term_zeroes_reference_row(self):
        panel = eliminate_loss_term(_panel([[1.0, 2.0], [4.0, 7.0]]), ref_node="1")
        assert panel.congestion.tolist() == [[0.0, 0.0], [3.0, 5.0]]

    def test_eliminate_loss_term_unknown_reference(self):
        with pytest.raises(DataIngestionError):
            eliminate_loss_term(_panel([[1.0]]), ref_node="9")

    def test_filter_drops_uncongested_intervals(self):
        x = filter_congested(_panel([[0.0, 1.0, 1e-6], [0.0, 2.0, 0.0]]))
        assert x.n_columns == 1
        assert x.intervals == ("2020-01-01T00:01:00",)
        assert len(x.dropped) == 2

    def test_all_uncongested_raises(self):
        with pytest.raises(NoCongestionError, match="no congestion observed"):
            filter_congested(_panel(np.zeros((3, 4))))

    def test_pca_keeps_rank_and_maps_back(self):
        """Rank-2 data in 6 nodes reduce to 2 coordinates that map back exactly."""
        rng = np.random.default_rng(0)
        values = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 30))
        x = pca_reduce(filter_congested(_panel(values)))
        assert x.rank == 2
        assert np.allclose(x.to_node_space(x.values), values, atol=1e-10)

    def test_pca_preserves_inner_products(self):
        rng = np.random.default_rng(2)
        values = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 25))
        x = pca_reduce(filter_congested(_panel(values)))
        assert x.rank == 3
        assert np.allclose(x.values.T @ x.values, values.T @ values, rtol=0.0, atol=1e-8)

    def test_lossy_elimination_makes_single_line_columns_proportional(self):
        """Same-status columns of a lossy market are parallel once the shared term is removed."""
        batch = generate_scenarios(case3(), 288, 0.03, seed=4, config=SimulationConfig(mode=MarketMode.LOSSY))
        panel = eliminate_loss_term(panel_from_records(batch.records), ref_node="1")
        groups = {}
        for t, record in enumerate(batch):
            if record.status.sum() == 1:
                groups.setdefault(int(np.flatnonzero(record.status)[0]), []).append(t)
        assert groups
        for columns in groups.values():
            unit = panel.congestion[:, columns] / np.linalg.norm(panel.congestion[:, columns], axis=0)
            assert np.min(np.abs(unit.T @ unit)) > 1 - 1e-6

    def test_prepare_working_matrix(self, case3_batch):
        x = prepare_working_matrix(panel_from_records(case3_batch.records), mode=MarketMode.LOSSLESS)
        assert x.rank == 2
        assert x.projection.shape == (2, 3)
