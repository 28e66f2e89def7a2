"""
Tests for the bottom-up subspace search.
"""
import numpy as np
import pytest

from app.models.subspace import AffinityMatrix, CongestionMatrix
from app.services.bottom_up import (
    BottomUpConfig,
    affinity,
    bottom_up_search,
    cutoff,
    harvest_rank1,
    project_complement,
    spectral_cluster,
)
from app.utils.errors import ZeroColumnError
from app.utils.seeding import SeedStreams


def _matrix(values):
    values = np.asarray(values, dtype=float)
    return CongestionMatrix(values, tuple(str(t) for t in range(values.shape[1])), tuple(str(i) for i in range(values.shape[0])))


class TestAffinity:
    """Absolute cosine affinity and the cutoff kernel."""

    def test_absolute_cosine(self):
        a = affinity(np.array([[1.0, -2.0, 0.0], [0.0, 0.0, 3.0]]))
        assert a.values.tolist() == [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]

    def test_zero_column_raises(self):
        with pytest.raises(ZeroColumnError):
            affinity(np.array([[1.0, 0.0], [1.0, 0.0]]))

    def test_cutoff_kernel(self):
        a = AffinityMatrix(np.array([[1.0, 0.999], [0.999, 1.0]]))
        assert cutoff(a, 0.005).values.tolist() == [[1.0, 1.0], [1.0, 1.0]]
        assert cutoff(a, 0.0005).values.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_cutoff_epsilon_range(self):
        with pytest.raises(ValueError):
            cutoff(AffinityMatrix(np.eye(2)), 1.5)


class TestSpectralCluster:
    """Eigengap cluster count and labels."""

    def test_block_diagonal_graph(self):
        """Three cliques give K = 3 with the cliques as clusters."""
        blocks = [np.ones((n, n)) for n in (4, 3, 5)]
        a = np.zeros((12, 12))
        start = 0
        for block in blocks:
            n = block.shape[0]
            a[start:start + n, start:start + n] = block
            start += n
        result = spectral_cluster(AffinityMatrix(a, binary=True), SeedStreams(0))
        assert result.k == 3
        assert result.labels.tolist() == [0] * 4 + [1] * 3 + [2] * 5

    def test_all_singletons(self):
        result = spectral_cluster(AffinityMatrix(np.eye(4), binary=True))
        assert result.k == 4

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(1)
        a = (rng.random((20, 20)) > 0.6).astype(float)
        a = np.maximum(a, a.T)
        np.fill_diagonal(a, 1.0)
        first = spectral_cluster(AffinityMatrix(a, binary=True), SeedStreams(5))
        second = spectral_cluster(AffinityMatrix(a, binary=True), SeedStreams(5))
        assert np.array_equal(first.labels, second.labels)


class TestHarvest:
    """Rank-1 harvest and complement projection."""

    def test_harvest_only_rank1_clusters(self):
        b1, b2, b3 = np.eye(3)
        values = np.column_stack([b1, 2 * b1, b2 + b3, b2 - 0.5 * b3, b2 + 2 * b3])
        clusters = spectral_cluster(cutoff(affinity(values), 0.005))
        labels = clusters.labels
        assert labels[0] == labels[1]
        vectors, residual, ranked = harvest_rank1(values, clusters)
        assert vectors.shape == (3, 1)
        assert np.allclose(vectors[:, 0], b1)
        assert residual.tolist() == [2, 3, 4]

    def test_projection_drops_columns_inside_span(self):
        x = _matrix(np.column_stack([np.eye(3)[0], np.eye(3)[0] + np.eye(3)[1], np.eye(3)[2]]))
        projected, keep, q = project_complement(x, np.eye(3)[:, :1])
        assert keep.tolist() == [1, 2]
        assert projected.rank == 2
        assert q.shape == (3, 2)
        assert np.allclose(x.to_node_space(q @ projected.values), x.values[:, keep] - np.outer(np.eye(3)[0], [1.0, 0.0]))

    def test_survivors_orthogonal_to_harvested(self):
        rng = np.random.default_rng(6)
        harvested = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        values = np.hstack([rng.standard_normal((5, 25)), harvested @ rng.standard_normal((2, 5))])
        projected, keep, q = project_complement(_matrix(values), harvested)
        assert keep.tolist() == list(range(25))
        assert np.max(np.abs(harvested.T @ (q @ projected.values))) <= 1e-8


class TestBottomUpSearch:
    """Full round loop on nested statuses."""

    def test_two_rounds_recover_nested_bases(self):
        """Round 1 finds b1 and b3; round 2 finds the directions only seen together with them."""
        rng = np.random.default_rng(3)
        basis = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        columns = []
        for t in range(60):
            c = rng.uniform(1.0, 3.0, 4)
            status = [(1, 0, 0, 0), (1, 1, 0, 0), (0, 0, 1, 0), (0, 0, 1, 1)][t % 4]
            columns.append(basis @ (np.array(status) * c))
        x = _matrix(np.column_stack(columns))

        result = bottom_up_search(x, BottomUpConfig(), SeedStreams(0))
        assert [r.harvested for r in result.rounds] == [2, 2]
        assert not result.gap
        cosines = np.abs(basis.T @ result.basis.vectors)
        assert np.allclose(np.sort(cosines.max(axis=0)), 1.0, atol=1e-8)
        assert result.basis.provenance == ("bottom-up round 1",) * 2 + ("bottom-up round 2",) * 2

    def test_basis_gap_leaves_residual(self):
        """Columns spread over a plane with no line of their own stay unresolved."""
        rng = np.random.default_rng(4)
        values = rng.standard_normal((2, 40))
        result = bottom_up_search(_matrix(values))
        assert result.basis.size == 0
        assert result.gap
        assert result.residual.n_columns == 40
        assert len(result.rounds) == 1
