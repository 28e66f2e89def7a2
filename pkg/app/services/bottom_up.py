"""
Bottom-up subspace search.

Columns that share a one-dimensional subspace have absolute cosine close to
one. Each round builds the cutoff affinity graph, clusters it spectrally,
harvests the basis of every rank-1 cluster, and projects the remaining data
onto the orthogonal complement of what was harvested, which exposes the
next level of one-dimensional structure.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans
from sklearn.preprocessing import normalize

from app.models.schema import SearchMethod
from app.models.subspace import AffinityMatrix, BasisSet, ClusterResult, CongestionMatrix, RoundLog
from app.utils.errors import ZeroColumnError
from app.utils.linalg import (
    complement_frame,
    new_directions,
    sign_normalize,
    span_basis,
)
from app.utils.seeding import KMEANS_STREAM, SeedStreams

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-12


@dataclass
class BottomUpConfig:
    """Configuration for the bottom-up search."""
    eps_cutoff: float = 0.005
    rank_tol: float = 1e-6
    zero_tol: float = 1e-6
    max_rounds: Optional[int] = None
    kmeans_restarts: int = 10
    min_cluster_size: int = 2


@dataclass
class BottomUpResult:
    """
    Harvested bases plus whatever the rounds could not resolve.

    ``basis`` lives in the input's working frame. ``residual`` holds the
    unresolved columns in the complement frame ``frame`` (working dim x d),
    so ``frame @ v`` maps a residual-frame vector back to the working frame.
    """
    basis: BasisSet
    residual: Optional[CongestionMatrix]
    residual_columns: np.ndarray
    frame: np.ndarray
    rounds: list[RoundLog] = field(default_factory=list)

    @property
    def gap(self) -> bool:
        return self.residual is not None and self.residual.n_columns > 0


def _values(x: Union[CongestionMatrix, np.ndarray]) -> np.ndarray:
    return x.values if isinstance(x, CongestionMatrix) else np.asarray(x, dtype=float)


def affinity(x: Union[CongestionMatrix, np.ndarray]) -> AffinityMatrix:
    """
    Absolute cosine similarity between every pair of columns.

    Raises:
        ZeroColumnError: a column has zero norm
    """
    values = _values(x)
    norms = np.linalg.norm(values, axis=0)
    if np.any(norms == 0):
        raise ZeroColumnError(f"zero column(s) at {np.flatnonzero(norms == 0).tolist()[:10]}")
    unit = values / norms
    a = np.clip(np.abs(unit.T @ unit), 0.0, 1.0)
    np.fill_diagonal(a, 1.0)
    return AffinityMatrix(a)


def cutoff(a: AffinityMatrix, eps: float) -> AffinityMatrix:
    """Binary kernel: 1 where the affinity exceeds ``1 - eps``."""
    if not 0 < eps < 1:
        raise ValueError(f"cutoff epsilon must lie in (0, 1), got {eps}")
    binary = (a.values > 1.0 - eps).astype(float)
    np.fill_diagonal(binary, 1.0)
    return AffinityMatrix(binary, binary=True)


def _relabel(labels: np.ndarray) -> np.ndarray:
    """Number clusters by first appearance."""
    order = {}
    for label in labels:
        order.setdefault(int(label), len(order))
    return np.array([order[int(label)] for label in labels], dtype=int)


def _farthest_point_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    dist = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        centers.append(points[int(np.argmax(dist))])
        dist = np.minimum(dist, np.sum((points - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def _kmeans(points: np.ndarray, k: int, restarts: int, streams: SeedStreams, round_index: int) -> np.ndarray:
    best, best_inertia = None, np.inf
    for restart in range(restarts):
        rng = streams.generator(KMEANS_STREAM, round_index, restart)
        model = KMeans(
            n_clusters=k,
            init=_farthest_point_init(points, k, rng),
            n_init=1,
            random_state=streams.integer_seed(KMEANS_STREAM, round_index, restart),
        ).fit(points)
        if model.inertia_ < best_inertia:
            best, best_inertia = model.labels_, model.inertia_
    return best


def spectral_cluster(
    a_binary: AffinityMatrix,
    streams: Optional[SeedStreams] = None,
    restarts: int = 10,
    round_index: int = 0,
) -> ClusterResult:
    """
    Cluster the graph of ``a_binary`` with the relative eigengap heuristic.

    Uses the symmetric normalized Laplacian I - D^-1/2 A D^-1/2. The cluster
    count K maximizes (g[i+1] - g[i]) / g[i] over i >= 2 (1-based,
    ascending eigenvalues). When K equals the number of connected components
    the components are the clusters; otherwise k-means runs on the
    row-normalized leading K eigenvectors.
    """
    streams = streams or SeedStreams(0)
    a = a_binary.values
    m = a.shape[0]
    off_diagonal = a - np.diag(np.diag(a))
    n_components, components = connected_components(csr_matrix(off_diagonal), directed=False)

    degree = a.sum(axis=1)
    scale = 1.0 / np.sqrt(degree)
    laplacian = np.eye(m) - scale[:, None] * a * scale[None, :]
    eigenvalues, eigenvectors = np.linalg.eigh(laplacian)
    eigengaps = np.diff(eigenvalues) / np.maximum(eigenvalues[:-1], EIGEN_FLOOR)

    if m <= 2 or n_components == m:
        k = n_components
    else:
        k = int(np.argmax(eigengaps[1:])) + 2

    if k == n_components:
        labels = _relabel(components)
    else:
        points = normalize(eigenvectors[:, :k], norm="l2", axis=1)
        labels = _relabel(_kmeans(points, k, restarts, streams, round_index))
        k = int(labels.max()) + 1
    logger.debug(f"eigengaps {np.round(eigengaps[:min(10, len(eigengaps))], 4).tolist()} -> K={k}")
    return ClusterResult(k=k, labels=labels, eigenvalues=eigenvalues, eigengaps=eigengaps)


def _sign(vector: np.ndarray) -> np.ndarray:
    return sign_normalize(vector / np.linalg.norm(vector))


def harvest_rank1(
    x: Union[CongestionMatrix, np.ndarray],
    clusters: ClusterResult,
    rank_tol: float = 1e-6,
    min_size: int = 2,
) -> tuple[np.ndarray, np.ndarray, ClusterResult]:
    """
    Take the dominant direction of every rank-1 cluster.

    A cluster is rank 1 when it has at least ``min_size`` columns and its
    second singular value is below ``rank_tol`` times the first.

    Returns:
        (basis vectors as columns, residual column indices, clusters with ranks)
    """
    values = _values(x)
    vectors, residual, ranks = [], [], []
    for label in range(clusters.k):
        members = clusters.members(label)
        u, s, _ = np.linalg.svd(values[:, members], full_matrices=False)
        rank = int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0
        ranks.append(rank)
        if len(members) >= min_size and rank == 1:
            vectors.append(_sign(u[:, 0]))
        else:
            residual.extend(members.tolist())
    basis = np.column_stack(vectors) if vectors else np.zeros((values.shape[0], 0))
    result = ClusterResult(
        k=clusters.k,
        labels=clusters.labels,
        eigenvalues=clusters.eigenvalues,
        eigengaps=clusters.eigengaps,
        ranks=tuple(ranks),
    )
    return basis, np.array(sorted(residual), dtype=int), result


def harvested_labels(clusters: ClusterResult, min_size: int = 2) -> list[int]:
    """Labels ``harvest_rank1`` took a basis vector from, in harvest order."""
    return [
        label for label, rank in enumerate(clusters.ranks)
        if rank == 1 and len(clusters.members(label)) >= min_size
    ]


def project_complement(
    x: CongestionMatrix,
    basis: Union[BasisSet, np.ndarray],
    zero_tol: float = 1e-6,
    reference_norm: Optional[float] = None,
) -> tuple[CongestionMatrix, np.ndarray, np.ndarray]:
    """
    Project columns onto the orthogonal complement of span(basis).

    Columns whose projected norm is at most ``zero_tol * reference_norm``
    are dropped (default reference: median column norm of ``x``). Survivors
    are expressed in an orthonormal complement frame Q, and the returned
    matrix's projection is updated so node-space back-mapping still works.

    Returns:
        (projected matrix, kept column indices, Q with shape dim x (dim - rank(basis)))
    """
    vectors = basis.vectors if isinstance(basis, BasisSet) else basis
    q = complement_frame(vectors, x.rank)
    coords = q.T @ x.values
    if reference_norm is None:
        reference_norm = float(np.median(np.linalg.norm(x.values, axis=0))) if x.n_columns else 0.0
    keep = np.flatnonzero(np.linalg.norm(coords, axis=0) > zero_tol * reference_norm)
    projection = q.T if x.projection is None else q.T @ x.projection
    projected = CongestionMatrix(
        values=coords[:, keep],
        intervals=tuple(x.intervals[i] for i in keep),
        node_ids=x.node_ids,
        projection=projection,
        dropped=x.dropped,
    )
    return projected, keep, q


def _lift(cluster_columns: np.ndarray, prior: np.ndarray, fallback: np.ndarray, rank_tol: float) -> np.ndarray:
    """
    Express a harvested direction in the working frame.

    The cluster's original columns span the new basis vector together with
    earlier ones; the part of that span not shared with earlier bases is
    the lifted vector. Falls back to the complement-frame direction when
    the span does not add exactly one direction.
    """
    span = span_basis(cluster_columns, rank_tol)
    fresh = new_directions(span, span_basis(prior, rank_tol) if prior.size else prior)
    if fresh.shape[1] != 1:
        return _sign(fallback)
    return _sign(fresh[:, 0])


def bottom_up_search(
    x: CongestionMatrix,
    config: Optional[BottomUpConfig] = None,
    streams: Optional[SeedStreams] = None,
) -> BottomUpResult:
    """
    Repeat affinity -> cutoff -> spectral clustering -> rank-1 harvest ->
    complement projection until a round harvests nothing, no columns remain
    or ``max_rounds`` is reached.
    """
    config = config or BottomUpConfig()
    streams = streams or SeedStreams(0)
    dim = x.rank
    max_rounds = config.max_rounds or dim
    reference_norm = float(np.median(np.linalg.norm(x.values, axis=0)))

    basis = BasisSet.empty(dim)
    frame = np.eye(dim)
    current = x
    columns = np.arange(x.n_columns)
    rounds: list[RoundLog] = []

    for round_index in range(1, max_rounds + 1):
        if current.n_columns == 0 or current.rank == 0:
            break
        started = time.time()
        a_binary = cutoff(affinity(current), config.eps_cutoff)
        clusters = spectral_cluster(a_binary, streams, config.kmeans_restarts, round_index)
        harvested, residual, clusters = harvest_rank1(
            current, clusters, config.rank_tol, config.min_cluster_size
        )

        lifted = []
        for j, label in enumerate(harvested_labels(clusters, config.min_cluster_size)):
            members = clusters.members(label)
            prior = np.hstack([basis.vectors] + [v[:, None] for v in lifted])
            lifted.append(_lift(x.values[:, columns[members]], prior, frame @ harvested[:, j], config.rank_tol))
        if lifted:
            basis = basis.extend(np.column_stack(lifted), f"{SearchMethod.BOTTOM_UP.value} round {round_index}")

        log_columns, log_labels, log_values = current.intervals, clusters.labels, current.values
        n_before = current.n_columns
        if harvested.shape[1]:
            projected, keep, q = project_complement(current, harvested, config.zero_tol, reference_norm)
            current, columns, frame = projected, columns[keep], frame @ q

        rounds.append(RoundLog(
            round_index=round_index,
            k=clusters.k,
            eigengaps=tuple(float(g) for g in clusters.eigengaps[:20]),
            cluster_sizes=tuple(len(clusters.members(label)) for label in range(clusters.k)),
            harvested=harvested.shape[1],
            residual_size=current.n_columns,
            working_dim=frame.shape[1],
            seconds=time.time() - started,
            columns=np.array(log_columns),
            labels=log_labels,
            values=log_values,
        ))
        logger.info(
            f"round {round_index}: {n_before} columns, K={clusters.k}, harvested {harvested.shape[1]}, "
            f"residual {current.n_columns} in dim {frame.shape[1]}"
        )
        logger.debug(f"round {round_index} cluster sizes {rounds[-1].cluster_sizes} ranks {clusters.ranks}")
        if harvested.shape[1] == 0:
            break

    gap = current.n_columns > 0
    if gap:
        logger.info(f"basis gap: {current.n_columns} columns unresolved in dim {frame.shape[1]}")
    return BottomUpResult(
        basis=basis,
        residual=current if gap else None,
        residual_columns=columns if gap else np.array([], dtype=int),
        frame=frame,
        rounds=rounds,
    )
