"""
Data models for LMP panels, working matrices and the subspace search.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from app.models.schema import SearchMethod


@dataclass(frozen=True)
class LmpPanel:
    """Dense node x interval panel of LMP components in $/MWh."""
    node_ids: tuple[str, ...]
    timestamps: tuple[str, ...]
    congestion: np.ndarray
    energy: Optional[np.ndarray] = None
    loss: Optional[np.ndarray] = None
    aliases: dict[str, str] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.congestion.shape

    def with_congestion(self, congestion: np.ndarray) -> "LmpPanel":
        return replace(self, congestion=congestion)


@dataclass(frozen=True)
class CongestionMatrix:
    """
    Working matrix X: columns are congested intervals.

    When PCA was applied, ``values`` holds k x M coordinates and
    ``projection`` (k x n_b, orthonormal rows) maps them back to node space.
    """
    values: np.ndarray
    intervals: tuple[str, ...]
    node_ids: tuple[str, ...]
    projection: Optional[np.ndarray] = None
    dropped: tuple[str, ...] = ()

    @property
    def rank(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def to_node_space(self, vectors: np.ndarray) -> np.ndarray:
        """Map working-frame column vectors to node space."""
        if self.projection is None:
            return vectors
        return self.projection.T @ vectors


@dataclass(frozen=True)
class AffinityMatrix:
    values: np.ndarray
    binary: bool = False


@dataclass(frozen=True)
class ClusterResult:
    k: int
    labels: np.ndarray
    eigenvalues: np.ndarray
    eigengaps: np.ndarray
    ranks: tuple[int, ...] = ()

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


@dataclass(frozen=True)
class BasisSet:
    """Unit basis vectors (columns) in the working frame with their provenance."""
    vectors: np.ndarray
    provenance: tuple[str, ...] = ()

    @classmethod
    def empty(cls, dim: int) -> "BasisSet":
        return cls(np.zeros((dim, 0)), ())

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def extend(self, vectors: np.ndarray, tag: str) -> "BasisSet":
        if vectors.size == 0:
            return self
        return BasisSet(
            np.hstack([self.vectors, vectors]),
            self.provenance + (tag,) * vectors.shape[1],
        )


@dataclass(frozen=True)
class RoundLog:
    """What one bottom-up round saw and harvested."""
    round_index: int
    k: int
    eigengaps: tuple[float, ...]
    cluster_sizes: tuple[int, ...]
    harvested: int
    residual_size: int
    working_dim: int
    seconds: float
    columns: np.ndarray = field(repr=False, default=None)
    labels: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class HyperplaneFit:
    normal: np.ndarray
    inliers: np.ndarray
    outliers: np.ndarray
    method: SearchMethod
    objective: float
    trace: tuple[float, ...] = ()


@dataclass
class SearchNode:
    """One node of the top-down tree; ``columns`` index the root matrix."""
    node_id: int
    parent: Optional[int]
    depth: int
    dim: int
    columns: np.ndarray
    branch: str
    fit: Optional[HyperplaneFit] = None
    rank: int = 0
    leaf: Optional[str] = None

    @property
    def method(self) -> str:
        return self.fit.method.value if self.fit is not None else "-"


@dataclass
class SearchTree:
    nodes: list[SearchNode] = field(default_factory=list)

    def add(self, node: SearchNode) -> SearchNode:
        self.nodes.append(node)
        return node

    @property
    def leaves(self) -> list[SearchNode]:
        return [node for node in self.nodes if node.leaf is not None]

    def render(self) -> str:
        lines = ["node_id,parent,depth,branch,dim,method,columns,inliers,rank,leaf"]
        for node in self.nodes:
            inliers = len(node.fit.inliers) if node.fit is not None else 0
            parent = "" if node.parent is None else str(node.parent)
            lines.append(
                f"{node.node_id},{parent},{node.depth},{node.branch},{node.dim},{node.method},"
                f"{len(node.columns)},{inliers},{node.rank},{node.leaf or ''}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StatusCodeSeq:
    """Boolean k x M congestion codes with row labels and interval ids."""
    codes: np.ndarray
    row_labels: tuple[str, ...]
    intervals: tuple[str, ...]

    @property
    def k(self) -> int:
        return self.codes.shape[0]

    @property
    def m(self) -> int:
        return self.codes.shape[1]


@dataclass(frozen=True)
class RowMatch:
    recovered: str
    truth: Optional[str]
    score: float
    tie: bool = False


@dataclass(frozen=True)
class IdentificationReport:
    total_miscode: float
    row_miscode: dict[str, float]
    frequency: list[tuple[str, int, float]]
    matches: tuple[RowMatch, ...]
    timings: dict[str, float] = field(default_factory=dict)
    k_recovered: int = 0
    k_true: int = 0

    @property
    def k_mismatch(self) -> bool:
        return self.k_recovered != self.k_true
