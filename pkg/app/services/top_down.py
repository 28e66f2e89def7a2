"""
Top-down subspace search.

Looks for a hyperplane that contains many columns, first with dual
principal component pursuit (DPCP: minimize ||X^T n||_1 on the sphere via a
sequence of linear programs), then by random sampling (RS) of k-1 columns.
Inliers are searched again inside the hyperplane one dimension lower;
outliers are searched again in the same dimension. Leaves of the resulting
tree hold low-rank column groups whose spans together give the basis.
"""
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from app.models.schema import SearchMethod
from app.models.subspace import BasisSet, CongestionMatrix, HyperplaneFit, SearchNode, SearchTree
from app.services.lp_solver import LinearProgram, solve_lp
from app.utils.errors import SolverError
from app.utils.linalg import complement_frame, new_directions, numerical_rank, sign_normalize, span_basis
from app.utils.seeding import RS_STREAM, SeedStreams

logger = logging.getLogger(__name__)

LEAF_BOTTOM = "bottom"
LEAF_DEPTH = "depth-limit"
LEAF_LINE = "line"


@dataclass
class TopDownConfig:
    """Configuration for the top-down search."""
    p: float = 0.05
    n_trials: Optional[int] = None
    inlier_tol: float = 1e-6
    rank_tol: float = 1e-6
    conv_tol: float = 1e-9
    max_iter: int = 50
    fail_prob: float = 1e-3
    depth_limit: Optional[int] = None
    redraw_factor: int = 10
    lp_method: str = "highs-ds"


@dataclass
class TopDownResult:
    basis: BasisSet
    tree: SearchTree
    seconds: float = 0.0
    leaf_contributions: dict[int, int] = field(default_factory=dict)


def rs_trials_for(p: float, k: int, fail_prob: float = 1e-3) -> int:
    """Trials needed so RS misses a hyperplane holding share ``p`` with probability <= ``fail_prob``."""
    hit = p ** (k - 1)
    if hit >= 1.0:
        return 1
    if hit <= 0.0:
        raise ValueError(f"inlier share must be positive, got {p}")
    return max(1, math.ceil(math.log(fail_prob) / math.log1p(-hit)))


def rs_success_probability(q: float, m: int, k: int, exact: bool = True) -> float:
    """
    Chance that one RS trial draws k-1 inliers when a share ``q`` of ``m``
    columns lies on the hyperplane. ``exact=False`` gives the q^(k-1)
    approximation.
    """
    if not exact:
        return q ** (k - 1)
    inliers = int(round(q * m))
    return math.comb(inliers, k - 1) / math.comb(m, k - 1)


def l1_min_linear_constraint(
    x: np.ndarray,
    n_prev: np.ndarray,
    method: str = "highs-ds",
) -> tuple[np.ndarray, float]:
    """
    Solve min ||X^T m||_1 s.t. m^T n_prev = 1 as an LP with split variables.

    Variables are [m (free), t >= 0] with -t <= X^T m <= t.

    Returns:
        (m, objective)
    """
    dim, n_cols = x.shape
    c = np.concatenate([np.zeros(dim), np.ones(n_cols)])
    eye = np.eye(n_cols)
    a_ub = np.vstack([np.hstack([x.T, -eye]), np.hstack([-x.T, -eye])])
    b_ub = np.zeros(2 * n_cols)
    a_eq = np.concatenate([n_prev, np.zeros(n_cols)])[None, :]
    bounds = [(None, None)] * dim + [(0.0, None)] * n_cols
    result = solve_lp(
        LinearProgram(c, a_ub, b_ub, a_eq, np.array([1.0]), bounds),
        method=method,
        label="l1 hyperplane step",
    )
    return result.x[:dim], result.objective


def check_hyperplane(
    x: np.ndarray,
    normal: np.ndarray,
    p: float,
    inlier_tol: float = 1e-6,
    min_inliers: int = 0,
) -> tuple[bool, np.ndarray]:
    """
    Count columns on the hyperplane {v : normal^T v = 0}.

    A column is an inlier when |normal^T x| <= inlier_tol * ||x||. The test
    passes when the inlier count exceeds both ``p * M`` and ``min_inliers``.
    """
    residual = np.abs(normal @ x)
    inliers = np.flatnonzero(residual <= inlier_tol * np.linalg.norm(x, axis=0))
    count = len(inliers)
    return count > p * x.shape[1] and count > min_inliers, inliers


def _outliers(n_cols: int, inliers: np.ndarray) -> np.ndarray:
    mask = np.ones(n_cols, dtype=bool)
    mask[inliers] = False
    return np.flatnonzero(mask)


def _least_direction(x: np.ndarray) -> np.ndarray:
    u, _, _ = np.linalg.svd(x, full_matrices=True)
    return u[:, -1]


def dpcp(
    x: np.ndarray,
    config: Optional[TopDownConfig] = None,
    min_inliers: Optional[int] = None,
) -> Optional[HyperplaneFit]:
    """
    Fit the hyperplane normal minimizing ||X^T n||_1 with ||n|| = 1.

    Starts from the least left singular vector and iterates the normalized
    LP step until the normal moves less than ``conv_tol`` or a step would
    raise the objective, so the returned trace never increases. The normal is
    then refit as the least singular direction of its inliers. Returns None
    when the hyperplane fails ``check_hyperplane``.
    """
    config = config or TopDownConfig()
    dim, n_cols = x.shape
    if dim < 2 or n_cols == 0:
        return None
    min_inliers = dim - 1 if min_inliers is None else min_inliers

    normal = _least_direction(x)
    trace = [float(np.abs(x.T @ normal).sum())]
    for _ in range(config.max_iter):
        try:
            m, _ = l1_min_linear_constraint(x, normal, config.lp_method)
        except SolverError as e:
            logger.warning(f"DPCP step failed, keeping current normal: {e}")
            break
        step = m / np.linalg.norm(m)
        value = float(np.abs(x.T @ step).sum())
        if value > trace[-1]:
            # a rise is LP round-off; keep the current normal
            break
        trace.append(value)
        moved = np.linalg.norm(step - normal)
        normal = step
        if moved < config.conv_tol:
            break

    passes, inliers = check_hyperplane(x, normal, config.p, config.inlier_tol, min_inliers)
    if not passes:
        return None
    refit = _least_direction(x[:, inliers])
    refit_passes, refit_inliers = check_hyperplane(x, refit, config.p, config.inlier_tol, min_inliers)
    if refit_passes and len(refit_inliers) >= len(inliers):
        normal, inliers = refit, refit_inliers
    normal = sign_normalize(normal)
    return HyperplaneFit(
        normal=normal,
        inliers=inliers,
        outliers=_outliers(n_cols, inliers),
        method=SearchMethod.DPCP,
        objective=float(np.abs(x.T @ normal).sum()),
        trace=tuple(trace),
    )


def _sample_normal(samples: np.ndarray, rank_tol: float) -> Optional[np.ndarray]:
    if numerical_rank(samples, rank_tol) < samples.shape[1]:
        return None
    return complement_frame(samples, samples.shape[0])[:, 0]


def random_sample_norm(
    x: np.ndarray,
    p: float,
    n_trials: int,
    inlier_tol: float = 1e-6,
    seed: Union[int, np.random.Generator, None] = 0,
    min_inliers: Optional[int] = None,
    rank_tol: float = 1e-9,
    redraw_factor: int = 10,
) -> Optional[HyperplaneFit]:
    """
    Draw k-1 distinct columns per trial and test the hyperplane they span.

    Rank-deficient samples are redrawn without using up a trial (up to
    ``redraw_factor * n_trials`` redraws). When there are no more distinct
    subsets than trials, every subset is tried once instead.
    """
    dim, n_cols = x.shape
    need = dim - 1
    if dim < 2 or n_cols < need:
        return None
    min_inliers = need if min_inliers is None else min_inliers
    rng = np.random.default_rng(seed)

    if math.comb(n_cols, need) <= n_trials:
        candidates = (np.array(c) for c in itertools.combinations(range(n_cols), need))
        budget = math.comb(n_cols, need)
    else:
        candidates = (rng.choice(n_cols, size=need, replace=False) for _ in itertools.count())
        budget = n_trials

    trials = redraws = 0
    for picked in candidates:
        if trials >= budget:
            break
        normal = _sample_normal(x[:, picked], rank_tol)
        if normal is None:
            redraws += 1
            if redraws > redraw_factor * n_trials:
                break
            continue
        trials += 1
        passes, inliers = check_hyperplane(x, normal, p, inlier_tol, min_inliers)
        if passes:
            normal = sign_normalize(normal)
            return HyperplaneFit(
                normal=normal,
                inliers=inliers,
                outliers=_outliers(n_cols, inliers),
                method=SearchMethod.RS,
                objective=float(np.abs(x.T @ normal).sum()),
            )
    return None


def top_down_search(
    x: Union[CongestionMatrix, np.ndarray],
    config: Optional[TopDownConfig] = None,
    streams: Optional[SeedStreams] = None,
) -> TopDownResult:
    """
    Recursive hyperplane search over ``x`` (dim x M).

    Each node tries DPCP, then RS. A passing fit sends its inliers one
    dimension down (into hyperplane coordinates) and its outliers back
    through the same dimension. A node where both fail, or which reaches the
    depth limit, becomes a leaf. Leaves are then visited by ascending rank;
    each adds the directions of its span not already collected.
    """
    config = config or TopDownConfig()
    streams = streams or SeedStreams(0)
    values = x.values if isinstance(x, CongestionMatrix) else np.asarray(x, dtype=float)
    dim = values.shape[0]
    depth_limit = config.depth_limit or 2 * dim
    tree = SearchTree()
    started = time.time()

    pending = [(np.arange(values.shape[1]), np.eye(dim), 0, None, "root")]
    while pending:
        columns, frame, depth, parent, branch = pending.pop(0)
        coords = frame.T @ values[:, columns]
        node = tree.add(SearchNode(
            node_id=len(tree.nodes),
            parent=parent,
            depth=depth,
            dim=frame.shape[1],
            columns=columns,
            branch=branch,
            rank=numerical_rank(coords, config.rank_tol),
        ))

        if node.dim < 2:
            node.leaf = LEAF_LINE
        elif depth >= depth_limit:
            node.leaf = LEAF_DEPTH
        else:
            fit = dpcp(coords, config)
            if fit is None:
                trials = config.n_trials or rs_trials_for(config.p, node.dim, config.fail_prob)
                fit = random_sample_norm(
                    coords, config.p, trials, config.inlier_tol,
                    streams.generator(RS_STREAM, node.node_id),
                    redraw_factor=config.redraw_factor,
                )
            if fit is None:
                node.leaf = LEAF_BOTTOM
            else:
                node.fit = fit
                inner = frame @ complement_frame(fit.normal[:, None], node.dim)
                pending.append((columns[fit.inliers], inner, depth + 1, node.node_id, "inlier"))
                if len(fit.outliers):
                    pending.append((columns[fit.outliers], frame, depth + 1, node.node_id, "outlier"))

        inliers = len(node.fit.inliers) if node.fit is not None else 0
        parent_text = "-" if parent is None else parent
        logger.info(
            f"node {node.node_id} (parent {parent_text}, {branch}, dim {node.dim}): "
            f"{len(columns)} columns, method {node.method}, inliers {inliers}, rank {node.rank}"
            + (f", leaf {node.leaf}" if node.leaf else "")
        )

    basis = BasisSet.empty(dim)
    collected = np.zeros((dim, 0))
    contributions = {}
    for leaf in sorted(tree.leaves, key=lambda n: (n.rank, n.node_id)):
        span = span_basis(values[:, leaf.columns], config.rank_tol)
        fresh = new_directions(span, collected)
        contributions[leaf.node_id] = fresh.shape[1]
        if fresh.shape[1] == 0:
            continue
        fresh = np.column_stack([sign_normalize(v) for v in fresh.T])
        basis = basis.extend(fresh, f"{SearchMethod.TOP_DOWN.value} leaf {leaf.node_id}")
        collected = span_basis(np.hstack([collected, fresh]), config.rank_tol)

    seconds = time.time() - started
    logger.info(
        f"top-down search: {len(tree.nodes)} nodes, {len(tree.leaves)} leaves, "
        f"{basis.size} basis vectors, {seconds:.2f}s"
    )
    return TopDownResult(basis=basis, tree=tree, seconds=seconds, leaf_contributions=contributions)
