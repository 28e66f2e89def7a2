"""
Basis assembly, coefficient recovery, status encoding and evaluation.
"""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.models.subspace import BasisSet, CongestionMatrix, IdentificationReport, RowMatch, StatusCodeSeq
from app.utils.errors import AlignmentError, RankDeficitError, ShapeMismatchError
from app.utils.linalg import numerical_rank, unit_columns

logger = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-6
INDEPENDENCE_TOL = 1e-8
NONZERO_FLOOR = 1e-9
TIE_TOL = 1e-12


@dataclass(frozen=True)
class AssembledBasis:
    """Final basis B: unit columns in the working frame and in node space."""
    working: np.ndarray
    node_space: np.ndarray
    provenance: tuple[str, ...]
    labels: tuple[str, ...]

    @property
    def k(self) -> int:
        return self.working.shape[1]


def assemble_basis(
    bottom: BasisSet,
    top: BasisSet,
    x: CongestionMatrix,
    rank_tol: float = 1e-6,
) -> AssembledBasis:
    """
    Stack bottom-up and top-down vectors, drop duplicates, and check the
    result spans the data.

    Raises:
        RankDeficitError: fewer independent vectors than the rank of ``x``
    """
    vectors = np.hstack([bottom.vectors, top.vectors])
    provenance = bottom.provenance + top.provenance
    kept: list[int] = []
    for j in range(vectors.shape[1]):
        v = vectors[:, j] / np.linalg.norm(vectors[:, j])
        if kept:
            current = vectors[:, kept] / np.linalg.norm(vectors[:, kept], axis=0)
            if np.max(np.abs(current.T @ v)) > 1.0 - DUPLICATE_TOL:
                logger.info(f"dropping duplicate basis vector {j} ({provenance[j]})")
                continue
            if numerical_rank(np.column_stack([current, v]), INDEPENDENCE_TOL) <= len(kept):
                logger.warning(f"dropping dependent basis vector {j} ({provenance[j]})")
                continue
        kept.append(j)

    working = unit_columns(vectors[:, kept]) if kept else np.zeros((x.rank, 0))
    target = numerical_rank(x.values, rank_tol)
    if working.shape[1] < target:
        missing = target - working.shape[1]
        if working.shape[1]:
            coeffs, *_ = np.linalg.lstsq(working, x.values, rcond=None)
            residual = x.values - working @ coeffs
        else:
            residual = x.values
        outside = int(np.sum(
            np.linalg.norm(residual, axis=0) > rank_tol * np.linalg.norm(x.values, axis=0)
        ))
        raise RankDeficitError(missing, outside)

    return AssembledBasis(
        working=working,
        node_space=x.to_node_space(working),
        provenance=tuple(provenance[j] for j in kept),
        labels=tuple(f"b{i + 1}" for i in range(len(kept))),
    )


def recover_chi(basis: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Coefficients of every column in the basis: pinv(B) @ X."""
    if basis.shape[0] != x.shape[0]:
        raise ShapeMismatchError(f"basis has {basis.shape[0]} rows, data has {x.shape[0]}")
    return np.linalg.pinv(basis) @ x


def encode_status(
    chi: np.ndarray,
    eps_rel: float = 1e-3,
    row_labels: Optional[Sequence[str]] = None,
    intervals: Optional[Sequence[str]] = None,
) -> StatusCodeSeq:
    """
    Mark coefficients that are large relative to their row.

    Entries above 1e-9 times the largest magnitude of their row count as
    nonzero; an entry is coded 1 when it exceeds ``eps_rel`` times the median
    nonzero magnitude of its row. Every threshold depends on its own row
    only, so rescaling a basis column leaves the codes unchanged. Rows
    without nonzero entries are dropped.
    """
    magnitude = np.abs(chi)
    k, m = magnitude.shape
    row_labels = list(row_labels) if row_labels is not None else [f"b{i + 1}" for i in range(k)]
    intervals = tuple(intervals) if intervals is not None else tuple(str(t) for t in range(m))

    codes, labels = [], []
    for j in range(k):
        floor = NONZERO_FLOOR * magnitude[j].max() if m else 0.0
        nonzero = magnitude[j][magnitude[j] > floor]
        if nonzero.size == 0:
            logger.warning(f"row {row_labels[j]} has no nonzero coefficient, dropped")
            continue
        codes.append(magnitude[j] > eps_rel * np.median(nonzero))
        labels.append(row_labels[j])

    matrix = np.array(codes, dtype=bool).reshape(len(codes), m)
    empty = int(np.sum(~matrix.any(axis=0))) if matrix.size else m
    if empty:
        logger.warning(f"{empty} interval(s) decode to no congested line")
    return StatusCodeSeq(codes=matrix, row_labels=tuple(labels), intervals=intervals)


def align_truth(recovered: StatusCodeSeq, truth: StatusCodeSeq) -> StatusCodeSeq:
    """
    Restrict ``truth`` to the recovered intervals, in recovered order, and
    drop lines that never congest there.

    Raises:
        AlignmentError: a recovered interval is missing from the truth, or a
            congested truth interval is missing from the recovered codes
    """
    truth_index = {t: i for i, t in enumerate(truth.intervals)}
    recovered_set = set(recovered.intervals)
    unmatched = [t for t in recovered.intervals if t not in truth_index]
    congested = truth.codes.any(axis=0) if truth.codes.size else np.zeros(truth.m, dtype=bool)
    unmatched += [t for t, c in zip(truth.intervals, congested) if c and t not in recovered_set]
    if unmatched:
        raise AlignmentError(unmatched)

    columns = [truth_index[t] for t in recovered.intervals]
    codes = truth.codes[:, columns]
    active = codes.any(axis=1)
    return StatusCodeSeq(
        codes=codes[active],
        row_labels=tuple(label for label, a in zip(truth.row_labels, active) if a),
        intervals=recovered.intervals,
    )


def _greedy(scores: np.ndarray, recovered: StatusCodeSeq, truth: StatusCodeSeq) -> list[RowMatch]:
    matches: dict[int, RowMatch] = {}
    free_rows = set(range(scores.shape[0]))
    free_cols = set(range(scores.shape[1]))
    while free_rows and free_cols:
        rows, cols = sorted(free_rows), sorted(free_cols)
        sub = scores[np.ix_(rows, cols)]
        best = sub.max()
        # lowest truth line first, then lowest recovered row
        candidates = sorted((cols[c], rows[r]) for r, c in zip(*np.nonzero(sub >= best - TIE_TOL)))
        j, i = candidates[0]
        tie = (
            sum(1 for cj, ci in candidates if ci == i) > 1
            or sum(1 for cj, ci in candidates if cj == j) > 1
        )
        if tie:
            logger.warning(
                f"ambiguous match for {recovered.row_labels[i]}: picked line {truth.row_labels[j]} (score {best:.6f})"
            )
        matches[i] = RowMatch(recovered.row_labels[i], truth.row_labels[j], float(best), tie)
        free_rows.discard(i)
        free_cols.discard(j)
    for i in free_rows:
        matches[i] = RowMatch(recovered.row_labels[i], None, 0.0)
    return [matches[i] for i in range(scores.shape[0])]


def match_rows(
    recovered: StatusCodeSeq,
    truth: StatusCodeSeq,
    basis_node_space: Optional[np.ndarray] = None,
    ptdf_rows: Optional[np.ndarray] = None,
) -> tuple[RowMatch, ...]:
    """
    One-to-one greedy matching of recovered rows to truth lines.

    With ``basis_node_space`` (n_b x k_hat, columns ordered like the
    recovered rows) and ``ptdf_rows`` (k_true x n_b, ordered like the truth
    rows) the score is the absolute cosine; otherwise it is the share of
    agreeing code entries.
    """
    if recovered.m != truth.m:
        raise ShapeMismatchError(f"recovered codes cover {recovered.m} intervals, truth covers {truth.m}")
    if basis_node_space is not None and ptdf_rows is not None:
        b = unit_columns(basis_node_space)
        t = unit_columns(ptdf_rows.T)
        scores = np.abs(b.T @ t)
    else:
        scores = np.array([
            [np.mean(r == c) for c in truth.codes] for r in recovered.codes
        ]).reshape(recovered.k, truth.k)
    return tuple(_greedy(scores, recovered, truth))


def status_frequency(codes: StatusCodeSeq) -> list[tuple[str, int, float]]:
    """Distinct status columns with counts and shares, most frequent first."""
    words = ["".join("1" if bit else "0" for bit in column) for column in codes.codes.T]
    counts = Counter(words)
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [(word, count, count / total) for word, count in ranked]


def reorder_by_match(recovered: StatusCodeSeq, truth: StatusCodeSeq, matches: Sequence[RowMatch]) -> StatusCodeSeq:
    """Recovered codes with matched rows in truth-line order, unmatched rows last."""
    position = {label: i for i, label in enumerate(recovered.row_labels)}
    by_line = {m.truth: m.recovered for m in matches if m.truth is not None}
    order = [position[by_line[line]] for line in truth.row_labels if line in by_line]
    order += [position[m.recovered] for m in matches if m.truth is None]
    return StatusCodeSeq(
        codes=recovered.codes[order],
        row_labels=tuple(recovered.row_labels[i] for i in order),
        intervals=recovered.intervals,
    )


def miscode(
    recovered: StatusCodeSeq,
    truth: StatusCodeSeq,
    matches: Sequence[RowMatch],
) -> IdentificationReport:
    """
    Share of wrongly decoded line-interval flags.

    k is the larger of the recovered and true line counts; recovered rows
    without a line and lines without a recovered row count as entirely wrong.
    """
    if recovered.m != truth.m:
        raise ShapeMismatchError(f"recovered codes cover {recovered.m} intervals, truth covers {truth.m}")
    m = recovered.m
    k = max(recovered.k, truth.k)
    rec_rows = {label: row for label, row in zip(recovered.row_labels, recovered.codes)}
    true_rows = {label: row for label, row in zip(truth.row_labels, truth.codes)}

    wrong = 0
    row_rates: dict[str, float] = {}
    matched_lines = set()
    for match in matches:
        if match.truth is None:
            row_rates[match.recovered] = 1.0
            wrong += m
            continue
        matched_lines.add(match.truth)
        errors = int(np.sum(rec_rows[match.recovered] != true_rows[match.truth]))
        row_rates[match.truth] = errors / m if m else 0.0
        wrong += errors
    for line in truth.row_labels:
        if line not in matched_lines:
            row_rates[line] = 1.0
            wrong += m

    total = wrong / (k * m) if k and m else 0.0
    if recovered.k != truth.k:
        logger.warning(f"recovered {recovered.k} rows but truth has {truth.k} ever-congested lines")
    return IdentificationReport(
        total_miscode=total,
        row_miscode=row_rates,
        frequency=status_frequency(reorder_by_match(recovered, truth, matches)),
        matches=tuple(matches),
        k_recovered=recovered.k,
        k_true=truth.k,
    )
