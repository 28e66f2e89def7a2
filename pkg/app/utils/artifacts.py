"""
CSV and text artifacts written and read by the commands.
"""
import json
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from app.models.subspace import (
    AffinityMatrix,
    CongestionMatrix,
    IdentificationReport,
    LmpPanel,
    RoundLog,
    StatusCodeSeq,
)
from app.services.data_pipeline import normalize_timestamps, sort_nodes
from app.utils.errors import DataIngestionError, MissingArtifactError

PathLike = Union[str, Path]

LMP_FILE = "lmp.csv"
TRUTH_FILE = "truth.csv"
BASIS_FILE = "basis.csv"
CODES_FILE = "codes.csv"
WORKING_FILE = "working.csv"
ROUNDS_FILE = "rounds.jsonl"
TREE_FILE = "tree.txt"
FREQUENCY_FILE = "frequency.csv"
REPORT_FILE = "report.txt"
BLOCKS_FILE = "blocks.csv"

# outputs derived from one identify run; a new run replaces them all
IDENTIFY_DERIVED = (
    "working_round*.csv", "affinity_round*.csv", TREE_FILE, REPORT_FILE, FREQUENCY_FILE, BLOCKS_FILE,
)


def working_round_file(round_index: int) -> str:
    return f"working_round{round_index}.csv"


def affinity_round_file(round_index: int) -> str:
    return f"affinity_round{round_index}.csv"


def require(path: Path, produced_by: str) -> Path:
    if not path.is_file():
        raise MissingArtifactError(f"{path} not found; run `{produced_by}` first")
    return path


def write_lmp_csv(panel: LmpPanel, path: PathLike) -> None:
    """Long format: node,timestamp,mcc[,mlc,mec]."""
    n_b, m = panel.shape
    frame = pd.DataFrame({
        "node": np.repeat(panel.node_ids, m),
        "timestamp": np.tile(panel.timestamps, n_b),
        "mcc": panel.congestion.reshape(-1),
    })
    if panel.loss is not None:
        frame["mlc"] = panel.loss.reshape(-1)
    if panel.energy is not None:
        frame["mec"] = panel.energy.reshape(-1)
    frame.to_csv(path, index=False)


def write_truth_csv(
    timestamps: Sequence[str],
    line_ids: Sequence[int],
    mu: np.ndarray,
    status: np.ndarray,
    path: PathLike,
) -> None:
    """``mu`` and ``status`` are lines x intervals."""
    n_l, m = mu.shape
    frame = pd.DataFrame({
        "interval": np.tile(timestamps, n_l),
        "line_id": np.repeat(line_ids, m),
        "mu": mu.reshape(-1),
        "congested": status.reshape(-1).astype(int),
    })
    frame.to_csv(path, index=False)


def read_truth_csv(path: PathLike) -> StatusCodeSeq:
    """Truth codes with one row per line id, columns in timestamp order."""
    frame = pd.read_csv(path, dtype={"interval": str, "line_id": str})
    missing = {"interval", "line_id", "congested"} - set(frame.columns)
    if missing:
        raise MissingArtifactError(f"{path} lacks column(s): {', '.join(sorted(missing))}")
    try:
        frame["interval"] = normalize_timestamps(frame["interval"])
    except (ValueError, TypeError) as e:
        raise DataIngestionError(f"unparseable intervals in {path}: {e}") from e
    grid = frame.pivot(index="line_id", columns="interval", values="congested").fillna(0)
    lines = sort_nodes(grid.index.tolist())
    intervals = sorted(grid.columns.tolist())
    grid = grid.reindex(index=lines, columns=intervals)
    return StatusCodeSeq(
        codes=grid.to_numpy(dtype=int).astype(bool),
        row_labels=tuple(lines),
        intervals=tuple(intervals),
    )


def write_basis_csv(node_ids: Sequence[str], vectors: np.ndarray, labels: Sequence[str], path: PathLike) -> None:
    frame = pd.DataFrame(vectors, columns=list(labels))
    frame.insert(0, "node", list(node_ids))
    frame.to_csv(path, index=False)


def read_basis_csv(path: PathLike) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
    frame = pd.read_csv(path, dtype={"node": str})
    labels = tuple(c for c in frame.columns if c != "node")
    return tuple(frame["node"]), frame[list(labels)].to_numpy(dtype=float), labels


def write_codes_csv(codes: StatusCodeSeq, path: PathLike) -> None:
    """One row per interval: the code word plus one 0/1 column per recovered row."""
    frame = pd.DataFrame(codes.codes.T.astype(int), columns=list(codes.row_labels))
    frame.insert(0, "code", ["".join(str(b) for b in row) for row in codes.codes.T.astype(int)])
    frame.insert(0, "interval", list(codes.intervals))
    frame.to_csv(path, index=False)


def read_codes_csv(path: PathLike) -> StatusCodeSeq:
    frame = pd.read_csv(path, dtype={"interval": str, "code": str})
    labels = tuple(c for c in frame.columns if c not in ("interval", "code"))
    return StatusCodeSeq(
        codes=frame[list(labels)].to_numpy(dtype=int).T.astype(bool).reshape(len(labels), len(frame)),
        row_labels=labels,
        intervals=tuple(frame["interval"]),
    )


def write_working_csv(x: CongestionMatrix, path: PathLike) -> None:
    """Working matrix with an interval-id header row, one row per coordinate."""
    frame = pd.DataFrame(x.values, columns=list(x.intervals))
    frame.insert(0, "coordinate", [f"x{i + 1}" for i in range(x.rank)])
    frame.to_csv(path, index=False)


def read_working_csv(path: PathLike) -> tuple[np.ndarray, tuple[str, ...]]:
    frame = pd.read_csv(path)
    intervals = tuple(c for c in frame.columns if c != "coordinate")
    return frame[list(intervals)].to_numpy(dtype=float), intervals


def write_rounds_jsonl(rounds: Sequence[RoundLog], path: PathLike) -> None:
    """Round summaries without wall-clock times, so reruns match byte for byte."""
    with open(path, "w", encoding="utf-8") as f:
        for r in rounds:
            f.write(json.dumps({
                "round": r.round_index,
                "k": r.k,
                "eigengaps": [round(g, 10) for g in r.eigengaps],
                "cluster_sizes": list(r.cluster_sizes),
                "harvested": r.harvested,
                "residual_size": r.residual_size,
                "working_dim": r.working_dim,
            }) + "\n")


def read_rounds_jsonl(path: PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_frequency_csv(frequency: Sequence[tuple[str, int, float]], path: PathLike) -> None:
    pd.DataFrame(list(frequency), columns=["code", "count", "share"]).to_csv(path, index=False)


def write_blocks_csv(codes: StatusCodeSeq, path: PathLike) -> None:
    """Line x interval grid of 0/1 flags for block displays."""
    frame = pd.DataFrame(codes.codes.astype(int), columns=list(codes.intervals))
    frame.insert(0, "row", list(codes.row_labels))
    frame.to_csv(path, index=False)


def write_affinity_csv(a: AffinityMatrix, intervals: Sequence[str], path: PathLike) -> None:
    frame = pd.DataFrame(a.values.astype(int) if a.binary else a.values, columns=list(intervals))
    frame.insert(0, "interval", list(intervals))
    frame.to_csv(path, index=False)


def format_report(report: IdentificationReport) -> str:
    lines = [
        f"total miscode: {report.total_miscode:.6%}",
        f"recovered rows: {report.k_recovered}  ever-congested lines: {report.k_true}"
        + ("  (count mismatch)" if report.k_mismatch else ""),
        "",
        "per-row miscode:",
    ]
    lines += [f"  {label}: {rate:.6%}" for label, rate in report.row_miscode.items()]
    lines += ["", "row matching (recovered -> line, score):"]
    for match in report.matches:
        target = match.truth if match.truth is not None else "-"
        lines.append(f"  {match.recovered} -> {target}  {match.score:.6f}" + ("  tie" if match.tie else ""))
    lines += ["", "status frequency (code, count, share):"]
    lines += [f"  {code}  {count}  {share:.4%}" for code, count, share in report.frequency]
    return "\n".join(lines) + "\n"
