"""
LMP data pipeline: CSV ingestion, node deduplication, loss-term elimination,
congestion filtering and PCA reduction to the working matrix.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.models.network import ScenarioRecord
from app.models.schema import LmpCsvSchema, MarketMode
from app.models.subspace import CongestionMatrix, LmpPanel
from app.utils.errors import DataIngestionError, NoCongestionError

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"
CONGESTION_TOL = 1e-4
ENERGY_TOL = 1e-8


def _node_key(node: str) -> tuple:
    return (0, int(node), "") if node.isdigit() else (1, 0, node)


def sort_nodes(nodes: Sequence[str]) -> list[str]:
    """Numeric ids in numeric order, then the rest lexicographically."""
    return sorted(nodes, key=_node_key)


def normalize_timestamps(stamps: pd.Series) -> pd.Series:
    """ISO-8601 strings in UTC without offset; naive stamps are taken as UTC."""
    return pd.to_datetime(stamps, utc=True).dt.strftime(TIMESTAMP_FORMAT)


def ingest_lmp_csv(
    path: Union[str, Path],
    schema: Optional[LmpCsvSchema] = None,
    forward_fill: bool = False,
) -> LmpPanel:
    """
    Read a long-format LMP export into a dense node x interval panel.

    With the default schema the loss and energy columns are optional; an
    explicit schema requires every column it names.

    Raises:
        DataIngestionError: unreadable file, missing columns, conflicting
            duplicates, or gaps without ``forward_fill``
    """
    strict = schema is not None
    schema = schema or LmpCsvSchema()
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataIngestionError(f"cannot read LMP file {path}: {e}") from e

    components = {"congestion": schema.congestion, "loss": schema.loss, "energy": schema.energy}
    required = [schema.node, schema.timestamp, schema.congestion]
    if strict:
        required += [name for name in (schema.loss, schema.energy) if name]
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise DataIngestionError(f"LMP file {path} lacks column(s): {', '.join(missing)}")
    components = {key: name for key, name in components.items() if name and name in frame.columns}

    frame = frame[[schema.node, schema.timestamp, *components.values()]].copy()
    frame[schema.node] = frame[schema.node].astype(str).str.strip()
    try:
        frame[schema.timestamp] = normalize_timestamps(frame[schema.timestamp])
    except (ValueError, TypeError) as e:
        raise DataIngestionError(f"unparseable timestamps in {path}: {e}") from e

    frame = frame.drop_duplicates()
    clashes = frame[frame.duplicated([schema.node, schema.timestamp], keep=False)]
    if not clashes.empty:
        pairs = clashes[[schema.node, schema.timestamp]].drop_duplicates().head(5)
        listed = "; ".join(f"{n}@{t}" for n, t in pairs.itertuples(index=False))
        raise DataIngestionError(f"conflicting duplicate rows for (node, timestamp): {listed}")

    nodes = sort_nodes(frame[schema.node].unique().tolist())
    timestamps = sorted(frame[schema.timestamp].unique().tolist())

    matrices = {}
    for key, column in components.items():
        grid = frame.pivot(index=schema.node, columns=schema.timestamp, values=column)
        grid = grid.reindex(index=nodes, columns=timestamps)
        if grid.isna().to_numpy().any():
            if forward_fill:
                grid = grid.ffill(axis=1)
            if grid.isna().to_numpy().any():
                gaps = [(n, t) for n, t in grid.isna().stack().loc[lambda s: s].index[:5]]
                raise DataIngestionError(
                    f"{int(grid.isna().to_numpy().sum())} missing {key} cell(s), first: {gaps}"
                )
        matrices[key] = grid.to_numpy(dtype=float)

    logger.info(f"ingested {path}: {len(nodes)} nodes x {len(timestamps)} intervals ({', '.join(components)})")
    return LmpPanel(
        node_ids=tuple(nodes),
        timestamps=tuple(timestamps),
        congestion=matrices["congestion"],
        energy=matrices.get("energy"),
        loss=matrices.get("loss"),
    )


def panel_from_records(records: Sequence[ScenarioRecord]) -> LmpPanel:
    """Stack simulated LMP components into a panel, one column per record."""
    if not records:
        raise NoCongestionError("no simulated intervals to stack")
    node_ids = tuple(str(bus_id) for bus_id in records[0].case.bus_ids)
    return LmpPanel(
        node_ids=node_ids,
        timestamps=tuple(record.timestamp for record in records),
        congestion=np.column_stack([record.lmp.congestion for record in records]),
        energy=np.column_stack([record.lmp.energy for record in records]),
        loss=np.column_stack([record.lmp.loss for record in records]),
    )


def dedupe_nodes(panel: LmpPanel, tol: float) -> LmpPanel:
    """
    Merge nodes whose full series agree elementwise within ``tol``.

    The first node of each group is kept; ``aliases`` maps every merged node
    to its representative.
    """
    series = [m for m in (panel.congestion, panel.energy, panel.loss) if m is not None]
    stacked = np.hstack(series)
    keep: list[int] = []
    aliases = dict(panel.aliases)
    merged = np.zeros(len(panel.node_ids), dtype=bool)
    for i in range(len(panel.node_ids)):
        if merged[i]:
            continue
        keep.append(i)
        rest = np.flatnonzero(~merged)
        rest = rest[rest > i]
        if rest.size == 0:
            continue
        same = rest[np.max(np.abs(stacked[rest] - stacked[i]), axis=1) <= tol]
        merged[same] = True
        for j in same:
            aliases[panel.node_ids[j]] = panel.node_ids[i]

    if len(keep) < len(panel.node_ids):
        logger.info(f"merged {len(panel.node_ids) - len(keep)} duplicate node(s), {len(keep)} remain")
    rows = np.array(keep, dtype=int)
    return LmpPanel(
        node_ids=tuple(panel.node_ids[i] for i in keep),
        timestamps=panel.timestamps,
        congestion=panel.congestion[rows],
        energy=None if panel.energy is None else panel.energy[rows],
        loss=None if panel.loss is None else panel.loss[rows],
        aliases=aliases,
    )


def eliminate_loss_term(panel: LmpPanel, ref_node: Optional[str] = None) -> LmpPanel:
    """
    Subtract the reference node's congestion price from every node.

    Removes the component shared by all nodes in lossy markets; the
    reference row becomes zero. Defaults to the first node.
    """
    ref_node = panel.node_ids[0] if ref_node is None else str(ref_node)
    if ref_node not in panel.node_ids:
        raise DataIngestionError(f"reference node {ref_node!r} is not in the panel")
    row = panel.congestion[panel.node_ids.index(ref_node)]
    return panel.with_congestion(panel.congestion - row[None, :])


def filter_congested(panel: LmpPanel, tol: float = CONGESTION_TOL) -> CongestionMatrix:
    """
    Keep intervals whose congestion prices exceed ``tol`` somewhere.

    Raises:
        NoCongestionError: every interval is uncongested
    """
    if panel.congestion.shape[1] == 0:
        raise NoCongestionError()
    norms = np.max(np.abs(panel.congestion), axis=0) if panel.congestion.shape[0] else np.zeros(panel.shape[1])
    keep = norms > tol
    if not keep.any():
        raise NoCongestionError()
    dropped = tuple(t for t, k in zip(panel.timestamps, keep) if not k)
    if dropped:
        logger.info(f"dropped {len(dropped)} uncongested interval(s), {int(keep.sum())} remain")
    return CongestionMatrix(
        values=panel.congestion[:, keep],
        intervals=tuple(t for t, k in zip(panel.timestamps, keep) if k),
        node_ids=panel.node_ids,
        dropped=dropped,
    )


def pca_reduce(x: CongestionMatrix, energy_tol: float = ENERGY_TOL) -> CongestionMatrix:
    """
    Project onto the leading left singular vectors.

    Keeps the smallest k capturing at least ``1 - energy_tol`` of the squared
    Frobenius norm. The data are not centered: the subspaces pass through
    the origin.
    """
    u, s, _ = np.linalg.svd(x.values, full_matrices=False)
    energy = s ** 2
    total = energy.sum()
    if total == 0:
        k = 1
    else:
        share = np.cumsum(energy) / total
        k = int(min(np.searchsorted(share, 1.0 - energy_tol) + 1, len(s)))
    projection = u[:, :k].T
    values = projection @ x.values
    residual = float(energy[k:].sum() / total) if total else 0.0
    logger.info(f"PCA kept rank {k} of {x.values.shape[0]} (discarded energy share {residual:.2e})")
    if x.projection is not None:
        projection = projection @ x.projection
    return CongestionMatrix(
        values=values,
        intervals=x.intervals,
        node_ids=x.node_ids,
        projection=projection,
        dropped=x.dropped,
    )


def prepare_working_matrix(
    panel: LmpPanel,
    mode: MarketMode = MarketMode.LOSSLESS,
    ref_node: Optional[str] = None,
    congestion_tol: float = CONGESTION_TOL,
    energy_tol: float = ENERGY_TOL,
    dedupe_tol: Optional[float] = None,
) -> CongestionMatrix:
    """Run dedupe (optional), loss-term elimination (lossy only), filtering and PCA."""
    if dedupe_tol is not None:
        panel = dedupe_nodes(panel, dedupe_tol)
    if mode == MarketMode.LOSSY:
        panel = eliminate_loss_term(panel, ref_node)
    return pca_reduce(filter_congested(panel, congestion_tol), energy_tol)
