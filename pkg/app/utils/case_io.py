"""
Case file IO: the native JSON case format, bundled cases and a converter
for MATPOWER-style bus/branch/gen/gencost tables.
"""
import json
import logging
import re
from pathlib import Path
from typing import Any, Union

import numpy as np
from pydantic import ValidationError

from app.models.network import NetworkCase
from app.services.case_library import load_builtin
from app.utils.errors import CaseValidationError

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"
MATPOWER_TABLES = ("bus", "branch", "gen", "gencost")

# MATPOWER column indices
BUS_I, BUS_TYPE, PD = 0, 1, 2
REF_BUS_TYPE = 3
F_BUS, T_BUS, BR_X, RATE_A, BR_STATUS = 0, 1, 3, 5, 10
GEN_BUS, GEN_STATUS, PMAX, PMIN = 0, 7, 8, 9
MODEL, NCOST, COST = 0, 3, 4
PW_LINEAR, POLYNOMIAL = 1, 2


def load_case(source: Union[str, Path]) -> NetworkCase:
    """
    Load a case from ``builtin:<name>``, a native JSON file, a JSON file of
    MATPOWER tables, or a MATPOWER ``.m`` file.

    Raises:
        CaseValidationError: unreadable file or a case violating model invariants
    """
    text = str(source).strip()
    if text.startswith(BUILTIN_PREFIX):
        return load_builtin(text[len(BUILTIN_PREFIX):])

    path = Path(text)
    if not path.is_file():
        raise CaseValidationError(f"case file not found: {path}")
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CaseValidationError(f"cannot read case file {path}: {e}") from e

    if path.suffix == ".m":
        return from_matpower(parse_matpower(raw), name=path.stem)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CaseValidationError(f"case file {path} is not valid JSON: {e}") from e
    if isinstance(data, dict) and all(table in data for table in ("bus", "branch", "gen")):
        return from_matpower(data, name=data.get("name", path.stem))
    return case_from_dict(data)


def case_from_dict(data: Any) -> NetworkCase:
    try:
        return NetworkCase.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise CaseValidationError(f"invalid case at {where or '<root>'}: {first['msg']}") from e


def save_case(case: NetworkCase, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(case.model_dump_json(indent=2), encoding="utf-8")
    return path


def parse_matpower(text: str) -> dict[str, np.ndarray]:
    """Extract the ``mpc.<table> = [ ... ];`` matrices from a MATPOWER case file."""
    stripped = "\n".join(line.split("%")[0] for line in text.splitlines())
    tables = {}
    for table in MATPOWER_TABLES:
        match = re.search(rf"mpc\.{table}\s*=\s*\[([-+\s0-9eE.;]*)\]", stripped)
        if match is None:
            if table == "gencost":
                continue
            raise CaseValidationError(f"MATPOWER case has no mpc.{table} table")
        rows = [row.split() for row in match.group(1).replace("\n", ";").split(";")]
        tables[table] = np.array([[float(v) for v in row] for row in rows if row])
    return tables


def _blocks_from_cost(row: np.ndarray, p_max: float) -> list[dict[str, float]]:
    model, n_cost = int(row[MODEL]), int(row[NCOST])
    params = row[COST:COST + (2 * n_cost if model == PW_LINEAR else n_cost)]
    if model == PW_LINEAR:
        points = params.reshape(-1, 2)
        blocks = []
        for (p0, f0), (p1, f1) in zip(points, points[1:]):
            if p1 > p0:
                blocks.append({"quantity": float(p1 - p0), "price": float((f1 - f0) / (p1 - p0))})
        return blocks
    if model == POLYNOMIAL:
        linear = float(params[-2]) if n_cost >= 2 else 0.0
        if n_cost >= 3 and params[-3] != 0:
            logger.warning("quadratic gencost terms are dropped; only the linear term is kept")
        return [{"quantity": float(p_max), "price": linear}]
    raise CaseValidationError(f"unsupported gencost model {model}")


def from_matpower(tables: dict[str, Any], name: str = "matpower") -> NetworkCase:
    """
    Convert MATPOWER tables to a NetworkCase.

    Branches with RATE_A = 0 are unbounded; out-of-service branches and
    generators are skipped. Piecewise-linear costs become block offers and
    polynomial costs keep only their linear term as a single block.
    """
    bus = np.atleast_2d(np.asarray(tables["bus"], dtype=float))
    branch = np.atleast_2d(np.asarray(tables["branch"], dtype=float))
    gen = np.atleast_2d(np.asarray(tables["gen"], dtype=float))
    gencost = tables.get("gencost")
    if gencost is None:
        raise CaseValidationError("MATPOWER case needs a gencost table for offers")
    gencost = np.atleast_2d(np.asarray(gencost, dtype=float))

    refs = [int(row[BUS_I]) for row in bus if int(row[BUS_TYPE]) == REF_BUS_TYPE]
    if len(refs) != 1:
        raise CaseValidationError(f"MATPOWER case must have exactly one reference bus, found {len(refs)}")

    lines = []
    for row in branch:
        if branch.shape[1] > BR_STATUS and row[BR_STATUS] == 0:
            continue
        lines.append({
            "id": len(lines) + 1,
            "from_bus": int(row[F_BUS]),
            "to_bus": int(row[T_BUS]),
            "reactance": float(row[BR_X]),
            "capacity": float(row[RATE_A]) if row[RATE_A] > 0 else None,
        })

    generators = []
    for i, row in enumerate(gen):
        if row[GEN_STATUS] <= 0:
            continue
        generators.append({
            "id": i + 1,
            "bus": int(row[GEN_BUS]),
            "p_min": float(row[PMIN]),
            "p_max": float(row[PMAX]),
            "offers": _blocks_from_cost(gencost[i], float(row[PMAX])),
        })

    data = {
        "name": name,
        "buses": [{"id": int(row[BUS_I]), "load": float(row[PD])} for row in bus],
        "lines": lines,
        "generators": generators,
        "reference_bus": refs[0],
    }
    logger.info(f"converted MATPOWER case {name}: {len(bus)} buses, {len(lines)} lines, {len(generators)} generators")
    return case_from_dict(data)
