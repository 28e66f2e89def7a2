"""
Orchestration of the four commands: simulate, identify, evaluate, report.
"""
import dataclasses
import logging
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from app.models.schema import LmpCsvSchema, MarketMode, RunConfig
from app.models.subspace import BasisSet, CongestionMatrix, IdentificationReport, LmpPanel, StatusCodeSeq
from app.services import data_pipeline
from app.services.bottom_up import BottomUpConfig, BottomUpResult, affinity, bottom_up_search, cutoff
from app.services.identify import (
    AssembledBasis,
    align_truth,
    assemble_basis,
    encode_status,
    match_rows,
    miscode,
    recover_chi,
)
from app.services.market_sim import ScenarioBatch, SimulationConfig, build_ptdf, generate_scenarios
from app.services.top_down import TopDownConfig, TopDownResult, top_down_search
from app.utils import artifacts
from app.utils.case_io import load_case
from app.utils.errors import ConfigError
from app.utils.seeding import SeedStreams
from app.utils.workspace import OutputWorkspace, output_workspace

logger = logging.getLogger(__name__)


@dataclass
class IdentificationResult:
    """Everything one identification run produced, before it is written out."""
    matrix: CongestionMatrix
    bottom_up: BottomUpResult
    top_down: Optional[TopDownResult]
    basis: AssembledBasis
    chi: np.ndarray
    codes: StatusCodeSeq
    timings: dict[str, float] = field(default_factory=dict)


def _service_config(cls, overrides: dict, **values):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} option(s): {', '.join(sorted(unknown))}")
    return cls(**{**values, **overrides})


class IdentificationService:
    """
    Runs the commands for one RunConfig.

    Each instance carries a short run id that prefixes its log lines.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.run_id = uuid.uuid4().hex[:8]
        self.streams = SeedStreams(config.seed)
        services = config.services
        self.simulation = _service_config(
            SimulationConfig, services.get("simulation", {}),
            mode=config.mode, start=config.start,
            interval_minutes=config.interval_minutes, workers=config.workers,
        )
        self.bottom_up = _service_config(
            BottomUpConfig, services.get("bottom_up", {}),
            eps_cutoff=config.eps_cutoff, rank_tol=config.rank_tol, zero_tol=config.zero_tol,
        )
        self.top_down = _service_config(
            TopDownConfig, services.get("top_down", {}),
            p=config.p, n_trials=config.n_trials,
            inlier_tol=config.inlier_tol, rank_tol=config.rank_tol,
        )
        logger.info(f"[{self.run_id}] mode={config.mode.value} seed={config.seed} out={config.out}")

    # simulate

    def simulate(self) -> ScenarioBatch:
        """Clear the configured case ``intervals`` times and write lmp.csv and truth.csv."""
        self.config.require("case")
        case = load_case(self.config.case)
        logger.info(f"[{self.run_id}] simulating {case.name}: {self.config.intervals} intervals, noise {self.config.noise}")
        batch = generate_scenarios(case, self.config.intervals, self.config.noise, self.config.seed, self.simulation)

        panel = data_pipeline.panel_from_records(batch.records)
        bounded = [j for j, line in enumerate(case.lines) if line.capacity is not None]
        mu = np.column_stack([r.solution.mu[bounded] for r in batch.records])
        status = np.column_stack([r.status[bounded] for r in batch.records])
        with output_workspace(self.config.out, self.run_id) as ws:
            artifacts.write_lmp_csv(panel, ws.path(artifacts.LMP_FILE))
            artifacts.write_truth_csv(
                panel.timestamps, [case.lines[j].id for j in bounded], mu, status, ws.path(artifacts.TRUTH_FILE)
            )
        return batch

    # identify

    def identify_panel(self, panel: LmpPanel) -> IdentificationResult:
        """Preprocess -> bottom-up -> top-down on the residual -> assemble -> encode."""
        timings = {}
        started = time.time()
        matrix = data_pipeline.prepare_working_matrix(
            panel,
            mode=self.config.mode,
            ref_node=self.config.ref_node,
            congestion_tol=self.config.congestion_tol,
            energy_tol=self.config.energy_tol,
            dedupe_tol=self.config.dedupe_tol,
        )
        timings["preprocess"] = time.time() - started
        logger.info(f"[{self.run_id}] working matrix {matrix.rank} x {matrix.n_columns}")

        started = time.time()
        bottom = bottom_up_search(matrix, self.bottom_up, self.streams)
        timings["bottom-up"] = time.time() - started
        for r in bottom.rounds:
            timings[f"bottom-up round {r.round_index}"] = r.seconds

        top = None
        top_basis = BasisSet.empty(matrix.rank)
        if bottom.gap:
            logger.info(f"[{self.run_id}] bottom-up left {bottom.residual.n_columns} columns, starting top-down search")
            top = top_down_search(bottom.residual, self.top_down, self.streams)
            timings["top-down"] = top.seconds
            top_basis = BasisSet(bottom.frame @ top.basis.vectors, top.basis.provenance)

        started = time.time()
        basis = assemble_basis(bottom.basis, top_basis, matrix, self.config.rank_tol)
        timings["assemble"] = time.time() - started

        started = time.time()
        chi = recover_chi(basis.working, matrix.values)
        codes = encode_status(chi, self.config.eps_encode, basis.labels, matrix.intervals)
        timings["encode"] = time.time() - started
        logger.info(f"[{self.run_id}] {basis.k} basis vectors, {len({tuple(col) for col in codes.codes.T})} distinct statuses")
        return IdentificationResult(matrix, bottom, top, basis, chi, codes, timings)

    def identify(self) -> IdentificationResult:
        """Run ``identify_panel`` on the configured LMP file and write its artifacts."""
        self.config.require("lmp")
        schema = LmpCsvSchema.spp() if self.config.lmp_layout == "spp" else None
        panel = data_pipeline.ingest_lmp_csv(self.config.lmp, schema, forward_fill=self.config.forward_fill)
        result = self.identify_panel(panel)
        with output_workspace(self.config.out, self.run_id) as ws:
            ws.discard(*artifacts.IDENTIFY_DERIVED)
            artifacts.write_basis_csv(
                result.matrix.node_ids, result.basis.node_space, result.basis.labels, ws.path(artifacts.BASIS_FILE)
            )
            artifacts.write_codes_csv(result.codes, ws.path(artifacts.CODES_FILE))
            artifacts.write_working_csv(result.matrix, ws.path(artifacts.WORKING_FILE))
            artifacts.write_rounds_jsonl(result.bottom_up.rounds, ws.path(artifacts.ROUNDS_FILE))
            self._write_round_inputs(result, ws)
            if result.top_down is not None:
                ws.path(artifacts.TREE_FILE).write_text(result.top_down.tree.render(), encoding="utf-8")
        return result

    def _write_round_inputs(self, result: IdentificationResult, ws: OutputWorkspace) -> None:
        """Each round's input matrix in its own frame, for the report command."""
        for r in result.bottom_up.rounds:
            artifacts.write_working_csv(
                CongestionMatrix(r.values, tuple(r.columns), result.matrix.node_ids),
                ws.path(artifacts.working_round_file(r.round_index)),
            )

    # evaluate

    def evaluate(self) -> IdentificationReport:
        """Score codes.csv in the output directory against the truth file."""
        self.config.require("truth")
        out = Path(self.config.out)
        recovered = artifacts.read_codes_csv(artifacts.require(out / artifacts.CODES_FILE, "identify"))
        truth = align_truth(recovered, artifacts.read_truth_csv(artifacts.require(Path(self.config.truth), "simulate")))

        basis_node, ptdf_rows = self._ptdf_scores(out, truth)
        matches = match_rows(recovered, truth, basis_node, ptdf_rows)
        report = miscode(recovered, truth, matches)
        with output_workspace(out, self.run_id) as ws:
            ws.path(artifacts.REPORT_FILE).write_text(artifacts.format_report(report), encoding="utf-8")
            artifacts.write_frequency_csv(report.frequency, ws.path(artifacts.FREQUENCY_FILE))
        logger.info(f"[{self.run_id}] total miscode {report.total_miscode:.4%}")
        return report

    def _ptdf_scores(self, out: Path, truth: StatusCodeSeq):
        """Node-space basis and matching PTDF rows when both the case and basis.csv are at hand."""
        basis_path = out / artifacts.BASIS_FILE
        if self.config.case is None or not basis_path.is_file():
            return None, None
        case = load_case(self.config.case)
        ptdf = build_ptdf(case)
        node_ids, vectors, _ = artifacts.read_basis_csv(basis_path)
        columns = [ptdf.bus_ids.index(int(n)) if n.isdigit() else None for n in node_ids]
        if None in columns:
            return None, None
        rows = np.array([ptdf.row(int(line)) for line in truth.row_labels])[:, columns]
        if self.config.mode == MarketMode.LOSSY:
            ref = node_ids.index(self.config.ref_node) if self.config.ref_node in node_ids else 0
            rows = rows - rows[:, [ref]]
        return vectors, rows

    # report

    def report(self) -> list[Path]:
        """Write blocks.csv and one affinity grid per bottom-up round."""
        out = Path(self.config.out)
        codes = artifacts.read_codes_csv(artifacts.require(out / artifacts.CODES_FILE, "identify"))
        written = []
        with output_workspace(out, self.run_id) as ws:
            artifacts.write_blocks_csv(codes, ws.path(artifacts.BLOCKS_FILE))
            written.append(out / artifacts.BLOCKS_FILE)
            rounds = artifacts.read_rounds_jsonl(artifacts.require(out / artifacts.ROUNDS_FILE, "identify"))
            for round_index in (r["round"] for r in rounds):
                values, intervals = artifacts.read_working_csv(out / artifacts.working_round_file(round_index))
                a = cutoff(affinity(values), self.config.eps_cutoff)
                name = artifacts.affinity_round_file(round_index)
                artifacts.write_affinity_csv(a, intervals, ws.path(name))
                written.append(out / name)
        return written
