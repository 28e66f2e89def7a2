"""
DC-OPF market simulator: PTDF construction, lossless and lossy clearing,
LMP decomposition and ground-truth labelled scenario generation.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterator, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from app.models.network import (
    DispatchSolution,
    LmpComponents,
    NetworkCase,
    PtdfMatrix,
    ScenarioRecord,
)
from app.models.schema import MarketMode
from app.services.lp_solver import LinearProgram, solve_lp
from app.utils.errors import InfeasibleDispatchError, NetworkTopologyError, ShapeMismatchError
from app.utils.seeding import SCENARIO_STREAM, SeedStreams

logger = logging.getLogger(__name__)

STATUS_TOL = 1e-6  # $/MWh; |mu| above this marks a line congested


@dataclass
class SimulationConfig:
    """Configuration for scenario generation."""
    mode: MarketMode = MarketMode.LOSSLESS
    status_tol: float = STATUS_TOL
    start: str = "2020-01-01T00:00:00"
    interval_minutes: int = 5
    workers: int = 1
    min_feasible_share: float = 0.5


def build_ptdf(case: NetworkCase) -> PtdfMatrix:
    """
    Build the PTDF matrix from the DC power-flow B matrices.

    Flow on line (f, t) is positive from f to t. The reference bus absorbs
    every injection, so its column is zero.

    Raises:
        NetworkTopologyError: zero reactance or a disconnected network
    """
    n_b, n_l = len(case.buses), len(case.lines)
    index = case.bus_index
    for line in case.lines:
        if not line.reactance > 0:
            raise NetworkTopologyError(f"line {line.id} has non-positive reactance {line.reactance}")

    f = np.array([index[line.from_bus] for line in case.lines], dtype=int)
    t = np.array([index[line.to_bus] for line in case.lines], dtype=int)

    adjacency = csr_matrix((np.ones(n_l), (f, t)), shape=(n_b, n_b))
    n_islands, labels = connected_components(adjacency, directed=False)
    if n_islands > 1:
        bus_ids = case.bus_ids
        islands = [[bus_ids[i] for i in np.flatnonzero(labels == c)] for c in range(n_islands)]
        raise NetworkTopologyError(
            f"network is disconnected into {n_islands} islands: {islands}", islands=islands
        )

    b = np.array([1.0 / line.reactance for line in case.lines])
    rows = np.arange(n_l)
    cft = np.zeros((n_l, n_b))
    cft[rows, f] = 1.0
    cft[rows, t] = -1.0
    bf = b[:, None] * cft
    bbus = cft.T @ bf

    ref = index[case.reference_bus]
    keep = np.array([i for i in range(n_b) if i != ref], dtype=int)
    matrix = np.zeros((n_l, n_b))
    if keep.size and n_l:
        matrix[:, keep] = np.linalg.solve(bbus[np.ix_(keep, keep)], bf[:, keep].T).T
    return PtdfMatrix(matrix, case.reference_bus, tuple(case.bus_ids), tuple(case.line_ids))


@dataclass
class _Formulation:
    """Index bookkeeping shared by both clearing models."""
    lp: LinearProgram
    block_owner: np.ndarray
    bounded: np.ndarray
    n_blocks: int


def _formulate(case: NetworkCase, ptdf: PtdfMatrix, mode: MarketMode) -> _Formulation:
    n_b = len(case.buses)
    index = case.bus_index
    loads = case.load_vector()

    owner, quantity, price = [], [], []
    for g, gen in enumerate(case.generators):
        for offer in gen.offers:
            owner.append(g)
            quantity.append(offer.quantity)
            price.append(offer.price)
    owner = np.array(owner, dtype=int)
    n_blocks = len(owner)
    n_gen = len(case.generators)

    # Block -> bus incidence
    incidence = np.zeros((n_b, n_blocks))
    incidence[[index[case.generators[g].bus] for g in owner], np.arange(n_blocks)] = 1.0
    # Block -> generator incidence
    gen_sum = np.zeros((n_gen, n_blocks))
    gen_sum[owner, np.arange(n_blocks)] = 1.0

    capacity = case.capacity_vector()
    bounded = np.flatnonzero(np.isfinite(capacity))
    t_b = ptdf.matrix[bounded, :]
    f_max = capacity[bounded]
    shift = t_b @ loads

    lossy = mode == MarketMode.LOSSY
    n_x = n_blocks + (1 if lossy else 0)

    c = np.zeros(n_x)
    c[:n_blocks] = price

    flow_rows = np.zeros((len(bounded), n_x))
    flow_rows[:, :n_blocks] = t_b @ incidence
    if lossy:
        flow_rows[:, n_blocks] = -(t_b @ case.loss_distribution_vector())

    gen_rows = np.zeros((n_gen, n_x))
    gen_rows[:, :n_blocks] = gen_sum

    a_ub = np.vstack([flow_rows, -flow_rows, gen_rows, -gen_rows])
    b_ub = np.concatenate([
        f_max + shift,
        f_max - shift,
        [gen.p_max for gen in case.generators],
        [-gen.p_min for gen in case.generators],
    ])

    balance = np.zeros((1, n_x))
    balance[0, :n_blocks] = 1.0
    if lossy:
        lf = case.loss_factor_vector()
        balance[0, n_blocks] = -1.0
        loss_row = np.zeros((1, n_x))
        loss_row[0, :n_blocks] = -(lf @ incidence)
        loss_row[0, n_blocks] = 1.0
        a_eq = np.vstack([balance, loss_row])
        b_eq = np.array([loads.sum(), case.losses.l0 - lf @ loads])
    else:
        a_eq = balance
        b_eq = np.array([loads.sum()])

    bounds = [(0.0, q) for q in quantity]
    if lossy:
        bounds.append((None, None))

    return _Formulation(LinearProgram(c, a_ub, b_ub, a_eq, b_eq, bounds), owner, bounded, n_blocks)


def _clear(case: NetworkCase, ptdf: PtdfMatrix, mode: MarketMode) -> DispatchSolution:
    form = _formulate(case, ptdf, mode)
    result = solve_lp(form.lp, label=f"{mode.value} DC-OPF for {case.name}")

    n_l = len(case.lines)
    n_gen = len(case.generators)
    n_bl = len(form.bounded)
    ub = result.ub_duals
    upper, lower = ub[:n_bl], ub[n_bl:2 * n_bl]
    gen_max, gen_min = ub[2 * n_bl:2 * n_bl + n_gen], ub[2 * n_bl + n_gen:]

    mu_plus = np.zeros(n_l)
    mu_minus = np.zeros(n_l)
    mu_plus[form.bounded] = -upper
    mu_minus[form.bounded] = -lower
    mu = mu_minus - mu_plus

    blocks = result.x[:form.n_blocks]
    p_g = np.bincount(form.block_owner, weights=blocks, minlength=n_gen)
    loss = float(result.x[form.n_blocks]) if mode == MarketMode.LOSSY else 0.0

    loads = case.load_vector()
    injection = np.zeros(len(case.buses))
    index = case.bus_index
    for gen, output in zip(case.generators, p_g):
        injection[index[gen.bus]] += output
    injection -= loads
    if mode == MarketMode.LOSSY:
        injection -= loss * case.loss_distribution_vector()
    flows = ptdf.matrix @ injection

    # Nodal price = derivative of the optimal cost w.r.t. each nodal load,
    # read off the right-hand-side sensitivities of every constraint.
    t_b = ptdf.matrix[form.bounded, :]
    prices = result.eq_duals[0] * np.ones(len(case.buses)) + t_b.T @ (upper - lower)
    sigma = None
    if mode == MarketMode.LOSSY:
        sigma = float(result.eq_duals[1])
        prices = prices - sigma * case.loss_factor_vector()

    if result.degenerate:
        logger.warning(f"{case.name}: degenerate optimal vertex, duals may not be unique")

    return DispatchSolution(
        mode=mode,
        p_g=p_g,
        objective=result.objective,
        lam=float(result.eq_duals[0]),
        mu=mu,
        mu_plus=mu_plus,
        mu_minus=mu_minus,
        gamma_min=-gen_min,
        gamma_max=-gen_max,
        flows=flows,
        nodal_prices=prices,
        sigma=sigma,
        loss=loss,
        degenerate=result.degenerate,
    )


def solve_dcopf_lossless(case: NetworkCase, ptdf: Optional[PtdfMatrix] = None) -> DispatchSolution:
    """
    Clear the lossless DC-OPF market.

    Raises:
        InfeasibleDispatchError: load cannot be served within generator and line limits
    """
    return _clear(case, ptdf or build_ptdf(case), MarketMode.LOSSLESS)


def solve_dcopf_lossy(case: NetworkCase, ptdf: Optional[PtdfMatrix] = None) -> DispatchSolution:
    """Clear the DC-OPF market with the linearized loss model."""
    return _clear(case, ptdf or build_ptdf(case), MarketMode.LOSSY)


def solve_dcopf(case: NetworkCase, mode: MarketMode, ptdf: Optional[PtdfMatrix] = None) -> DispatchSolution:
    if mode == MarketMode.LOSSY:
        return solve_dcopf_lossy(case, ptdf)
    return solve_dcopf_lossless(case, ptdf)


def decompose_lmp(
    solution: DispatchSolution,
    ptdf: PtdfMatrix,
    case: NetworkCase,
    mode: MarketMode,
) -> LmpComponents:
    """
    Split nodal prices into energy, congestion and loss components.

    Raises:
        ShapeMismatchError: solution, PTDF and case disagree in size
    """
    n_b, n_l = len(case.buses), len(case.lines)
    if ptdf.matrix.shape != (n_l, n_b) or solution.mu.shape != (n_l,):
        raise ShapeMismatchError(
            f"PTDF {ptdf.matrix.shape} / mu {solution.mu.shape} do not match case ({n_l} lines, {n_b} buses)"
        )
    if solution.nodal_prices.shape != (n_b,):
        raise ShapeMismatchError(f"price vector has shape {solution.nodal_prices.shape}, expected ({n_b},)")

    congestion = ptdf.matrix.T @ solution.mu
    ones = np.ones(n_b)
    if mode == MarketMode.LOSSY:
        if solution.sigma is None:
            raise ShapeMismatchError("lossy decomposition needs the loss-constraint dual sigma")
        congestion = congestion - ones * (case.loss_distribution_vector() @ congestion)
        energy = solution.sigma * ones
        loss = -solution.sigma * case.loss_factor_vector()
    else:
        energy = solution.lam * ones
        loss = np.zeros(n_b)
    return LmpComponents(energy=energy, congestion=congestion, loss=loss, total=solution.nodal_prices)


def congestion_status(solution: DispatchSolution, tol: float = STATUS_TOL) -> np.ndarray:
    return np.abs(solution.mu) > tol


def scenario_case(case: NetworkCase, t: int, noise_rel_std: float, streams: SeedStreams) -> NetworkCase:
    """Base case with interval ``t``'s load profile and multiplicative noise applied."""
    rng = streams.generator(SCENARIO_STREAM, t)
    loads = case.load_vector()
    for i, bus in enumerate(case.buses):
        profile = case.load_profiles.get(bus.zone)
        if profile:
            loads[i] *= profile[t % len(profile)]
    loads = loads * (1.0 + noise_rel_std * rng.standard_normal(len(loads)))
    factors = [
        1.0 + noise_rel_std * rng.standard_normal(len(gen.offers)) for gen in case.generators
    ]
    return case.with_loads(loads).with_price_factors(factors)


@dataclass
class ScenarioBatch:
    """Feasible scenario records in interval order plus skipped interval indices."""
    records: list[ScenarioRecord]
    ptdf: PtdfMatrix
    skipped: list[int] = field(default_factory=list)
    seconds: float = 0.0

    def __iter__(self) -> Iterator[ScenarioRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, item: int) -> ScenarioRecord:
        return self.records[item]

    @property
    def ever_congested(self) -> list[int]:
        if not self.records:
            return []
        flags = np.any([record.status for record in self.records], axis=0)
        return [line_id for line_id, flag in zip(self.ptdf.line_ids, flags) if flag]


def generate_scenarios(
    case: NetworkCase,
    m: int,
    noise_rel_std: float,
    seed: int,
    config: Optional[SimulationConfig] = None,
) -> ScenarioBatch:
    """
    Clear ``m`` perturbed copies of ``case`` and label each with its congestion status.

    Args:
        case: base network case; its load profiles (if any) are applied per interval
        m: number of intervals
        noise_rel_std: relative standard deviation of load and offer price noise
        seed: root seed; interval t always draws from the same named stream
        config: simulation settings

    Raises:
        ValueError: m < 1 or negative noise
        InfeasibleDispatchError: fewer than half of the intervals could be cleared
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if noise_rel_std < 0:
        raise ValueError(f"noise_rel_std must be non-negative, got {noise_rel_std}")
    config = config or SimulationConfig()
    streams = SeedStreams(seed)
    ptdf = build_ptdf(case)
    start = datetime.fromisoformat(config.start)
    step = timedelta(minutes=config.interval_minutes)

    def run_one(t: int) -> Optional[ScenarioRecord]:
        perturbed = scenario_case(case, t, noise_rel_std, streams)
        try:
            solution = solve_dcopf(perturbed, config.mode, ptdf)
        except InfeasibleDispatchError as e:
            logger.warning(f"interval {t} skipped: {e}")
            return None
        lmp = decompose_lmp(solution, ptdf, perturbed, config.mode)
        return ScenarioRecord(
            index=t,
            timestamp=(start + t * step).isoformat(),
            case=perturbed,
            solution=solution,
            lmp=lmp,
            status=congestion_status(solution, config.status_tol),
        )

    started = time.time()
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_one, range(m)))
    else:
        results = [run_one(t) for t in range(m)]

    records = [r for r in results if r is not None]
    skipped = [t for t, r in enumerate(results) if r is None]
    if len(records) < config.min_feasible_share * m:
        raise InfeasibleDispatchError(
            f"only {len(records)} of {m} intervals feasible for {case.name}"
        )
    batch = ScenarioBatch(records, ptdf, skipped, time.time() - started)
    logger.info(
        f"{case.name}: {len(records)}/{m} intervals cleared ({config.mode.value}), "
        f"ever-congested lines {batch.ever_congested}, {batch.seconds:.2f}s"
    )
    return batch
