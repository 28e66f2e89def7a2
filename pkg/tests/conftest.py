"""
Shared fixtures and the test log handler.
"""
import logging
import os

import numpy as np
import pytest

from app.models.network import BlockOffer, Bus, Generator, Line, NetworkCase
from app.models.subspace import LmpPanel
from app.services.case_library import case3, case30_style, case118_style
from app.services.market_sim import generate_scenarios

log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
date_format = "%Y-%m-%d %H:%M:%S"

# Get the project root directory (parent of tests directory)
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
logs_dir = os.path.join(project_root, "logs")
os.makedirs(logs_dir, exist_ok=True)
test_log_path = os.path.join(logs_dir, "test.log")

root_logger = logging.getLogger()
root_logger.setLevel(logging.INFO)

# Check if test.log handler already exists to avoid duplicates
abs_test_log_path = os.path.abspath(test_log_path)
test_log_handler_exists = any(
    isinstance(h, logging.FileHandler) and os.path.abspath(h.baseFilename) == abs_test_log_path
    for h in root_logger.handlers
)
if not test_log_handler_exists:
    test_log_handler = logging.FileHandler(test_log_path, encoding="utf-8", mode="w")
    test_log_handler.setLevel(logging.INFO)
    test_log_handler.setFormatter(logging.Formatter(log_format, date_format))
    root_logger.addHandler(test_log_handler)

logger = logging.getLogger(__name__)
logger.info("=" * 80)
logger.info("Starting test suite execution")
logger.info("=" * 80)


def triangle_case(load3: float = 100.0, cap13: float = 60.0, name: str = "triangle") -> NetworkCase:
    """Equal-reactance triangle: cheap unit at bus 1, dear unit at bus 2, load at bus 3."""
    return NetworkCase(
        name=name,
        buses=[Bus(id=1), Bus(id=2), Bus(id=3, load=load3)],
        lines=[
            Line(id=1, from_bus=1, to_bus=2, reactance=0.1),
            Line(id=2, from_bus=1, to_bus=3, reactance=0.1, capacity=cap13),
            Line(id=3, from_bus=2, to_bus=3, reactance=0.1),
        ],
        generators=[
            Generator(id=1, bus=1, p_max=200.0, offers=[BlockOffer(quantity=200.0, price=20.0)]),
            Generator(id=2, bus=2, p_max=200.0, offers=[BlockOffer(quantity=200.0, price=40.0)]),
        ],
        reference_bus=1,
    )


def synthetic_panel(k: int, m: int, n_nodes: int, seed: int) -> tuple[LmpPanel, np.ndarray, np.ndarray]:
    """
    Noise-free congestion panel from k random basis vectors.

    The first 5k columns hold every basis alone five times; the rest carry
    random statuses with at least one active basis.

    Returns:
        (panel, basis n_nodes x k, status k x m)
    """
    rng = np.random.default_rng(seed)
    basis = rng.standard_normal((n_nodes, k))
    status = rng.random((k, m)) < 0.5
    for j in range(k):
        status[:, 5 * j:5 * (j + 1)] = False
        status[j, 5 * j:5 * (j + 1)] = True
    empty = ~status.any(axis=0)
    status[rng.integers(k, size=int(empty.sum())), np.flatnonzero(empty)] = True
    chi = status * rng.uniform(1.0, 3.0, size=(k, m))
    panel = LmpPanel(
        node_ids=tuple(str(i + 1) for i in range(n_nodes)),
        timestamps=tuple(f"2021-03-01T{t // 60:02d}:{t % 60:02d}:00" for t in range(m)),
        congestion=basis @ chi,
    )
    return panel, basis, status


@pytest.fixture
def triangle():
    return triangle_case()


@pytest.fixture(scope="session")
def case3_batch():
    """One day of the bundled 3-bus case."""
    return generate_scenarios(case3(), 288, 0.01, seed=3)


@pytest.fixture(scope="session")
def case30_batch():
    """Two days of the 30-bus-style case with 3% noise."""
    return generate_scenarios(case30_style(), 576, 0.03, seed=7)


@pytest.fixture(scope="session")
def case118_batch():
    return generate_scenarios(case118_style(), 576, 0.03, seed=11)
