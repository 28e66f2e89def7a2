"""
Data models for the transmission network and market clearing results.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.schema import MarketMode


class Bus(BaseModel):
    """Network node with its nominal load."""
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., description="Bus number")
    load: float = Field(default=0.0, description="Nominal load in MW")
    zone: str = Field(default="default", description="Load zone used to pick a load profile")


class Line(BaseModel):
    """Transmission line; capacity None means the flow is never limited."""
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., description="Line number")
    from_bus: int
    to_bus: int
    reactance: float = Field(..., gt=0, description="Series reactance in p.u.")
    capacity: Optional[float] = Field(default=None, gt=0, description="Thermal limit f_max in MW")


class BlockOffer(BaseModel):
    model_config = ConfigDict(frozen=True)

    quantity: float = Field(..., ge=0, description="Block size in MW")
    price: float = Field(..., description="Offer price in $/MWh")


class Generator(BaseModel):
    """Generator with a convex piecewise-linear offer curve."""
    model_config = ConfigDict(frozen=True)

    id: int
    bus: int
    p_min: float = Field(default=0.0, description="Minimum output in MW")
    p_max: float = Field(..., description="Maximum output in MW")
    offers: list[BlockOffer] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_offers(self) -> "Generator":
        if self.p_min > self.p_max:
            raise ValueError(f"generator {self.id}: p_min {self.p_min} exceeds p_max {self.p_max}")
        prices = [offer.price for offer in self.offers]
        if any(b < a for a, b in zip(prices, prices[1:])):
            raise ValueError(f"generator {self.id}: block offer prices must be non-decreasing")
        return self


class LossParameters(BaseModel):
    """
    Linearized loss model l = l0 + LF^T (P_G - P_D), distributed by d.

    Buses missing from ``lf`` have a zero loss factor; when ``d`` is omitted
    losses are distributed uniformly.
    """
    model_config = ConfigDict(frozen=True)

    l0: float = Field(default=0.0, description="Loss intercept in MW")
    lf: dict[int, float] = Field(default_factory=dict, description="Loss factor per bus")
    d: Optional[dict[int, float]] = Field(default=None, description="Loss distribution per bus")

    @model_validator(mode="after")
    def _check_distribution(self) -> "LossParameters":
        if self.d is not None and abs(sum(self.d.values()) - 1.0) > 1e-9:
            raise ValueError(f"loss distribution d must sum to 1, got {sum(self.d.values())}")
        return self


class NetworkCase(BaseModel):
    """Complete input to one market clearing."""
    model_config = ConfigDict(frozen=True)

    name: str = "case"
    buses: list[Bus] = Field(..., min_length=1)
    lines: list[Line] = Field(default_factory=list)
    generators: list[Generator] = Field(..., min_length=1)
    reference_bus: int
    losses: LossParameters = Field(default_factory=LossParameters)
    load_profiles: dict[str, list[float]] = Field(
        default_factory=dict,
        description="Per-zone load multipliers by interval, cycled when shorter than the run",
    )

    @model_validator(mode="after")
    def _check_topology(self) -> "NetworkCase":
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("bus ids must be unique")
        known = set(ids)
        if self.reference_bus not in known:
            raise ValueError(f"reference bus {self.reference_bus} is not a declared bus")
        line_ids = [line.id for line in self.lines]
        if len(set(line_ids)) != len(line_ids):
            raise ValueError("line ids must be unique")
        for line in self.lines:
            if line.from_bus not in known or line.to_bus not in known:
                raise ValueError(f"line {line.id} connects undeclared bus")
        gen_ids = [gen.id for gen in self.generators]
        if len(set(gen_ids)) != len(gen_ids):
            raise ValueError("generator ids must be unique")
        for gen in self.generators:
            if gen.bus not in known:
                raise ValueError(f"generator {gen.id} sits at undeclared bus {gen.bus}")
        for bus in list(self.losses.lf) + list(self.losses.d or {}):
            if bus not in known:
                raise ValueError(f"loss parameters reference undeclared bus {bus}")
        for zone, profile in self.load_profiles.items():
            if not profile:
                raise ValueError(f"load profile for zone {zone!r} is empty")
        return self

    @property
    def bus_ids(self) -> list[int]:
        return [bus.id for bus in self.buses]

    @property
    def bus_index(self) -> dict[int, int]:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @property
    def line_ids(self) -> list[int]:
        return [line.id for line in self.lines]

    def load_vector(self) -> np.ndarray:
        return np.array([bus.load for bus in self.buses], dtype=float)

    def loss_factor_vector(self) -> np.ndarray:
        index = self.bus_index
        lf = np.zeros(len(self.buses))
        for bus, value in self.losses.lf.items():
            lf[index[bus]] = value
        return lf

    def loss_distribution_vector(self) -> np.ndarray:
        n_b = len(self.buses)
        if self.losses.d is None:
            return np.full(n_b, 1.0 / n_b)
        index = self.bus_index
        d = np.zeros(n_b)
        for bus, value in self.losses.d.items():
            d[index[bus]] = value
        return d

    def capacity_vector(self) -> np.ndarray:
        """Line limits with +inf for unbounded lines."""
        return np.array(
            [np.inf if line.capacity is None else line.capacity for line in self.lines],
            dtype=float,
        )

    def with_loads(self, loads: np.ndarray) -> "NetworkCase":
        buses = [bus.model_copy(update={"load": float(value)}) for bus, value in zip(self.buses, loads)]
        return self.model_copy(update={"buses": buses})

    def with_price_factors(self, factors: list[np.ndarray]) -> "NetworkCase":
        """Scale each generator's block prices by the matching factor array."""
        generators = []
        for gen, scale in zip(self.generators, factors):
            offers = [
                offer.model_copy(update={"price": float(offer.price * s)})
                for offer, s in zip(gen.offers, scale)
            ]
            # Independent noise can break price monotonicity; restore it.
            ordered = sorted(offers, key=lambda o: o.price)
            generators.append(gen.model_copy(update={"offers": ordered}))
        return self.model_copy(update={"generators": generators})


@dataclass(frozen=True)
class PtdfMatrix:
    """Line-flow sensitivity to nodal injection, columns ordered like ``bus_ids``."""
    matrix: np.ndarray
    reference_bus: int
    bus_ids: tuple[int, ...]
    line_ids: tuple[int, ...]

    def column(self, bus_id: int) -> np.ndarray:
        return self.matrix[:, self.bus_ids.index(bus_id)]

    def row(self, line_id: int) -> np.ndarray:
        return self.matrix[self.line_ids.index(line_id), :]

    def flows(self, injection: np.ndarray) -> np.ndarray:
        return self.matrix @ injection


@dataclass(frozen=True)
class DispatchSolution:
    """Optimal dispatch with the duals of balance, loss and limit constraints."""
    mode: MarketMode
    p_g: np.ndarray
    objective: float
    lam: float
    mu: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    gamma_min: np.ndarray
    gamma_max: np.ndarray
    flows: np.ndarray
    nodal_prices: np.ndarray
    sigma: Optional[float] = None
    loss: float = 0.0
    degenerate: bool = False


@dataclass(frozen=True)
class LmpComponents:
    energy: np.ndarray
    congestion: np.ndarray
    loss: np.ndarray
    total: np.ndarray

    def decomposition_error(self) -> float:
        return float(np.max(np.abs(self.total - (self.energy + self.congestion + self.loss))))


@dataclass(frozen=True)
class ScenarioRecord:
    """One simulated market interval with its ground-truth labels."""
    index: int
    timestamp: str
    case: NetworkCase
    solution: DispatchSolution
    lmp: LmpComponents
    status: np.ndarray = field(repr=False)
