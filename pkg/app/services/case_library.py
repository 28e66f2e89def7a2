"""
Bundled style-alike test systems, loadable as ``builtin:<name>``.

Every case couples an unconstrained meshed core with radial pockets that
hang off it through a single export line. A pocket holds a cheap generator;
its export line binds whenever pocket load drops below a known threshold,
so the congestion statuses a load profile produces can be read off the
case definition.
"""
import math
from typing import Callable

from app.models.network import Bus, BlockOffer, Generator, Line, LossParameters, NetworkCase
from app.utils.errors import CaseValidationError

DAY = 288  # five-minute intervals per day


def _sinusoid(mean: float, amplitude: float, period: int, phase: float = 0.0, length: int = 2 * DAY) -> list[float]:
    return [
        round(mean + amplitude * math.sin(2.0 * math.pi * t / period + phase), 6)
        for t in range(length)
    ]


def _offers(*blocks: tuple[float, float]) -> list[BlockOffer]:
    return [BlockOffer(quantity=q, price=c) for q, c in blocks]


def _generator(gen_id: int, bus: int, *blocks: tuple[float, float]) -> Generator:
    return Generator(
        id=gen_id,
        bus=bus,
        p_max=sum(q for q, _ in blocks),
        offers=_offers(*blocks),
    )


class _Builder:
    """Accumulates buses, lines and generators with sequential ids."""

    def __init__(self):
        self.buses: list[Bus] = []
        self.lines: list[Line] = []
        self.generators: list[Generator] = []

    def bus(self, bus_id: int, load: float, zone: str = "core") -> None:
        self.buses.append(Bus(id=bus_id, load=load, zone=zone))

    def line(self, from_bus: int, to_bus: int, reactance: float, capacity: float = None) -> int:
        line_id = len(self.lines) + 1
        self.lines.append(Line(id=line_id, from_bus=from_bus, to_bus=to_bus,
                               reactance=reactance, capacity=capacity))
        return line_id

    def generator(self, bus: int, *blocks: tuple[float, float]) -> None:
        self.generators.append(_generator(len(self.generators) + 1, bus, *blocks))

    def pocket(self, root: int, first: int, size: int, load: float, zone: str,
               capacity: float, *blocks: tuple[float, float]) -> int:
        """Radial chain ``first .. first+size-1`` fed from core bus ``root``; returns the export line id."""
        for bus_id in range(first, first + size):
            self.bus(bus_id, load, zone)
        export = self.line(root, first, 0.08, capacity)
        for bus_id in range(first, first + size - 1):
            self.line(bus_id, bus_id + 1, 0.06)
        self.generator(first + size - 1, *blocks)
        return export

    def build(self, name: str, reference_bus: int, **kwargs) -> NetworkCase:
        return NetworkCase(
            name=name,
            buses=self.buses,
            lines=self.lines,
            generators=self.generators,
            reference_bus=reference_bus,
            **kwargs,
        )


def case3() -> NetworkCase:
    """
    Triangle with a cheap unit at bus 1 and an expensive one at bus 2.

    Loads at buses 2 and 3 swing out of phase, so line 1-2 binds while bus 2
    load is high and line 1-3 binds while bus 3 load is high: two distinct
    congestion patterns, each a one-dimensional price subspace.
    """
    b = _Builder()
    b.bus(1, 0.0, "core")
    b.bus(2, 60.0, "west")
    b.bus(3, 60.0, "east")
    b.line(1, 2, 0.1, 62.0)
    b.line(1, 3, 0.1, 62.0)
    b.line(2, 3, 0.1, 100.0)
    b.generator(1, (100.0, 20.0), (100.0, 25.0))
    b.generator(2, (100.0, 40.0), (100.0, 45.0))
    return b.build(
        "case3",
        reference_bus=1,
        losses=LossParameters(l0=4.0, lf={2: 0.02, 3: 0.03}),
        load_profiles={
            "west": _sinusoid(1.0, 0.5, DAY),
            "east": _sinusoid(1.0, -0.5, DAY),
        },
    )


def _core_mesh(b: _Builder, n_core: int, chord_every: int, chord_span: int, load: float) -> None:
    for bus_id in range(1, n_core + 1):
        b.bus(bus_id, load, "core")
    for bus_id in range(1, n_core + 1):
        b.line(bus_id, bus_id % n_core + 1, 0.05 + 0.01 * (bus_id % 7))
    for bus_id in range(chord_every, n_core + 1, chord_every):
        target = (bus_id + chord_span - 1) % n_core + 1
        if target != bus_id:
            b.line(bus_id, target, 0.12 + 0.01 * (bus_id % 5))


def case30_style() -> NetworkCase:
    """
    30 buses: a 14-bus core and four export pockets in two load zones.

    North pockets A (15-17) and C (18-20) bind when north load falls below
    1.0 and 0.8 of nominal; south pockets B (21-25) and D (26-30) do the same
    for south load. North and south profiles run out of phase over two days,
    so C only binds together with A and D only together with B.
    """
    b = _Builder()
    _core_mesh(b, 14, chord_every=3, chord_span=5, load=20.0)
    b.generator(1, (200.0, 30.0), (200.0, 40.0), (200.0, 55.0))
    b.generator(2, (150.0, 32.0), (150.0, 45.0), (150.0, 60.0))
    b.generator(8, (100.0, 35.0), (100.0, 50.0))

    # export at full output = p_max - pocket load; capacity sets the binding threshold
    b.pocket(4, 15, 3, 10.0, "north", 50.0, (40.0, 15.0), (40.0, 20.0))
    b.pocket(6, 18, 3, 10.0, "north", 56.0, (40.0, 18.0), (40.0, 22.0))
    b.pocket(9, 21, 5, 8.0, "south", 60.0, (50.0, 16.0), (50.0, 21.0))
    b.pocket(12, 26, 5, 8.0, "south", 68.0, (50.0, 19.0), (50.0, 24.0))

    return b.build(
        "case30_style",
        reference_bus=1,
        losses=LossParameters(l0=2.0, lf={i: 0.001 * (i % 9) for i in range(2, 31)}),
        load_profiles={
            "north": _sinusoid(1.0, 0.4, DAY),
            "south": _sinusoid(1.0, -0.4, DAY),
        },
    )


def case118_style() -> NetworkCase:
    """
    118 buses: a 98-bus core and four export pockets of five buses each.

    Pockets 1 and 3 always export at their limit. Pocket 4 binds while the
    east profile is below 1.087 (a little over half the time) and pocket 2
    only at the bottom of the faster west profile, so every interval has at
    least two congested lines.
    """
    b = _Builder()
    _core_mesh(b, 98, chord_every=4, chord_span=11, load=10.0)
    b.generator(1, (250.0, 30.0), (250.0, 40.0), (250.0, 55.0), (250.0, 70.0))
    b.generator(20, (200.0, 32.0), (200.0, 42.0), (200.0, 57.0))
    b.generator(50, (200.0, 31.0), (200.0, 45.0), (200.0, 60.0))
    b.generator(80, (200.0, 33.0), (200.0, 48.0), (200.0, 65.0))

    b.pocket(10, 99, 5, 4.0, "p1", 40.0, (50.0, 10.0), (50.0, 14.0))
    b.pocket(35, 104, 5, 20.0, "west", 148.4, (100.0, 16.0), (100.0, 20.0))
    b.pocket(60, 109, 5, 5.0, "p3", 50.0, (60.0, 12.0), (60.0, 17.0))
    b.pocket(85, 114, 5, 8.0, "east", 56.5, (50.0, 15.0), (50.0, 19.0))

    return b.build(
        "case118_style",
        reference_bus=1,
        losses=LossParameters(l0=5.0, lf={i: 0.0005 * (i % 11) for i in range(2, 119)}),
        load_profiles={
            "core": _sinusoid(1.0, 0.3, DAY, phase=2.0),
            "east": _sinusoid(1.0, 0.4, DAY),
            "west": _sinusoid(1.0, 0.5, DAY // 3, phase=0.7),
        },
    )


BUILTIN_CASES: dict[str, Callable[[], NetworkCase]] = {
    "case3": case3,
    "case30_style": case30_style,
    "case118_style": case118_style,
}


def load_builtin(name: str) -> NetworkCase:
    try:
        return BUILTIN_CASES[name]()
    except KeyError:
        raise CaseValidationError(
            f"unknown builtin case {name!r}; available: {', '.join(sorted(BUILTIN_CASES))}"
        ) from None
