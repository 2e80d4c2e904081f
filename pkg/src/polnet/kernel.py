"""Discrete-event kernel: integer-picosecond timeline, seeded streams, photons.

The timeline is a binary heap ordered by ``(time, seq)`` where ``seq`` is a
global insertion counter, so same-time events run in insertion order and a
run is fully determined by its configuration and master seed.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import heapq
import itertools
from typing import Any, Callable

import numpy as np

from . import states

PS_PER_S = 10**12


class SchedulingError(RuntimeError):
    pass


def derive_seed(master_seed: int, *keys: Any) -> int:
    """Stable 64-bit seed from a master seed and any sequence of labels."""
    h = hashlib.sha256(str(int(master_seed)).encode())
    for key in keys:
        h.update(b"\x00")
        h.update(str(key).encode())
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(master_seed: int, name: str) -> np.random.Generator:
    """Named random stream; same (seed, name) always yields the same sequence."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, name)))


@dataclasses.dataclass(order=True)
class Event:
    time: int
    seq: int
    action: Callable = dataclasses.field(compare=False)
    args: tuple = dataclasses.field(default=(), compare=False)
    label: str = dataclasses.field(default="", compare=False)


@dataclasses.dataclass
class RunStats:
    events_executed: int
    final_time: int
    unresolved_pairs: int = 0


class Timeline:
    """Single-threaded event loop with a picosecond clock."""

    def __init__(self, seed: int = 0, trace: bool = False):
        self.seed = int(seed)
        self.now = 0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self._streams: dict[str, np.random.Generator] = {}
        self._last: tuple[int, int] = (-1, -1)
        self.trace: list[str] | None = [] if trace else None
        self.registry = EntanglementRegistry()
        self._photon_ids = itertools.count()
        self.events_executed = 0

    def rng(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = make_rng(self.seed, name)
        return self._streams[name]

    def next_photon_id(self) -> int:
        return next(self._photon_ids)

    def schedule(self, time: int, action: Callable, *args, label: str = "") -> Event:
        time = int(time)
        if time < self.now:
            raise SchedulingError(f"event at t={time} ps scheduled in the past (now={self.now} ps)")
        event = Event(time, next(self._seq), action, args, label)
        heapq.heappush(self._queue, event)
        return event

    def run_until(self, t_end: int) -> RunStats:
        t_end = int(t_end)
        executed = 0
        queue = self._queue
        while queue and queue[0].time <= t_end:
            event = heapq.heappop(queue)
            key = (event.time, event.seq)
            assert key > self._last, "event executed out of order"
            self._last = key
            self.now = event.time
            if self.trace is not None:
                self.trace.append(f"{event.time} {event.seq} {event.label}")
            event.action(*event.args)
            executed += 1
        self.now = max(self.now, t_end)
        self.events_executed += executed
        return RunStats(executed, self.now, len(self.registry))

    def run(self) -> RunStats:
        """Execute events until the queue is empty."""
        executed = 0
        while self._queue:
            executed += self.run_until(max(e.time for e in self._queue)).events_executed
        return RunStats(executed, self.now, len(self.registry))

    def dump_trace(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.trace or []))
            fh.write("\n")


class PhotonKind(str, enum.Enum):
    SIGNAL = "signal"
    IDLER = "idler"
    NOISE = "noise"


@dataclasses.dataclass(eq=False)
class Photon:
    """A photon in flight.

    ``polarization`` holds a standalone Jones vector; while the photon is part
    of a registered pair it is ``None`` and ``pair_id`` points into the
    registry. ``time_offset`` carries sub-tick and dispersive delays (ps) that
    are only quantized when a detector records the photon.
    """

    id: int
    wavelength: float
    emission_time: int
    kind: PhotonKind
    polarization: np.ndarray | None = None
    pair_id: int | None = None
    time_offset: float = 0.0

    @property
    def entangled(self) -> bool:
        return self.pair_id is not None


@dataclasses.dataclass
class _Entry:
    state: np.ndarray
    photons: tuple[Photon, Photon]


class EntanglementRegistry:
    """Joint two-photon states keyed by pair id.

    Measuring or losing either member dissolves the entry and leaves the
    partner with a standalone Jones vector.
    """

    def __init__(self):
        self._entries: dict[int, _Entry] = {}
        self._ids = itertools.count()
        self.created = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, pair_id: int) -> bool:
        return pair_id in self._entries

    def register(self, state: np.ndarray, photon_a: Photon, photon_b: Photon) -> int:
        if photon_a.entangled or photon_b.entangled:
            raise ValueError("photon already belongs to a joint state")
        pair_id = next(self._ids)
        self._entries[pair_id] = _Entry(np.asarray(state, dtype=complex), (photon_a, photon_b))
        photon_a.pair_id = pair_id
        photon_b.pair_id = pair_id
        photon_a.polarization = None
        photon_b.polarization = None
        self.created += 1
        return pair_id

    def state(self, pair_id: int) -> np.ndarray:
        return self._entries[pair_id].state

    def slot_of(self, photon: Photon) -> states.Slot:
        entry = self._entries[photon.pair_id]
        return states.Slot.A if entry.photons[0] is photon else states.Slot.B

    def _partner(self, photon: Photon) -> Photon:
        a, b = self._entries[photon.pair_id].photons
        return b if a is photon else a

    def apply(self, photon: Photon, j: np.ndarray) -> None:
        entry = self._entries[photon.pair_id]
        entry.state = states.apply_local(entry.state, j, self.slot_of(photon))

    def measure(self, photon: Photon, basis: states.MeasurementBasis,
                rng: np.random.Generator) -> int:
        slot = self.slot_of(photon)
        partner = self._partner(photon)
        outcome, partner_state = states.measure(self._entries[photon.pair_id].state, basis, slot, rng)
        self._dissolve(photon, partner, basis[outcome], partner_state)
        return outcome

    def lose(self, photon: Photon, rng: np.random.Generator) -> None:
        """Drop ``photon``; the partner keeps a state drawn from its marginal."""
        partner = self._partner(photon)
        rho = states.reduced_state(self._entries[photon.pair_id].state, self.slot_of(partner))
        evals, evecs = np.linalg.eigh(rho)
        evals = np.clip(evals, 0.0, None)
        k = 0 if rng.random() < evals[0] / evals.sum() else 1
        self._dissolve(photon, partner, None, evecs[:, k])

    def _dissolve(self, photon: Photon, partner: Photon, own_state, partner_state) -> None:
        del self._entries[photon.pair_id]
        photon.pair_id = None
        partner.pair_id = None
        photon.polarization = own_state
        partner.polarization = partner_state


def apply_jones(photon: Photon, j: np.ndarray, registry: EntanglementRegistry) -> None:
    if photon.entangled:
        registry.apply(photon, j)
    else:
        photon.polarization = j @ photon.polarization


def measure_photon(photon: Photon, basis: states.MeasurementBasis,
                   registry: EntanglementRegistry, rng: np.random.Generator) -> int:
    if photon.entangled:
        return registry.measure(photon, basis, rng)
    outcome = states.measure_single(photon.polarization, basis, rng)
    photon.polarization = basis[outcome]
    return outcome


def lose_photon(photon: Photon, registry: EntanglementRegistry, rng: np.random.Generator) -> None:
    if photon.entangled:
        registry.lose(photon, rng)
