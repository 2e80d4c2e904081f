"""Source and measurement hardware: SPDC pair source, wave plates, PBS,
single-photon detectors and the composite polarization analyzer."""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import states
from .kernel import (
    PS_PER_S,
    Photon,
    PhotonKind,
    Timeline,
    apply_jones,
    lose_photon,
    measure_photon,
)

TRUNCATION_SIGMAS = 5.0


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SpdcConfig(_Config):
    bell_kind: states.BellKind = states.BellKind.PSI_MINUS
    mean_pair_number: float = Field(0.1, ge=0.0)
    statistics: Literal["poisson", "thermal"] = "poisson"
    pump_wavelength: float = Field(405.0, gt=0.0, description="nm")
    signal_mean: float = Field(810.0, gt=0.0, description="nm")
    signal_bandwidth: float = Field(1.0, gt=0.0, description="nm, std-dev")
    repetition_rate: float = Field(80e6, gt=0.0, description="Hz")

    @model_validator(mode="after")
    def _check_wavelengths(self):
        if self.signal_mean <= self.pump_wavelength:
            raise ValueError("signal_mean must exceed pump_wavelength")
        if self.signal_mean - TRUNCATION_SIGMAS * self.signal_bandwidth <= self.pump_wavelength:
            raise ValueError("signal_bandwidth too wide: truncated signal range reaches the pump wavelength")
        return self


class WavePlateConfig(_Config):
    kind: Literal["hwp", "qwp"] = "hwp"
    angle: float = Field(0.0, description="radians")
    fidelity: float = Field(1.0, ge=0.0, le=1.0)


class PbsConfig(_Config):
    basis_index: Literal[0, 1] = 0
    fidelity: float = Field(1.0, ge=0.0, le=1.0)
    bitflip_prob: float = Field(0.0, ge=0.0, le=1.0)


class DetectorConfig(_Config):
    efficiency: float = Field(1.0, ge=0.0, le=1.0)
    dark_count_rate: float = Field(0.0, ge=0.0, description="Hz")
    jitter_sigma: float = Field(0.0, ge=0.0, description="ps")


class AnalyzerMode(str, enum.Enum):
    HWP_ONLY = "hwp_only"
    HWP_QWP = "hwp_qwp"
    CUSTOM = "custom"


class AnalyzerConfig(_Config):
    mode: AnalyzerMode = AnalyzerMode.HWP_QWP
    hwp_fidelity: float = Field(1.0, ge=0.0, le=1.0)
    qwp_fidelity: float = Field(1.0, ge=0.0, le=1.0)
    pbs: PbsConfig = Field(default_factory=PbsConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)


# (qwp, hwp) angles in degrees; photons traverse the QWP first
BASIS_ANGLES = {"Z": (0.0, 0.0), "X": (45.0, 22.5), "Y": (45.0, 0.0)}
HWP_ONLY_ANGLES = {"Z": 0.0, "X": 22.5}


# ---------------------------------------------------------------- sampling

def sample_pair_count(mu: float, statistics: str, rng: np.random.Generator) -> int:
    if mu < 0:
        raise ValueError("mean pair number must be non-negative")
    if mu == 0:
        return 0
    if statistics == "poisson":
        return int(rng.poisson(mu))
    if statistics == "thermal":
        # numpy's geometric counts trials to first success (support >= 1)
        return int(rng.geometric(1.0 / (1.0 + mu))) - 1
    raise ValueError(f"unknown pair statistics {statistics!r}")


def empty_pulse_probability(mu: float, statistics: str) -> float:
    if statistics == "poisson":
        return math.exp(-mu)
    if statistics == "thermal":
        return 1.0 / (1.0 + mu)
    raise ValueError(f"unknown pair statistics {statistics!r}")


def sample_nonempty_pair_count(mu: float, statistics: str, rng: np.random.Generator) -> int:
    """Pair number of a pulse conditioned on it holding at least one pair."""
    if mu <= 0:
        raise ValueError("mean pair number must be positive")
    if statistics == "thermal":
        # memoryless: n | n >= 1 is one plus an unconditioned thermal draw
        return int(rng.geometric(1.0 / (1.0 + mu)))
    if statistics != "poisson":
        raise ValueError(f"unknown pair statistics {statistics!r}")
    # inverse transform over the tail mass beyond n = 0
    u = -math.expm1(-mu) * rng.random()
    n, pmf = 1, math.exp(-mu) * mu
    acc = pmf
    while u > acc and pmf > 0.0:
        n += 1
        pmf *= mu / n
        acc += pmf
    return n


def idler_wavelength(pump: float | np.ndarray, signal: float | np.ndarray):
    """Energy conservation 1/lp = 1/ls + 1/li solved for the idler."""
    return 1.0 / (1.0 / pump - 1.0 / signal)


def sample_signal_wavelengths(mean: float, sigma: float, rng: np.random.Generator,
                              size: int | None = None):
    n = 1 if size is None else size
    z = rng.standard_normal(n)
    bad = np.abs(z) > TRUNCATION_SIGMAS
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > TRUNCATION_SIGMAS
    out = mean + sigma * z
    return float(out[0]) if size is None else out


def sample_wavelengths(pump: float, signal_mean: float, sigma: float,
                       rng: np.random.Generator, size: int | None = None):
    """Signal from a +-5 sigma truncated Gaussian, idler from energy conservation."""
    lam_s = sample_signal_wavelengths(signal_mean, sigma, rng, size)
    return lam_s, idler_wavelength(pump, lam_s)


# ---------------------------------------------------------------- wave plates

def waveplate_matrix(kind: str, theta: float | np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    if kind == "hwp":
        m = np.array([[np.cos(2 * theta), np.sin(2 * theta)],
                      [np.sin(2 * theta), -np.cos(2 * theta)]], dtype=complex)
    elif kind == "qwp":
        off = (1 - 1j) * c * s
        m = np.array([[c**2 + 1j * s**2, off],
                      [off, s**2 + 1j * c**2]], dtype=complex)
    else:
        raise ValueError(f"unknown wave plate kind {kind!r}")
    return np.moveaxis(m, (0, 1), (-2, -1))


def analyzer_unitary(hwp_angle: float, qwp_angle: float | None) -> np.ndarray:
    """Wave-plate stack in front of the PBS (QWP first, then HWP)."""
    u = waveplate_matrix("hwp", hwp_angle)
    if qwp_angle is not None:
        u = u @ waveplate_matrix("qwp", qwp_angle)
    return u


def pbs_basis(basis_index: int) -> states.MeasurementBasis:
    return states.Z_BASIS if basis_index == 0 else states.X_BASIS


def effective_basis(unitary: np.ndarray, basis_index: int = 0) -> states.MeasurementBasis:
    """Input polarization states that the plates map onto the PBS ports."""
    b = pbs_basis(basis_index)
    ud = unitary.conj().T
    return states.MeasurementBasis(ud @ b.b0, ud @ b.b1)


def waveplate_transmit(photon: Photon, config: WavePlateConfig, timeline: Timeline,
                       rng: np.random.Generator) -> bool:
    """Apply the plate to ``photon``; returns False if the photon was lost."""
    if config.fidelity < 1.0 and rng.random() >= config.fidelity:
        lose_photon(photon, timeline.registry, rng)
        return False
    apply_jones(photon, waveplate_matrix(config.kind, config.angle), timeline.registry)
    return True


def pbs_route(photon: Photon, config: PbsConfig, timeline: Timeline,
              rng: np.random.Generator) -> int | None:
    """Projective measurement with insertion loss and bit-flip error; returns the port."""
    if config.fidelity < 1.0 and rng.random() >= config.fidelity:
        lose_photon(photon, timeline.registry, rng)
        return None
    port = measure_photon(photon, pbs_basis(config.basis_index), timeline.registry, rng)
    if config.bitflip_prob > 0.0 and rng.random() < config.bitflip_prob:
        port ^= 1
    return port


@dataclasses.dataclass(frozen=True)
class DetectionRecord:
    detector_id: str
    time: int
    origin: str  # "photon", "dark" or "raman"; diagnostic only


def detect(photon: Photon, config: DetectorConfig, detector_id: str, now: int,
           rng: np.random.Generator) -> DetectionRecord | None:
    if config.efficiency < 1.0 and rng.random() >= config.efficiency:
        return None
    t = now + photon.time_offset
    if config.jitter_sigma > 0:
        t += rng.normal(0.0, config.jitter_sigma)
    origin = "raman" if photon.kind is PhotonKind.NOISE else "photon"
    return DetectionRecord(detector_id, max(0, int(round(t))), origin)


def sample_poisson_arrivals(rate: float, t_start: int, t_stop: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson arrivals (ps) from exponential gaps, rate in 1/s."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    span = t_stop - t_start
    if rate == 0 or span <= 0:
        return np.empty(0, dtype=np.int64)
    mean_gap = PS_PER_S / rate
    expected = span / mean_gap
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(mean_gap, size=chunk))
    while times[-1] < span:
        more = np.cumsum(rng.exponential(mean_gap, size=chunk)) + times[-1]
        times = np.concatenate([times, more])
    times = times[times < span]
    return t_start + np.floor(times).astype(np.int64)


# ---------------------------------------------------------------- DES components

class Sink:
    """Terminal receiver that keeps what it is handed."""

    def __init__(self):
        self.photons: list[Photon] = []

    def receive(self, photon: Photon) -> None:
        self.photons.append(photon)


class SpdcSource:
    def __init__(self, timeline: Timeline, name: str, config: SpdcConfig,
                 signal_out=None, idler_out=None, record: bool = True):
        self.timeline = timeline
        self.name = name
        self.config = config
        self.signal_out = signal_out
        self.idler_out = idler_out
        self.record = record
        self.emitted: list[tuple[int, float, float]] = []
        self.pulses = 0
        self.pairs = 0
        self._t0 = 0
        self._stop = 0
        self._max_pairs: int | None = None

    @property
    def rng(self) -> np.random.Generator:
        return self.timeline.rng(self.name)

    def pulse_time(self, k: int) -> int:
        return self._t0 + int(round(k * PS_PER_S / self.config.repetition_rate))

    def slots_before(self, t: int) -> int:
        """Number of pulse slots k with pulse_time(k) < t."""
        k = max(0, int((t - self._t0) * self.config.repetition_rate / PS_PER_S) - 1)
        while self.pulse_time(k) < t:
            k += 1
        return k

    def start(self, t_stop: int, max_pairs: int | None = None) -> None:
        """Pulse at the repetition rate over [now, t_stop), or until ``max_pairs``.

        Empty pulses are skipped: the gap to the next pulse holding pairs is
        geometric, and that pulse's pair number is drawn conditioned on n >= 1.
        This is distributed exactly like pulsing every slot, at a cost that
        scales with the number of pairs rather than pulses.
        """
        self._t0 = self.timeline.now
        self._stop = int(t_stop)
        self._max_pairs = max_pairs
        self._schedule_after(-1)

    def _schedule_after(self, k: int) -> None:
        cfg = self.config
        if cfg.mean_pair_number > 0:
            p_hit = 1.0 - empty_pulse_probability(cfg.mean_pair_number, cfg.statistics)
            k_next = k + int(self.rng.geometric(p_hit))
            t_next = self.pulse_time(k_next)
            if t_next < self._stop:
                self.timeline.schedule(t_next, self._pulse, k_next, label=f"{self.name}.pulse")
                return
        self.pulses = self.slots_before(self._stop)

    def _pulse(self, k: int) -> None:
        cfg = self.config
        self.pulses = k + 1
        self._emit(sample_nonempty_pair_count(cfg.mean_pair_number, cfg.statistics, self.rng))
        if self._max_pairs is not None and self.pairs >= self._max_pairs:
            return
        self._schedule_after(k)

    def emit_pulse(self) -> int:
        """Fire a single pulse now, with the unconditioned pair-number distribution."""
        cfg = self.config
        self.pulses += 1
        return self._emit(sample_pair_count(cfg.mean_pair_number, cfg.statistics, self.rng))

    def _emit(self, n: int) -> int:
        cfg = self.config
        rng = self.rng
        tl = self.timeline
        if self._max_pairs is not None:
            n = min(n, self._max_pairs - self.pairs)
        for _ in range(n):
            lam_s, lam_i = sample_wavelengths(cfg.pump_wavelength, cfg.signal_mean,
                                              cfg.signal_bandwidth, rng)
            sig = Photon(tl.next_photon_id(), lam_s, tl.now, PhotonKind.SIGNAL)
            idl = Photon(tl.next_photon_id(), lam_i, tl.now, PhotonKind.IDLER)
            tl.registry.register(states.bell_state(cfg.bell_kind), sig, idl)
            self.pairs += 1
            if self.record:
                self.emitted.append((tl.now, lam_s, lam_i))
            if self.signal_out is not None:
                self.signal_out.receive(sig)
            if self.idler_out is not None:
                self.idler_out.receive(idl)
        return n


class WavePlate:
    def __init__(self, timeline: Timeline, name: str, config: WavePlateConfig, output=None):
        self.timeline = timeline
        self.name = name
        self.config = config
        self.output = output

    def receive(self, photon: Photon) -> None:
        if waveplate_transmit(photon, self.config, self.timeline, self.timeline.rng(self.name)):
            self.output.receive(photon)


class PolarizingBeamSplitter:
    def __init__(self, timeline: Timeline, name: str, config: PbsConfig, outputs=(None, None)):
        self.timeline = timeline
        self.name = name
        self.config = config
        self.outputs = list(outputs)

    def receive(self, photon: Photon) -> None:
        port = pbs_route(photon, self.config, self.timeline, self.timeline.rng(self.name))
        if port is not None:
            self.outputs[port].receive(photon)


class Detector:
    def __init__(self, timeline: Timeline, name: str, config: DetectorConfig):
        self.timeline = timeline
        self.name = name
        self.config = config
        self.records: list[DetectionRecord] = []

    def receive(self, photon: Photon) -> None:
        rec = detect(photon, self.config, self.name, self.timeline.now,
                     self.timeline.rng(self.name))
        if rec is not None:
            self.records.append(rec)

    def start(self, t_start: int, t_stop: int) -> None:
        """Draw the dark-count process for the run window up front."""
        times = sample_poisson_arrivals(self.config.dark_count_rate, t_start, t_stop,
                                        self.timeline.rng(self.name + ".dark"))
        self.records.extend(DetectionRecord(self.name, int(t), "dark") for t in times)

    def times(self) -> np.ndarray:
        return np.sort(np.array([r.time for r in self.records], dtype=np.int64))


class AnalyzerNode:
    """QWP -> HWP -> PBS -> two detectors (HWP -> PBS in hwp_only mode)."""

    def __init__(self, timeline: Timeline, name: str, config: AnalyzerConfig | None = None):
        config = config or AnalyzerConfig()
        self.timeline = timeline
        self.name = name
        self.mode = AnalyzerMode(config.mode)
        self.detectors = [Detector(timeline, f"{name}.d{k}", config.detector) for k in (0, 1)]
        self.pbs = PolarizingBeamSplitter(timeline, f"{name}.pbs", config.pbs, self.detectors)
        self.hwp = WavePlate(timeline, f"{name}.hwp",
                             WavePlateConfig(kind="hwp", fidelity=config.hwp_fidelity), self.pbs)
        self.qwp = None
        if self.mode is not AnalyzerMode.HWP_ONLY:
            self.qwp = WavePlate(timeline, f"{name}.qwp",
                                 WavePlateConfig(kind="qwp", fidelity=config.qwp_fidelity), self.hwp)
        self.basis: str | None = None

    def receive(self, photon: Photon) -> None:
        (self.qwp or self.hwp).receive(photon)

    def set_basis(self, basis: str) -> None:
        basis = basis.upper()
        if self.mode is AnalyzerMode.HWP_QWP:
            qwp, hwp = BASIS_ANGLES[basis]
            self.qwp.config.angle = math.radians(qwp)
        elif self.mode is AnalyzerMode.HWP_ONLY:
            if basis not in HWP_ONLY_ANGLES:
                raise ValueError(f"basis {basis} needs a quarter-wave plate (hwp_only mode)")
            hwp = HWP_ONLY_ANGLES[basis]
        else:
            raise ValueError("set_basis is not available in custom mode; use set_angles")
        self.hwp.config.angle = math.radians(hwp)
        self.basis = basis

    def set_angles(self, hwp: float, qwp: float | None = None) -> None:
        """Set plate angles directly (radians)."""
        self.hwp.config.angle = hwp
        if qwp is not None:
            if self.qwp is None:
                raise ValueError("analyzer has no quarter-wave plate")
            self.qwp.config.angle = qwp
        self.basis = None

    def set_polarizer_angle(self, theta: float) -> None:
        """Emulate a linear polarizer at ``theta`` (radians).

        The HWP sits at theta/2. A QWP, if present, is aligned with theta so that
        the linear state at theta is one of its eigenmodes and passes unchanged.
        """
        self.set_angles(theta / 2, theta if self.qwp is not None else None)

    def unitary(self) -> np.ndarray:
        qwp = self.qwp.config.angle if self.qwp is not None else None
        return analyzer_unitary(self.hwp.config.angle, qwp)

    def effective_basis(self) -> states.MeasurementBasis:
        return effective_basis(self.unitary(), self.pbs.config.basis_index)

    def survival(self) -> float:
        """Probability a photon entering the analyzer reaches a detector and clicks."""
        p = self.hwp.config.fidelity * self.pbs.config.fidelity * self.detectors[0].config.efficiency
        if self.qwp is not None:
            p *= self.qwp.config.fidelity
        return p

    def start(self, t_start: int, t_stop: int) -> None:
        for d in self.detectors:
            d.start(t_start, t_stop)
