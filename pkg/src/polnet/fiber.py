"""Multi-section fiber: Sellmeier index, chromatic dispersion, birefringence
Jones matrices, differential group delay, attenuation and Raman noise.

Unit conventions: wavelengths in nm at the API surface, section lengths in m,
dispersion in ps/(nm km), delays in ps, DGD in s. Raman attenuation
constants are natural (1/m); quantum-channel attenuation is dB/km.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import states
from .components import sample_poisson_arrivals
from .kernel import Photon, PhotonKind, Timeline, apply_jones, lose_photon

C_LIGHT = 299_792_458.0  # m/s
RESONANCE_RTOL = 1e-6
GROUP_INDEX_STEP_NM = 0.1
DGD_STEP_NM = 0.1


def db_per_km_to_per_m(alpha_db_km: float) -> float:
    return alpha_db_km * math.log(10) / 10 / 1000


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SellmeierCoefficients(_Config):
    """Three-term Sellmeier fit; defaults are the Malitson fused-silica set."""

    B: tuple[float, float, float] = (0.6961663, 0.4079426, 0.8974794)
    C: tuple[float, float, float] = (0.0684043e-6, 0.1162414e-6, 9.896161e-6)  # m
    dB_dT: tuple[float, float, float] = (0.0, 0.0, 0.0)  # 1/K
    dC_dT: tuple[float, float, float] = (0.0, 0.0, 0.0)  # m/K
    reference_temperature: float = 293.15  # K

    @model_validator(mode="after")
    def _positive_resonances(self):
        if any(c <= 0 for c in self.C):
            raise ValueError("Sellmeier resonance wavelengths C must be positive")
        return self

    def at_temperature(self, temperature: float):
        dt = temperature - self.reference_temperature
        b = np.asarray(self.B) + np.asarray(self.dB_dT) * dt
        c = np.asarray(self.C) + np.asarray(self.dC_dT) * dt
        return b, c


class FiberSection(_Config):
    length: float = Field(1000.0, ge=0.0, description="m")
    temperature: float = Field(293.15, gt=0.0, description="K")
    delta_beta_ellip: float = Field(0.0, description="rad/m")
    delta_beta_thermal: float = Field(0.0, description="rad/m")
    delta_beta_bend: float = Field(0.0, description="rad/m")
    twist_rate: float = Field(0.0, description="rad/m, circular birefringence")
    birefringence_model: Literal["constant_delta_beta", "constant_delta_n"] = "constant_delta_beta"
    delta_n: float = Field(0.0, description="used only in constant_delta_n mode")
    zero_dispersion_wavelength: float = Field(1310.0, gt=0.0, description="nm")
    dispersion_slope: float = Field(0.092, description="ps/(nm^2 km)")
    attenuation: float = Field(0.2, ge=0.0, description="dB/km at the quantum wavelength")
    reference_wavelength: float = Field(1550.0, gt=0.0, description="nm")
    sellmeier: SellmeierCoefficients = Field(default_factory=SellmeierCoefficients)

    @property
    def length_km(self) -> float:
        return self.length / 1000.0


class FiberLink(_Config):
    sections: list[FiberSection] = Field(min_length=1)

    @property
    def reference_wavelength(self) -> float:
        return self.sections[0].reference_wavelength

    @property
    def total_length(self) -> float:
        return sum(s.length for s in self.sections)

    @property
    def loss_db(self) -> float:
        return sum(s.attenuation * s.length_km for s in self.sections)

    def survival_probability(self) -> float:
        return 10 ** (-self.loss_db / 10)


class ClassicalChannel(_Config):
    wavelength: float = Field(1310.0, gt=0.0, description="nm")
    launch_power: float = Field(1e14, ge=0.0, description="photons/s")
    attenuation: float = Field(db_per_km_to_per_m(0.33), ge=0.0, description="1/m")
    enabled_sections: list[int] | None = None  # None means every section


# ---------------------------------------------------------------- index and dispersion

def sellmeier_index(wavelength_nm, temperature: float, coeffs: SellmeierCoefficients):
    lam2 = (np.asarray(wavelength_nm, dtype=float) * 1e-9) ** 2
    b, c = coeffs.at_temperature(temperature)
    n2 = np.ones_like(lam2)
    for bi, ci in zip(b, c):
        denom = lam2 - ci**2
        if np.any(np.abs(denom) <= RESONANCE_RTOL * np.maximum(lam2, ci**2)):
            raise ValueError(f"wavelength too close to Sellmeier resonance at {ci * 1e9:.3f} nm")
        n2 = n2 + bi * lam2 / denom
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


def group_index(wavelength_nm: float, temperature: float, coeffs: SellmeierCoefficients,
                step_nm: float = GROUP_INDEX_STEP_NM) -> float:
    """n_g = n - lambda dn/dlambda with a central difference."""
    n = sellmeier_index(wavelength_nm, temperature, coeffs)
    dn = (sellmeier_index(wavelength_nm + step_nm, temperature, coeffs)
          - sellmeier_index(wavelength_nm - step_nm, temperature, coeffs)) / (2 * step_nm)
    return n - wavelength_nm * dn


def dispersion_param(wavelength_nm, zero_dispersion_nm: float, slope: float):
    """D(lambda) = S0/4 (lambda - lambda0^4 / lambda^3), ps/(nm km)."""
    lam = np.asarray(wavelength_nm, dtype=float)
    d = slope / 4.0 * (lam - zero_dispersion_nm**4 / lam**3)
    return float(d) if d.ndim == 0 else d


def effective_dispersion(link: FiberLink) -> float:
    """Length-weighted mean of each section's D at the link reference wavelength."""
    lam = link.reference_wavelength
    total = link.total_length
    if total == 0:
        s = link.sections[0]
        return dispersion_param(lam, s.zero_dispersion_wavelength, s.dispersion_slope)
    acc = sum(dispersion_param(lam, s.zero_dispersion_wavelength, s.dispersion_slope) * s.length
              for s in link.sections)
    return acc / total


def cd_delay(wavelength_nm, link: FiberLink):
    """Chromatic-dispersion delay in ps relative to the reference wavelength."""
    l_km = link.total_length / 1000.0
    return effective_dispersion(link) * l_km * (np.asarray(wavelength_nm) - link.reference_wavelength)


def base_delay(link: FiberLink) -> float:
    """Group delay (ps) of the link at its reference wavelength."""
    lam = link.reference_wavelength
    seconds = sum(group_index(lam, s.temperature, s.sellmeier) * s.length / C_LIGHT
                  for s in link.sections if s.length > 0)
    return seconds * 1e12


# ---------------------------------------------------------------- polarization

def linear_birefringence(section: FiberSection, wavelength_nm):
    if section.birefringence_model == "constant_delta_n":
        return 2 * np.pi * section.delta_n / (np.asarray(wavelength_nm, dtype=float) * 1e-9)
    total = section.delta_beta_ellip + section.delta_beta_thermal + section.delta_beta_bend
    return np.full(np.shape(wavelength_nm), total, dtype=float)


def section_jones(section: FiberSection, wavelength_nm) -> np.ndarray:
    """J_circ @ J_lin for one section; broadcasts over an array of wavelengths."""
    half = linear_birefringence(section, wavelength_nm) * section.length / 2
    rot = section.twist_rate * section.length / 2
    c, s = math.cos(rot), math.sin(rot)
    ep, em = np.exp(1j * half), np.exp(-1j * half)
    # J_circ @ diag(ep, em)
    j = np.empty(np.shape(half) + (2, 2), dtype=complex)
    j[..., 0, 0] = c * ep
    j[..., 0, 1] = -s * em
    j[..., 1, 0] = s * ep
    j[..., 1, 1] = c * em
    return j


def total_jones(link: FiberLink, wavelength_nm) -> np.ndarray:
    """Product J_N ... J_1; section 1 is traversed first."""
    j = None
    for section in link.sections:
        js = section_jones(section, wavelength_nm)
        j = js if j is None else js @ j
    return j


def dgd(link: FiberLink, wavelength_nm: float, step_nm: float = DGD_STEP_NM) -> float:
    """Differential group delay (s) from eigenvalue phases of J(l +- dl) J(l)^-1."""
    lam = wavelength_nm * 1e-9
    d_omega = 2 * np.pi * C_LIGHT / lam**2 * (step_nm * 1e-9)
    j0 = total_jones(link, wavelength_nm)
    terms = []
    for sign in (-1, 1):
        j = total_jones(link, wavelength_nm + sign * step_nm)
        if np.array_equal(j, j0):
            # wavelength-independent link: no group-delay difference, avoid roundoff
            terms.append(0.0)
            continue
        mu = np.linalg.eigvals(j @ j0.conj().T)
        terms.append(abs(np.angle(mu[0] / mu[1])) / d_omega)
    return 0.5 * sum(terms)


# ---------------------------------------------------------------- Raman noise

class RamanCoefficientTable:
    """Forward/backward scattering constants per (classical, quantum) wavelength pair.

    ``bandwidth`` is the quantum receiver bandwidth (Hz); ``noise_attenuation``
    is the fiber loss at the quantum wavelength (1/m).
    """

    def __init__(self, entries: dict[tuple[float, float], tuple[float, float]],
                 bandwidth: float = 100e9, noise_wavelength: float = 1550.0,
                 noise_attenuation: float = db_per_km_to_per_m(0.2)):
        for key, (fs, bs) in entries.items():
            if fs < 0 or bs < 0:
                raise ValueError(f"negative Raman coefficient for {key}")
        self.entries = {(float(a), float(b)): (float(fs), float(bs))
                        for (a, b), (fs, bs) in entries.items()}
        self.bandwidth = bandwidth
        self.noise_wavelength = noise_wavelength
        self.noise_attenuation = noise_attenuation

    def lookup(self, classical_nm: float, noise_nm: float | None = None) -> tuple[float, float]:
        noise_nm = self.noise_wavelength if noise_nm is None else noise_nm
        for (ls, ln), coeffs in self.entries.items():
            if abs(ls - classical_nm) < 1e-6 and abs(ln - noise_nm) < 1e-6:
                return coeffs
        raise KeyError(f"no Raman coefficients for {classical_nm} nm -> {noise_nm} nm")

    def wavelengths(self) -> list[float]:
        return sorted(ls for ls, ln in self.entries if abs(ln - self.noise_wavelength) < 1e-6)

    @classmethod
    def load(cls, path, **kwargs) -> "RamanCoefficientTable":
        """Rows of ``lambda_s lambda_n beta_fs beta_bs`` (comma or whitespace separated)."""
        entries = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.replace(",", " ").split()
            try:
                ls, ln, fs, bs = (float(x) for x in fields)
            except ValueError:
                if lineno == 1:  # header row
                    continue
                raise ValueError(f"{path}:{lineno}: expected 4 numeric columns") from None
            entries[(ls, ln)] = (fs, bs)
        return cls(entries, **kwargs)

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_s_nm", "lambda_n_nm", "beta_fs", "beta_bs"])
            for (ls, ln), (fs, bs) in sorted(self.entries.items()):
                w.writerow([repr(ls), repr(ln), repr(fs), repr(bs)])


BETA_FS_1270 = 0.058e-23  # m^-1 Hz^-1, 1270 nm classical -> 1550 nm quantum
NOISE_RATIO_1490_1270 = 64.0


def default_raman_table() -> RamanCoefficientTable:
    """Shipped coefficients for a 1550 nm quantum channel.

    Only the 1270 nm forward coefficient is a published measurement. The
    1490 nm row applies the reported ~64x noise ratio to it, and backward
    coefficients are set equal to forward ones (the two contributions are of
    comparable size). Load a measured table with
    :meth:`RamanCoefficientTable.load` for absolute-rate work, including the
    1310 and 1330 nm rows.
    """
    fs_1490 = NOISE_RATIO_1490_1270 * BETA_FS_1270
    return RamanCoefficientTable({
        (1270.0, 1550.0): (BETA_FS_1270, BETA_FS_1270),
        (1490.0, 1550.0): (fs_1490, fs_1490),
    })


# Typical standard single-mode fiber loss (dB/km) for classical channels.
TYPICAL_ATTENUATION_DB_KM = {1270.0: 0.35, 1310.0: 0.33, 1330.0: 0.32, 1490.0: 0.21, 1550.0: 0.20}


def _fs_kernel(length: float, alpha_s: float, alpha_n: float) -> float:
    # (e^{-an L} - e^{-as L}) / (as - an), written to stay finite as as -> an
    delta = alpha_s - alpha_n
    if delta == 0.0:
        return length * math.exp(-alpha_n * length)
    return math.exp(-alpha_n * length) * -math.expm1(-delta * length) / delta


def _bs_kernel(length: float, alpha_s: float, alpha_n: float) -> float:
    a = alpha_s + alpha_n
    if a == 0.0:
        return length
    return -math.expm1(-a * length) / a


def raman_rates(length: float, classical: ClassicalChannel,
                table: RamanCoefficientTable) -> tuple[float, float]:
    """(forward, backward) noise photon rates in photons/s for one span of ``length`` m."""
    beta_fs, beta_bs = table.lookup(classical.wavelength)
    scale = table.bandwidth * classical.launch_power
    a_s, a_n = classical.attenuation, table.noise_attenuation
    return (_fs_kernel(length, a_s, a_n) * beta_fs * scale,
            _bs_kernel(length, a_s, a_n) * beta_bs * scale)


def raman_section_rates(section: FiberSection, classical: ClassicalChannel,
                        table: RamanCoefficientTable) -> tuple[float, float]:
    return raman_rates(section.length, classical, table)


def enabled_sections(link: FiberLink, classical: ClassicalChannel) -> list[FiberSection]:
    if classical.enabled_sections is None:
        return list(link.sections)
    return [link.sections[i] for i in classical.enabled_sections]


def total_raman_rate(link: FiberLink, classical: ClassicalChannel,
                     table: RamanCoefficientTable) -> float:
    """Sum of forward and backward rates over the sections sharing the classical channel."""
    return sum(sum(raman_section_rates(s, classical, table))
               for s in enabled_sections(link, classical))


def sample_noise_arrivals(rate: float, window: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    t_start, t_stop = window
    return sample_poisson_arrivals(rate, int(t_start), int(t_stop), rng)


# ---------------------------------------------------------------- DES channel

class FiberChannel:
    def __init__(self, timeline: Timeline, name: str, link: FiberLink, output=None,
                 classical: ClassicalChannel | None = None,
                 raman_table: RamanCoefficientTable | None = None):
        self.timeline = timeline
        self.name = name
        self.link = link
        self.output = output
        self.classical = classical
        self.raman_table = raman_table or (default_raman_table() if classical else None)
        self._base_delay = base_delay(link)
        self._survival = link.survival_probability()
        self.lost = 0
        self.noise_emitted = 0

    def transmit(self, photon: Photon) -> bool:
        """Propagate ``photon`` through the link; schedules delivery, returns survival."""
        tl = self.timeline
        rng = tl.rng(self.name)
        if self._survival < 1.0 and rng.random() >= self._survival:
            lose_photon(photon, tl.registry, rng)
            self.lost += 1
            return False
        apply_jones(photon, total_jones(self.link, photon.wavelength), tl.registry)
        delay = self._base_delay + float(cd_delay(photon.wavelength, self.link))
        ticks = max(0, math.floor(delay))
        photon.time_offset += delay - ticks
        tl.schedule(tl.now + ticks, self.output.receive, photon, label=f"{self.name}.arrive")
        return True

    receive = transmit

    def noise_rate(self) -> float:
        if self.classical is None:
            return 0.0
        return total_raman_rate(self.link, self.classical, self.raman_table)

    def start(self, t_start: int, t_stop: int) -> None:
        """Schedule Raman noise photons arriving at the fiber output over the window."""
        rate = self.noise_rate()
        if rate == 0:
            return
        tl = self.timeline
        rng = tl.rng(self.name + ".raman")
        for t in sample_noise_arrivals(rate, (t_start, t_stop), rng):
            pol = states.random_pure_state(rng, dim=2)
            photon = Photon(tl.next_photon_id(), self.raman_table.noise_wavelength, int(t),
                            PhotonKind.NOISE, polarization=pol)
            tl.schedule(int(t), self.output.receive, photon, label=f"{self.name}.raman")
            self.noise_emitted += 1
