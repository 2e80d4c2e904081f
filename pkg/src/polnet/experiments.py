"""Experiment harness: builds source/fiber/analyzer networks, runs them and
reduces the detections to the tables behind each validation figure.

Two execution engines share the same component physics:

* ``event``: every photon is scheduled on a :class:`~polnet.kernel.Timeline`,
  detections are matched into coincidences by timestamp.
* ``ensemble``: for polarization-statistics experiments (fringes, tomography,
  twist scans) the pair outcomes are drawn in bulk from the same Born
  probabilities, loss, bit-flip and background-click models. Timing is not
  resolved, so background clicks enter as a per-pair probability of an
  accidental click inside the coincidence window.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import analysis, states
from .components import (
    BASIS_ANGLES,
    AnalyzerConfig,
    AnalyzerMode,
    AnalyzerNode,
    SpdcSource,
    analyzer_unitary,
    idler_wavelength,
    pbs_basis,
    sample_wavelengths,
)
from .config import ConfigError, ExperimentConfig, classical_attenuation
from .fiber import (
    ClassicalChannel,
    FiberChannel,
    FiberLink,
    FiberSection,
    RamanCoefficientTable,
    base_delay,
    cd_delay,
    default_raman_table,
    dgd,
    effective_dispersion,
    db_per_km_to_per_m,
    raman_section_rates,
    sample_noise_arrivals,
    total_jones,
    total_raman_rate,
)
from .kernel import PS_PER_S, Timeline, derive_seed, make_rng

BASIS_ORDER = ("Z", "X", "Y")
BASIS_KET_LABELS = ("HH", "HV", "VH", "VV")


@dataclasses.dataclass
class Table:
    header: list[str]
    rows: list[list]


@dataclasses.dataclass
class ExperimentResult:
    kind: str
    tables: dict[str, Table]
    summary: dict


def map_points(fn: Callable, args: Sequence, workers: int = 1) -> list:
    """Evaluate independent grid points, optionally in worker processes.

    Each point carries its own derived seed, so the result does not depend on
    ``workers``.
    """
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


def raman_table_for(cfg: ExperimentConfig) -> RamanCoefficientTable:
    s = cfg.raman_sweep
    kwargs = dict(bandwidth=s.bandwidth, noise_wavelength=s.noise_wavelength,
                  noise_attenuation=db_per_km_to_per_m(s.noise_attenuation_db_km))
    path = s.table_path or cfg.raman_table_path
    if path:
        return RamanCoefficientTable.load(path, **kwargs)
    table = default_raman_table()
    return RamanCoefficientTable(table.entries, **kwargs)


# ---------------------------------------------------------------- ensemble engine

@dataclasses.dataclass(frozen=True)
class ArmModel:
    survival: float  # a pair photon entering the arm ends in a click
    bitflip: float
    background: float  # probability of a background click inside the coincidence window
    basis_index: int = 0


def arm_model(analyzer: AnalyzerConfig, link: FiberLink | None, noise_rate: float,
              window_ps: float) -> ArmModel:
    det = analyzer.detector
    through = analyzer.hwp_fidelity * analyzer.pbs.fidelity * det.efficiency
    if AnalyzerMode(analyzer.mode) is not AnalyzerMode.HWP_ONLY:
        through *= analyzer.qwp_fidelity
    survival = through * (link.survival_probability() if link is not None else 1.0)
    bg_rate = 2 * det.dark_count_rate + noise_rate * through
    background = -math.expm1(-bg_rate * 2 * window_ps / PS_PER_S)
    return ArmModel(survival, analyzer.pbs.bitflip_prob, background, analyzer.pbs.basis_index)


def pair_probabilities(psi, u_a, u_b, basis_a: int = 0, basis_b: int = 0) -> np.ndarray:
    """Outcome-pair probabilities (00, 01, 10, 11) after local unitaries.

    ``u_a``/``u_b`` may be single 2x2 matrices or stacks ``(n, 2, 2)``.
    """
    m = np.asarray(psi, dtype=complex).reshape(2, 2)
    wa = np.array(pbs_basis(basis_a)).conj()
    wb = np.array(pbs_basis(basis_b)).conj()
    amp = (wa @ u_a) @ m @ np.swapaxes(wb @ u_b, -1, -2)
    p = np.abs(amp) ** 2
    p = p.reshape(p.shape[:-2] + (4,))
    return p / p.sum(axis=-1, keepdims=True)


def ensemble_counts(probs, n_pairs: int, arm_a: ArmModel, arm_b: ArmModel,
                    rng: np.random.Generator) -> np.ndarray:
    """Sample coincidence counts for ``n_pairs`` emitted pairs."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        idx = rng.choice(4, size=n_pairs, p=probs)
    else:
        cum = np.cumsum(probs, axis=1)
        idx = (rng.random(n_pairs)[:, None] > cum[:, :3]).sum(axis=1)
    out_a, out_b = idx >> 1, idx & 1
    sides = []
    for out, arm in ((out_a, arm_a), (out_b, arm_b)):
        out = out ^ (rng.random(n_pairs) < arm.bitflip)
        real = rng.random(n_pairs) < arm.survival
        bg = rng.random(n_pairs) < arm.background
        bg_port = rng.integers(0, 2, n_pairs)
        click = real | bg
        sides.append((click, np.where(real, out, bg_port)))
    (click_a, port_a), (click_b, port_b) = sides
    both = click_a & click_b
    return np.bincount(2 * port_a[both] + port_b[both], minlength=4)


def arm_unitaries(analyzer_u: np.ndarray, link: FiberLink | None, wavelengths):
    if link is None:
        return analyzer_u
    return analyzer_u @ total_jones(link, wavelengths)


# ---------------------------------------------------------------- event engine

@dataclasses.dataclass
class Network:
    timeline: Timeline
    source: SpdcSource
    analyzer_a: AnalyzerNode
    analyzer_b: AnalyzerNode
    fiber_a: FiberChannel | None
    fiber_b: FiberChannel | None

    @property
    def coincidence_offset(self) -> float:
        """Mean arrival of arm B minus arm A, compensated before matching."""
        da = self.fiber_a._base_delay if self.fiber_a else 0.0
        db = self.fiber_b._base_delay if self.fiber_b else 0.0
        return db - da


def build_network(cfg: ExperimentConfig, seed: int, link_a: FiberLink | None,
                  link_b: FiberLink | None, classical: ClassicalChannel | None = None,
                  raman_table: RamanCoefficientTable | None = None) -> Network:
    tl = Timeline(seed)
    an_a = AnalyzerNode(tl, "analyzer_a", cfg.analyzer_a.model_copy(deep=True))
    an_b = AnalyzerNode(tl, "analyzer_b", cfg.analyzer_b.model_copy(deep=True))
    fa = FiberChannel(tl, "fiber_a", link_a, an_a) if link_a is not None else None
    fb = None
    if link_b is not None:
        fb = FiberChannel(tl, "fiber_b", link_b, an_b, classical=classical, raman_table=raman_table)
    src = SpdcSource(tl, "source", cfg.source.model_copy(deep=True), fa or an_a, fb or an_b)
    return Network(tl, src, an_a, an_b, fa, fb)


def run_pairs(net: Network, n_pairs: int | None, duration_s: float | None = None) -> None:
    """Pulse the source until ``n_pairs`` pairs (or ``duration_s``) and drain the queue."""
    cfg = net.source.config
    if duration_s is not None:
        t_stop = int(round(duration_s * PS_PER_S))
        n_pairs = None
    else:
        if cfg.mean_pair_number <= 0:
            raise ConfigError(["source.mean_pair_number: must be > 0 for a pair-budget run"])
        pulses = n_pairs / cfg.mean_pair_number
        pulses = 1.5 * pulses + 10 * math.sqrt(pulses) + 10
        t_stop = int(math.ceil(pulses * PS_PER_S / cfg.repetition_rate))
    tl = net.timeline
    for part in (net.fiber_a, net.fiber_b):
        if part is not None:
            part.start(0, t_stop)
    net.analyzer_a.start(0, t_stop)
    net.analyzer_b.start(0, t_stop)
    net.source.start(t_stop, max_pairs=n_pairs)
    tl.run()


def detector_streams(analyzer: AnalyzerNode) -> list[np.ndarray]:
    return [d.times() for d in analyzer.detectors]


def event_counts(net: Network, window: float) -> np.ndarray:
    return analysis.coincidence_counts(detector_streams(net.analyzer_a),
                                       detector_streams(net.analyzer_b),
                                       window, net.coincidence_offset)


def _configure_polarizer(analyzer: AnalyzerNode, theta_deg: float) -> None:
    analyzer.set_polarizer_angle(math.radians(theta_deg))


def _polarizer_unitary(analyzer: AnalyzerConfig, theta_deg: float) -> np.ndarray:
    theta = math.radians(theta_deg)
    qwp = None if AnalyzerMode(analyzer.mode) is AnalyzerMode.HWP_ONLY else theta
    return analyzer_unitary(theta / 2, qwp)


def _basis_unitary(analyzer: AnalyzerConfig, basis: str) -> np.ndarray:
    if AnalyzerMode(analyzer.mode) is not AnalyzerMode.HWP_QWP:
        raise ConfigError(["analyzer mode must be hwp_qwp for Pauli-basis tomography"])
    qwp, hwp = BASIS_ANGLES[basis]
    return analyzer_unitary(math.radians(hwp), math.radians(qwp))


def _noise_rate(cfg: ExperimentConfig, link: FiberLink | None, table) -> float:
    if link is None or cfg.classical is None:
        return 0.0
    return total_raman_rate(link, cfg.classical, table)


def _classical_table(cfg: ExperimentConfig):
    return raman_table_for(cfg) if cfg.classical is not None else None


# ---------------------------------------------------------------- polarization settings

@dataclasses.dataclass(frozen=True)
class SettingJob:
    """One analyzer setting evaluated on its own seeded stream."""

    cfg: ExperimentConfig
    seed: int
    link_a: FiberLink | None
    link_b: FiberLink | None
    # ("polarizer", theta_deg) or ("basis", "Z"/"X"/"Y") per arm
    setting_a: tuple
    setting_b: tuple


def _setting_unitary(analyzer: AnalyzerConfig, setting: tuple) -> np.ndarray:
    kind, value = setting
    if kind == "polarizer":
        return _polarizer_unitary(analyzer, value)
    return _basis_unitary(analyzer, value)


def _apply_setting(node: AnalyzerNode, setting: tuple) -> None:
    kind, value = setting
    if kind == "polarizer":
        _configure_polarizer(node, value)
    else:
        node.set_basis(value)


def _needs_wavelengths(link: FiberLink | None) -> bool:
    return link is not None and any(
        s.birefringence_model == "constant_delta_n" and s.delta_n != 0 for s in link.sections)


def run_setting(job: SettingJob) -> np.ndarray:
    cfg = job.cfg
    n = cfg.pairs_per_setting
    table = _classical_table(cfg)
    if cfg.engine == "event":
        net = build_network(cfg, job.seed, job.link_a, job.link_b, cfg.classical, table)
        _apply_setting(net.analyzer_a, job.setting_a)
        _apply_setting(net.analyzer_b, job.setting_b)
        run_pairs(net, n, cfg.duration)
        return event_counts(net, cfg.coincidence_window)

    rng = make_rng(job.seed, "ensemble")
    src = cfg.source
    ua = _setting_unitary(cfg.analyzer_a, job.setting_a)
    ub = _setting_unitary(cfg.analyzer_b, job.setting_b)
    if _needs_wavelengths(job.link_a) or _needs_wavelengths(job.link_b):
        lam_s, lam_i = sample_wavelengths(src.pump_wavelength, src.signal_mean,
                                          src.signal_bandwidth, rng, size=n)
    else:
        lam_s = src.signal_mean
        lam_i = idler_wavelength(src.pump_wavelength, src.signal_mean)
    ua = arm_unitaries(ua, job.link_a, lam_s)
    ub = arm_unitaries(ub, job.link_b, lam_i)
    probs = pair_probabilities(states.bell_state(src.bell_kind), ua, ub,
                               cfg.analyzer_a.pbs.basis_index, cfg.analyzer_b.pbs.basis_index)
    arm_a = arm_model(cfg.analyzer_a, job.link_a, _noise_rate(cfg, None, table), cfg.coincidence_window)
    arm_b = arm_model(cfg.analyzer_b, job.link_b, _noise_rate(cfg, job.link_b, table),
                      cfg.coincidence_window)
    return ensemble_counts(probs, n, arm_a, arm_b, rng)


def _count_row(counts) -> list[int]:
    return [int(c) for c in counts]


# ---------------------------------------------------------------- experiments

def run_fringe(cfg: ExperimentConfig) -> ExperimentResult:
    s = cfg.fringe
    grid = list(itertools.product(s.theta_a, s.theta_b))
    jobs = [SettingJob(cfg, derive_seed(cfg.seed, "fringe", k), cfg.fiber_a, cfg.fiber_b,
                       ("polarizer", ta), ("polarizer", tb))
            for k, (ta, tb) in enumerate(grid)]
    counts = map_points(run_setting, jobs, cfg.workers)
    rows = [[ta, tb, *_count_row(c)] for (ta, tb), c in zip(grid, counts)]
    fits, fit_rows = {}, []
    for ta in s.theta_a:
        sel = [c for (a, _), c in zip(grid, counts) if a == ta]
        scan = analysis.FringeScan(ta, np.array(s.theta_b), np.array(sel))
        fit = analysis.fit_fringe(scan.theta_b, scan.series(s.outcome))
        fits[str(ta)] = dataclasses.asdict(fit)
        fit_rows.append([ta, fit.visibility, fit.phase, fit.offset, fit.amplitude])
    return ExperimentResult("fringe", {
        "fringe": Table(["theta_a_deg", "theta_b_deg", "n00", "n01", "n10", "n11"], rows),
        "fringe_fit": Table(["theta_a_deg", "visibility", "phase_deg", "offset", "amplitude"], fit_rows),
    }, {"outcome": s.outcome, "fits": fits,
        "min_visibility": min(f["visibility"] for f in fits.values())})


def run_tomography(cfg: ExperimentConfig) -> ExperimentResult:
    grid = list(itertools.product(BASIS_ORDER, repeat=2))
    jobs = [SettingJob(cfg, derive_seed(cfg.seed, "tomography", k), cfg.fiber_a, cfg.fiber_b,
                       ("basis", a), ("basis", b)) for k, (a, b) in enumerate(grid)]
    counts = map_points(run_setting, jobs, cfg.workers)
    data = analysis.TomographyData({g: np.asarray(c) for g, c in zip(grid, counts)})
    rho = analysis.reconstruct_density(data)
    target = states.bell_state(cfg.source.bell_kind)
    fid = states.fidelity(rho, target)
    count_rows = [[a, b, *_count_row(c)] for (a, b), c in zip(grid, counts)]
    rho_rows = [[BASIS_KET_LABELS[i], BASIS_KET_LABELS[j], float(rho[i, j].real), float(rho[i, j].imag)]
                for i in range(4) for j in range(4)]
    return ExperimentResult("tomography", {
        "tomography_counts": Table(["basis_a", "basis_b", "n00", "n01", "n10", "n11"], count_rows),
        "density_matrix": Table(["row", "col", "real", "imag"], rho_rows),
    }, {"fidelity": fid, "target": cfg.source.bell_kind.value,
        "rho_real": rho.real.tolist(), "rho_imag": rho.imag.tolist(),
        "min_eigenvalue": float(np.linalg.eigvalsh(rho).min())})


def twist_link(cfg: ExperimentConfig, rate: float) -> FiberLink:
    s = cfg.twist_scan
    base = cfg.fiber_b.sections[0] if cfg.fiber_b is not None else FiberSection()
    return FiberLink(sections=[base.model_copy(update={"length": s.fiber_length, "twist_rate": rate})])


def run_twist_scan(cfg: ExperimentConfig) -> ExperimentResult:
    s = cfg.twist_scan
    grid = list(itertools.product(range(len(s.twist_rates)), s.theta_b))
    links = [twist_link(cfg, r) for r in s.twist_rates]
    jobs = [SettingJob(cfg, derive_seed(cfg.seed, "twist_scan", k), cfg.fiber_a, links[i],
                       ("polarizer", s.theta_a), ("polarizer", tb))
            for k, (i, tb) in enumerate(grid)]
    counts = map_points(run_setting, jobs, cfg.workers)
    rows = [[s.twist_rates[i], tb, *_count_row(c)] for (i, tb), c in zip(grid, counts)]
    fits = []
    for i, rate in enumerate(s.twist_rates):
        sel = np.array([c for (k, _), c in zip(grid, counts) if k == i])
        scan = analysis.FringeScan(s.theta_a, np.array(s.theta_b), sel)
        fits.append(analysis.fit_fringe(scan.theta_b, scan.series(s.outcome)))
    phases = np.array([f.phase for f in fits])
    unwrapped = np.degrees(np.unwrap(np.radians(phases) * 2) / 2)
    fit_rows = [[rate, f.visibility, f.phase, float(u), f.offset, f.amplitude]
                for rate, f, u in zip(s.twist_rates, fits, unwrapped)]
    return ExperimentResult("twist_scan", {
        "twist_scan": Table(["twist_rate", "theta_b_deg", "n00", "n01", "n10", "n11"], rows),
        "twist_fit": Table(["twist_rate", "visibility", "phase_deg", "phase_unwrapped_deg",
                            "offset", "amplitude"], fit_rows),
    }, {"fiber_length_m": s.fiber_length,
        "visibilities": [f.visibility for f in fits],
        "phase_unwrapped_deg": [float(u) for u in unwrapped],
        "min_visibility": min(f.visibility for f in fits)})


@dataclasses.dataclass(frozen=True)
class CdJob:
    cfg: ExperimentConfig
    seed: int
    distance_km: float


def cd_links(cfg: ExperimentConfig, distance_km: float):
    base = cfg.link_b().sections[0]
    link_b = FiberLink(sections=[base.model_copy(update={"length": distance_km * 1000.0})])
    link_a = None
    if cfg.cd_timing.dispersive_arms == "both":
        base_a = cfg.fiber_a.sections[0] if cfg.fiber_a is not None else base
        link_a = FiberLink(sections=[base_a.model_copy(update={"length": distance_km * 1000.0})])
    return link_a, link_b


def analytic_dt_std(cfg: ExperimentConfig, link_a: FiberLink | None, link_b: FiberLink) -> float:
    """Linearized spread of t_A - t_B from the signal bandwidth and detector jitter."""
    src = cfg.source
    lam_i0 = idler_wavelength(src.pump_wavelength, src.signal_mean)
    slope = -(lam_i0 / src.signal_mean) ** 2  # d(lambda_i)/d(lambda_s)
    k_a = effective_dispersion(link_a) * link_a.total_length / 1000 if link_a else 0.0
    k_b = effective_dispersion(link_b) * link_b.total_length / 1000
    spread = (k_a - k_b * slope) * src.signal_bandwidth
    jit = cfg.analyzer_a.detector.jitter_sigma**2 + cfg.analyzer_b.detector.jitter_sigma**2
    return math.sqrt(spread**2 + jit)


def run_cd_point(job: CdJob) -> dict:
    cfg = job.cfg
    link_a, link_b = cd_links(cfg, job.distance_km)
    net = build_network(cfg, job.seed, link_a, link_b)
    net.analyzer_a.set_basis("Z") if net.analyzer_a.mode is not AnalyzerMode.CUSTOM else None
    net.analyzer_b.set_basis("Z") if net.analyzer_b.mode is not AnalyzerMode.CUSTOM else None
    run_pairs(net, cfg.cd_timing.pairs)
    ta, _ = analysis.merge_streams(detector_streams(net.analyzer_a))
    tb, _ = analysis.merge_streams(detector_streams(net.analyzer_b))
    offset = net.coincidence_offset
    ia, ib = analysis.coincidences(ta, tb, cfg.coincidence_window, offset)
    dt = ta[ia] - (tb[ib] - offset)
    hist = analysis.timing_histogram(dt, cfg.timing_bin)
    emitted = np.array(net.source.emitted)
    delays_a = cd_delay(emitted[:, 1], link_a) if link_a is not None else np.zeros(len(emitted))
    delays_b = cd_delay(emitted[:, 2], link_b)
    return {
        "distance_km": job.distance_km,
        "pairs": int(net.source.pairs),
        "coincidences": int(ia.size),
        "offset_ps": float(offset),
        "hist": hist,
        "dt_mean_ps": float(dt.mean()) if dt.size else None,
        "dt_std_ps": float(dt.std(ddof=1)) if dt.size > 1 else None,
        "analytic_std_ps": analytic_dt_std(cfg, link_a, link_b),
        "delays_a": delays_a,
        "delays_b": delays_b,
        "unresolved_pairs": len(net.timeline.registry),
    }


def run_cd_timing(cfg: ExperimentConfig) -> ExperimentResult:
    s = cfg.cd_timing
    jobs = [CdJob(cfg, derive_seed(cfg.seed, "cd_timing", k), d) for k, d in enumerate(s.distances_km)]
    points = map_points(run_cd_point, jobs, cfg.workers)
    hist_rows, delay_rows, summary_rows = [], [], []
    for p in points:
        h = p["hist"]
        hist_rows += [[p["distance_km"], float(c), int(n)] for c, n in zip(h.centers, h.counts)]
        for channel, delays in (("a", p["delays_a"]), ("b", p["delays_b"])):
            span = max(float(np.abs(delays).max()), 1e-9)
            counts, edges = np.histogram(delays, bins=s.delay_bins, range=(-span, span))
            centers = 0.5 * (edges[:-1] + edges[1:])
            delay_rows += [[p["distance_km"], channel, float(c), int(n)] for c, n in zip(centers, counts)]
        summary_rows.append([p["distance_km"], p["pairs"], p["coincidences"], h.peak, h.fwhm,
                             p["dt_mean_ps"], p["dt_std_ps"], p["analytic_std_ps"],
                             float(np.std(p["delays_a"])), float(np.std(p["delays_b"]))])
    header = ["distance_km", "pairs", "coincidences", "peak_ps", "fwhm_ps", "dt_mean_ps",
              "dt_std_ps", "analytic_std_ps", "delay_std_a_ps", "delay_std_b_ps"]
    return ExperimentResult("cd_timing", {
        "cd_histogram": Table(["distance_km", "dt_ps", "count"], hist_rows),
        "cd_delays": Table(["distance_km", "channel", "delay_ps", "count"], delay_rows),
        "cd_summary": Table(header, summary_rows),
    }, {"points": [dict(zip(header, r)) for r in summary_rows],
        "unresolved_pairs": sum(p["unresolved_pairs"] for p in points)})


def run_dgd_report(cfg: ExperimentConfig) -> ExperimentResult:
    s = cfg.dgd_report
    link = cfg.link_b()
    rows = []
    for lam in s.wavelengths:
        full = dgd(link, lam, s.step_nm)
        half = dgd(link, lam, s.step_nm / 2)
        rel = abs(full - half) / full if full else 0.0
        rows.append([lam, full * 1e15, half * 1e15, rel])
    d_eff = effective_dispersion(link)
    return ExperimentResult("dgd_report", {
        "dgd": Table(["wavelength_nm", "dgd_fs", "dgd_half_step_fs", "relative_change"], rows),
    }, {"total_length_m": link.total_length, "reference_wavelength_nm": link.reference_wavelength,
        "effective_dispersion_ps_nm_km": d_eff, "base_delay_ps": base_delay(link),
        "cd_delay_per_nm_ps": float(cd_delay(link.reference_wavelength + 1.0, link))})


@dataclasses.dataclass(frozen=True)
class RamanJob:
    sweep: str
    wavelength: float
    length_km: float
    power: float
    seed: int
    min_counts: float
    alpha_s: float
    table_entries: tuple
    bandwidth: float
    noise_wavelength: float
    noise_attenuation: float


def run_raman_point(job: RamanJob) -> list:
    table = RamanCoefficientTable(dict(job.table_entries), job.bandwidth, job.noise_wavelength,
                                  job.noise_attenuation)
    classical = ClassicalChannel(wavelength=job.wavelength, launch_power=job.power,
                                 attenuation=job.alpha_s)
    section = FiberSection(length=job.length_km * 1000.0)
    fs, bs = raman_section_rates(section, classical, table)
    total = total_raman_rate(FiberLink(sections=[section]), classical, table)
    window_ps = int(math.ceil(job.min_counts / total * PS_PER_S)) if total > 0 else PS_PER_S
    arrivals = sample_noise_arrivals(total, (0, window_ps), make_rng(job.seed, "raman"))
    window_s = window_ps / PS_PER_S
    expected = total * window_s
    sim = arrivals.size / window_s
    z = (arrivals.size - expected) / math.sqrt(expected) if expected > 0 else 0.0
    return [job.sweep, job.wavelength, job.length_km, job.power, fs, bs, total,
            window_s, int(arrivals.size), expected, sim, z]


RAMAN_HEADER = ["sweep", "lambda_s_nm", "length_km", "power_photons_s", "model_fs", "model_bs",
                "model_total", "window_s", "counts", "expected_counts", "simulated_rate", "z_score"]


def raman_jobs(cfg: ExperimentConfig) -> list[RamanJob]:
    s = cfg.raman_sweep
    table = raman_table_for(cfg)
    wavelengths = s.wavelengths or table.wavelengths()
    common = dict(min_counts=s.min_counts, table_entries=tuple(table.entries.items()),
                  bandwidth=table.bandwidth, noise_wavelength=table.noise_wavelength,
                  noise_attenuation=table.noise_attenuation)
    grid = [("distance", lam, d, s.fixed_power) for lam in wavelengths for d in s.distances_km]
    grid += [("power", lam, s.fixed_length_km, p) for lam in wavelengths for p in s.powers]
    return [RamanJob(sweep, lam, d, p, derive_seed(cfg.seed, "raman_sweep", k),
                     alpha_s=classical_attenuation(s, lam), **common)
            for k, (sweep, lam, d, p) in enumerate(grid)]


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_raman_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    jobs = raman_jobs(cfg)
    rows = map_points(run_raman_point, jobs, cfg.workers)
    summary: dict = {"max_abs_z": max(abs(r[-1]) for r in rows) if rows else 0.0,
                     "power_slope_model": {}, "power_slope_simulated": {}}
    for lam in sorted({r[1] for r in rows}):
        pw = [r for r in rows if r[0] == "power" and r[1] == lam]
        if len(pw) > 1:
            summary["power_slope_model"][str(lam)] = loglog_slope([r[3] for r in pw], [r[6] for r in pw])
            summary["power_slope_simulated"][str(lam)] = loglog_slope([r[3] for r in pw], [r[10] for r in pw])
    by_key = {(r[0], r[1], r[2], r[3]): r for r in rows}
    ratios = {}
    for (sweep, lam, d, p), r in by_key.items():
        if sweep == "distance" and lam == 1490.0 and ("distance", 1270.0, d, p) in by_key:
            ratios[str(d)] = r[6] / by_key[("distance", 1270.0, d, p)][6]
    summary["ratio_1490_1270_by_length_km"] = ratios
    return ExperimentResult("raman_sweep", {"raman_sweep": Table(RAMAN_HEADER, rows)}, summary)


def run_jsi(cfg: ExperimentConfig) -> ExperimentResult:
    s = cfg.jsi
    src_cfg = cfg.source
    tl = Timeline(derive_seed(cfg.seed, "jsi"))
    src = SpdcSource(tl, "source", src_cfg.model_copy(deep=True))
    if src_cfg.mean_pair_number <= 0:
        raise ConfigError(["source.mean_pair_number: must be > 0 for a JSI run"])
    pulses = s.pairs / src_cfg.mean_pair_number
    t_stop = int(math.ceil((1.5 * pulses + 10 * math.sqrt(pulses) + 10) * PS_PER_S / src_cfg.repetition_rate))
    src.start(t_stop, max_pairs=s.pairs)
    tl.run()
    emitted = np.array(src.emitted)
    lam_s, lam_i = emitted[:, 1], emitted[:, 2]
    center = (src_cfg.signal_mean, float(idler_wavelength(src_cfg.pump_wavelength, src_cfg.signal_mean)))
    hw = s.half_width or 5.0 * src_cfg.signal_bandwidth
    jsi = analysis.jsi_histogram(lam_s, lam_i, s.bins, center, hw)
    sc = 0.5 * (jsi.signal_edges[:-1] + jsi.signal_edges[1:])
    ic = 0.5 * (jsi.idler_edges[:-1] + jsi.idler_edges[1:])
    rows = [[float(sc[i]), float(ic[j]), int(jsi.counts[i, j])]
            for i in range(len(sc)) for j in range(len(ic))]
    residual = np.abs(1 / lam_s + 1 / lam_i - 1 / src_cfg.pump_wavelength)
    return ExperimentResult("jsi", {
        "jsi": Table(["lambda_s_nm", "lambda_i_nm", "count"], rows),
        "wavelengths": Table(["lambda_s_nm", "lambda_i_nm"], [[float(a), float(b)] for a, b in zip(lam_s, lam_i)]),
    }, {"pairs": int(src.pairs), "pulses": int(src.pulses),
        "signal_mean_nm": float(lam_s.mean()), "signal_std_nm": float(lam_s.std(ddof=1)),
        "idler_mean_nm": float(lam_i.mean()), "idler_std_nm": float(lam_i.std(ddof=1)),
        "signal_median_nm": float(np.median(lam_s)), "idler_median_nm": float(np.median(lam_i)),
        "correlation": float(np.corrcoef(lam_s, lam_i)[0, 1]),
        "mode_nm": list(jsi.mode()), "max_energy_residual": float(residual.max())})


RUNNERS = {
    "fringe": run_fringe,
    "tomography": run_tomography,
    "twist_scan": run_twist_scan,
    "cd_timing": run_cd_timing,
    "dgd_report": run_dgd_report,
    "raman_sweep": run_raman_sweep,
    "jsi": run_jsi,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)
