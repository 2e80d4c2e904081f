"""Post-processing of detection data: coincidence matching, fringe fits,
linear-inversion tomography, timing and joint-spectral histograms."""

from __future__ import annotations

import dataclasses
import itertools
import warnings

import numpy as np

from . import states

OUTCOME_PAIRS = ("00", "01", "10", "11")
PAULI_LABELS = ("Z", "X", "Y")
NONPHYSICAL_EIGENVALUE = -0.05
MIN_PAIRS_FOR_FWHM = 10


# ---------------------------------------------------------------- coincidences

def coincidences(times_a, times_b, window: float, offset: float = 0.0):
    """Greedy nearest-neighbour matching of two time-sorted streams.

    Candidate pairs satisfy ``|t_a - (t_b - offset)| <= window``. They are
    accepted closest-first (ties broken by the earlier time) with every record
    used at most once. Returns index arrays ``(ia, ib)`` sorted by ``ia``.
    """
    if window <= 0:
        raise ValueError("coincidence window must be positive")
    ta = np.asarray(times_a, dtype=np.float64)
    tb = np.asarray(times_b, dtype=np.float64) - offset
    if ta.size == 0 or tb.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    lo = np.searchsorted(tb, ta - window, side="left")
    hi = np.searchsorted(tb, ta + window, side="right")
    counts = hi - lo
    ia = np.repeat(np.arange(ta.size), counts)
    if ia.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
    ib = starts + np.arange(ia.size)
    dt = np.abs(ta[ia] - tb[ib])
    first = np.minimum(ta[ia], tb[ib])
    order = np.lexsort((np.maximum(ta[ia], tb[ib]), first, dt))
    used_a = np.zeros(ta.size, dtype=bool)
    used_b = np.zeros(tb.size, dtype=bool)
    out_a, out_b = [], []
    for k in order:
        i, j = ia[k], ib[k]
        if not used_a[i] and not used_b[j]:
            used_a[i] = used_b[j] = True
            out_a.append(i)
            out_b.append(j)
    out_a = np.asarray(out_a, dtype=np.int64)
    out_b = np.asarray(out_b, dtype=np.int64)
    idx = np.argsort(out_a, kind="stable")
    return out_a[idx], out_b[idx]


def merge_streams(streams):
    """Merge per-detector time arrays into (times, labels) sorted by time."""
    times = np.concatenate([np.asarray(s, dtype=np.int64) for s in streams])
    labels = np.concatenate([np.full(len(s), k, dtype=np.int64) for k, s in enumerate(streams)])
    order = np.argsort(times, kind="stable")
    return times[order], labels[order]


def coincidence_counts(a_streams, b_streams, window: float, offset: float = 0.0) -> np.ndarray:
    """Outcome-resolved coincidence counts (00, 01, 10, 11) of two analyzers."""
    ta, la = merge_streams(a_streams)
    tb, lb = merge_streams(b_streams)
    ia, ib = coincidences(ta, tb, window, offset)
    return np.bincount(2 * la[ia] + lb[ib], minlength=4)


# ---------------------------------------------------------------- fringes

@dataclasses.dataclass
class FringeScan:
    theta_a: float  # deg
    theta_b: np.ndarray  # deg
    counts: np.ndarray  # shape (n_angles, 4): 00, 01, 10, 11

    def series(self, outcome: str = "00") -> np.ndarray:
        return np.asarray(self.counts)[:, OUTCOME_PAIRS.index(outcome)]


@dataclasses.dataclass
class FringeFit:
    offset: float
    amplitude: float
    phase: float  # deg, location of the fitted maximum modulo 180
    visibility: float


def fit_fringe(theta_deg, counts) -> FringeFit:
    """Least-squares fit of a + b cos(2(theta - phi)) with the 180 deg period fixed."""
    theta = np.radians(np.asarray(theta_deg, dtype=float))
    y = np.asarray(counts, dtype=float)
    if np.unique(theta_deg).size < 2:
        raise ValueError("fringe fit needs at least two distinct angles")
    if not np.any(y):
        raise ValueError("visibility undefined for all-zero counts")
    design = np.column_stack([np.ones_like(theta), np.cos(2 * theta), np.sin(2 * theta)])
    (a, b, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = float(np.hypot(b, c))
    phase = float(np.degrees(0.5 * np.arctan2(c, b))) % 180.0
    hi, lo = a + amp, max(a - amp, 0.0)
    vis = 0.0 if hi <= 0 else (hi - lo) / (hi + lo)
    if amp <= 1e-12 * max(abs(a), 1.0):
        vis = 0.0
    return FringeFit(float(a), amp, phase, float(min(max(vis, 0.0), 1.0)))


def visibility(fringe: FringeScan, outcome: str = "00") -> float:
    return fit_fringe(fringe.theta_b, fringe.series(outcome)).visibility


# ---------------------------------------------------------------- tomography

@dataclasses.dataclass
class TomographyData:
    """Outcome-pair counts (00, 01, 10, 11) for each (basis_A, basis_B) setting."""

    counts: dict[tuple[str, str], np.ndarray]

    def __post_init__(self):
        missing = [s for s in itertools.product(PAULI_LABELS, repeat=2) if s not in self.counts]
        if missing:
            raise ValueError(f"missing tomography settings: {missing}")


def exact_tomography_data(psi) -> TomographyData:
    """Born-rule outcome probabilities for all nine Pauli settings."""
    psi = np.asarray(psi, dtype=complex)
    counts = {}
    for a, b in itertools.product(PAULI_LABELS, repeat=2):
        ba, bb = states.PAULI_BASES[a], states.PAULI_BASES[b]
        counts[(a, b)] = np.array([abs(np.vdot(np.kron(ba[i], bb[j]), psi)) ** 2
                                   for i in (0, 1) for j in (0, 1)])
    return TomographyData(counts)


def reconstruct_density(data: TomographyData) -> np.ndarray:
    """Linear inversion rho = 1/4 sum E_ij sigma_i x sigma_j from Pauli-setting counts."""
    corr = {}
    marg_a = {k: [] for k in PAULI_LABELS}
    marg_b = {k: [] for k in PAULI_LABELS}
    for (a, b), c in data.counts.items():
        c = np.asarray(c, dtype=float)
        total = c.sum()
        if total <= 0:
            raise ValueError(f"setting {a}{b} has no counts")
        n00, n01, n10, n11 = c / total
        corr[(a, b)] = n00 - n01 - n10 + n11
        marg_a[a].append(n00 + n01 - n10 - n11)
        marg_b[b].append(n00 - n01 + n10 - n11)
    rho = np.kron(states.I2, states.I2).astype(complex)
    for k in PAULI_LABELS:
        p = states.PAULI[k]
        rho += np.mean(marg_a[k]) * np.kron(p, states.I2)
        rho += np.mean(marg_b[k]) * np.kron(states.I2, p)
    for (a, b), e in corr.items():
        rho += e * np.kron(states.PAULI[a], states.PAULI[b])
    rho = rho / 4
    rho = (rho + rho.conj().T) / 2
    rho = rho / np.trace(rho).real
    min_eig = float(np.linalg.eigvalsh(rho).min())
    if min_eig < NONPHYSICAL_EIGENVALUE:
        warnings.warn(f"reconstructed density matrix is non-physical (min eigenvalue {min_eig:.3f})",
                      RuntimeWarning)
    return rho


# ---------------------------------------------------------------- timing

@dataclasses.dataclass
class TimingHistogram:
    edges: np.ndarray
    counts: np.ndarray
    peak: float | None
    fwhm: float | None

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def _half_max_crossing(centers, counts, edge_idx, half, step):
    """Interpolated half-maximum crossing outward from the outermost bin above ``half``."""
    j = edge_idx + step
    if not 0 <= j < counts.size:
        return centers[edge_idx]
    y0, y1 = counts[edge_idx], counts[j]
    return centers[edge_idx] + (centers[j] - centers[edge_idx]) * (y0 - half) / (y0 - y1)


def timing_histogram(dt, bin_width: float) -> TimingHistogram:
    """Histogram of arrival-time differences with peak position and FWHM.

    Bins start half a bin below the smallest value so that a constant shift of
    the data shifts the histogram without re-binning it.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    dt = np.asarray(dt, dtype=float)
    if dt.size == 0:
        return TimingHistogram(np.array([0.0, bin_width]), np.zeros(1, dtype=np.int64), None, None)
    lo = dt.min() - 1.5 * bin_width
    n_bins = int(np.floor((dt.max() - lo) / bin_width)) + 2
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(dt, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    peak_idx = int(np.argmax(counts))
    peak = float(centers[peak_idx])
    if dt.size < MIN_PAIRS_FOR_FWHM:
        return TimingHistogram(edges, counts, peak, None)
    # outermost bins at or above half maximum, so shot noise on the flanks
    # of a sparse histogram does not truncate the width
    half = counts[peak_idx] / 2
    above = np.flatnonzero(counts >= half)
    left = _half_max_crossing(centers, counts, int(above[0]), half, -1)
    right = _half_max_crossing(centers, counts, int(above[-1]), half, +1)
    return TimingHistogram(edges, counts, peak, float(right - left))


# ---------------------------------------------------------------- spectra

@dataclasses.dataclass
class JointSpectrum:
    counts: np.ndarray  # [signal bin, idler bin]
    signal_edges: np.ndarray
    idler_edges: np.ndarray

    def mode(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.counts), self.counts.shape)
        sc = 0.5 * (self.signal_edges[i] + self.signal_edges[i + 1])
        ic = 0.5 * (self.idler_edges[j] + self.idler_edges[j + 1])
        return float(sc), float(ic)


def jsi_histogram(lam_s, lam_i, bins: int = 41, center: tuple[float, float] | None = None,
                  half_width: float | None = None) -> JointSpectrum:
    """2D histogram of (signal, idler) wavelengths.

    With ``center``/``half_width`` the grid is symmetric about ``center`` so a
    degenerate point falls in the middle of a bin (use an odd ``bins``).
    """
    lam_s = np.asarray(lam_s, dtype=float)
    lam_i = np.asarray(lam_i, dtype=float)
    if center is None:
        rng_s = (lam_s.min(), lam_s.max()) if lam_s.size else (0.0, 1.0)
        rng_i = (lam_i.min(), lam_i.max()) if lam_i.size else (0.0, 1.0)
    else:
        hw = half_width if half_width is not None else 1.0
        rng_s = (center[0] - hw, center[0] + hw)
        rng_i = (center[1] - hw, center[1] + hw)
    counts, es, ei = np.histogram2d(lam_s, lam_i, bins=bins, range=[rng_s, rng_i])
    return JointSpectrum(counts.astype(np.int64), es, ei)
