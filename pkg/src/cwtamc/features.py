"""CWT-moment features.

A signal is summarized by the raw moments (orders 1-5) of four series: the
single-scale ``|CWT|`` of the received signal and of its envelope-normalized
version, each before and after a short median filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal as sps

from . import wavelets
from .errors import DegenerateInputError, InvalidInputError
from .siggen import IqSignal
from .wavelets import WaveletKind

MAX_ORDER = 5
NUM_FEATURES = 20
SERIES_NAMES = ("raw", "raw_filt", "norm", "norm_filt")
FEATURE_NAMES = tuple(f"m{k}_{series}" for series in SERIES_NAMES for k in range(1, MAX_ORDER + 1))
# Stamped into serialized PCA models so they are never applied to a different layout.
FEATURE_LAYOUT = "cwt-moments-v1:" + ",".join(FEATURE_NAMES)

# Wavelet peak frequency sits this factor above the carrier, so that the
# FSK/MSK tones land on the rising flank of the wavelet's passband.
DEFAULT_DETUNE = 1.2
# Meyer's passband is flat-topped, so its two upper FSK-4 tones merge at 1.2.
WAVELET_DETUNE = {WaveletKind.MEYER: 1.3}


def detune_for(kind) -> float:
    return WAVELET_DETUNE.get(WaveletKind(kind), DEFAULT_DETUNE)


def default_scale(kind: WaveletKind, carrier_freq: float, sampling_freq: float, detune: float | None = None) -> float:
    """Scale (in samples) whose passband peak lies at ``detune * carrier_freq``.

    ``detune=None`` picks the per-wavelet default.
    """
    if carrier_freq <= 0:
        raise InvalidInputError("carrier_freq must be positive to derive a scale")
    if detune is None:
        detune = detune_for(kind)
    carrier_w = 2 * np.pi * carrier_freq / sampling_freq
    return wavelets.peak_frequency(WaveletKind(kind)) / (detune * carrier_w)


@dataclass(frozen=True)
class CwtConfig:
    wavelet: WaveletKind = WaveletKind.MORLET
    scale: float = 8.0
    median_window: int = 5

    def __post_init__(self):
        object.__setattr__(self, "wavelet", WaveletKind(self.wavelet))
        if not self.scale > 0:
            raise InvalidInputError("scale must be positive")
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise InvalidInputError("median_window must be odd and >= 1")

    @classmethod
    def for_carrier(cls, wavelet, carrier_freq, sampling_freq, median_window=5, detune=None):
        return cls(wavelet, default_scale(wavelet, carrier_freq, sampling_freq, detune), median_window)

    def edge_trim(self) -> tuple[int, int]:
        """Samples dropped at (start, end) of every series before taking moments.

        Covers the wavelet's reach into the reflected padding plus the median
        half-window.
        """
        taps, m_lo = wavelets.kernel(self.wavelet, self.scale)
        m_hi = m_lo + taps.size - 1
        half = self.median_window // 2
        return max(0, -m_lo) + half, max(0, m_hi) + half


@dataclass(frozen=True, eq=False)
class CwtSeries:
    values: np.ndarray
    sampling_freq: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise InvalidInputError("series must be 1-D")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise InvalidInputError("series values must be finite and non-negative")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def normalize_envelope(signal: IqSignal) -> IqSignal:
    """Divide every sample by its modulus.

    Samples below ``1e-8 * max|s|`` take the previous normalized value (the
    first valid one if they lead the signal).
    """
    s = signal.samples
    mag = np.abs(s)
    peak = mag.max()
    if peak == 0:
        raise DegenerateInputError("cannot normalize an all-zero signal")
    valid = mag >= 1e-8 * peak
    out = np.empty_like(s)
    out[valid] = s[valid] / mag[valid]
    if not valid.all():
        idx = np.where(valid, np.arange(s.size), -1)
        idx = np.maximum.accumulate(idx)
        idx[idx < 0] = np.argmax(valid)
        out = out[idx]
    return IqSignal(out, signal.sampling_freq)


def cwt_magnitude(signal: IqSignal, config: CwtConfig) -> CwtSeries:
    """``|CWT|`` at ``config.scale`` for every translation, same length as the input.

    The wavelet is correlated with a reflect-padded copy of the signal.
    """
    taps, m_lo = wavelets.kernel(config.wavelet, config.scale)
    x = signal.samples
    n = x.size
    m_hi = m_lo + taps.size - 1
    pad = max(abs(m_lo), abs(m_hi))
    if taps.size > n or pad >= n:
        raise InvalidInputError(
            f"scale {config.scale:g} needs {taps.size} samples of support, signal has {n}"
        )
    xp = np.pad(x, pad, mode="reflect")
    conv = sps.fftconvolve(xp, taps[::-1], mode="full")
    start = pad + m_hi
    return CwtSeries(np.abs(conv[start:start + n]), signal.sampling_freq)


def median_filter(series: CwtSeries, window: int) -> CwtSeries:
    """Sliding median over ``window`` samples, edges replicated."""
    if window < 1 or window % 2 == 0:
        raise InvalidInputError("median window must be odd and >= 1")
    if window > len(series):
        raise InvalidInputError("median window longer than the series")
    out = ndimage.median_filter(series.values, size=window, mode="nearest")
    return CwtSeries(out, series.sampling_freq)


def moments(series, max_order: int = MAX_ORDER) -> np.ndarray:
    """Raw sample moments ``mean(values**k)`` for ``k = 1..max_order``."""
    values = np.asarray(getattr(series, "values", series), dtype=float)
    if values.size == 0:
        raise InvalidInputError("series is empty")
    if max_order < 1:
        raise InvalidInputError("max_order must be >= 1")
    out = np.empty(max_order)
    power = values.copy()
    for k in range(max_order):
        out[k] = power.mean()
        if k + 1 < max_order:
            power *= values
    return out


def feature_series(signal: IqSignal, config: CwtConfig) -> dict[str, CwtSeries]:
    """The four untrimmed series that feed :func:`extract_features`, keyed by SERIES_NAMES."""
    raw = cwt_magnitude(signal, config)
    norm = cwt_magnitude(normalize_envelope(signal), config)
    return {
        "raw": raw,
        "raw_filt": median_filter(raw, config.median_window),
        "norm": norm,
        "norm_filt": median_filter(norm, config.median_window),
    }


def extract_features(signal: IqSignal, config: CwtConfig) -> np.ndarray:
    """20-element feature vector, ordered as FEATURE_NAMES."""
    head, tail = config.edge_trim()
    if head + tail >= len(signal):
        raise InvalidInputError("signal too short for the wavelet support at this scale")
    series = feature_series(signal, config)
    stop = len(signal) - tail
    return np.concatenate([moments(series[name].values[head:stop]) for name in SERIES_NAMES])


def count_levels(values, tol: float = 0.05, flat_tol: float = 1e-3, max_levels: int = 16) -> int | None:
    """Smallest number of distinct levels that explains ``values``.

    ``k >= 2`` levels fit when a 1-D k-means partition has every cluster's
    range below ``tol`` times the smallest gap between cluster centres. A
    single level fits when the total range is below ``flat_tol`` times the
    level's magnitude. Returns ``None`` when no ``k <= max_levels`` fits.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise InvalidInputError("no values to cluster")
    for k in range(1, max_levels + 1):
        if k > v.size:
            return None
        labels = _kmeans_1d(v, k)
        groups = [v[labels == j] for j in range(k) if np.any(labels == j)]
        if len(groups) < k:
            continue
        spread = max(g[-1] - g[0] for g in groups)
        if k == 1:
            if spread <= flat_tol * abs(v.mean()):
                return 1
            continue
        centres = np.array([g.mean() for g in groups])
        if spread < tol * np.min(np.diff(centres)):
            return k
    return None


def _kmeans_1d(v, k, iterations=50):
    # v sorted; seed the split points at the k-1 widest gaps, then run Lloyd
    if k == 1:
        return np.zeros(v.size, dtype=int)
    gaps = np.diff(v)
    cuts = np.sort(np.argsort(gaps, kind="stable")[-(k - 1):]) + 1
    labels = np.zeros(v.size, dtype=int)
    for j, c in enumerate(cuts):
        labels[c:] = j + 1
    for _ in range(iterations):
        centres = np.array([v[labels == j].mean() if np.any(labels == j) else np.inf for j in range(k)])
        new = np.argmin(np.abs(v[:, None] - centres[None, :]), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return labels


def steady_state_mask(num_symbols: int, samples_per_symbol: int, config: CwtConfig, filtered: bool = True) -> np.ndarray:
    """True where the wavelet window (and median window) lies inside one symbol."""
    taps, m_lo = wavelets.kernel(config.wavelet, config.scale)
    m_hi = m_lo + taps.size - 1
    half = config.median_window // 2 if filtered else 0
    n = np.arange(num_symbols * samples_per_symbol)
    first = (n + m_lo - half) // samples_per_symbol
    last = (n + m_hi + half) // samples_per_symbol
    return (first == last) & (n + m_lo - half >= 0) & (n + m_hi + half < n.size)
