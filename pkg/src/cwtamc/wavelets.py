"""Mother wavelets sampled in dimensionless time.

Each wavelet is normalized to unit energy (integral of ``|psi|**2`` is 1).
Haar and Morlet are evaluated analytically; Daubechies wavelets come from
the cascade algorithm on their scaling filters; Meyer is built once from its
frequency-domain definition. Tabulated wavelets are cached and linearly
interpolated.
"""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np

MORLET_W0 = 6.0
CASCADE_LEVELS = 12

# Orthonormal scaling filters (sum = sqrt(2)), db-N has 2N taps.
DAUBECHIES_FILTERS = {
    2: np.array([
        0.48296291314469025, 0.836516303737469, 0.22414386804185735, -0.12940952255092145,
    ]),
    4: np.array([
        0.23037781330885523, 0.7148465705525415, 0.6308807679295904, -0.02798376941698385,
        -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278,
    ]),
}


class WaveletKind(str, enum.Enum):
    HAAR = "haar"
    DAUBECHIES2 = "db2"
    DAUBECHIES4 = "db4"
    MEYER = "meyer"
    MORLET = "morlet"

    @classmethod
    def parse(cls, token: str) -> "WaveletKind":
        key = token.strip().lower()
        aliases = {"daubechies2": "db2", "daubechies4": "db4", "morl": "morlet", "meyr": "meyer", "dmey": "meyer"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown wavelet {token!r}") from None

    @property
    def display_name(self) -> str:
        return {
            "haar": "Haar",
            "db2": "Daubechies2",
            "db4": "Daubechies4",
            "meyer": "Meyer",
            "morlet": "Morlet",
        }[self.value]


def support(kind: WaveletKind) -> tuple[float, float]:
    """Interval outside which the (truncated) wavelet is zero."""
    kind = WaveletKind(kind)
    if kind is WaveletKind.HAAR:
        return 0.0, 1.0
    if kind is WaveletKind.MORLET:
        return -4.0, 4.0
    if kind is WaveletKind.MEYER:
        return -8.0, 8.0
    taps = DAUBECHIES_FILTERS[_db_order(kind)].size
    return 0.0, float(taps - 1)


def _db_order(kind):
    return {WaveletKind.DAUBECHIES2: 2, WaveletKind.DAUBECHIES4: 4}[kind]


def cascade(h: np.ndarray, levels: int = CASCADE_LEVELS) -> tuple[np.ndarray, np.ndarray]:
    """Wavelet function of an orthonormal scaling filter by the cascade algorithm.

    Returns ``(t, psi)`` on the dyadic grid ``t = n / 2**levels`` over
    ``[0, len(h) - 1]``.
    """
    h = np.asarray(h, dtype=float)
    taps = h.size
    g = np.array([(-1) ** k * h[taps - 1 - k] for k in range(taps)])
    c = np.array([1.0])
    for level in range(levels):
        up = np.zeros(2 * c.size - 1)
        up[::2] = c
        c = np.sqrt(2) * np.convolve(up, g if level == 0 else h)
    dt = 2.0 ** -levels
    t = np.arange(c.size) * dt
    psi = c / np.sqrt(np.sum(c**2) * dt)
    return t, psi


def _meyer_aux(x):
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def meyer_spectrum(w: np.ndarray) -> np.ndarray:
    """Magnitude of the Meyer wavelet's Fourier transform (unnormalized)."""
    w = np.abs(np.asarray(w, dtype=float))
    out = np.zeros_like(w)
    lo = (w >= 2 * np.pi / 3) & (w <= 4 * np.pi / 3)
    hi = (w > 4 * np.pi / 3) & (w <= 8 * np.pi / 3)
    out[lo] = np.sin(np.pi / 2 * _meyer_aux(3 * w[lo] / (2 * np.pi) - 1))
    out[hi] = np.cos(np.pi / 2 * _meyer_aux(3 * w[hi] / (4 * np.pi) - 1))
    return out


@lru_cache(maxsize=None)
def tabulated(kind: WaveletKind) -> tuple[np.ndarray, np.ndarray]:
    """Fine-grid ``(t, psi)`` for wavelets without a cheap closed form."""
    kind = WaveletKind(kind)
    if kind in (WaveletKind.DAUBECHIES2, WaveletKind.DAUBECHIES4):
        t, psi = cascade(DAUBECHIES_FILTERS[_db_order(kind)])
    elif kind is WaveletKind.MEYER:
        lo, hi = support(kind)
        t = np.linspace(lo, hi, 4097)
        w = np.linspace(2 * np.pi / 3, 8 * np.pi / 3, 2049)
        weights = np.full(w.size, w[1] - w[0])
        weights[[0, -1]] *= 0.5
        # zero-phase version; the linear-phase shift of the textbook form moves it by 1/2
        psi = np.cos(np.outer(t, w)) @ (meyer_spectrum(w) * weights)
        psi /= np.sqrt(np.trapezoid(psi**2, t))
    else:
        raise ValueError(f"{kind} is evaluated analytically")
    t.setflags(write=False)
    psi.setflags(write=False)
    return t, psi


def evaluate(kind: WaveletKind, t: np.ndarray) -> np.ndarray:
    """Unit-energy mother wavelet at dimensionless times ``t`` (complex for Morlet)."""
    kind = WaveletKind(kind)
    t = np.asarray(t, dtype=float)
    if kind is WaveletKind.HAAR:
        return np.where((t >= 0) & (t < 0.5), 1.0, 0.0) - np.where((t >= 0.5) & (t < 1.0), 1.0, 0.0)
    if kind is WaveletKind.MORLET:
        lo, hi = support(kind)
        env = np.pi**-0.25 * np.exp(-(t**2) / 2)
        return np.where((t >= lo) & (t <= hi), env * np.exp(1j * MORLET_W0 * t), 0.0)
    grid, psi = tabulated(kind)
    return np.interp(t, grid, psi, left=0.0, right=0.0)


@lru_cache(maxsize=None)
def peak_frequency(kind: WaveletKind) -> float:
    """Angular frequency (rad per unit time) where ``|psi_hat|`` is largest."""
    kind = WaveletKind(kind)
    lo, hi = support(kind)
    dt = 1.0 / 512
    t = np.arange(lo, hi, dt)
    psi = evaluate(kind, t)
    nfft = 1 << 20
    mag = np.abs(np.fft.fft(psi, nfft))
    w = 2 * np.pi * np.fft.fftfreq(nfft, dt)
    pos = w > 0
    return float(w[pos][np.argmax(mag[pos])])


def kernel(kind: WaveletKind, scale: float) -> tuple[np.ndarray, int]:
    """Sampled, conjugated and ``1/sqrt(scale)``-weighted taps of the dilated wavelet.

    Returns ``(taps, first_offset)``: ``taps[i]`` multiplies the sample at
    offset ``first_offset + i`` from the translation point.
    """
    lo, hi = support(kind)
    m_lo = int(np.ceil(lo * scale))
    m_hi = int(np.floor(hi * scale))
    m = np.arange(m_lo, m_hi + 1)
    taps = np.conj(evaluate(kind, m / scale)) / np.sqrt(scale)
    return np.asarray(taps, dtype=np.complex128), m_lo
