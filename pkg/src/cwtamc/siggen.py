"""Complex-baseband modulators and the flat-fading / phase-offset / AWGN channel.

Every realization is a pure function of ``(params, snr_db, master_seed)``: the
per-signal seeds are derived with :class:`numpy.random.SeedSequence` from the
master seed, the class code and the realization index, so generation order
does not matter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidInputError

NOISELESS = math.inf


class ModulationClass(enum.IntEnum):
    QAM16 = 0
    QAM64 = 1
    ASK4 = 2
    ASK8 = 3
    PSK2 = 4
    PSK4 = 5
    PSK8 = 6
    FSK2 = 7
    FSK4 = 8
    MSK = 9

    @property
    def order(self) -> int:
        return _ORDER[self]

    @property
    def family(self) -> str:
        """Superclass name used for the interclass roll-up (PSK, FSK, QAM, ASK, MSK)."""
        return self.name.rstrip("0123456789")

    @property
    def label(self) -> str:
        """Human-readable name, e.g. ``QAM-16``."""
        if self is ModulationClass.MSK:
            return "MSK"
        return f"{self.family}-{self.order}"

    @classmethod
    def parse(cls, token: str) -> "ModulationClass":
        """Accept ``QAM16``, ``qam-16``, ``psk_2`` or an integer code."""
        key = token.strip().upper().replace("-", "").replace("_", "")
        if key.isdigit():
            try:
                return cls(int(key))
            except ValueError:
                pass
        elif key in cls.__members__:
            return cls[key]
        raise InvalidInputError(f"unknown modulation class {token!r}")


_ORDER = {
    ModulationClass.QAM16: 16,
    ModulationClass.QAM64: 64,
    ModulationClass.ASK4: 4,
    ModulationClass.ASK8: 8,
    ModulationClass.PSK2: 2,
    ModulationClass.PSK4: 4,
    ModulationClass.PSK8: 8,
    ModulationClass.FSK2: 2,
    ModulationClass.FSK4: 4,
    ModulationClass.MSK: 2,
}

ALL_CLASSES = tuple(ModulationClass)


@dataclass(frozen=True)
class SignalParams:
    """Sampling parameters for generated signals.

    ``sampling_freq`` is derived (``symbol_rate * samples_per_symbol``) and the
    carrier defaults to a tenth of it.
    """

    symbol_rate: float = 100.0
    samples_per_symbol: int = 100
    carrier_freq: float | None = None
    num_symbols: int = 100

    def __post_init__(self):
        if self.symbol_rate <= 0 or not math.isfinite(self.symbol_rate):
            raise InvalidInputError("symbol_rate must be positive and finite")
        if int(self.samples_per_symbol) != self.samples_per_symbol or self.samples_per_symbol < 2:
            raise InvalidInputError("samples_per_symbol must be an integer >= 2")
        if self.num_symbols < 2:
            raise InvalidInputError("num_symbols must be >= 2")
        if self.carrier_freq is None:
            object.__setattr__(self, "carrier_freq", self.sampling_freq / 10.0)
        if not (0 <= self.carrier_freq < self.sampling_freq / 2):
            raise InvalidInputError(
                f"carrier_freq {self.carrier_freq} violates Nyquist for fs={self.sampling_freq}"
            )

    @property
    def sampling_freq(self) -> float:
        return self.symbol_rate * self.samples_per_symbol

    @property
    def num_samples(self) -> int:
        return self.num_symbols * self.samples_per_symbol


@dataclass(frozen=True)
class ChannelParams:
    fading_coeff: float = 1.0
    phase_offset: float = 0.0
    snr_db: float = NOISELESS
    rng_seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.fading_coeff) or not math.isfinite(self.phase_offset):
            raise InvalidInputError("channel parameters must be finite")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise InvalidInputError("snr_db must be a number or +inf (noiseless)")
        if self.fading_coeff <= 0:
            raise InvalidInputError("fading_coeff must be positive")
        if not -math.pi <= self.phase_offset <= math.pi:
            raise InvalidInputError("phase_offset must lie in [-pi, pi]")


@dataclass(frozen=True, eq=False)
class IqSignal:
    samples: np.ndarray
    sampling_freq: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidInputError("signal must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("signal contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class LabeledSignal:
    signal: IqSignal
    label: ModulationClass
    channel: ChannelParams
    seed: int = 0


def _gray_decode(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def random_symbols(cls: ModulationClass, n: int, seed: int) -> np.ndarray:
    """Uniform symbol indices over the alphabet of ``cls``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.integers(0, ModulationClass(cls).order, size=n)


def constellation(cls: ModulationClass) -> np.ndarray:
    """Unit-average-power symbol map for the linear classes (QAM, ASK, PSK).

    Entry ``m`` is the complex amplitude transmitted for symbol index ``m``
    (Gray-coded per axis for QAM, along the circle for PSK).
    """
    cls = ModulationClass(cls)
    m = cls.order
    idx = np.arange(m)
    if cls.family == "QAM":
        side = math.isqrt(m)
        bits = side.bit_length() - 1
        i_pos = _gray_decode(idx >> bits)
        q_pos = _gray_decode(idx & (side - 1))
        points = (2 * i_pos - (side - 1)) + 1j * (2 * q_pos - (side - 1))
    elif cls.family == "ASK":
        points = (2 * _gray_decode(idx) - (m - 1)).astype(np.complex128)
    elif cls.family == "PSK":
        points = np.exp(2j * np.pi * _gray_decode(idx) / m)
        return points
    else:
        raise InvalidInputError(f"{cls.name} has no static constellation")
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def tone_offsets(cls: ModulationClass, symbol_rate: float) -> np.ndarray:
    """Baseband tone frequencies (Hz) for the frequency-keyed classes."""
    cls = ModulationClass(cls)
    m = cls.order
    spacing = symbol_rate / 2 if cls is ModulationClass.MSK else symbol_rate
    return (2 * np.arange(m) + 1 - m) * spacing / 2


def modulate_baseband(cls: ModulationClass, symbols: Sequence[int], params: SignalParams) -> IqSignal:
    """Rectangular-pulse complex envelope for ``symbols``.

    FSK and MSK keep the phase continuous across symbol boundaries.
    """
    cls = ModulationClass(cls)
    symbols = np.asarray(symbols)
    if symbols.ndim != 1 or symbols.size == 0:
        raise InvalidInputError("symbols must be a non-empty 1-D sequence")
    if not np.issubdtype(symbols.dtype, np.integer):
        if not np.all(np.mod(symbols, 1) == 0):
            raise InvalidInputError("symbols must be integers")
        symbols = symbols.astype(np.int64)
    if symbols.min() < 0 or symbols.max() >= cls.order:
        raise InvalidInputError(f"symbol outside alphabet [0, {cls.order}) for {cls.name}")
    sps = int(params.samples_per_symbol)
    if cls.family in ("FSK", "MSK"):
        freqs = np.repeat(tone_offsets(cls, params.symbol_rate)[symbols], sps)
        # phase[n] accumulates every preceding sample's increment
        phase = np.concatenate(([0.0], np.cumsum(2 * np.pi * freqs[:-1] / params.sampling_freq)))
        samples = np.exp(1j * phase)
    else:
        samples = np.repeat(constellation(cls)[symbols], sps)
    return IqSignal(samples, params.sampling_freq)


def apply_channel(baseband: IqSignal, channel: ChannelParams, carrier_freq: float) -> IqSignal:
    """Fade, rotate, up-convert to ``carrier_freq`` and add complex AWGN at ``channel.snr_db``."""
    if not math.isfinite(carrier_freq):
        raise InvalidInputError("carrier_freq must be finite")
    s = baseband.samples
    faded = channel.fading_coeff * s
    n = np.arange(s.size)
    out = faded * np.exp(1j * (2 * np.pi * carrier_freq / baseband.sampling_freq * n + channel.phase_offset))
    if channel.snr_db != NOISELESS:
        signal_power = np.mean(np.abs(faded) ** 2)
        noise_power = signal_power / 10 ** (channel.snr_db / 10)
        rng = np.random.default_rng(channel.rng_seed)
        noise = rng.standard_normal((2, s.size)) * np.sqrt(noise_power / 2)
        out = out + (noise[0] + 1j * noise[1])
    return IqSignal(out, baseband.sampling_freq)


@dataclass(frozen=True)
class FadingRange:
    low: float = 0.5
    high: float = 1.5


def realization_seed(master_seed: int, cls: ModulationClass, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & (2**63 - 1), int(cls), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def realize(
    cls: ModulationClass,
    params: SignalParams,
    snr_db: float,
    seed: int,
    fading: FadingRange = FadingRange(),
) -> LabeledSignal:
    """One received realization of ``cls`` fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    symbol_seed, noise_seed = (int(v) for v in rng.integers(0, 2**62, size=2))
    phase = float(rng.uniform(-np.pi, np.pi))
    coeff = float(rng.uniform(fading.low, fading.high)) if fading.high > fading.low else float(fading.low)
    channel = ChannelParams(coeff, phase, snr_db, noise_seed)
    symbols = random_symbols(cls, params.num_symbols, symbol_seed)
    base = modulate_baseband(cls, symbols, params)
    return LabeledSignal(apply_channel(base, channel, params.carrier_freq), ModulationClass(cls), channel, seed)


def iter_dataset(
    classes: Iterable[ModulationClass],
    per_class: int,
    params: SignalParams,
    snr_db: float,
    master_seed: int,
    fading: FadingRange = FadingRange(),
) -> Iterator[LabeledSignal]:
    """Lazily yield ``per_class`` realizations of every class, class-major order."""
    classes = [ModulationClass(c) for c in classes]
    if not classes:
        raise InvalidInputError("class set is empty")
    if per_class < 1:
        raise InvalidInputError("per_class must be >= 1")
    for cls in classes:
        for i in range(per_class):
            yield realize(cls, params, snr_db, realization_seed(master_seed, cls, i), fading)


def generate_dataset(
    classes: Iterable[ModulationClass],
    per_class: int,
    params: SignalParams,
    snr_db: float,
    master_seed: int,
    fading: FadingRange = FadingRange(),
) -> list[LabeledSignal]:
    return list(iter_dataset(classes, per_class, params, snr_db, master_seed, fading))
