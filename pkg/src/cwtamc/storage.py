"""On-disk formats: binary signal datasets with a JSON manifest, and feature CSVs.

A dataset directory holds ``signals.bin`` (a sequence of records) and
``manifest.json``. Each record is a fixed header followed by interleaved
little-endian float64 I/Q samples; the header carries a CRC-32 over the rest
of the header and the payload so damaged records can be skipped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import InvalidInputError
from .features import FEATURE_NAMES
from .siggen import ChannelParams, IqSignal, LabeledSignal, ModulationClass

DATASET_FORMAT = "cwtamc-iq"
DATASET_VERSION = 1
SIGNALS_FILE = "signals.bin"
MANIFEST_FILE = "manifest.json"

_MAGIC = b"IQR1"
# magic, class code, fading, phase, snr, seed, sample count, crc32
_HEADER = struct.Struct("<4sBdddQII")


def _encode(sig: LabeledSignal) -> bytes:
    ch = sig.channel
    payload = np.ascontiguousarray(sig.signal.samples).view("<f8").tobytes()
    head = _HEADER.pack(_MAGIC, int(sig.label), ch.fading_coeff, ch.phase_offset, ch.snr_db,
                        int(sig.seed), len(sig.signal), 0)
    crc = zlib.crc32(head[:-4] + payload)
    return head[:-4] + struct.pack("<I", crc) + payload


def write_dataset(out_dir, signals: Iterable[LabeledSignal], metadata: dict) -> dict:
    """Write all records and the manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    count = 0
    sampling_freq = None
    with open(out / SIGNALS_FILE, "wb") as fh:
        for sig in signals:
            blob = _encode(sig)
            fh.write(blob)
            digest.update(blob)
            count += 1
            sampling_freq = sig.signal.sampling_freq
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "count": count,
        "sampling_freq": sampling_freq,
        "sha256": digest.hexdigest(),
        **metadata,
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST_FILE
    manifest = json.loads(path.read_text())
    if manifest.get("format") != DATASET_FORMAT or manifest.get("version") != DATASET_VERSION:
        raise InvalidInputError(f"{path} is not a version-{DATASET_VERSION} dataset manifest")
    return manifest


@dataclass
class Record:
    index: int
    signal: LabeledSignal | None
    error: str | None = None


def iter_records(data_dir) -> Iterator[Record]:
    """Yield every record; damaged ones carry ``error`` instead of a signal.

    A record whose header is unreadable ends the scan, since the position of
    the next record is then unknown.
    """
    manifest = read_manifest(data_dir)
    fs = float(manifest["sampling_freq"])
    with open(Path(data_dir) / SIGNALS_FILE, "rb") as fh:
        index = 0
        while True:
            head = fh.read(_HEADER.size)
            if not head:
                return
            if len(head) < _HEADER.size:
                yield Record(index, None, "truncated header")
                return
            magic, code, fading, phase, snr, seed, n, crc = _HEADER.unpack(head)
            if magic != _MAGIC:
                yield Record(index, None, "bad record marker")
                return
            payload = fh.read(16 * n)
            if len(payload) < 16 * n:
                yield Record(index, None, "truncated samples")
                return
            if zlib.crc32(head[:-4] + payload) != crc:
                yield Record(index, None, "checksum mismatch")
            else:
                try:
                    samples = np.frombuffer(payload, dtype="<f8").view(np.complex128)
                    channel = ChannelParams(fading, phase, snr, 0)
                    yield Record(index, LabeledSignal(IqSignal(samples, fs), ModulationClass(code), channel, seed))
                except (InvalidInputError, ValueError) as exc:
                    yield Record(index, None, str(exc))
            index += 1


def _num(v: float) -> str:
    return repr(float(v))


def write_feature_csv(path, rows: Iterable[tuple], metadata: dict) -> int:
    """Rows are ``(index, label, seed, snr_db, features)``; returns the row count.

    Metadata becomes leading ``# key=value`` lines.
    """
    count = 0
    with open(path, "w", newline="") as fh:
        for key in sorted(metadata):
            fh.write(f"# {key}={metadata[key]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "seed", "snr_db", *FEATURE_NAMES])
        for index, label, seed, snr, feats in rows:
            w.writerow([index, ModulationClass(label).name, seed, _num(snr), *(_num(v) for v in feats)])
            count += 1
    return count


@dataclass(frozen=True, eq=False)
class FeatureTable:
    index: np.ndarray
    labels: np.ndarray
    seeds: np.ndarray
    snr_db: np.ndarray
    features: np.ndarray
    metadata: dict


def read_feature_csv(path) -> FeatureTable:
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or header[4:] != list(FEATURE_NAMES):
        raise InvalidInputError(f"{path}: unexpected feature columns")
    idx, labels, seeds, snr, feats = [], [], [], [], []
    for row in reader:
        if not row:
            continue
        idx.append(int(row[0]))
        labels.append(int(ModulationClass.parse(row[1])))
        seeds.append(int(row[2]))
        snr.append(float(row[3]))
        feats.append([float(v) for v in row[4:]])
    if not feats:
        raise InvalidInputError(f"{path}: no feature rows")
    return FeatureTable(np.array(idx), np.array(labels), np.array(seeds, dtype=np.uint64),
                        np.array(snr), np.array(feats), meta)
