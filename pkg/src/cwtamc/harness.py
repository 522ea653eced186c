"""End-to-end experiments: generate, extract, split, reduce, train, evaluate.

Every random choice is derived from ``ExperimentConfig.master_seed``; the
dataset of a sweep point depends only on (master seed, SNR, class, index), so
points along a sweep differ only in the swept quantity.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .errors import InvalidInputError
from .features import FEATURE_LAYOUT, MAX_ORDER, SERIES_NAMES, CwtConfig, extract_features
from .pca import PcaModel, fit_pca, transform
from .siggen import ALL_CLASSES, ModulationClass, SignalParams, iter_dataset
from .wavelets import WaveletKind

log = logging.getLogger(__name__)

CLASSIFIERS = ("pnn", "mlp")
SUPERCLASSES = ("QAM", "ASK", "PSK", "FSK", "MSK")
DEFAULT_SIGMA_GRID = (0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    classes: tuple = ALL_CLASSES
    per_class: int = 200
    snr_list: tuple = (-2.0, 1.0, 5.0, 6.0, 8.0)
    wavelet_list: tuple = (WaveletKind.MORLET,)
    cwt_scale: float | None = None  # None: derived from the carrier
    detune: float | None = None  # None: per-wavelet default
    median_window: int = 5
    num_symbols: int = 800
    symbol_rate: float = 100.0
    samples_per_symbol: int = 100
    carrier_freq: float | None = None
    pca_dim: int = 12
    classifier: str = "both"
    train_fraction: float = 0.40
    validation_fraction: float = 0.25
    sigma_grid: tuple = DEFAULT_SIGMA_GRID
    whiten: bool = True
    mlp: clf.MlpConfig = clf.MlpConfig()
    mlp_folds: int = 10
    wavelet_sweep_snr: float = 8.0
    master_seed: int = 0

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "classes", tuple(ModulationClass(c) for c in self.classes))
        set_(self, "snr_list", tuple(float(s) for s in self.snr_list))
        set_(self, "wavelet_list", tuple(WaveletKind(w) for w in self.wavelet_list))
        set_(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        if isinstance(self.mlp, dict):
            mlp = dict(self.mlp)
            if "hidden" in mlp:
                mlp["hidden"] = tuple(mlp["hidden"])
            set_(self, "mlp", clf.MlpConfig(**mlp))
        if len(set(self.classes)) != len(self.classes) or len(self.classes) < 2:
            raise InvalidInputError("classes must be at least two distinct modulation classes")
        if self.per_class < 10:
            raise InvalidInputError("per_class must be >= 10")
        if not 0 < self.train_fraction < 1:
            raise InvalidInputError("train_fraction must lie in (0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise InvalidInputError("validation_fraction must lie in (0, 1)")
        if self.classifier not in ("pnn", "mlp", "both"):
            raise InvalidInputError("classifier must be pnn, mlp or both")
        if not 1 <= self.pca_dim <= 4 * MAX_ORDER:
            raise InvalidInputError(f"pca_dim must lie in [1, {4 * MAX_ORDER}]")
        if not self.sigma_grid or min(self.sigma_grid) <= 0:
            raise InvalidInputError("sigma_grid must be non-empty and positive")
        if self.detune is not None and not self.detune > 0:
            raise InvalidInputError("detune must be positive")
        if self.cwt_scale is not None and not self.cwt_scale > 0:
            raise InvalidInputError("cwt_scale must be positive")
        self.signal_params()  # validates the sampling parameters

    @property
    def classifiers(self) -> tuple[str, ...]:
        return CLASSIFIERS if self.classifier == "both" else (self.classifier,)

    def signal_params(self) -> SignalParams:
        return SignalParams(self.symbol_rate, self.samples_per_symbol, self.carrier_freq, self.num_symbols)

    def cwt_config(self, wavelet) -> CwtConfig:
        p = self.signal_params()
        if self.cwt_scale is not None:
            return CwtConfig(wavelet, self.cwt_scale, self.median_window)
        return CwtConfig.for_carrier(wavelet, p.carrier_freq, p.sampling_freq, self.median_window, self.detune)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "classes":
                v = [c.name for c in v]
            elif f.name == "wavelet_list":
                v = [w.value for w in v]
            elif f.name == "mlp":
                v = v.to_dict()
                v["hidden"] = list(v["hidden"])
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
        data = dict(data)
        if "classes" in data:
            data["classes"] = tuple(
                c if isinstance(c, int) else ModulationClass.parse(c) for c in data["classes"]
            )
        if "wavelet_list" in data:
            data["wavelet_list"] = tuple(WaveletKind.parse(w) for w in data["wavelet_list"])
        return cls(**data)


# ------------------------------------------------------------ features


@dataclass(frozen=True, eq=False)
class FeatureSet:
    features: np.ndarray
    labels: np.ndarray
    seeds: np.ndarray

    def __len__(self):
        return self.labels.size


def _extract_class(args):
    cls, config, snr, wavelet = args
    cwt = config.cwt_config(wavelet)
    rows, seeds = [], []
    for s in iter_dataset([cls], config.per_class, config.signal_params(), snr, config.master_seed):
        rows.append(extract_features(s.signal, cwt))
        seeds.append(s.seed)
    return np.array(rows), np.array(seeds, dtype=np.uint64)


def extract_dataset(config: ExperimentConfig, snr_db: float, wavelet, jobs: int = 1) -> FeatureSet:
    """Generate ``per_class`` signals per class and extract their features."""
    tasks = [(c, config, float(snr_db), WaveletKind(wavelet)) for c in config.classes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_extract_class, tasks))
    else:
        parts = [_extract_class(t) for t in tasks]
    features = np.concatenate([p[0] for p in parts])
    seeds = np.concatenate([p[1] for p in parts])
    labels = np.repeat([int(c) for c in config.classes], config.per_class)
    return FeatureSet(features, labels, seeds)


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Log-moment ratios followed by standardization with training statistics.

    Per series, the first moment is kept as ``log m1`` and each higher moment
    becomes ``log m_k - k log m1``. A flat channel gain multiplies ``m_k`` by
    ``a**k``, so the ratios are gain-free and the gain is confined to the
    ``log m1`` coordinates.
    """

    mean: np.ndarray
    scale: np.ndarray

    @staticmethod
    def log_ratios(x) -> np.ndarray:
        x = np.array(x, dtype=float, ndmin=2)
        if np.any(x <= 0) or not np.all(np.isfinite(x)):
            raise InvalidInputError("moment features must be positive and finite")
        logs = np.log(x).reshape(x.shape[0], len(SERIES_NAMES), MAX_ORDER)
        k = np.arange(1, MAX_ORDER + 1)
        ratios = logs - k * logs[:, :, :1]
        ratios[:, :, 0] = logs[:, :, 0]
        return ratios.reshape(x.shape[0], -1)

    @classmethod
    def fit(cls, x) -> "FeatureScaler":
        r = cls.log_ratios(x)
        scale = r.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(r.mean(axis=0), scale)

    def apply(self, x) -> np.ndarray:
        return (self.log_ratios(x) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data) -> "FeatureScaler":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["scale"], dtype=float))


def pooled_covariance(features, labels, ridge: float = 1e-9) -> np.ndarray:
    """Pooled within-class covariance, with a tiny ridge so it stays invertible."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    classes = np.unique(y)
    dof = x.shape[0] - classes.size
    if dof < 1:
        raise InvalidInputError("not enough samples to pool a covariance")
    scatter = np.zeros((x.shape[1], x.shape[1]))
    for c in classes:
        dc = x[y == c] - x[y == c].mean(axis=0)
        scatter += dc.T @ dc
    cov = scatter / dof
    return cov + ridge * max(np.trace(cov) / cov.shape[0], 1e-300) * np.eye(cov.shape[0])


def whitening_matrix(features, labels) -> np.ndarray:
    """``W`` such that ``x @ W`` has identity pooled within-class covariance."""
    chol = np.linalg.cholesky(pooled_covariance(features, labels))
    return np.linalg.inv(chol).T


def derive_seed(master_seed: int, *tags) -> int:
    words = [int(master_seed) & (2**63 - 1)] + [
        int.from_bytes(str(t).encode()[:8].ljust(8, b"\0"), "little") for t in tags
    ]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)


def stratified_split(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded shuffle; the first ``round(fraction * n_c)`` go to the first part.

    Both parts are returned as sorted index arrays.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n = int(round(fraction * idx.size))
        first.append(idx[:n])
        second.append(idx[n:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


# ------------------------------------------------------------ evaluation


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    labels: tuple
    counts: np.ndarray  # rows true, columns predicted

    @classmethod
    def from_predictions(cls, labels, truth, predicted) -> "ConfusionMatrix":
        labels = tuple(labels)
        pos = {c: i for i, c in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(truth, predicted):
            counts[pos[t], pos[p]] += 1
        return cls(labels, counts)

    def percentages(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(100.0 * self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def recall(self) -> dict:
        pct = self.percentages()
        return {c: pct[i, i] / 100 for i, c in enumerate(self.labels)}

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def rollup(self, groups: dict) -> "ConfusionMatrix":
        """Merge rows and columns by ``groups[label] -> group name``."""
        names = tuple(dict.fromkeys(groups[c] for c in self.labels))
        pos = {g: i for i, g in enumerate(names)}
        out = np.zeros((len(names), len(names)), dtype=np.int64)
        for i, a in enumerate(self.labels):
            for j, b in enumerate(self.labels):
                out[pos[groups[a]], pos[groups[b]]] += self.counts[i, j]
        return ConfusionMatrix(names, out)

    def superclasses(self) -> "ConfusionMatrix":
        groups = {c: ModulationClass.parse(c).family for c in self.labels}
        return self.rollup(groups)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.labels, "count"])
        pct = self.percentages()
        for i, label in enumerate(self.labels):
            w.writerow([label, *(f"{v:.2f}" for v in pct[i]), int(self.counts[i].sum())])
        w.writerow([])
        w.writerow(["counts", *self.labels])
        for i, label in enumerate(self.labels):
            w.writerow([label, *(int(v) for v in self.counts[i])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        start = next(i for i, r in enumerate(rows) if r and r[0] == "counts")
        labels = tuple(rows[start][1:])
        counts = np.array([[int(v) for v in r[1:]] for r in rows[start + 1:start + 1 + len(labels)]])
        return cls(labels, counts)


@dataclass
class ClassifierResult:
    train_accuracy: float
    validation_accuracy: float
    test_accuracy: float | None
    validation_method: str
    confusion: ConfusionMatrix | None
    report: clf.TrainReport

    @property
    def overall_accuracy(self) -> float:
        """Mean of the train, validation and (when present) test accuracies."""
        parts = [self.train_accuracy, self.validation_accuracy]
        if self.test_accuracy is not None:
            parts.append(self.test_accuracy)
        return float(np.mean(parts))


@dataclass
class TrainedPipeline:
    scaler: FeatureScaler
    pca: PcaModel
    whitener: np.ndarray | None = None
    pnn: clf.PnnModel | None = None
    mlp: clf.MlpModel | None = None
    sigma_curve: list = field(default_factory=list)

    def reduce(self, features) -> np.ndarray:
        z = transform(self.pca, self.scaler.apply(features))
        return z if self.whitener is None else z @ self.whitener

    def predict(self, name: str, features) -> np.ndarray:
        return self.predict_scores(name, features)[0]

    def predict_scores(self, name: str, features) -> tuple[np.ndarray, np.ndarray]:
        """Predicted classes and per-class scores (columns in ``class_list`` order)."""
        z = self.reduce(features)
        if name == "pnn":
            return clf.pnn_predict(self.pnn, z)[:2]
        return clf.mlp_predict(self.mlp, z)

    def to_dict(self) -> dict:
        return {
            "feature_layout": FEATURE_LAYOUT,
            "scaler": self.scaler.to_dict(),
            "pca": self.pca.to_dict(),
            "whitener": None if self.whitener is None else self.whitener.tolist(),
            "pnn": None if self.pnn is None else self.pnn.to_dict(),
            "mlp": None if self.mlp is None else self.mlp.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedPipeline":
        if data.get("feature_layout") != FEATURE_LAYOUT:
            raise InvalidInputError("models were trained on a different feature layout")
        return cls(
            FeatureScaler.from_dict(data["scaler"]),
            PcaModel.from_dict(data["pca"], FEATURE_LAYOUT),
            None if data.get("whitener") is None else np.asarray(data["whitener"], dtype=float),
            None if data.get("pnn") is None else clf.PnnModel.from_dict(data["pnn"]),
            None if data.get("mlp") is None else clf.MlpModel.from_dict(data["mlp"]),
        )


def run_stage(name, fn, *args, **kwargs):
    """Call ``fn`` and re-raise any failure as :class:`StageError` named ``name``."""
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # attribute the failure, keep the cause
        raise StageError(name, exc) from exc


def train_pipeline(features, labels, config: ExperimentConfig, seed: int):
    """Fit scaler, PCA and the selected classifiers on training rows only.

    Returns ``(pipeline, {name: (train_acc, val_acc, method, report)})``.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(int)
    class_list = tuple(int(c) for c in config.classes)
    scaler = run_stage("scale", FeatureScaler.fit, x)
    z_full = scaler.apply(x)
    pca = run_stage("pca", fit_pca, z_full, config.pca_dim, FEATURE_LAYOUT)
    pipe = TrainedPipeline(scaler, pca)
    z = transform(pca, z_full)
    if config.whiten:
        pipe.whitener = run_stage("whiten", whitening_matrix, z, y)
        z = z @ pipe.whitener
    fit_idx, val_idx = stratified_split(y, 1 - config.validation_fraction, derive_seed(seed, "validation"))
    stats = {}

    if "pnn" in config.classifiers:
        start = time.perf_counter()
        sigma, curve = run_stage(
            "pnn", clf.select_sigma, z[fit_idx], y[fit_idx], z[val_idx], y[val_idx],
            config.sigma_grid, class_list,
        )
        pipe.pnn = run_stage("pnn", clf.pnn_train, z, y, sigma, class_list)
        wall = time.perf_counter() - start
        pipe.sigma_curve = curve
        train_acc = float(np.mean(clf.pnn_predict(pipe.pnn, z)[0] == y))
        loo = float(np.mean(clf.pnn_loo_predict(pipe.pnn) == y))
        stats["pnn"] = (train_acc, loo, "leave-one-out", clf.TrainReport(0, train_acc, loo, wall))

    if "mlp" in config.classifiers:
        mlp_cfg = replace(config.mlp, seed=derive_seed(seed, "mlp"))
        model, report = run_stage(
            "mlp", clf.mlp_train, z[fit_idx], y[fit_idx], mlp_cfg, (z[val_idx], y[val_idx]), class_list
        )
        pipe.mlp = model
        train_acc = float(np.mean(clf.mlp_predict(model, z)[0] == y))
        folds = min(config.mlp_folds, y.size)
        cv = run_stage("mlp", kfold_accuracy, z, y, mlp_cfg, folds, class_list, derive_seed(seed, "folds"))
        stats["mlp"] = (train_acc, cv, f"{folds}-fold", report)
    return pipe, stats


def kfold_accuracy(z, y, mlp_config: clf.MlpConfig, folds: int, class_list, seed: int) -> float:
    """Stratified k-fold accuracy of the MLP (stands in for leave-one-out)."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=int)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold_of[idx] = np.arange(idx.size) % folds
    correct = 0
    for k in range(folds):
        held = fold_of == k
        if not held.any():
            continue
        train_classes = set(y[~held].tolist())
        model, _ = clf.mlp_train(z[~held], y[~held], mlp_config, None, tuple(c for c in class_list if c in train_classes))
        correct += int(np.sum(clf.mlp_predict(model, z[held])[0] == y[held]))
    return correct / y.size


def leave_one_out_validate(features, labels, classifier: str = "pnn", sigma: float = 1.0,
                           mlp_config: clf.MlpConfig = clf.MlpConfig(), seed: int = 0):
    """Leave-one-out accuracy of a classifier on ``features``.

    PNN: exact, by masking each pattern node in turn. MLP: stratified k-fold
    with ``k = min(10, n)``. Returns ``(accuracy, method)``.
    """
    z = np.array(features, dtype=float, ndmin=2)
    y = np.asarray(labels).astype(int)
    if y.size < 2:
        raise InvalidInputError("leave-one-out needs at least 2 samples")
    if classifier == "pnn":
        model = clf.pnn_train(z, y, sigma)
        return float(np.mean(clf.pnn_loo_predict(model) == y)), "leave-one-out"
    if classifier == "mlp":
        folds = min(10, y.size)
        return kfold_accuracy(z, y, mlp_config, folds, tuple(sorted(set(y.tolist()))), seed), f"{folds}-fold"
    raise InvalidInputError(f"unknown classifier {classifier!r}")


@dataclass
class PointResult:
    axis: str
    value: object
    snr_db: float
    wavelet: WaveletKind
    results: dict  # classifier name -> ClassifierResult
    pipeline: TrainedPipeline
    split: dict  # "train"/"test" -> index arrays
    sigma: float | None = None

    @property
    def tag(self) -> str:
        return f"{self.axis}_{_fmt_value(self.value)}"


def _fmt_value(v) -> str:
    if isinstance(v, WaveletKind):
        return v.value
    return f"{float(v):g}"


def evaluate_features(fs: FeatureSet, config: ExperimentConfig, snr_db: float, wavelet,
                      axis: str = "snr", value=None, with_test: bool = True) -> PointResult:
    """Split, train and test on an extracted feature set."""
    seed = derive_seed(config.master_seed, "split")
    if with_test:
        train_idx, test_idx = stratified_split(fs.labels, config.train_fraction, seed)
    else:
        train_idx, test_idx = np.arange(len(fs)), np.array([], dtype=int)
    pipe, stats = train_pipeline(fs.features[train_idx], fs.labels[train_idx], config, config.master_seed)
    names = tuple(c.name for c in config.classes)
    results = {}
    for name, (train_acc, val_acc, method, report) in stats.items():
        test_acc, cm = None, None
        if test_idx.size:
            pred = run_stage("evaluate", pipe.predict, name, fs.features[test_idx])
            truth = fs.labels[test_idx]
            cm = ConfusionMatrix.from_predictions(
                names, [ModulationClass(t).name for t in truth], [ModulationClass(p).name for p in pred]
            )
            test_acc = cm.accuracy()
        results[name] = ClassifierResult(train_acc, val_acc, test_acc, method, cm, report)
    return PointResult(
        axis, snr_db if value is None else value, float(snr_db), WaveletKind(wavelet), results, pipe,
        {"train": train_idx, "test": test_idx}, None if pipe.pnn is None else pipe.pnn.sigma,
    )


def run_experiment(config: ExperimentConfig, snr_db: float | None = None, wavelet=None,
                   jobs: int = 1, axis: str = "snr") -> PointResult:
    """One sweep point (defaults: first SNR and first wavelet of the config)."""
    snr = config.snr_list[0] if snr_db is None else float(snr_db)
    wv = config.wavelet_list[0] if wavelet is None else WaveletKind(wavelet)
    fs = run_stage("extract", extract_dataset, config, snr, wv, jobs)
    return evaluate_features(fs, config, snr, wv, axis, snr if axis == "snr" else wv)


@dataclass
class SweepResult:
    axis: str
    config: ExperimentConfig
    points: list
    wall_times: dict = field(default_factory=dict)

    def accuracy_rows(self, classifier: str) -> list[dict]:
        rows = []
        for p in self.points:
            r = p.results.get(classifier)
            if r is None:
                continue
            rows.append({
                self.axis: _fmt_value(p.value),
                "training": r.train_accuracy * 100,
                "validation": r.validation_accuracy * 100,
                "testing": None if r.test_accuracy is None else r.test_accuracy * 100,
                "overall": r.overall_accuracy * 100,
                "validation_method": r.validation_method,
            })
        return rows

    def accuracy_csv(self, classifier: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis, "training", "validation", "testing", "overall", "validation_method"])
        for row in self.accuracy_rows(classifier):
            w.writerow([
                row[self.axis],
                *("" if row[k] is None else f"{row[k]:.4f}" for k in ("training", "validation", "testing", "overall")),
                row["validation_method"],
            ])
        return buf.getvalue()


def snr_sweep(config: ExperimentConfig, jobs: int = 1, cache: dict | None = None) -> SweepResult:
    """One point per SNR in ``config.snr_list`` using the first wavelet.

    ``cache`` maps ``(snr, wavelet)`` to already extracted feature sets and is
    filled as a side effect.
    """
    if not config.snr_list:
        raise InvalidInputError("snr_list is empty")
    return _sweep("snr", [(s, config.wavelet_list[0]) for s in config.snr_list], config, jobs, cache)


def wavelet_sweep(config: ExperimentConfig, jobs: int = 1, cache: dict | None = None) -> SweepResult:
    """One point per wavelet at ``config.wavelet_sweep_snr``."""
    if not config.wavelet_list:
        raise InvalidInputError("wavelet_list is empty")
    return _sweep("wavelet", [(config.wavelet_sweep_snr, w) for w in config.wavelet_list], config, jobs, cache)


def _sweep(axis, points, config, jobs, cache):
    cache = {} if cache is None else cache
    out = SweepResult(axis, config, [])
    for snr, wv in points:
        start = time.perf_counter()
        key = (config.master_seed, float(snr), WaveletKind(wv))
        if key not in cache:
            cache[key] = run_stage("extract", extract_dataset, config, snr, wv, jobs)
        point = evaluate_features(cache[key], config, snr, wv, axis, snr if axis == "snr" else WaveletKind(wv))
        out.points.append(point)
        out.wall_times[point.tag] = time.perf_counter() - start
        log.info("%s: %s", point.tag, {k: round(v.overall_accuracy, 4) for k, v in point.results.items()})
    return out


# ------------------------------------------------------------ timing


@dataclass
class TimingReport:
    snr_db: float
    runs: list  # per run: dict of pnn/mlp train/test seconds
    scaling: list  # (pattern count, median test seconds)
    scaling_r2: float

    def median(self, key: str) -> float:
        return float(np.median([r[key] for r in self.runs]))

    @property
    def ordering_holds(self) -> bool:
        return all(r["pnn_train"] < r["mlp_train"] for r in self.runs)

    def to_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "runs": self.runs,
            "median": {k: self.median(k) for k in self.runs[0]},
            "scaling": self.scaling,
            "scaling_r2": self.scaling_r2,
            "ordering_holds": self.ordering_holds,
        }


def _linear_r2(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    return 1.0 if total == 0 else float(1 - np.sum(resid**2) / total)


def timing_benchmark(fs: FeatureSet, config: ExperimentConfig, snr_db: float, runs: int = 3,
                     train_size: int = 1000, pattern_counts=(250, 500, 1000)) -> TimingReport:
    """Wall-clock train/test time of PNN and MLP on a PSK-2-versus-rest task.

    PNN training is pattern storage plus sigma assignment; the sigma search
    that precedes it is timed separately as ``pnn_select``. Feature scaling
    and PCA are fitted once outside the timed region. Never raises on slow
    results.
    """
    if runs < 1:
        raise InvalidInputError("runs must be >= 1")
    y = (fs.labels == int(ModulationClass.PSK2)).astype(int)
    fraction = min(train_size, len(fs) // 2) / len(fs)
    train_idx, test_idx = stratified_split(y, fraction, derive_seed(config.master_seed, "bench"))
    test_idx = test_idx[: len(train_idx)]
    scaler = FeatureScaler.fit(fs.features[train_idx])
    pca = fit_pca(scaler.apply(fs.features[train_idx]), config.pca_dim, FEATURE_LAYOUT)
    ztr = transform(pca, scaler.apply(fs.features[train_idx]))
    zte = transform(pca, scaler.apply(fs.features[test_idx]))
    ytr = y[train_idx]
    if config.whiten:
        w = whitening_matrix(ztr, ytr)
        ztr, zte = ztr @ w, zte @ w
    fit_idx, val_idx = stratified_split(ytr, 1 - config.validation_fraction, derive_seed(config.master_seed, "bench-val"))
    classes = (0, 1)
    mlp_cfg = replace(config.mlp, seed=derive_seed(config.master_seed, "bench-mlp"))
    records = []
    for _ in range(runs):
        ts = time.perf_counter()
        sigma, _ = clf.select_sigma(ztr[fit_idx], ytr[fit_idx], ztr[val_idx], ytr[val_idx],
                                    config.sigma_grid, classes)
        t0 = time.perf_counter()
        pnn = clf.pnn_train(ztr, ytr, sigma, classes)
        t1 = time.perf_counter()
        clf.pnn_predict(pnn, zte)
        t2 = time.perf_counter()
        mlp, _ = clf.mlp_train(ztr[fit_idx], ytr[fit_idx], mlp_cfg, (ztr[val_idx], ytr[val_idx]), classes)
        t3 = time.perf_counter()
        clf.mlp_predict(mlp, zte)
        t4 = time.perf_counter()
        records.append({
            "pnn_select": t0 - ts, "pnn_train": t1 - t0, "pnn_test": t2 - t1,
            "mlp_train": t3 - t2, "mlp_test": t4 - t3,
        })
    scaling = []
    # small training sets shrink the pattern counts proportionally so they stay distinct
    shrink = min(1.0, len(train_idx) / max(pattern_counts))
    for m in pattern_counts:
        m = max(2, int(round(m * shrink)))
        sub = np.sort(np.random.default_rng(m).permutation(len(train_idx))[:m])
        model = clf.pnn_train(ztr[sub], ytr[sub], pnn.sigma) if len(set(ytr[sub])) == 2 else None
        times = []
        for _ in range(max(3, runs)):
            t0 = time.perf_counter()
            if model is not None:
                clf.pnn_predict(model, zte)
            times.append(time.perf_counter() - t0)
        scaling.append((m, float(np.median(times))))
    r2 = _linear_r2([s[0] for s in scaling], [s[1] for s in scaling])
    return TimingReport(float(snr_db), records, scaling, r2)


def timing_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "classifier", "train_seconds", "test_seconds", "sigma_search_seconds", "runs"])
    for rep in reports:
        for name in CLASSIFIERS:
            search = f"{rep.median('pnn_select'):.4f}" if name == "pnn" else ""
            w.writerow([f"{rep.snr_db:g}", name.upper(), f"{rep.median(name + '_train'):.4f}",
                        f"{rep.median(name + '_test'):.4f}", search, len(rep.runs)])
    return buf.getvalue()


# ------------------------------------------------------------ output


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_sweep(result: SweepResult, out_dir, timings: list | None = None) -> dict:
    """Write config, accuracy, confusion and model files; return a summary dict.

    Everything except ``timings.json`` is a pure function of the config.
    """
    out = Path(out_dir)
    _write(out / "config.json", json.dumps(result.config.to_dict(), indent=2, sort_keys=True) + "\n")
    summary = {"axis": result.axis, "points": []}
    for name in result.config.classifiers:
        _write(out / f"accuracy_{name}.csv", result.accuracy_csv(name))
    for p in result.points:
        entry = {"point": p.tag, "sigma": p.sigma}
        for name, r in p.results.items():
            entry[name] = {
                "training": r.train_accuracy,
                "validation": r.validation_accuracy,
                "testing": r.test_accuracy,
                "overall": r.overall_accuracy,
                "validation_method": r.validation_method,
            }
            if r.confusion is not None:
                _write(out / "confusion" / f"{name}_{p.tag}.csv", r.confusion.to_csv())
                _write(out / "confusion" / f"{name}_{p.tag}_superclass.csv", r.confusion.superclasses().to_csv())
        _write(out / "models" / f"{p.tag}.json", json.dumps(p.pipeline.to_dict(), sort_keys=True) + "\n")
        summary["points"].append(entry)
    side = {"sweep_seconds": result.wall_times, "train_seconds": {
        p.tag: {n: r.report.wall_time for n, r in p.results.items()} for p in result.points
    }}
    if timings:
        _write(out / "timing.csv", timing_csv(timings))
        side["benchmark"] = [t.to_dict() for t in timings]
    _write(out / "timings.json", json.dumps(side, indent=2, sort_keys=True) + "\n")
    return summary
