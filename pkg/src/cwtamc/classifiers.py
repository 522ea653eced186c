"""Probabilistic neural network and a one-vs-all MLP baseline.

PNN: one isotropic Gaussian pattern node per training vector, class-averaged
summation nodes, winner-take-all decision.

MLP: one binary ``[n_in, 10, 15, 2]`` network per class (tanh hidden layers,
softmax output), trained full-batch with iRprop-.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError

MODEL_FORMAT_VERSION = 1
# exp(-x) underflows to zero in float64 beyond this
_UNDERFLOW_EXPONENT = 745.0


# --------------------------------------------------------------------- PNN


@dataclass(frozen=True, eq=False)
class PnnModel:
    patterns: np.ndarray
    pattern_class: np.ndarray
    sigma: float
    class_list: tuple

    def __post_init__(self):
        if self.patterns.ndim != 2 or self.patterns.shape[0] < 1:
            raise InvalidInputError("PNN needs at least one pattern")
        if not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")
        if not set(np.unique(self.pattern_class).tolist()) <= set(self.class_list):
            raise InvalidInputError("pattern classes must belong to class_list")

    @property
    def num_patterns(self) -> int:
        return self.patterns.shape[0]

    def with_sigma(self, sigma: float) -> "PnnModel":
        return PnnModel(self.patterns, self.pattern_class, float(sigma), self.class_list)

    def to_dict(self) -> dict:
        return {
            "format": "pnn",
            "version": MODEL_FORMAT_VERSION,
            "sigma": self.sigma,
            "classes": list(self.class_list),
            "dim": int(self.patterns.shape[1]),
            "patterns": self.patterns.ravel().tolist(),
            "pattern_class": self.pattern_class.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PnnModel":
        if data.get("format") != "pnn" or data.get("version") != MODEL_FORMAT_VERSION:
            raise InvalidInputError("not a version-1 PNN model")
        return cls(
            np.asarray(data["patterns"], dtype=float).reshape(-1, int(data["dim"])),
            np.asarray(data["pattern_class"], dtype=int),
            float(data["sigma"]),
            tuple(data["classes"]),
        )


def pnn_train(features, labels, sigma: float, class_list=None) -> PnnModel:
    """Store every training vector as a pattern node with kernel width ``sigma``."""
    x = np.array(features, dtype=float, ndmin=2)
    y = np.asarray(labels).astype(int)
    if x.shape[0] != y.size:
        raise InvalidInputError("features and labels differ in length")
    if class_list is None:
        class_list = tuple(sorted(set(y.tolist())))
    class_list = tuple(int(c) for c in class_list)
    missing = [c for c in class_list if not np.any(y == c)]
    if missing:
        raise InvalidInputError(f"classes without training samples: {missing}")
    return PnnModel(x, y, float(sigma), class_list)


def _sq_distances(model: PnnModel, xq: np.ndarray) -> np.ndarray:
    # squared distance over sigma**2, shape (queries, patterns); explicit
    # differences keep every entry a function of its own pair only
    a = np.atleast_2d(np.asarray(xq, dtype=float)) / model.sigma
    b = model.patterns / model.sigma
    out = np.empty((a.shape[0], b.shape[0]))
    rows = max(1, (1 << 22) // max(1, b.size))
    for i in range(0, a.shape[0], rows):
        diff = a[i:i + rows, None, :] - b[None, :, :]
        out[i:i + rows] = np.einsum("qpk,qpk->qp", diff, diff)
    return out


def _class_sums(kernel: np.ndarray, model: PnnModel, exclude_self: bool = False) -> np.ndarray:
    out = np.empty((kernel.shape[0], len(model.class_list)))
    for j, c in enumerate(model.class_list):
        members = model.pattern_class == c
        # exactly rounded sums: independent of pattern order and of duplication
        total = np.array([math.fsum(row) for row in kernel[:, members]])
        count = np.full(kernel.shape[0], members.sum(), dtype=float)
        if exclude_self:
            count -= members.astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, j] = np.where(count > 0, total / count, 0.0)
    return out


def pnn_summation(model: PnnModel, x) -> np.ndarray:
    """Unnormalized summation-layer outputs ``o_j`` for each query row."""
    d = _sq_distances(model, np.atleast_2d(x))
    return _class_sums(np.exp(-0.5 * d), model)


def _decide(model, d, exclude_self=False):
    # d: scaled squared distances; rescale by the nearest pattern's kernel value
    shift = d.min(axis=1, keepdims=True)
    sums = _class_sums(np.exp(-0.5 * (d - shift)), model, exclude_self)
    totals = sums.sum(axis=1, keepdims=True)
    scores = np.divide(sums, totals, out=np.zeros_like(sums), where=totals > 0)
    winner = np.argmax(sums, axis=1)  # first maximum: lowest class index wins ties
    underflow = 0.5 * shift[:, 0] > _UNDERFLOW_EXPONENT
    if np.any(underflow):
        nearest = np.argmin(d[underflow], axis=1)
        lookup = {c: j for j, c in enumerate(model.class_list)}
        winner[underflow] = [lookup[c] for c in model.pattern_class[nearest]]
    return np.asarray(model.class_list)[winner], scores, underflow


def pnn_predict(model: PnnModel, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch classification: ``(classes, normalized scores, underflow flags)``.

    Kernel values are rescaled by the nearest pattern's before summing; the
    common factor cancels in both the argmax and the normalized scores. When
    the unscaled kernel would underflow everywhere the nearest pattern's class
    is returned and the row is flagged.
    """
    d = _sq_distances(model, np.atleast_2d(x))
    return _decide(model, d)


def pnn_classify(model: PnnModel, x) -> tuple[int, np.ndarray]:
    classes, scores, _ = pnn_predict(model, x)
    return int(classes[0]), scores[0]


def pnn_loo_predict(model: PnnModel) -> np.ndarray:
    """Leave-one-out predictions for every stored pattern.

    Each pattern is classified by the network with only its own node removed
    (and its class count reduced by one); sigma stays as trained.
    """
    if model.num_patterns < 2:
        raise InvalidInputError("leave-one-out needs at least 2 patterns")
    d = _sq_distances(model, model.patterns)
    np.fill_diagonal(d, np.inf)
    return _decide(model, d, exclude_self=True)[0]


def select_sigma(train_x, train_y, val_x, val_y, grid, class_list=None):
    """Grid value with the best validation accuracy (smallest on ties).

    Returns ``(sigma, accuracies)`` with one accuracy per grid value.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise InvalidInputError("sigma grid is empty")
    base = pnn_train(train_x, train_y, grid[0], class_list)
    d_unit = _sq_distances(base.with_sigma(1.0), np.atleast_2d(val_x))
    val_y = np.asarray(val_y)
    accs = []
    for s in grid:
        pred, _, _ = _decide(base.with_sigma(s), d_unit / s**2)
        accs.append(float(np.mean(pred == val_y)))
    best = max(accs)
    sigma = min(s for s, a in zip(grid, accs) if a == best)
    return sigma, accs


# --------------------------------------------------------------------- MLP


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (10, 15)
    max_epochs: int = 300
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    step_init: float = 0.1
    step_min: float = 1e-6
    step_max: float = 50.0
    plateau_epochs: int = 20
    validation_limit: float = 0.01
    seed: int = 0
    loss_scale: float = 1.0
    restore_best: bool = True

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    epochs_run: int
    final_train_accuracy: float
    final_validation_accuracy: float | None
    wall_time: float
    epochs_per_class: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class MlpModel:
    class_list: tuple
    input_mean: np.ndarray
    input_scale: np.ndarray
    networks: tuple  # one list of (W, b) per class
    config: MlpConfig = MlpConfig()

    @property
    def layer_sizes(self) -> list[int]:
        layers = self.networks[0]
        return [layers[0][0].shape[0]] + [w.shape[1] for w, _ in layers]

    def to_dict(self) -> dict:
        return {
            "format": "mlp",
            "version": MODEL_FORMAT_VERSION,
            "classes": list(self.class_list),
            "layer_sizes": self.layer_sizes,
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "networks": [
                [{"weights": w.ravel().tolist(), "bias": b.tolist()} for w, b in net] for net in self.networks
            ],
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        if data.get("format") != "mlp" or data.get("version") != MODEL_FORMAT_VERSION:
            raise InvalidInputError("not a version-1 MLP model")
        sizes = data["layer_sizes"]
        nets = []
        for net in data["networks"]:
            layers = []
            for (fan_in, fan_out), layer in zip(zip(sizes[:-1], sizes[1:]), net):
                layers.append((
                    np.asarray(layer["weights"], dtype=float).reshape(fan_in, fan_out),
                    np.asarray(layer["bias"], dtype=float),
                ))
            nets.append(layers)
        cfg = dict(data.get("config", {}))
        cfg["hidden"] = tuple(cfg.get("hidden", (10, 15)))
        return cls(
            tuple(data["classes"]),
            np.asarray(data["input_mean"], dtype=float),
            np.asarray(data["input_scale"], dtype=float),
            tuple(nets),
            MlpConfig(**cfg),
        )


def init_network(sizes, rng) -> list:
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1 / math.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)))
    return layers


def forward(layers, x) -> np.ndarray:
    """Softmax outputs of one network for the rows of ``x``."""
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w + b)
    w, b = layers[-1]
    z = a @ w + b
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(layers, x, targets, loss_scale: float = 1.0):
    """Mean cross-entropy and its gradient for one network.

    ``targets`` holds the output-node index (0 or 1) of every row.
    """
    acts = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w + b)
        acts.append(a)
    w, b = layers[-1]
    z = a @ w + b
    z = z - z.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(x.shape[0])
    loss = -log_p[rows, targets].mean() * loss_scale
    delta = np.exp(log_p)
    delta[rows, targets] -= 1.0
    delta *= loss_scale / x.shape[0]
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i:
            delta = (delta @ w.T) * (1 - acts[i] ** 2)
    return loss, grads


def _flatten(layers):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in layers])


def _unflatten(vec, sizes):
    layers, pos = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = vec[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = vec[pos:pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def train_binary(x, targets, sizes, config: MlpConfig, rng, val=None):
    """Train one binary network by iRprop-; returns ``(layers, epochs_run)``.

    Stops after ``max_epochs`` or once training accuracy has not improved for
    ``plateau_epochs`` epochs while sitting within ``validation_limit`` of
    the validation accuracy (when validation data is given). With validation
    data and ``restore_best`` the weights of the epoch with the lowest
    validation loss are returned.
    """
    params = _flatten(init_network(sizes, rng))
    step = np.full(params.size, config.step_init)
    prev = np.zeros(params.size)
    history = []
    best = (math.inf, params)
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        layers = _unflatten(params, sizes)
        loss, grads = loss_and_grad(layers, x, targets, config.loss_scale)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)
        train_acc = float(np.mean(np.argmax(forward(layers, x), axis=1) == targets))
        history.append(train_acc)
        if val is not None:
            p_val = forward(layers, val[0])
            val_loss = -np.mean(np.log(np.maximum(p_val[np.arange(val[1].size), val[1]], 1e-300)))
            if val_loss < best[0]:
                best = (val_loss, params)
        if len(history) > config.plateau_epochs:
            plateaued = max(history[-config.plateau_epochs:]) <= history[-config.plateau_epochs - 1]
            if plateaued:
                if val is None:
                    break
                val_acc = float(np.mean(np.argmax(p_val, axis=1) == val[1]))
                if abs(train_acc - val_acc) <= config.validation_limit:
                    break
        g = _flatten(grads)
        # signs, not the raw product, which can underflow for tiny gradients
        same = np.sign(g) * np.sign(prev)
        step = np.where(same > 0, np.minimum(step * config.eta_plus, config.step_max), step)
        step = np.where(same < 0, np.maximum(step * config.eta_minus, config.step_min), step)
        g = np.where(same < 0, 0.0, g)
        params = params - np.sign(g) * step
        prev = g
    if not np.all(np.isfinite(params)):
        raise TrainingDivergedError(epoch)
    if val is not None and config.restore_best:
        params = best[1]
    return _unflatten(params, sizes), epoch


def mlp_train(features, labels, config: MlpConfig = MlpConfig(), validation=None, class_list=None):
    """One-vs-all ensemble of binary networks (a single network for two classes).

    ``validation`` is an optional ``(features, labels)`` pair used by the
    stopping rule and for the report.
    """
    start = time.perf_counter()
    x = np.array(features, dtype=float, ndmin=2)
    y = np.asarray(labels).astype(int)
    if class_list is None:
        class_list = tuple(sorted(set(y.tolist())))
    class_list = tuple(int(c) for c in class_list)
    if len(class_list) < 2:
        raise InvalidInputError("MLP needs at least two classes")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    xs = (x - mean) / scale
    val = None
    if validation is not None:
        vx = (np.array(validation[0], dtype=float, ndmin=2) - mean) / scale
        vy = np.asarray(validation[1]).astype(int)
        val = (vx, vy)
    sizes = [x.shape[1], *config.hidden, 2]
    # two classes need only one network; its two outputs are the class scores
    targets = class_list[1:] if len(class_list) == 2 else class_list
    nets, epochs = [], []
    for k, c in enumerate(targets):
        rng = np.random.default_rng([config.seed, k])
        binary_val = None if val is None else (val[0], (val[1] == c).astype(int))
        layers, n = train_binary(xs, (y == c).astype(int), sizes, config, rng, binary_val)
        nets.append(layers)
        epochs.append(n)
    model = MlpModel(class_list, mean, scale, tuple(nets), config)
    train_acc = float(np.mean(mlp_predict(model, x)[0] == y))
    val_acc = None if validation is None else float(np.mean(mlp_predict(model, validation[0])[0] == validation[1]))
    report = TrainReport(max(epochs), train_acc, val_acc, time.perf_counter() - start, epochs)
    return model, report


def mlp_scores(model: MlpModel, x) -> np.ndarray:
    """Positive-node softmax output of every class network, shape (rows, classes)."""
    xs = (np.array(x, dtype=float, ndmin=2) - model.input_mean) / model.input_scale
    if len(model.networks) == 1:
        return forward(model.networks[0], xs)
    return np.stack([forward(net, xs)[:, 1] for net in model.networks], axis=1)


def mlp_predict(model: MlpModel, x) -> tuple[np.ndarray, np.ndarray]:
    scores = mlp_scores(model, x)
    return np.asarray(model.class_list)[np.argmax(scores, axis=1)], scores


def mlp_classify(model: MlpModel, x) -> tuple[int, np.ndarray]:
    classes, scores = mlp_predict(model, x)
    return int(classes[0]), scores[0]
