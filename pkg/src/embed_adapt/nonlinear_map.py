"""Nonlinear source-to-target mapping via an ensemble of small MLPs.

The shared pivot vocabulary is split into K folds.  For each fold a
fully-connected feed-forward network (hidden width equal to the embedding
dimension) is trained with Adam on the other K-1 folds to minimize the
mean squared error against the target vectors, early-stopped on the
held-out fold.  The final transformation is the average of the K fold
networks' outputs, applied to the full source vocabulary.

Gradients are computed analytically (plain backpropagation); the test
suite checks them against central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from embed_adapt.dictionary import TrainingDictionary, split_folds
from embed_adapt.embeddings import EmbeddingSet
from embed_adapt.errors import DataError, FormatError, NumericalError

ACTIVATIONS = ("tanh", "relu")

_MAGIC = b"EANE"
_VERSION = 1

Pair = tuple[str, int, int]


@dataclass(frozen=True)
class MlpArchitecture:
    n_hidden: int = 1
    activation: str = "tanh"
    hidden_dim: int | None = None  # None: use the source embedding dim

    def __post_init__(self):
        if self.n_hidden < 1:
            raise DataError("at least one hidden layer is required")
        if self.activation not in ACTIVATIONS:
            raise DataError(f"unknown activation: {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    folds: int = 10
    minibatch: int = 5
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 1
    max_epochs: int = 500
    min_delta: float = 0.0
    seed: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise DataError("folds must be >= 2")
        if self.minibatch < 1:
            raise DataError("minibatch must be >= 1")
        if self.patience < 1:
            raise DataError("patience must be >= 1")


class MlpNetwork:
    """Hidden layers with tanh/relu activation, linear output layer."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 activation: str):
        if activation not in ACTIVATIONS:
            raise DataError(f"unknown activation: {activation!r}")
        if len(weights) != len(biases) or len(weights) < 2:
            raise DataError("network needs at least one hidden and one output layer")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape[1] != b.shape[0]:
                raise DataError(f"layer {i}: weight/bias shape mismatch")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise DataError(f"layer {i}: shape chain broken")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DataError(f"layer {i}: non-finite parameters")
        self.weights = weights
        self.biases = biases
        self.activation = activation

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def _act_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return 1.0 - a * a
        return (z > 0.0).astype(np.float64)

    def forward_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.d_in:
            raise DataError(f"dimension mismatch: expected {self.d_in}, "
                            f"got {X.shape[1]}")
        h = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = self._act(h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_matrix(np.asarray(x, dtype=np.float64)[None, :])[0]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([w.copy() for w in self.weights],
                          [b.copy() for b in self.biases], self.activation)


def init_network(d_in: int, d_out: int, arch: MlpArchitecture,
                 rng: np.random.Generator) -> MlpNetwork:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    hidden = arch.hidden_dim if arch.hidden_dim is not None else d_in
    dims = [d_in] + [hidden] * arch.n_hidden + [d_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(weights, biases, arch.activation)


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean over rows of the mean per-dimension squared error."""
    diff = pred - truth
    return float(np.mean(diff * diff))


def loss_and_grads(net: MlpNetwork, X: np.ndarray, Y: np.ndarray
                   ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE loss plus analytic gradients for every weight and bias."""
    B = X.shape[0]
    hs = [np.asarray(X, dtype=np.float64)]
    zs = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = hs[-1] @ w + b
        zs.append(z)
        hs.append(net._act(z))
    out = hs[-1] @ net.weights[-1] + net.biases[-1]
    diff = out - Y
    loss = float(np.mean(diff * diff))
    g = 2.0 * diff / diff.size

    grads_w = [np.empty(0)] * len(net.weights)
    grads_b = [np.empty(0)] * len(net.biases)
    grads_w[-1] = hs[-1].T @ g
    grads_b[-1] = g.sum(axis=0)
    g = g @ net.weights[-1].T
    for i in range(net.n_hidden - 1, -1, -1):
        g = g * net._act_grad(zs[i], hs[i + 1])
        grads_w[i] = hs[i].T @ g
        grads_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ net.weights[i].T
    return loss, grads_w, grads_b


class _Adam:
    def __init__(self, params: list[np.ndarray], lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class EarlyStopper:
    """Strict best-so-far tracking with a patience budget.

    ``update`` returns False once ``patience`` consecutive evaluations fail
    to improve on the best seen value by more than ``min_delta``.
    """

    def __init__(self, patience: int = 1, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_index = -1
        self._index = -1
        self._bad = 0

    def update(self, value: float) -> bool:
        self._index += 1
        if value < self.best - self.min_delta:
            self.best = value
            self.best_index = self._index
            self._bad = 0
            return True
        self._bad += 1
        return self._bad < self.patience


@dataclass(frozen=True)
class FoldRecord:
    train_size: int
    heldout_size: int
    history: list[float]  # held-out MSE; [0] is the untrained network
    best_index: int       # index into history of the returned snapshot


@dataclass(frozen=True)
class MlpEnsemble:
    networks: list[MlpNetwork]
    arch: MlpArchitecture
    config: TrainConfig
    records: list[FoldRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.networks:
            raise DataError("ensemble needs at least one network")


def _pair_matrices(source: EmbeddingSet, target: EmbeddingSet,
                   pairs: list[Pair]) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([s for _, s, _ in pairs], dtype=np.intp)
    tgt = np.array([t for _, _, t in pairs], dtype=np.intp)
    return source.matrix[src], target.matrix[tgt]


def train_fold(source: EmbeddingSet, target: EmbeddingSet,
               train_pairs: list[Pair], heldout_pairs: list[Pair],
               arch: MlpArchitecture, config: TrainConfig,
               rng: np.random.Generator | None = None
               ) -> tuple[MlpNetwork, FoldRecord]:
    """Minibatch Adam training with held-out early stopping.

    Returns the parameter snapshot with the best held-out MSE together
    with the full held-out history (entry 0 is the untrained network).
    """
    if not train_pairs or not heldout_pairs:
        raise DataError("train and held-out pair sets must both be nonempty")
    overlap = {w for w, _, _ in train_pairs} & {w for w, _, _ in heldout_pairs}
    if overlap:
        raise DataError(f"train/held-out overlap: {sorted(overlap)[:3]}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    X, Y = _pair_matrices(source, target, train_pairs)
    Xh, Yh = _pair_matrices(source, target, heldout_pairs)

    net = init_network(source.dim, target.dim, arch, rng)
    params = net.weights + net.biases
    opt = _Adam(params, config.learning_rate, config.beta1, config.beta2,
                config.eps)

    history = [mse(net.forward_matrix(Xh), Yh)]
    stopper = EarlyStopper(config.patience, config.min_delta)
    stopper.update(history[0])
    # snapshot tracking is a strict minimum so the returned network always
    # carries min(history), regardless of the stopper's min_delta slack
    best, best_mse, best_index = net.copy(), history[0], 0

    n = X.shape[0]
    for _ in range(config.max_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.minibatch):
            batch = order[lo:lo + config.minibatch]  # last short batch is used
            loss, gw, gb = loss_and_grads(net, X[batch], Y[batch])
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged: loss={loss!r}")
            opt.step(params, gw + gb)
        heldout = mse(net.forward_matrix(Xh), Yh)
        if not np.isfinite(heldout):
            raise NumericalError(f"training diverged: held-out MSE={heldout!r}")
        history.append(heldout)
        if heldout < best_mse:
            best, best_mse, best_index = net.copy(), heldout, len(history) - 1
        if not stopper.update(heldout):
            break
    record = FoldRecord(train_size=len(train_pairs),
                        heldout_size=len(heldout_pairs),
                        history=history, best_index=best_index)
    return best, record


def fit_nonlinear(source: EmbeddingSet, target: EmbeddingSet,
                  dictionary: TrainingDictionary, arch: MlpArchitecture,
                  config: TrainConfig) -> MlpEnsemble:
    """Train one network per fold (that fold held out) and collect them all."""
    if len(dictionary) < config.folds:
        raise DataError(f"{len(dictionary)} pairs cannot fill {config.folds} folds")
    folds = split_folds(dictionary, config.folds, config.seed)
    networks, records = [], []
    for i in range(config.folds):
        train_pairs = [p for j, fold in enumerate(folds) if j != i for p in fold]
        rng = np.random.default_rng([config.seed, i])
        try:
            net, record = train_fold(source, target, train_pairs, folds[i],
                                     arch, config, rng=rng)
        except NumericalError as exc:
            raise NumericalError(f"fold {i}: {exc}") from None
        networks.append(net)
        records.append(record)
    return MlpEnsemble(networks=networks, arch=arch, config=config,
                       records=records)


def apply_nonlinear(ensemble: MlpEnsemble, source: EmbeddingSet) -> EmbeddingSet:
    """Map every source word to the mean of the fold networks' outputs."""
    out = ensemble.networks[0].forward_matrix(source.matrix)
    for net in ensemble.networks[1:]:
        out += net.forward_matrix(source.matrix)
    out /= len(ensemble.networks)
    return EmbeddingSet(source.vocab, out)


def save_ensemble(ensemble: MlpEnsemble, path: str | Path) -> None:
    cfg = ensemble.config
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BBI", _VERSION,
                             ACTIVATIONS.index(ensemble.arch.activation),
                             len(ensemble.networks)))
        fh.write(struct.pack("<iiiiq", cfg.folds, cfg.minibatch, cfg.patience,
                             cfg.max_epochs, cfg.seed))
        fh.write(struct.pack("<ddddd", cfg.learning_rate, cfg.beta1, cfg.beta2,
                             cfg.eps, cfg.min_delta))
        for net in ensemble.networks:
            fh.write(struct.pack("<B", len(net.weights)))
            for w, b in zip(net.weights, net.biases):
                fh.write(struct.pack("<II", *w.shape))
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_ensemble(path: str | Path) -> MlpEnsemble:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    data = path.read_bytes()
    if data[:4] != _MAGIC:
        raise FormatError(f"{path}: not an ensemble file")
    try:
        version, act_code, n_nets = struct.unpack_from("<BBI", data, 4)
        pos = 4 + struct.calcsize("<BBI")
        folds, minibatch, patience, max_epochs, seed = struct.unpack_from(
            "<iiiiq", data, pos)
        pos += struct.calcsize("<iiiiq")
        lr, beta1, beta2, eps, min_delta = struct.unpack_from("<ddddd", data, pos)
        pos += struct.calcsize("<ddddd")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if act_code >= len(ACTIVATIONS):
            raise FormatError(f"{path}: bad activation code {act_code}")
        networks = []
        for _ in range(n_nets):
            (n_layers,) = struct.unpack_from("<B", data, pos)
            pos += 1
            weights, biases = [], []
            for _ in range(n_layers):
                rows, cols = struct.unpack_from("<II", data, pos)
                pos += 8
                w = np.frombuffer(data, dtype="<f8", count=rows * cols,
                                  offset=pos).reshape(rows, cols).copy()
                pos += rows * cols * 8
                b = np.frombuffer(data, dtype="<f8", count=cols, offset=pos).copy()
                pos += cols * 8
                weights.append(w)
                biases.append(b)
            networks.append(MlpNetwork(weights, biases, ACTIVATIONS[act_code]))
    except struct.error:
        raise FormatError(f"{path}: truncated ensemble file") from None
    if pos != len(data):
        raise FormatError(f"{path}: trailing data")
    arch = MlpArchitecture(n_hidden=networks[0].n_hidden,
                           activation=ACTIVATIONS[act_code],
                           hidden_dim=networks[0].weights[0].shape[1])
    config = TrainConfig(folds=folds, minibatch=minibatch, patience=patience,
                         max_epochs=max_epochs, seed=seed, learning_rate=lr,
                         beta1=beta1, beta2=beta2, eps=eps, min_delta=min_delta)
    return MlpEnsemble(networks=networks, arch=arch, config=config)
