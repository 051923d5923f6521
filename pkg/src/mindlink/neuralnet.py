"""Band-power features and a one-hidden-layer classifier trained from scratch.

Network: ``h = tanh(W1 x + b1)``, ``p = softmax(W2 h + b2)``, trained by
full-batch gradient descent on mean cross-entropy.

Weight file layout (little-endian)::

    magic "NNW1", version u16 = 1,
    n_features u32, hidden u32, n_classes u32,
    per class: label_len u16 + UTF-8 label,
    W1, b1, W2, b2 as float32 row-major,
    crc32 u32 over every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from mindlink.errors import (BandViolation, CorruptNetwork, DegenerateDataset, NonFiniteLoss,
                             ShapeMismatch)
from mindlink.signal import SignalTrace, periodogram

BANDS = ((0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0))
MIN_SAMPLE_RATE = 60

NETWORK_MAGIC = b"NNW1"
NETWORK_VERSION = 1


def featurize(trace: SignalTrace) -> np.ndarray:
    """Band power of every channel in the delta/theta/alpha/beta bands.

    Layout is channel-major: ``[ch0 delta, ch0 theta, ch0 alpha, ch0 beta, ch1 ...]``.
    Band ``[lo, hi)`` power is the periodogram summed over its bins times the
    bin width.
    """
    if trace.sample_rate < MIN_SAMPLE_RATE:
        raise BandViolation(f"featurize needs sample_rate >= {MIN_SAMPLE_RATE} Hz, "
                            f"got {trace.sample_rate}")
    freqs, psd = periodogram(trace.samples, trace.sample_rate)
    df = freqs[1] - freqs[0]
    cols = [psd[:, (freqs >= lo) & (freqs < hi)].sum(axis=1) * df for lo, hi in BANDS]
    return np.stack(cols, axis=1).reshape(-1)


@dataclass(frozen=True)
class NetworkConfig:
    hidden_units: int = 16
    learning_rate: float = 0.05
    epochs: int = 200
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(eq=False)
class TrainedNetwork:
    w1: np.ndarray          # hidden x features
    b1: np.ndarray
    w2: np.ndarray          # classes x hidden
    b2: np.ndarray
    labels: tuple[str, ...]
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        h, f = self.w1.shape
        k = len(self.labels)
        if self.b1.shape != (h,) or self.w2.shape != (k, h) or self.b2.shape != (k,):
            raise ShapeMismatch(f"inconsistent weight shapes for {f} features, "
                                f"{h} hidden, {k} classes")
        for arr in self.params():
            if not np.all(np.isfinite(arr)):
                raise NonFiniteLoss("network weights are not finite")

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    @property
    def final_loss(self) -> float | None:
        return self.loss_history[-1] if self.loss_history else None

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def identical(self, other: "TrainedNetwork") -> bool:
        return self.labels == other.labels and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.params(), other.params()))


def forward(params, x):
    w1, b1, w2, b2 = params
    h = np.tanh(x @ w1.T + b1)
    z = h @ w2.T + b2
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return h, e / e.sum(axis=-1, keepdims=True)


def loss_and_gradients(params, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient for each parameter.

    ``x`` is ``samples x features``; ``y`` holds integer class indices.
    """
    w1, b1, w2, b2 = params
    n = x.shape[0]
    h, p = forward(params, x)
    loss = -np.mean(np.log(p[np.arange(n), y]))
    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    dw2 = dz.T @ h
    db2 = dz.sum(axis=0)
    dpre = (dz @ w2) * (1.0 - h ** 2)
    dw1 = dpre.T @ x
    db1 = dpre.sum(axis=0)
    return float(loss), [dw1, db1, dw2, db2]


def train(samples, config: NetworkConfig = NetworkConfig()) -> TrainedNetwork:
    """Fit on ``(features, label)`` pairs. Class order is first appearance."""
    samples = list(samples)
    labels = list(dict.fromkeys(label for _, label in samples))
    if len(labels) < 2:
        raise DegenerateDataset(f"need at least 2 distinct labels, got {labels}")
    x = np.stack([np.asarray(f, dtype=np.float64) for f, _ in samples])
    y = np.array([labels.index(label) for _, label in samples])
    n_feat = x.shape[1]

    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    params = [rng.uniform(-s, s, (config.hidden_units, n_feat)),
              rng.uniform(-s, s, config.hidden_units),
              rng.uniform(-s, s, (len(labels), config.hidden_units)),
              rng.uniform(-s, s, len(labels))]

    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            loss, grads = loss_and_gradients(params, x, y)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}; "
                                    f"learning_rate {config.learning_rate} is too high")
            history.append(loss)
            params = [p - config.learning_rate * g for p, g in zip(params, grads)]
        loss, _ = loss_and_gradients(params, x, y)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"final loss is {loss}")
    history.append(loss)
    return TrainedNetwork(*params, labels=tuple(labels), loss_history=history)


def predict(net: TrainedNetwork, features) -> np.ndarray:
    """Class probabilities, ordered like ``net.labels``."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (net.n_features,):
        raise ShapeMismatch(f"expected {net.n_features} features, got shape {x.shape}")
    _, p = forward(net.params(), x[None, :])
    return p[0]


def predict_label(net: TrainedNetwork, features) -> str:
    return net.labels[int(np.argmax(predict(net, features)))]


_DIMS = struct.Struct("<4sHIII")


def encode_network(net: TrainedNetwork) -> bytes:
    h, f = net.w1.shape
    parts = [_DIMS.pack(NETWORK_MAGIC, NETWORK_VERSION, f, h, len(net.labels))]
    for label in net.labels:
        raw = label.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw]
    parts += [a.astype("<f4").tobytes() for a in net.params()]
    blob = b"".join(parts)
    return blob + struct.pack("<I", zlib.crc32(blob))


def decode_network(blob: bytes) -> TrainedNetwork:
    if len(blob) < _DIMS.size + 4:
        raise CorruptNetwork("network file too short")
    magic, version, f, h, k = _DIMS.unpack_from(blob, 0)
    if magic != NETWORK_MAGIC:
        raise CorruptNetwork(f"bad magic {magic!r}")
    if version != NETWORK_VERSION:
        raise CorruptNetwork(f"unsupported version {version}")
    if zlib.crc32(blob[:-4]) != struct.unpack_from("<I", blob, len(blob) - 4)[0]:
        raise CorruptNetwork("CRC mismatch")
    off = _DIMS.size
    labels = []
    try:
        for _ in range(k):
            (n,) = struct.unpack_from("<H", blob, off)
            labels.append(blob[off + 2:off + 2 + n].decode("utf-8"))
            off += 2 + n
        shapes = [(h, f), (h,), (k, h), (k,)]
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            arrays.append(np.frombuffer(blob, "<f4", count, off).astype(np.float64).reshape(shape))
            off += 4 * count
    except (struct.error, ValueError) as exc:
        raise ShapeMismatch(f"network payload inconsistent with header: {exc}") from exc
    if off != len(blob) - 4:
        raise ShapeMismatch("network payload length does not match header dimensions")
    return TrainedNetwork(*arrays, labels=tuple(labels))
