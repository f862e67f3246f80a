"""Scalar value estimators (the Q, U and F networks) with analytic backpropagation and Adam.

A `ValueNet` is a small fully connected network: rectified-linear hidden layers and one linear output unit,
everything in float64.  Weights are stored as (out, in) matrices, so a layer computes `h @ W.T + b`.

Checkpoints use a small, versioned, little-endian binary layout:
    magic "DCAF" | uint16 version
    config   : uint32 input_dim | uint32 hidden count | uint32 width (per hidden layer) | float64 lr |
               uint32 role length | role (UTF-8)
    metadata : uint32 entry count | per entry: uint32 key length | key (UTF-8) | uint32 value length |
               value (UTF-8 JSON)
    params   : uint64 parameter count | float64 values, per layer W row-major then b
"""
import copy
import json
import logging
import math
import os
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from decaf.exceptions import CheckpointError, DecafError, DimensionMismatchError, NonFiniteTargetError

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_DIMS = (20, 20)
DEFAULT_LR = 3e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

CHECKPOINT_MAGIC = b"DCAF"
CHECKPOINT_VERSION = 1


class Role(Enum):
    Q = "q"
    U = "u"
    F = "f"


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_dims: tuple = DEFAULT_HIDDEN_DIMS

    def __post_init__(self):
        hidden_dims = tuple(int(width) for width in self.hidden_dims)
        if int(self.input_dim) < 1 or any(width < 1 for width in hidden_dims):
            raise DecafError(f"Invalid network shape: {self.input_dim} -> {hidden_dims} -> 1.")

        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "hidden_dims", hidden_dims)

    @property
    def output_dim(self):
        return 1

    @property
    def layer_sizes(self):
        return (self.input_dim,) + self.hidden_dims + (self.output_dim,)


class ValueNet:
    """A scalar-output MLP that scores post-decision feature vectors.

    `forward`/`forward_batch` never mutate the net; `train_step` does (parameters and Adam state), so a
    net being trained must not be shared.  Targets are separate `ValueNet` instances kept in sync with
    `sync_target()`.
    """

    def __init__(self, config, role=Role.Q, seed=None, lr=DEFAULT_LR):
        """Creates a new ValueNet, initialized uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

        Arguments:
            :config: NetConfig - Layer sizes.
            :role: Role/String - Which estimator this is (Q, U or F), carried into checkpoints.
            :seed: Integer/None - Initialization seed, the same seed always gives bit-identical nets.
            :lr: Float - Adam learning rate.
        """
        self.config = config
        self.role = Role(role)
        self.lr = float(lr)

        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        sizes = config.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

        self.reset_optimizer()

    def reset_optimizer(self):
        self.adam_m = [np.zeros_like(p) for p in self.parameters()]
        self.adam_v = [np.zeros_like(p) for p in self.parameters()]
        self.adam_steps = 0

    def parameters(self):
        """All parameter arrays in layer order (W then b per layer); these are the live arrays."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.append(W)
            params.append(b)

        return params

    def set_parameters(self, params):
        """Overwrites every parameter (copied in) from a list shaped like `parameters()`."""
        current = self.parameters()
        if len(params) != len(current):
            raise DimensionMismatchError(len(current), len(params))

        for index, (old, new) in enumerate(zip(current, params)):
            new = np.array(new, dtype=np.float64)
            if new.shape != old.shape:
                raise DimensionMismatchError(old.shape, new.shape)

            layer = index // 2
            if index % 2 == 0:
                self.weights[layer] = new
            else:
                self.biases[layer] = new

    def copy(self):
        return copy.deepcopy(self)

    def _as_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.config.input_dim)
        if X.ndim != 2 or X.shape[1] != self.config.input_dim:
            raise DimensionMismatchError(self.config.input_dim, X.shape[-1] if X.ndim else X.shape)

        return X

    def _activations(self, X):
        """Runs the batch through every layer, keeping each layer's input for backpropagation."""
        inputs = []
        h = X
        last = len(self.weights) - 1
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ W.T + b
            if layer != last:
                h = np.maximum(h, 0.0)

        return inputs, h[:, 0]

    def forward(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 1:
            raise DimensionMismatchError(self.config.input_dim, features.shape)

        return float(self.forward_batch(features[np.newaxis, :])[0])

    def forward_batch(self, X):
        """Scores every row of a (batch x input_dim) matrix; an empty batch gives an empty vector."""
        X = self._as_batch(X)
        if X.shape[0] == 0:
            return np.zeros(0)

        _, out = self._activations(X)
        return out

    def loss(self, X, targets):
        X = self._as_batch(X)
        residual = self.forward_batch(X) - np.asarray(targets, dtype=np.float64)
        return float(np.mean(np.square(residual)))

    def gradients(self, X, targets):
        """Mean squared error of the batch and its analytic gradient w.r.t. every parameter.

        Returns:
            (Float, List[ndarray]) - The loss, and gradients in `parameters()` order.
        """
        X = self._as_batch(X)
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (X.shape[0],):
            raise DimensionMismatchError(X.shape[0], targets.shape)

        inputs, out = self._activations(X)
        residual = out - targets
        loss = float(np.mean(np.square(residual)))

        delta = (2.0 / X.shape[0]) * residual[:, np.newaxis]
        grads = [None] * (2 * len(self.weights))
        for layer in range(len(self.weights) - 1, -1, -1):
            h = inputs[layer]
            grads[2 * layer] = delta.T @ h
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer:
                # h > 0 exactly where the previous ReLU was active.
                delta = (delta @ self.weights[layer]) * (h > 0)

        return loss, grads

    def train_step(self, X, targets):
        """One Adam step on the MSE of the batch.  Returns the loss before the update."""
        targets = np.asarray(targets, dtype=np.float64)
        if not np.all(np.isfinite(targets)):
            raise NonFiniteTargetError("Regression targets must be finite.")
        if targets.size == 0:
            raise DimensionMismatchError("at least one sample", 0)

        loss, grads = self.gradients(X, targets)

        self.adam_steps += 1
        correction1 = 1.0 - math.pow(ADAM_BETA1, self.adam_steps)
        correction2 = 1.0 - math.pow(ADAM_BETA2, self.adam_steps)
        for param, grad, m, v in zip(self.parameters(), grads, self.adam_m, self.adam_v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(grad)
            param -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPSILON)

        return loss


def sync_target(online, target):
    """Copies the online parameters into the target net (bit-exact, target Adam state untouched)."""
    if online.config != target.config:
        raise DimensionMismatchError(online.config.layer_sizes, target.config.layer_sizes)

    target.weights = [W.copy() for W in online.weights]
    target.biases = [b.copy() for b in online.biases]


def make_target(online):
    target = online.copy()
    target.reset_optimizer()
    return target


def save_checkpoint(net, metadata=None):
    """Serializes a net (parameters, config and role) plus JSON-able metadata into checkpoint bytes."""
    metadata = metadata or {}
    role = net.role.value.encode("utf-8")
    hidden = net.config.hidden_dims

    chunks = [struct.pack("<4sH", CHECKPOINT_MAGIC, CHECKPOINT_VERSION)]
    chunks.append(struct.pack("<II", net.config.input_dim, len(hidden)))
    chunks.append(struct.pack(f"<{len(hidden)}I", *hidden))
    chunks.append(struct.pack("<dI", net.lr, len(role)))
    chunks.append(role)

    chunks.append(struct.pack("<I", len(metadata)))
    for key, value in metadata.items():
        key_bytes = str(key).encode("utf-8")
        value_bytes = json.dumps(value, sort_keys=True).encode("utf-8")
        chunks.append(struct.pack("<I", len(key_bytes)) + key_bytes)
        chunks.append(struct.pack("<I", len(value_bytes)) + value_bytes)

    flat = np.concatenate([p.ravel() for p in net.parameters()]).astype("<f8")
    chunks.append(struct.pack("<Q", flat.size))
    chunks.append(flat.tobytes())

    return b"".join(chunks)


class _PayloadReader:
    def __init__(self, payload):
        self.payload = bytes(payload)
        self.offset = 0

    def raw(self, size):
        start = self.offset
        stop = start + size
        if stop > len(self.payload):
            raise CheckpointError("Checkpoint payload is truncated.")

        chunk = self.payload[start:stop]
        self.offset = stop
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.raw(struct.calcsize(fmt)))

    def text(self):
        (length,) = self.unpack("<I")
        try:
            return self.raw(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError("Checkpoint holds invalid UTF-8.") from e


def load_checkpoint(payload):
    """Rebuilds a net and its metadata from checkpoint bytes.

    Returns:
        (ValueNet, Dict) - The net (fresh Adam state) and the metadata it was saved with.
    """
    reader = _PayloadReader(payload)
    magic, version = reader.unpack("<4sH")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("Not a DCAF checkpoint.")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version: {version}.")

    input_dim, n_hidden = reader.unpack("<II")
    hidden = reader.unpack(f"<{n_hidden}I")
    (lr,) = reader.unpack("<d")
    role = reader.text()

    (n_entries,) = reader.unpack("<I")
    metadata = {}
    for _ in range(n_entries):
        key = reader.text()
        try:
            metadata[key] = json.loads(reader.text())
        except json.JSONDecodeError as e:
            raise CheckpointError(f"Corrupt metadata value for {key!r}.") from e

    try:
        net = ValueNet(NetConfig(input_dim, hidden), role=role, lr=lr)
    except (DecafError, ValueError) as e:
        raise CheckpointError(f"Corrupt checkpoint config: {e}") from e

    (count,) = reader.unpack("<Q")
    expected = sum(p.size for p in net.parameters())
    if count != expected:
        raise CheckpointError(f"Checkpoint holds {count} parameters, its config needs {expected}.")

    flat = np.frombuffer(reader.raw(8 * count), dtype="<f8").astype(np.float64)
    if reader.offset != len(reader.payload):
        raise CheckpointError("Trailing bytes after the parameter block.")

    params = []
    start = 0
    for p in net.parameters():
        stop = start + p.size
        params.append(flat[start:stop].reshape(p.shape))
        start = stop
    net.set_parameters(params)

    return net, metadata


def write_checkpoint(path, net, metadata=None):
    """Writes a checkpoint file (through a temporary file, so readers never see a partial one)."""
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as fo:
        fo.write(save_checkpoint(net, metadata))
    os.replace(tmp_path, path)

    logger.info("Saved %s checkpoint to %s", net.role.value, path)


def read_checkpoint(path):
    with open(path, "rb") as fo:
        payload = fo.read()

    logger.info("Loaded checkpoint %s", path)
    return load_checkpoint(payload)
