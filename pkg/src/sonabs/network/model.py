"""Network assembly, standardization, loss/gradients, and serialization."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from sonabs.network.layers import Dense, ResidualBlock, Sigmoid, Tanh

MODEL_MAGIC = b"SNN1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of the residual encoder + dense decoder.

    The default reproduces the published layout: two input channels
    (Re/Im of H12) over 190 frequencies, four residual blocks doubling the
    channel count (4, 8, 16, 32) with kernel 5, max pooling after every
    block but the last, then dense layers (380, 190, 190) on the flattened
    encoding concatenated with the standardized elevation angle. Hidden
    activations are tanh; the output layer is sigmoid.
    """

    input_len: int = 190
    in_channels: int = 2
    block_channels: tuple = (4, 8, 16, 32)
    kernel: int = 5
    dense_widths: tuple = (380, 190, 190)
    expected_params: int | None = 406300

    def __post_init__(self):
        if self.dense_widths[-1] != self.input_len:
            raise ValueError(
                "last dense width must equal the grid length "
                f"({self.dense_widths[-1]} != {self.input_len})"
            )

    def encoder_lengths(self) -> list[int]:
        """Sequence length entering each block, plus the final length."""
        lengths = [self.input_len]
        length = self.input_len
        for i in range(len(self.block_channels)):
            if i < len(self.block_channels) - 1:  # pooled blocks
                length = length // 2
            lengths.append(length)
        return lengths

    @property
    def flat_width(self) -> int:
        return self.block_channels[-1] * self.encoder_lengths()[-1]


@dataclass
class FeatureStats:
    """Per-frequency means/stds of the Re/Im channels and the scalar angle.

    Computed on the training split only (population std); validation, test,
    and inference inputs are standardized with these same values.
    """

    mu_re: np.ndarray
    s_re: np.ndarray
    mu_im: np.ndarray
    s_im: np.ndarray
    mu_theta: float
    s_theta: float

    @classmethod
    def from_training_set(cls, re: np.ndarray, im: np.ndarray, theta: np.ndarray):
        stats = cls(
            mu_re=re.mean(axis=0),
            s_re=re.std(axis=0),
            mu_im=im.mean(axis=0),
            s_im=im.std(axis=0),
            mu_theta=float(theta.mean()),
            s_theta=float(theta.std()),
        )
        stats.validate()
        return stats

    def validate(self):
        for name, s in (("re", self.s_re), ("im", self.s_im)):
            bad = np.flatnonzero(~(np.asarray(s) > 0))
            if bad.size:
                raise ValueError(
                    f"zero standard deviation in {name} channel at feature "
                    f"indices {bad.tolist()}"
                )
        if not self.s_theta > 0:
            raise ValueError("zero standard deviation for the elevation angle")
        arrays = [self.mu_re, self.s_re, self.mu_im, self.s_im]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("non-finite standardization statistics")

    def standardize(self, re: np.ndarray, im: np.ndarray, theta):
        """Returns (features (n, 2, L), theta_std (n,))."""
        re = np.atleast_2d(re)
        im = np.atleast_2d(im)
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        features = np.stack(
            [(re - self.mu_re) / self.s_re, (im - self.mu_im) / self.s_im], axis=1
        )
        return features, (theta - self.mu_theta) / self.s_theta

    def to_dict(self) -> dict:
        return {
            "mu_re": np.asarray(self.mu_re).tolist(),
            "s_re": np.asarray(self.s_re).tolist(),
            "mu_im": np.asarray(self.mu_im).tolist(),
            "s_im": np.asarray(self.s_im).tolist(),
            "mu_theta": self.mu_theta,
            "s_theta": self.s_theta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureStats":
        return cls(
            mu_re=np.asarray(data["mu_re"], dtype=np.float64),
            s_re=np.asarray(data["s_re"], dtype=np.float64),
            mu_im=np.asarray(data["mu_im"], dtype=np.float64),
            s_im=np.asarray(data["s_im"], dtype=np.float64),
            mu_theta=float(data["mu_theta"]),
            s_theta=float(data["s_theta"]),
        )


class NetworkModel:
    """Residual conv encoder + dense decoder with owned standardization stats."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.config = config
        self.blocks = []
        in_ch = config.in_channels
        n_blocks = len(config.block_channels)
        for i, ch in enumerate(config.block_channels):
            pooled = i < n_blocks - 1
            self.blocks.append(ResidualBlock(in_ch, ch, config.kernel, pooled, rng))
            in_ch = ch
        widths = [config.flat_width + 1, *config.dense_widths]
        self.dense = [Dense(widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)]
        self.activations = [Tanh() for _ in self.dense[:-1]] + [Sigmoid()]
        self.stats: FeatureStats | None = None
        self.grid_f: np.ndarray | None = None  # frequency axis the model was trained on
        self._flat_shape = None

    # -- forward / backward -------------------------------------------------

    def forward(self, features: np.ndarray, theta_std: np.ndarray) -> np.ndarray:
        """features (B, in_channels, L) standardized; theta_std (B,). Returns (B, L)."""
        b, c, length = features.shape
        if (c, length) != (self.config.in_channels, self.config.input_len):
            raise ValueError(
                f"expected input shape (*, {self.config.in_channels}, "
                f"{self.config.input_len}), got {features.shape}"
            )
        x = features
        for block in self.blocks:
            x = block.forward(x)
        self._flat_shape = x.shape
        flat = x.reshape(b, -1)
        h = np.concatenate([flat, np.asarray(theta_std).reshape(b, 1)], axis=1)
        for layer, act in zip(self.dense, self.activations):
            h = act.forward(layer.forward(h))
        return h

    def backward(self, d_out: np.ndarray) -> None:
        d = d_out
        for layer, act in zip(reversed(self.dense), reversed(self.activations)):
            d = layer.backward(act.backward(d))
        d_flat = d[:, :-1]  # the theta input takes no gradient
        d = d_flat.reshape(self._flat_shape)
        for block in reversed(self.blocks):
            d = block.backward(d)

    # -- parameter access ---------------------------------------------------

    def named_params(self):
        for i, block in enumerate(self.blocks):
            for name, value, grad, is_weight in block.params():
                yield f"block{i}.{name}", value, grad, is_weight
        for i, layer in enumerate(self.dense):
            for name, value, grad, is_weight in layer.params():
                yield f"dense{i}.{name}", value, grad, is_weight

    def parameter_count(self) -> int:
        return sum(value.size for _, value, _, _ in self.named_params())

    def parameter_table(self) -> str:
        lines = [f"{'layer':<18}{'shape':<16}{'params':>8}"]
        for name, value, _, _ in self.named_params():
            lines.append(f"{name:<18}{str(value.shape):<16}{value.size:>8}")
        lines.append(f"{'total':<34}{self.parameter_count():>8}")
        return "\n".join(lines)

    def zero_grads(self):
        for _, _, grad, _ in self.named_params():
            grad[...] = 0.0

    def weight_square_sum(self) -> float:
        return float(
            sum(np.sum(v * v) for _, v, _, w in self.named_params() if w)
        )

    def get_weights(self) -> dict:
        return {name: value.copy() for name, value, _, _ in self.named_params()}

    def set_weights(self, weights: dict) -> None:
        for name, value, _, _ in self.named_params():
            value[...] = weights[name]

    # -- inference ----------------------------------------------------------

    def predict(self, h12: np.ndarray, theta_deg: float) -> np.ndarray:
        """Absorption spectrum from a conditioned transfer function."""
        if self.stats is None:
            raise ValueError("model has no standardization statistics attached")
        h12 = np.asarray(h12, dtype=np.complex128)
        if h12.shape != (self.config.input_len,):
            raise ValueError(
                f"H12 length {h12.shape} does not match the model grid "
                f"({self.config.input_len})"
            )
        features, theta_std = self.stats.standardize(
            h12.real[None, :], h12.imag[None, :], [theta_deg]
        )
        return self.forward(features, theta_std)[0]

    def predict_batch(self, re: np.ndarray, im: np.ndarray, theta_deg: np.ndarray,
                      chunk: int = 256) -> np.ndarray:
        if self.stats is None:
            raise ValueError("model has no standardization statistics attached")
        out = np.empty((re.shape[0], self.config.dense_widths[-1]))
        for lo in range(0, re.shape[0], chunk):
            hi = min(lo + chunk, re.shape[0])
            features, theta_std = self.stats.standardize(
                re[lo:hi], im[lo:hi], theta_deg[lo:hi]
            )
            out[lo:hi] = self.forward(features, theta_std)
        return out


def build_network(config: NetworkConfig = NetworkConfig(), seed: int = 0) -> NetworkModel:
    """Glorot-uniform initialized model; enforces the expected parameter count."""
    model = NetworkModel(config, np.random.default_rng(seed))
    if config.expected_params is not None:
        count = model.parameter_count()
        if count != config.expected_params:
            raise ValueError(
                f"configuration yields {count} parameters, expected "
                f"{config.expected_params}\n{model.parameter_table()}"
            )
    return model


def loss_and_gradients(model: NetworkModel, features, theta_std, labels,
                       l2: float = 1e-3):
    """Objective, plain MSE, and parameter gradients for one mini-batch.

    objective = mean squared error over (batch x outputs) plus l2 * sum of
    squared weights (biases excluded). Gradients accumulate into the model's
    grad buffers, which are zeroed first.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("empty batch")
    model.zero_grads()
    pred = model.forward(features, theta_std)
    err = pred - labels
    mse = float(np.mean(err * err))
    objective = mse + l2 * model.weight_square_sum()
    if not np.isfinite(objective):
        raise FloatingPointError("non-finite loss")
    model.backward(2.0 * err / err.size)
    if l2 != 0.0:
        for _, value, grad, is_weight in model.named_params():
            if is_weight:
                grad += 2.0 * l2 * value
    return objective, mse


# ---------------------------------------------------------------------------
# Serialization: magic + version + JSON header + float64 blobs + SHA-256.
# ---------------------------------------------------------------------------

def save_model(model: NetworkModel, path) -> None:
    if model.stats is None:
        raise ValueError("refusing to save a model without standardization stats")
    arrays = [(name, value) for name, value, _, _ in model.named_params()]
    header = {
        "config": {
            "input_len": model.config.input_len,
            "in_channels": model.config.in_channels,
            "block_channels": list(model.config.block_channels),
            "kernel": model.config.kernel,
            "dense_widths": list(model.config.dense_widths),
            "expected_params": model.config.expected_params,
        },
        "stats": model.stats.to_dict(),
        "grid_f_hz": None if model.grid_f is None else np.asarray(model.grid_f).tolist(),
        "arrays": [{"name": n, "shape": list(v.shape)} for n, v in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in arrays)
    payload = (
        MODEL_MAGIC
        + struct.pack("<HHI", MODEL_VERSION, 0, len(header_bytes))
        + header_bytes
        + body
    )
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + digest)


def load_model(path) -> NetworkModel:
    raw = Path(path).read_bytes()
    if len(raw) < 44 or raw[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    payload, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise ValueError(f"{path}: checksum mismatch")
    version, _, header_len = struct.unpack_from("<HHI", payload, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    offset = 12
    header = json.loads(payload[offset : offset + header_len].decode())
    offset += header_len
    cfg_d = header["config"]
    config = NetworkConfig(
        input_len=cfg_d["input_len"],
        in_channels=cfg_d["in_channels"],
        block_channels=tuple(cfg_d["block_channels"]),
        kernel=cfg_d["kernel"],
        dense_widths=tuple(cfg_d["dense_widths"]),
        expected_params=cfg_d["expected_params"],
    )
    model = NetworkModel(config, np.random.default_rng(0))
    entries = {e["name"]: tuple(e["shape"]) for e in header["arrays"]}
    for name, value, _, _ in model.named_params():
        shape = entries.get(name)
        if shape != value.shape:
            raise ValueError(f"{path}: array {name} has shape {shape}, expected {value.shape}")
        n_bytes = value.size * 8
        value[...] = np.frombuffer(
            payload[offset : offset + n_bytes], dtype="<f8"
        ).reshape(value.shape)
        offset += n_bytes
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in model file")
    model.stats = FeatureStats.from_dict(header["stats"])
    grid = header.get("grid_f_hz")
    model.grid_f = None if grid is None else np.asarray(grid, dtype=np.float64)
    return model
