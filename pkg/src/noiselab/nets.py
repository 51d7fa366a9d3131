"""Noise-prediction and noise-refinement networks.

Both are small fully connected nets over the flattened image plus a
sinusoidal time embedding and a one-hot condition block (one extra slot
for the null condition). The refiner adds its output to its input and
starts with a zero output layer, so before training it is exactly the
identity map.

Forward passes are written once against the dual-mode autodiff helpers:
call them with plain arrays for fast inference, or with Var-wrapped
parameters/inputs to build a gradient tape. Both paths execute the same
numpy ops, so their outputs are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .autodiff import Var, concat, silu, tanh, value_of
from .rng import RngStream
from .tensorio import assert_finite, tensor_bytes, tensor_from_bytes


@dataclass(frozen=True)
class ArchSpec:
    image_shape: tuple = (1, 16, 16)
    width: int = 512
    hidden_layers: int = 3
    time_dim: int = 32
    num_classes: int = 4
    max_t: int = 100
    activation: str = "silu"

    @property
    def image_dim(self) -> int:
        c, h, w = self.image_shape
        return c * h * w

    @property
    def null_id(self) -> int:
        return self.num_classes

    @property
    def input_dim(self) -> int:
        return self.image_dim + self.time_dim + self.num_classes + 1


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps; shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def condition_ids(c, batch: int, arch: ArchSpec) -> np.ndarray:
    """Normalize a condition argument to per-row integer ids (null = num_classes)."""
    if c is None:
        ids = np.full(batch, arch.null_id, dtype=np.intp)
    else:
        ids = np.asarray(c, dtype=np.intp)
        if ids.ndim == 0:
            ids = np.full(batch, int(ids), dtype=np.intp)
    if ids.shape != (batch,):
        raise ValueError(f"condition batch mismatch: {ids.shape} vs ({batch},)")
    if np.any((ids < 0) | (ids > arch.null_id)):
        raise ValueError(f"condition id out of range [0, {arch.null_id}]")
    return ids


def condition_onehot(c, batch: int, arch: ArchSpec) -> np.ndarray:
    ids = condition_ids(c, batch, arch)
    onehot = np.zeros((batch, arch.num_classes + 1))
    onehot[np.arange(batch), ids] = 1.0
    return onehot


class _MLP:
    """Shared backbone: parameter storage, init, and the layered forward."""

    kind = "mlp"

    def __init__(self, arch: ArchSpec, rng: RngStream, zero_output: bool = False):
        self.arch = arch
        self.eval_count = 0
        self.params: dict[str, np.ndarray] = {}
        din = arch.input_dim
        for i in range(arch.hidden_layers):
            self.params[f"w{i}"] = rng.normal((din, arch.width)) / np.sqrt(din)
            self.params[f"b{i}"] = np.zeros(arch.width)
            din = arch.width
        if zero_output:
            self.params["w_out"] = np.zeros((din, arch.image_dim))
        else:
            self.params["w_out"] = rng.normal((din, arch.image_dim)) / np.sqrt(din)
        self.params["b_out"] = np.zeros(arch.image_dim)

    def _mlp(self, inp, params):
        act = silu if self.arch.activation == "silu" else tanh
        h = inp
        for i in range(self.arch.hidden_layers):
            h = act(h @ params[f"w{i}"] + params[f"b{i}"])
        return h @ params["w_out"] + params["b_out"]

    def _embed(self, x_flat, t, c, batch: int):
        if np.any(np.asarray(t) < 1) or np.any(np.asarray(t) > self.arch.max_t):
            raise ValueError(f"timestep out of range [1, {self.arch.max_t}]: {t}")
        temb = time_embedding(np.broadcast_to(np.asarray(t), (batch,)), self.arch.time_dim)
        onehot = condition_onehot(c, batch, self.arch)
        return concat([x_flat, temb, onehot], axis=1)

    # -- parameter plumbing -------------------------------------------------

    def param_vars(self) -> dict[str, Var]:
        return {k: Var(v) for k, v in self.params.items()}

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.params])

    def load_param_vector(self, vec: np.ndarray) -> None:
        off = 0
        for k, p in self.params.items():
            n = p.size
            self.params[k] = np.ascontiguousarray(vec[off:off + n]).reshape(p.shape)
            off += n
        if off != vec.size:
            raise ValueError(f"parameter vector length {vec.size} != expected {off}")

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self):
        dup = object.__new__(type(self))
        dup.arch = self.arch
        dup.eval_count = 0
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup

    def reset_evals(self) -> None:
        self.eval_count = 0


class DenoiserNet(_MLP):
    """Predicts the noise content of a diffused image at timestep t under condition c."""

    kind = "denoiser"

    def forward_flat(self, x_flat, t, c, params=None):
        params = self.params if params is None else params
        batch = value_of(x_flat).shape[0]
        return self._mlp(self._embed(x_flat, t, c, batch), params)

    def __call__(self, x: np.ndarray, t, c) -> np.ndarray:
        self.eval_count += 1
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 3
        xb = x[None] if single else x
        out = self.forward_flat(xb.reshape(xb.shape[0], -1), t, c)
        out = assert_finite(out, "denoiser output").reshape(xb.shape)
        return out[0] if single else out


class RefinerNet(_MLP):
    """Residual map on initial noise: g(x) = x + f(x, c), evaluated at the top timestep."""

    kind = "refiner"

    def __init__(self, arch: ArchSpec, rng: RngStream):
        super().__init__(arch, rng, zero_output=True)

    def forward_flat(self, x_flat, c, params=None):
        params = self.params if params is None else params
        batch = value_of(x_flat).shape[0]
        return x_flat + self._mlp(self._embed(x_flat, self.arch.max_t, c, batch), params)

    def __call__(self, x: np.ndarray, c) -> np.ndarray:
        self.eval_count += 1
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 3
        xb = x[None] if single else x
        out = self.forward_flat(xb.reshape(xb.shape[0], -1), c)
        out = assert_finite(out, "refiner output").reshape(xb.shape)
        return out[0] if single else out


# -- analytic stand-ins used by verification probes -------------------------

class ConstantDenoiser:
    """eps(x, t, c) = const; its input Jacobian is exactly zero."""

    kind = "constant-stub"

    def __init__(self, value, image_shape=(1, 16, 16)):
        self.arch = ArchSpec(image_shape=image_shape)
        self.value = np.broadcast_to(np.asarray(value, dtype=np.float64),
                                     (self.arch.image_dim,)).copy()
        self.eval_count = 0

    def forward_flat(self, x_flat, t, c, params=None):
        batch = value_of(x_flat).shape[0]
        return 0.0 * x_flat + np.broadcast_to(self.value, (batch, self.value.size))

    def __call__(self, x, t, c):
        self.eval_count += 1
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 3
        xb = x[None] if single else x
        out = np.broadcast_to(self.value, (xb.shape[0], self.value.size)).reshape(xb.shape).copy()
        return out[0] if single else out

    def reset_evals(self):
        self.eval_count = 0


class LinearDenoiser:
    """eps(x, t, c) = eta*x + offset; its input Jacobian is exactly eta*I."""

    kind = "linear-stub"

    def __init__(self, eta: float, offset=0.0, image_shape=(1, 16, 16)):
        self.arch = ArchSpec(image_shape=image_shape)
        self.eta = float(eta)
        self.offset = np.broadcast_to(np.asarray(offset, dtype=np.float64),
                                      (self.arch.image_dim,)).copy()
        self.eval_count = 0

    def forward_flat(self, x_flat, t, c, params=None):
        return self.eta * x_flat + self.offset[None, :]

    def __call__(self, x, t, c):
        self.eval_count += 1
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 3
        xb = x[None] if single else x
        out = self.eta * xb.reshape(xb.shape[0], -1) + self.offset[None, :]
        out = out.reshape(xb.shape)
        return out[0] if single else out

    def reset_evals(self):
        self.eval_count = 0


# -- checkpoints -------------------------------------------------------------

_KINDS = {"denoiser": DenoiserNet, "refiner": RefinerNet}


def save_checkpoint(path, net, step: int = 0, seed: int = 0) -> None:
    """One JSON header line, then the framed parameter vector. Bit-exact round trip."""
    header = {"kind": net.kind, "arch": asdict(net.arch), "step": int(step), "seed": int(seed)}
    blob = json.dumps(header, sort_keys=True).encode() + b"\n" + tensor_bytes(net.param_vector())
    Path(path).write_bytes(blob)


def load_checkpoint(path):
    """Returns (net, header dict)."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    arch_fields = dict(header["arch"])
    arch_fields["image_shape"] = tuple(arch_fields["image_shape"])
    arch = ArchSpec(**arch_fields)
    cls = _KINDS[header["kind"]]
    if cls is RefinerNet:
        net = RefinerNet(arch, RngStream(0))
    else:
        net = DenoiserNet(arch, RngStream(0))
    vec, _ = tensor_from_bytes(raw, nl + 1)
    net.load_param_vector(vec)
    return net, header
