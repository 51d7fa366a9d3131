"""Training loops: the base denoiser and the residual noise refiner.

The base model minimizes the usual noise-prediction MSE over uniformly
sampled timesteps, with a fraction of conditions dropped to the null
slot so the unconditional branch is trained too. It also emits an
early-training copy of itself to serve as the degraded predictor for
contrast guidance.

The refiner minimizes the image-space distance between its rollout and
the guided target. In the default stop-gradient mode the denoiser's
outputs are treated as constants at every rollout step, so gradients
reach the refiner only through the accumulated signal-scaling chain;
the full-gradient mode differentiates through the denoiser as well and
exists for comparison probes.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Var, detach, value_of
from .nets import ArchSpec, DenoiserNet, RefinerNet
from .optim import Adam
from .pairs import NoisePair
from .rng import derive_stream
from .sampler import SamplerConfig
from .schedule import NoiseSchedule, forward_diffuse
from .shapes import NUM_CLASSES, ShapesDataset


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 20000
    batch: int = 64
    lr: float = 1e-3
    lr_final: float = 0.0  # 0 disables decay; otherwise linear lr -> lr_final
    N: int = 10
    N_guided: int = 20
    filter_q: float = 25.0
    w_range: tuple = (3.0, 5.0)
    s_range: tuple = (2.0, 3.0)
    seed: int = 0
    null_cond_prob: float = 0.1
    early_frac: float = 0.05
    log_every: int = 100

    def __post_init__(self):
        if not 0.0 < self.filter_q <= 100.0:
            raise ValueError(f"filter quantile must be in (0, 100], got {self.filter_q}")

    def lr_at(self, step: int) -> float:
        if not self.lr_final:
            return self.lr
        frac = step / max(1, self.steps)
        return self.lr + (self.lr_final - self.lr) * frac


class _CsvLog:
    def __init__(self, path):
        self.path = Path(path) if path else None
        self.rows = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
            self._w = csv.writer(self._fh, lineterminator="\n")
            self._w.writerow(["step", "loss", "grad_norm", "wall_ms"])

    def add(self, step, loss, grad_norm, wall_ms):
        self.rows.append((step, loss, grad_norm, wall_ms))
        if self.path:
            self._w.writerow([step, f"{loss:.8f}", f"{grad_norm:.8f}", f"{wall_ms:.3f}"])

    def close(self):
        if self.path:
            self._fh.close()


def _grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None)))


def train_base(dataset: ShapesDataset, schedule: NoiseSchedule, cfg: TrainConfig,
               arch: ArchSpec | None = None, log_path=None) -> tuple[DenoiserNet, DenoiserNet]:
    """Train the noise predictor; returns (model, early degraded copy)."""
    if arch is None:
        arch = ArchSpec(image_shape=dataset.image_shape, num_classes=NUM_CLASSES,
                        max_t=schedule.T)
    net = DenoiserNet(arch, derive_stream(cfg.seed, "base-init"))
    data_rng = derive_stream(cfg.seed, "base-data")
    opt = Adam(net.params, lr=cfg.lr)
    early_step = max(1, round(cfg.early_frac * cfg.steps))
    early = net.copy()  # placeholder until early_step is reached
    log = _CsvLog(log_path)
    t0 = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        x0, cls = dataset.sample(data_rng, cfg.batch)
        t = data_rng.integers(1, schedule.T + 1, cfg.batch)
        eps = data_rng.normal(x0.shape)
        drop = data_rng.uniform(0.0, 1.0, cfg.batch) < cfg.null_cond_prob
        cond = np.where(drop, arch.null_id, cls)
        xt = forward_diffuse(x0, t, eps, schedule)

        pvars = net.param_vars()
        pred = net.forward_flat(xt.reshape(cfg.batch, -1), t, cond, pvars)
        diff = pred - eps.reshape(cfg.batch, -1)
        loss = (diff * diff).mean()
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise TrainingDivergedError(
                f"base training loss is non-finite at step {step} (lr={cfg.lr}, batch={cfg.batch})")
        loss.backward()
        grads = {k: v.grad for k, v in pvars.items()}
        opt.lr = cfg.lr_at(step)
        opt.step(grads)

        if step == early_step:
            early = net.copy()
        if step % cfg.log_every == 0 or step == cfg.steps:
            log.add(step, loss_val, _grad_norm(grads), (time.perf_counter() - t0) * 1e3)
            t0 = time.perf_counter()
    log.close()
    return net, early


# -- refiner rollouts --------------------------------------------------------

def msd_rollout(refiner: RefinerNet, net, xT: np.ndarray, c, schedule: NoiseSchedule,
                cfg: SamplerConfig, refiner_params: dict | None = None):
    """Stop-gradient rollout: returns (x0 Var, refiner param Vars).

    The denoiser output at every step is a constant of the tape, so the
    gradient with respect to the refiner flows only through the per-step
    signal scaling. Values are bit-identical to the plain sampler applied
    to refiner(xT).
    """
    pvars = refiner.param_vars() if refiner_params is None else refiner_params
    batch = xT.shape[0]
    shape = xT.shape
    x = refiner.forward_flat(xT.reshape(batch, -1), c, pvars)
    taus = schedule.taus(cfg.N)
    for t, t_prev in zip(taus, taus[1:]):
        eps = net(value_of(x).reshape(shape), t, c)
        a, b = schedule.coeffs(t, t_prev)
        x = a * x + b * eps.reshape(batch, -1)
    return x, pvars


def msd_rollout_tape(refiner: RefinerNet, net: DenoiserNet, xT: np.ndarray, c,
                     schedule: NoiseSchedule, cfg: SamplerConfig):
    """As msd_rollout, but keeps the denoiser parameters on the tape and
    detaches its outputs explicitly; used to demonstrate that the frozen
    parameters receive exactly zero gradient."""
    pvars = refiner.param_vars()
    tvars = net.param_vars()
    batch = xT.shape[0]
    x = refiner.forward_flat(xT.reshape(batch, -1), c, pvars)
    taus = schedule.taus(cfg.N)
    for t, t_prev in zip(taus, taus[1:]):
        eps = detach(net.forward_flat(x, t, c, tvars))
        a, b = schedule.coeffs(t, t_prev)
        x = a * x + b * eps
    return x, pvars, tvars


def full_rollout(refiner: RefinerNet, net, xT: np.ndarray, c, schedule: NoiseSchedule,
                 cfg: SamplerConfig, refiner_params: dict | None = None):
    """Rollout differentiated through the denoiser at every step."""
    pvars = refiner.param_vars() if refiner_params is None else refiner_params
    batch = xT.shape[0]
    x = refiner.forward_flat(xT.reshape(batch, -1), c, pvars)
    taus = schedule.taus(cfg.N)
    for t, t_prev in zip(taus, taus[1:]):
        eps = net.forward_flat(x, t, c)
        a, b = schedule.coeffs(t, t_prev)
        x = a * x + b * eps
    return x, pvars


def train_refiner(refiner: RefinerNet, net: DenoiserNet, pairs: list[NoisePair],
                  schedule: NoiseSchedule, cfg: TrainConfig, mode: str = "msd",
                  log_path=None) -> RefinerNet:
    """Fit the refiner so its rollout matches the guided targets (pixel MSE)."""
    if mode not in ("msd", "full_grad"):
        raise ValueError(f"unknown mode {mode!r}")
    rollout = msd_rollout if mode == "msd" else full_rollout
    scfg = SamplerConfig(N=cfg.N, N_guided=cfg.N_guided)
    opt = Adam(refiner.params, lr=cfg.lr)
    order_rng = derive_stream(cfg.seed, f"refiner-order-{mode}")
    order = np.arange(len(pairs))
    log = _CsvLog(log_path)
    t0 = time.perf_counter()
    pos = len(pairs)  # force an initial shuffle
    for step in range(1, cfg.steps + 1):
        take = []
        while len(take) < cfg.batch:
            if pos >= len(order):
                order_rng.shuffle(order)
                pos = 0
            take.append(order[pos])
            pos += 1
        batch = [pairs[i] for i in take]
        xT = np.stack([p.xT for p in batch])
        cs = np.array([p.c for p in batch], dtype=np.intp)
        target = np.stack([p.x0_guide for p in batch]).reshape(len(batch), -1)

        x0, pvars = rollout(refiner, net, xT, cs, schedule, scfg)
        diff = x0 - target
        loss = (diff * diff).mean()
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise TrainingDivergedError(
                f"refiner training loss is non-finite at step {step} (mode={mode}, lr={cfg.lr})")
        loss.backward()
        grads = {k: v.grad for k, v in pvars.items()}
        opt.lr = cfg.lr_at(step)
        opt.step(grads)
        if step % cfg.log_every == 0 or step == cfg.steps:
            log.add(step, loss_val, _grad_norm(grads), (time.perf_counter() - t0) * 1e3)
            t0 = time.perf_counter()
    log.close()
    return refiner
