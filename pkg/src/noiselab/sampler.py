"""Deterministic and ancestral sampling, guidance, and fixed-point inversion.

The deterministic sampler walks an evenly spaced timestep subsequence
T = tau_N > ... > tau_0 = 0, applying x_prev = a x + b eps_hat at each
pair. Guidance replaces the plain conditional prediction with

    eps_c + w (eps_c - eps_null) + s (eps_c - eps_degraded)

where the degraded predictor is an intentionally weaker (early-training)
checkpoint. Inversion runs the same subsequence upward, solving each
substep equation for the higher-noise state by fixed-point iteration
seeded with the usual linear approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule
from .tensorio import assert_finite


class GuidanceError(ValueError):
    pass


class InversionDivergedError(RuntimeError):
    pass


@dataclass
class LatentState:
    x: np.ndarray
    t: int


@dataclass
class GuidanceSpec:
    w: float = 0.0           # conditional/unconditional contrast weight
    s: float = 0.0           # contrast weight against the degraded predictor
    degraded: object = None  # weaker denoiser checkpoint, required when s > 0


@dataclass
class SamplerConfig:
    N: int = 10          # guidance-free denoising steps
    N_guided: int = 20   # denoising steps when guidance is active
    eta: float = 0.0     # stochasticity; 0 keeps the pipeline deterministic


@dataclass
class InversionConfig:
    fixed_point_iters: int = 5


def _col(w, ndim: int):
    """Reshape a per-row scale vector so it broadcasts over image axes."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 0:
        return float(w)
    return w.reshape(w.shape + (1,) * (ndim - 1))


def guided_score(net, x: np.ndarray, t, c, g: GuidanceSpec) -> np.ndarray:
    """Guided noise prediction; skips branches whose scale is identically zero."""
    eps_c = net(x, t, c)
    out = eps_c
    w = np.asarray(g.w, dtype=np.float64)
    s = np.asarray(g.s, dtype=np.float64)
    if np.any(w != 0.0):
        out = out + _col(w, x.ndim) * (eps_c - net(x, t, None))
    if np.any(s != 0.0):
        if g.degraded is None:
            raise GuidanceError("degraded-predictor guidance requested but no predictor attached")
        out = out + _col(s, x.ndim) * (eps_c - g.degraded(x, t, c))
    return out


def ddim_step(state: LatentState, eps_pred: np.ndarray, schedule: NoiseSchedule,
              t_prev: int) -> LatentState:
    if t_prev >= state.t:
        raise ValueError(f"timesteps must decrease: {state.t} -> {t_prev}")
    a, b = schedule.coeffs(state.t, t_prev)
    return LatentState(x=a * state.x + b * eps_pred, t=t_prev)


def ddpm_step(state: LatentState, eps_pred: np.ndarray, schedule: NoiseSchedule,
              t_prev: int, z: np.ndarray, eta: float = 1.0) -> LatentState:
    """Ancestral update; with sigma = 0 this reproduces ddim_step bitwise."""
    if t_prev >= state.t:
        raise ValueError(f"timesteps must decrease: {state.t} -> {t_prev}")
    at, ap = schedule.alpha[state.t], schedule.alpha[t_prev]
    sigma = schedule.sigma(state.t, t_prev, eta)
    a = np.sqrt(ap / at)
    b = np.sqrt(1.0 - ap - sigma ** 2) - a * np.sqrt(1.0 - at)
    return LatentState(x=a * state.x + b * eps_pred + sigma * z, t=t_prev)


def denoise(xT: np.ndarray, c, net, schedule: NoiseSchedule, cfg: SamplerConfig,
            guidance: GuidanceSpec | None = None, trajectory: list | None = None) -> np.ndarray:
    """Deterministic rollout to an image; guided rollouts use cfg.N_guided steps."""
    x = np.asarray(xT, dtype=np.float64)
    taus = schedule.taus(cfg.N_guided if guidance is not None else cfg.N)
    state = LatentState(x=x, t=taus[0])
    if trajectory is not None:
        trajectory.append(state)
    for t, t_prev in zip(taus, taus[1:]):
        if guidance is not None:
            eps = guided_score(net, state.x, t, c, guidance)
        else:
            eps = net(state.x, t, c)
        state = ddim_step(state, eps, schedule, t_prev)
        if trajectory is not None:
            trajectory.append(state)
    return assert_finite(state.x, "denoised image")


def invert(x0: np.ndarray, c, net, schedule: NoiseSchedule, inv: InversionConfig,
           cfg: SamplerConfig) -> np.ndarray:
    """Recover the starting noise whose guidance-free rollout reproduces x0.

    Walks the sampling subsequence upward. Each substep solves
    x_lo = a x_hi + b eps(x_hi, t_hi) for x_hi: the seed replaces
    eps(x_hi) with eps(x_lo) (plain linear inversion), then
    fixed_point_iters rounds re-evaluate eps at the current estimate.
    Never applies guidance.
    """
    x = np.asarray(x0, dtype=np.float64)
    taus = schedule.taus(cfg.N)
    for i in reversed(range(len(taus) - 1)):
        t_hi, t_lo = taus[i], taus[i + 1]
        a, b = schedule.coeffs(t_hi, t_lo)
        x_hi = (x - b * net(x, t_hi, c)) / a
        r_prev = np.inf
        growth = 0
        for _ in range(inv.fixed_point_iters):
            x_new = (x - b * net(x_hi, t_hi, c)) / a
            r = float(np.sqrt(np.mean((x_new - x_hi) ** 2)))
            if r > 3.0 * r_prev:
                growth += 1
                if growth >= 2:
                    raise InversionDivergedError(
                        f"fixed-point residual grew 3x twice in a row at t={t_hi} (r={r:.3e})")
            else:
                growth = 0
            x_hi, r_prev = x_new, r
        x = x_hi
    return assert_finite(x, "inverted noise")
