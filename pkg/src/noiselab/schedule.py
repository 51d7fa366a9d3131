"""Diffusion noise schedule and its deterministic-sampler coefficients.

The schedule stores the cumulative signal factors alpha[0..T] with
alpha[0] = 1 and alpha[t] = prod_{i<=t} (1 - beta_i). For a sampling
substep from timestep t down to t_prev the deterministic update is

    x_prev = a * x_t + b * eps_hat(x_t, t)

with a = sqrt(alpha[t_prev] / alpha[t]) and
b = sqrt(1 - alpha[t_prev]) - a * sqrt(1 - alpha[t]). The positive
quantity gamma = -b shows up when bounding how perturbations of a
trajectory propagate through the rollout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorio import assert_finite


@dataclass
class NoiseSchedule:
    T: int
    alpha: np.ndarray  # length T+1, alpha[0] == 1, strictly decreasing

    def coeffs(self, t: int, t_prev: int) -> tuple[float, float]:
        """(a, b) for the substep pair (t, t_prev)."""
        a = np.sqrt(self.alpha[t_prev] / self.alpha[t])
        b = np.sqrt(1.0 - self.alpha[t_prev]) - a * np.sqrt(1.0 - self.alpha[t])
        return float(a), float(b)

    def gamma(self, t: int, t_prev: int) -> float:
        a, b = self.coeffs(t, t_prev)
        return -b

    def sigma(self, t: int, t_prev: int, eta: float = 1.0) -> float:
        """Stochastic step size; eta=1 is the ancestral posterior scale."""
        at, ap = self.alpha[t], self.alpha[t_prev]
        return float(eta * np.sqrt((1.0 - ap) / (1.0 - at)) * np.sqrt(1.0 - at / ap))

    def taus(self, n_steps: int) -> list[int]:
        """Evenly spaced substep timesteps T = tau_N > ... > tau_0 = 0."""
        if not 1 <= n_steps <= self.T:
            raise ValueError(f"step count must be in [1, {self.T}], got {n_steps}")
        ts = [round(self.T * i / n_steps) for i in range(n_steps, -1, -1)]
        if any(ts[i] <= ts[i + 1] for i in range(len(ts) - 1)):
            raise ValueError(f"degenerate substep sequence for N={n_steps}, T={self.T}")
        return ts


def build_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear-beta schedule; beta runs from beta_start to beta_end over T steps."""
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, T)
    alpha = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(T=T, alpha=alpha)


def forward_diffuse(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Jump x0 to timestep t: sqrt(alpha_t) x0 + sqrt(1 - alpha_t) eps.

    t may be a scalar or a per-row integer array matching x0's batch axis.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    t_arr = np.asarray(t)
    if np.any((t_arr < 1) | (t_arr > schedule.T)):
        raise ValueError(f"timestep out of range [1, {schedule.T}]: {t}")
    a = schedule.alpha[t_arr]
    if t_arr.ndim == 1:
        a = a.reshape((-1,) + (1,) * (x0.ndim - 1))
    out = np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps
    return assert_finite(out, "forward_diffuse output")
