"""Diagnostic probes: noise-difference statistics, frequency-band studies,
Jacobian structure, gradient-approximation checks, interpolation, and a
kernel two-sample distance for sample quality.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Var
from .fourier import band_mask, fft2, hermitian_symmetrize, ifft2, FrequencySpectrum
from .rng import RngStream, derive_stream
from .sampler import InversionConfig, SamplerConfig, denoise, invert
from .schedule import NoiseSchedule
from .training import full_rollout, msd_rollout


# -- small report I/O helpers -------------------------------------------------

def write_csv(path, header, rows) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path, obj) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float))


# -- elementwise difference statistics ----------------------------------------

def diff_histogram(a: np.ndarray, b: np.ndarray, bins: int = 50,
                   value_range=None) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram of |a - b| over all elements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    density, edges = np.histogram(np.abs(a - b).ravel(), bins=bins,
                                  range=value_range, density=True)
    return density, edges


# -- frequency-band energy -----------------------------------------------------

DEFAULT_BAND_EDGES = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class BandReport:
    edges: tuple
    energies: np.ndarray            # per-band spectral energy of the probe diff
    fractions: np.ndarray           # energies / total
    baseline_fractions: np.ndarray  # white-noise mean band fractions
    baseline_std: np.ndarray

    def rows(self):
        return [(self.edges[i], self.edges[i + 1], self.energies[i], self.fractions[i],
                 self.baseline_fractions[i], self.baseline_std[i])
                for i in range(len(self.energies))]

    def summary(self):
        return {
            "edges": list(self.edges),
            "fractions": self.fractions.tolist(),
            "baseline_fractions": self.baseline_fractions.tolist(),
            "low_band_ratio": float(self.fractions[0] / self.baseline_fractions[0]),
        }


def _band_energies(img: np.ndarray, edges) -> np.ndarray:
    spec = fft2(img)
    power = (spec.real ** 2 + spec.imag ** 2).sum(axis=0) / (spec.height * spec.width)
    out = np.empty(len(edges) - 1)
    for i in range(len(edges) - 1):
        mask = band_mask((spec.height, spec.width), edges[i], edges[i + 1])
        if not mask.any():
            raise ValueError(f"band [{edges[i]}, {edges[i + 1]}) selects no bins")
        out[i] = float(power[mask].sum())
    covers_all = edges[0] == 0.0 and edges[-1] >= 1.0
    if covers_all and abs(out.sum() - power.sum()) > 1e-9 * max(1.0, power.sum()):
        raise AssertionError("band edges do not partition the spectrum")
    return out


def band_energy(diff: np.ndarray, edges=DEFAULT_BAND_EDGES, rng: RngStream | None = None,
                baseline_sims: int = 1000) -> BandReport:
    """Spectral energy of a difference image per radial band, with a
    Monte Carlo white-noise baseline for the band fractions."""
    diff = np.asarray(diff, dtype=np.float64)
    if diff.ndim == 2:
        diff = diff[None]
    energies = _band_energies(diff, edges)
    fractions = energies / energies.sum()
    rng = rng if rng is not None else derive_stream(0, "band-baseline")
    base = np.empty((baseline_sims, len(edges) - 1))
    for i in range(baseline_sims):
        w = rng.normal(diff.shape) - rng.normal(diff.shape)
        e = _band_energies(w, edges)
        base[i] = e / e.sum()
    return BandReport(edges=tuple(edges), energies=energies, fractions=fractions,
                      baseline_fractions=base.mean(axis=0), baseline_std=base.std(axis=0))


def band_swap_probe(xT: np.ndarray, xhatT: np.ndarray, band, mode: str = "replace_band") -> np.ndarray:
    """Hybrid noise built in the frequency domain.

    replace_band / keep_and_reinit: refined components inside the band,
    original components outside (the original IS the standard-normal
    reinitialization). keep_only: refined components inside the band and
    zeros outside. band=None means the empty set.
    """
    if mode not in ("replace_band", "keep_only", "keep_and_reinit"):
        raise ValueError(f"unknown mode {mode!r}")
    xT = np.asarray(xT, dtype=np.float64)
    xhatT = np.asarray(xhatT, dtype=np.float64)
    if xT.shape != xhatT.shape:
        raise ValueError(f"shape mismatch: {xT.shape} vs {xhatT.shape}")
    if band is None:
        if mode == "keep_only":
            return np.zeros_like(xT)
        return xT.copy()
    sq = xT[None] if xT.ndim == 2 else xT
    sA = fft2(sq)
    sB = fft2(xhatT[None] if xhatT.ndim == 2 else xhatT)
    mask = band_mask((sA.height, sA.width), band[0], band[1])
    if mode == "keep_only":
        cr = np.where(mask, sB.real, 0.0)
        ci = np.where(mask, sB.imag, 0.0)
    else:
        cr = np.where(mask, sB.real, sA.real)
        ci = np.where(mask, sB.imag, sA.imag)
    spec = hermitian_symmetrize(FrequencySpectrum(sA.height, sA.width, cr, ci))
    out = ifft2(spec, imag_tol=1e-9)
    return out[0] if xT.ndim == 2 else out


# -- Jacobian structure --------------------------------------------------------

@dataclass
class JacobianRow:
    t: int
    mean_abs_diag: float
    mean_abs_offdiag: float
    ratio: float
    jacobian: np.ndarray


def jacobian_probe(net, x: np.ndarray, t: int, c) -> JacobianRow:
    """Exact input Jacobian of the noise prediction via one batched backward
    pass per output coordinate (rows stacked as a tiled batch)."""
    x = np.asarray(x, dtype=np.float64)
    dim = x.size
    tiled = Var(np.tile(x.reshape(1, -1), (dim, 1)))
    out = net.forward_flat(tiled, t, c)
    picked = (out * np.eye(dim)).sum()
    picked.backward()
    jac = tiled.grad.copy()
    diag = np.abs(np.diag(jac))
    off = np.abs(jac[~np.eye(dim, dtype=bool)])
    mean_off = float(off.mean())
    mean_diag = float(diag.mean())
    ratio = mean_diag / mean_off if mean_off > 0 else np.inf
    return JacobianRow(t=int(t), mean_abs_diag=mean_diag, mean_abs_offdiag=mean_off,
                       ratio=float(ratio), jacobian=jac)


# -- schedule constants ----------------------------------------------------------

def gamma_curve(schedule: NoiseSchedule) -> np.ndarray:
    """Per-step gamma_t / sqrt(alpha_{t-1}) over consecutive base steps t=1..T."""
    vals = np.empty(schedule.T)
    for t in range(1, schedule.T + 1):
        vals[t - 1] = schedule.gamma(t, t - 1) / np.sqrt(schedule.alpha[t - 1])
    return vals


def predicted_gradient_ratio(schedule: NoiseSchedule, n_steps: int, etas) -> float:
    """Predicted full/stop-gradient ratio for per-step input-Jacobian
    constants `etas` (top step first). Uses the exact per-step chain
    constants, which reduces to the telescoped product; with a single
    shared eta and one step the simple sum form coincides."""
    taus = schedule.taus(n_steps)
    etas = np.broadcast_to(np.asarray(etas, dtype=np.float64), (n_steps,))
    chain = 1.0
    total = 0.0
    for (t, t_prev), eta in zip(zip(taus, taus[1:]), etas):
        a, b = schedule.coeffs(t, t_prev)
        gamma = -b
        total += gamma * (eta * chain) / np.sqrt(schedule.alpha[t_prev])
        chain *= a - gamma * eta
    return float(1.0 - np.sqrt(schedule.alpha[taus[0]]) * total)


# -- gradient-approximation verification ----------------------------------------

@dataclass
class Prop2Report:
    cosines: np.ndarray
    k_hats: np.ndarray
    eta_hats: np.ndarray
    k_pred: float

    def summary(self):
        return {
            "mean_cosine": float(self.cosines.mean()),
            "min_cosine": float(self.cosines.min()),
            "mean_k_hat": float(self.k_hats.mean()),
            "k_pred": self.k_pred,
            "eta_hats": self.eta_hats.tolist(),
        }


def _flat_grads(pvars: dict) -> np.ndarray:
    parts = []
    for k in pvars:
        g = pvars[k].grad
        parts.append(np.zeros(pvars[k].value.size) if g is None else g.ravel())
    vec = np.concatenate(parts)
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError("non-finite gradient in verification rollout")
    return vec


def verify_prop2(refiner, net, schedule: NoiseSchedule, batches, n_steps: int) -> Prop2Report:
    """Compare full-gradient and stop-gradient training signals on identical
    batches. `batches` is a list of (xT, conditions, target_images)."""
    scfg = SamplerConfig(N=n_steps)
    cosines, k_hats = [], []
    for xT, cs, target in batches:
        tgt = np.asarray(target).reshape(xT.shape[0], -1)
        grads = {}
        for label, rollout in (("full", full_rollout), ("msd", msd_rollout)):
            x0, pvars = rollout(refiner, net, xT, cs, schedule, scfg)
            diff = x0 - tgt
            ((diff * diff).mean()).backward()
            grads[label] = _flat_grads(pvars)
        gf, gm = grads["full"], grads["msd"]
        dot = float(gf @ gm)
        nf, nm = float(np.linalg.norm(gf)), float(np.linalg.norm(gm))
        cosines.append(dot / (nf * nm) if nf > 0 and nm > 0 else 1.0)
        k_hats.append(np.sign(dot) * nf / nm if nm > 0 else np.nan)

    # Per-step input-Jacobian constants estimated as the mean Jacobian diagonal
    # along the first batch's plain trajectory.
    xT0, cs0, _ = batches[0]
    taus = schedule.taus(n_steps)
    xhat = refiner(xT0, cs0)
    traj = []
    denoise(xhat, cs0, net, schedule, scfg, trajectory=traj)
    eta_hats = []
    for i, (t, _) in enumerate(zip(taus, taus[1:])):
        row = jacobian_probe(net, traj[i].x[0], t, int(np.asarray(cs0).ravel()[0]))
        eta_hats.append(float(np.diag(row.jacobian).mean()))
    k_pred = predicted_gradient_ratio(schedule, n_steps, eta_hats)
    return Prop2Report(cosines=np.array(cosines), k_hats=np.array(k_hats),
                       eta_hats=np.array(eta_hats), k_pred=k_pred)


# -- inversion-vs-image distance verification ------------------------------------

@dataclass
class Prop1Report:
    noise_dists: np.ndarray
    image_dists: np.ndarray
    kappa_hat: float
    pearson_r: float
    lipschitz: dict

    def summary(self):
        return {
            "pairs": int(self.noise_dists.size),
            "kappa_hat": self.kappa_hat,
            "pearson_r": self.pearson_r,
            "lipschitz": {str(t): v for t, v in self.lipschitz.items()},
        }


def _mse_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a - b).reshape(a.shape[0], -1)
    return np.mean(d * d, axis=1)


def verify_prop1(net, pairs, schedule: NoiseSchedule, cfg: SamplerConfig,
                 inv: InversionConfig, lipschitz_probes: int = 64,
                 seed: int = 0) -> Prop1Report:
    """Per-pair noise-space distance (start noise vs inverted guided image)
    against image-space distance (unguided image vs guided image)."""
    xT = np.stack([p.xT for p in pairs])
    cs = np.array([p.c for p in pairs], dtype=np.intp)
    guided = np.stack([p.x0_guide for p in pairs])
    traj = []
    x0_plain = denoise(xT, cs, net, schedule, cfg, trajectory=traj)
    inverted = invert(guided, cs, net, schedule, inv, cfg)
    noise_d = _mse_rows(xT, inverted)
    image_d = _mse_rows(x0_plain, guided)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(image_d > 0, noise_d / image_d, np.where(noise_d > 0, np.inf, 0.0))
    r = float(np.corrcoef(noise_d, image_d)[0, 1]) if noise_d.size > 1 else np.nan

    # crude per-step expansion constants: max over random probe pairs of
    # mse(eps(x_i), eps(x_j)) / mse(x_i, x_j) among trajectory states
    rng = derive_stream(seed, "lipschitz-probe")
    taus = schedule.taus(cfg.N)
    lip = {}
    for i, t in enumerate(taus[:-1]):
        states = traj[i].x
        preds = net(states, t, cs)
        ii = rng.integers(0, states.shape[0], lipschitz_probes)
        jj = rng.integers(0, states.shape[0], lipschitz_probes)
        keep = ii != jj
        num = _mse_rows(preds[ii[keep]], preds[jj[keep]])
        den = _mse_rows(states[ii[keep]], states[jj[keep]])
        lip[int(t)] = float(np.max(num / np.maximum(den, 1e-300)))
    return Prop1Report(noise_dists=noise_d, image_dists=image_d,
                       kappa_hat=float(np.max(ratios)), pearson_r=r, lipschitz=lip)


# -- interpolation ----------------------------------------------------------------

def slerp(x1: np.ndarray, x2: np.ndarray, a: float) -> np.ndarray:
    """Great-circle interpolation of directions with linear norm blending."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    if a == 0.0:
        return x1.copy()
    if a == 1.0:
        return x2.copy()
    n1 = float(np.linalg.norm(x1))
    n2 = float(np.linalg.norm(x2))
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("slerp endpoints must be nonzero")
    u1 = x1.ravel() / n1
    u2 = x2.ravel() / n2
    cos = float(np.clip(u1 @ u2, -1.0, 1.0))
    theta = float(np.arccos(cos))
    norm = (1.0 - a) * n1 + a * n2
    if theta < 1e-12:
        return (norm * u1).reshape(x1.shape)
    if np.pi - theta < 1e-12:
        raise ValueError("slerp endpoints are antipodal; direction is undefined")
    st = np.sin(theta)
    direction = (np.sin((1.0 - a) * theta) / st) * u1 + (np.sin(a * theta) / st) * u2
    return (norm * direction).reshape(x1.shape)


# -- condition mixing ---------------------------------------------------------------

def cross_condition_probe(refiner, net, xT: np.ndarray, c_refine, c_denoise,
                          schedule: NoiseSchedule, cfg: SamplerConfig) -> np.ndarray:
    """Refine under one condition, then denoise without guidance under another
    (possibly the null condition)."""
    return denoise(refiner(xT, c_refine), c_denoise, net, schedule, cfg)


# -- kernel two-sample distance -------------------------------------------------------

def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def median_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    """Median pairwise distance over the pooled sample."""
    z = np.concatenate([a.reshape(len(a), -1), b.reshape(len(b), -1)])
    d2 = _sq_dists(z, z)
    vals = np.sqrt(d2[np.triu_indices(len(z), k=1)])
    med = float(np.median(vals))
    return med if med > 0 else 1.0


def mmd(set_a, set_b, bandwidth: float | None = None) -> float:
    """Unbiased squared kernel two-sample distance (Gaussian kernel),
    clamped at zero."""
    a = np.asarray(set_a, dtype=np.float64).reshape(len(set_a), -1)
    b = np.asarray(set_b, dtype=np.float64).reshape(len(set_b), -1)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("unbiased estimate needs at least two samples per set")
    if bandwidth is None:
        bandwidth = median_bandwidth(a, b)
    s2 = 2.0 * bandwidth * bandwidth
    kxx = np.exp(-_sq_dists(a, a) / s2)
    kyy = np.exp(-_sq_dists(b, b) / s2)
    kxy = np.exp(-_sq_dists(a, b) / s2)
    m, n = len(a), len(b)
    est = ((kxx.sum() - np.trace(kxx)) / (m * (m - 1))
           + (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
           - 2.0 * kxy.mean())
    return max(0.0, float(est))
