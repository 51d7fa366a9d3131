"""Noise/image training pairs: generation, quality scoring, filtering, archive.

A pair records a starting noise, the class condition, the image the
guided sampler produced from that noise, the guidance scales used, and
a quality score. Quality is the negated class-conditional denoising
loss of the base model (averaged over a few timestep/noise draws):
samples the model itself finds easy to denoise under the class score
higher.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nets import DenoiserNet
from .rng import RngStream, derive_stream
from .sampler import GuidanceSpec, SamplerConfig, denoise
from .schedule import NoiseSchedule, forward_diffuse
from .tensorio import load_tensor, save_tensor

_GEN_CHUNK = 64  # fixed so regeneration with the same seed is bit-identical


@dataclass
class NoisePair:
    xT: np.ndarray
    c: int
    x0_guide: np.ndarray
    w_used: float
    s_used: float
    quality: float


def quality_score(x0: np.ndarray, c: int, net: DenoiserNet, schedule: NoiseSchedule,
                  rng: RngStream, m: int = 8) -> float:
    """Negated denoising loss over m (t, eps) draws; higher is better."""
    t = rng.integers(1, schedule.T + 1, m)
    eps = rng.normal((m,) + x0.shape)
    return float(_quality_batch(x0[None], np.array([c]), net, schedule,
                                t[None, :], eps[None, :, :])[0])


def _quality_batch(x0s, cs, net, schedule, t_draws, eps_draws):
    """Vectorized scorer: t_draws (B, m), eps_draws (B, m, C, H, W)."""
    batch, m = t_draws.shape
    total = np.zeros(batch)
    for j in range(m):
        xt = forward_diffuse(x0s, t_draws[:, j], eps_draws[:, j], schedule)
        pred = net(xt, t_draws[:, j], cs)
        total += np.mean((eps_draws[:, j] - pred) ** 2, axis=(1, 2, 3))
    return -total / m


def gen_pairs(net: DenoiserNet, degraded, schedule: NoiseSchedule, cfg: SamplerConfig,
              count: int, seed: int, w_range=(3.0, 5.0), s_range=(2.0, 3.0),
              quality_draws: int = 8, num_classes: int = 4) -> list[NoisePair]:
    """Draw noises, run the guided sampler, and score each outcome.

    Every record's randomness comes from its own derived stream, so pair i
    is the same no matter how many pairs are requested.
    """
    shape = net.arch.image_shape
    pairs: list[NoisePair] = []
    for lo in range(0, count, _GEN_CHUNK):
        hi = min(lo + _GEN_CHUNK, count)
        n = hi - lo
        xT = np.empty((n,) + shape)
        cs = np.empty(n, dtype=np.intp)
        ws = np.empty(n)
        ss = np.empty(n)
        t_draws = np.empty((n, quality_draws), dtype=np.intp)
        eps_draws = np.empty((n, quality_draws) + shape)
        for k in range(n):
            r = derive_stream(seed, "pair", lo + k)
            cs[k] = int(r.integers(0, num_classes))
            xT[k] = r.normal(shape)
            ws[k] = float(r.uniform(*w_range))
            ss[k] = float(r.uniform(*s_range))
            t_draws[k] = r.integers(1, schedule.T + 1, quality_draws)
            eps_draws[k] = r.normal((quality_draws,) + shape)
        g = GuidanceSpec(w=ws, s=ss, degraded=degraded)
        x0 = denoise(xT, cs, net, schedule, cfg, guidance=g)
        q = _quality_batch(x0, cs, net, schedule, t_draws, eps_draws)
        for k in range(n):
            pairs.append(NoisePair(xT=xT[k], c=int(cs[k]), x0_guide=x0[k],
                                   w_used=float(ws[k]), s_used=float(ss[k]),
                                   quality=float(q[k])))
    return pairs


def filter_pairs(pairs: list[NoisePair], q: float) -> list[NoisePair]:
    """Keep the top-q percent by quality, preserving original order."""
    if not pairs:
        raise ValueError("no pairs to filter")
    if not 0.0 < q <= 100.0:
        raise ValueError(f"quantile must be in (0, 100], got {q}")
    keep = max(1, round(len(pairs) * q / 100.0))
    scores = np.array([p.quality for p in pairs])
    ranked = np.argsort(-scores, kind="stable")[:keep]
    return [pairs[i] for i in sorted(ranked)]


def save_pairs(directory, pairs: list[NoisePair]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_tensor(d / "xT.nft", np.stack([p.xT for p in pairs]))
    save_tensor(d / "x0_guide.nft", np.stack([p.x0_guide for p in pairs]))
    index = {
        "count": len(pairs),
        "records": [{"c": p.c, "w": p.w_used, "s": p.s_used, "quality": p.quality}
                    for p in pairs],
    }
    (d / "index.json").write_text(json.dumps(index))


def load_pairs(directory) -> list[NoisePair]:
    d = Path(directory)
    index = json.loads((d / "index.json").read_text())
    xT = load_tensor(d / "xT.nft")
    x0 = load_tensor(d / "x0_guide.nft")
    return [NoisePair(xT=xT[i], c=rec["c"], x0_guide=x0[i], w_used=rec["w"],
                      s_used=rec["s"], quality=rec["quality"])
            for i, rec in enumerate(index["records"])]
