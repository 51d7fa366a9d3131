"""Desk-scale diffusion lab: train a small noise-prediction model on
synthetic shapes, build guided-sample/noise training pairs via fixed-point
inversion-compatible sampling, fit a residual noise refiner with a
stop-gradient rollout loss, and verify the surrounding numerical claims.
"""

from .rng import RngStream, derive_stream
from .schedule import NoiseSchedule, build_schedule, forward_diffuse
from .fourier import FrequencySpectrum, band_mask, fft2, ifft2
from .nets import (ArchSpec, ConstantDenoiser, DenoiserNet, LinearDenoiser,
                   RefinerNet, load_checkpoint, save_checkpoint)
from .optim import Adam, NonFiniteGradientError
from .sampler import (GuidanceSpec, InversionConfig, LatentState, SamplerConfig,
                      ddim_step, ddpm_step, denoise, guided_score, invert)
from .shapes import CLASS_NAMES, NUM_CLASSES, ShapesDataset
from .pairs import NoisePair, filter_pairs, gen_pairs, load_pairs, quality_score, save_pairs
from .training import TrainConfig, TrainingDivergedError, full_rollout, msd_rollout, train_base, train_refiner
from .analysis import (BandReport, Prop1Report, Prop2Report, band_energy, band_swap_probe,
                       cross_condition_probe, diff_histogram, gamma_curve, jacobian_probe,
                       mmd, slerp, verify_prop1, verify_prop2)

__version__ = "0.1.0"
