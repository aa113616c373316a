"""Conditional-diffusion HDR deghosting at desk scale.

A numpy/torch library covering the full pipeline: diffusion schedules and
closed-form forward/reverse math, mu-law domain transforms, an
attention-conditioned noise predictor, combined noise/image-space
training, sliding-window noise estimation sampling, and PSNR/SSIM
evaluation in the linear and tonemapped domains.
"""

from .schedule import NoiseSchedule, SamplingPlan, linear_beta_schedule, alpha_bar, make_plan
from .diffusion import (LatentState, PosteriorParams, forward_diffuse, predict_x0,
                        ddim_step, ddim_step_sigma, posterior_params, ddpm_step)
from .tonemap import (HdrImage, LdrSample, mu_law_compress, mu_law_expand,
                      ldr_to_hdr_domain, assemble_condition_input, DEFAULT_MU, DEFAULT_GAMMA)
from .conditioning import ModulationPair, AttentionAlign, DfaMapper, ConditionGenerator, dfa_apply
from .unet import (ModelConfig, TOY_CONFIG, FULL_SCALE_CONFIG, sinusoidal_time_embedding,
                   NoisePredictor, count_parameters)
from .model import HdrDiffusionModel, ParamStore, window_predictor
from .trainer import (TrainConfig, LossReport, TrainingDiverged, loss_noise, loss_image,
                      train_step, Trainer, save_checkpoint, load_checkpoint)
from .swne import WindowPlan, NoiseAccumulator, window_plan, accumulate_noise, swne_estimate, swne_sample
from .metrics import MetricReport, psnr, psnr_mu, ssim, ssim_mu, evaluate_pair
from .datasets import SampleRecord, synth_scene, save_scene, load_dataset_sample, load_dataset
from .config import RunConfig, ConfigError, parse_config, load_config
from .tensorio import write_tensors, read_tensors, TensorFormatError

__version__ = "0.1.0"
