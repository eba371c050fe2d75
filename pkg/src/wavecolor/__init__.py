"""Wavelet-domain conditional diffusion for underwater image restoration."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .csdr import CSDR, cross_attention, csdr_forward
from .data_io import channel_histogram, index_pairs, sample_patch
from .denoiser import Denoiser, DenoiserInput, time_embed
from .diffusion import make_schedule, p_step, predict_x0, q_sample, skip_grid
from .gcc import GCC, FmParams, fm_apply, gcc_forward
from .objectives import loss_content, loss_details, loss_noise, loss_total, psnr, ssim
from .pipeline import RestorationModel, SampleConfig, TrainConfig, enhance, fit, train_step
from .quality import uciqe, uiqm
from .wavelet import dwt, dwt_level, haar_kernels, idwt, idwt_level

__version__ = "0.1.0"
