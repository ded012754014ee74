"""Learnable-delay sinc kernels and multi-delay networks for aligning and
predicting continuous annotation signals."""

from .data import Dataset, FeatureSequence, Recording, interleave_target, stack_frames, znorm_per_speaker
from .dsp import SampledSignal, SincKernel, apply_delay, convolve_same, make_sinc_kernel, sinc_kernel_grad_tau
from .metrics import CccStats, ccc, ccc_grad, ccc_stats, concat_eval, masked_ccc, rmse
from .model import (
    ForwardTrace,
    MdsConfig,
    MdsModel,
    backward,
    forward,
    hard_select,
    init_model,
    model_from_json,
    model_to_json,
    predict,
)
from .synth import SynthSpec, brute_force_delay, delay_ccc_curve, gen_bandlimited, gen_multi_delay_task, gen_single_delay_task
from .training import AdamState, RunRecord, TrainConfig, adam_step, select_best_epoch, train

__version__ = "0.1.0"
