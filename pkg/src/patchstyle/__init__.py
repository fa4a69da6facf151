"""Few-shot keyframe video stylization.

Trains an appearance-translation network on random patches of one or a few
painted keyframes, stylizes any frame of the sequence independently, and
ships the supporting toolchain: a motion-compensated temporal bilateral
pre-filter, ARAP-advected Gaussian guidance layers, a constrained
hyper-parameter grid search, and a CLI plus interactive HTTP service.
"""

from .data import (
    Frame,
    GuidanceLayer,
    Keyframe,
    KeyframeSpec,
    Mask,
    PatchBatch,
    Sequence,
    fullframe_batch,
    load_frame,
    load_keyframe_spec,
    load_keyframes,
    load_mask,
    load_sequence,
    sample_patch_batch,
    save_frame,
    save_sequence,
)
from .errors import (
    ChannelMismatchError,
    CheckpointError,
    ConfigError,
    DimensionMismatchError,
    EmptyInputError,
    PairingError,
    PatchstyleError,
    ResourceError,
    SamplingError,
)
from .losses import LossBreakdown, LossWeights, compute_loss, load_feature_extractor
from .networks import Discriminator, Generator, NetConfig, build_discriminator, build_generator, receptive_radius
from .training import (
    Checkpoint,
    EvalPair,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .temporal import DisplacementField, bilateral_temporal_filter, block_match, estimate_motion
from .arap import DeformableGrid, arap_register, make_grid
from .guidance import GaussianSet, generate_gaussians, propagate_guidance, rasterize_guidance
from .hyperopt import SearchResult, SearchSpec, run_grid_search, summarize
from .inference import bench, measure_inference_seconds, stylize_frame, stylize_sequence
from .session import Session, run_session
from .cli import cli_main

__version__ = "0.1.0"
