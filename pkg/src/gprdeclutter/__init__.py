"""Clutter removal toolkit for ground-penetrating-radar B-scans."""

from .radargram import (
    ContainerFormatError,
    Dataset,
    DatasetPair,
    Provenance,
    Radargram,
    crop_window,
    normalize_unit,
    read_container,
    resize_bilinear,
    write_container,
)
from .simulator import (
    SceneGridConfig,
    SceneSpec,
    SoilSpec,
    SurfaceSpec,
    TargetSpec,
    generate_dataset,
    hybridize,
    synth_clutter,
    synth_pair,
    synth_target_response,
)
from .classical import RpcaResult, mean_subtraction, rpca_decompose, rpca_removal, svd_removal
from .metrics import (
    MsSsimConfig,
    TargetMask,
    combined_loss,
    improvement_factor,
    loss_value,
    mae,
    mask_from_ground_truth,
    ms_ssim,
    mse,
    psnr,
    scr,
)

__version__ = "0.1.0"
