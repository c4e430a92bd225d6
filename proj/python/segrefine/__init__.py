# SPDX-License-Identifier: Apache-2.0
"""Coarse segmentation refinement: diffusion algebra, attention injection,
feature correspondence and evaluation, backed by a C++ core."""
import json as _json

from ._segrefine import (
    add_noise,
    class_token_indices,
    config_help,
    ddim_step,
    find_correspondence,
    gaussian_noise,
    inject_attention,
    iou,
    linear_schedule,
    mean_iou,
    mix_probabilities,
    normalize_features,
    predict_x0,
    read_tensor,
    vanilla_attention,
    write_tensor,
)
from ._segrefine import refine_dataset as _refine_dataset


def refine_dataset(root, out, **settings):
    """Run the pipeline over a dataset root; settings use the config-file keys."""
    raw = _refine_dataset(str(root), str(out), {k: str(v) for k, v in settings.items()})
    return _json.loads(raw)


__all__ = [
    "add_noise",
    "class_token_indices",
    "config_help",
    "ddim_step",
    "find_correspondence",
    "gaussian_noise",
    "inject_attention",
    "iou",
    "linear_schedule",
    "mean_iou",
    "mix_probabilities",
    "normalize_features",
    "predict_x0",
    "read_tensor",
    "refine_dataset",
    "vanilla_attention",
    "write_tensor",
]
