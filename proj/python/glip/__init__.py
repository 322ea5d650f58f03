"""Python access to the glip C++ core: phantoms, losses, metrics and configs."""

from ._glip import (
    LossSpec,
    RunConfig,
    avg_projection_distance,
    dual_value_1d,
    euclid_errors,
    extract_landmarks,
    generate_heatmap,
    generate_phantom,
    grid_lipschitz_penalty,
    loss,
    ot_loss,
    plane_angle,
    plane_from_points,
    sdr,
    w1_oracle_1d,
)

__all__ = [
    "LossSpec",
    "RunConfig",
    "avg_projection_distance",
    "dual_value_1d",
    "euclid_errors",
    "extract_landmarks",
    "generate_heatmap",
    "generate_phantom",
    "grid_lipschitz_penalty",
    "loss",
    "ot_loss",
    "plane_angle",
    "plane_from_points",
    "sdr",
    "w1_oracle_1d",
]
