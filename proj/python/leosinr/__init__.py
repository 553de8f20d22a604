from ._leosinr import (
    GroundPosition,
    Model,
    OrbitConfig,
    Pass,
    SatState,
    __version__,
    channel_correlation,
    complexity_estimate,
    elevation_angle_deg,
    load_model,
    lr_at_epoch,
    mmse_sinr,
    selftest,
    slant_range_m,
    uv_of_user,
)

__all__ = [
    "GroundPosition",
    "Model",
    "OrbitConfig",
    "Pass",
    "SatState",
    "__version__",
    "channel_correlation",
    "complexity_estimate",
    "elevation_angle_deg",
    "load_model",
    "lr_at_epoch",
    "mmse_sinr",
    "selftest",
    "slant_range_m",
    "uv_of_user",
]
