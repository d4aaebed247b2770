from .conditioning import PhaseConditioner, blend_field, gated_fuse, phase_affine  # noqa: F401
from .losses import inverse_frequency_weights, segmentation_loss  # noqa: F401
from .unet import CONDITIONING_MODES, NetworkConfig, PhaseUNet  # noqa: F401
