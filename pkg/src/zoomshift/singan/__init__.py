from .pyramid import ScalePyramid, build_pyramid, num_downscale_steps
from .models import ResidualGenerator, PatchCritic, channels_for_level, generator_forward
from .losses import critic_loss_wgan_gp, generator_adversarial_loss, reconstruction_loss
from .core import SinGANConfig, SinGANScale, SinGANModel, train_scale, train_singan
from .io import save_model, load_model

__all__ = [
    "ScalePyramid",
    "build_pyramid",
    "num_downscale_steps",
    "ResidualGenerator",
    "PatchCritic",
    "channels_for_level",
    "generator_forward",
    "critic_loss_wgan_gp",
    "generator_adversarial_loss",
    "reconstruction_loss",
    "SinGANConfig",
    "SinGANScale",
    "SinGANModel",
    "train_scale",
    "train_singan",
    "save_model",
    "load_model",
]
