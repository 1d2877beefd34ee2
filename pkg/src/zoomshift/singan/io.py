"""Checkpoint directory format for trained single-image models."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import torch

from .core import SinGANConfig, SinGANModel, SinGANScale
from .models import PatchCritic, ResidualGenerator, channels_for_level

SCHEMA_VERSION = "singan-checkpoint-1"


def _zstar_checksum(model: SinGANModel) -> str:
    h = hashlib.sha256()
    h.update(model.scales[0].recon_noise.numpy().tobytes())
    return h.hexdigest()


def save_model(model: SinGANModel, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for scale in model.scales:
        torch.save(
            {
                "generator": scale.generator.state_dict(),
                "critic": scale.critic.state_dict(),
                "recon_noise": scale.recon_noise,
            },
            out / f"scale_{scale.index:02d}.pt",
        )
    meta = {
        "schema_version": SCHEMA_VERSION,
        "scale_factor": model.scale_factor,
        "alpha": model.alpha,
        "lambda_gp": model.lambda_gp,
        "sigmas": [scale.sigma for scale in model.scales],
        "pyramid_shapes": [list(s) for s in model.pyramid_shapes],
        "zstar_checksum": _zstar_checksum(model),
        "training_image_id": model.training_image_id,
        "config": asdict(model.config),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return out


def load_model(model_dir) -> SinGANModel:
    root = Path(model_dir)
    meta = json.loads((root / "metadata.json").read_text())
    if meta["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema {meta['schema_version']!r}")
    config_dict = dict(meta["config"])
    config_dict["betas"] = tuple(config_dict["betas"])
    config = SinGANConfig(**config_dict)
    model = SinGANModel(
        pyramid_shapes=[tuple(s) for s in meta["pyramid_shapes"]],
        scale_factor=meta["scale_factor"],
        alpha=meta["alpha"],
        lambda_gp=meta["lambda_gp"],
        config=config,
        training_image_id=meta["training_image_id"],
    )
    for level, sigma in enumerate(meta["sigmas"]):
        payload = torch.load(root / f"scale_{level:02d}.pt", weights_only=True)
        channels = channels_for_level(level, config.base_channels)
        generator = ResidualGenerator(channels, config.blocks)
        generator.load_state_dict(payload["generator"])
        critic = PatchCritic(channels, config.blocks)
        critic.load_state_dict(payload["critic"])
        for module in (generator, critic):
            module.eval()
            for param in module.parameters():
                param.requires_grad_(False)
        model.scales.append(
            SinGANScale(
                index=level,
                generator=generator,
                critic=critic,
                sigma=float(sigma),
                recon_noise=payload["recon_noise"],
            )
        )
    if _zstar_checksum(model) != meta["zstar_checksum"]:
        raise ValueError("reconstruction noise checksum mismatch")
    return model
