"""WGAN-GP and reconstruction losses."""
from __future__ import annotations

from typing import Optional, Union

import torch


def _score(critic, batch: torch.Tensor) -> torch.Tensor:
    """Per-sample scalar critic value: mean over the critic's output elements."""
    out = critic(batch)
    return out.reshape(out.shape[0], -1).mean(dim=1)


def critic_loss_wgan_gp(
    critic,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    lambda_gp: float,
    rng: Optional[Union[int, torch.Generator]] = None,
) -> torch.Tensor:
    """E[f(fake)] - E[f(real)] + lambda * E[(||grad f(xhat)||_2 - 1)^2].

    xhat = eps * real + (1 - eps) * fake with eps uniform per sample.
    """
    if real_batch.shape != fake_batch.shape:
        raise ValueError("real and fake batches must share a shape")
    wasserstein = _score(critic, fake_batch).mean() - _score(critic, real_batch).mean()
    if lambda_gp == 0.0:
        return wasserstein

    generator = rng
    if isinstance(rng, int):
        generator = torch.Generator().manual_seed(rng)
    eps_shape = (real_batch.shape[0],) + (1,) * (real_batch.ndim - 1)
    eps = torch.rand(eps_shape, generator=generator, dtype=real_batch.dtype)
    interp = (eps * real_batch + (1.0 - eps) * fake_batch).detach().requires_grad_(True)
    grad = torch.autograd.grad(
        outputs=_score(critic, interp).sum(),
        inputs=interp,
        create_graph=True,
        retain_graph=True,
    )[0]
    grad_norm = grad.reshape(grad.shape[0], -1).norm(2, dim=1)
    penalty = ((grad_norm - 1.0) ** 2).mean()
    return wasserstein + lambda_gp * penalty


def generator_adversarial_loss(critic, fake_batch: torch.Tensor) -> torch.Tensor:
    """-E[f(fake)]."""
    return -_score(critic, fake_batch).mean()


def reconstruction_loss(generated, target) -> torch.Tensor:
    """Elementwise mean squared error."""
    generated = torch.as_tensor(generated)
    target = torch.as_tensor(target)
    return ((generated - target) ** 2).mean()
