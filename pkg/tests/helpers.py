"""Shared test utilities: micro networks and finite-difference gradient checks."""

import numpy as np
import torch
import torch.nn as nn

from anopipe.gcgan import generator_total_loss
from anopipe.imaging import GeoTransform


class MicroGenerator(nn.Module):
    """Two tiny convolutions, 223 parameters; enough to exercise every loss."""

    def __init__(self, seed=0):
        super().__init__()
        torch.manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, 4, 3, padding=1),
            nn.Tanh(),
            nn.Conv2d(4, 3, 3, padding=1),
            nn.Tanh(),
        )

    def forward(self, x):
        return self.net(x)


class MicroDiscriminator(nn.Module):
    def __init__(self, seed=1):
        super().__init__()
        torch.manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, 4, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4, 1, 3, padding=1),
        )

    def forward(self, x):
        return self.net(x)


def total_generator_loss_fn(gen, disc, x, y, t=GeoTransform.VFLIP,
                            lambda_gc=20.0, lambda_idt=0.5):
    def compute():
        total, _, _ = generator_total_loss(gen, disc, x, y, t, lambda_gc, lambda_idt)
        return total
    return compute


def finite_diff_probes(gen, loss_fn, n_probes, rng, h=1e-5):
    """Compare autograd gradients of loss_fn against central differences.

    Returns a list of (analytic, numeric, relative_error) triples over
    n_probes randomly chosen generator parameters. Everything must already
    be in float64.
    """
    gen.zero_grad(set_to_none=True)
    loss = loss_fn()
    loss.backward()
    params = [p for p in gen.parameters() if p.requires_grad]
    grads = [p.grad.detach().clone() for p in params]

    results = []
    for _ in range(n_probes):
        pi = int(rng.integers(len(params)))
        flat = params[pi].detach().reshape(-1)
        ei = int(rng.integers(flat.numel()))
        original = float(flat[ei])
        step = h * max(1.0, abs(original))

        with torch.no_grad():
            flat[ei] = original + step
            loss_plus = float(loss_fn())
            flat[ei] = original - step
            loss_minus = float(loss_fn())
            flat[ei] = original

        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = float(grads[pi].reshape(-1)[ei])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        results.append((analytic, numeric, rel))
    return results


def micro_gradient_check(n_probes=20, seed=0, size=8):
    """Full gradient check setup on 8x8 inputs; returns max relative error."""
    rng = np.random.default_rng(seed)
    gen = MicroGenerator(seed=seed).double()
    disc = MicroDiscriminator(seed=seed + 1).double()
    for p in disc.parameters():
        p.requires_grad_(False)
    x = torch.from_numpy(rng.random((2, 3, size, size))).double() * 2 - 1
    y = torch.from_numpy(rng.random((2, 3, size, size))).double() * 2 - 1
    loss_fn = total_generator_loss_fn(gen, disc, x, y)
    results = finite_diff_probes(gen, loss_fn, n_probes, rng)
    return max(r for _, _, r in results), results
