"""Torch reference generator matching the engine's architecture exactly.

Used to validate conversions: a checkpoint of this model converts to a
container the engine runs, and the two forward passes must agree. The
normalization layer divides by (population std + eps) rather than
sqrt(var + eps) because that is the engine's normalization contract; the
difference is a static-weight-irreconcilable semantic gap of up to several
percent on low-variance channels.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class PopStdInstanceNorm(nn.Module):
    """Affine instance norm with gamma*(x - mu)/(sigma_pop + eps) + beta."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        mu = x.mean(dim=(2, 3), keepdim=True)
        sigma = x.var(dim=(2, 3), keepdim=True, unbiased=False).sqrt()
        y = (x - mu) / (sigma + self.eps)
        return y * self.weight.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.pad1 = nn.ReflectionPad2d(1)
        self.conv1 = nn.Conv2d(channels, channels, 3)
        self.norm1 = PopStdInstanceNorm(channels)
        self.pad2 = nn.ReflectionPad2d(1)
        self.conv2 = nn.Conv2d(channels, channels, 3)
        self.norm2 = PopStdInstanceNorm(channels)

    def forward(self, x):
        r = torch.relu(self.norm1(self.conv1(self.pad1(x))))
        r = self.norm2(self.conv2(self.pad2(r)))
        return x + r


class ReferenceGenerator(nn.Module):
    """c7s1-w, d2w, d4w, R4w x n, u2w, uw, c7s1-out with tanh."""

    def __init__(self, in_channels=3, out_channels=3, width=64, n_resblocks=9):
        super().__init__()
        w = width
        self.stem_pad = nn.ReflectionPad2d(3)
        self.stem_conv = nn.Conv2d(in_channels, w, 7)
        self.stem_norm = PopStdInstanceNorm(w)
        self.down1_conv = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.down1_norm = PopStdInstanceNorm(2 * w)
        self.down2_conv = nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.down2_norm = PopStdInstanceNorm(4 * w)
        self.blocks = nn.ModuleList(ResBlock(4 * w) for _ in range(n_resblocks))
        self.up1_conv = nn.ConvTranspose2d(4 * w, 2 * w, 3, stride=2, padding=1,
                                           output_padding=1)
        self.up1_norm = PopStdInstanceNorm(2 * w)
        self.up2_conv = nn.ConvTranspose2d(2 * w, w, 3, stride=2, padding=1,
                                           output_padding=1)
        self.up2_norm = PopStdInstanceNorm(w)
        self.final_pad = nn.ReflectionPad2d(3)
        self.final_conv = nn.Conv2d(w, out_channels, 7)

    def forward(self, x):
        h = torch.relu(self.stem_norm(self.stem_conv(self.stem_pad(x))))
        h = torch.relu(self.down1_norm(self.down1_conv(h)))
        h = torch.relu(self.down2_norm(self.down2_conv(h)))
        for blk in self.blocks:
            h = blk(h)
        h = torch.relu(self.up1_norm(self.up1_conv(h)))
        h = torch.relu(self.up2_norm(self.up2_conv(h)))
        return torch.tanh(self.final_conv(self.final_pad(h)))


def random_reference(width=16, n_resblocks=2, seed=0) -> ReferenceGenerator:
    """Seeded random init mirroring the engine's: N(0, 0.02) convs, zero
    biases; affine params perturbed so conversion actually moves them."""
    torch.manual_seed(seed)
    model = ReferenceGenerator(width=width, n_resblocks=n_resblocks)
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
                mod.weight.normal_(0.0, 0.02)
                if mod.bias is not None:
                    mod.bias.zero_()
            elif isinstance(mod, PopStdInstanceNorm):
                mod.weight.normal_(1.0, 0.05)
                mod.bias.normal_(0.0, 0.05)
    return model
