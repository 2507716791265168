"""A small 3D encoder-decoder with skip connections.

Two downsampling stages keep the toy model CPU-friendly; the input volume
must be divisible by 4 per spatial axis (the padding helpers guarantee it).
The head emits a single-channel residual volume in dB.
"""

from __future__ import annotations

import torch
from torch import nn


def _block(c_in: int, c_out: int) -> nn.Sequential:
    groups = 4 if c_out % 4 == 0 else 1
    return nn.Sequential(
        nn.Conv3d(c_in, c_out, 3, padding=1),
        nn.GroupNorm(groups, c_out),
        nn.SiLU(),
        nn.Conv3d(c_out, c_out, 3, padding=1),
        nn.GroupNorm(groups, c_out),
        nn.SiLU(),
    )


class ResidualRegressor(nn.Module):
    def __init__(self, in_channels: int = 4, base_channels: int = 16):
        super().__init__()
        c = base_channels
        self.enc1 = _block(in_channels, c)
        self.down1 = nn.Conv3d(c, 2 * c, 2, stride=2)
        self.enc2 = _block(2 * c, 2 * c)
        self.down2 = nn.Conv3d(2 * c, 4 * c, 2, stride=2)
        self.bottleneck = _block(4 * c, 4 * c)
        self.up2 = nn.ConvTranspose3d(4 * c, 2 * c, 2, stride=2)
        self.dec2 = _block(4 * c, 2 * c)
        self.up1 = nn.ConvTranspose3d(2 * c, c, 2, stride=2)
        self.dec1 = _block(2 * c, c)
        self.head = nn.Conv3d(c, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s1 = self.enc1(x)
        s2 = self.enc2(self.down1(s1))
        b = self.bottleneck(self.down2(s2))
        d2 = self.dec2(torch.cat([self.up2(b), s2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), s1], dim=1))
        return self.head(d1)
