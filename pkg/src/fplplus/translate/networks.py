"""2D translator and patch discriminator for unpaired slice translation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class TranslatorConfig:
    width: int = 16
    n_down: int = 2
    n_res: int = 4

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorConfig:
    width: int = 16
    n_layers: int = 3

    def to_json(self) -> dict:
        return asdict(self)


class ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            nn.InstanceNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            nn.InstanceNorm2d(ch),
        )

    def forward(self, x):
        return x + self.body(x)


class TranslatorNet(nn.Module):
    """Encoder, residual blocks, decoder; single-channel slices in and out.

    Input height and width must be divisible by ``2 ** n_down``.
    """

    def __init__(self, config: TranslatorConfig = TranslatorConfig()):
        super().__init__()
        self.config = config
        w = config.width
        layers: list[nn.Module] = [nn.ReflectionPad2d(3), nn.Conv2d(1, w, 7), nn.InstanceNorm2d(w), nn.ReLU(inplace=True)]
        for i in range(config.n_down):
            cin, cout = w * 2**i, w * 2 ** (i + 1)
            layers += [nn.Conv2d(cin, cout, 3, stride=2, padding=1), nn.InstanceNorm2d(cout), nn.ReLU(inplace=True)]
        deep = w * 2**config.n_down
        layers += [ResidualBlock(deep) for _ in range(config.n_res)]
        for i in reversed(range(config.n_down)):
            cin, cout = w * 2 ** (i + 1), w * 2**i
            layers += [
                nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(cout),
                nn.ReLU(inplace=True),
            ]
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(w, 1, 7)]
        self.model = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)


class DiscriminatorNet(nn.Module):
    """Patch discriminator returning a map of real-probabilities in (0, 1)."""

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = config
        w = config.width
        layers: list[nn.Module] = [nn.Conv2d(1, w, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True)]
        ch = w
        for i in range(1, config.n_layers):
            stride = 2 if i < config.n_layers - 1 else 1
            nxt = w * min(2**i, 8)
            layers += [nn.Conv2d(ch, nxt, 4, stride=stride, padding=1), nn.InstanceNorm2d(nxt), nn.LeakyReLU(0.2, inplace=True)]
            ch = nxt
        layers += [nn.Conv2d(ch, 1, 4, stride=1, padding=1)]
        self.model = nn.Sequential(*layers)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.model(x))
