"""
Building blocks for the feature extractor and the domain discriminator.
"""

from typing import Optional

import torch
from torch import nn
from torch.autograd import Function


class GradientReversalFunction(Function):
    """
    Identity in the forward pass; multiplies the incoming gradient by
    -scale in the backward pass.
    """

    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.scale, None


def reverse_gradient(x: torch.Tensor, scale: Optional[float]) -> torch.Tensor:
    """Apply gradient reversal; scale=None leaves the graph untouched."""
    if scale is None:
        return x
    return GradientReversalFunction.apply(x, float(scale))


class ChannelsLastToFirst(nn.Module):
    """N×H×W×C images to the N×C×H×W layout convolutions expect."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x.permute(0, 3, 1, 2).contiguous()


def make_activation(name: str) -> nn.Module:
    if name == "relu":
        return nn.ReLU()
    if name == "tanh":
        return nn.Tanh()
    raise ValueError(f"Unknown activation: {name}")


def mlp_extractor(input_dim: int, hidden_dim: int, feature_dim: int, activation: str) -> nn.Sequential:
    """Two dense layers for vector inputs."""
    return nn.Sequential(
        nn.Flatten(),
        nn.Linear(input_dim, hidden_dim),
        make_activation(activation),
        nn.Linear(hidden_dim, feature_dim),
        make_activation(activation),
    )


def conv_extractor(height: int, width: int, channels: int, feature_dim: int, activation: str) -> nn.Sequential:
    """Two convolutional blocks and one dense layer for H×W×C images."""
    flat_dim = 64 * (height // 4) * (width // 4)
    if flat_dim == 0:
        raise ValueError(f"Image {height}x{width} is too small for two pooling stages")
    return nn.Sequential(
        ChannelsLastToFirst(),
        nn.Conv2d(channels, 32, kernel_size=3, padding=1),
        make_activation(activation),
        nn.MaxPool2d(2),
        nn.Conv2d(32, 64, kernel_size=3, padding=1),
        make_activation(activation),
        nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(flat_dim, feature_dim),
        make_activation(activation),
    )


def residual_extractor(kind: str, feature_dim: int, activation: str, pretrained: bool) -> nn.Sequential:
    """Full-scale plug-in: torchvision ResNet trunk plus a projection to feature_dim."""
    from torchvision import models

    if kind == "resnet18":
        trunk = models.resnet18(weights="DEFAULT" if pretrained else None)
    elif kind == "resnet50":
        trunk = models.resnet50(weights="DEFAULT" if pretrained else None)
    else:
        raise ValueError(f"Unknown residual backbone: {kind}")
    trunk_dim = trunk.fc.in_features
    trunk.fc = nn.Identity()
    return nn.Sequential(
        ChannelsLastToFirst(),
        trunk,
        nn.Linear(trunk_dim, feature_dim),
        make_activation(activation),
    )


def domain_discriminator(feature_dim: int, hidden_dim: int, num_domains: int, activation: str) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(feature_dim, hidden_dim),
        make_activation(activation),
        nn.Linear(hidden_dim, num_domains),
    )
