"""
Seeded synthetic multi-domain generator.

Vector mode draws class-conditional Gaussian clusters; image mode renders
one coarse glyph per class. Every domain then applies its own deterministic
shift, growing with the domain index:

- rotation: rotate by index * magnitude (in random planes for vectors, in
  the image plane for images)
- channel_shift: add index * magnitude along a fixed direction (per-channel
  offset for images)
- additive_style: add magnitude times a per-domain random style pattern

Domain 0 is labeled, the last domain is the target, the rest are unlabeled.
"""

from enum import Enum
from typing import Dict, List, Literal, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from src.core.models import Sample
from src.data.bundle import DatasetBundle, HiddenLabelStore


class ShiftKind(str, Enum):
    ROTATION = "rotation"
    CHANNEL_SHIFT = "channel_shift"
    ADDITIVE_STYLE = "additive_style"


class SyntheticSpec(BaseModel):
    """Parameters of a synthetic benchmark. Defaults are the desk-scale setup."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_domains: int = Field(4, ge=3)
    num_classes: int = Field(5, ge=2)
    samples_per_class_per_domain: int = Field(200, ge=1)
    shift_kind: ShiftKind = ShiftKind.ROTATION
    shift_magnitude: float = Field(0.35, ge=0.0, allow_inf_nan=False)
    class_separation: float = Field(3.0, gt=0.0, allow_inf_nan=False)
    noise_std: float = Field(1.0, ge=0.0, allow_inf_nan=False)
    mode: Literal["vector", "image"] = "vector"
    dim: int = Field(16, ge=2, description="Feature dimension in vector mode")
    image_size: int = Field(16, ge=8, description="Side length in image mode")
    channels: int = Field(3, ge=1)
    seed: int = 0


def domain_names(spec: SyntheticSpec) -> List[str]:
    return [f"domain_{index}" for index in range(spec.num_domains)]


# ============================================================================
# VECTOR MODE
# ============================================================================

def _random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _plane_rotation(dim: int, angle: float, basis: np.ndarray) -> np.ndarray:
    """Rotate every consecutive coordinate pair of `basis` by `angle`."""
    block = np.eye(dim)
    cos, sin = np.cos(angle), np.sin(angle)
    for first in range(0, dim - 1, 2):
        second = first + 1
        block[first, first] = cos
        block[first, second] = -sin
        block[second, first] = sin
        block[second, second] = cos
    return basis @ block @ basis.T


def _vector_domain(spec: SyntheticSpec, index: int, centers: np.ndarray, structure: Dict[str, np.ndarray],
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    per_class = spec.samples_per_class_per_domain
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    points = centers[labels] + spec.noise_std * rng.standard_normal((labels.shape[0], spec.dim))

    magnitude = spec.shift_magnitude
    if spec.shift_kind == ShiftKind.ROTATION:
        points = points @ _plane_rotation(spec.dim, index * magnitude, structure["basis"]).T
    elif spec.shift_kind == ShiftKind.CHANNEL_SHIFT:
        points = points + index * magnitude * structure["direction"]
    else:
        points = points + magnitude * structure["styles"][index]
    return points, labels


# ============================================================================
# IMAGE MODE
# ============================================================================

def _render_glyphs(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """One smooth C×H×W pattern per class, upsampled from a 4×4 grid."""
    coarse = rng.standard_normal((spec.num_classes, spec.channels, 4, 4))
    glyphs = F.interpolate(torch.from_numpy(coarse), size=(spec.image_size, spec.image_size),
                           mode="bilinear", align_corners=False)
    glyphs = glyphs / glyphs.flatten(1).std(dim=1).view(-1, 1, 1, 1)
    return spec.class_separation * glyphs.numpy()


def _rotate_images(images: np.ndarray, angle: float) -> np.ndarray:
    if angle == 0.0:
        return images
    cos, sin = float(np.cos(angle)), float(np.sin(angle))
    theta = torch.tensor([[cos, -sin, 0.0], [sin, cos, 0.0]], dtype=torch.float64)
    batch = torch.from_numpy(images)
    grid = F.affine_grid(theta.expand(batch.shape[0], 2, 3), list(batch.shape), align_corners=False)
    return F.grid_sample(batch, grid, mode="bilinear", padding_mode="border", align_corners=False).numpy()


def _image_domain(spec: SyntheticSpec, index: int, glyphs: np.ndarray, structure: Dict[str, np.ndarray],
                  rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    per_class = spec.samples_per_class_per_domain
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    images = glyphs[labels] + spec.noise_std * rng.standard_normal((labels.shape[0],) + glyphs.shape[1:])

    magnitude = spec.shift_magnitude
    if spec.shift_kind == ShiftKind.ROTATION:
        images = _rotate_images(images, index * magnitude)
    elif spec.shift_kind == ShiftKind.CHANNEL_SHIFT:
        images = images + index * magnitude * structure["channel_offsets"].reshape(1, -1, 1, 1)
    else:
        images = images + magnitude * structure["textures"][index][None]
    # N×C×H×W -> N×H×W×C
    return images.transpose(0, 2, 3, 1), labels


# ============================================================================
# GENERATOR
# ============================================================================

def _structure(spec: SyntheticSpec, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Domain-independent randomness: bases, directions, style patterns."""
    if spec.mode == "vector":
        direction = rng.standard_normal(spec.dim)
        styles = rng.standard_normal((spec.num_domains, spec.dim))
        styles[0] = 0.0
        return {
            "basis": _random_orthogonal(spec.dim, rng),
            "direction": direction / np.linalg.norm(direction),
            "styles": styles,
        }
    side = spec.image_size
    coarse = rng.standard_normal((spec.num_domains, spec.channels, 8, 8))
    textures = F.interpolate(torch.from_numpy(coarse), size=(side, side), mode="nearest").numpy()
    textures[0] = 0.0
    return {
        "channel_offsets": rng.choice([-1.0, 1.0], size=spec.channels),
        "textures": textures,
    }


def generate_synthetic(spec: SyntheticSpec) -> DatasetBundle:
    """
    Build a DatasetBundle from the spec. Pure function of the spec.

    Inputs are standardized with the labeled domain's statistics, so
    shifted domains keep their offset.
    """
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.num_domains + 1)
    structure_rng = np.random.default_rng(seeds[0])

    if spec.mode == "vector":
        raw_centers = structure_rng.standard_normal((spec.num_classes, spec.dim))
        centers = spec.class_separation * raw_centers / np.linalg.norm(raw_centers, axis=1, keepdims=True)
        structure = _structure(spec, structure_rng)
        per_domain = [
            _vector_domain(spec, index, centers, structure, np.random.default_rng(seeds[index + 1]))
            for index in range(spec.num_domains)
        ]
    else:
        glyphs = _render_glyphs(spec, structure_rng)
        structure = _structure(spec, structure_rng)
        per_domain = [
            _image_domain(spec, index, glyphs, structure, np.random.default_rng(seeds[index + 1]))
            for index in range(spec.num_domains)
        ]

    reference = per_domain[0][0]
    mean = reference.mean(axis=0, keepdims=True)
    std = reference.std(axis=0, keepdims=True)
    std = np.where(std > 0, std, 1.0)

    names = domain_names(spec)
    unlabeled = names[1:-1]
    target = names[-1]
    domains: Dict[str, List[Sample]] = {}
    hidden: Dict[int, int] = {}
    next_id = 0
    for index, (name, (inputs, labels)) in enumerate(zip(names, per_domain)):
        standardized = ((inputs - mean) / std).astype(np.float32)
        samples = []
        for row, label in zip(standardized, labels):
            if name in unlabeled:
                samples.append(Sample(sample_id=next_id, input=row, class_label=None, domain_id=index))
                hidden[next_id] = int(label)
            else:
                samples.append(Sample(sample_id=next_id, input=row, class_label=int(label), domain_id=index))
            next_id += 1
        domains[name] = samples

    return DatasetBundle(
        domains=domains,
        labeled_domain=names[0],
        unlabeled_domains=unlabeled,
        target_domain=target,
        class_names=[f"class_{index}" for index in range(spec.num_classes)],
        ground_truth=HiddenLabelStore(hidden),
        descriptor={"source": "synthetic", "spec": spec.model_dump(mode="json")},
    )
