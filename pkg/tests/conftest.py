"""
Pytest configuration and fixtures for DualPL tests.

Provides:
- A toy float64 bundle (tanh MLP, under 100 parameters, C=3, 2 domains)
- A tiny synthetic dataset and a matching tiny train config
- Helpers for fabricated scored samples
"""

import os

import numpy as np
import pytest
import torch

# Keep run outputs of CLI tests out of the working tree
os.environ.setdefault("DUALPL_OUTPUT_DIR", "runs-test")

from src.core.models import TrainConfig
from src.data.synthetic import SyntheticSpec, generate_synthetic
from src.dapl.scoring import ScoredSample
from src.model.bundle import BackboneSpec, ModelBundle
from src.utils.console import VERBOSITY_NORMAL, VERBOSITY_QUIET, set_verbosity

TOY_INPUT_DIM = 3
TOY_FEATURE_DIM = 4
TOY_NUM_CLASSES = 3
TOY_NUM_DOMAINS = 2


# ============================================================================
# CONSOLE
# ============================================================================

@pytest.fixture(autouse=True)
def quiet_console():
    """Silence progress bars and console lines during tests"""
    set_verbosity(VERBOSITY_QUIET)
    yield
    set_verbosity(VERBOSITY_NORMAL)


# ============================================================================
# MODEL FIXTURES
# ============================================================================

@pytest.fixture
def toy_bundle() -> ModelBundle:
    """Desk-scale float64 bundle for gradient checks"""
    torch.manual_seed(0)
    spec = BackboneSpec(
        kind="mlp",
        input_shape=(TOY_INPUT_DIM,),
        feature_dim=TOY_FEATURE_DIM,
        hidden_dim=TOY_FEATURE_DIM,
        activation="tanh",
    )
    bundle = ModelBundle(spec, num_classes=TOY_NUM_CLASSES, num_domains=TOY_NUM_DOMAINS)
    return bundle.double()


@pytest.fixture
def toy_batch():
    """Inputs, class indices and domain indices for the toy bundle"""
    generator = torch.Generator().manual_seed(1)
    x = torch.randn(8, TOY_INPUT_DIM, generator=generator, dtype=torch.float64)
    y = torch.tensor([0, 1, 2, 0, 1, 2, 0, 1])
    z = torch.tensor([0, 0, 0, 0, 1, 1, 1, 1])
    return x, y, z


# ============================================================================
# DATA FIXTURES
# ============================================================================

@pytest.fixture(scope="session")
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(
        num_domains=3,
        num_classes=3,
        samples_per_class_per_domain=12,
        dim=4,
        class_separation=4.0,
        noise_std=0.5,
        shift_magnitude=0.2,
        seed=0,
    )


@pytest.fixture(scope="session")
def tiny_data(tiny_spec):
    """3 domains: domain_0 labeled, domain_1 unlabeled, domain_2 target"""
    return generate_synthetic(tiny_spec)


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        num_classes=3,
        epochs=4,
        batch_size=16,
        steps_per_epoch=3,
        feature_dim=8,
        hidden_dim=16,
        lr=0.05,
        delta=0.24,
        seed=0,
    )


# ============================================================================
# DAPL HELPERS
# ============================================================================

def _make_scored(sample_id: int, domain_id: int, q, feature, s=None) -> ScoredSample:
    q = torch.as_tensor(np.asarray(q, dtype=np.float64))
    return ScoredSample(
        sample_id=sample_id,
        domain_id=domain_id,
        q=q,
        psi=None,
        s=q.clone() if s is None else torch.as_tensor(np.asarray(s, dtype=np.float64)),
        feature=torch.as_tensor(np.asarray(feature, dtype=np.float64)),
    )


@pytest.fixture
def make_scored():
    """Factory for ScoredSample objects built from plain lists"""
    return _make_scored
