"""
Tests for loss terms, the ramp weight and objective assembly, including
finite-difference gradient checks on the toy bundle.
"""

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from pydantic import ValidationError

from src.config import ConfigError
from src.core.models import ClassifierHead
from src.losses.terms import (
    LossReport,
    LossTerms,
    adv_loss,
    assemble_objectives,
    cls_loss,
    entropy_from_logits,
    entropy_loss,
    mix_losses,
    ramp_weight,
    soft_cross_entropy,
    soft_cross_entropy_from_logits,
)
from src.mixup.augment import MixedBatch, TaggedBatch, build_mixed_batch

STEP = 1e-3
TOLERANCE = 1e-4
RAMP = 0.37


# ============================================================================
# HELPERS
# ============================================================================

def flat_parameters(bundle) -> list:
    return [param for param in bundle.parameters()]


def analytic_gradient(loss_fn, params) -> torch.Tensor:
    for param in params:
        param.grad = None
    loss_fn().backward()
    return torch.cat([
        (param.grad if param.grad is not None else torch.zeros_like(param)).reshape(-1)
        for param in params
    ])


def numeric_gradient(loss_fn, params) -> torch.Tensor:
    grads = []
    with torch.no_grad():
        for param in params:
            flat = param.view(-1)
            for index in range(flat.numel()):
                original = float(flat[index])
                flat[index] = original + STEP
                plus = float(loss_fn())
                flat[index] = original - STEP
                minus = float(loss_fn())
                flat[index] = original
                grads.append((plus - minus) / (2 * STEP))
    return torch.tensor(grads, dtype=torch.float64)


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    scale = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / scale


def toy_mixed(toy_batch) -> MixedBatch:
    x, y, z = toy_batch
    labeled = TaggedBatch(x=x[:4], y=F.one_hot(y[:4], 3).double(), z=F.one_hot(z[:4], 2).double())
    pseudo = TaggedBatch(x=x[4:], y=F.one_hot(y[4:], 3).double(), z=F.one_hot(z[4:], 2).double())
    return build_mixed_batch(labeled, pseudo, 0.4, np.random.default_rng(0))


def loss_closures(bundle, toy_batch):
    """Each loss of one step as a function of the current parameters (no reversal)."""
    x, y, z = toy_batch
    mixed = toy_mixed(toy_batch)
    labeled, pseudo = slice(0, 4), slice(4, 8)

    def features():
        return bundle.extract(x)

    def l_cls():
        logits = bundle.class_logits(features(), ClassifierHead.PREDICTIVE)
        return soft_cross_entropy_from_logits(logits[labeled], y[labeled]) + \
            soft_cross_entropy_from_logits(logits[pseudo], y[pseudo])

    def l_adv():
        return soft_cross_entropy_from_logits(bundle.domain_logits(features(), None), z)

    def l_cls_mix():
        return mix_losses(mixed, bundle, reversal_scale=None)[0]

    def l_adv_mix():
        return mix_losses(mixed, bundle, reversal_scale=None)[1]

    def l_ent():
        return entropy_from_logits(bundle.class_logits(features()[pseudo], ClassifierHead.PREDICTIVE))

    def model_objective():
        return l_cls() + l_cls_mix() + RAMP * (-l_adv() - l_adv_mix() + l_ent())

    def discriminator_objective():
        return l_adv() + l_adv_mix()

    return {
        "cls": l_cls,
        "adv": l_adv,
        "cls_mix": l_cls_mix,
        "adv_mix": l_adv_mix,
        "ent": l_ent,
        "model": model_objective,
        "discriminator": discriminator_objective,
    }


def step_terms(bundle, toy_batch, adversarial_only: bool) -> LossTerms:
    """Loss terms of one step with reversal scale RAMP."""
    x, y, z = toy_batch
    zero = torch.zeros((), dtype=torch.float64)
    features = bundle.extract(x)
    adv = soft_cross_entropy_from_logits(bundle.domain_logits(features, RAMP), z)
    cls_mix, adv_mix = mix_losses(toy_mixed(toy_batch), bundle, reversal_scale=RAMP)
    if adversarial_only:
        return LossTerms(cls=zero, adv=adv, cls_mix=zero, adv_mix=adv_mix, ent=zero, ramp=RAMP)
    logits = bundle.class_logits(features, ClassifierHead.PREDICTIVE)
    cls = soft_cross_entropy_from_logits(logits[:4], y[:4]) + soft_cross_entropy_from_logits(logits[4:], y[4:])
    return LossTerms(cls=cls, adv=adv, cls_mix=cls_mix, adv_mix=adv_mix, ent=entropy_from_logits(logits[4:]), ramp=RAMP)


def domain_loss(bundle, toy_batch) -> float:
    """L_adv + L_adv_mix as the discriminator sees them."""
    x, _, z = toy_batch
    with torch.no_grad():
        adv = soft_cross_entropy_from_logits(bundle.domain_logits(bundle.extract(x), None), z)
        _, adv_mix = mix_losses(toy_mixed(toy_batch), bundle, reversal_scale=None)
    return float(adv + adv_mix)


def step_only(bundle, toy_batch, params, adversarial_only: bool) -> None:
    optimizer = torch.optim.SGD(params, lr=1e-3)
    bundle.zero_grad()
    step_terms(bundle, toy_batch, adversarial_only).backward_objective().backward()
    optimizer.step()


# ============================================================================
# TESTS
# ============================================================================

class TestClosedForms:
    """Spot checks against closed-form values"""

    @pytest.mark.parametrize("num_classes", [2, 3, 7])
    def test_uniform_cross_entropy_is_log_c(self, num_classes):
        """Cross-entropy of a uniform prediction is ln C"""
        probs = torch.full((4, num_classes), 1.0 / num_classes, dtype=torch.float64)
        labels = torch.arange(4) % num_classes
        assert abs(float(soft_cross_entropy(probs, labels)) - math.log(num_classes)) < 1e-9

    @pytest.mark.parametrize("num_classes", [2, 3, 7])
    def test_maximum_entropy_is_log_c(self, num_classes):
        """Entropy of a uniform prediction is ln C"""
        probs = torch.full((3, num_classes), 1.0 / num_classes, dtype=torch.float64)
        assert abs(float(entropy_loss(probs)) - math.log(num_classes)) < 1e-9

    def test_one_hot_entropy_is_zero(self):
        """0 log 0 counts as 0"""
        probs = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
        assert float(entropy_loss(probs)) == 0.0

    def test_ramp_endpoints(self):
        """The ramp starts at exp(-5) and reaches 1"""
        assert abs(ramp_weight(0, 12) - math.exp(-5.0)) < 1e-9
        assert abs(ramp_weight(12, 12) - 1.0) < 1e-9
        assert ramp_weight(40, 12) == 1.0

    def test_ramp_monotone(self):
        """The ramp never decreases"""
        values = [ramp_weight(epoch, 12) for epoch in range(20)]
        assert values == sorted(values)

    def test_ramp_needs_positive_length(self):
        """ramp_epochs < 1 is a configuration error"""
        with pytest.raises(ConfigError):
            ramp_weight(0, 0)

    def test_logit_forms_match_probability_forms(self):
        """The training-path terms equal the documented formulas"""
        logits = torch.randn(6, 4, dtype=torch.float64)
        targets = torch.softmax(torch.randn(6, 4, dtype=torch.float64), dim=1)
        probs = torch.softmax(logits, dim=1)
        assert torch.allclose(soft_cross_entropy_from_logits(logits, targets), soft_cross_entropy(probs, targets))
        assert torch.allclose(entropy_from_logits(logits), entropy_loss(probs))

    def test_cls_loss_sums_both_sets(self):
        """L_cls is the labeled mean plus the pseudo-labeled mean"""
        probs = torch.full((2, 2), 0.5, dtype=torch.float64)
        total = cls_loss(probs, torch.tensor([0, 1]), probs, torch.tensor([1, 1]))
        assert abs(float(total) - 2 * math.log(2)) < 1e-12
        assert abs(float(cls_loss(probs, torch.tensor([0, 1]))) - math.log(2)) < 1e-12

    def test_soft_domain_labels(self):
        """adv_loss accepts soft domain labels"""
        probs = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
        assert abs(float(adv_loss(probs, torch.tensor([[0.3, 0.7]], dtype=torch.float64))) - math.log(2)) < 1e-12

    def test_empty_batches_are_zero(self):
        """Empty batches contribute nothing"""
        empty = torch.zeros(0, 3, dtype=torch.float64)
        assert float(soft_cross_entropy(empty, torch.zeros(0, dtype=torch.long))) == 0.0
        assert float(entropy_loss(empty)) == 0.0


class TestObjectives:
    """Tests for LossReport and objective assembly"""

    def test_assemble_objectives(self):
        """model = cls + cls_mix + ramp * (-adv - adv_mix + ent), discriminator = adv + adv_mix"""
        report = LossReport(cls=1.0, adv=0.5, cls_mix=0.25, adv_mix=0.125, ent=2.0, ramp=0.5)
        model, discriminator = assemble_objectives(report)
        assert model == pytest.approx(1.0 + 0.25 + 0.5 * (-0.5 - 0.125 + 2.0))
        assert discriminator == pytest.approx(0.625)

    def test_from_terms_fills_totals(self):
        """from_terms computes both totals"""
        report = LossReport.from_terms(cls_loss=1.0, adv=0.5, cls_mix=0.0, adv_mix=0.0, ent=0.0, ramp=1.0)
        assert report.total_model == pytest.approx(0.5)
        assert report.total_discriminator == pytest.approx(0.5)

    def test_non_finite_rejected(self):
        """NaN terms fail validation"""
        with pytest.raises(ValidationError):
            LossReport(cls=float("nan"))

    def test_loss_terms_finite_check(self):
        """is_finite spots an infinite term"""
        zero = torch.zeros((), dtype=torch.float64)
        terms = LossTerms(cls=torch.tensor(float("inf")), adv=zero, cls_mix=zero, adv_mix=zero, ent=zero, ramp=0.5)
        assert not terms.is_finite()

    def test_empty_mixed_batch(self, toy_bundle, toy_batch):
        """mix_losses on an empty batch is (0, 0)"""
        x, y, z = toy_batch
        empty = MixedBatch.empty_like(TaggedBatch(x=x, y=F.one_hot(y, 3).double(), z=F.one_hot(z, 2).double()))
        cls_mix, adv_mix = mix_losses(empty, toy_bundle)
        assert float(cls_mix) == 0.0 and float(adv_mix) == 0.0


class TestGradients:
    """Analytic gradients against central finite differences"""

    def test_toy_bundle_is_small(self, toy_bundle):
        """The gradient-check bundle stays under 100 parameters"""
        assert sum(param.numel() for param in toy_bundle.parameters()) <= 100

    @pytest.mark.parametrize("name", ["cls", "adv", "cls_mix", "adv_mix", "ent", "model", "discriminator"])
    def test_gradient_matches_finite_differences(self, toy_bundle, toy_batch, name):
        """Relative error below 1e-4 at step 1e-3"""
        loss_fn = loss_closures(toy_bundle, toy_batch)[name]
        params = flat_parameters(toy_bundle)
        analytic = analytic_gradient(loss_fn, params)
        numeric = numeric_gradient(loss_fn, params)
        assert relative_error(analytic, numeric) < TOLERANCE

    def test_single_pass_surrogate(self, toy_bundle, toy_batch):
        """
        One backward pass of the surrogate (reversal scale = ramp) gives F_d the
        discriminator-objective gradient and every other component the
        model-objective gradient.
        """
        x, y, z = toy_batch
        mixed = toy_mixed(toy_batch)
        closures = loss_closures(toy_bundle, toy_batch)
        params = flat_parameters(toy_bundle)
        discriminator_ids = {id(param) for param in toy_bundle.domain_discriminator.parameters()}

        model_grad = analytic_gradient(closures["model"], params)
        discriminator_grad = analytic_gradient(closures["discriminator"], params)

        def surrogate():
            features = toy_bundle.extract(x)
            logits = toy_bundle.class_logits(features, ClassifierHead.PREDICTIVE)
            cls = soft_cross_entropy_from_logits(logits[:4], y[:4]) + soft_cross_entropy_from_logits(logits[4:], y[4:])
            ent = entropy_from_logits(logits[4:])
            adv = soft_cross_entropy_from_logits(toy_bundle.domain_logits(features, RAMP), z)
            cls_mix, adv_mix = mix_losses(mixed, toy_bundle, reversal_scale=RAMP)
            return LossTerms(cls=cls, adv=adv, cls_mix=cls_mix, adv_mix=adv_mix, ent=ent, ramp=RAMP).backward_objective()

        surrogate_grad = analytic_gradient(surrogate, params)
        offset = 0
        for param in params:
            size = param.numel()
            expected = discriminator_grad if id(param) in discriminator_ids else model_grad
            assert torch.allclose(surrogate_grad[offset:offset + size], expected[offset:offset + size],
                                  rtol=0, atol=1e-9)
            offset += size


class TestReversalSign:
    """One optimizer step on the surrogate moves the two players in opposite directions"""

    def test_discriminator_step_lowers_domain_loss(self, toy_bundle, toy_batch):
        """With F_g frozen, a step on the full surrogate lowers the domain loss"""
        before = domain_loss(toy_bundle, toy_batch)
        step_only(toy_bundle, toy_batch, toy_bundle.domain_discriminator.parameters(), adversarial_only=False)
        assert domain_loss(toy_bundle, toy_batch) < before

    def test_extractor_step_raises_domain_loss(self, toy_bundle, toy_batch):
        """With F_d frozen, a step on the adversarial terms raises the domain loss"""
        before = domain_loss(toy_bundle, toy_batch)
        step_only(toy_bundle, toy_batch, toy_bundle.feature_extractor.parameters(), adversarial_only=True)
        assert domain_loss(toy_bundle, toy_batch) > before
