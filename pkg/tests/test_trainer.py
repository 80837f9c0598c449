"""
Tests for the training loop: evaluation, set bookkeeping, bank ordering,
determinism, checkpoint resume and failure handling.
"""

import shutil

import numpy as np
import pytest
import torch

from src import config
from src.core.models import ClassifierHead, Sample, TrainConfig
from src.dapl.bank import ACCESS_READ, ACCESS_WRITE
from src.losses.terms import mix_losses
from src.model.bundle import build_bundle, forward_class
from src.trainer import service
from src.trainer.checkpoint import CheckpointError, checkpoint_digest, load_checkpoint
from src.trainer.service import (
    EmptyDomainError,
    NonFiniteLossError,
    Trainer,
    evaluate,
    learning_rate_at,
    train,
)


def predicted_classes(bundle, samples) -> np.ndarray:
    inputs = np.stack([sample.input for sample in samples])
    with torch.no_grad():
        return forward_class(bundle, inputs, ClassifierHead.GENERALIZABLE).argmax(dim=1).numpy()


def relabeled(samples, labels):
    return [
        Sample(sample_id=sample.sample_id, input=sample.input, class_label=int(label), domain_id=sample.domain_id)
        for sample, label in zip(samples, labels)
    ]


class TestEvaluate:
    """Tests for target-domain accuracy"""

    @pytest.fixture
    def bundle_and_target(self, tiny_config, tiny_data):
        bundle = build_bundle(tiny_config, tiny_data.input_shape(), tiny_data.num_domains)
        bundle.eval()
        target = tiny_data.target_samples()[:10]
        return bundle, target, predicted_classes(bundle, target)

    def test_perfect_predictions(self, bundle_and_target):
        """Labels equal to the predictions give 1.0"""
        bundle, target, predictions = bundle_and_target
        assert evaluate(bundle, relabeled(target, predictions)) == 1.0

    def test_all_wrong(self, bundle_and_target):
        """Shifted labels give 0.0"""
        bundle, target, predictions = bundle_and_target
        assert evaluate(bundle, relabeled(target, (predictions + 1) % 3)) == 0.0

    def test_partial(self, bundle_and_target):
        """7 of 10 correct gives 0.7"""
        bundle, target, predictions = bundle_and_target
        labels = predictions.copy()
        labels[7:] = (labels[7:] + 1) % 3
        assert evaluate(bundle, relabeled(target, labels)) == pytest.approx(0.7)

    def test_empty_domain(self, bundle_and_target):
        """Evaluating nothing is an error"""
        bundle, _, _ = bundle_and_target
        with pytest.raises(EmptyDomainError):
            evaluate(bundle, [])


class TestLearningRate:
    """Tests for the step schedule"""

    def test_decay_points(self):
        """lr is divided by 10 at epochs 30 and 50"""
        cfg = TrainConfig(num_classes=3)
        assert learning_rate_at(cfg, 0) == pytest.approx(0.01)
        assert learning_rate_at(cfg, 29) == pytest.approx(0.01)
        assert learning_rate_at(cfg, 30) == pytest.approx(0.001)
        assert learning_rate_at(cfg, 50) == pytest.approx(0.0001)


class TestTrainingLoop:
    """Tests for set bookkeeping across epochs"""

    def test_zero_epochs(self, tiny_config, tiny_data):
        """epochs = 0 returns the initial model and no summaries"""
        bundle, summaries = train(tiny_config.with_overrides(epochs=0), tiny_data)
        assert summaries == []
        assert bundle is not None

    @pytest.mark.integration
    def test_set_bookkeeping(self, tiny_config, tiny_data):
        """Over 40 epochs sizes are conserved, S_p only grows and pseudo-labels never change"""
        records = []

        def hook(epoch, state, bank):
            records.append((state.total_size, len(state.pseudo_set), state.pseudo_labels()))

        _, summaries = train(tiny_config.with_overrides(epochs=40, delta=0.6), tiny_data, on_epoch_end=hook)

        assert len(summaries) == 40
        totals = {total for total, _, _ in records}
        assert totals == {len(tiny_data.labeled_samples()) + len(tiny_data.unlabeled_samples())}
        sizes = [size for _, size, _ in records]
        assert sizes == sorted(sizes)
        for earlier, later in zip(records, records[1:]):
            for sample_id, label in earlier[2].items():
                assert later[2][sample_id] == label

    def test_summaries_report_accuracy(self, tiny_config, tiny_data):
        """Target and pseudo-label accuracy are within [0, 1]"""
        _, summaries = train(tiny_config, tiny_data)
        last = summaries[-1]
        assert 0.0 <= last.target_accuracy <= 1.0
        if last.pseudo_set_size:
            assert 0.0 <= last.pseudo_label_accuracy <= 1.0
        assert [summary.epoch for summary in summaries] == [0, 1, 2, 3]

    def test_bank_read_follows_previous_write(self, tiny_config, tiny_data):
        """Scoring in epoch e only reads bank rows written before epoch e"""
        trainer = Trainer(tiny_config.with_overrides(delta=0.9), tiny_data)
        generator = torch.Generator().manual_seed(0)
        trainer.bank.begin_epoch(-1)
        for class_index in range(3):
            trainer.bank._set_row(1, class_index, torch.randn(tiny_config.feature_dim, generator=generator))
        trainer.bank._record(ACCESS_WRITE)
        trainer.fit()

        reads = 0
        last_write = None
        for access, epoch in trainer.bank.access_log:
            if access == ACCESS_WRITE:
                last_write = epoch
            elif access == ACCESS_READ:
                reads += 1
                assert last_write is not None and last_write < epoch
        assert reads > 0

    def test_supone_never_pseudo_labels(self, tiny_config, tiny_data):
        """The labeled-only arm keeps S_p empty"""
        cfg = tiny_config.with_overrides(
            use_pseudo_labels=False, use_adversarial=False, use_mixup=False, use_entropy=False, use_dapl=False,
        )
        _, summaries = train(cfg, tiny_data)
        assert all(summary.pseudo_set_size == 0 for summary in summaries)

    def test_empty_labeled_domain(self, tiny_config, tiny_data):
        """No labeled samples is an error"""
        domains = dict(tiny_data.domains)
        domains[tiny_data.labeled_domain] = []
        with pytest.raises(EmptyDomainError):
            Trainer(tiny_config, tiny_data.model_copy(update={"domains": domains}))


class TestAblationBranches:
    """Head routing and mixup pools under the ablation switches"""

    @pytest.fixture
    def mixed_calls(self, monkeypatch):
        """(labeled batch, pseudo batch, mixed batch) of every build_mixed_batch call"""
        calls = []
        original = service.build_mixed_batch

        def recording(labeled_batch, pseudo_batch, alpha, rng):
            mixed = original(labeled_batch, pseudo_batch, alpha, rng)
            calls.append((labeled_batch, pseudo_batch, mixed))
            return mixed

        monkeypatch.setattr(service, "build_mixed_batch", recording)
        return calls

    def test_labeled_side_is_a_half_batch_from_labeled_domain(self, tiny_config, tiny_data, mixed_calls):
        """Every mixup call pairs batch_size // 2 rows of domain 0"""
        train(tiny_config, tiny_data)
        assert len(mixed_calls) == tiny_config.epochs * tiny_config.steps_per_epoch
        for labeled_batch, _, _ in mixed_calls:
            assert labeled_batch.size == tiny_config.batch_size // 2
            assert torch.all(labeled_batch.z.argmax(dim=1) == 0)

    def test_single_classifier_trains_predictive_head_on_mixed_samples(self, tiny_config, tiny_data, mixed_calls):
        """Without F_m the mixed class loss reaches F_c"""
        trainer = Trainer(tiny_config.with_overrides(use_dual_classifier=False, epochs=3), tiny_data)
        _, summaries = trainer.fit()
        assert trainer.bundle.generalizable_classifier is None
        assert all(summary.losses.cls_mix > 0 for summary in summaries[1:])
        assert summaries[-1].target_accuracy is not None

        mixed = mixed_calls[-1][2]
        assert not mixed.is_empty
        trainer.bundle.zero_grad()
        cls_mix, _ = mix_losses(mixed, trainer.bundle)
        cls_mix.backward()
        grad = trainer.bundle.predictive_classifier.weight.grad
        assert grad is not None and float(grad.abs().sum()) > 0

    def test_mixup_all_mixes_unlabeled_samples_with_argmax_labels(self, tiny_config, tiny_data, mixed_calls):
        """With a threshold no score passes, S_u still enters the mixup pool under its argmax q"""
        trainer = Trainer(tiny_config.with_overrides(mixup_all=True, delta=2.0, epochs=2), tiny_data)
        _, summaries = trainer.fit()
        assert all(summary.pseudo_set_size == 0 for summary in summaries)
        assert summaries[0].losses.cls_mix == 0.0
        assert summaries[1].losses.cls_mix > 0

        rows, classes = trainer._mixup_pool()
        ids, _, q, _ = trainer.infer_unlabeled()
        expected = {trainer.row_of[sample_id]: int(row.argmax()) for sample_id, row in zip(ids, q)}
        assert dict(zip(rows.tolist(), classes.tolist())) == expected

        second_epoch = mixed_calls[tiny_config.steps_per_epoch:]
        for _, pseudo_batch, _ in second_epoch:
            assert pseudo_batch is not None
            assert torch.all(pseudo_batch.z.argmax(dim=1) == 1)

    def test_without_mixup_all_nothing_to_mix(self, tiny_config, tiny_data):
        """With an empty S_p and mixup_all off the mixed losses stay 0"""
        _, summaries = train(tiny_config.with_overrides(delta=2.0, epochs=2), tiny_data)
        assert all(summary.losses.cls_mix == 0.0 for summary in summaries)

    def test_adv_mix_disabled_is_exactly_zero(self, tiny_config, tiny_data):
        """use_adv_mix off zeroes the mixed domain loss and keeps the others"""
        _, summaries = train(tiny_config.with_overrides(use_adv_mix=False, epochs=3), tiny_data)
        assert all(summary.losses.adv_mix == 0.0 for summary in summaries)
        assert summaries[-1].losses.cls_mix > 0
        assert summaries[-1].losses.adv > 0

class TestDeterminism:
    """Tests for seeded reproducibility and resume"""

    def test_same_seed_same_run(self, tiny_config, tiny_data, tmp_path):
        """Two runs give identical summaries and checkpoint contents"""
        _, first = train(tiny_config, tiny_data, output_dir=tmp_path / "a")
        _, second = train(tiny_config, tiny_data, output_dir=tmp_path / "b")
        assert first == second
        digest_a = checkpoint_digest(load_checkpoint(tmp_path / "a" / config.CHECKPOINT_FILE_NAME))
        digest_b = checkpoint_digest(load_checkpoint(tmp_path / "b" / config.CHECKPOINT_FILE_NAME))
        assert digest_a == digest_b

    def test_resume_matches_uninterrupted_run(self, tiny_config, tiny_data, tmp_path):
        """Resuming from the epoch-2 checkpoint reproduces the full run"""
        run_dir = tmp_path / "full"
        snapshot = tmp_path / "snapshot.pt"

        def hook(epoch, state, bank):
            if epoch == 2:
                shutil.copy(run_dir / config.CHECKPOINT_FILE_NAME, snapshot)

        _, full = train(tiny_config, tiny_data, on_epoch_end=hook, output_dir=run_dir)
        assert load_checkpoint(snapshot)["epoch"] == 2

        _, resumed = train(tiny_config, tiny_data, output_dir=tmp_path / "resumed", resume_from=snapshot)
        assert resumed == full

    def test_resume_with_changed_config(self, tiny_config, tiny_data, tmp_path):
        """A different config hash refuses to resume"""
        train(tiny_config.with_overrides(epochs=1), tiny_data, output_dir=tmp_path / "run")
        checkpoint = tmp_path / "run" / config.CHECKPOINT_FILE_NAME
        with pytest.raises(CheckpointError):
            train(tiny_config.with_overrides(epochs=1, gamma=0.5), tiny_data, resume_from=checkpoint)

    def test_corrupt_checkpoint(self, tiny_config, tiny_data, tmp_path):
        """Garbage bytes are a checkpoint error"""
        broken = tmp_path / "broken.pt"
        broken.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            train(tiny_config, tiny_data, resume_from=broken)


class TestNonFiniteLoss:
    """Tests for NaN handling"""

    def test_nan_loss_dumps_state(self, tiny_config, tiny_data, tmp_path, monkeypatch):
        """A NaN term aborts the run and writes a diagnostic dump"""
        def poisoned(logits, targets):
            return torch.tensor(float("nan"), dtype=logits.dtype)

        monkeypatch.setattr(service, "soft_cross_entropy_from_logits", poisoned)
        with pytest.raises(NonFiniteLossError) as excinfo:
            train(tiny_config, tiny_data, output_dir=tmp_path)
        assert excinfo.value.dump_path == tmp_path / config.NONFINITE_DUMP_FILE_NAME
        assert excinfo.value.dump_path.exists()
