"""
Training loop.

Each epoch: (1) optimize over ceil(N / batch_size) steps, building mixed
batches from S_l x S_p; (2) run F_c inference on S_u in eval mode;
(3) score with the bank from the previous epoch (s = q while a domain's bank
is not ready); (4) update the bank; (5) assign pseudo-labels and migrate the
confident samples to S_p. The final-epoch model is returned.
"""

import json
import math
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field
from tqdm import tqdm

from src import config
from src.config import ConfigError
from src.core.models import ClassifierHead, PseudoLabeledSample, Sample, TrainConfig, one_hot
from src.core.state import TrainState, init_train_state, migrate_confident, with_epoch
from src.dapl.bank import ClassRepBank, update_bank
from src.dapl.scoring import score_unlabeled, select_confident
from src.data.bundle import DatasetBundle, stack_inputs
from src.losses.terms import (
    LossReport,
    LossTerms,
    entropy_from_logits,
    mix_losses,
    ramp_weight,
    soft_cross_entropy_from_logits,
)
from src.mixup.augment import MixedBatch, TaggedBatch, build_mixed_batch
from src.model.bundle import ModelBundle, build_bundle, forward_class
from src.trainer import checkpoint as ckpt
from src.trainer.metrics import MetricsLogger
from src.utils.console import VERBOSITY_QUIET, get_verbosity, log_debug, log_info, log_success

TAG = "TRAINER"
INFERENCE_CHUNK = 512

EpochHook = Callable[[int, TrainState, ClassRepBank], None]


class EmptyDomainError(ConfigError):
    """Raised when a domain needed for training or evaluation has no samples"""
    pass


class NonFiniteLossError(Exception):
    """Raised when a loss term is NaN or infinite; dump_path holds the state dump"""

    def __init__(self, message: str, dump_path: Optional[Path] = None):
        super().__init__(message)
        self.dump_path = dump_path


class EpochSummary(BaseModel):
    """Per-epoch diagnostics."""

    epoch: int = Field(..., ge=0)
    losses: LossReport
    num_confident_new: int = Field(..., ge=0)
    pseudo_set_size: int = Field(..., ge=0)
    unlabeled_set_size: int = Field(..., ge=0)
    pseudo_label_accuracy: Optional[float] = Field(None, ge=0.0, le=1.0)
    pseudo_label_coverage: float = Field(0.0, ge=0.0, le=1.0)
    target_accuracy: Optional[float] = Field(None, ge=0.0, le=1.0)
    lr: float


def learning_rate_at(train_config: TrainConfig, epoch: int) -> float:
    """Step schedule: lr times decay_factor per decay epoch already reached."""
    passed = sum(1 for milestone in train_config.lr_decay_epochs if epoch >= milestone)
    return train_config.lr * (train_config.lr_decay_factor ** passed)


def evaluate(bundle: ModelBundle, domain: Sequence[Sample], batch_size: int = INFERENCE_CHUNK) -> float:
    """
    Top-1 accuracy of argmax F_m(F_g(x)) over a labeled domain.

    Raises:
        EmptyDomainError: the domain has no samples
    """
    if len(domain) == 0:
        raise EmptyDomainError(config.ERROR_EMPTY_DOMAIN)
    if any(sample.class_label is None for sample in domain):
        raise ConfigError("evaluation needs ground-truth class labels")

    labels = np.array([sample.class_label for sample in domain])
    inputs = stack_inputs(list(domain))
    was_training = bundle.training
    bundle.eval()
    predictions = []
    with torch.no_grad():
        for start in range(0, len(domain), batch_size):
            probs = forward_class(bundle, inputs[start:start + batch_size], ClassifierHead.GENERALIZABLE)
            predictions.append(probs.argmax(dim=1).cpu().numpy())
    bundle.train(was_training)
    return float((np.concatenate(predictions) == labels).mean())


class Trainer:
    """Runs the alternation of optimization and pseudo-labeling for one config."""

    def __init__(
        self,
        train_config: TrainConfig,
        data: DatasetBundle,
        output_dir: Optional[Union[str, Path]] = None,
        on_epoch_end: Optional[EpochHook] = None,
        run_info: Optional[Dict[str, object]] = None
    ):
        labeled = data.labeled_samples()
        if not labeled:
            raise EmptyDomainError(config.ERROR_EMPTY_LABELED_DOMAIN)
        if train_config.num_classes != data.num_classes:
            raise ConfigError(config.ERROR_INVALID_FIELD.format(
                field="num_classes",
                detail=f"config says {train_config.num_classes}, dataset has {data.num_classes} classes",
            ))

        self.config = train_config
        self.data = data
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.on_epoch_end = on_epoch_end
        self.run_info = dict(run_info or {})

        self.bundle = build_bundle(train_config, data.input_shape(), data.num_domains)
        self.dtype = self.bundle.parameter_dtype()
        self.device = self.bundle.parameter_device()
        self.optimizer = torch.optim.SGD(
            self.bundle.parameters(),
            lr=train_config.lr,
            momentum=train_config.momentum,
            weight_decay=train_config.weight_decay,
        )
        self.rng = np.random.default_rng(train_config.seed)

        unlabeled = data.unlabeled_samples()
        self.state = init_train_state(labeled, unlabeled)
        self.bank = ClassRepBank(
            train_config.num_classes,
            train_config.feature_dim,
            domain_ids=range(1, data.num_domains),
            dtype=self.dtype,
        )
        self.summaries: List[EpochSummary] = []
        self.start_epoch = 0
        self.last_predictions: Dict[int, int] = {}

        # Sample table: one row per training sample
        table_samples = labeled + unlabeled
        self.samples_by_id: Dict[int, Sample] = {sample.sample_id: sample for sample in table_samples}
        self.row_of: Dict[int, int] = {sample.sample_id: row for row, sample in enumerate(table_samples)}
        self.inputs = torch.from_numpy(stack_inputs(table_samples)).to(device=self.device, dtype=self.dtype)
        self.domain_of = torch.tensor([sample.domain_id for sample in table_samples], dtype=torch.long)
        self.class_target = torch.tensor(
            [sample.class_label if sample.class_label is not None else -1 for sample in table_samples],
            dtype=torch.long,
        )
        self.is_labeled_row = torch.tensor([sample.is_labeled for sample in table_samples], dtype=torch.bool)

        self.metrics = MetricsLogger(self.output_dir / config.METRICS_FILE_NAME) if self.output_dir else None

    # ============== Properties ==============

    @property
    def checkpoint_path(self) -> Optional[Path]:
        return self.output_dir / config.CHECKPOINT_FILE_NAME if self.output_dir else None

    @property
    def uses_unlabeled_batches(self) -> bool:
        cfg = self.config
        return cfg.use_pseudo_labels or cfg.use_adversarial or cfg.use_entropy

    def steps_per_epoch(self) -> int:
        if self.config.steps_per_epoch is not None:
            return self.config.steps_per_epoch
        return max(1, math.ceil(self.state.total_size / self.config.batch_size))

    # ============== Batches ==============

    def _rows(self, sample_ids: Sequence[int]) -> np.ndarray:
        return np.array([self.row_of[sample_id] for sample_id in sample_ids], dtype=np.int64)

    def _draw(self, pool: np.ndarray, count: int) -> np.ndarray:
        if len(pool) == 0 or count <= 0:
            return pool[:0]
        return pool[self.rng.integers(0, len(pool), size=count)]

    def _tagged(self, rows: np.ndarray, classes: torch.Tensor) -> TaggedBatch:
        index = torch.as_tensor(rows, dtype=torch.long)
        return TaggedBatch(
            x=self.inputs[index],
            y=F.one_hot(classes, self.config.num_classes).to(device=self.device, dtype=self.dtype),
            z=F.one_hot(self.domain_of[index], self.data.num_domains).to(device=self.device, dtype=self.dtype),
        )

    def _mixup_pool(self) -> Tuple[np.ndarray, torch.Tensor]:
        """Rows and class targets to mix with: S_p, plus S_u by last argmax q under mixup_all."""
        pseudo_ids = [item.sample_id for item in self.state.pseudo_set]
        rows = list(self._rows(pseudo_ids))
        classes = [int(self.class_target[row]) for row in rows]
        if self.config.mixup_all:
            for sample in self.state.unlabeled_set:
                if sample.sample_id in self.last_predictions:
                    rows.append(self.row_of[sample.sample_id])
                    classes.append(self.last_predictions[sample.sample_id])
        return np.array(rows, dtype=np.int64), torch.tensor(classes, dtype=torch.long)

    # ============== Optimization ==============

    def _step_losses(
        self,
        sup_rows: np.ndarray,
        unl_rows: np.ndarray,
        mixed: MixedBatch,
        ramp: float
    ) -> LossTerms:
        cfg = self.config
        bundle = self.bundle
        zero = torch.zeros((), dtype=self.dtype, device=self.device)

        rows = torch.as_tensor(np.concatenate([sup_rows, unl_rows]), dtype=torch.long)
        features = bundle.extract(self.inputs[rows])
        num_sup = len(sup_rows)
        sup_features = features[:num_sup]
        sup_index = rows[:num_sup]

        # L_cls: labeled and pseudo-labeled rows, each averaged separately
        logits = bundle.class_logits(sup_features, ClassifierHead.PREDICTIVE)
        labeled_mask = self.is_labeled_row[sup_index].to(self.device)
        targets = self.class_target[sup_index].to(self.device)
        cls = soft_cross_entropy_from_logits(logits[labeled_mask], targets[labeled_mask])
        pseudo_mask = ~labeled_mask
        if bool(pseudo_mask.any()):
            cls = cls + soft_cross_entropy_from_logits(logits[pseudo_mask], targets[pseudo_mask])

        ent = zero
        if cfg.use_entropy and len(unl_rows) > 0:
            unl_logits = bundle.class_logits(features[num_sup:], ClassifierHead.PREDICTIVE)
            ent = entropy_from_logits(unl_logits)

        adv = zero
        if cfg.use_adversarial:
            domain_logits = bundle.domain_logits(features, ramp)
            domain_targets = self.domain_of[rows].to(self.device)
            adv = soft_cross_entropy_from_logits(domain_logits, domain_targets)

        cls_mix, adv_mix = zero, zero
        if cfg.use_mixup and not mixed.is_empty:
            cls_mix, adv_mix = mix_losses(mixed, bundle, reversal_scale=ramp)
            if not (cfg.use_adv_mix and cfg.use_adversarial):
                adv_mix = zero

        return LossTerms(cls=cls, adv=adv, cls_mix=cls_mix, adv_mix=adv_mix, ent=ent, ramp=ramp)

    def _dump_nonfinite(self, epoch: int, step: int, terms: LossTerms) -> Path:
        target_dir = self.output_dir if self.output_dir else Path(tempfile.mkdtemp(prefix="dualpl_"))
        target_dir.mkdir(parents=True, exist_ok=True)
        dump_path = target_dir / config.NONFINITE_DUMP_FILE_NAME
        dump = {
            "epoch": epoch,
            "step": step,
            "losses": {
                name: str(float(getattr(terms, name).detach()))
                for name in ("cls", "adv", "cls_mix", "adv_mix", "ent")
            },
            "config": self.config.model_dump(mode="json"),
            "labeled_size": len(self.state.labeled_set),
            "unlabeled_size": len(self.state.unlabeled_set),
            "pseudo_size": len(self.state.pseudo_set),
            "parameter_norms": {
                name: float(param.detach().norm()) for name, param in self.bundle.named_parameters()
            },
        }
        dump_path.write_text(json.dumps(dump, indent=2, sort_keys=True), encoding="utf-8")
        return dump_path

    def _optimize_epoch(self, epoch: int) -> LossReport:
        cfg = self.config
        ramp = ramp_weight(epoch, cfg.resolved_ramp_epochs, cfg.ramp_coefficient)
        for group in self.optimizer.param_groups:
            group["lr"] = learning_rate_at(cfg, epoch)

        labeled_ids = [sample.sample_id for sample in self.state.labeled_set]
        pseudo_ids = [item.sample_id for item in self.state.pseudo_set]
        labeled_pool = self._rows(labeled_ids)
        sup_pool = self._rows(labeled_ids + pseudo_ids)
        unl_pool = self._rows([sample.sample_id for sample in self.state.unlabeled_set])
        if not self.uses_unlabeled_batches:
            unl_pool = unl_pool[:0]
        mix_rows, mix_classes = self._mixup_pool() if cfg.use_mixup else (np.zeros(0, dtype=np.int64), None)

        half = cfg.batch_size // 2
        sup_count = half if len(unl_pool) > 0 else cfg.batch_size
        unl_count = cfg.batch_size - half if len(unl_pool) > 0 else 0

        totals = {name: 0.0 for name in ("cls", "adv", "cls_mix", "adv_mix", "ent")}
        steps = self.steps_per_epoch()
        progress = tqdm(
            range(steps),
            desc=f"epoch {epoch}",
            leave=False,
            disable=get_verbosity() <= VERBOSITY_QUIET,
        )
        self.bundle.train()
        for step in progress:
            sup_rows = self._draw(sup_pool, sup_count)
            unl_rows = self._draw(unl_pool, unl_count)

            mixed = None
            if cfg.use_mixup:
                # labeled side of the mixup pairs: its own half batch from S_l
                labeled_rows = self._draw(labeled_pool, half)
                labeled_batch = self._tagged(labeled_rows, self.class_target[torch.as_tensor(labeled_rows)])
                pseudo_batch = None
                if len(mix_rows) > 0:
                    if len(mix_rows) >= len(labeled_rows):
                        picked = self.rng.permutation(len(mix_rows))[:len(labeled_rows)]
                    else:
                        picked = np.arange(len(mix_rows))
                    pseudo_batch = self._tagged(mix_rows[picked], mix_classes[torch.as_tensor(picked)])
                mixed = build_mixed_batch(labeled_batch, pseudo_batch, cfg.alpha, self.rng)
            else:
                mixed = MixedBatch.empty_like(self._tagged(sup_rows[:0], self.class_target[:0]))

            terms = self._step_losses(sup_rows, unl_rows, mixed, ramp)
            if not terms.is_finite():
                dump_path = self._dump_nonfinite(epoch, step, terms)
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} step {step}; state dumped to {dump_path}",
                    dump_path=dump_path,
                )

            self.optimizer.zero_grad()
            terms.backward_objective().backward()
            self.optimizer.step()

            values = terms.as_dict()
            for name in totals:
                totals[name] += values[name]
            if self.metrics:
                self.metrics.log_step(epoch, step, values)

        means = {name: total / steps for name, total in totals.items()}
        return LossReport.from_terms(
            cls_loss=means["cls"],
            adv=means["adv"],
            cls_mix=means["cls_mix"],
            adv_mix=means["adv_mix"],
            ent=means["ent"],
            ramp=ramp,
        )

    # ============== Pseudo-labeling ==============

    def infer_unlabeled(self) -> Tuple[List[int], List[int], torch.Tensor, torch.Tensor]:
        """(ids, domain ids, q from F_c, features) over S_u, eval mode, no grad."""
        unlabeled = self.state.unlabeled_set
        ids = [sample.sample_id for sample in unlabeled]
        domains = [sample.domain_id for sample in unlabeled]
        rows = torch.as_tensor(self._rows(ids), dtype=torch.long)
        features, probs = [], []
        self.bundle.eval()
        with torch.no_grad():
            for start in range(0, len(rows), INFERENCE_CHUNK):
                chunk = self.inputs[rows[start:start + INFERENCE_CHUNK]]
                chunk_features = self.bundle.extract(chunk)
                logits = self.bundle.class_logits(chunk_features, ClassifierHead.PREDICTIVE)
                features.append(chunk_features.cpu())
                probs.append(F.softmax(logits, dim=1).cpu())
        self.bundle.train()
        return ids, domains, torch.cat(probs), torch.cat(features)

    def _pseudo_label_epoch(self, epoch: int) -> int:
        """Score, update the bank, assign and migrate. Returns the number migrated."""
        cfg = self.config
        if not cfg.use_pseudo_labels or not self.state.unlabeled_set:
            return 0

        self.bank.begin_epoch(epoch)
        ids, domains, q, features = self.infer_unlabeled()
        scored = score_unlabeled(ids, domains, q, features, self.bank, cfg.gamma, use_dapl=cfg.use_dapl)
        update_bank(self.bank, scored, cfg.rep_policy)
        self.last_predictions = {sample_id: int(row.argmax()) for sample_id, row in zip(ids, q)}

        if epoch < cfg.warmup_epochs:
            return 0
        confident = select_confident(scored, self.samples_by_id, cfg.delta, epoch)
        self.state = migrate_confident(self.state, confident)
        for item in confident:
            self.class_target[self.row_of[item.sample_id]] = item.class_index
            self.last_predictions.pop(item.sample_id, None)
        return len(confident)

    # ============== Epoch loop ==============

    def _summarize(self, epoch: int, losses: LossReport, num_new: int) -> EpochSummary:
        pseudo_size = len(self.state.pseudo_set)
        unlabeled_size = len(self.state.unlabeled_set)
        pool = pseudo_size + unlabeled_size
        target = self.data.target_samples()
        return EpochSummary(
            epoch=epoch,
            losses=losses,
            num_confident_new=num_new,
            pseudo_set_size=pseudo_size,
            unlabeled_set_size=unlabeled_size,
            pseudo_label_accuracy=self.data.ground_truth.accuracy(self.state.pseudo_labels()),
            pseudo_label_coverage=pseudo_size / pool if pool else 0.0,
            target_accuracy=evaluate(self.bundle, target) if target else None,
            lr=learning_rate_at(self.config, epoch),
        )

    def run_epoch(self, epoch: int) -> EpochSummary:
        losses = self._optimize_epoch(epoch)
        num_new = self._pseudo_label_epoch(epoch)
        self.state = with_epoch(self.state, epoch + 1)
        summary = self._summarize(epoch, losses, num_new)
        self.summaries.append(summary)
        if self.metrics:
            self.metrics.log_epoch(summary.model_dump(mode="json"))
        if self.on_epoch_end is not None:
            self.on_epoch_end(epoch, self.state, self.bank)
        return summary

    def fit(self) -> Tuple[ModelBundle, List[EpochSummary]]:
        cfg = self.config
        if self.metrics and self.start_epoch == 0:
            self.metrics.reset()
            self.metrics.log_manifest({
                **self.run_info,
                "config": cfg.model_dump(mode="json"),
                "config_hash": cfg.config_hash(),
                "dataset": self.data.summary(),
            })
        log_info(TAG, f"training {cfg.epochs} epochs, {self.steps_per_epoch()} steps each (from epoch {self.start_epoch})")

        for epoch in range(self.start_epoch, cfg.epochs):
            summary = self.run_epoch(epoch)
            target = f"{summary.target_accuracy:.4f}" if summary.target_accuracy is not None else "n/a"
            log_info(
                TAG,
                f"epoch {epoch}: cls={summary.losses.cls:.4f} |S_p|={summary.pseudo_set_size} "
                f"(+{summary.num_confident_new}) target_acc={target}",
            )
            log_debug(TAG, f"epoch {epoch} losses: {summary.losses.model_dump()}")
            last_epoch = epoch == cfg.epochs - 1
            if self.checkpoint_path and cfg.checkpoint_every and ((epoch + 1) % cfg.checkpoint_every == 0 or last_epoch):
                self.save(epoch + 1)

        log_success(TAG, f"finished after {cfg.epochs} epochs")
        return self.bundle, list(self.summaries)

    # ============== Checkpoints ==============

    def checkpoint_payload(self, next_epoch: int) -> dict:
        cfg = self.config
        return {
            "format_version": ckpt.CHECKPOINT_FORMAT_VERSION,
            "config": cfg.model_dump_json(),
            "config_hash": cfg.config_hash(),
            "backbone_spec": self.bundle.backbone_spec.model_dump_json(),
            "num_classes": cfg.num_classes,
            "num_domains": self.data.num_domains,
            "dual_classifier": self.bundle.dual_classifier,
            "components": ckpt.component_payload(self.bundle),
            "optimizer": self.optimizer.state_dict(),
            "epoch": next_epoch,
            "numpy_rng": ckpt.dump_json(self.rng.bit_generator.state),
            "torch_rng": torch.get_rng_state(),
            "bank": self.bank.state_dict(),
            "sets": {
                "labeled": [sample.sample_id for sample in self.state.labeled_set],
                "unlabeled": [sample.sample_id for sample in self.state.unlabeled_set],
                "pseudo": [
                    [item.sample_id, item.class_index, item.score_at_assignment, item.epoch_assigned]
                    for item in self.state.pseudo_set
                ],
            },
            "last_predictions": [[sample_id, label] for sample_id, label in sorted(self.last_predictions.items())],
            "summaries": [summary.model_dump_json() for summary in self.summaries],
        }

    def save(self, next_epoch: int) -> Path:
        path = ckpt.save_checkpoint(self.checkpoint_path, self.checkpoint_payload(next_epoch))
        log_debug(TAG, f"checkpoint written to {path} (next epoch {next_epoch})")
        return path

    def resume(self, path: Union[str, Path]) -> None:
        """
        Restore everything needed to continue bit-for-bit.

        Raises:
            CheckpointError: corrupt archive, or a config hash that differs
                from the current config
        """
        payload = ckpt.load_checkpoint(path)
        ckpt.check_config_hash(payload, self.config)
        ckpt.restore_components(self.bundle, payload["components"])
        self.optimizer.load_state_dict(payload["optimizer"])
        self.rng.bit_generator.state = json.loads(payload["numpy_rng"])
        torch.set_rng_state(payload["torch_rng"])
        self.bank = ClassRepBank.from_state_dict(payload["bank"])

        sets = payload["sets"]
        try:
            labeled = [self.samples_by_id[sample_id] for sample_id in sets["labeled"]]
            unlabeled = [self.samples_by_id[sample_id] for sample_id in sets["unlabeled"]]
            pseudo = [
                PseudoLabeledSample(
                    sample=self.samples_by_id[int(sample_id)],
                    pseudo_label=one_hot(int(class_index), self.config.num_classes),
                    score_at_assignment=float(score),
                    epoch_assigned=int(epoch_assigned),
                )
                for sample_id, class_index, score, epoch_assigned in sets["pseudo"]
            ]
        except KeyError as e:
            raise ckpt.CheckpointError(f"checkpoint refers to sample {e} which is not in the dataset") from e

        next_epoch = int(payload["epoch"])
        self.state = TrainState(labeled_set=labeled, unlabeled_set=unlabeled, pseudo_set=pseudo, epoch=next_epoch)
        for item in pseudo:
            self.class_target[self.row_of[item.sample_id]] = item.class_index
        self.last_predictions = {int(sample_id): int(label) for sample_id, label in payload["last_predictions"]}
        self.summaries = [EpochSummary.model_validate_json(raw) for raw in payload["summaries"]]
        self.start_epoch = next_epoch
        if self.metrics:
            self.metrics.truncate_from(next_epoch)
        log_info(TAG, f"resumed from {path} at epoch {next_epoch}")


def train(
    train_config: TrainConfig,
    data: DatasetBundle,
    on_epoch_end: Optional[EpochHook] = None,
    output_dir: Optional[Union[str, Path]] = None,
    resume_from: Optional[Union[str, Path]] = None,
    run_info: Optional[Dict[str, object]] = None
) -> Tuple[ModelBundle, List[EpochSummary]]:
    """Train and return the final-epoch bundle with one summary per epoch."""
    trainer = Trainer(train_config, data, output_dir=output_dir, on_epoch_end=on_epoch_end, run_info=run_info)
    if resume_from is not None:
        trainer.resume(resume_from)
    return trainer.fit()
