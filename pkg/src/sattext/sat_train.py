"""The SAT training loop.

One step of ``SATTrainer.train_step`` runs, in this order:

    1. l_s on the labeled batch
    2. criterion scores of both augmented views of every labeled example, ranked
    3. one step on theta_G (rate beta) against l_aug_choice
    4. weak/strong rankings for the unlabeled batch from the updated choice network
    5. l_u with the confidence threshold tau
    6. one step on theta (rate eta) against l_s + lambda_u * l_u

The baselines reuse the same loop: ``supervised`` stops after step 1 and
``fixmatch`` skips steps 2-4 and always treats alpha1 as the weak view.
"""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .sat_augment import Augmenter, SynonymLexicon, TranslationProvider, apply_pair, build_augmenter
from .sat_autograd import Tensor, backward, constant, cross_entropy, gather, total
from .sat_choice import ChoiceNetwork, StrengthRanking, criterion_scores, rank_descending
from .sat_config import SATConfig, format_config, save_config
from .sat_corpus import Example, LabeledBatch, SplitSet, TaskSpec, UnlabeledBatch, Vocab, batch_streams
from .sat_dataset import SATDataset
from .sat_defs import CriterionKinds, TrainModes
from .sat_errors import AugmentationError, ConfigurationError, UsageError
from .sat_metrics import evaluate
from .sat_model import MainNetwork, save_checkpoint
from .sat_optim import make_optimizer
from .utils.logger import sat_logger as logger
from .utils.rng import derive_seed, make_rng

METRICS_HEADER = ("epoch", "split", "accuracy", "macro_f1", "loss_s", "loss_u", "loss_aug_choice", "coverage")


@dataclass(frozen=True)
class StepReport:
    loss_s: float
    loss_u: float
    loss_aug_choice: float
    loss_total: float
    coverage: float
    n_skipped: int = 0  # examples dropped because an augmenter failed


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    dev_accuracy: float
    dev_macro_f1: float
    loss_s: float
    loss_u: float
    loss_aug_choice: float
    coverage: float


@dataclass
class RunMetrics:
    epochs: List[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0
    test_accuracy: float = 0.0
    test_macro_f1: float = 0.0

    @property
    def best_dev_accuracy(self) -> float:
        return max(m.dev_accuracy for m in self.epochs)


@dataclass
class RunRecord:
    config: SATConfig
    mode: str
    metrics: RunMetrics
    wall_clock: float
    checkpoint_path: Optional[str] = None


################ Losses ################


def masked_pseudo_label_loss(
    weak_probs: np.ndarray, strong_probs: Tensor, tau: float, n: Optional[int] = None
) -> Tuple[Tensor, float]:
    """(1/n) sum_b 1{max q_w > tau} H(argmax q_w, p_strong), and the passing fraction.

    ``weak_probs`` is a constant, so the pseudo-labels carry no gradient. ``n``
    defaults to the number of rows and is the divisor whether or not a row passes.
    """
    weak_probs = np.atleast_2d(weak_probs)
    n = weak_probs.shape[0] if n is None else n
    if n == 0:
        raise UsageError("unsupervised loss on an empty batch")
    assert weak_probs.shape[0] <= n, f"{weak_probs.shape[0]} rows for a batch of {n}"
    passing = np.flatnonzero(weak_probs.max(axis=-1) > tau)
    if passing.size == 0:
        return constant(0.0), 0.0
    pseudo = np.argmax(weak_probs[passing], axis=-1)
    loss = total(cross_entropy(pseudo, gather(strong_probs, passing))) * (1.0 / n)
    return loss, passing.size / n


def unsupervised_loss(
    batch: UnlabeledBatch,
    views: Sequence[Tuple[Example, Example]],
    rankings: Sequence[StrengthRanking],
    main: MainNetwork,
    tau: float,
) -> Tuple[Tensor, float]:
    """l_u over ``batch`` given precomputed (view1, view2) pairs and one ranking per pair.

    ``views`` may be shorter than the batch when augmentation failed for some
    items; the divisor stays ``len(batch)``.
    """
    if len(batch) == 0:
        raise UsageError("unsupervised loss on an empty batch")
    if len(views) != len(rankings):
        raise UsageError(f"{len(views)} view pairs but {len(rankings)} rankings")
    if not views:
        return constant(0.0), 0.0
    weak = [pair[r.weak_index - 1].tokens for pair, r in zip(views, rankings)]
    strong = [pair[r.strong_index - 1].tokens for pair, r in zip(views, rankings)]
    return masked_pseudo_label_loss(main.predict_proba_batch(weak), main.proba_batch(strong), tau, n=len(batch))


def total_loss(l_s: Tensor, l_u: Tensor, lambda_u: float) -> Tensor:
    return l_s + l_u * lambda_u


################ Trainer ################


class SATTrainer:
    def __init__(
        self,
        cfg: SATConfig,
        split: SplitSet,
        task: TaskSpec,
        vocab: Vocab,
        lexicon: Optional[SynonymLexicon] = None,
        provider: Optional[TranslationProvider] = None,
        mode: str = TrainModes.SAT,
    ):
        if mode not in TrainModes.ALL:
            raise ConfigurationError(f"unknown training mode {mode!r}")
        self.cfg = cfg.validate()
        self.mode = mode
        self.task = task
        self.vocab = vocab
        self.split = split.encoded(vocab)

        self.main = MainNetwork(
            len(vocab), task.c, make_rng(cfg.seed, "main_init"), cfg.d_emb, cfg.d_hid, cfg.init_scale
        )
        self.main_opt = make_optimizer(cfg.optimizer, self.main.parameters(), cfg.eta)

        self.choice: Optional[ChoiceNetwork] = None
        self.choice_opt = None
        if mode == TrainModes.SAT:
            if cfg.criterion == CriterionKinds.SCORER and cfg.batch_size < 2:
                raise ConfigurationError("the scorer criterion needs batch_size >= 2 for in-batch negatives")
            self.choice = ChoiceNetwork(
                cfg.criterion,
                len(vocab),
                make_rng(cfg.seed, "choice_init"),
                d_emb=cfg.d_emb,
                d_hid=cfg.d_hid,
                d_proj=cfg.d_proj,
                temperature=cfg.temperature,
                init_scale=cfg.init_scale,
            )
            self.choice_opt = make_optimizer(cfg.optimizer, self.choice.parameters(), cfg.beta)

        self.alpha1: Optional[Augmenter] = None
        self.alpha2: Optional[Augmenter] = None
        if mode != TrainModes.SUPERVISED:
            self.alpha1 = build_augmenter(cfg.alpha1, cfg, lexicon, provider)
            self.alpha2 = build_augmenter(cfg.alpha2, cfg, lexicon, provider)
        self.aug_rng = make_rng(cfg.seed, "augment")
        self.stream = batch_streams(self.split, cfg.batch_size, cfg.mu, derive_seed(cfg.seed, "batches"))

    def _augment(self, examples: Sequence[Example]) -> Tuple[List[Tuple[Example, Example, Example]], int]:
        triples, skipped = [], 0
        for ex in examples:
            try:
                v1, v2 = apply_pair(ex, self.alpha1, self.alpha2, self.aug_rng, self.vocab)
            except AugmentationError as e:
                logger.warning(f"skipping {ex.uid}: {e}")
                skipped += 1
                continue
            triples.append((ex, v1, v2))
        return triples, skipped

    def update_choice_network(self, batch: LabeledBatch, beta: Optional[float] = None) -> Tuple[float, int]:
        """Rank both views of every labeled example with the criterion, then take one
        step on theta_G. Returns the pre-step l_aug_choice and the number of skipped examples.

        ``beta`` overrides the rate for this step only.
        """
        assert self.choice is not None, "no choice network in this mode"
        triples, skipped = self._augment(batch.examples)
        if not triples:
            return 0.0, skipped
        originals, views1, views2 = (list(t) for t in zip(*triples))
        labels = [ex.label for ex in originals]
        args = (self.main, self.choice, self.cfg.classifier_target)
        i1 = criterion_scores(self.cfg.criterion, originals, views1, labels, *args)
        i2 = criterion_scores(self.cfg.criterion, originals, views2, labels, *args)
        weak = [rank_descending(a, b).weak_index for a, b in zip(i1, i2)]
        rate = self.choice_opt.rate
        if beta is not None:
            self.choice_opt.rate = beta
        try:
            loss = self.choice.update(originals, views1, views2, weak, self.choice_opt.rate, self.choice_opt)
        finally:
            self.choice_opt.rate = rate
        return loss, skipped

    def _rank_unlabeled(self, triples) -> List[StrengthRanking]:
        if self.mode == TrainModes.FIXMATCH:
            return [StrengthRanking(1, 2, (0.0, 0.0)) for _ in triples]
        originals, views1, views2 = (list(t) for t in zip(*triples))
        return self.choice.infer(originals, views1, views2)

    def train_step(self, labeled: LabeledBatch, unlabeled: UnlabeledBatch) -> StepReport:
        cfg = self.cfg
        l_s = self.main.supervised_loss(labeled)
        l_u, coverage, loss_aug, skipped = constant(0.0), 0.0, 0.0, 0

        if self.mode == TrainModes.SAT:
            loss_aug, skipped = self.update_choice_network(labeled)
        if self.mode != TrainModes.SUPERVISED:
            triples, skipped_u = self._augment(unlabeled.examples)
            skipped += skipped_u
            if triples:
                rankings = self._rank_unlabeled(triples)
                views = [(v1, v2) for _, v1, v2 in triples]
                l_u, coverage = unsupervised_loss(unlabeled, views, rankings, self.main, cfg.tau)

        l_total = total_loss(l_s, l_u, cfg.lambda_u)
        self.main_opt.zero_grad()
        backward(l_total)
        self.main_opt.step()

        report = StepReport(l_s.item(), l_u.item(), loss_aug, l_total.item(), coverage, skipped)
        logger.debug(
            f"step: l_s={report.loss_s:.6f} l_u={report.loss_u:.6f} "
            f"l_aug_choice={report.loss_aug_choice:.6f} coverage={report.coverage:.3f}"
        )
        return report

    def train_epoch(self, epoch: int) -> EpochMetrics:
        reports = [
            self.train_step(labeled, unlabeled)
            for labeled, unlabeled in tqdm(
                self.stream,
                total=self.stream.steps_per_epoch,
                desc=f"epoch {epoch}",
                disable=not self.cfg.progress,
            )
        ]
        dev_acc, dev_f1 = evaluate(self.main, self.split.dev)
        avg = lambda name: float(np.mean([getattr(r, name) for r in reports])) if reports else 0.0
        metrics = EpochMetrics(
            epoch, dev_acc, dev_f1, avg("loss_s"), avg("loss_u"), avg("loss_aug_choice"), avg("coverage")
        )
        skipped = sum(r.n_skipped for r in reports)
        logger.info(
            f"epoch {epoch}: dev acc {dev_acc:.4f} macro-F1 {dev_f1:.4f} | l_s {metrics.loss_s:.4f} "
            f"l_u {metrics.loss_u:.4f} l_aug_choice {metrics.loss_aug_choice:.4f} coverage {metrics.coverage:.3f}"
            + (f" | {skipped} augmentations skipped" if skipped else "")
        )
        return metrics


################ Runs ################


def _fit(trainer: SATTrainer) -> RunMetrics:
    """Train with early stopping on dev accuracy (ties keep the earliest epoch),
    then restore the best parameters and score the test split."""
    cfg = trainer.cfg
    metrics = RunMetrics()
    best_acc, best_state, stale = -1.0, None, 0
    for epoch in range(1, cfg.epochs + 1):
        m = trainer.train_epoch(epoch)
        metrics.epochs.append(m)
        if m.dev_accuracy > best_acc:
            best_acc, best_state, stale = m.dev_accuracy, trainer.main.state_dict(), 0
            metrics.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info(f"early stop at epoch {epoch}: no dev improvement for {stale} epochs")
                break
    trainer.main.load_state_dict(best_state)
    logger.info(f"restored epoch {metrics.best_epoch} (dev acc {best_acc:.4f})")
    metrics.test_accuracy, metrics.test_macro_f1 = evaluate(trainer.main, trainer.split.test)
    logger.info(f"test acc {metrics.test_accuracy:.4f} macro-F1 {metrics.test_macro_f1:.4f}")
    return metrics


def _run(cfg: SATConfig, dataset: SATDataset, mode: str, out_dir: Union[str, Path, None]) -> RunRecord:
    cfg = cfg.validate()
    start = time.perf_counter()
    logger.info(f"{mode} run, seed {cfg.seed}, criterion {cfg.criterion}, alpha ({cfg.alpha1}, {cfg.alpha2})")
    logger.debug("config:\n" + format_config(cfg))
    split = dataset.make_split(cfg)
    if not split.dev:
        raise ConfigurationError("the dev split is empty; set n_dev_per_class or dev_path")
    if not split.test:
        raise ConfigurationError("the test split is empty")
    vocab = Vocab.build(split.labeled + split.unlabeled)
    trainer = SATTrainer(cfg, split, dataset.task, vocab, dataset.lexicon, dataset.provider, mode)
    metrics = _fit(trainer)

    checkpoint_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = str(out_dir / "checkpoint.npz")
        save_checkpoint(checkpoint_path, trainer.main, vocab, dataset.task)
        write_metrics_csv(metrics, out_dir / "metrics.csv")
        save_config(cfg, out_dir / "config.txt")
    return RunRecord(cfg, mode, metrics, time.perf_counter() - start, checkpoint_path)


def run_experiment(cfg: SATConfig, dataset: SATDataset, out_dir: Union[str, Path, None] = None) -> RunRecord:
    return _run(cfg, dataset, TrainModes.SAT, out_dir)


def run_baseline(
    kind: str, cfg: SATConfig, dataset: SATDataset, out_dir: Union[str, Path, None] = None
) -> RunRecord:
    """``supervised``: lambda_u forced to 0 and no choice network.
    ``fixmatch``: alpha1 is always the weak view, no choice network."""
    if kind == TrainModes.SUPERVISED:
        return _run(cfg.replace(lambda_u=0.0), dataset, kind, out_dir)
    if kind == TrainModes.FIXMATCH:
        return _run(cfg, dataset, kind, out_dir)
    raise ConfigurationError(f"unknown baseline {kind!r}, expected supervised or fixmatch")


def run_mode(mode: str, cfg: SATConfig, dataset: SATDataset, out_dir: Union[str, Path, None] = None) -> RunRecord:
    if mode == TrainModes.SAT:
        return run_experiment(cfg, dataset, out_dir)
    return run_baseline(mode, cfg, dataset, out_dir)


################ Output ################


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def metrics_rows(metrics: RunMetrics) -> List[Dict[str, str]]:
    rows = []
    for m in metrics.epochs:
        values = (m.dev_accuracy, m.dev_macro_f1, m.loss_s, m.loss_u, m.loss_aug_choice, m.coverage)
        rows.append(dict(zip(METRICS_HEADER, (str(m.epoch), "dev") + tuple(_fmt(v) for v in values))))
    test = (str(metrics.best_epoch), "test", _fmt(metrics.test_accuracy), _fmt(metrics.test_macro_f1), "", "", "", "")
    rows.append(dict(zip(METRICS_HEADER, test)))
    return rows


def write_metrics_csv(metrics: RunMetrics, path: Union[str, Path]):
    """One ``dev`` row per epoch, then a ``test`` row tagged with the restored epoch."""
    lines = [",".join(METRICS_HEADER)]
    lines += [",".join(row[k] for k in METRICS_HEADER) for row in metrics_rows(metrics)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
