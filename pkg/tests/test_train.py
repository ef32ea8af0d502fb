import math

import numpy as np
import pytest

from sattext.sat_ablation import run_seeds
from sattext.sat_augment import TranslationProvider
from sattext.sat_autograd import Parameter, backward, constant, finite_diff_check
from sattext.sat_choice import StrengthRanking
from sattext.sat_config import SATConfig
from sattext.sat_corpus import Example, UnlabeledBatch, Vocab
from sattext.sat_defs import AugKinds, CriterionKinds, TrainModes
from sattext.sat_errors import ConfigurationError, UsageError
from sattext.sat_model import MainNetwork
from sattext.sat_synthetic import as_dataset, generate_corpus
from sattext.sat_train import (
    METRICS_HEADER,
    SATTrainer,
    masked_pseudo_label_loss,
    run_baseline,
    run_experiment,
    total_loss,
    unsupervised_loss,
)


class FailingProvider(TranslationProvider):
    def translate(self, tokens, direction):
        raise RuntimeError("service unavailable")


def _trainer(cfg, dataset, mode=TrainModes.SAT, provider=None):
    split = dataset.make_split(cfg)
    vocab = Vocab.build(split.labeled + split.unlabeled)
    return SATTrainer(cfg, split, dataset.task, vocab, dataset.lexicon, provider or dataset.provider, mode)


def _steps(trainer, n):
    reports = []
    for (labeled, unlabeled), _ in zip(trainer.stream, range(n)):
        reports.append(trainer.train_step(labeled, unlabeled))
    return reports


def _ex(tokens, uid="u"):
    return Example(uid=uid, text="", words=(), tokens=tuple(tokens))


class TestMaskedPseudoLabelLoss:
    def test_confident_row(self):
        loss, coverage = masked_pseudo_label_loss(np.array([[0.98, 0.02]]), constant([[0.6, 0.4]]), 0.95)
        assert loss.item() == pytest.approx(0.510826, abs=1e-6)
        assert coverage == 1.0

    def test_below_threshold(self):
        loss, coverage = masked_pseudo_label_loss(np.array([[0.9, 0.1]]), constant([[0.6, 0.4]]), 0.95)
        assert loss.item() == 0.0
        assert coverage == 0.0

    def test_threshold_one_passes_nothing(self):
        rng = np.random.default_rng(0)
        weak = rng.dirichlet([0.1] * 3, size=20)
        weak[0] = [1.0, 0.0, 0.0]
        loss, coverage = masked_pseudo_label_loss(weak, constant(rng.dirichlet([1.0] * 3, size=20)), 1.0)
        assert loss.item() == 0.0
        assert coverage == 0.0

    def test_non_passing_rows_count_in_divisor(self):
        strong = constant([[0.6, 0.4], [0.5, 0.5]])
        one, _ = masked_pseudo_label_loss(np.array([[0.98, 0.02]]), constant([[0.6, 0.4]]), 0.95)
        two, coverage = masked_pseudo_label_loss(np.array([[0.98, 0.02], [0.5, 0.5]]), strong, 0.95)
        assert two.item() == pytest.approx(one.item() / 2)
        assert coverage == 0.5

    def test_explicit_divisor(self):
        loss, coverage = masked_pseudo_label_loss(np.array([[0.98, 0.02]]), constant([[0.6, 0.4]]), 0.95, n=4)
        assert loss.item() == pytest.approx(-math.log(0.6) / 4)
        assert coverage == 0.25

    def test_pseudo_label_is_argmax_of_weak(self):
        loss, _ = masked_pseudo_label_loss(np.array([[0.01, 0.99]]), constant([[0.6, 0.4]]), 0.95)
        assert loss.item() == pytest.approx(-math.log(0.4))

    def test_gradient_reaches_strong_view_only(self):
        strong = Parameter([[0.6, 0.4], [0.3, 0.7]])
        loss, _ = masked_pseudo_label_loss(np.array([[0.98, 0.02], [0.2, 0.8]]), strong, 0.95)
        backward(loss)
        np.testing.assert_allclose(strong.grad, [[-1 / (0.6 * 2), 0.0], [0.0, 0.0]])

    def test_coverage_monotone_in_tau(self):
        rng = np.random.default_rng(1)
        weak = rng.dirichlet([0.3] * 4, size=200)
        strong = constant(rng.dirichlet([1.0] * 4, size=200))
        coverages = [masked_pseudo_label_loss(weak, strong, tau)[1] for tau in np.linspace(0.05, 1.0, 20)]
        assert all(a >= b for a, b in zip(coverages, coverages[1:]))

    def test_empty_batch(self):
        with pytest.raises(UsageError):
            masked_pseudo_label_loss(np.zeros((0, 2)), constant(np.zeros((0, 2))), 0.95)


class TestUnsupervisedLoss:
    def _setup(self):
        main = MainNetwork(20, 3, np.random.default_rng(2), d_emb=6, d_hid=8, init_scale=1.0)
        batch = UnlabeledBatch(tuple(_ex([2, 3, 4], uid=f"u{i}") for i in range(3)))
        views = [(_ex([5, 6]), _ex([7, 8, 9])), (_ex([10, 11]), _ex([12]))]
        return main, batch, views

    def test_ranking_picks_weak_view(self):
        main, batch, views = self._setup()
        rankings = [StrengthRanking(2, 1, (0.1, 0.2)), StrengthRanking(1, 2, (0.3, 0.2))]
        loss, coverage = unsupervised_loss(batch, views, rankings, main, tau=1e-6)
        weak = main.predict_proba_batch([views[0][1].tokens, views[1][0].tokens])
        strong = main.proba_batch([views[0][0].tokens, views[1][1].tokens])
        expected, _ = masked_pseudo_label_loss(weak, strong, 1e-6, n=3)
        assert loss.item() == pytest.approx(expected.item(), abs=1e-12)
        assert coverage == pytest.approx(2 / 3)

    def _half_passing(self):
        # ids 14..19 only ever appear in the weak views
        main = MainNetwork(20, 4, np.random.default_rng(3), d_emb=8, d_hid=8, init_scale=1.0)
        batch = UnlabeledBatch(tuple(_ex([2, 3], uid=f"u{i}") for i in range(8)))
        views = [(_ex([2 + i, 14 + i]), _ex([3 + i, 8 + i])) for i in range(6)]
        rankings = [StrengthRanking(1, 2, (0.0, 0.0))] * 6
        confidence = np.sort(main.predict_proba_batch([weak.tokens for weak, _ in views]).max(axis=-1))
        tau = float(confidence[2] + confidence[3]) / 2
        return main, batch, views, rankings, tau

    def test_gradient_matches_finite_differences(self):
        main, batch, views, rankings, tau = self._half_passing()
        loss_fn = lambda: unsupervised_loss(batch, views, rankings, main, tau)[0]
        assert unsupervised_loss(batch, views, rankings, main, tau)[1] == pytest.approx(3 / 8)
        assert finite_diff_check(loss_fn, main.parameters(), n_samples=150) <= 1e-4

    def test_pseudo_labels_carry_no_gradient(self):
        main, batch, views, rankings, tau = self._half_passing()
        loss, _ = unsupervised_loss(batch, views, rankings, main, tau)
        backward(loss)
        assert np.all(main.embedding.grad[14:20] == 0.0)
        assert np.any(main.embedding.grad[3:14] != 0.0)

    def test_no_views(self):
        main, batch, _ = self._setup()
        loss, coverage = unsupervised_loss(batch, [], [], main, tau=0.5)
        assert (loss.item(), coverage) == (0.0, 0.0)

    def test_mismatched_rankings(self):
        main, batch, views = self._setup()
        with pytest.raises(UsageError):
            unsupervised_loss(batch, views, [StrengthRanking(1, 2, (0.0, 0.0))], main, tau=0.5)


class TestTotalLoss:
    def test_weighted_sum(self):
        assert total_loss(constant(0.5), constant(0.2), 2.0).item() == pytest.approx(0.9)

    def test_zero_weight(self):
        assert total_loss(constant(0.5), constant(0.2), 0.0).item() == 0.5


class TestTrainer:
    def test_zero_weight_matches_supervised(self, small_cfg, small_dataset):
        sat = _trainer(small_cfg.replace(lambda_u=0.0), small_dataset)
        sup = _trainer(small_cfg.replace(lambda_u=0.0), small_dataset, TrainModes.SUPERVISED)
        _steps(sat, 6)
        _steps(sup, 6)
        for name, value in sup.main.state_dict().items():
            assert np.array_equal(sat.main.state_dict()[name], value)

    def test_deterministic(self, small_cfg, small_dataset):
        first = _steps(_trainer(small_cfg, small_dataset), 5)
        second = _steps(_trainer(small_cfg, small_dataset), 5)
        assert first == second

    def test_total_decomposes(self, small_cfg, small_dataset):
        cfg = small_cfg.replace(lambda_u=0.7, tau=0.3)
        for report in _steps(_trainer(cfg, small_dataset), 5):
            assert report.loss_total == pytest.approx(report.loss_s + 0.7 * report.loss_u, abs=1e-9)
            assert 0.0 <= report.coverage <= 1.0

    def test_choice_update_leaves_main_untouched(self, small_cfg, small_dataset):
        trainer = _trainer(small_cfg, small_dataset)
        labeled, _ = next(iter(trainer.stream))
        before = trainer.main.state_dict()
        trainer.update_choice_network(labeled)
        for name, value in trainer.main.state_dict().items():
            assert np.array_equal(value, before[name])

    def test_choice_update_with_zero_rate(self, small_cfg, small_dataset):
        trainer = _trainer(small_cfg, small_dataset)
        labeled, _ = next(iter(trainer.stream))
        before = [p.value.copy() for p in trainer.choice.parameters()]
        trainer.update_choice_network(labeled, beta=0.0)
        for p, value in zip(trainer.choice.parameters(), before):
            assert np.array_equal(p.value, value)

    def test_rate_override_lasts_one_step(self, small_cfg, small_dataset):
        trainer = _trainer(small_cfg, small_dataset)
        labeled, _ = next(iter(trainer.stream))
        trainer.update_choice_network(labeled, beta=0.5)
        assert trainer.choice_opt.rate == small_cfg.beta

        reference = _trainer(small_cfg.replace(beta=0.5), small_dataset)
        reference.update_choice_network(next(iter(reference.stream))[0])
        for p, q in zip(trainer.choice.parameters(), reference.choice.parameters()):
            assert np.array_equal(p.value, q.value)

    def test_scorer_criterion(self, small_cfg, small_dataset):
        cfg = small_cfg.replace(criterion=CriterionKinds.SCORER)
        for report in _steps(_trainer(cfg, small_dataset), 3):
            assert report.loss_aug_choice > 0.0

    def test_scorer_ranks_untouched_view_weak(self, small_cfg, small_dataset):
        cfg = small_cfg.replace(criterion=CriterionKinds.SCORER, alpha1=AugKinds.RI, alpha2=AugKinds.ID)
        trainer = _trainer(cfg, small_dataset)
        _, unlabeled = next(iter(trainer.stream))
        originals, views1, views2 = zip(*trainer._augment(unlabeled.examples)[0])
        rankings = trainer.choice.infer(list(originals), list(views1), list(views2))
        assert [r.weak_index for r in rankings] == [2] * len(unlabeled)

    def test_scorer_needs_batch_of_two(self, small_cfg, small_dataset):
        cfg = small_cfg.replace(criterion=CriterionKinds.SCORER, batch_size=1)
        with pytest.raises(ConfigurationError):
            _trainer(cfg, small_dataset)

    def test_unknown_mode(self, small_cfg, small_dataset):
        with pytest.raises(ConfigurationError):
            _trainer(small_cfg, small_dataset, mode="mixmatch")

    def test_failed_augmentations_are_skipped(self, small_cfg, small_dataset):
        trainer = _trainer(small_cfg, small_dataset, provider=FailingProvider())
        (report,) = _steps(trainer, 1)
        assert report.n_skipped == small_cfg.batch_size * (1 + small_cfg.mu)
        assert (report.loss_u, report.loss_aug_choice, report.coverage) == (0.0, 0.0, 0.0)

    def test_supervised_mode_has_no_choice_network(self, small_cfg, small_dataset):
        trainer = _trainer(small_cfg, small_dataset, TrainModes.SUPERVISED)
        assert trainer.choice is None and trainer.alpha1 is None
        for report in _steps(trainer, 2):
            assert (report.loss_u, report.loss_aug_choice) == (0.0, 0.0)

    def test_fixmatch_uses_first_view_as_weak(self, small_cfg, small_dataset):
        trainer = _trainer(small_cfg.replace(tau=0.3), small_dataset, TrainModes.FIXMATCH)
        assert trainer.choice is None
        for report in _steps(trainer, 2):
            assert report.loss_aug_choice == 0.0


class TestRuns:
    def test_early_stopping_bound(self, small_cfg, small_dataset):
        cfg = small_cfg.replace(epochs=8, patience=2)
        metrics = run_experiment(cfg, small_dataset).metrics
        accs = [m.dev_accuracy for m in metrics.epochs]
        assert len(accs) <= min(cfg.epochs, metrics.best_epoch + cfg.patience)
        assert metrics.best_epoch == accs.index(max(accs)) + 1
        assert metrics.best_dev_accuracy == max(accs)
        assert 0.0 <= metrics.test_accuracy <= 1.0

    def test_outputs_are_reproducible(self, small_cfg, small_dataset, tmp_path):
        a = run_experiment(small_cfg, small_dataset, tmp_path / "a")
        b = run_experiment(small_cfg, small_dataset, tmp_path / "b")
        csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
        assert csv_a == (tmp_path / "b" / "metrics.csv").read_bytes()
        lines = csv_a.decode("utf-8").splitlines()
        assert lines[0] == ",".join(METRICS_HEADER)
        assert len(lines) == 1 + len(a.metrics.epochs) + 1
        assert lines[-1].split(",")[1] == "test"
        assert (tmp_path / "a" / "checkpoint.npz").exists()
        assert (tmp_path / "a" / "config.txt").read_text(encoding="utf-8").startswith("train_path = ")
        assert a.metrics.test_accuracy == b.metrics.test_accuracy

    def test_supervised_baseline(self, small_cfg, small_dataset):
        record = run_baseline(TrainModes.SUPERVISED, small_cfg, small_dataset)
        assert record.config.lambda_u == 0.0
        assert all(m.loss_u == 0.0 and m.loss_aug_choice == 0.0 for m in record.metrics.epochs)

    def test_fixmatch_baseline(self, small_cfg, small_dataset):
        record = run_baseline(TrainModes.FIXMATCH, small_cfg.replace(alpha1=AugKinds.PD), small_dataset)
        assert record.mode == TrainModes.FIXMATCH
        assert all(m.loss_aug_choice == 0.0 for m in record.metrics.epochs)

    def test_unknown_baseline(self, small_cfg, small_dataset):
        with pytest.raises(ConfigurationError):
            run_baseline("mixmatch", small_cfg, small_dataset)

    def test_empty_dev_split(self, small_cfg, small_dataset):
        with pytest.raises(ConfigurationError):
            run_experiment(small_cfg.replace(n_dev_per_class=0), small_dataset)

    @pytest.mark.slow
    def test_zero_weight_matches_supervised_test_accuracy(self, small_cfg, small_dataset):
        for seed in (0, 1, 2):
            cfg = small_cfg.replace(lambda_u=0.0, seed=seed, epochs=4)
            sat = run_experiment(cfg, small_dataset).metrics
            sup = run_baseline(TrainModes.SUPERVISED, cfg, small_dataset).metrics
            assert sat.test_accuracy == sup.test_accuracy
            assert sat.best_epoch == sup.best_epoch

    @pytest.mark.slow
    def test_supervised_learns_synthetic_task(self, small_cfg, small_dataset):
        cfg = small_cfg.replace(n_c=20, eta=0.5, epochs=30, patience=30, init_scale=0.5)
        record = run_baseline(TrainModes.SUPERVISED, cfg, small_dataset)
        assert record.metrics.test_accuracy > 0.6


@pytest.fixture(scope="module")
def ordering_dataset():
    # 10 labeled + 25 dev + 500 unlabeled per class; keywords have no synonyms, so RI only adds noise
    corpus = generate_corpus(
        n_classes=4, vocab_size=500, n_train_per_class=535, n_test_per_class=100,
        keyword_fraction=0.9, signal=0.3, keyword_synonyms=False, seed=7,
    )
    return as_dataset(corpus)


@pytest.mark.slow
def test_sat_beats_supervised_only(ordering_dataset):
    # alpha1 is the padded RI view, which fixmatch always takes as the weak one
    cfg = SATConfig(
        n_c=10, n_unlabeled_per_class=500, n_dev_per_class=25, optimizer="adagrad", eta=0.05, beta=0.05,
        tau=0.9, ri_rate=0.9, alpha1=AugKinds.RI, alpha2=AugKinds.ID, epochs=8, patience=8,
    ).validate()
    _, supervised = run_seeds(cfg, ordering_dataset, mode=TrainModes.SUPERVISED, jobs=4)
    _, fixmatch_swapped = run_seeds(cfg, ordering_dataset, mode=TrainModes.FIXMATCH, jobs=4)
    assert supervised.mean_accuracy < fixmatch_swapped.mean_accuracy
    for criterion in CriterionKinds.ALL:
        _, sat = run_seeds(cfg.replace(criterion=criterion), ordering_dataset, jobs=4)
        assert sat.mean_accuracy >= fixmatch_swapped.mean_accuracy, criterion
        assert sat.mean_accuracy - supervised.mean_accuracy >= 0.05, criterion
