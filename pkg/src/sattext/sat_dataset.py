from dataclasses import dataclass
from typing import Optional, Tuple

from .sat_augment import DictionaryTranslationProvider, SynonymLexicon, TranslationProvider, load_lexicon
from .sat_config import SATConfig
from .sat_corpus import Example, SplitSet, TaskSpec, load_jsonl, make_splits
from .sat_defs import AugKinds
from .sat_errors import ConfigurationError
from .utils.logger import sat_logger as logger
from .utils.rng import derive_seed


@dataclass(frozen=True)
class SATDataset:
    """Everything a run needs besides its config: the labeled pool the splits are
    carved from, the test set, and the resources the augmenters use."""

    pool: Tuple[Example, ...]
    test: Tuple[Example, ...]
    task: TaskSpec
    dev: Optional[Tuple[Example, ...]] = None
    extra_unlabeled: Tuple[Example, ...] = ()
    lexicon: Optional[SynonymLexicon] = None
    provider: Optional[TranslationProvider] = None

    def make_split(self, cfg: SATConfig) -> SplitSet:
        return make_splits(
            self.pool,
            self.test,
            self.task,
            n_c=cfg.n_c,
            seed=derive_seed(cfg.seed, "split"),
            n_unlabeled_per_class=cfg.n_unlabeled_per_class,
            n_dev_per_class=cfg.n_dev_per_class,
            dev=self.dev,
            extra_unlabeled=self.extra_unlabeled,
        )


def load_dataset(cfg: SATConfig) -> SATDataset:
    if not cfg.train_path or not cfg.test_path:
        raise ConfigurationError("train_path and test_path must be set")
    # ids are keyed by split role, not file name
    pool, task = load_jsonl(cfg.train_path, source="train")
    test, _ = load_jsonl(cfg.test_path, task, source="test")
    dev = tuple(load_jsonl(cfg.dev_path, task, source="dev")[0]) if cfg.dev_path else None
    extra = tuple(load_jsonl(cfg.unlabeled_path, task, source="unlabeled")[0]) if cfg.unlabeled_path else ()

    kinds = {cfg.alpha1, cfg.alpha2}
    lexicon = None
    if cfg.lexicon_path:
        lexicon = load_lexicon(cfg.lexicon_path)
    elif kinds & {AugKinds.SR, AugKinds.RI}:
        raise ConfigurationError("SR and RI augmentation need lexicon_path")
    provider = None
    if cfg.bt_forward_path and cfg.bt_backward_path:
        provider = DictionaryTranslationProvider.from_tsv(cfg.bt_forward_path, cfg.bt_backward_path)
    elif AugKinds.BT in kinds:
        raise ConfigurationError("BT augmentation needs bt_forward_path and bt_backward_path")

    logger.info(
        f"dataset: {len(pool)} pool / {len(test)} test examples, {task.c} classes "
        f"({', '.join(task.class_names)}), lexicon entries: {len(lexicon) if lexicon else 0}"
    )
    return SATDataset(tuple(pool), tuple(test), task, dev, extra, lexicon, provider)
