import json
import string
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .sat_defs import PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN
from .sat_errors import ConfigurationError, DataError, DegenerateInputError, LoadError, SamplingError, UsageError
from .utils.logger import sat_logger as logger


# Per-class (unlabeled, dev) sizes from the dataset statistics table
DATASET_PRESETS = {
    "ag_news": {"n_unlabeled_per_class": 5000, "n_dev_per_class": 2000},
    "yahoo": {"n_unlabeled_per_class": 5000, "n_dev_per_class": 2000},
    "imdb": {"n_unlabeled_per_class": 5000, "n_dev_per_class": 1000},
}


@dataclass(frozen=True)
class Example:
    uid: str  # identity, "<source>:<line>" for loaded data
    text: str
    words: Tuple[str, ...]
    tokens: Tuple[int, ...] = ()  # vocabulary ids, filled by Vocab.encode_example
    label: Optional[int] = None


@dataclass(frozen=True)
class TaskSpec:
    class_names: Tuple[str, ...]

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise DataError(f"need at least 2 classes, got {list(self.class_names)}")
        if len(set(self.class_names)) != len(self.class_names):
            raise DataError(f"class names are not unique: {list(self.class_names)}")

    @property
    def c(self) -> int:
        return len(self.class_names)


class Vocab:
    def __init__(self, words: Sequence[str] = ()):
        self.itos: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: Dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for w in words:
            if w not in self.stoi:
                self.stoi[w] = len(self.itos)
                self.itos.append(w)

    @classmethod
    def build(cls, examples: Sequence[Example]) -> "Vocab":
        """Most frequent first, ties alphabetical."""
        counts = Counter(w for ex in examples for w in ex.words)
        ordered = sorted(counts, key=lambda w: (-counts[w], w))
        return cls(ordered)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word: str):
        return word in self.stoi

    def encode(self, words: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.stoi.get(w, UNK_ID) for w in words)

    def decode(self, ids: Sequence[int]) -> Tuple[str, ...]:
        return tuple(self.itos[i] for i in ids)

    def encode_example(self, ex: Example) -> Example:
        return replace(ex, tokens=self.encode(ex.words))


@dataclass(frozen=True)
class LabeledBatch:
    examples: Tuple[Example, ...]

    def __len__(self):
        return len(self.examples)

    @property
    def labels(self) -> np.ndarray:
        missing = [ex.uid for ex in self.examples if ex.label is None]
        if missing:
            raise UsageError(f"labeled batch contains unlabeled examples: {missing}")
        return np.array([ex.label for ex in self.examples], dtype=np.int64)


@dataclass(frozen=True)
class UnlabeledBatch:
    examples: Tuple[Example, ...]

    def __len__(self):
        return len(self.examples)


@dataclass(frozen=True)
class SplitSet:
    labeled: Tuple[Example, ...]
    unlabeled: Tuple[Example, ...]
    dev: Tuple[Example, ...]
    test: Tuple[Example, ...]

    def __post_init__(self):
        seen: Dict[str, str] = {}
        for name in ("labeled", "unlabeled", "dev", "test"):
            for ex in getattr(self, name):
                if ex.uid in seen and seen[ex.uid] != name:
                    raise DataError(f"example {ex.uid} appears in both {seen[ex.uid]} and {name}")
                seen[ex.uid] = name

    def encoded(self, vocab: Vocab) -> "SplitSet":
        enc = lambda xs: tuple(vocab.encode_example(ex) for ex in xs)
        return SplitSet(enc(self.labeled), enc(self.unlabeled), enc(self.dev), enc(self.test))


################ Loading ################


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, strip leading/trailing punctuation per token."""
    words = [w.strip(string.punctuation) for w in text.lower().split()]
    words = [w for w in words if w]
    if not words:
        raise DegenerateInputError(f"text has no tokens: {text!r}")
    return words


def load_jsonl(
    path: Union[str, Path], task: Optional[TaskSpec] = None, source: Optional[str] = None
) -> Tuple[List[Example], TaskSpec]:
    """Read one JSON object per line with "text" and optional "label".

    Example ids are ``<source>:<line>``; ``source`` defaults to the file name.

    Without ``task`` class indices follow first appearance; with ``task`` the
    classes are fixed and unseen labels are an error.
    """
    path = Path(path)
    source = source or path.name
    class_names: List[str] = list(task.class_names) if task is not None else []
    index = {name: i for i, name in enumerate(class_names)}
    examples = []
    try:
        handle = path.open(encoding="utf-8")
    except OSError as e:
        raise LoadError(f"cannot open {path}: {e}") from e
    with handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise LoadError(f"{path}:{lineno}: malformed JSON ({e.msg})") from e
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                raise LoadError(f"{path}:{lineno}: expected an object with a string \"text\" field")
            raw_label = obj.get("label")
            label = None
            if raw_label is not None:
                raw_label = str(raw_label)
                if raw_label not in index:
                    if task is not None:
                        raise LoadError(f"{path}:{lineno}: unknown label {raw_label!r}")
                    index[raw_label] = len(class_names)
                    class_names.append(raw_label)
                label = index[raw_label]
            try:
                words = tuple(tokenize(obj["text"]))
            except DegenerateInputError as e:
                raise LoadError(f"{path}:{lineno}: {e}") from e
            examples.append(Example(uid=f"{source}:{lineno}", text=obj["text"], words=words, label=label))
    logger.debug(f"loaded {len(examples)} examples from {path}")
    return examples, task if task is not None else TaskSpec(tuple(class_names))


################ Sampling ################


def _by_class(pool: Sequence[Example], c: int) -> List[List[int]]:
    groups = [[] for _ in range(c)]
    for i, ex in enumerate(pool):
        if ex.label is not None:
            groups[ex.label].append(i)
    return groups


def _draw_per_class(pool, groups, n, rng, task, purpose) -> Tuple[List[Example], List[List[int]]]:
    chosen, rest = [], []
    for label, members in enumerate(groups):
        if len(members) < n:
            name = task.class_names[label] if task is not None else str(label)
            raise SamplingError(f"class {name!r} has {len(members)} examples, {purpose} needs {n}")
        picked = set(rng.choice(len(members), size=n, replace=False).tolist())
        chosen.extend(pool[members[k]] for k in sorted(picked))
        rest.append([m for k, m in enumerate(members) if k not in picked])
    return chosen, rest


def sample_labeled(
    pool: Sequence[Example], n_c: int, seed: int, task: Optional[TaskSpec] = None
) -> List[Example]:
    """Exactly ``n_c`` examples per class, grouped by class, pool order within a class."""
    if n_c < 1:
        raise ConfigurationError(f"n_c must be >= 1, got {n_c}")
    if task is not None:
        c = task.c
    else:
        labels = [ex.label for ex in pool if ex.label is not None]
        if not labels:
            raise SamplingError("the pool has no labeled examples")
        c = 1 + max(labels)
    rng = np.random.default_rng(seed)
    chosen, _ = _draw_per_class(pool, _by_class(pool, c), n_c, rng, task, "the labeled split")
    return chosen


def make_splits(
    pool: Sequence[Example],
    test: Sequence[Example],
    task: TaskSpec,
    n_c: int,
    seed: int,
    n_unlabeled_per_class: int = 0,
    n_dev_per_class: int = 0,
    dev: Optional[Sequence[Example]] = None,
    extra_unlabeled: Sequence[Example] = (),
) -> SplitSet:
    """Carve labeled / unlabeled / dev splits out of a labeled training pool.

    Labeled: ``n_c`` per class. Dev: ``n_dev_per_class`` per class from the
    remainder unless an explicit ``dev`` set is given. Unlabeled: the next
    ``n_unlabeled_per_class`` per class (0 = all that is left), labels stripped,
    followed by ``extra_unlabeled``.
    """
    rng = np.random.default_rng(seed)
    groups = _by_class(pool, task.c)
    labeled, rest = _draw_per_class(pool, groups, n_c, rng, task, "the labeled split")
    if dev is None:
        dev_list, rest = _draw_per_class(pool, rest, n_dev_per_class, rng, task, "the dev split")
    else:
        dev_list = list(dev)
    unlabeled = []
    for label, members in enumerate(rest):
        take = len(members) if n_unlabeled_per_class == 0 else min(n_unlabeled_per_class, len(members))
        if take < n_unlabeled_per_class:
            logger.warning(
                f"class {task.class_names[label]!r} has only {len(members)} examples left for the unlabeled split"
            )
        picked = sorted(rng.choice(len(members), size=take, replace=False).tolist())
        unlabeled.extend(replace(pool[members[k]], label=None) for k in picked)
    unlabeled.extend(replace(ex, label=None) for ex in extra_unlabeled)
    return SplitSet(tuple(labeled), tuple(unlabeled), tuple(dev_list), tuple(test))


################ Batching ################


class BatchStream:
    """Pairs of (B labeled, mu*B unlabeled) batches.

    Iterating yields one epoch: one pass over the unlabeled pool without
    replacement (a trailing partial batch is dropped). The labeled pool cycles
    and is reshuffled every time it is exhausted, across epochs.
    """

    def __init__(self, split: SplitSet, batch_size: int, mu: int, seed: int):
        if not split.labeled:
            raise ConfigurationError("the labeled split is empty")
        if batch_size < 1 or mu < 1:
            raise ConfigurationError(f"batch_size and mu must be >= 1, got {batch_size}, {mu}")
        if mu * batch_size > len(split.unlabeled):
            raise ConfigurationError(
                f"unlabeled batch of {mu * batch_size} exceeds the unlabeled pool of {len(split.unlabeled)}"
            )
        self.labeled = split.labeled
        self.unlabeled = split.unlabeled
        self.batch_size = batch_size
        self.mu = mu
        self.rng = np.random.default_rng(seed)
        self._order = self.rng.permutation(len(self.labeled))
        self._cursor = 0

    @property
    def steps_per_epoch(self) -> int:
        return len(self.unlabeled) // (self.mu * self.batch_size)

    def _next_labeled(self) -> LabeledBatch:
        picked = []
        while len(picked) < self.batch_size:
            if self._cursor == len(self._order):
                self._order = self.rng.permutation(len(self.labeled))
                self._cursor = 0
            picked.append(self.labeled[self._order[self._cursor]])
            self._cursor += 1
        return LabeledBatch(tuple(picked))

    def __iter__(self) -> Iterator[Tuple[LabeledBatch, UnlabeledBatch]]:
        order = self.rng.permutation(len(self.unlabeled))
        size = self.mu * self.batch_size
        for step in range(self.steps_per_epoch):
            ids = order[step * size:(step + 1) * size]
            yield self._next_labeled(), UnlabeledBatch(tuple(self.unlabeled[i] for i in ids))


def batch_streams(split: SplitSet, batch_size: int, mu: int, seed: int) -> BatchStream:
    return BatchStream(split, batch_size, mu, seed)
