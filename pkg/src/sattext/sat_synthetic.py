"""Synthetic, linearly separable text classification corpora.

Words are ``w000`` ... and split into per-class keyword blocks and a shared
noise block. A document of class k draws each token from k's keywords with
probability ``signal`` and from the noise block otherwise. The synonym
lexicon only maps keywords to keywords of the same class (and noise to
noise), so SR and RI preserve the label. The mock translation tables send
every word to ``de_<word>`` and back; about ``bt_change`` of the words come
back as one of their synonyms.

With ``keyword_synonyms=False`` only noise words get lexicon entries, so SR and
BT never touch the class evidence and RI only pads a text with noise.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .sat_augment import DictionaryTranslationProvider, SynonymLexicon
from .sat_corpus import Example, TaskSpec, tokenize
from .sat_dataset import SATDataset
from .sat_errors import ConfigurationError
from .utils.logger import sat_logger as logger


@dataclass(frozen=True)
class SyntheticCorpus:
    task: TaskSpec
    train: Tuple[Tuple[str, int], ...]  # (text, label)
    test: Tuple[Tuple[str, int], ...]
    lexicon: Dict[str, Tuple[str, ...]]
    forward: Dict[str, str]
    backward: Dict[str, str]


def generate_corpus(
    n_classes: int = 4,
    vocab_size: int = 500,
    n_train_per_class: int = 520,
    n_test_per_class: int = 100,
    doc_len: Tuple[int, int] = (8, 16),
    keyword_fraction: float = 0.5,
    signal: float = 0.5,
    n_synonyms: int = 2,
    bt_change: float = 0.2,
    keyword_synonyms: bool = True,
    seed: int = 0,
) -> SyntheticCorpus:
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    n_keywords = int(vocab_size * keyword_fraction) // n_classes
    if n_keywords < n_synonyms + 1 or vocab_size - n_keywords * n_classes < n_synonyms + 1:
        raise ConfigurationError(f"vocab_size {vocab_size} is too small for {n_classes} classes")
    if not 0 < doc_len[0] <= doc_len[1]:
        raise ConfigurationError(f"bad document length range {doc_len}")
    rng = np.random.default_rng(seed)

    width = len(str(vocab_size - 1))
    words = [f"w{i:0{width}d}" for i in range(vocab_size)]
    blocks = [words[k * n_keywords:(k + 1) * n_keywords] for k in range(n_classes)]
    noise = words[n_classes * n_keywords:]

    lexicon = {}
    for block in (blocks if keyword_synonyms else []) + [noise]:
        for i, w in enumerate(block):
            others = [block[j] for j in rng.choice(len(block), size=n_synonyms + 1, replace=False) if j != i]
            lexicon[w] = tuple(others[:n_synonyms])

    forward = {w: f"de_{w}" for w in words}
    backward = {}
    for w in words:
        changed = rng.random() < bt_change
        backward[f"de_{w}"] = lexicon[w][int(rng.integers(len(lexicon[w])))] if changed and w in lexicon else w

    def document(label: int) -> str:
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        from_class = rng.random(n) < signal
        toks = [
            blocks[label][int(rng.integers(n_keywords))] if c else noise[int(rng.integers(len(noise)))]
            for c in from_class
        ]
        return " ".join(toks)

    def split(per_class: int) -> Tuple[Tuple[str, int], ...]:
        labels = np.repeat(np.arange(n_classes), per_class)
        rng.shuffle(labels)
        return tuple((document(int(y)), int(y)) for y in labels)

    train, test = split(n_train_per_class), split(n_test_per_class)
    task = TaskSpec(tuple(f"class{k}" for k in range(n_classes)))
    logger.debug(f"synthetic corpus: {len(train)} train / {len(test)} test, {vocab_size} words")
    return SyntheticCorpus(task, train, test, lexicon, forward, backward)


def _examples(rows, prefix: str) -> Tuple[Example, ...]:
    return tuple(
        Example(uid=f"{prefix}:{i}", text=text, words=tuple(tokenize(text)), label=label)
        for i, (text, label) in enumerate(rows, start=1)
    )


def as_dataset(corpus: SyntheticCorpus) -> SATDataset:
    """The corpus as an in-memory dataset, with the same uids ``load_dataset`` gives the written files."""
    return SATDataset(
        pool=_examples(corpus.train, "train"),
        test=_examples(corpus.test, "test"),
        task=corpus.task,
        lexicon=SynonymLexicon(corpus.lexicon),
        provider=DictionaryTranslationProvider(corpus.forward, corpus.backward),
    )


def write_corpus(corpus: SyntheticCorpus, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write train/test JSONL, the lexicon and both translation tables; returns the paths
    keyed by the config field that should point at them."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_path": out_dir / "train.jsonl",
        "test_path": out_dir / "test.jsonl",
        "lexicon_path": out_dir / "lexicon.tsv",
        "bt_forward_path": out_dir / "bt_forward.tsv",
        "bt_backward_path": out_dir / "bt_backward.tsv",
    }

    def jsonl(rows) -> str:
        return "".join(
            json.dumps({"text": text, "label": corpus.task.class_names[y]}) + "\n" for text, y in rows
        )

    def tsv(table) -> str:
        lines: List[str] = []
        for k, v in table.items():
            lines.append(f"{k}\t{','.join(v) if isinstance(v, tuple) else v}")
        return "\n".join(lines) + "\n"

    paths["train_path"].write_text(jsonl(corpus.train), encoding="utf-8")
    paths["test_path"].write_text(jsonl(corpus.test), encoding="utf-8")
    paths["lexicon_path"].write_text(tsv(corpus.lexicon), encoding="utf-8")
    paths["bt_forward_path"].write_text(tsv(corpus.forward), encoding="utf-8")
    paths["bt_backward_path"].write_text(tsv(corpus.backward), encoding="utf-8")
    logger.info(f"wrote synthetic corpus to {out_dir}")
    return paths
