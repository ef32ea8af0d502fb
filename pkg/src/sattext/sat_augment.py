import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .sat_corpus import Example, Vocab
from .sat_defs import AugKinds
from .sat_errors import AugmentationError, ConfigurationError, LoadError
from .utils.logger import sat_logger as logger


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


################ Lexicon and translation tables ################


class SynonymLexicon:
    def __init__(self, entries: Dict[str, Sequence[str]] = None):
        self.entries: Dict[str, Tuple[str, ...]] = {}
        for token, syns in (entries or {}).items():
            # a token is never its own synonym; entries left empty are dropped
            kept = tuple(dict.fromkeys(s for s in syns if s and s != token))
            if kept:
                self.entries[token] = kept

    def __contains__(self, token: str):
        return token in self.entries

    def __len__(self):
        return len(self.entries)

    def synonyms(self, token: str) -> Tuple[str, ...]:
        return self.entries.get(token, ())

    def vocabulary(self) -> set:
        return {s for syns in self.entries.values() for s in syns}


def read_tsv_table(path: Union[str, Path]) -> Dict[str, List[str]]:
    """``token<TAB>v1,v2,...`` per line."""
    path = Path(path)
    table = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise LoadError(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise LoadError(f"{path}:{lineno}: expected 'token<TAB>value,value,...'")
        table[parts[0]] = [v.strip() for v in parts[1].split(",") if v.strip()]
    return table


def load_lexicon(path: Union[str, Path]) -> SynonymLexicon:
    lexicon = SynonymLexicon(read_tsv_table(path))
    logger.debug(f"loaded {len(lexicon)} lexicon entries from {path}")
    return lexicon


class TranslationProvider(ABC):
    FORWARD = "forward"
    BACKWARD = "backward"

    @abstractmethod
    def translate(self, tokens: Sequence[str], direction: str) -> List[str]:
        ...


class DictionaryTranslationProvider(TranslationProvider):
    """Offline stand-in for an MT round trip: word-by-word table lookups.

    The backward table need not invert the forward one; where it does not, the
    round trip changes the surface form the way a paraphrasing translation does.
    Unmapped words pass through unchanged.
    """

    def __init__(self, forward: Dict[str, str], backward: Dict[str, str]):
        self.tables = {self.FORWARD: dict(forward), self.BACKWARD: dict(backward)}

    @classmethod
    def from_tsv(cls, forward_path, backward_path) -> "DictionaryTranslationProvider":
        first = lambda table: {k: v[0] for k, v in table.items() if v}
        return cls(first(read_tsv_table(forward_path)), first(read_tsv_table(backward_path)))

    def translate(self, tokens: Sequence[str], direction: str) -> List[str]:
        if direction not in self.tables:
            raise ValueError(f"unknown direction {direction!r}")
        table = self.tables[direction]
        return [table.get(t, t) for t in tokens]


################ Operators ################


def synonym_replace(tokens: Sequence[str], lexicon: SynonymLexicon, rate: float, rng: np.random.Generator) -> List[str]:
    out = list(tokens)
    eligible = [i for i, t in enumerate(out) if t in lexicon]
    k = min(round_half_up(rate * len(eligible)), len(eligible))
    if k == 0:
        return out
    for i in sorted(rng.choice(len(eligible), size=k, replace=False).tolist()):
        pos = eligible[i]
        syns = lexicon.synonyms(out[pos])
        out[pos] = syns[int(rng.integers(len(syns)))]
    return out


def pervasive_dropout(tokens: Sequence[str], drop_prob: float, rng: np.random.Generator) -> List[str]:
    keep = rng.random(len(tokens)) >= drop_prob
    out = [t for t, k in zip(tokens, keep) if k]
    if not out:
        out = [tokens[int(rng.integers(len(tokens)))]]
    return out


def random_insert(tokens: Sequence[str], insert_rate: float, lexicon: SynonymLexicon, rng: np.random.Generator) -> List[str]:
    out = list(tokens)
    sources = [t for t in tokens if t in lexicon]
    if not sources:
        return out
    k = max(1, round_half_up(insert_rate * len(tokens)))
    for _ in range(k):
        syns = lexicon.synonyms(sources[int(rng.integers(len(sources)))])
        word = syns[int(rng.integers(len(syns)))]
        out.insert(int(rng.integers(len(out) + 1)), word)
    return out


def back_translate(tokens: Sequence[str], provider: TranslationProvider) -> List[str]:
    try:
        pivot = provider.translate(list(tokens), TranslationProvider.FORWARD)
        out = provider.translate(pivot, TranslationProvider.BACKWARD)
    except Exception as e:
        raise AugmentationError(f"back-translation failed: {e}") from e
    out = [t for t in out if t]
    if not out:
        raise AugmentationError("back-translation returned an empty text")
    return out


def drop_and_shuffle(tokens: Sequence[str], drop: float, rng: np.random.Generator) -> List[str]:
    """Keep ``len - round(drop * len)`` tokens (at least one) in random order."""
    n_keep = max(1, len(tokens) - round_half_up(drop * len(tokens)))
    picked = rng.choice(len(tokens), size=n_keep, replace=False)
    return [tokens[i] for i in picked]


################ Augmenter ################


@dataclass(frozen=True)
class Augmenter:
    kind: str
    rate: float = 0.0  # SR replace rate, PD drop prob, RI insert rate, DS drop fraction
    lexicon: Optional[SynonymLexicon] = None
    provider: Optional[TranslationProvider] = None

    def __post_init__(self):
        if self.kind not in AugKinds.ALL:
            raise ConfigurationError(f"unknown augmentation kind {self.kind!r}")
        if self.kind in (AugKinds.SR, AugKinds.PD, AugKinds.RI, AugKinds.DS) and not 0.0 < self.rate < 1.0:
            raise ConfigurationError(f"{self.kind} rate must be in (0, 1), got {self.rate}")
        if self.kind in (AugKinds.SR, AugKinds.RI) and self.lexicon is None:
            raise ConfigurationError(f"{self.kind} needs a synonym lexicon")
        if self.kind == AugKinds.BT and self.provider is None:
            raise ConfigurationError("BT needs a translation provider")

    def apply(self, tokens: Sequence[str], rng: np.random.Generator) -> List[str]:
        if self.kind == AugKinds.SR:
            return synonym_replace(tokens, self.lexicon, self.rate, rng)
        if self.kind == AugKinds.PD:
            return pervasive_dropout(tokens, self.rate, rng)
        if self.kind == AugKinds.RI:
            return random_insert(tokens, self.rate, self.lexicon, rng)
        if self.kind == AugKinds.BT:
            return back_translate(tokens, self.provider)
        if self.kind == AugKinds.DS:
            return drop_and_shuffle(tokens, self.rate, rng)
        return list(tokens)


def build_augmenter(kind: str, cfg, lexicon=None, provider=None) -> Augmenter:
    rates = {
        AugKinds.SR: cfg.sr_rate,
        AugKinds.PD: cfg.pd_prob,
        AugKinds.RI: cfg.ri_rate,
        AugKinds.DS: cfg.ds_drop,
    }
    return Augmenter(kind, rates.get(kind, 0.0), lexicon=lexicon, provider=provider)


def apply_pair(
    example: Example, a1: Augmenter, a2: Augmenter, rng: np.random.Generator, vocab: Optional[Vocab] = None
) -> Tuple[Example, Example]:
    """Two augmented views of ``example`` (label carried, input untouched).

    With ``vocab`` the views' token ids are re-encoded; otherwise they are empty.
    """
    if a1.kind == a2.kind:
        raise ConfigurationError(f"the two augmenters must differ, both are {a1.kind}")
    views = []
    for tag, aug in (("a1", a1), ("a2", a2)):
        words = tuple(aug.apply(example.words, rng))
        assert words, f"{aug.kind} produced an empty view of {example.uid}"
        view = replace(
            example,
            uid=f"{example.uid}#{tag}",
            text=" ".join(words),
            words=words,
            tokens=vocab.encode(words) if vocab else (),
        )
        views.append(view)
    return views[0], views[1]
