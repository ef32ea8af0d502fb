"""Augmentation choice network G(; theta_G) and the strength criteria.

On labeled data a criterion C scores each augmented view against its
original (higher = more similar = weaker); ``rank_descending`` turns the two
scores into a weak/strong ranking that G is trained to reproduce. On
unlabeled data G alone decides which view is weak.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kernels import grad_kernels as K
from .sat_autograd import (
    Parameter,
    Tensor,
    absolute,
    affine,
    backward,
    concat,
    cosine_similarity,
    cross_entropy,
    gather,
    l2_normalize,
    logsumexp,
    matmul_t,
    mean,
    mul,
    rows,
    softmax,
)
from .sat_corpus import Example
from .sat_defs import ClassifierTargets, CriterionKinds
from .sat_errors import ConfigurationError, CriterionError, DegenerateInputError
from .sat_model import MainNetwork, TextEncoder
from .sat_optim import SGD


@dataclass(frozen=True)
class StrengthRanking:
    weak_index: int
    strong_index: int
    scores: Tuple[float, float]

    def __post_init__(self):
        assert {self.weak_index, self.strong_index} == {1, 2}, f"bad ranking ({self.weak_index}, {self.strong_index})"
        assert self.scores[self.weak_index - 1] >= self.scores[self.strong_index - 1]


def rank_descending(i1: float, i2: float) -> StrengthRanking:
    """The view with the higher similarity is the weak one; ties go to view 1."""
    if not (math.isfinite(i1) and math.isfinite(i2)):
        raise CriterionError(f"non-finite criterion scores ({i1}, {i2})")
    if i1 >= i2:
        return StrengthRanking(1, 2, (float(i1), float(i2)))
    return StrengthRanking(2, 1, (float(i1), float(i2)))


def contrastive_loss(anchors: Tensor, candidates: Tensor, positive_cols: Sequence[int], temperature: float) -> Tensor:
    """Mean over anchors of -ln softmax(cos(anchor, candidates) / T)[positive].

    Every candidate other than an anchor's positive is one of its negatives.
    """
    sims = matmul_t(l2_normalize(anchors), l2_normalize(candidates)) * (1.0 / temperature)
    pos = gather(sims, (np.arange(anchors.shape[0]), np.asarray(positive_cols, dtype=np.int64)))
    return mean(logsumexp(sims) - pos)


def _tokens(examples: Sequence[Example]) -> List[Sequence[int]]:
    return [ex.tokens for ex in examples]


class ChoiceNetwork:
    def __init__(
        self,
        kind: str,
        vocab_size: int,
        rng: np.random.Generator,
        d_emb: int = 32,
        d_hid: int = 64,
        d_proj: int = 32,
        temperature: float = 0.5,
        init_scale: float = 0.1,
    ):
        if kind not in CriterionKinds.ALL:
            raise ConfigurationError(f"unknown criterion {kind!r}")
        self.kind = kind
        self.temperature = temperature
        self.encoder = TextEncoder(vocab_size, d_emb, d_hid, rng, init_scale)
        u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
        if kind == CriterionKinds.CLASSIFIER:
            # one scorer shared by both views: [e(x); e(v); |e(x) - e(v)|; e(x) * e(v)] -> 1
            self.head_w = Parameter(u(1, 4 * d_hid), "head.weight")
            self.head_b = Parameter(np.zeros(1), "head.bias")
        else:
            self.head_w = Parameter(u(d_proj, d_hid), "projection.weight")
            self.head_b = Parameter(np.zeros(d_proj), "projection.bias")

    def parameters(self) -> List[Parameter]:
        return self.encoder.parameters() + [self.head_w, self.head_b]

    def _encode_all(self, originals, views1, views2) -> Tensor:
        n = len(originals)
        assert len(views1) == n and len(views2) == n, "originals and views must align"
        return self.encoder.encode_batch(_tokens(originals) + _tokens(views1) + _tokens(views2))

    def _encode_triples(self, originals, views1, views2) -> Tuple[Tensor, Tensor, Tensor]:
        n = len(originals)
        enc = self._encode_all(originals, views1, views2)
        return rows(enc, 0, n), rows(enc, n, 2 * n), rows(enc, 2 * n, 3 * n)

    def _view_score(self, ex: Tensor, ev: Tensor) -> Tensor:
        features = concat([ex, ev, absolute(ex - ev), mul(ex, ev)])
        return affine(features, self.head_w, self.head_b)

    def pair_distribution(self, originals, views1, views2) -> Tensor:
        """[B, 2]: probability that view 1 (column 0) or view 2 (column 1) is the weak one."""
        assert self.kind == CriterionKinds.CLASSIFIER
        ex, e1, e2 = self._encode_triples(originals, views1, views2)
        return softmax(concat([self._view_score(ex, e1), self._view_score(ex, e2)]))

    def choice_loss(self, originals, views1, views2, weak_indices: Sequence[int]) -> Tensor:
        """l_aug_choice = (1/B) sum_b Gamma(x_b, a1(x_b), a2(x_b), i_w^b)"""
        weak = np.asarray(weak_indices, dtype=np.int64)
        if not np.all((weak == 1) | (weak == 2)):
            raise ConfigurationError(f"weak indices must be 1 or 2, got {weak.tolist()}")
        if self.kind == CriterionKinds.CLASSIFIER:
            return mean(cross_entropy(weak - 1, self.pair_distribution(originals, views1, views2)))
        n = len(originals)
        z = affine(self._encode_all(originals, views1, views2), self.head_w, self.head_b)
        # candidate columns: view 1 of every item, then view 2 of every item
        zx, zv = rows(z, 0, n), rows(z, n, 3 * n)
        positive_cols = np.where(weak == 1, np.arange(n), n + np.arange(n))
        return contrastive_loss(zx, zv, positive_cols, self.temperature)

    def infer(self, originals, views1, views2) -> List[StrengthRanking]:
        """G(u, a1(u), a2(u)) for a batch; no parameters change."""
        if self.kind == CriterionKinds.CLASSIFIER:
            probs = self.pair_distribution(originals, views1, views2).value
            return [rank_descending(p[0], p[1]) for p in probs]
        try:
            ex, e1, e2 = self._encode_triples(originals, views1, views2)
            c1 = cosine_similarity(ex, e1).value
            c2 = cosine_similarity(ex, e2).value
        except DegenerateInputError as e:
            raise CriterionError(str(e)) from e
        return [rank_descending(a, b) for a, b in zip(c1, c2)]

    def update(self, originals, views1, views2, weak_indices, beta: float, optimizer: Optional[SGD] = None) -> float:
        """theta_G <- theta_G - beta * grad(l_aug_choice); returns the pre-step loss."""
        if self.kind == CriterionKinds.SCORER and len(originals) < 2:
            raise ConfigurationError("the scorer criterion needs at least 2 items per batch for in-batch negatives")
        optimizer = optimizer or SGD(self.parameters(), beta)
        optimizer.zero_grad()
        loss = self.choice_loss(originals, views1, views2, weak_indices)
        backward(loss)
        optimizer.step()
        return loss.item()


def criterion_scores(
    kind: str,
    originals: Sequence[Example],
    augmented: Sequence[Example],
    labels: Sequence[int],
    main: MainNetwork,
    choice: ChoiceNetwork,
    target: str = ClassifierTargets.DISTRIBUTION,
) -> np.ndarray:
    """C(a(x), x, y) for a batch; higher means more similar to the original."""
    if kind == CriterionKinds.CLASSIFIER:
        p_aug = main.predict_proba_batch(_tokens(augmented))
        if target == ClassifierTargets.LABEL:
            q = np.eye(main.n_classes)[np.asarray(labels, dtype=np.int64)]
        else:
            q = main.predict_proba_batch(_tokens(originals))
        return -K.cross_entropy_forward(q, p_aug)
    try:
        enc = choice.encoder.encode_batch(_tokens(originals) + _tokens(augmented))
        n = len(originals)
        return cosine_similarity(rows(enc, 0, n), rows(enc, n, 2 * n)).value
    except DegenerateInputError as e:
        raise CriterionError(str(e)) from e


def criterion_score(kind, original: Example, augmented: Example, label: int, main, choice, target=ClassifierTargets.DISTRIBUTION) -> float:
    return float(criterion_scores(kind, [original], [augmented], [label], main, choice, target)[0])


def infer_choice(unlabeled: Example, view1: Example, view2: Example, choice: ChoiceNetwork) -> StrengthRanking:
    return choice.infer([unlabeled], [view1], [view2])[0]
