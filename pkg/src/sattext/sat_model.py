"""Bag-of-words text classifier f(x; theta).

encode:  tanh(W_h * mean(E[tokens]) + b_h)           -> [d_hid]
predict: softmax(W_o * encode + b_o)                  -> [c]

Checkpoint format (``.npz``, written with ``np.savez``, loaded with
``allow_pickle=False``):
    param/<name>   float64 array per parameter (names from ``named_parameters``)
    vocab          unicode array, id -> token
    class_names    unicode array, class index -> name
    dims           int64 [d_emb, d_hid]
"""
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .sat_autograd import Parameter, Tensor, affine, bag_mean, cross_entropy, gather, mean, softmax, tanh
from .sat_corpus import LabeledBatch, TaskSpec, Vocab
from .sat_defs import PAD_ID
from .sat_errors import DegenerateInputError, LoadError, UsageError
from .utils.logger import sat_logger as logger


class TextEncoder:
    def __init__(self, vocab_size: int, d_emb: int, d_hid: int, rng: np.random.Generator, init_scale: float = 0.1):
        u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
        self.embedding = Parameter(u(vocab_size, d_emb), "embedding")
        self.hidden_w = Parameter(u(d_hid, d_emb), "hidden.weight")
        self.hidden_b = Parameter(np.zeros(d_hid), "hidden.bias")

    @property
    def d_emb(self) -> int:
        return self.embedding.shape[1]

    @property
    def d_hid(self) -> int:
        return self.hidden_w.shape[0]

    def parameters(self) -> List[Parameter]:
        return [self.embedding, self.hidden_w, self.hidden_b]

    def named_parameters(self) -> Dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def encode_batch(self, token_lists: Sequence[Sequence[int]]) -> Tensor:
        if len(token_lists) == 0:
            raise UsageError("encode_batch on an empty batch")
        bags = []
        for tokens in token_lists:
            # sorted ids make the pooled sum independent of token order
            ids = sorted(t for t in tokens if t != PAD_ID)
            if not ids:
                raise DegenerateInputError("every token maps to PAD")
            bags.append(ids)
        pooled = bag_mean(self.embedding, bags)
        return tanh(affine(pooled, self.hidden_w, self.hidden_b))

    def encode(self, tokens: Sequence[int]) -> Tensor:
        return gather(self.encode_batch([tokens]), 0)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        for name, p in self.named_parameters().items():
            if name not in state:
                raise LoadError(f"missing parameter {name!r}")
            if state[name].shape != p.shape:
                raise LoadError(f"parameter {name!r} has shape {state[name].shape}, expected {p.shape}")
            p.value[...] = state[name]


class MainNetwork(TextEncoder):
    def __init__(
        self,
        vocab_size: int,
        n_classes: int,
        rng: np.random.Generator,
        d_emb: int = 32,
        d_hid: int = 64,
        init_scale: float = 0.1,
    ):
        super().__init__(vocab_size, d_emb, d_hid, rng, init_scale)
        self.out_w = Parameter(rng.uniform(-init_scale, init_scale, size=(n_classes, d_hid)), "output.weight")
        self.out_b = Parameter(np.zeros(n_classes), "output.bias")

    @property
    def n_classes(self) -> int:
        return self.out_w.shape[0]

    def parameters(self) -> List[Parameter]:
        return super().parameters() + [self.out_w, self.out_b]

    def proba_batch(self, token_lists: Sequence[Sequence[int]]) -> Tensor:
        """p(y|x) per row, recorded for backward."""
        return softmax(affine(self.encode_batch(token_lists), self.out_w, self.out_b))

    def predict_proba_batch(self, token_lists: Sequence[Sequence[int]]) -> np.ndarray:
        return self.proba_batch(token_lists).value

    def predict_proba(self, tokens: Sequence[int]) -> np.ndarray:
        return self.predict_proba_batch([tokens])[0]

    def predict(self, token_lists: Sequence[Sequence[int]]) -> np.ndarray:
        return np.argmax(self.predict_proba_batch(token_lists), axis=-1)

    def supervised_loss(self, batch: LabeledBatch) -> Tensor:
        """l_s = (1/B) sum_b H(y_b, p(y|x_b))"""
        if len(batch) == 0:
            raise UsageError("supervised_loss on an empty batch")
        labels = batch.labels
        probs = self.proba_batch([ex.tokens for ex in batch.examples])
        return mean(cross_entropy(labels, probs))


################ Checkpoints ################


def save_checkpoint(path: Union[str, Path], model: MainNetwork, vocab: Vocab, task: TaskSpec):
    arrays = {f"param/{name}": value for name, value in model.state_dict().items()}
    arrays["vocab"] = np.array(vocab.itos, dtype=np.str_)
    arrays["class_names"] = np.array(task.class_names, dtype=np.str_)
    arrays["dims"] = np.array([model.d_emb, model.d_hid], dtype=np.int64)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.debug(f"saved checkpoint to {path}")


def load_checkpoint(path: Union[str, Path]) -> Tuple[MainNetwork, Vocab, TaskSpec]:
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as e:
        raise LoadError(f"cannot read checkpoint {path}: {e}") from e
    for key in ("vocab", "class_names", "dims"):
        if key not in arrays:
            raise LoadError(f"checkpoint {path} has no {key!r} entry")
    itos = [str(t) for t in arrays["vocab"]]
    vocab = Vocab(itos[2:])
    if vocab.itos != itos:
        raise LoadError(f"checkpoint {path} has a malformed vocabulary")
    task = TaskSpec(tuple(str(c) for c in arrays["class_names"]))
    d_emb, d_hid = (int(d) for d in arrays["dims"])
    model = MainNetwork(len(vocab), task.c, np.random.default_rng(0), d_emb=d_emb, d_hid=d_hid)
    model.load_state_dict({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    return model, vocab, task
