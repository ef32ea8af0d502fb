from typing import Sequence, Tuple

import numpy as np
from sklearn.metrics import accuracy_score, f1_score

from .sat_corpus import Example
from .sat_errors import UsageError


def classification_scores(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> Tuple[float, float]:
    """Accuracy and macro-F1 over all ``n_classes`` classes.

    A class with P + R = 0 (never predicted, never true, or never right) scores F1 = 0
    and still counts in the macro average.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise UsageError("cannot score an empty set")
    accuracy = float(accuracy_score(y_true, y_pred))
    macro_f1 = float(f1_score(y_true, y_pred, labels=list(range(n_classes)), average="macro", zero_division=0))
    return accuracy, macro_f1


def evaluate(main, examples: Sequence[Example], batch_size: int = 256) -> Tuple[float, float]:
    if len(examples) == 0:
        raise UsageError("evaluate on an empty set")
    missing = [ex.uid for ex in examples if ex.label is None]
    if missing:
        raise UsageError(f"evaluate needs labeled examples; {len(missing)} have no label (first: {missing[0]})")
    preds = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        preds.append(main.predict([ex.tokens for ex in chunk]))
    y_pred = np.concatenate(preds)
    return classification_scores([ex.label for ex in examples], y_pred, main.n_classes)
