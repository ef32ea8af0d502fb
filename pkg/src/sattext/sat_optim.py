from typing import Iterable, List

import numpy as np

from .sat_autograd import Parameter
from .sat_errors import ConfigurationError


def sgd_step(params: Iterable[Parameter], rate: float):
    """value <- value - rate * grad; grads are left untouched."""
    for p in params:
        p.value -= rate * p.grad


class SGD:
    def __init__(self, params: Iterable[Parameter], rate: float):
        self.params: List[Parameter] = list(params)
        self.rate = rate

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        sgd_step(self.params, self.rate)


class Adagrad(SGD):
    """Per-coordinate rates rate / sqrt(sum of squared grads); the sum lives in ``Parameter.step_state``."""

    def __init__(self, params: Iterable[Parameter], rate: float, eps: float = 1e-8):
        super().__init__(params, rate)
        self.eps = eps

    def step(self):
        for p in self.params:
            if p.step_state is None:
                p.step_state = np.zeros_like(p.value)
            p.step_state += p.grad * p.grad
            p.value -= self.rate * p.grad / (np.sqrt(p.step_state) + self.eps)


def make_optimizer(name: str, params: Iterable[Parameter], rate: float) -> SGD:
    if name == "sgd":
        return SGD(params, rate)
    if name == "adagrad":
        return Adagrad(params, rate)
    raise ConfigurationError(f"unknown optimizer {name!r}")
