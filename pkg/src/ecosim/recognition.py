"""Similarity recognition between agent semantic descriptions.

Agents that want to recognize "agents like me" get three interchangeable
matchers:

* a distance recognizer thresholding the normalized description difference
  (similar when the difference is under 10%),
* a cruder matcher reusing the request-scoring form 1/(1 + value gap),
  which with integer attribute values only ever fires on exact copies,
* a small multilayer perceptron trained on perturbed variants of the
  owner's description, classifying bit-encoded descriptions with a 0.90
  output threshold.

The MLP is written out by hand (one sigmoid hidden layer, sigmoid output,
stochastic backpropagation) so its gradients can be checked against finite
differences. An SVM variant is reserved in the factory but not implemented.

Encoding: every integer in the canonical (id, value) tuple list is rendered
as a 6-character zero-padded decimal string and the concatenated string is
turned into 8 bits per character, most significant bit first. The owner's
description fixes the input width; other descriptions are zero-padded or
truncated to fit it.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from ecosim.core import (
    ATTR_MAX,
    ATTR_MIN,
    UNMATCHED_PENALTY,
    SeededRng,
    canonicalize,
    description_difference,
)

CHARS_PER_COMPONENT = 6
BITS_PER_CHAR = 8
BITS_PER_COMPONENT = CHARS_PER_COMPONENT * BITS_PER_CHAR


class ShapeMismatch(ValueError):
    """Input vector does not match the network's input layer."""


def encoded_length(n_tuples: int) -> int:
    """Bit-vector length for a description of n_tuples (id, value) pairs."""
    return 2 * n_tuples * BITS_PER_COMPONENT


def preprocess(
    description: Iterable[tuple[int, int]],
    owner_tuples: int | None = None,
) -> np.ndarray:
    """Bit-encode a description against the owner's fixed input width."""
    canonical = canonicalize(description)
    if owner_tuples is None:
        owner_tuples = len(canonical)
    text = "".join(
        f"{component:0{CHARS_PER_COMPONENT}d}"
        for pair in canonical
        for component in pair
    )
    bits = np.unpackbits(np.frombuffer(text.encode("ascii"), dtype=np.uint8))
    width = encoded_length(owner_tuples)
    if bits.size >= width:
        bits = bits[:width]
    else:
        bits = np.concatenate([bits, np.zeros(width - bits.size, np.uint8)])
    return bits.astype(np.float64)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class Mlp:
    """input -> sigmoid hidden layer of ceil(factor x input) -> sigmoid out."""

    def __init__(
        self,
        n_inputs: int,
        rng: SeededRng,
        hidden_factor: float = 1.5,
        learning_rate: float | None = None,
    ):
        if n_inputs < 1:
            raise ValueError("need at least one input")
        n_hidden = math.ceil(hidden_factor * n_inputs)
        self.n_inputs = n_inputs
        self.n_hidden = n_hidden
        if learning_rate is None:
            # wide layers start the output sigmoid saturated under the
            # +-0.5 init; steps sized for a toy net then lock it against
            # a rail, so the default shrinks with the hidden width
            learning_rate = min(0.5, 100.0 / n_hidden)
        self.learning_rate = float(learning_rate)
        self.w1 = rng.uniform(-0.5, 0.5, (n_hidden, n_inputs))
        self.b1 = rng.uniform(-0.5, 0.5, n_hidden)
        self.w2 = rng.uniform(-0.5, 0.5, n_hidden)
        self.b2 = float(rng.uniform(-0.5, 0.5))

    def _as_input(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape != (self.n_inputs,):
            raise ShapeMismatch(
                f"expected {self.n_inputs} inputs, got shape {arr.shape}"
            )
        return arr

    def forward(self, x) -> float:
        arr = self._as_input(x)
        hidden = _sigmoid(self.w1 @ arr + self.b1)
        return float(_sigmoid(self.w2 @ hidden + self.b2))

    def gradients(self, x, target: float):
        """Gradients of 0.5*(forward(x) - target)^2 for every parameter."""
        arr = self._as_input(x)
        hidden = _sigmoid(self.w1 @ arr + self.b1)
        out = float(_sigmoid(self.w2 @ hidden + self.b2))
        delta_out = (out - target) * out * (1.0 - out)
        g_w2 = delta_out * hidden
        g_b2 = delta_out
        delta_hidden = delta_out * self.w2 * hidden * (1.0 - hidden)
        g_w1 = np.outer(delta_hidden, arr)
        g_b1 = delta_hidden
        return g_w1, g_b1, g_w2, g_b2

    def _step(self, x, target: float) -> None:
        g_w1, g_b1, g_w2, g_b2 = self.gradients(x, target)
        lr = self.learning_rate
        self.w1 -= lr * g_w1
        self.b1 -= lr * g_b1
        self.w2 -= lr * g_w2
        self.b2 -= lr * g_b2

    def mean_squared_error(self, samples: Sequence[tuple]) -> float:
        return float(
            np.mean([(self.forward(x) - t) ** 2 for x, t in samples])
        )

    def train(self, samples: Sequence[tuple], epochs: int) -> tuple[float, float]:
        """Stochastic backprop over the samples; returns (initial, final) MSE."""
        if not samples:
            raise ValueError("training set is empty")
        initial = self.mean_squared_error(samples)
        for _ in range(epochs):
            for x, target in samples:
                self._step(x, target)
        return initial, self.mean_squared_error(samples)


def perturbed_variants(
    description: Iterable[tuple[int, int]],
    rng: SeededRng,
    n_variants: int = 50,
    max_shift: int = 20,
) -> list[tuple[tuple[int, int], ...]]:
    """Noisy copies: a random count of components shifted by +-U(1, max_shift).

    Components are the flattened integers (ids and values alike, the same
    slots the bit encoding uses). A shifted id usually fails to match and
    costs the full unmatched penalty, so id shifts supply the negatives of
    a training set while small value shifts supply the positives.
    """
    canonical = canonicalize(description)
    variants = []
    n_slots = 2 * len(canonical)
    for i in range(n_variants):
        flat = [component for pair in canonical for component in pair]
        if i % 2 == 0:
            slots = list(range(1, n_slots, 2))  # values only: near-copies
        else:
            slots = list(range(n_slots))
        n_changes = int(rng.integers(1, len(slots) + 1))
        for pos in rng.choice(slots, size=n_changes, replace=False):
            shift = int(rng.integers(1, max_shift + 1))
            if rng.random() < 0.5:
                shift = -shift
            flat[pos] = min(ATTR_MAX, max(ATTR_MIN, flat[pos] + shift))
        variants.append(
            canonicalize(list(zip(flat[0::2], flat[1::2])))
        )
    return variants


def build_training_set(
    description: Iterable[tuple[int, int]],
    rng: SeededRng,
    n_variants: int = 50,
    difference_threshold: float = 0.10,
) -> list[tuple[np.ndarray, float]]:
    """Own description (positive) plus labeled perturbed variants."""
    canonical = canonicalize(description)
    owner_tuples = len(canonical)
    samples = [(preprocess(canonical, owner_tuples), 1.0)]
    for variant in perturbed_variants(canonical, rng, n_variants):
        close = description_difference(canonical, variant) < difference_threshold
        samples.append((preprocess(variant, owner_tuples), 1.0 if close else 0.0))
    return samples


class DistanceRecognizer:
    """Similar when the normalized description difference is under 10%."""

    def __init__(self, own_description, threshold: float = 0.10):
        self.own = canonicalize(own_description)
        self.threshold = float(threshold)

    def recognizes(self, other_description) -> bool:
        return description_difference(self.own, other_description) < self.threshold


class ReciprocalGapRecognizer:
    """Scores 1/(1 + total value gap) like request fitness does.

    Integer attribute values make any real difference cost at least 1, so
    the score drops straight from 1.0 to 0.5; at the 0.90 threshold this
    matcher recognizes exact copies and nothing else.
    """

    def __init__(self, own_description, threshold: float = 0.90):
        self.own = canonicalize(own_description)
        self.threshold = float(threshold)

    def recognizes(self, other_description) -> bool:
        other = canonicalize(other_description)
        own_values: dict[int, list[int]] = {}
        for attr_id, value in self.own:
            own_values.setdefault(attr_id, []).append(value)
        gap = 0.0
        for attr_id, value in other:
            values = own_values.get(attr_id)
            if values is None:
                gap += UNMATCHED_PENALTY
            else:
                gap += min(abs(value - v) for v in values)
        return 1.0 / (1.0 + gap) >= self.threshold


class MlpRecognizer:
    """Perceptron trained on the owner's perturbed variants."""

    def __init__(
        self,
        own_description,
        rng: SeededRng,
        threshold: float = 0.90,
        n_variants: int = 50,
        epochs: int = 100,
        learning_rate: float | None = None,
        hidden_factor: float = 1.5,
        difference_threshold: float = 0.10,
    ):
        self.own = canonicalize(own_description)
        self.owner_tuples = len(self.own)
        self.threshold = float(threshold)
        self.net = Mlp(
            encoded_length(self.owner_tuples),
            rng,
            hidden_factor=hidden_factor,
            learning_rate=learning_rate,
        )
        samples = build_training_set(
            self.own, rng, n_variants, difference_threshold
        )
        self.net.train(samples, epochs)

    def score(self, other_description) -> float:
        return self.net.forward(preprocess(other_description, self.owner_tuples))

    def recognizes(self, other_description) -> bool:
        return self.score(other_description) >= self.threshold

    def learn(self, other_description, similar: bool, epochs: int = 10) -> None:
        """Online extension: fold one observed outcome into the weights."""
        sample = [
            (preprocess(other_description, self.owner_tuples),
             1.0 if similar else 0.0)
        ]
        self.net.train(sample, epochs)


def make_recognizer(kind: str, own_description, rng: SeededRng | None = None, **kw):
    if kind == "distance":
        return DistanceRecognizer(own_description, **kw)
    if kind == "reciprocal_gap":
        return ReciprocalGapRecognizer(own_description, **kw)
    if kind == "mlp":
        if rng is None:
            raise ValueError("the mlp recognizer needs an rng")
        return MlpRecognizer(own_description, rng, **kw)
    if kind == "svm":
        raise NotImplementedError("svm recognizer is a reserved slot")
    raise ValueError(f"unknown recognizer kind {kind!r}")
