"""Classification heads: binary misogyny label and 5-way social domain."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from random import Random

from .errors import DimensionError
from .fusion import MultimodalContext
from .kernels import ops
from .matrix import Matrix


class Category(IntEnum):
    """Social domains a misogynous meme is categorized into."""

    KITCHEN = 0
    LEADERSHIP = 1
    WORKING = 2
    SHOPPING = 3
    OTHER = 4

    @classmethod
    def from_name(cls, name: str) -> "Category":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown category {name!r}") from None

    @property
    def display_name(self) -> str:
        return self.name.capitalize()


CATEGORY_NAMES = [c.display_name for c in Category]


@dataclass
class HeadParams:
    """Linear heads over the pooled context, plus the decision threshold."""

    d_h: int
    wy: Matrix          # d_h x 2
    by: Matrix          # 1 x 2
    wc: Matrix          # d_h x 5
    bc: Matrix          # 1 x 5
    threshold: float = 0.5

    @classmethod
    def init(cls, seed: int, d_h: int, threshold: float = 0.5):
        rng = Random(seed)
        bound = 1.0 / d_h ** 0.5
        return cls(
            d_h=d_h,
            wy=Matrix.uniform(d_h, 2, bound, rng),
            by=Matrix.uniform(1, 2, bound, rng),
            wc=Matrix.uniform(d_h, 5, bound, rng),
            bc=Matrix.uniform(1, 5, bound, rng),
            threshold=threshold,
        )

    def param_items(self):
        for name in ("wy", "by", "wc", "bc"):
            yield name, getattr(self, name)


@dataclass
class Prediction:
    misogyny_prob: float
    category_dist: list[float]
    label: bool
    category: Category


def pool_context(x: MultimodalContext) -> Matrix:
    """Arithmetic mean over all rows of the context, 1 x d_h."""
    return x.x.mean_rows()


def head_logits(pooled: Matrix, p: HeadParams):
    """(misogyny logits 1x2, category logits 1x5) from the pooled vector."""
    if pooled.cols != p.d_h:
        raise DimensionError(f"pooled dim {pooled.cols} != d_h {p.d_h}")
    logits_y = ops.linear_forward(pooled, p.wy, p.by)
    logits_c = ops.linear_forward(pooled, p.wc, p.bc)
    return logits_y, logits_c


def prediction_from_logits(logits_y: Matrix, logits_c: Matrix,
                           threshold: float) -> Prediction:
    prob = ops.softmax_rows(logits_y).at(0, 1)
    dist = ops.softmax_rows(logits_c).row(0)
    best = 0
    for i in range(1, len(dist)):
        if dist[i] > dist[best]:  # strict: lowest-index tie-break
            best = i
    return Prediction(
        misogyny_prob=prob,
        category_dist=dist,
        label=prob >= threshold,
        category=Category(best),
    )


def predict(x: MultimodalContext, p: HeadParams) -> Prediction:
    logits_y, logits_c = head_logits(pool_context(x), p)
    return prediction_from_logits(logits_y, logits_c, p.threshold)
