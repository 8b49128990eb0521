"""Modality alignment, multimodal context assembly, and the fidelity blend.

Image features are aligned into the text embedding space by a valid 1-D
convolution followed by a linear projection, then refined by single-head
cross-attention whose keys and values are projections of the token embedding
matrix E. The aligned image features, text features and an embedded
instruction are row-concatenated into one multimodal context. At inference an
affine fidelity blend W_l(c, d) = l*c + (1-l)*d combines mean-pooled image
and text branches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from .encoders import EmbeddingSequence, EncoderParams, embed_tokens
from .errors import DimensionError, ValidationError
from .kernels import ops
from .matrix import Matrix


@dataclass
class AlignmentParams:
    """Trainable parameters of the image-to-text alignment stage.

    `embed_matrix` is E, the token embedding table of the text encoder;
    it is shared, not owned, so it is serialized once with the encoder.
    """

    d_h: int
    conv_width: int
    conv_kernel: Matrix      # (conv_width * d_h) x d_h
    w_a: Matrix              # d_h x d_h
    b_a: Matrix              # 1 x d_h
    xwq: Matrix              # query projection of h'_i
    xwk: Matrix              # key projection of E
    xwv: Matrix              # value projection of E
    embed_matrix: Matrix     # E (shared with EncoderParams.tok_emb)

    @classmethod
    def init(cls, seed: int, d_h: int, conv_width: int, embed_matrix: Matrix):
        rng = Random(seed)
        bound = 1.0 / d_h ** 0.5
        u = lambda r, c: Matrix.uniform(r, c, bound, rng)
        return cls(
            d_h=d_h, conv_width=conv_width,
            conv_kernel=u(conv_width * d_h, d_h),
            w_a=u(d_h, d_h), b_a=u(1, d_h),
            xwq=u(d_h, d_h), xwk=u(d_h, d_h), xwv=u(d_h, d_h),
            embed_matrix=embed_matrix,
        )

    def param_items(self):
        for name in ("conv_kernel", "w_a", "b_a", "xwq", "xwk", "xwv"):
            yield name, getattr(self, name)


@dataclass
class BlendConfig:
    """omega balances image vs text; alpha sets fidelity to the original."""

    omega: float = 0.5
    alpha: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValidationError(f"omega {self.omega} outside [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha {self.alpha} outside [0, 1]")


@dataclass
class MultimodalContext:
    """Concatenated [text ; aligned image ; instruction] representation.

    `boundaries` are the (end_text, end_image, end_instruction) row offsets
    partitioning x. `history` carries prior (text, image) embedding pairs; it
    is accepted for completeness but not consumed by any operation. `z_test`
    holds the inference-time fidelity blend when one was computed.
    """

    x: Matrix
    boundaries: tuple[int, int, int]
    history: list = field(default_factory=list)
    z_test: Matrix | None = None

    def text_segment(self) -> Matrix:
        return self.x.slice_rows(0, self.boundaries[0])

    def image_segment(self) -> Matrix:
        return self.x.slice_rows(self.boundaries[0], self.boundaries[1])

    def instruction_segment(self) -> Matrix:
        return self.x.slice_rows(self.boundaries[1], self.boundaries[2])


def align_image(h_i: EmbeddingSequence, p: AlignmentParams,
                with_cache: bool = False):
    """Returns (h_prime_i, h_t_i): conv+linear alignment, then cross-attention
    over the token embedding matrix."""
    if h_i.dim != p.d_h:
        raise DimensionError(f"image feature dim {h_i.dim} != d_h {p.d_h}")
    if h_i.length < p.conv_width:
        raise DimensionError(
            f"sequence length {h_i.length} < conv width {p.conv_width}")
    conv = ops.conv1d_forward(h_i.values, p.conv_kernel, p.conv_width, 1)
    h_prime = ops.linear_forward(conv, p.w_a, p.b_a)
    q = ops.matmul(h_prime, p.xwq)
    ek = ops.matmul(p.embed_matrix, p.xwk)
    ev = ops.matmul(p.embed_matrix, p.xwv)
    h_ti, weights = ops.attention(q, ek, ev)
    out = (EmbeddingSequence(h_prime), EmbeddingSequence(h_ti))
    if not with_cache:
        return out
    cache = {"h_i": h_i.values, "conv": conv, "h_prime": h_prime,
             "q": q, "ek": ek, "ev": ev, "weights": weights}
    return out, cache


def align_image_backward(cache: dict, p: AlignmentParams, d_hti: Matrix,
                         grads: dict, d_embed: Matrix | None = None,
                         d_hprime_extra: Matrix | None = None) -> Matrix:
    """Backprop through align_image.

    Accumulates parameter grads into `grads`; cross-attention gradients w.r.t.
    the shared embedding matrix go into `d_embed` when given. Returns the
    gradient w.r.t. the input image features h_i.
    """
    dq, dek, dev = ops.attention_backward(cache["q"], cache["ek"], cache["ev"],
                                          cache["weights"], d_hti)
    h_prime = cache["h_prime"]
    grads["xwq"].add_(ops.matmul_tn(h_prime, dq))
    grads["xwk"].add_(ops.matmul_tn(p.embed_matrix, dek))
    grads["xwv"].add_(ops.matmul_tn(p.embed_matrix, dev))
    if d_embed is not None:
        d_embed.add_(ops.matmul_nt(dek, p.xwk))
        d_embed.add_(ops.matmul_nt(dev, p.xwv))
    d_hprime = ops.matmul_nt(dq, p.xwq)
    if d_hprime_extra is not None:
        d_hprime.add_(d_hprime_extra)
    dconv, dw_a, db_a = ops.linear_backward(cache["conv"], p.w_a, d_hprime)
    grads["w_a"].add_(dw_a)
    grads["b_a"].add_(db_a)
    d_hi, dker = ops.conv1d_backward(cache["h_i"], p.conv_kernel,
                                     p.conv_width, 1, dconv)
    grads["conv_kernel"].add_(dker)
    return d_hi


def build_context(h_t: EmbeddingSequence, h_t_i: EmbeddingSequence,
                  instruction: list[int], p: EncoderParams,
                  history: list | None = None) -> MultimodalContext:
    """x = [h_t ; h_t_i ; Embed(instruction)], with recorded boundaries."""
    if h_t.dim != p.d_h or h_t_i.dim != p.d_h:
        raise DimensionError("segment dimensions disagree with d_h")
    instr = embed_tokens(instruction, p)
    x = Matrix.vstack([h_t.values, h_t_i.values, instr])
    b1 = h_t.length
    b2 = b1 + h_t_i.length
    b3 = b2 + instr.rows
    return MultimodalContext(x=x, boundaries=(b1, b2, b3),
                             history=list(history or []))


def affine_blend(l: float, c: Matrix, d: Matrix) -> Matrix:
    """W_l(c, d) = l*c + (1-l)*d."""
    c._check_same_shape(d)
    return c.scale(l).add_(d.scale(1.0 - l))


def blend(h_t_i: EmbeddingSequence, h_i: EmbeddingSequence,
          h_t: EmbeddingSequence, h_t_t: EmbeddingSequence,
          cfg: BlendConfig) -> EmbeddingSequence:
    """Inference-time fidelity blend.

    Each input is mean-pooled over its rows, then
    z = W_alpha(W_omega(h_t_i, h_i), W_omega(h_t, h_t_t)). Output is 1 x d_h.
    """
    pools = [s.values.mean_rows() for s in (h_t_i, h_i, h_t, h_t_t)]
    dims = {m.cols for m in pools}
    if len(dims) != 1:
        raise DimensionError(f"pooled dims disagree: {sorted(dims)}")
    image_branch = affine_blend(cfg.omega, pools[0], pools[1])
    text_branch = affine_blend(cfg.omega, pools[2], pools[3])
    return EmbeddingSequence(affine_blend(cfg.alpha, image_branch, text_branch))
