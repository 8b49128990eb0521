"""Toy text and image encoders plus the embedding file format.

These stand in for the large pretrained encoders the pipeline is designed
around: a hash tokenizer feeding a single self-attention block with a
feed-forward layer (text), and a linear patch projection with one
self-attention block (image). Precomputed real embeddings can be substituted
via the MME1 file format and ``load_embeddings``.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from random import Random

from .errors import DimensionError, FormatError, ValidationError
from .kernels import ops
from .matrix import Matrix

_WORD_RE = re.compile(r"[a-z0-9']+")

MAGIC_EMBED = b"MME1"


def stable_hash(token: str) -> int:
    """Process- and run-independent hash of a token."""
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")


def tokenize(text: str, vocab_size: int) -> list[int]:
    """Lowercase, split on whitespace/punctuation, hash into [1, vocab_size).

    Index 0 is the reserved null token; empty text maps to [0].
    """
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2")
    words = _WORD_RE.findall(text.lower())
    if not words:
        return [0]
    return [1 + stable_hash(w) % (vocab_size - 1) for w in words]


@dataclass
class EmbeddingSequence:
    """An L x d matrix of per-token or per-patch features."""

    values: Matrix

    @property
    def length(self) -> int:
        return self.values.rows

    @property
    def dim(self) -> int:
        return self.values.cols


@dataclass
class EncoderParams:
    """All trainable parameters of the toy text and image encoders."""

    d_h: int
    vocab_size: int
    max_len: int
    raw_dim: int
    max_patches: int
    seed: int
    tok_emb: Matrix
    pos_emb: Matrix
    wq: Matrix
    wk: Matrix
    wv: Matrix
    wf: Matrix
    bf: Matrix
    patch_proj: Matrix
    patch_bias: Matrix
    img_pos: Matrix
    iwq: Matrix
    iwk: Matrix
    iwv: Matrix

    @classmethod
    def init(cls, seed: int, d_h: int = 32, vocab_size: int = 4096,
             max_len: int = 64, raw_dim: int = 8, max_patches: int = 16):
        rng = Random(seed)
        bound = 1.0 / d_h ** 0.5
        u = lambda r, c: Matrix.uniform(r, c, bound, rng)
        return cls(
            d_h=d_h, vocab_size=vocab_size, max_len=max_len,
            raw_dim=raw_dim, max_patches=max_patches, seed=seed,
            tok_emb=u(vocab_size, d_h),
            pos_emb=u(max_len, d_h),
            wq=u(d_h, d_h), wk=u(d_h, d_h), wv=u(d_h, d_h),
            wf=u(d_h, d_h), bf=u(1, d_h),
            patch_proj=u(raw_dim, d_h), patch_bias=u(1, d_h),
            img_pos=u(max_patches, d_h),
            iwq=u(d_h, d_h), iwk=u(d_h, d_h), iwv=u(d_h, d_h),
        )

    def param_items(self):
        """(name, Matrix) pairs in a fixed order (checkpoint + grad order)."""
        for name in ("tok_emb", "pos_emb", "wq", "wk", "wv", "wf", "bf",
                     "patch_proj", "patch_bias", "img_pos", "iwq", "iwk", "iwv"):
            yield name, getattr(self, name)


def embed_tokens(tokens: list[int], p: EncoderParams) -> Matrix:
    """Token embedding + positional embedding for a token sequence."""
    n = len(tokens)
    if n > p.max_len:
        raise ValidationError(f"sequence length {n} > max_len {p.max_len}")
    d = p.d_h
    out = Matrix(n, d)
    for i, t in enumerate(tokens):
        if not 0 <= t < p.vocab_size:
            raise IndexError(f"token index {t} out of vocabulary")
        tbase = t * d
        pbase = i * d
        obase = i * d
        for j in range(d):
            out.data[obase + j] = p.tok_emb.data[tbase + j] + p.pos_emb.data[pbase + j]
    return out


def embed_tokens_backward(tokens: list[int], p: EncoderParams,
                          dz: Matrix, grads: dict) -> None:
    """Scatter-add dz into the token and positional embedding gradients."""
    d = p.d_h
    g_tok = grads["tok_emb"]
    g_pos = grads["pos_emb"]
    for i, t in enumerate(tokens):
        for j in range(d):
            g = dz.data[i * d + j]
            g_tok.data[t * d + j] += g
            g_pos.data[i * d + j] += g


def encode_text(tokens: list[int], p: EncoderParams, with_cache: bool = False):
    """h_t = tanh(attention(z@wq, z@wk, z@wv) @ wf + bf), z = tok + pos emb."""
    z = embed_tokens(tokens, p)
    q = ops.matmul(z, p.wq)
    k = ops.matmul(z, p.wk)
    v = ops.matmul(z, p.wv)
    a, w = ops.attention(q, k, v)
    h = ops.tanh_m(ops.linear_forward(a, p.wf, p.bf))
    seq = EmbeddingSequence(h)
    if not with_cache:
        return seq
    cache = {"tokens": tokens, "z": z, "q": q, "k": k, "v": v, "w": w,
             "a": a, "h": h}
    return seq, cache


def encode_text_backward(cache: dict, p: EncoderParams, dh: Matrix,
                         grads: dict) -> None:
    dpre = ops.tanh_backward(cache["h"], dh)
    da, dwf, dbf = ops.linear_backward(cache["a"], p.wf, dpre)
    grads["wf"].add_(dwf)
    grads["bf"].add_(dbf)
    dq, dk, dv = ops.attention_backward(cache["q"], cache["k"], cache["v"],
                                        cache["w"], da)
    z = cache["z"]
    grads["wq"].add_(ops.matmul_tn(z, dq))
    grads["wk"].add_(ops.matmul_tn(z, dk))
    grads["wv"].add_(ops.matmul_tn(z, dv))
    dz = ops.matmul_nt(dq, p.wq)
    dz.add_(ops.matmul_nt(dk, p.wk))
    dz.add_(ops.matmul_nt(dv, p.wv))
    embed_tokens_backward(cache["tokens"], p, dz, grads)


def encode_image(patches: Matrix, p: EncoderParams, with_cache: bool = False):
    """Linear patch projection + positions, then one self-attention block."""
    if patches.rows < 1:
        raise DimensionError("need at least one patch")
    if patches.cols != p.raw_dim:
        raise DimensionError(
            f"patch dim {patches.cols} != projection input {p.raw_dim}")
    if patches.rows > p.max_patches:
        raise ValidationError(
            f"{patches.rows} patches > max_patches {p.max_patches}")
    z = ops.linear_forward(patches, p.patch_proj, p.patch_bias)
    z.add_(p.img_pos.slice_rows(0, patches.rows))
    q = ops.matmul(z, p.iwq)
    k = ops.matmul(z, p.iwk)
    v = ops.matmul(z, p.iwv)
    h, w = ops.attention(q, k, v)
    seq = EmbeddingSequence(h)
    if not with_cache:
        return seq
    cache = {"patches": patches, "z": z, "q": q, "k": k, "v": v, "w": w}
    return seq, cache


def encode_image_backward(cache: dict, p: EncoderParams, dh: Matrix,
                          grads: dict) -> None:
    dq, dk, dv = ops.attention_backward(cache["q"], cache["k"], cache["v"],
                                        cache["w"], dh)
    z = cache["z"]
    grads["iwq"].add_(ops.matmul_tn(z, dq))
    grads["iwk"].add_(ops.matmul_tn(z, dk))
    grads["iwv"].add_(ops.matmul_tn(z, dv))
    dz = ops.matmul_nt(dq, p.iwq)
    dz.add_(ops.matmul_nt(dk, p.iwk))
    dz.add_(ops.matmul_nt(dv, p.iwv))
    patches = cache["patches"]
    _, dproj, dbias = ops.linear_backward(patches, p.patch_proj, dz)
    grads["patch_proj"].add_(dproj)
    grads["patch_bias"].add_(dbias)
    n = patches.rows
    g_pos = grads["img_pos"]
    d = p.d_h
    for i in range(n):
        for j in range(d):
            g_pos.data[i * d + j] += dz.data[i * d + j]


# -- embedding file format (MME1) -------------------------------------------

def save_embeddings(path, seq: EmbeddingSequence) -> None:
    """magic 'MME1', u32-LE L and d, then L*d little-endian float64."""
    m = seq.values
    with open(path, "wb") as fh:
        fh.write(MAGIC_EMBED)
        fh.write(struct.pack("<II", m.rows, m.cols))
        fh.write(struct.pack(f"<{len(m.data)}d", *m.data))


def load_embeddings(path) -> EmbeddingSequence:
    with open(path, "rb") as fh:
        blob = fh.read()
    m = _parse_embedding_block(blob, 0)
    return EmbeddingSequence(m)


def _parse_embedding_block(blob: bytes, offset: int, _consumed=None) -> Matrix:
    if blob[offset:offset + 4] != MAGIC_EMBED:
        raise FormatError("bad magic, expected MME1", byte_offset=offset)
    if len(blob) < offset + 12:
        raise FormatError("truncated header", byte_offset=len(blob))
    rows, cols = struct.unpack_from("<II", blob, offset + 4)
    n = rows * cols
    end = offset + 12 + 8 * n
    if len(blob) < end:
        raise FormatError(
            f"truncated payload, expected {n} values", byte_offset=len(blob))
    values = struct.unpack_from(f"<{n}d", blob, offset + 12)
    m = Matrix(rows, cols, values)
    if not m.all_finite():
        raise FormatError("non-finite value in embedding file",
                          byte_offset=offset + 12)
    if _consumed is not None:
        _consumed.append(end)
    return m
