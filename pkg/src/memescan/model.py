"""Full model bundle: encoders + alignment + heads, with joint backprop.

The trainable graph per meme is

    text tokens -> encode_text ----------------------------.
    image patches -> encode_image -> align_image -> h_t_i --+-> context x
    instruction tokens -> Embed ----------------------------'
    pool(x) -> misogyny head + category head -> cross-entropy losses

Backward passes are chained by hand through the ops in
``memescan.kernels.ops``. Text-only operation drops the image branch and
concatenates [h_t ; instruction] only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .encoders import (EmbeddingSequence, EncoderParams, MAGIC_EMBED,
                       _parse_embedding_block, encode_image,
                       encode_image_backward, encode_text,
                       encode_text_backward, embed_tokens_backward, tokenize)
from .errors import DimensionError, FormatError
from .fusion import (AlignmentParams, BlendConfig, align_image,
                     align_image_backward, blend, build_context)
from .heads import HeadParams, head_logits, pool_context, \
    prediction_from_logits
from .kernels import ops
from .matrix import Matrix

MAGIC_CHECKPOINT = b"MMH1"

DEFAULT_INSTRUCTION = "decide whether this meme is misogynous and name its social domain"

MODALITY_MULTIMODAL = "multimodal"
MODALITY_TEXT = "text"


@dataclass
class ModelConfig:
    d_h: int = 32
    vocab_size: int = 4096
    max_len: int = 64
    raw_dim: int = 8
    max_patches: int = 16
    conv_width: int = 2
    threshold: float = 0.5
    instruction: str = DEFAULT_INSTRUCTION
    modality: str = MODALITY_MULTIMODAL


class MemeModel:
    """Parameter bundle plus the fused forward/backward passes."""

    def __init__(self, cfg: ModelConfig, enc: EncoderParams,
                 align: AlignmentParams, head: HeadParams):
        self.cfg = cfg
        self.enc = enc
        self.align = align
        self.head = head

    @classmethod
    def init(cls, seed: int, cfg: ModelConfig) -> "MemeModel":
        enc = EncoderParams.init(seed, d_h=cfg.d_h, vocab_size=cfg.vocab_size,
                                 max_len=cfg.max_len, raw_dim=cfg.raw_dim,
                                 max_patches=cfg.max_patches)
        align = AlignmentParams.init(seed + 1, cfg.d_h, cfg.conv_width,
                                     embed_matrix=enc.tok_emb)
        head = HeadParams.init(seed + 2, cfg.d_h, threshold=cfg.threshold)
        return cls(cfg, enc, align, head)

    # -- parameter bookkeeping -------------------------------------------

    def param_items(self):
        """All trainable (qualified_name, Matrix) pairs in a fixed order."""
        for name, m in self.enc.param_items():
            yield f"enc.{name}", m
        for name, m in self.align.param_items():
            yield f"align.{name}", m
        for name, m in self.head.param_items():
            yield f"head.{name}", m

    def zero_grads(self):
        return {name: Matrix.zeros(m.rows, m.cols)
                for name, m in self.param_items()}

    def instruction_tokens(self) -> list[int]:
        return tokenize(self.cfg.instruction, self.cfg.vocab_size)

    # -- forward -----------------------------------------------------------

    def forward(self, tokens: list[int], patches: Matrix | None,
                with_cache: bool = False):
        """Build the multimodal context for one meme.

        Returns (context, pooled, logits_y, logits_c[, cache]).
        """
        multimodal = self.cfg.modality == MODALITY_MULTIMODAL
        if multimodal and patches is None:
            raise DimensionError("multimodal model needs image patches")
        cache: dict = {"tokens": tokens}
        res = encode_text(tokens, self.enc, with_cache=True)
        h_t, cache["text"] = res
        if multimodal:
            h_i, cache["image"] = encode_image(patches, self.enc,
                                               with_cache=True)
            (h_prime, h_ti), cache["align"] = align_image(
                h_i, self.align, with_cache=True)
            cache["h_i"] = h_i
            cache["h_prime"] = h_prime
        else:
            h_ti = EmbeddingSequence(Matrix.zeros(0, self.cfg.d_h))
        instr = self.instruction_tokens()
        ctx = build_context(h_t, h_ti, instr, self.enc)
        cache["instr"] = instr
        pooled = pool_context(ctx)
        logits_y, logits_c = head_logits(pooled, self.head)
        cache["pooled"] = pooled
        if with_cache:
            return ctx, pooled, logits_y, logits_c, cache
        return ctx, pooled, logits_y, logits_c

    def loss_and_grads(self, tokens: list[int], patches: Matrix | None,
                       gold_label: bool, gold_category: int,
                       lam: float, grads: dict) -> float:
        """Joint loss CE_label + lam * CE_category; grads accumulated in place."""
        ctx, pooled, logits_y, logits_c, cache = self.forward(
            tokens, patches, with_cache=True)
        loss_y, gy = ops.cross_entropy(logits_y, 1 if gold_label else 0)
        loss_c, gc = ops.cross_entropy(logits_c, int(gold_category))
        gc = gc.scale(lam)
        loss = loss_y + lam * loss_c

        # heads
        grads["head.wy"].add_(ops.matmul_tn(pooled, gy))
        grads["head.by"].add_(gy)
        grads["head.wc"].add_(ops.matmul_tn(pooled, gc))
        grads["head.bc"].add_(gc)
        du = ops.matmul_nt(gy, self.head.wy)
        du.add_(ops.matmul_nt(gc, self.head.wc))

        # mean pooling spreads du uniformly over all context rows
        n_rows = ctx.x.rows
        drow = du.scale(1.0 / n_rows)
        b1, b2, b3 = ctx.boundaries
        d_ht = Matrix.vstack([drow] * b1) if b1 else Matrix.zeros(0, du.cols)
        d_hti = Matrix.vstack([drow] * (b2 - b1)) if b2 > b1 else None
        d_instr = Matrix.vstack([drow] * (b3 - b2))

        enc_grads = {k.split(".", 1)[1]: v for k, v in grads.items()
                     if k.startswith("enc.")}
        align_grads = {k.split(".", 1)[1]: v for k, v in grads.items()
                       if k.startswith("align.")}

        embed_tokens_backward(cache["instr"], self.enc, d_instr, enc_grads)
        if d_hti is not None:
            d_hi = align_image_backward(cache["align"], self.align, d_hti,
                                        align_grads,
                                        d_embed=enc_grads["tok_emb"])
            encode_image_backward(cache["image"], self.enc, d_hi, enc_grads)
        encode_text_backward(cache["text"], self.enc, d_ht, enc_grads)
        return loss

    # -- inference ----------------------------------------------------------

    def run_record(self, tokens: list[int], patches: Matrix | None,
                   blend_cfg: BlendConfig | None = None):
        """Full inference for one meme: context, fidelity blend, prediction.

        The classifier consumes the pooled context (same path training
        optimizes); the Eq.-style fidelity blend z_test is computed alongside
        and stored on the returned context.
        """
        ctx, pooled, logits_y, logits_c = self.forward(tokens, patches)
        if blend_cfg is not None and self.cfg.modality == MODALITY_MULTIMODAL:
            h_t = EmbeddingSequence(ctx.text_segment())
            h_ti = EmbeddingSequence(ctx.image_segment())
            h_i = encode_image(patches, self.enc)
            # text conditioned on the instruction, mirroring the aligned image
            h_tt = encode_text(
                (tokens + self.instruction_tokens())[: self.cfg.max_len],
                self.enc)
            ctx.z_test = blend(h_ti, h_i, h_t, h_tt, blend_cfg).values
        pred = prediction_from_logits(logits_y, logits_c, self.head.threshold)
        return ctx, pred

    def run_features(self, h_t: EmbeddingSequence,
                     h_i: EmbeddingSequence | None):
        """Inference from precomputed encoder outputs, skipping the built-in
        text/image encoders. h_i is the raw image encoding (pre-alignment)."""
        if h_t.dim != self.cfg.d_h:
            raise DimensionError(
                f"text feature dim {h_t.dim} != d_h {self.cfg.d_h}")
        if h_i is not None:
            if h_i.dim != self.cfg.d_h:
                raise DimensionError(
                    f"image feature dim {h_i.dim} != d_h {self.cfg.d_h}")
            _, h_ti = align_image(h_i, self.align)
        else:
            h_ti = EmbeddingSequence(Matrix.zeros(0, self.cfg.d_h))
        ctx = build_context(h_t, h_ti, self.instruction_tokens(), self.enc)
        pooled = pool_context(ctx)
        logits_y, logits_c = head_logits(pooled, self.head)
        return ctx, prediction_from_logits(logits_y, logits_c,
                                           self.head.threshold)

    # -- checkpoint format (MMH1) -------------------------------------------

    def meta_matrix(self) -> Matrix:
        modality_flag = 1.0 if self.cfg.modality == MODALITY_MULTIMODAL else 0.0
        return Matrix(1, 9, [
            float(self.cfg.d_h), float(self.cfg.vocab_size),
            float(self.cfg.max_len), float(self.cfg.raw_dim),
            float(self.cfg.max_patches), float(self.cfg.conv_width),
            float(self.head.threshold), modality_flag,
            float(self.enc.seed),
        ])

    def save(self, path) -> None:
        blocks = [("meta", self.meta_matrix())]
        blocks.extend(self.param_items())
        with open(path, "wb") as fh:
            fh.write(MAGIC_CHECKPOINT)
            fh.write(struct.pack("<I", len(blocks)))
            for name, m in blocks:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(MAGIC_EMBED)
                fh.write(struct.pack("<II", m.rows, m.cols))
                fh.write(struct.pack(f"<{len(m.data)}d", *m.data))

    @classmethod
    def load(cls, path, instruction: str = DEFAULT_INSTRUCTION) -> "MemeModel":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != MAGIC_CHECKPOINT:
            raise FormatError("bad magic, expected MMH1", byte_offset=0)
        (count,) = struct.unpack_from("<I", blob, 4)
        offset = 8
        blocks: dict[str, Matrix] = {}
        for _ in range(count):
            if len(blob) < offset + 4:
                raise FormatError("truncated block header", byte_offset=offset)
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            consumed: list[int] = []
            blocks[name] = _parse_embedding_block(blob, offset, consumed)
            offset = consumed[0]
        if "meta" not in blocks:
            raise FormatError("checkpoint missing meta block")
        meta = blocks["meta"].row(0)
        cfg = ModelConfig(
            d_h=int(meta[0]), vocab_size=int(meta[1]), max_len=int(meta[2]),
            raw_dim=int(meta[3]), max_patches=int(meta[4]),
            conv_width=int(meta[5]), threshold=meta[6],
            instruction=instruction,
            modality=MODALITY_MULTIMODAL if meta[7] == 1.0 else MODALITY_TEXT,
        )
        model = cls.init(int(meta[8]), cfg)
        for name, m in model.param_items():
            if name not in blocks:
                raise FormatError(f"checkpoint missing block {name!r}")
            if blocks[name].shape != m.shape:
                raise FormatError(
                    f"block {name!r} shape {blocks[name].shape} != {m.shape}")
            m.data[:] = blocks[name].data
        return model
