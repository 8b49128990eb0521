"""Synthetic data generators.

Real memes are not redistributed with this package. Two stand-ins are
provided: a corpus-statistics mirror with the published per-category counts
and text-kind triples but placeholder text, and a planted-pattern corpus
whose misogyny signal lives in the image patches (category signal in the
text) for end-to-end training and ablation runs.
"""

from __future__ import annotations

from pathlib import Path
from random import Random

from .dataset import MemeRecord, save_manifest
from .encoders import EmbeddingSequence, save_embeddings
from .heads import Category
from .matrix import Matrix

# (category, count, different, same, image) mirroring the WBMS corpus
WBMS_COUNTS = [
    (Category.KITCHEN, 1076, 780, 125, 171),
    (Category.LEADERSHIP, 534, 262, 0, 272),
    (Category.WORKING, 321, 151, 0, 170),
    (Category.SHOPPING, 199, 118, 4, 77),
]

CATEGORY_WORDS = {
    Category.KITCHEN: ["kitchen", "cooking", "dinner", "stove"],
    Category.LEADERSHIP: ["leadership", "boss", "meeting", "decision"],
    Category.WORKING: ["working", "job", "office", "salary"],
    Category.SHOPPING: ["shopping", "mall", "sale", "spending"],
    Category.OTHER: ["random", "general", "everyday", "misc"],
}


def generate_wbms_manifest(path) -> list[MemeRecord]:
    """Write a manifest reproducing the published counts with placeholder text."""
    records = []
    for cat, count, different, same, image in WBMS_COUNTS:
        kinds = ["Different"] * different + ["Same"] * same + ["Image"] * image
        assert len(kinds) == count
        words = CATEGORY_WORDS[cat]
        for i, kind in enumerate(kinds):
            rid = f"{cat.display_name.lower()}-{i:04d}"
            base = f"placeholder {words[i % len(words)]} meme text {i}"
            if kind == "Different":
                caption, overlay = base, f"overlay stereotype line {i}"
            elif kind == "Same":
                caption = overlay = base
            else:
                caption = overlay = ""
            records.append(MemeRecord(
                id=rid, category=cat, text_kind=kind,
                caption=caption, overlay=overlay,
                image_ref=f"synthetic://{rid}", misogyny_label=True))
    save_manifest(path, records)
    return records


def planted_signal_vector(seed: int, raw_dim: int) -> Matrix:
    """Fixed per-corpus direction that encodes the misogyny label in patches."""
    rng = Random(seed * 7919 + 13)
    return Matrix.uniform(1, raw_dim, 1.0, rng)


def generate_planted(out_dir, n: int, seed: int = 0, raw_dim: int = 8,
                     n_patches: int = 4, signal: float = 2.0,
                     noise: float = 0.3) -> list[MemeRecord]:
    """Planted-pattern corpus: category readable from text, label only from
    the image patches. Writes a manifest plus one MME1 patch grid per meme."""
    out_dir = Path(out_dir)
    grids = out_dir / "patches"
    grids.mkdir(parents=True, exist_ok=True)
    rng = Random(seed)
    sig = planted_signal_vector(seed, raw_dim)
    cats = list(Category)
    records = []
    for i in range(n):
        cat = cats[i % len(cats)]
        label = (i // len(cats)) % 2 == 0
        words = CATEGORY_WORDS[cat]
        caption = f"{words[0]} {words[(i // 2) % len(words)]} meme number {i}"
        overlay = f"{words[(i + 1) % len(words)]} overlay {i}"
        grid = Matrix.uniform(n_patches, raw_dim, noise, rng)
        s = signal if label else -signal
        for p in range(n_patches):
            for j in range(raw_dim):
                grid.data[p * raw_dim + j] += s * sig.data[j]
        ref = f"patches/meme-{i:04d}.mme"
        save_embeddings(grids / f"meme-{i:04d}.mme", EmbeddingSequence(grid))
        records.append(MemeRecord(
            id=f"meme-{i:04d}", category=cat, text_kind="Different",
            caption=caption, overlay=overlay, image_ref=ref,
            misogyny_label=label))
    save_manifest(out_dir / "manifest.jsonl", records)
    return records
