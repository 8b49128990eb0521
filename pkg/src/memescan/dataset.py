"""Dataset manifests, corpus statistics, and annotation-quality metrics."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from random import Random

from .encoders import load_embeddings, stable_hash
from .errors import (DegenerateAgreementError, ManifestError, ValidationError)
from .heads import Category
from .matrix import Matrix

TEXT_KINDS = ("Different", "Same", "Image")

MANIFEST_KEYS = {"id", "category", "text_kind", "caption", "overlay",
                 "image_ref", "misogyny_label"}


@dataclass
class MemeRecord:
    id: str
    category: Category
    text_kind: str
    caption: str
    overlay: str
    image_ref: str
    misogyny_label: bool | None = None

    def validate(self):
        if self.text_kind not in TEXT_KINDS:
            raise ValidationError(f"unknown text_kind {self.text_kind!r}")
        if self.text_kind == "Image" and (self.caption or self.overlay):
            raise ValidationError(
                f"record {self.id}: text_kind Image requires empty caption/overlay")

    @property
    def text(self) -> str:
        """Caption and overlay joined; empty for image-only memes."""
        return " ".join(part for part in (self.caption, self.overlay) if part)


def record_to_json(r: MemeRecord) -> dict:
    return {
        "id": r.id,
        "category": r.category.display_name,
        "text_kind": r.text_kind,
        "caption": r.caption,
        "overlay": r.overlay,
        "image_ref": r.image_ref,
        "misogyny_label": r.misogyny_label,
    }


def load_manifest(path) -> list[MemeRecord]:
    """Parse a JSON Lines manifest, enforcing record invariants."""
    records: list[MemeRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line_no) from None
            if not isinstance(obj, dict):
                raise ManifestError("record is not an object", line_no)
            unknown = set(obj) - MANIFEST_KEYS
            if unknown:
                raise ManifestError(f"unknown keys {sorted(unknown)}", line_no)
            missing = MANIFEST_KEYS - set(obj)
            if missing:
                raise ManifestError(f"missing keys {sorted(missing)}", line_no)
            try:
                rec = MemeRecord(
                    id=str(obj["id"]),
                    category=Category.from_name(obj["category"]),
                    text_kind=obj["text_kind"],
                    caption=obj["caption"] or "",
                    overlay=obj["overlay"] or "",
                    image_ref=obj["image_ref"],
                    misogyny_label=obj["misogyny_label"],
                )
                rec.validate()
            except (ValueError, ValidationError) as exc:
                raise ManifestError(str(exc), line_no) from None
            if rec.id in seen:
                raise ManifestError(f"duplicate id {rec.id!r}", line_no)
            seen.add(rec.id)
            records.append(rec)
    return records


def save_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r), sort_keys=True) + "\n")


# -- corpus statistics --------------------------------------------------------

@dataclass
class CategoryStats:
    category: Category
    count: int
    different: int
    same: int
    image: int
    proportion: float


@dataclass
class DatasetStats:
    per_category: list[CategoryStats]
    total: int


def compute_stats(records) -> DatasetStats:
    """Per-category counts, (Different, Same, Image) triples, and 2-decimal
    proportions."""
    if not records:
        raise ValidationError("empty manifest")
    counts = {c: [0, 0, 0] for c in Category}
    for r in records:
        counts[r.category][TEXT_KINDS.index(r.text_kind)] += 1
    total = len(records)
    per = []
    for c in Category:
        diff, same, image = counts[c]
        n = diff + same + image
        if n == 0:
            continue
        per.append(CategoryStats(
            category=c, count=n, different=diff, same=same, image=image,
            proportion=round(n / total, 2)))
    return DatasetStats(per_category=per, total=total)


def stats_table(stats: DatasetStats) -> str:
    header = f"{'Category':<12}{'Count':>7}  {'(Different, Same, Image)':<26}{'Proportion':>10}"
    lines = [header, "-" * len(header)]
    for s in stats.per_category:
        triple = f"({s.different}, {s.same}, {s.image})"
        lines.append(f"{s.category.display_name:<12}{s.count:>7}  "
                     f"{triple:<26}{s.proportion:>10.2f}")
    lines.append(f"{'Total':<12}{stats.total:>7}")
    return "\n".join(lines)


def stats_csv_rows(stats: DatasetStats) -> list[list]:
    rows = [["category", "count", "different", "same", "image", "proportion"]]
    for s in stats.per_category:
        rows.append([s.category.display_name, s.count, s.different, s.same,
                     s.image, f"{s.proportion:.2f}"])
    return rows


# -- annotation quality -------------------------------------------------------

def fleiss_kappa(ratings: list[list[int]]) -> float:
    """Fleiss' kappa for N items x k categories rating counts.

    Every row must sum to the same number of raters n >= 2. Returns 1.0
    exactly for unanimous agreement on every item; raises
    DegenerateAgreementError when the expected agreement is 1 (only one
    category ever used).
    """
    if not ratings or not ratings[0]:
        raise ValidationError("empty ratings matrix")
    n_items = len(ratings)
    n_cats = len(ratings[0])
    n = sum(ratings[0])
    if n < 2:
        raise ValidationError("need at least 2 raters per item")
    for row in ratings:
        if len(row) != n_cats:
            raise ValidationError("ragged ratings matrix")
        if sum(row) != n:
            raise ValidationError(f"row sums differ: {sum(row)} != {n}")
        if any(v < 0 for v in row):
            raise ValidationError("negative rating count")

    col_sums = [sum(row[j] for row in ratings) for j in range(n_cats)]
    total = n_items * n
    p_j = [c / total for c in col_sums]
    p_bar_e = sum(p * p for p in p_j)
    p_i = [(sum(v * v for v in row) - n) / (n * (n - 1)) for row in ratings]
    p_bar = sum(p_i) / n_items

    if max(p_j) == 1.0:
        raise DegenerateAgreementError(
            "all ratings fall in a single category; expected agreement is 1")
    if p_bar == 1.0:
        return 1.0
    return (p_bar - p_bar_e) / (1.0 - p_bar_e)


@dataclass
class AnnotatorScore:
    accuracy: float
    consistency: float
    kappa: float

    def validate(self):
        if not 1.0 <= self.accuracy <= 5.0:
            raise ValidationError(f"accuracy {self.accuracy} outside [1, 5]")
        if not 1.0 <= self.consistency <= 5.0:
            raise ValidationError(f"consistency {self.consistency} outside [1, 5]")
        if not -1.0 <= self.kappa <= 1.0:
            raise ValidationError(f"kappa {self.kappa} outside [-1, 1]")


@dataclass
class AnnotatorSummary:
    rows: list[AnnotatorScore]
    averages: AnnotatorScore


def annotator_summary(scores) -> AnnotatorSummary:
    """Per-annotator (accuracy, consistency, kappa) rows plus their mean."""
    rows = [s if isinstance(s, AnnotatorScore) else AnnotatorScore(*s)
            for s in scores]
    if not rows:
        raise ValidationError("no annotator scores")
    for r in rows:
        r.validate()
    n = len(rows)
    averages = AnnotatorScore(
        accuracy=sum(r.accuracy for r in rows) / n,
        consistency=sum(r.consistency for r in rows) / n,
        kappa=sum(r.kappa for r in rows) / n,
    )
    return AnnotatorSummary(rows=rows, averages=averages)


# -- splitting ----------------------------------------------------------------

def split(records, seed: int, train_fraction: float):
    """Deterministic stratified train/test split by category."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must be in (0, 1)")
    by_cat: dict[Category, list[MemeRecord]] = {}
    for r in records:
        by_cat.setdefault(r.category, []).append(r)
    rng = Random(seed)
    train, test = [], []

    eligible = []
    for cat in Category:
        group = by_cat.get(cat)
        if not group:
            continue
        if len(group) < 2:
            warnings.warn(
                f"category {cat.display_name} has < 2 records; all go to train")
            train.extend(group)
            continue
        eligible.append((cat, group))

    # largest-remainder allocation: every category's train count is floor or
    # floor+1 of its exact share, and the totals match the overall fraction
    n_eligible = sum(len(g) for _, g in eligible)
    target_total = int(train_fraction * n_eligible + 0.5)
    shares = [(cat, group, train_fraction * len(group)) for cat, group in eligible]
    floors = {cat: int(share) for cat, _, share in shares}
    leftover = target_total - sum(floors.values())
    by_remainder = sorted(shares, key=lambda t: (-(t[2] - int(t[2])), t[0]))
    for cat, _, _ in by_remainder[:max(leftover, 0)]:
        floors[cat] += 1

    for cat, group in eligible:
        order = list(group)
        rng.shuffle(order)
        n_train = min(max(floors[cat], 0), len(order))
        train.extend(order[:n_train])
        test.extend(order[n_train:])
    return train, test


# -- image patch resolution ----------------------------------------------------

def resolve_patches(record: MemeRecord, raw_dim: int, n_patches: int = 4,
                    base_dir=None) -> Matrix:
    """Patch grid for a record.

    image_ref naming an existing MME1 file (absolute or relative to
    base_dir) is loaded; any other ref yields a deterministic pseudo-random
    grid derived from a stable hash of the ref string.
    """
    ref = record.image_ref
    candidates = []
    if ref:
        candidates.append(Path(ref))
        if base_dir is not None:
            candidates.append(Path(base_dir) / ref)
    for cand in candidates:
        if cand.suffix == ".mme" and cand.is_file():
            grid = load_embeddings(cand).values
            if grid.cols != raw_dim:
                raise ValidationError(
                    f"{cand}: patch dim {grid.cols} != expected {raw_dim}")
            return grid
    rng = Random(stable_hash(f"patches:{ref}"))
    return Matrix.uniform(n_patches, raw_dim, 1.0, rng)
