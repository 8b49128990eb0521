"""Command-line interface.

Subcommands: gen-data, stats, train, predict, explain, evaluate. Exit codes:
0 success, 1 I/O or transport failure, 2 validation failure, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import RunConfig, apply_overrides, load_config
from .dataset import (compute_stats, load_manifest, resolve_patches,
                      stats_csv_rows, stats_table)
from .encoders import EncoderParams, load_embeddings, tokenize
from .errors import (BackendError, DegenerateAgreementError, DimensionError,
                     DivergenceError, FormatError, ManifestError, RenderError,
                     TransportError, ValidationError)
from .heads import Category
from .kernels import BACKEND_NAME
from .metrics import (MetricReport, coherence, f1, macro_f1, readability,
                      relevance, report, report_csv_rows, semsim)
from .model import (DEFAULT_INSTRUCTION, MODALITY_MULTIMODAL, MemeModel,
                    ModelConfig)
from .rationale import (CompletionBackend, build_reasoning_prompt,
                        default_reasoning_template, generate,
                        load_fewshot_pool, render_shots, PromptTemplate)
from .synth import generate_planted, generate_wbms_manifest
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _write_jsonl(path, objs) -> None:
    lines = "".join(json.dumps(o) + "\n" for o in objs)
    if path is None:
        sys.stdout.write(lines)
    else:
        Path(path).write_text(lines, encoding="utf-8")


def _read_jsonl(path) -> list[dict]:
    objs = []
    for line_no, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            objs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{line_no}: invalid JSON: {exc.msg}")
    return objs


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for attr in ("seed", "omega", "alpha", "shots", "workers", "epochs", "lr",
                 "lam", "d_h", "vocab", "max_len", "raw_dim", "max_patches",
                 "n_patches", "conv_width", "threshold", "modality",
                 "manifest", "checkpoint"):
        if hasattr(args, attr) and getattr(args, attr) is not None:
            overrides[attr] = getattr(args, attr)
    return apply_overrides(cfg, **overrides)


def _model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(
        d_h=cfg.d_h, vocab_size=cfg.vocab, max_len=cfg.max_len,
        raw_dim=cfg.raw_dim, max_patches=cfg.max_patches,
        conv_width=cfg.conv_width, threshold=cfg.threshold,
        instruction=cfg.instruction or DEFAULT_INSTRUCTION,
        modality=cfg.modality)


def _require(value, flag: str):
    if not value:
        raise ValidationError(f"missing required option {flag}")
    return value


# -- subcommands ----------------------------------------------------------------


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if args.kind == "wbms":
        out.parent.mkdir(parents=True, exist_ok=True)
        records = generate_wbms_manifest(out)
        print(f"wrote {len(records)} records to {out}")
    else:
        records = generate_planted(out, n=args.n, seed=args.seed or 0,
                                   raw_dim=args.raw_dim,
                                   n_patches=args.n_patches)
        print(f"wrote {len(records)} records to {out / 'manifest.jsonl'} "
              f"(+ patch grids)")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _config_from_args(args)
    records = load_manifest(_require(cfg.manifest, "--manifest"))
    stats = compute_stats(records)
    print(stats_table(stats))
    if args.csv:
        _write_csv(args.csv, stats_csv_rows(stats))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    manifest = _require(cfg.manifest, "--manifest")
    checkpoint = _require(cfg.checkpoint, "--checkpoint")
    records = load_manifest(manifest)
    dataset = []
    for r in records:
        if r.misogyny_label is None:
            raise ValidationError(f"record {r.id}: training needs a gold label")
        dataset.append((r, r.misogyny_label, r.category))
    tcfg = TrainConfig(seed=cfg.seed, epochs=cfg.epochs, lr=cfg.lr,
                       lam=cfg.lam, n_patches=cfg.n_patches,
                       model=_model_config(cfg))
    model, history = train(dataset, tcfg, base_dir=Path(manifest).parent)
    Path(checkpoint).parent.mkdir(parents=True, exist_ok=True)
    model.save(checkpoint)
    if args.loss_log:
        Path(args.loss_log).write_text(
            "".join(f"{epoch}\t{loss!r}\n"
                    for epoch, loss in enumerate(history)),
            encoding="utf-8")
    print(f"trained {cfg.epochs} epochs on {len(dataset)} records "
          f"[{BACKEND_NAME} backend]")
    print(f"final mean loss: {history[-1]:.6f}")
    print(f"checkpoint: {checkpoint}")
    return EXIT_OK


def _predict_objects(model: MemeModel, records, cfg: RunConfig, base_dir):
    multimodal = model.cfg.modality == MODALITY_MULTIMODAL

    def one(record):
        tokens = tokenize(record.text, model.cfg.vocab_size)
        patches = None
        if multimodal:
            patches = resolve_patches(record, model.cfg.raw_dim,
                                      n_patches=cfg.n_patches,
                                      base_dir=base_dir)
        _, pred = model.run_record(tokens, patches)
        return {
            "id": record.id,
            "label": pred.label,
            "misogyny_prob": pred.misogyny_prob,
            "category": pred.category.display_name,
            "category_dist": pred.category_dist,
        }

    if cfg.workers <= 1 or len(records) <= 1:
        return [one(r) for r in records]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(one, records))


def cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    model = MemeModel.load(_require(cfg.checkpoint, "--checkpoint"),
                           instruction=cfg.instruction or DEFAULT_INSTRUCTION)
    if args.text_emb:
        # precomputed-feature bypass: one record, encoders skipped
        h_t = load_embeddings(args.text_emb)
        h_i = load_embeddings(args.image_emb) if args.image_emb else None
        _, pred = model.run_features(h_t, h_i)
        _write_jsonl(args.out, [{
            "id": "features",
            "label": pred.label,
            "misogyny_prob": pred.misogyny_prob,
            "category": pred.category.display_name,
            "category_dist": pred.category_dist,
        }])
        return EXIT_OK
    manifest = _require(cfg.manifest, "--manifest")
    records = load_manifest(manifest)
    objs = _predict_objects(model, records, cfg, Path(manifest).parent)
    _write_jsonl(args.out, objs)
    return EXIT_OK


def _salient_tokens(text: str, k: int = 3) -> list[str]:
    """Longest distinct words as a cheap salience proxy for the summary."""
    words = sorted(set(text.split()), key=lambda w: (-len(w), w))
    return words[:k]


def cmd_explain(args) -> int:
    cfg = _config_from_args(args)
    manifest = _require(cfg.manifest, "--manifest")
    records = {r.id: r for r in load_manifest(manifest)}
    preds = _read_jsonl(_require(args.predictions, "--predictions"))
    missing = [p.get("id") for p in preds if p.get("id") not in records]
    if missing:
        raise ValidationError(
            f"predictions reference unknown ids: {missing[:5]}")
    tpl = (PromptTemplate.from_file(args.template) if args.template
           else default_reasoning_template())
    shots = load_fewshot_pool()[: cfg.shots]
    backend = CompletionBackend(kind=args.backend,
                                base_url=cfg.llm_base_url or args.base_url or "",
                                model=cfg.llm_model, timeout=cfg.timeout)

    def build_prompt(pred_obj):
        record = records[pred_obj["id"]]
        label = bool(pred_obj["label"])
        category = Category.from_name(pred_obj["category"])
        salient = ", ".join(_salient_tokens(record.text)) or "(image only)"
        summary = (f"{record.text or '(image-only meme)'} "
                   f"[domain: {category.display_name}; "
                   f"salient: {salient}]")
        prompt = build_reasoning_prompt(summary, label, category, tpl)
        if shots:
            prompt = render_shots(shots) + "\n" + prompt
        return prompt

    prompts = [build_prompt(p) for p in preds]

    def one(prompt):
        try:
            return generate(prompt, backend), None
        except (TransportError, BackendError) as exc:
            if args.strict:
                raise
            return None, str(exc)

    if cfg.workers <= 1 or len(prompts) <= 1:
        results = [one(p) for p in prompts]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one, prompts))

    objs = []
    for pred_obj, (rationale, error) in zip(preds, results):
        obj = {"id": pred_obj["id"], "label": pred_obj["label"],
               "category": pred_obj["category"], "rationale": rationale}
        if error is not None:
            obj["error"] = error
        objs.append(obj)
    _write_jsonl(args.out, objs)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    manifest = _require(cfg.manifest, "--manifest")
    records = {r.id: r for r in load_manifest(manifest)}
    preds = _read_jsonl(_require(args.predictions, "--predictions"))
    unmatched = sorted(p.get("id") for p in preds if p.get("id") not in records)
    if unmatched:
        raise ValidationError(
            f"{len(unmatched)} prediction ids not in manifest: {unmatched[:10]}")

    pred_labels, gold_labels = [], []
    pred_cats, gold_cats = [], []
    for p in preds:
        record = records[p["id"]]
        if record.misogyny_label is None:
            raise ValidationError(f"record {p['id']}: manifest has no gold label")
        pred_labels.append(bool(p["label"]))
        gold_labels.append(bool(record.misogyny_label))
        pred_cats.append(Category.from_name(p["category"]))
        gold_cats.append(record.category)
    mmc = f1(pred_labels, gold_labels)
    macro = macro_f1(pred_cats, gold_cats)

    rel = coh = read = sem = 0.0
    if args.rationales:
        rats = _read_jsonl(args.rationales)
        unmatched = sorted(r.get("id") for r in rats
                           if r.get("id") not in records)
        if unmatched:
            raise ValidationError(
                f"{len(unmatched)} rationale ids not in manifest: "
                f"{unmatched[:10]}")
        enc = EncoderParams.init(cfg.seed, d_h=cfg.d_h, vocab_size=cfg.vocab,
                                 max_len=cfg.max_len, raw_dim=cfg.raw_dim,
                                 max_patches=cfg.max_patches)
        rels, cohs, reads, sems = [], [], [], []
        for r in rats:
            rationale = r.get("rationale")
            if not rationale:
                continue
            record = records[r["id"]]
            meme_text = record.text or record.id
            # similarity reference: meme text plus its gold category name
            reference = f"{meme_text} {record.category.display_name}"
            rels.append(relevance(rationale, meme_text, enc))
            cohs.append(coherence(rationale, enc))
            reads.append(readability(rationale))
            sems.append(semsim(rationale, reference, enc))
        if not rels:
            raise ValidationError("no usable rationales to score")
        rel = sum(rels) / len(rels)
        coh = sum(cohs) / len(cohs)
        read = sum(reads) / len(reads)
        sem = sum(sems) / len(sems)

    m = MetricReport(mmc_f1=mmc, macro_f1=macro, relevance=rel,
                     coherence=coh, readability=read, semsim=sem)
    rows = [(args.setup, args.model_name, m)]
    text = report(rows)
    print(text)
    print(f"macro category F1: {macro:.4f}")
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text + "\n", encoding="utf-8")
        _write_csv(out / "report.csv", report_csv_rows(rows))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--manifest", help="JSONL meme manifest")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memescan",
        description="Multimodal meme misogyny detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic corpora")
    p.add_argument("kind", choices=["wbms", "planted"])
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--raw-dim", type=int, default=8, dest="raw_dim")
    p.add_argument("--n-patches", type=int, default=4, dest="n_patches")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("stats", help="corpus statistics table")
    _add_common(p)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model on a labeled manifest")
    _add_common(p)
    p.add_argument("--checkpoint", help="output checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lam", type=float, help="category-loss weight")
    p.add_argument("--d-h", type=int, dest="d_h")
    p.add_argument("--vocab", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--raw-dim", type=int, dest="raw_dim")
    p.add_argument("--max-patches", type=int, dest="max_patches")
    p.add_argument("--n-patches", type=int, dest="n_patches")
    p.add_argument("--conv-width", type=int, dest="conv_width")
    p.add_argument("--threshold", type=float)
    p.add_argument("--modality", choices=["multimodal", "text"])
    p.add_argument("--loss-log", dest="loss_log",
                   help="write per-epoch mean loss to this file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label memes with a trained model")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--out", help="output JSONL (default: stdout)")
    p.add_argument("--omega", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--text-emb", dest="text_emb",
                   help="precomputed text features (MME1), bypasses encoders")
    p.add_argument("--image-emb", dest="image_emb",
                   help="precomputed image features (MME1)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="generate rationales for predictions")
    _add_common(p)
    p.add_argument("--predictions", help="JSONL from `memescan predict`")
    p.add_argument("--out", help="output JSONL (default: stdout)")
    p.add_argument("--backend", choices=["stub", "http"], default="stub")
    p.add_argument("--base-url", dest="base_url",
                   help="HTTP completion endpoint base URL")
    p.add_argument("--shots", type=int, choices=[0, 2, 5])
    p.add_argument("--template", help="custom reasoning prompt template file")
    p.add_argument("--strict", action="store_true",
                   help="abort on the first generation failure")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="score predictions and rationales")
    _add_common(p)
    p.add_argument("--predictions")
    p.add_argument("--rationales")
    p.add_argument("--report-dir", dest="report_dir")
    p.add_argument("--setup", default="default")
    p.add_argument("--model-name", dest="model_name", default="toy-encoder")
    p.add_argument("--d-h", type=int, dest="d_h")
    p.add_argument("--vocab", type=int)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TransportError, BackendError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ManifestError, FormatError, DimensionError,
            RenderError, DegenerateAgreementError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
