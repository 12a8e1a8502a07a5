"""Command line pipeline: ingest, emit-train, generate, evaluate, render.

Configuration is plain ``key=value`` text; command-line flags override
file values, and every command writes its fully resolved configuration
next to its outputs so runs can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .client import (
    BackendEndpoint,
    ClientError,
    HttpBackend,
    MockBackend,
    generate as request_completion,
    select_decoding,
    validate_and_repair,
)
from .core import Domain
from .ingest import (
    PRESETS,
    IngestError,
    ingest,
    layout_from_record,
    layout_to_record,
    read_store,
    registry_from_layouts,
    split,
    write_store,
)
from .metrics import (
    GeometricEmbedding,
    MetricError,
    evaluate_sets,
    ranking_score,
)
from .prompts import PromptError, parse_response
from .render import render_svg
from .tasks import (
    MixtureSchedule,
    SamplerError,
    Task,
    build_sample,
    mixture_report,
    sample_batch,
)


class CliError(Exception):
    pass


def load_config_file(path: str) -> dict:
    """Parse a plain key=value config file; '#' starts a comment line."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def resolve_config(defaults: dict, file_values: dict, flag_values: dict) -> dict:
    """Later sources win: defaults, then file, then explicit flags."""
    resolved = dict(defaults)
    resolved.update(file_values)
    resolved.update({k: v for k, v in flag_values.items() if v is not None})
    return resolved


def write_resolved_config(resolved: dict, path: str) -> None:
    lines = [f"{key}={resolved[key]}" for key in sorted(resolved)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _dump_json(payload, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_corpus_args(pairs) -> dict:
    corpora = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise CliError(f"--corpus expects domain=path, got {pair!r}")
        name, path = pair.split("=", 1)
        domain = Domain.from_text(name.strip())
        corpora[domain] = read_store(path.strip())
    if not corpora:
        raise CliError("at least one --corpus domain=path is required")
    return corpora


def cmd_ingest(args) -> int:
    if args.preset not in PRESETS:
        raise CliError(f"unknown preset {args.preset!r}; "
                       f"choose from {', '.join(sorted(PRESETS))}")
    spec = PRESETS[args.preset]
    file_values = load_config_file(args.config) if args.config else {}
    resolved = resolve_config(
        {"seed": "0"},
        file_values,
        {"seed": args.seed, "preset": args.preset},
    )
    seed = int(resolved["seed"])

    os.makedirs(args.out_dir, exist_ok=True)
    if spec.official_split:
        if not args.test_in:
            raise CliError(f"preset {args.preset!r} uses an official split; "
                           "pass --test-in")
        train_result = ingest(args.inputs, spec)
        test_result = ingest(args.test_in, spec)
        train, test = train_result.layouts, test_result.layouts
        report = {"train": train_result.report.to_dict(),
                  "test": test_result.report.to_dict()}
    else:
        result = ingest(args.inputs, spec)
        parts = split(result.layouts, seed=seed)
        train, test = parts.train, parts.test
        report = result.report.to_dict()

    write_store(train, os.path.join(args.out_dir, "train.jsonl"))
    write_store(test, os.path.join(args.out_dir, "test.jsonl"))
    _dump_json(report, os.path.join(args.out_dir, "filter_report.json"))
    write_resolved_config(resolved, os.path.join(args.out_dir, "ingest.config.txt"))
    print(f"ingest: {len(train)} train / {len(test)} test layouts "
          f"({args.preset})")
    return 0


def _schedule_for(corpora: dict, file_values: dict) -> MixtureSchedule:
    """Build the mixture, restricting domain weights to supplied corpora."""
    defaults = MixtureSchedule()
    weights = {d: w for d, w in defaults.domain_weights.items() if d in corpora}
    missing = [d.value for d in corpora if d not in defaults.domain_weights]
    if missing:
        raise CliError(f"no default weight for domains: {', '.join(missing)}")
    kwargs = {}
    for key in ("mixed_no_refine", "mixed_with_refine", "refinement",
                "unconditional", "unconditional_prompted", "relation_rate"):
        if f"mixture.{key}" in file_values:
            kwargs[key] = float(file_values[f"mixture.{key}"])
    return MixtureSchedule(domain_weights=weights, **kwargs)


def cmd_emit_train(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    resolved = resolve_config(
        {"seed": "0", "n": "1000"},
        file_values,
        {"seed": args.seed, "n": args.n, "only_task": args.only_task},
    )
    seed, n = int(resolved["seed"]), int(resolved["n"])
    corpora = _parse_corpus_args(args.corpus)
    schedule = _schedule_for(corpora, file_values)
    only_task = Task(resolved["only_task"]) if resolved.get("only_task") else None

    samples = []
    with open(args.out, "w", encoding="utf-8") as fh:
        for sample in sample_batch(corpora, n=n, seed=seed, schedule=schedule,
                                   only_task=only_task):
            fh.write(json.dumps(sample.training_record(), sort_keys=True,
                                separators=(",", ":")))
            fh.write("\n")
            samples.append(sample)
    report = mixture_report(samples)
    _dump_json(report, args.out + ".mixture.json")
    write_resolved_config(resolved, args.out + ".config.txt")
    print(f"emit-train: {report['total']} records -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    resolved = resolve_config(
        {"seed": "0", "workers": "1", "repair": "off", "strategy": ""},
        file_values,
        {
            "seed": args.seed,
            "task": args.task,
            "workers": args.workers,
            "repair": "on" if args.repair else None,
            "strategy": args.strategy,
            "limit": args.limit,
        },
    )
    seed = int(resolved["seed"])
    task = Task(resolved["task"])
    repair = resolved["repair"] == "on"
    strategy_override = resolved["strategy"] or None

    reference = read_store(args.reference)
    if not reference:
        raise CliError(f"reference store {args.reference} is empty")
    limit = resolved.get("limit")
    if limit:
        reference = reference[: int(limit)]
    registry = registry_from_layouts(reference)

    if args.endpoint:
        backend = HttpBackend(BackendEndpoint(url=args.endpoint))
    else:
        backend = MockBackend(registry=registry)

    os.makedirs(args.out_dir, exist_ok=True)
    jobs = []
    for i, layout in enumerate(reference):
        rng = np.random.default_rng([seed, i])
        sample = build_sample(layout, task, rng, source_index=i)
        params = select_decoding(task, expected_elements=len(layout),
                                 strategy_override=strategy_override)
        jobs.append((i, layout, sample, params))

    def run_completion(job):
        _, _, sample, params = job
        try:
            return request_completion(sample.condition, params, backend), None
        except (ClientError, PromptError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    workers = int(resolved["workers"])
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            completions = list(pool.map(run_completion, jobs))
    else:
        completions = [run_completion(job) for job in jobs]

    records = []
    for (i, layout, sample, params), (raw, error) in zip(jobs, completions):
        record = {
            "id": i,
            "task": task.value,
            "domain": layout.domain.value,
            "prompt": sample.condition.text,
            "raw": raw,
            "layout": None,
            "repairs": None,
            "error": error,
        }
        if raw is not None:
            try:
                if repair:
                    fixed, log = validate_and_repair(
                        raw, registry, layout.domain,
                        expected_elements=len(layout),
                        page_w=layout.page_w, page_h=layout.page_h,
                        column_count=layout.column_count)
                    record["layout"] = layout_to_record(fixed)
                    record["repairs"] = log.to_dict()
                else:
                    parsed = parse_response(raw, registry, layout.domain,
                                            page_w=layout.page_w,
                                            page_h=layout.page_h,
                                            column_count=layout.column_count)
                    record["layout"] = layout_to_record(parsed)
            except (ClientError, PromptError) as exc:
                record["error"] = f"{type(exc).__name__}: {exc}"
        records.append(record)

    out_path = os.path.join(args.out_dir, "generated.jsonl")
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    write_resolved_config(resolved, os.path.join(args.out_dir,
                                                 "generate.config.txt"))
    failures = sum(1 for r in records if r["error"])
    print(f"generate: {len(records) - failures}/{len(records)} completions "
          f"-> {out_path}")
    return 0


def _read_generated(path: str):
    layouts, pairs_ids, failures = [], [], 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("layout") is None:
                failures += 1
                continue
            layouts.append(layout_from_record(record["layout"]))
            pairs_ids.append(record["id"])
    return layouts, pairs_ids, failures


def cmd_evaluate(args) -> int:
    if args.rank:
        return _rank_methods(args)
    if not (args.generated and args.reference):
        raise CliError("evaluate needs --generated and --reference "
                       "(or --rank entries)")
    generated, ids, failures = _read_generated(args.generated)
    if not generated:
        raise CliError("no parseable generated layouts to evaluate")
    reference = read_store(args.reference)
    pairs = [(g, reference[i]) for g, i in zip(generated, ids)
             if i < len(reference)]
    embedding = GeometricEmbedding.from_layouts(reference, generated)
    report = evaluate_sets(generated, reference, pairs=pairs,
                           embedding=embedding)
    payload = report.to_dict()
    payload["generation_failures"] = failures
    _dump_json(payload, args.out)
    print(f"evaluate: fid={payload['fid']} alignment={payload['alignment']:.4f} "
          f"overlap={payload['overlap']:.4f} max_iou={payload['max_iou']} "
          f"-> {args.out}")
    return 0


def _rank_methods(args) -> int:
    table = {}
    for entry in args.rank:
        if "=" not in entry:
            raise CliError(f"--rank expects name=report.json, got {entry!r}")
        name, path = entry.split("=", 1)
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        table[name] = {metric: payload.get(metric)
                       for metric in ("fid", "alignment", "overlap", "max_iou")}
    scores = ranking_score(table)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "fid", "alignment", "overlap", "max_iou",
                         "ranking_score"])
        for name in sorted(scores, key=lambda m: (scores[m], m)):
            row = table[name]
            writer.writerow([name, row["fid"], row["alignment"], row["overlap"],
                             row["max_iou"], f"{scores[name]:.2f}"])
    print(f"rank: {len(scores)} methods -> {args.out}")
    return 0


def _iter_render_layouts(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "layout" in record:            # generated.jsonl record
                if record["layout"] is None:
                    continue
                record = record["layout"]
            yield layout_from_record(record, locus=f"{path}:{lineno}")


def cmd_render(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    count = 0
    for layout in _iter_render_layouts(args.store):
        if args.limit and count >= args.limit:
            break
        svg = render_svg(layout)
        name = f"layout_{count:06d}.svg"
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(svg)
        count += 1
    print(f"render: {count} SVG files -> {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutgen",
        description="Layout generation pipeline: ingest, emit-train, "
                    "generate, evaluate, render.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize raw annotations into a store")
    p.add_argument("--preset", required=True)
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   help="input file or directory (repeatable)")
    p.add_argument("--test-in", action="append",
                   help="test-side inputs for official-split presets")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("emit-train", help="sample training pairs as JSONL")
    p.add_argument("--corpus", action="append", required=True,
                   help="domain=store.jsonl (repeatable)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--only-task", choices=[t.value for t in Task])
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_emit_train)

    p = sub.add_parser("generate", help="build prompts and query a backend")
    p.add_argument("--reference", required=True, help="test-split store")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--mock", action="store_true",
                   help="use the offline mock backend (default)")
    p.add_argument("--endpoint", help="serving endpoint URL")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--repair", action="store_true",
                   help="salvage malformed completions instead of failing them")
    p.add_argument("--strategy", choices=["greedy", "topk", "multinomial"],
                   help="override the per-task decoding strategy")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated layouts")
    p.add_argument("--generated")
    p.add_argument("--reference")
    p.add_argument("--rank", action="append",
                   help="name=report.json (repeatable) for ranking mode")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="write SVGs for a store or generation run")
    p.add_argument("--store", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, IngestError, MetricError, SamplerError, PromptError,
            ClientError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
