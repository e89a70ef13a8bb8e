"""Command-line surface: one subcommand per pipeline stage, plus ablation
grids, synthetic-corpus generation, and a serving mode.

Stage subcommands are config-driven (a JSON run configuration plus flag
overrides) and execute the pipeline up to their stage; earlier stages are
cheap deterministic recomputations and annotator responses come from the
response cache, so iterating on a late stage never re-pays for LLM calls.
"""

import argparse
import json
import os
import sys

from . import data as data_mod
from . import evaluation as eval_mod
from . import prompting as prompting_mod
from . import router as router_mod
from . import synth as synth_mod
from .annotations import write_annotation_store
from .baseline import write_gazetteer
from .errors import QueryDistillError
from .pipeline import build_annotator, load_run_config, run_pipeline
from .taxonomy import default_registry, load_registry, validate_label


def _load_registry(path):
    return load_registry(path) if path else default_registry()


def _config_from_args(args):
    overrides = {}
    for key in ("seed", "output_dir", "cache_dir", "prompt_variant",
                "persona_mode", "persona_k"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return load_run_config(args.config, overrides)


def _add_config_flags(parser):
    parser.add_argument("-c", "--config", required=True,
                        help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--output-dir", dest="output_dir", default=None)
    parser.add_argument("--cache-dir", dest="cache_dir", default=None)
    parser.add_argument("--prompt-variant", dest="prompt_variant", default=None)
    parser.add_argument("--persona-mode", dest="persona_mode", default=None)
    parser.add_argument("--persona-k", dest="persona_k", type=int, default=None)


def cmd_taxonomy(args):
    registry = _load_registry(args.registry)
    if args.validate:
        print(validate_label(registry, args.validate))
        return 0
    for entity in registry:
        print(f"{entity.id}\t{entity.definition}")
    print(f"# {len(registry)} entities, registry_hash={registry.hash}")
    return 0


def cmd_ingest(args):
    records = data_mod.read_queries(args.queries)
    data_mod.write_queries_jsonl(args.out, records)
    total = sum(r.frequency for r in records)
    print(f"{len(records)} unique queries ({total} occurrences) -> {args.out}")
    return 0


def cmd_split(args):
    records = data_mod.read_queries_jsonl(args.queries)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    split = data_mod.split_dataset(records, ratios, args.seed)
    data_mod.write_split_manifest(args.out, split)
    print(f"train={len(split.train)} dev={len(split.dev)} "
          f"test={len(split.test)} -> {args.out}")
    return 0


def _stage_command(stage):
    def run(args):
        config = _config_from_args(args)
        result = run_pipeline(config, until=stage)
        print(f"stage {stage} complete; {len(result.manifest['artifacts'])} "
              f"artifact(s) in {result.output_dir}")
        print(f"annotator calls: {result.stats['annotator_calls']}, "
              f"cache hits: {result.stats['cache_hits']}")
        return 0
    return run


def cmd_pipeline(args):
    config = _config_from_args(args)
    result = run_pipeline(config)
    for artifact in result.manifest["artifacts"]:
        print(f"{artifact['sha256'][:12]}  {artifact['path']}")
    print(f"manifest: {result.manifest_path}")
    print(f"annotator calls: {result.stats['annotator_calls']}, "
          f"cache hits: {result.stats['cache_hits']}")
    return 0


def cmd_router_train(args):
    config = _config_from_args(args)
    result = run_pipeline(config, until="router")
    model_path = os.path.join(result.output_dir, "router.json")
    with open(model_path, encoding="utf-8") as fh:
        payload = json.load(fh)
    csv_path = args.loss_csv or os.path.join(result.output_dir, "router_loss.csv")
    router_mod.write_loss_history(csv_path, payload.get("loss_history", ()))
    print(f"router model -> {model_path}")
    print(f"loss history -> {csv_path}")
    return 0


def cmd_router_select(args):
    config = _config_from_args(args)
    result = run_pipeline(config, until="router")
    model = router_mod.load_router(
        os.path.join(result.output_dir, "router.json"))
    provider = router_mod.NgramEmbeddingProvider(
        dim=config.embedding_dim, seed=config.seed)
    records = data_mod.read_queries_jsonl(
        os.path.join(result.output_dir, "queries.jsonl"))
    out_path = args.out or os.path.join(result.output_dir, "selections.jsonl")
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            chosen = router_mod.select_top_k(
                model, provider.embed(record.text), config.persona_k)
            fh.write(json.dumps({"id": record.id, "personas": chosen}) + "\n")
    print(f"wrote top-{config.persona_k} persona selections -> {out_path}")
    return 0


def cmd_ablation(args):
    """Prompt-variant grid and persona-selection comparison on one corpus."""
    config = _config_from_args(args)
    registry = load_registry(config.registry_path)
    records = data_mod.read_queries(config.queries_path)
    handle = build_annotator(config)
    from .annotations import read_annotation_store
    gold = read_annotation_store(config.gold_path)
    frequencies = {r.id: r.frequency for r in records}

    print("== prompt variant grid ==")
    from .llm_client import annotate_batch
    variant_reports = {}
    for variant in prompting_mod.PromptVariant:
        prompt_config = prompting_mod.PromptConfig(
            variant=variant, registry_hash=registry.hash,
            max_icl_examples_per_entity=config.max_icl_examples)
        prompts = [prompting_mod.build_prompt(prompt_config, registry, r.text)
                   for r in records]
        responses = annotate_batch(handle, prompts)
        store = {
            r.id: prompting_mod.parse_response(registry, response)
            for r, response in zip(records, responses)
        }
        report = eval_mod.compute_metrics(
            {r.id: gold[r.id] for r in records}, store,
            frequencies=frequencies, weighted=args.weighted,
            registry=registry, candidate=variant.name.lower())
        variant_reports[variant] = report
        print(f"{variant.name:<22} micro F1={report.micro.f1:.4f} "
              f"P={report.micro.precision:.4f} R={report.micro.recall:.4f}")
    base = variant_reports[prompting_mod.PromptVariant.BASELINE]
    for variant, report in variant_reports.items():
        if variant is prompting_mod.PromptVariant.BASELINE:
            continue
        gains = eval_mod.relative_gain(report, base)["micro"]
        shown = {k: (f"{v:+.2f}%" if v is not None else "undefined")
                 for k, v in gains.items()}
        print(f"{variant.name:<22} vs BASELINE prompt: {shown}")

    print("== persona selection comparison ==")
    for mode in ("none", "random", "router"):
        run_config = _config_from_args(args)
        run_config.persona_mode = mode
        run_config.output_dir = os.path.join(config.output_dir, f"ablation-{mode}")
        result = run_pipeline(run_config, until="aggregate")
        store = read_annotation_store(
            os.path.join(result.output_dir, "aggregated.jsonl"))
        report = eval_mod.compute_metrics(
            {r.id: gold[r.id] for r in records}, store,
            frequencies=frequencies, weighted=args.weighted,
            registry=registry, candidate=f"ensemble-{mode}")
        print(f"{mode:<8} micro F1={report.micro.f1:.4f} "
              f"P={report.micro.precision:.4f} R={report.micro.recall:.4f}")
    return 0


def cmd_eval(args):
    config = _config_from_args(args)
    result = run_pipeline(config, until="eval")
    print(f"evaluation written to {os.path.join(result.output_dir, 'eval.jsonl')}")
    with open(os.path.join(result.output_dir, "eval.jsonl"), encoding="utf-8") as fh:
        micro = [json.loads(line) for line in fh if '"micro"' in line]
    for record in micro:
        print(f"{record['system']:<32} weighted={record['weighted']} "
              f"P={record['precision']:.4f} R={record['recall']:.4f} "
              f"F1={record['f1']:.4f}")
    return 0


def cmd_serve(args):
    from .serving import ServeState, serve_stdio, serve_tcp
    state = ServeState(args.model, thresholds_path=args.thresholds)
    if args.port:
        server = serve_tcp(state, args.port)
        print(f"serving on 127.0.0.1:{args.port}", file=sys.stderr)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            server.shutdown()
        return 0
    serve_stdio(state)
    return 0


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    gazetteer = synth_mod.synth_gazetteer()
    registry = synth_mod.synth_registry()
    records, gold = synth_mod.synth_queries(gazetteer, args.count, seed=args.seed)

    with open(os.path.join(args.out, "registry.jsonl"), "w", encoding="utf-8") as fh:
        for entity in registry:
            fh.write(json.dumps({"id": entity.id, "definition": entity.definition,
                                 "icl_examples": list(entity.icl_examples)}) + "\n")
    write_gazetteer(os.path.join(args.out, "teacher_gazetteer.jsonl"), gazetteer)
    weak_baseline = synth_mod.impoverished_gazetteer(
        gazetteer, args.baseline_fraction, seed=args.seed)
    write_gazetteer(os.path.join(args.out, "baseline_gazetteer.jsonl"), weak_baseline)
    with open(os.path.join(args.out, "queries.tsv"), "w", encoding="utf-8") as fh:
        fh.write(data_mod.render_queries(records))
    write_annotation_store(os.path.join(args.out, "gold.jsonl"), gold,
                           annotator="synthetic-gold")
    with open(os.path.join(args.out, "personas.jsonl"), "w", encoding="utf-8") as fh:
        for pid, category in (("generalist", "Expert"),
                              ("enthusiast", "NicheExpert"),
                              ("skeptic", "NonDomainExpert")):
            fh.write(json.dumps({
                "id": pid, "name": pid.title(), "category": category,
                "description": f"You are a {pid} who annotates search queries.",
            }) + "\n")
    config = {
        "registry_path": "registry.jsonl",
        "queries_path": "queries.tsv",
        "gazetteer_path": "baseline_gazetteer.jsonl",
        "personas_path": "personas.jsonl",
        "gold_path": "gold.jsonl",
        "output_dir": "out",
        "cache_dir": "cache",
        "annotator": {"kind": "mock", "gazetteer": "teacher_gazetteer.jsonl",
                      "seed": args.seed, "noise_rate": 0.05,
                      "persona_bias": {
                          "enthusiast": {"add": {"Sport": "Low"}},
                          "skeptic": {"remove": ["Holiday"]}}},
        "prompt_variant": "confidence_cot_icl",
        "persona_mode": "router",
        "persona_k": 2,
        "seed": args.seed,
        "embedding_dim": 64,
        "encoder_dim": 256,
        "router": {"hidden_dim": 32, "epochs": 8},
        "classifier": {"epochs": 8, "learning_rate": 3e-3},
    }
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
    print(f"{len(records)} queries over {len(registry)} entities -> {args.out}")
    print(f"run the pipeline with: querydistill pipeline -c "
          f"{os.path.join(args.out, 'config.json')}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="querydistill",
        description="Weak-supervision toolkit for media-search query entities")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("taxonomy", help="print or validate the entity registry")
    p.add_argument("--registry", default="", help="registry JSONL (default: shipped)")
    p.add_argument("--validate", default="", help="label to validate")
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("ingest", help="deduplicate a query log")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="deterministic train/dev/test split")
    p.add_argument("--queries", required=True, help="ingested queries JSONL")
    p.add_argument("--ratios", default="0.7,0.1,0.2")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    for stage, help_text in (
            ("annotate", "annotate queries (fan out over personas)"),
            ("matrix", "build persona x entity confidence matrices"),
            ("aggregate", "aggregate persona responses per query"),
            ("labels", "derive weak indicator labels"),
            ("train", "train the distilled classifier"),
            ("tune", "tune per-entity decision thresholds"),
    ):
        p = sub.add_parser(stage, help=help_text)
        _add_config_flags(p)
        p.set_defaults(func=_stage_command(stage))

    p = sub.add_parser("router-train", help="train the persona-selection router")
    _add_config_flags(p)
    p.add_argument("--loss-csv", dest="loss_csv", default="")
    p.set_defaults(func=cmd_router_train)

    p = sub.add_parser("router-select", help="write per-query top-k personas")
    _add_config_flags(p)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_router_select)

    p = sub.add_parser("eval", help="run the pipeline and report metrics")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ablation",
                       help="prompt-variant grid and persona-mode comparison")
    _add_config_flags(p)
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("serve", help="serve a trained model over stdio or TCP")
    p.add_argument("--model", required=True)
    p.add_argument("--thresholds", default="")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--baseline-fraction", type=float, default=0.4)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QueryDistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
