"""Command-line interface.

Subcommands: extract, score, mine, train, eval-retrieval, eval-classify,
synth, run. Exit codes: 0 success, 1 usage error, 2 data/validation
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from .alignment import DegenerateEmbeddingError
from .corpus import DataError, ingest, read_entities, write_entities
from .extraction import MetaEntities, extract
from .mining import mine_corpus
from .ontology import OntologyError, default_ontology, load_ontology, save_ontology
from .pipeline import (
    PipelineError,
    RunConfig,
    config_from_file,
    evaluate_classification,
    evaluate_retrieval_tasks,
    load_heads,
    run_pipeline,
    stage_seed,
    with_seed_defaults,
)
from .scoring import GammaWeights, score
from .synthetic import SyntheticSpec, synthesize

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves 2 for data errors
    def error(self, message):  # noqa: D102
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="sectioned config file")
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides config)")
    parser.add_argument("--force", action="store_true", help="rerun stages even if up to date")
    parser.add_argument("--ontology", type=Path, help="ontology file (default: embedded)")


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = config_from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if getattr(args, "ontology", None) is not None:
        cfg = replace(cfg, ontology=args.ontology)
    if getattr(args, "corpus", None) is not None:
        cfg = replace(cfg, corpus=args.corpus)
    if getattr(args, "eval_corpus", None) is not None:
        cfg = replace(cfg, eval_corpus=args.eval_corpus)
    return cfg


def _load_meta_record(path: Path) -> MetaEntities:
    record = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(record, list):
        record = {"entries": record}
    return MetaEntities.from_record(record)


def _cmd_extract(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if cfg.corpus is None:
        raise PipelineError("extract needs --corpus or a config with one")
    ont = default_ontology() if cfg.ontology is None else load_ontology(cfg.ontology)
    corpus = ingest(cfg.corpus)
    items = [(rec.id, extract(rec.report(), ont)) for rec in corpus]
    cfg.out.mkdir(parents=True, exist_ok=True)
    out_path = args.output or (cfg.out / "entities.jsonl")
    write_entities(out_path, items)
    print(f"extracted {len(items)} records -> {out_path}")
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    weights = GammaWeights(args.gamma0, args.gamma1, args.gamma2)
    mi = _load_meta_record(args.first)
    mj = _load_meta_record(args.second)
    breakdown = score(mi, mj, weights, args.semantics)
    print(
        json.dumps(
            {
                "total": breakdown.total,
                "prefactor": breakdown.prefactor,
                "shared_diseases": [
                    {
                        "disease": t.disease,
                        "ji_adj": t.ji_adj,
                        "ji_dir": t.ji_dir,
                        "summand": t.summand,
                    }
                    for t in breakdown.shared_diseases
                ],
            },
            indent=2,
        )
    )
    return EXIT_OK


def _cmd_mine(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    mining = cfg.mining
    if args.batch_size is not None:
        mining = replace(mining, batch_size=args.batch_size)
    if args.target is not None:
        mining = replace(mining, target=args.target)
    if args.tau_min is not None:
        mining = replace(mining, tau_min=args.tau_min)
    if args.tau_max is not None:
        mining = replace(mining, tau_max=args.tau_max)
    cfg = replace(cfg, mining=mining)
    samples = read_entities(args.entities)
    miner_cfg = cfg.miner_config()
    cfg.out.mkdir(parents=True, exist_ok=True)
    out_path = args.output or (cfg.out / "triplets.jsonl")
    result = mine_corpus(
        samples,
        k=cfg.mining.batch_size,
        target=cfg.mining.target,
        cfg=miner_cfg,
        out_path=out_path,
        pass_limit=cfg.mining.pass_limit,
    )
    print(
        f"mined {len(result.triplets)} unique triplets in {result.passes} passes -> {out_path}"
        + ("" if result.reached_target else " (target not reached)")
    )
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    stages = ("train",)
    artifacts = run_pipeline(cfg, stages=stages, force=args.force)
    print(f"trained heads -> {artifacts['train']}")
    return EXIT_OK


def _cmd_eval_retrieval(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    heads_path = args.heads or (cfg.out / "heads.ckpt")
    _, heads = load_heads(heads_path)
    eval_corpus = cfg.eval_corpus or cfg.corpus
    if eval_corpus is None:
        raise PipelineError("eval-retrieval needs --eval-corpus or a config with one")
    report = evaluate_retrieval_tasks(with_seed_defaults(cfg), heads, eval_corpus, args.match_mode)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval_classify(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    heads_path = args.heads or (cfg.out / "heads.ckpt")
    _, heads = load_heads(heads_path)
    eval_corpus = cfg.eval_corpus or cfg.corpus
    if eval_corpus is None:
        raise PipelineError("eval-classify needs --eval-corpus or a config with one")
    report = evaluate_classification(with_seed_defaults(cfg), heads, eval_corpus)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    seed = args.seed if args.seed is not None else stage_seed(cfg.seed, "synth")
    spec = SyntheticSpec(
        n_classes=args.classes,
        per_class=args.per_class,
        image_size=args.image_size,
        overlap_rate=args.overlap,
        seed=seed,
        id_prefix=args.id_prefix,
    )
    result = synthesize(spec, args.out or cfg.out)
    print(f"wrote {result.records} records -> {result.corpus_path}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    stages = tuple(args.stages or ("extract", "mine", "train", "eval"))
    artifacts = run_pipeline(cfg, stages=stages, force=args.force)
    for stage, path in artifacts.items():
        print(f"{stage}: {path}")
    return EXIT_OK


def _cmd_dump_ontology(args: argparse.Namespace) -> int:
    ont = default_ontology() if args.ontology is None else load_ontology(args.ontology)
    if args.output:
        save_ontology(ont, args.output)
        print(f"wrote ontology -> {args.output}")
    else:
        from .ontology import serialize_ontology

        print(serialize_ontology(ont), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medtriplet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract entities from a corpus")
    _add_common(p)
    p.add_argument("--corpus", type=Path, help="corpus jsonl file")
    p.add_argument("--output", type=Path, help="entity file to write")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("score", help="score two meta-entity records")
    p.add_argument("first", type=Path)
    p.add_argument("second", type=Path)
    p.add_argument("--gamma0", type=float, default=0.85)
    p.add_argument("--gamma1", type=float, default=0.10)
    p.add_argument("--gamma2", type=float, default=0.05)
    p.add_argument("--semantics", choices=("union", "intersection"), default="union")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("mine", help="mine triplets from an entity file")
    _add_common(p)
    p.add_argument("entities", type=Path, help="entities jsonl file")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--target", type=int)
    p.add_argument("--tau-min", type=float, dest="tau_min")
    p.add_argument("--tau-max", type=float, dest="tau_max")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("train", help="train projection heads on mined triplets")
    _add_common(p)
    p.add_argument("--corpus", type=Path)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval-retrieval", help="retrieval P@R over an eval corpus")
    _add_common(p)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--eval-corpus", type=Path, dest="eval_corpus")
    p.add_argument("--heads", type=Path, help="heads checkpoint (default: <out>/heads.ckpt)")
    p.add_argument("--match-mode", choices=("mean", "exact"), default="mean")
    p.set_defaults(func=_cmd_eval_retrieval)

    p = sub.add_parser("eval-classify", help="zero-shot classification over an eval corpus")
    _add_common(p)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--eval-corpus", type=Path, dest="eval_corpus")
    p.add_argument("--heads", type=Path)
    p.set_defaults(func=_cmd_eval_classify)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=50, dest="per_class")
    p.add_argument("--image-size", type=int, default=32, dest="image_size")
    p.add_argument("--overlap", type=float, default=0.3)
    p.add_argument("--id-prefix", default="s", dest="id_prefix")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="run pipeline stages")
    _add_common(p)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--eval-corpus", type=Path, dest="eval_corpus")
    p.add_argument("--stages", nargs="+", choices=("extract", "mine", "train", "eval"))
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("dump-ontology", help="print or save the active ontology")
    p.add_argument("--ontology", type=Path)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=_cmd_dump_ontology)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataError, OntologyError, PipelineError, DegenerateEmbeddingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
