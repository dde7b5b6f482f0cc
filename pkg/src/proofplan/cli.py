"""Command-line entry point.

Subcommands: embed, index, prove, eval-dist, eval-mrr, eval-extrinsic,
eval-ssrc, train, plot, selftest. Every run writes its artifacts under
``--out`` together with a manifest recording the resolved configuration,
its digest, the seed, and the input paths; report files themselves carry
no timestamps, so a rerun with the same configuration, seed, and
deterministic backends reproduces them byte for byte.

Configuration can come from a JSON file via ``--config``; explicit flags
always win over the file, the file wins over built-in defaults. Exit
status is 2 for usage errors, 1 for runtime failures (message on stderr),
0 otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data_io, plots, reports, selfcheck
from .bm25 import Bm25Index
from .encoders import (
    ConceptLexicon,
    Encoder,
    FileLookupEncoder,
    ProjectedEncoder,
    RemoteEncoder,
    SyntheticAdditiveEncoder,
    write_embedding_file,
)
from .errors import ProofPlanError
from .evaluation import (
    Conditioning,
    distribution_report,
    extrinsic,
    mrr,
    ssrc_breakdown,
)
from .heuristics import AdditiveHeuristic, Bm25Heuristic, PairRanker, RemotePairScorer
from .oracles import OracleEntailment, OraclePairRanker, OracleStepModel
from .projection import ProjectionHead
from .search import (
    RemoteEntailment,
    RemoteStepModel,
    SearchConfig,
    run_search,
)
from .tuning import TrainConfig, train


class CliError(Exception):
    """Bad flag combination discovered after parsing; exits with status 2."""


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with flag defaults")
    parser.add_argument("--out", help="run directory for artifacts (default: run)")
    parser.add_argument("--seed", type=int, help="top-level random seed (default: 0)")
    parser.add_argument("--jobs", type=int, help="parallel workers where supported")


def _add_encoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embeddings", help="embedding JSONL file (text -> vector)")
    parser.add_argument("--encoder-url", help="remote encoder endpoint")
    parser.add_argument("--lexicon", help="concept lexicon file (synthetic encoder)")
    parser.add_argument("--head", help="projection-head checkpoint applied on top")
    parser.add_argument("--lenient-embeddings", action="store_true",
                        help="hash-fallback vectors for texts missing from --embeddings")


def _add_heuristic_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--heuristic", choices=["additive", "bm25", "scorer", "oracle"],
                        help="pair heuristic (default: additive)")
    parser.add_argument("--scorer-url", help="remote pair-scorer endpoint")
    parser.add_argument("--both-orders", action="store_true",
                        help="score external pairs in both orders, keep the max")
    parser.add_argument("--k1", type=float, help="BM25 k1 (default 1.2)")
    parser.add_argument("--b", type=float, help="BM25 b (default 0.75)")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stepmodel-url", help="remote step-model endpoint")
    parser.add_argument("--entail-url", help="remote entailment endpoint")
    parser.add_argument("--oracle-backends", action="store_true",
                        help="replay gold annotations as step model and entailment "
                             "(embedding-agreement pruning is off in replay mode)")


def _add_search_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-steps", type=int)
    parser.add_argument("--k-samples", type=int)
    parser.add_argument("--entailment-threshold", type=float)
    parser.add_argument("--agreement-threshold", type=float)
    parser.add_argument("--agreement-min-count", type=int)
    parser.add_argument("--no-duplicate-filter", action="store_true")
    parser.add_argument("--no-consanguinity-filter", action="store_true")
    parser.add_argument("--no-agreement-filter", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proofplan",
        description="embedding-space planning for natural language proofs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="precompute an embedding file for a dataset")
    _add_common(p)
    _add_encoder_flags(p)
    p.add_argument("--data", required=True, help="instances file (native or tree lines)")

    p = sub.add_parser("index", help="build and save a BM25 index over a corpus")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="fact corpus JSONL")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)

    p = sub.add_parser("prove", help="search one dataset, write traces and proofs")
    _add_common(p)
    _add_encoder_flags(p)
    _add_heuristic_flags(p)
    _add_backend_flags(p)
    _add_search_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--limit", type=int, help="only the first N instances")

    p = sub.add_parser("eval-dist", help="cosine distributions of pair populations")
    _add_common(p)
    _add_encoder_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--stepmodel-url")
    p.add_argument("--oracle-backends", action="store_true")

    p = sub.add_parser("eval-mrr", help="rank annotated pairs, report MRR")
    _add_common(p)
    _add_encoder_flags(p)
    _add_heuristic_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--condition", choices=["deduction", "goal"])

    p = sub.add_parser("eval-extrinsic", help="full-search solved rate and steps")
    _add_common(p)
    _add_encoder_flags(p)
    _add_heuristic_flags(p)
    _add_backend_flags(p)
    _add_search_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--limit", type=int)

    p = sub.add_parser("eval-ssrc", help="contrast-set MRR by category/perturbation")
    _add_common(p)
    _add_encoder_flags(p)
    _add_heuristic_flags(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("train", help="fit the projection head on annotated trees")
    _add_common(p)
    _add_encoder_flags(p)
    p.add_argument("--data", required=True, help="training instances with gold trees")
    p.add_argument("--dev", help="dev instances for early stopping")
    p.add_argument("--tau", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--trees-per-batch", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--condition", choices=["deduction", "goal"],
                   help="conditioning of the dev ranking metric")

    p = sub.add_parser("plot", help="re-render figures from report files")
    _add_common(p)
    p.add_argument("--report", required=True,
                   help="a report .json/.csv, or a run directory")

    p = sub.add_parser("selftest", help="run the offline verification suite")
    _add_common(p)
    p.add_argument("--fast", action="store_true", help="shrunk trial counts")

    return parser


# ---------------------------------------------------------------------------
# configuration resolution


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return config


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Flags win over the config file, the file wins over hard defaults."""
    file_config = _load_config_file(getattr(args, "config", None))
    unknown = set(file_config) - set(vars(args)) - set(defaults)
    if unknown:
        raise CliError(f"config file sets unknown keys: {sorted(unknown)}")
    resolved = {}
    for key, hard in {**vars(args), **defaults}.items():
        cli_value = getattr(args, key, None)
        if isinstance(cli_value, bool):
            # store_true flags: file value applies only when the flag is absent
            resolved[key] = cli_value or bool(file_config.get(key, hard or False))
        elif cli_value is not None:
            resolved[key] = cli_value
        elif key in file_config:
            resolved[key] = file_config[key]
        else:
            resolved[key] = hard
    resolved.pop("config", None)
    return resolved


_COMMON_DEFAULTS = {"out": "run", "seed": 0, "jobs": 1}


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg: dict, command: str, out: Path, data_paths: list[str],
              outputs: list[Path]) -> None:
    data_io.write_manifest(
        out, command=command,
        config={k: v for k, v in sorted(cfg.items()) if v is not None},
        seed=cfg["seed"], dataset_paths=data_paths,
        outputs=[str(p.name) for p in outputs])


# ---------------------------------------------------------------------------
# backend construction


def make_encoder(cfg: dict) -> Encoder | None:
    base: Encoder | None = None
    if cfg.get("embeddings"):
        base = FileLookupEncoder(cfg["embeddings"],
                                 strict=not cfg.get("lenient_embeddings"))
    elif cfg.get("encoder_url"):
        base = RemoteEncoder(cfg["encoder_url"])
    elif cfg.get("lexicon"):
        base = SyntheticAdditiveEncoder(ConceptLexicon.load(cfg["lexicon"]))
    if base is not None and cfg.get("head"):
        base = ProjectedEncoder(base, ProjectionHead.load(cfg["head"]))
    return base


def require_encoder(cfg: dict) -> Encoder:
    encoder = make_encoder(cfg)
    if encoder is None:
        raise CliError("an encoder is required: pass --embeddings, --encoder-url, "
                       "or --lexicon")
    return encoder


def make_ranker(cfg: dict, instances=None) -> PairRanker:
    name = cfg.get("heuristic") or "additive"
    if name == "additive":
        return AdditiveHeuristic(require_encoder(cfg))
    if name == "bm25":
        return Bm25Heuristic(cfg.get("k1") or 1.2,
                             cfg.get("b") if cfg.get("b") is not None else 0.75)
    if name == "scorer":
        if not cfg.get("scorer_url"):
            raise CliError("--heuristic scorer needs --scorer-url")
        return RemotePairScorer(cfg["scorer_url"],
                                both_orders=bool(cfg.get("both_orders")))
    if name == "oracle":
        if not instances:
            raise CliError("--heuristic oracle needs a dataset with gold trees")
        return OraclePairRanker(instances)
    raise CliError(f"unknown heuristic {name!r}")


def make_step_backends(cfg: dict, instances):
    if cfg.get("oracle_backends"):
        return OracleStepModel(instances, filler=False), OracleEntailment()
    if not cfg.get("stepmodel_url") or not cfg.get("entail_url"):
        raise CliError("search needs --stepmodel-url and --entail-url, "
                       "or --oracle-backends")
    return RemoteStepModel(cfg["stepmodel_url"]), RemoteEntailment(cfg["entail_url"])


def make_search_config(cfg: dict) -> SearchConfig:
    base = SearchConfig(seed=cfg["seed"])
    if cfg.get("max_steps") is not None:
        base.max_steps = cfg["max_steps"]
    if cfg.get("k_samples") is not None:
        base.k_samples = cfg["k_samples"]
    if cfg.get("entailment_threshold") is not None:
        base.entailment_threshold = cfg["entailment_threshold"]
    if cfg.get("agreement_threshold") is not None:
        base.agreement_threshold = cfg["agreement_threshold"]
    if cfg.get("agreement_min_count") is not None:
        base.agreement_min_count = cfg["agreement_min_count"]
    base.filter_duplicates = not cfg.get("no_duplicate_filter")
    base.filter_consanguinity = not cfg.get("no_consanguinity_filter")
    # replay filler sentences are out-of-vocabulary for strict synthetic
    # encoders, so replay mode cannot run the embedding-agreement pass
    base.filter_agreement = (not cfg.get("no_agreement_filter")
                             and not cfg.get("oracle_backends"))
    base.validate()
    return base


def _load_data(cfg: dict, strict_gold: bool = True):
    return data_io.load_instances(cfg["data"], strict_gold=strict_gold)


# ---------------------------------------------------------------------------
# subcommand bodies


def cmd_embed(cfg: dict) -> int:
    encoder = require_encoder(cfg)
    instances = _load_data(cfg, strict_gold=False)
    texts: list[str] = []
    for instance in instances:
        texts.extend(p.text for p in instance.premises)
        texts.append(instance.goal.text)
        if instance.gold_tree:
            texts.extend(s.conclusion.text for s in instance.gold_tree.steps)
    vectors = encoder.encode_batch(texts)
    out = _out_dir(cfg)
    target = out / "embeddings.jsonl"
    count = write_embedding_file(target, zip(texts, vectors))
    _manifest(cfg, "embed", out, [cfg["data"]], [target])
    print(f"wrote {count} embeddings to {target}")
    return 0


def cmd_index(cfg: dict) -> int:
    corpus = data_io.load_corpus(cfg["corpus"])
    index = Bm25Index(cfg.get("k1") or 1.2,
                      cfg.get("b") if cfg.get("b") is not None else 0.75)
    index.build([fact.text for fact in corpus])
    out = _out_dir(cfg)
    target = out / "bm25.idx"
    index.save(target)
    ids_path = out / "bm25.docs.jsonl"
    with open(ids_path, "w", encoding="utf-8") as fh:
        for fact in corpus:
            fh.write(json.dumps({"id": fact.id, "text": fact.text},
                               ensure_ascii=False) + "\n")
    _manifest(cfg, "index", out, [cfg["corpus"]], [target, ids_path])
    print(f"indexed {index.n_docs} facts into {target}")
    return 0


def cmd_prove(cfg: dict) -> int:
    instances = _load_data(cfg, strict_gold=False)
    if cfg.get("limit"):
        instances = instances[: cfg["limit"]]
    ranker = make_ranker(cfg, instances)
    step_model, entailment = make_step_backends(cfg, instances)
    search_config = make_search_config(cfg)
    encoder = make_encoder(cfg)
    out = _out_dir(cfg)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)

    rows = []
    outputs: list[Path] = []
    for instance in instances:
        result = run_search(instance, ranker, step_model, entailment,
                            SearchConfig(**vars(search_config)), encoder=encoder)
        trace_path = traces_dir / f"{instance.instance_id}.trace.jsonl"
        data_io.write_trace(trace_path, result.trace)
        outputs.append(trace_path)
        rows.append([instance.instance_id, result.proved,
                     result.termination.value, result.step_count,
                     result.goal_entailment])
        status = "proved" if result.proved else result.termination.value
        print(f"{instance.instance_id}: {status} in {result.step_count} steps")
    results_path = out / "prove.csv"
    reports.write_csv(results_path,
                      ["instance_id", "proved", "termination", "steps", "entailment"],
                      rows)
    outputs.append(results_path)
    _manifest(cfg, "prove", out, [cfg["data"]], outputs)
    return 0


def cmd_eval_dist(cfg: dict) -> int:
    instances = _load_data(cfg)
    encoder = require_encoder(cfg)
    step_model = None
    if cfg.get("oracle_backends"):
        step_model = OracleStepModel(instances, filler=False)
    elif cfg.get("stepmodel_url"):
        step_model = RemoteStepModel(cfg["stepmodel_url"])
    report = distribution_report(instances, encoder, step_model=step_model,
                                 seed=cfg["seed"])
    out = _out_dir(cfg)
    written = reports.write_distribution_report(out, report)
    figure = plots.plot_distributions(report.values, out / "distributions.png")
    _manifest(cfg, "eval-dist", out, [cfg["data"]], written + [figure])
    for name, mean in sorted(report.means.items()):
        print(f"{name}: mean cosine {mean:.4f}")
    return 0


def cmd_eval_mrr(cfg: dict) -> int:
    instances = _load_data(cfg)
    ranker = make_ranker(cfg, instances)
    conditioning = Conditioning(cfg.get("condition") or "deduction")
    report = mrr(instances, ranker, conditioning, seed=cfg["seed"])
    out = _out_dir(cfg)
    written = reports.write_mrr_report(out, report)
    figure = plots.plot_rank_histogram([e.rank for e in report.entries],
                                       report.mrr, out / "mrr.png")
    _manifest(cfg, "eval-mrr", out, [cfg["data"]], written + [figure])
    print(f"{conditioning.value}-conditioned MRR {report.mrr:.4f} "
          f"over {report.n_examples} steps")
    return 0


def cmd_eval_extrinsic(cfg: dict) -> int:
    instances = _load_data(cfg, strict_gold=False)
    if cfg.get("limit"):
        instances = instances[: cfg["limit"]]
    ranker = make_ranker(cfg, instances)
    step_model, entailment = make_step_backends(cfg, instances)
    report = extrinsic(instances, ranker, step_model, entailment,
                       make_search_config(cfg), encoder=make_encoder(cfg),
                       jobs=cfg["jobs"])
    out = _out_dir(cfg)
    written = reports.write_extrinsic_report(out, report)
    terminations: dict[str, int] = {}
    for outcome in report.outcomes:
        terminations[outcome.termination] = terminations.get(outcome.termination, 0) + 1
    figure = plots.plot_extrinsic(
        terminations, [o.steps for o in report.outcomes if o.proved],
        out / "extrinsic.png")
    _manifest(cfg, "eval-extrinsic", out, [cfg["data"]], written + [figure])
    mean_steps = report.mean_steps_solved
    print(f"solved {report.solved_fraction:.1%} of {report.n_instances}; "
          + (f"mean steps {mean_steps:.2f}" if mean_steps is not None
             else "no solved instances"))
    return 0


def cmd_eval_ssrc(cfg: dict) -> int:
    examples = data_io.load_ssrc(cfg["data"])
    ranker = make_ranker(cfg)
    report = ssrc_breakdown(examples, ranker)
    out = _out_dir(cfg)
    written = reports.write_ssrc_report(out, report)
    figure = plots.plot_ssrc(
        {c.value: v for c, v in report.per_category.items()},
        {p.value: v for p, v in report.per_perturbation.items()},
        report.overall, out / "contrast.png")
    _manifest(cfg, "eval-ssrc", out, [cfg["data"]], written + [figure])
    print(f"overall contrast MRR {report.overall:.4f} "
          f"over {len(examples)} examples")
    return 0


def cmd_train(cfg: dict) -> int:
    encoder = require_encoder(cfg)
    instances = _load_data(cfg)
    triplets = data_io.extract_triplets(instances, encoder, strict=False)
    config = TrainConfig(seed=cfg["seed"])
    if cfg.get("tau") is not None:
        config.tau = cfg["tau"]
    if cfg.get("learning_rate") is not None:
        config.learning_rate = cfg["learning_rate"]
    if cfg.get("trees_per_batch") is not None:
        config.trees_per_batch = cfg["trees_per_batch"]
    if cfg.get("max_epochs") is not None:
        config.max_epochs = cfg["max_epochs"]
    if cfg.get("patience") is not None:
        config.patience = cfg["patience"]
    if cfg.get("condition"):
        config.dev_conditioning = Conditioning(cfg["condition"])
    dev_instances = data_io.load_instances(cfg["dev"]) if cfg.get("dev") else None
    result = train(triplets, config,
                   dev_instances=dev_instances,
                   base_encoder=encoder if dev_instances is not None else None)
    out = _out_dir(cfg)
    head_path = out / "head.txt"
    result.head.save(head_path)
    history_path = out / "history.csv"
    reports.write_history(history_path, result.history)
    figure = plots.render_history_csv(history_path, out / "history.png")
    data_paths = [cfg["data"]] + ([cfg["dev"]] if cfg.get("dev") else [])
    _manifest(cfg, "train", out, data_paths, [head_path, history_path, figure])
    last = result.history[-1]
    print(f"trained {len(result.history)} epochs on {len(triplets)} triplets; "
          f"best epoch {result.best_epoch}; final loss {last.loss:.4f}"
          + (f"; dev MRR {last.dev_mrr:.4f}" if last.dev_mrr is not None else ""))
    return 0


def cmd_plot(cfg: dict) -> int:
    target = Path(cfg["report"])
    rendered: list[Path] = []
    if target.is_dir():
        for json_path in sorted(target.glob("*.json")):
            if json_path.name == "manifest.json":
                continue
            try:
                rendered.append(plots.render_from_report(json_path))
            except ValueError:
                continue
        history = target / "history.csv"
        if history.exists():
            rendered.append(plots.render_history_csv(history))
    elif target.suffix == ".json":
        rendered.append(plots.render_from_report(target))
    elif target.name.endswith("history.csv"):
        rendered.append(plots.render_history_csv(target))
    else:
        raise CliError(f"nothing to render from {target}")
    if not rendered:
        raise CliError(f"no renderable reports under {target}")
    for path in rendered:
        print(f"rendered {path}")
    return 0


def cmd_selftest(cfg: dict) -> int:
    results = selfcheck.run_all(fast=bool(cfg.get("fast")))
    for result in results:
        print(result.line)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


_COMMANDS = {
    "embed": cmd_embed,
    "index": cmd_index,
    "prove": cmd_prove,
    "eval-dist": cmd_eval_dist,
    "eval-mrr": cmd_eval_mrr,
    "eval-extrinsic": cmd_eval_extrinsic,
    "eval-ssrc": cmd_eval_ssrc,
    "train": cmd_train,
    "plot": cmd_plot,
    "selftest": cmd_selftest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args, _COMMON_DEFAULTS)
        return _COMMANDS[args.command](cfg)
    except CliError as exc:
        parser.exit(2, f"usage error: {exc}\n")
    except ProofPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
