"""Command-line entry point: ``mango-curate <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import CurationError
from .ingest import read_manifest, write_jsonl, write_manifest
from .pipeline import (
    PipelineConfig,
    default_workers,
    provenance,
    read_rows,
    rebase_record,
    report_lines,
    run_filter,
    run_select,
    run_split,
    run_stats,
    run_stratify,
)
from .signature import SignatureConfig
from .spectral_index import BandRoles

log = logging.getLogger("mango_curate")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        })


def _setup_logging(verbosity: int) -> None:
    root = logging.getLogger("mango_curate")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter())
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbosity > 1 else logging.INFO if verbosity else logging.WARNING)
    root.propagate = False


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _selection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["mf", "mvi"])
    p.add_argument("--epsilon", type=float, help="relative ridge added to the background covariance")
    p.add_argument("--k", type=int, dest="k_pixels", help="reference pixels per region")
    p.add_argument("--element", type=int, help="erosion structuring element side")
    p.add_argument("--seed-namespace", type=int, help="64-bit constant for reference sampling")
    p.add_argument("--exclusion-radius", type=int, help="background buffer around the mask, pixels")
    p.add_argument("--band-roles", help="green,nir,swir1 band indices (default 2,7,10)")
    p.add_argument("--workers", type=int, help="region worker processes (env MANGO_WORKERS)")
    p.add_argument("--dump-detections", metavar="DIR", help="write every response map as MSR1")
    p.add_argument("--figures", metavar="DIR", help="render one PNG per region")


def _filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kappa", type=float, help="cloud-fraction ceiling (strict)")
    p.add_argument("--omega", type=float, help="coverage floor (inclusive)")
    p.add_argument("--year", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mango-curate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("filter", help="apply cloud/coverage/year thresholds to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="also write the JSON summary here")
    _filter_flags(p)
    _common(p)

    p = sub.add_parser("select", help="pick the best acquisition per region")
    p.add_argument("--manifest", required=True)
    p.add_argument("--masks", help="directory of <region_id>.msr masks (default: manifest mask_path)")
    p.add_argument("--out", required=True)
    _selection_flags(p)
    _common(p)

    p = sub.add_parser("stratify", help="enforce category ratios on a selection report")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, help="allowed relative deviation from 2:2:1 shares")
    _common(p)

    p = sub.add_parser("split", help="country-disjoint train/val/test split")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", help="train,val,test weights (default 8,1,1)")
    _common(p)

    p = sub.add_parser("stats", help="composition counts per category, split and country")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", help="also write the summary here")
    p.add_argument("--figures", metavar="DIR", help="render the composition chart")
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic corpus of MSR1 tiles and a manifest")
    p.add_argument("--spec", required=True, help="JSON corpus spec")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("pipeline", help="filter, select, stratify, split and stats in one go")
    p.add_argument("--manifest", required=True)
    p.add_argument("--masks")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True, help="seed for stratify and split")
    _filter_flags(p)
    _selection_flags(p)
    _common(p)
    return parser


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = PipelineConfig.from_json(json.loads(Path(args.config).read_text()))
    g = lambda name: getattr(args, name, None)  # noqa: E731

    fkw = {k: g(k) for k in ("kappa", "omega", "year") if g(k) is not None}
    if fkw:
        cfg.filter = replace(cfg.filter, **fkw)
    skw = {}
    if g("k_pixels") is not None:
        skw["k_pixels"] = g("k_pixels")
    if g("element") is not None:
        skw["structuring_element"] = g("element")
    if g("seed_namespace") is not None:
        skw["rng_seed_namespace"] = g("seed_namespace")
    if skw:
        cfg.signature = SignatureConfig(**{**cfg.signature.__dict__, **skw})
    if g("band_roles"):
        cfg.band_roles = BandRoles.parse(g("band_roles"))
    for name in ("method", "epsilon", "exclusion_radius"):
        if g(name) is not None:
            setattr(cfg, name, g(name))
    seed = g("seed")
    if seed is not None:
        cfg.stratify = replace(cfg.stratify, seed=seed)
        cfg.split_seed = seed
    if g("tolerance") is not None:
        cfg.stratify = replace(cfg.stratify, ratio_tolerance=g("tolerance"))
    if g("ratios"):
        cfg.split_ratios = tuple(float(x) for x in g("ratios").split(","))
    workers = g("workers")
    cfg.workers = workers if workers is not None else (cfg.workers if args.config else default_workers())
    cfg.__post_init__()
    return cfg


def _emit(summary: dict, path=None, header: dict | None = None) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))
    if path:
        body = summary if header is None else {"_provenance": header, **summary}
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def cmd_filter(args, cfg: PipelineConfig) -> dict:
    src = Path(args.manifest).resolve().parent
    dst = Path(args.out).resolve().parent
    kept, summary = run_filter(read_manifest(args.manifest), cfg.filter, src)
    header = provenance("filter", {"filter": cfg.algorithm_dict()["filter"]})
    write_manifest(args.out, [rebase_record(r, src, dst) for r in kept], header={"_provenance": header})
    _emit(summary, args.summary, header)
    return summary


def cmd_select(args, cfg: PipelineConfig) -> dict:
    src = Path(args.manifest).resolve().parent
    dst = Path(args.out).resolve().parent
    records = read_manifest(args.manifest)
    results, failures = run_select(records, src, cfg, args.masks, args.dump_detections, args.figures)
    lines = report_lines(results, failures, cfg, src, dst)
    write_jsonl(args.out, lines[1:-1], header=lines[0], trailer=lines[-1])
    summary = {
        "regions": len(results),
        "failed": len(failures),
        "by_rule": {
            rule: sum(r.selection_rule.value == rule for r in results) for rule in ("ArgmaxJ", "CloudMin")
        },
    }
    _emit(summary)
    return summary


def cmd_stratify(args, cfg: PipelineConfig) -> dict:
    rows, summary = run_stratify(read_rows(args.inp), cfg.stratify)
    header = provenance("stratify", {"stratify": cfg.algorithm_dict()["stratify"]}, {"stratify": cfg.stratify.seed})
    write_jsonl(args.out, rows, header={"_provenance": header, "_ratios": summary})
    _emit(summary)
    return summary


def cmd_split(args, cfg: PipelineConfig) -> dict:
    rows, summary = run_split(read_rows(args.inp), cfg.split_ratios, cfg.split_seed)
    header = provenance("split", {"split": cfg.algorithm_dict()["split"]}, {"split": cfg.split_seed})
    write_jsonl(args.out, rows, header={"_provenance": header, "_split": summary})
    _emit(summary)
    return summary


def cmd_stats(args, cfg: PipelineConfig) -> dict:
    summary = run_stats(read_rows(args.inp))
    _emit(summary, args.out, provenance("stats", {}))
    if args.figures:
        from .figures import render_composition

        render_composition(summary, Path(args.figures) / "composition.png")
    return summary


def cmd_synth(args, cfg: PipelineConfig) -> dict:
    from .synth import CorpusSpec, write_corpus

    try:
        spec = CorpusSpec.from_json(json.loads(Path(args.spec).read_text()))
    except (TypeError, ValueError) as exc:
        raise CurationError(f"bad synth spec: {exc}") from exc
    truth = write_corpus(spec, args.out)
    summary = {
        "regions": len(truth),
        "positive": sum(t["planted_date"] is not None for t in truth.values()),
        "manifest": str(Path(args.out) / "manifest.jsonl"),
    }
    _emit(summary)
    return summary


def cmd_pipeline(args, cfg: PipelineConfig) -> dict:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ns = argparse.Namespace
    filtered = out / "filtered.jsonl"
    report = out / "report.jsonl"
    strat = out / "strat.jsonl"
    splits = out / "splits.jsonl"
    steps = {}
    steps["filter"] = cmd_filter(ns(manifest=args.manifest, out=filtered, summary=out / "filter_summary.json"), cfg)
    steps["select"] = cmd_select(ns(
        manifest=filtered, masks=args.masks, out=report,
        dump_detections=args.dump_detections, figures=args.figures,
    ), cfg)
    steps["stratify"] = cmd_stratify(ns(inp=report, out=strat), cfg)
    steps["split"] = cmd_split(ns(inp=strat, out=splits), cfg)
    steps["stats"] = cmd_stats(ns(inp=splits, out=out / "stats.json", figures=args.figures), cfg)
    return steps


COMMANDS = {
    "filter": cmd_filter,
    "select": cmd_select,
    "stratify": cmd_stratify,
    "split": cmd_split,
    "stats": cmd_stats,
    "synth": cmd_synth,
    "pipeline": cmd_pipeline,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    _setup_logging(args.verbose)
    try:
        cfg = load_config(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"mango-curate: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args, cfg)
    except (CurationError, OSError, ValueError) as exc:
        log.error("%s: %s", args.command, exc)
        print(f"mango-curate {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
