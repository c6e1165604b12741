"""Command-line entry point: ``cogworkspace <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .harness import (
    CorpusError,
    ExperimentConfig,
    load_corpus,
    load_report,
    run_experiment,
    write_outputs,
)
from .provider import ProviderError
from .retrieval import expected_chunk_count
from .scenarios import SCENARIOS
from .workspace import SnapshotError

log = logging.getLogger("cogworkspace")


def _config(args: argparse.Namespace, scenario: str) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_file(args.config)
        cfg.scenario = scenario or cfg.scenario
    else:
        cfg = ExperimentConfig(scenario=scenario)
    ExperimentConfig.__post_init__(cfg)
    if args.provider is not None:
        cfg.provider = dict(cfg.provider, kind=args.provider)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.corpus is not None:
        cfg.corpus_path = args.corpus
    return cfg


def _summary(report: dict) -> str:
    st = report["stats"]
    lines = [
        f"scenario     {report['scenario']}  (seed {report['seed']}, provider {report['provider']})",
        f"corpus       {report['documents']} documents, {report['chunks']} chunks",
        f"avg reuse    CW {report['avg_reuse']:.2%}   RAG {report['rag_avg_reuse']:.2%}",
        f"op ratio     {report['op_ratio']:.3f}",
        f"net eff.     {report['eta']:.2%}",
        f"t-test       t({st['degrees_freedom']}) = {st['t_value']:.2f}, p = {st['p_value']:.3g}, d = {st['cohens_d']:.2f}",
        f"saved ops    {report['saved_ops']}   break-even round {report['breakeven']}",
        "",
        "round  cw_reuse  cw_ops  rag_ops  query",
    ]
    cw_total = rag_total = 0
    for cw, rag in zip(report["cw_rounds"], report["rag_rounds"]):
        cw_total += cw["ops_this_round"]
        rag_total += rag["ops_this_round"]
        lines.append(f"{cw['round_index']:>5}  {cw['cumulative_reuse_rate']:>8.2%}  {cw_total:>6}  {rag_total:>7}  {cw['query']}")
    if not report.get("complete", True):
        lines.append(f"INCOMPLETE: {report.get('error')}")
    return "\n".join(lines)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args, args.scenario)
    cfg.output_dir = args.out or cfg.output_dir or str(Path("results") / cfg.scenario)
    report = run_experiment(cfg)
    print(_summary(report.to_dict()))
    print(f"\nwrote {cfg.output_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.json"
    data = load_report(path)
    print(json.dumps(data, indent=2) if args.json else _summary(data))
    return 0


def cmd_snapshot(args: argparse.Namespace) -> int:
    cfg = _config(args, args.scenario)
    if not 1 <= args.rounds <= cfg.rounds:
        raise ValueError(f"--rounds must be between 1 and {cfg.rounds}")
    run_experiment(cfg, stop_after=args.rounds, snapshot_path=args.out)
    print(f"wrote snapshot after round {args.rounds} to {args.out}")
    return 0


def cmd_restore(args: argparse.Namespace) -> int:
    cfg = _config(args, args.scenario)
    blob = Path(args.snapshot).read_text(encoding="utf-8")
    report = run_experiment(cfg, resume_from=blob)
    out = args.out or str(Path("results") / cfg.scenario)
    write_outputs(report, out)
    print(_summary(report.to_dict()))
    print(f"\nwrote {out}")
    return 0


def cmd_corpus_info(args: argparse.Namespace) -> int:
    index = load_corpus(args.corpus or "builtin", conflict=args.conflict)
    print(f"{'document':<32} {'tokens':>6} {'chunks':>6}")
    for doc_id, text in index.documents_.items():
        n = len(text.split())
        print(f"{doc_id:<32} {n:>6} {expected_chunk_count(n, index.chunk_size, index.overlap):>6}")
    print(f"{index.n_documents} documents, {len(index)} chunks (size {index.chunk_size}, overlap {index.overlap})")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=("stub", "remote"), help="language-model provider (default: stub)")
    p.add_argument("--seed", type=int, help="seed recorded in the report (default: 0)")
    p.add_argument("--corpus", help='corpus directory or "builtin"')
    p.add_argument("--config", help="INI config file with [experiment] and [provider] sections")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cogworkspace", description="Run active-memory vs RAG experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run both arms over a scenario and write outputs")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--out", help="output directory (default: results/<scenario>)")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="pretty-print a stored report")
    p.add_argument("path", help="report.json or a run output directory")
    p.add_argument("--json", action="store_true", help="print the raw JSON")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("snapshot", help="run the first N rounds and save the workspace")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--rounds", type=int, required=True, help="rounds to run before snapshotting")
    p.add_argument("--out", required=True, help="snapshot file to write")
    _add_common(p)
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("restore", help="resume a snapshot and finish the scenario")
    p.add_argument("snapshot", help="snapshot file written by the snapshot command")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--out", help="output directory (default: results/<scenario>)")
    _add_common(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("corpus-info", help="list corpus documents and chunk counts")
    p.add_argument("--corpus", help='corpus directory or "builtin"')
    p.add_argument("--conflict", action="store_true", help="include the contradictory fixture documents")
    p.set_defaults(func=cmd_corpus_info)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CorpusError, ProviderError, SnapshotError, OSError, ValueError, KeyError) as exc:
        print(f"cogworkspace: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
