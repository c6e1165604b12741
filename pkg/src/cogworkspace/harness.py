"""Run both arms over a scenario script and write reports.

Output layout under ``output_dir``::

    report.json          aggregates + per-round results for both arms
    oplog.ndjson         every event, CW arm first, then RAG
    tables/*.csv         per-round, systems and comparison tables
    fig_data/*.csv       one file per results-figure panel
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from .oplog import Arm, OpEvent, OpLog, read_ndjson, to_ndjson
from .provider import Provider, ProviderError, make_provider
from .rag import rag_answer
from .retrieval import CorpusIndex, cosine, terms
from .scenarios import ROUNDS, SCENARIOS, SCRIPTS
from .stats import (
    GrowthFit,
    StatReport,
    cumulative_ops,
    growth_fit,
    net_efficiency,
    op_count,
    reuse_rate,
    saved_and_breakeven,
    two_sample_stats,
)
from .workspace import CognitiveWorkspace

logger = logging.getLogger(__name__)

CORPUS_SUFFIXES = {".txt", ".md"}


class CorpusError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "basic_4"
    corpus_path: str = "builtin"
    provider: dict[str, Any] = field(default_factory=lambda: {"kind": "stub"})
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")

    @property
    def rounds(self) -> int:
        return ROUNDS[self.scenario]

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        """Read an INI file with ``[experiment]`` and optional ``[provider]`` sections."""
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        exp = parser["experiment"] if parser.has_section("experiment") else {}
        provider: dict[str, Any] = {"kind": "stub"}
        if parser.has_section("provider"):
            sec = parser["provider"]
            provider = {"kind": sec.get("kind", "stub")}
            for key in ("endpoint", "model", "api_key_env"):
                if key in sec:
                    provider[key] = sec[key]
            for key in ("timeout", "backoff"):
                if key in sec:
                    provider[key] = sec.getfloat(key)
            if "max_retries" in sec:
                provider["max_retries"] = sec.getint("max_retries")
        return cls(
            scenario=exp.get("scenario", "basic_4"),
            corpus_path=exp.get("corpus", "builtin"),
            provider=provider,
            seed=int(exp.get("seed", 0)),
            output_dir=exp.get("output_dir"),
        )


def _read_dir(files: Sequence[Path]) -> dict[str, str]:
    docs = {}
    for path in files:
        try:
            docs[path.name] = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    return docs


def _builtin(folder: str) -> dict[str, str]:
    root = resources.files("cogworkspace") / "data" / folder
    return {p.name: p.read_text(encoding="utf-8") for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".md")}


def load_documents(path: str | Path = "builtin", conflict: bool = False) -> dict[str, str]:
    """Documents keyed by file name; ``conflict`` adds the two contradictory fixtures."""
    if str(path) == "builtin":
        docs = _builtin("corpus")
    else:
        root = Path(path)
        if not root.is_dir():
            raise CorpusError(f"corpus directory {root} does not exist")
        files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in CORPUS_SUFFIXES)
        if not files:
            raise CorpusError(f"corpus directory {root} has no .txt or .md files")
        docs = _read_dir(files)
    if conflict:
        docs.update(_builtin("conflict"))
    return docs


def load_corpus(path: str | Path = "builtin", conflict: bool = False) -> CorpusIndex:
    docs = load_documents(path, conflict)
    index = CorpusIndex().fit(docs)
    logger.info("indexed %d documents into %d chunks", index.n_documents, len(index))
    return index


def corpus_topics(index: CorpusIndex) -> list[str]:
    """Lowercased topic phrases taken from markdown headings, split on "and"."""
    topics: list[str] = []
    for text in index.documents_.values():
        for line in text.splitlines():
            if line.startswith("#"):
                for part in line.lstrip("#").lower().split(" and "):
                    phrase = " ".join(terms(part))
                    if phrase and phrase not in topics:
                        topics.append(phrase)
    return topics


def key_entity(answer: str, index: CorpusIndex, exclude: set[str]) -> str:
    """Corpus topic closest to the answer body, skipping ones already asked.

    ``exclude`` holds earlier queries normalised with ``terms``. Topics
    come from document headings and are ranked by how often their terms
    occur in the body, then by cosine similarity to it. Without headings
    the most repeated unseen content term is used.
    """
    body = answer.split(". ", 1)[1] if ". " in answer else answer
    counts = Counter(t for t in terms(body) if len(t) >= 4 and t not in ENGLISH_STOP_WORDS)
    topics = [t for t in corpus_topics(index) if not any(t in asked for asked in exclude)]
    if topics:
        vec = index.embed(body)
        return max(topics, key=lambda t: (sum(counts[w] for w in t.split()), cosine(index.embed(t), vec)))
    seen = {t for asked in exclude for t in asked.split()}
    pool = {t: c for t, c in counts.items() if t not in seen and index.document_frequency(t) > 0}
    if not pool:
        return "learning"
    return min(pool, key=lambda t: (-pool[t], index.document_frequency(t), t))


def _plural(phrase: str) -> bool:
    last = phrase.split()[-1] if phrase else ""
    return last.endswith("s") and not last.endswith(("ss", "sis"))


def next_query(scenario: str, round_index: int, history: Sequence[tuple[str, str, int]], index: CorpusIndex) -> str:
    """Scripted query for a round; multi-hop templates name the previous answer's key entity."""
    template = SCRIPTS[scenario][round_index - 1]
    if "{entity}" not in template:
        return template
    asked = {" ".join(terms(q)) for q, _, _ in history}
    previous = history[-1][1] if history else ""
    entity = key_entity(previous, index, asked)
    plural = _plural(entity)
    return template.format(entity=entity, is_="are" if plural else "is", does="do" if plural else "does")


@dataclass
class ExperimentReport:
    scenario: str
    seed: int
    provider: str
    rounds: int
    documents: int
    chunks: int
    cw_rounds: list[dict[str, Any]]
    rag_rounds: list[dict[str, Any]]
    avg_reuse: float
    rag_avg_reuse: float
    op_ratio: float
    eta: float
    stats: StatReport
    growth_cw: GrowthFit
    growth_rag: GrowthFit
    saved_ops: int
    breakeven: int | None
    working_memory_sizes: list[int]
    complete: bool = True
    error: str | None = None
    events: list[OpEvent] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "provider": self.provider,
            "rounds": self.rounds,
            "documents": self.documents,
            "chunks": self.chunks,
            "complete": self.complete,
            "error": self.error,
            "avg_reuse": self.avg_reuse,
            "rag_avg_reuse": self.rag_avg_reuse,
            "op_ratio": self.op_ratio,
            "eta": self.eta,
            "stats": self.stats.to_dict(),
            "growth": {"cw": self.growth_cw.to_dict(), "rag": self.growth_rag.to_dict()},
            "saved_ops": self.saved_ops,
            "breakeven": self.breakeven,
            "working_memory_sizes": self.working_memory_sizes,
            "cw_rounds": self.cw_rounds,
            "rag_rounds": self.rag_rounds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def build_report(
    config: ExperimentConfig,
    events: Sequence[OpEvent],
    cw_rounds: list[dict[str, Any]],
    rag_rounds: list[dict[str, Any]],
    index: CorpusIndex,
    provider_kind: str,
    complete: bool = True,
    error: str | None = None,
) -> ExperimentReport:
    """Every aggregate here is a function of ``events`` alone."""
    n = len(cw_rounds)
    cw_rates = [reuse_rate(events, Arm.CW, r) for r in range(1, n + 1)]
    rag_rates = [reuse_rate(events, Arm.RAG, r) for r in range(1, n + 1)]
    avg_reuse = sum(cw_rates) / n if n else 0.0
    rag_avg = sum(rag_rates) / n if n else 0.0
    rag_ops = op_count(events, Arm.RAG)
    op_ratio = op_count(events, Arm.CW) / rag_ops if rag_ops else 0.0
    eta = net_efficiency(avg_reuse, op_ratio) if op_ratio >= 1 else 0.0
    stats = two_sample_stats(cw_rates, rag_rates) if n >= 2 else StatReport(0.0, 0, 1.0, 0.0, avg_reuse, rag_avg, n, n)
    if n >= 3:
        g_cw = growth_fit(cumulative_ops(events, Arm.CW, n))
        g_rag = growth_fit(cumulative_ops(events, Arm.RAG, n))
    else:
        g_cw = g_rag = GrowthFit(float("nan"), float("nan"), float("nan"), float("nan"))
    saved, breakeven = saved_and_breakeven(events)
    return ExperimentReport(
        scenario=config.scenario,
        seed=config.seed,
        provider=provider_kind,
        rounds=n,
        documents=index.n_documents,
        chunks=len(index),
        cw_rounds=cw_rounds,
        rag_rounds=rag_rounds,
        avg_reuse=avg_reuse,
        rag_avg_reuse=rag_avg,
        op_ratio=op_ratio,
        eta=eta,
        stats=stats,
        growth_cw=g_cw,
        growth_rag=g_rag,
        saved_ops=saved,
        breakeven=breakeven,
        working_memory_sizes=[r["working_memory_items"] for r in cw_rounds],
        complete=complete,
        error=error,
        events=list(events),
    )


def run_experiment(
    config: ExperimentConfig,
    provider: Provider | None = None,
    resume_from: str | None = None,
    stop_after: int | None = None,
    snapshot_path: str | Path | None = None,
) -> ExperimentReport:
    """Run (or resume) both arms over the scenario and write outputs if configured."""
    index = load_corpus(config.corpus_path, conflict=config.scenario == "conflict")
    if provider is None:
        provider = make_provider(seed=config.seed, **config.provider)

    if resume_from is not None:
        engine = CognitiveWorkspace.restore(resume_from, index, provider)
    else:
        engine = CognitiveWorkspace(index=index, provider=provider).fit()

    rag_log = OpLog(Arm.RAG)
    rag_rounds: list[dict[str, Any]] = []
    last = config.rounds if stop_after is None else min(stop_after, config.rounds)
    error = None
    try:
        for r in range(1, last + 1):
            if r > engine.round_:
                engine.process_round(next_query(config.scenario, r, engine.history_, index))
            query = engine.results_[r - 1].query
            rag_log.round = r
            res = rag_answer(query, provider, index, log=rag_log)
            rag_rounds.append(
                {
                    "round_index": r,
                    "query": query,
                    "ops_this_round": res.ops_emitted,
                    "cumulative_reuse_rate": reuse_rate(rag_log, Arm.RAG, r),
                    "answer": res.answer,
                }
            )
    except ProviderError as exc:
        error = str(exc)
        logger.error("provider failure: %s", exc)

    if snapshot_path is not None:
        Path(snapshot_path).write_text(engine.snapshot(), encoding="utf-8")

    events = list(engine.log_) + list(rag_log)
    report = build_report(
        config,
        events,
        [res.to_dict() for res in engine.results_[: len(rag_rounds)]],
        rag_rounds,
        index,
        getattr(provider, "kind", "custom"),
        complete=error is None and len(rag_rounds) == config.rounds,
        error=error,
    )
    if config.output_dir:
        write_outputs(report, config.output_dir)
    if error is not None:
        raise ProviderError(error)
    return report


def _csv(rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


def tables(report: ExperimentReport) -> dict[str, str]:
    n = report.rounds
    cw_cum = cumulative_ops(report.events, Arm.CW, n)
    rag_cum = cumulative_ops(report.events, Arm.RAG, n)
    per_round = [["round", "cw_reuse_rate", "rag_reuse_rate", "cw_operations", "rag_operations"]]
    for r in range(1, n + 1):
        per_round.append(
            [r, _fmt(report.cw_rounds[r - 1]["cumulative_reuse_rate"]), _fmt(report.rag_rounds[r - 1]["cumulative_reuse_rate"]), cw_cum[r - 1], rag_cum[r - 1]]
        )
    per_round.append(["average", _fmt(report.avg_reuse), _fmt(report.rag_avg_reuse), cw_cum[-1] if n else 0, rag_cum[-1] if n else 0])

    systems = [
        ["system", "memory_type", "planning", "state_persistence", "reuse_rate"],
        ["RAG", "external", "passive", "none", _fmt(report.rag_avg_reuse)],
        ["Cognitive Workspace", "active", "deliberate", "persistent", _fmt(report.avg_reuse)],
    ]

    s = report.stats
    comparison = [
        ["metric", "rag", "cognitive_workspace", "improvement"],
        ["memory_reuse_rate", _fmt(report.rag_avg_reuse), _fmt(report.avg_reuse), _fmt(report.avg_reuse - report.rag_avg_reuse)],
        ["operation_growth_linear_slope", _fmt(report.growth_rag.linear_slope), _fmt(report.growth_cw.linear_slope), ""],
        ["operation_ratio", "1.0", _fmt(report.op_ratio), ""],
        ["net_efficiency", "0.0", _fmt(report.eta), _fmt(report.eta)],
        ["p_value", "", _fmt(s.p_value), ""],
        ["cohens_d", "", _fmt(s.cohens_d), ""],
    ]
    return {
        "table1_rounds.csv": _csv(per_round),
        "table2_systems.csv": _csv(systems),
        "table3_comparison.csv": _csv(comparison),
    }


def emit_plot_data(reports: ExperimentReport | Sequence[ExperimentReport]) -> dict[str, str]:
    """CSV text for the four figure panels, keyed by file name.

    panel_a_reuse.csv         scenario, round, arm, reuse_rate
    panel_b_ops.csv           scenario, round, cw_cumulative_ops, rag_cumulative_ops
    panel_c_efficiency.csv    scenario, avg_reuse, op_ratio, eta
    panel_d_significance.csv  scenario, t_value, df, p_value, cohens_d
    """
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    a = [["scenario", "round", "arm", "reuse_rate"]]
    b = [["scenario", "round", "cw_cumulative_ops", "rag_cumulative_ops"]]
    c = [["scenario", "avg_reuse", "op_ratio", "eta"]]
    d = [["scenario", "t_value", "df", "p_value", "cohens_d"]]
    for rep in reports:
        cw_cum = cumulative_ops(rep.events, Arm.CW, rep.rounds)
        rag_cum = cumulative_ops(rep.events, Arm.RAG, rep.rounds)
        for r in range(1, rep.rounds + 1):
            a.append([rep.scenario, r, "CW", _fmt(rep.cw_rounds[r - 1]["cumulative_reuse_rate"])])
            a.append([rep.scenario, r, "RAG", _fmt(rep.rag_rounds[r - 1]["cumulative_reuse_rate"])])
            b.append([rep.scenario, r, cw_cum[r - 1], rag_cum[r - 1]])
        c.append([rep.scenario, _fmt(rep.avg_reuse), _fmt(rep.op_ratio), _fmt(rep.eta)])
        s = rep.stats
        d.append([rep.scenario, _fmt(s.t_value), s.degrees_freedom, _fmt(s.p_value), _fmt(s.cohens_d)])
    return {
        "panel_a_reuse.csv": _csv(a),
        "panel_b_ops.csv": _csv(b),
        "panel_c_efficiency.csv": _csv(c),
        "panel_d_significance.csv": _csv(d),
    }


def write_outputs(report: ExperimentReport, output_dir: str | Path) -> Path:
    out = Path(output_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "fig_data").mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "oplog.ndjson").write_text(to_ndjson(report.events), encoding="utf-8")
    for name, text in tables(report).items():
        (out / "tables" / name).write_text(text, encoding="utf-8")
    for name, text in emit_plot_data(report).items():
        (out / "fig_data" / name).write_text(text, encoding="utf-8")
    return out


def load_report(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_events(path: str | Path) -> list[OpEvent]:
    return read_ndjson(Path(path).read_text(encoding="utf-8"))
