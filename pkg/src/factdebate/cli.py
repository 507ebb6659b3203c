"""Command-line surface: ingest, check, batch, eval, bootstrap.

Exit codes: 0 success, 2 usage/config error, 3 runtime backend failure.
Credentials are read from the environment only, never from config files, so
config fingerprints embedded in transcripts stay shareable.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

from . import agents, corpus, debate, evaluation
from .agents import AdvocateConfig, MediatorConfig
from .backend import Backend, BackendError, RemoteBackend, ScriptedBackend
from .corpus import CorpusError, CorpusIndex, ingest_corpus
from .evaluation import EvaluationError, load_claims, save_claims
from .taxonomy import Taxonomy, TaxonomyError, default_taxonomy, load_taxonomy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


class ConfigError(ValueError):
    pass


class RunConfig:
    """Validated run configuration; nothing touches the network or disk here."""

    def __init__(self, doc: dict, base_dir: Path):
        try:
            self.roster = [AdvocateConfig(**entry) for entry in doc["roster"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid roster: {exc}") from exc
        if not self.roster:
            raise ConfigError("roster must be non-empty")
        names = [a.name for a in self.roster]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate advocate names: {names}")

        med = doc.get("mediator", {})
        self.max_rounds = int(med.get("max_rounds", 3))
        self.mediator_variant: Optional[str] = med.get("variant")
        if self.mediator_variant not in (None, "authoritative", "neutral"):
            raise ConfigError(f"unknown mediator variant: {self.mediator_variant!r}")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")

        backend_doc = doc.get("backend", {})
        self.backend_kind = backend_doc.get("kind", "scripted")
        if self.backend_kind == "scripted":
            rules = backend_doc.get("rules_path")
            self.rules_path = (base_dir / rules) if rules else None
            if self.rules_path and not self.rules_path.exists():
                raise ConfigError(f"scripted rules file not found: {self.rules_path}")
            self.model_id = ""
        elif self.backend_kind == "remote":
            self.rules_path = None
            self.model_id = backend_doc.get("model_id", "")
        else:
            raise ConfigError(f"unknown backend kind: {self.backend_kind!r}")

        tax = doc.get("taxonomy_path")
        self.taxonomy_path = (base_dir / tax) if tax else None
        if self.taxonomy_path and not self.taxonomy_path.exists():
            raise ConfigError(f"taxonomy file not found: {self.taxonomy_path}")

        self.corpora: dict[str, Path] = {}
        for corpus_id, index_path in (doc.get("corpora") or {}).items():
            path = base_dir / index_path
            if not path.exists():
                raise ConfigError(f"corpus index not found: {path}")
            self.corpora[corpus_id] = path
        for adv in self.roster:
            if adv.corpus_id and adv.corpus_id not in self.corpora:
                raise ConfigError(
                    f"advocate {adv.name!r} references unknown corpus {adv.corpus_id!r}"
                )

        self.subclaims = bool(doc.get("subclaims", False))
        self.out_dir = base_dir / doc.get("out_dir", "runs")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(doc, path.parent)

    # Resource loading is deferred until after full validation.

    def mediator(self) -> Optional[MediatorConfig]:
        if self.mediator_variant is None:
            resolved = debate.resolve_mediator(self.roster, None)
            return MediatorConfig(variant=resolved.variant, max_rounds=self.max_rounds)
        return MediatorConfig(variant=self.mediator_variant, max_rounds=self.max_rounds)

    def load_backend(self) -> Backend:
        if self.backend_kind == "scripted":
            if self.rules_path is None:
                raise ConfigError("scripted backend needs a rules_path")
            return ScriptedBackend.from_json(self.rules_path)
        return RemoteBackend(model_id=self.model_id or None)

    def load_taxonomy(self) -> Taxonomy:
        if self.taxonomy_path:
            return load_taxonomy(self.taxonomy_path)
        return default_taxonomy()

    def load_registry(self) -> dict[str, CorpusIndex]:
        return {cid: CorpusIndex.load(path) for cid, path in self.corpora.items()}


def _claim_id_for(claim_text: str) -> str:
    return "claim-" + hashlib.sha1(claim_text.encode()).hexdigest()[:12]


def _fail(message: str, code: int) -> int:
    print(message, file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args: argparse.Namespace) -> int:
    try:
        if not 0 <= args.overlap < args.window:
            raise CorpusError(
                f"need 0 <= overlap < window, got overlap={args.overlap} window={args.window}"
            )
        index = ingest_corpus(args.manifest, window=args.window, overlap=args.overlap)
    except (CorpusError, OSError, json.JSONDecodeError, KeyError) as exc:
        return _fail(f"ingest error: {exc}", EXIT_CONFIG)
    index.save(args.out)
    print(f"indexed {len(index.documents)} documents, {len(index.chunks)} chunks -> {args.out}")
    return EXIT_OK


def _last_paragraph(text: str) -> str:
    paragraphs = [p.strip() for p in text.split("\n\n") if p.strip()]
    return paragraphs[-1] if paragraphs else ""


def cmd_check(args: argparse.Namespace) -> int:
    try:
        cfg = RunConfig.from_file(args.config)
        taxonomy = cfg.load_taxonomy()
    except (ConfigError, TaxonomyError) as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)
    backend = cfg.load_backend()
    registry = cfg.load_registry()
    templates = agents.load_templates()
    mediator = cfg.mediator()
    if args.max_rounds:
        mediator = MediatorConfig(variant=mediator.variant, max_rounds=args.max_rounds)

    transcript = debate.run_debate(
        _claim_id_for(args.claim), args.claim, cfg.roster, mediator, backend, registry,
        taxonomy, templates, jobs=args.jobs, subclaims=args.subclaims or cfg.subclaims,
    )
    out_dir = Path(args.out) if args.out else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{transcript.claim_id}.json").write_text(transcript.to_json())

    if transcript.status == "in_progress":
        print(f"backend failure: {transcript.error}", file=sys.stderr)
        print(f"partial transcript written to {out_dir / (transcript.claim_id + '.json')}",
              file=sys.stderr)
        return EXIT_BACKEND

    print(f"Final verdict: {transcript.final_verdict}")
    print(f"Status: {transcript.status} (rounds: {len(transcript.rounds)})")
    last_round = transcript.rounds[-1]
    med = last_round.get("mediator")
    summary = _last_paragraph(med["summary"]) if med and med.get("summary") else \
        "Verdict reached by forced consolidation of the advocates' final positions."
    print(f"\nSummary:\n{summary}\n")
    print(f"{'Advocate':<16} {'Verdict':<20} {'Evidence':<10} {'Agreement':<10}")
    for resp in last_round["responses"]:
        print(f"{resp['advocate_name']:<16} {resp['verdict']:<20} "
              f"{resp['evidence_level']:<10} {resp['agreement_level']:<10}")
    return EXIT_OK


def cmd_batch(args: argparse.Namespace) -> int:
    try:
        cfg = RunConfig.from_file(args.config)
        taxonomy = cfg.load_taxonomy()
        records = load_claims(args.claims, taxonomy)
    except (ConfigError, TaxonomyError, EvaluationError, OSError) as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)
    backend = cfg.load_backend()
    registry = cfg.load_registry()
    templates = agents.load_templates()
    mediator = cfg.mediator()
    if args.max_rounds:
        mediator = MediatorConfig(variant=mediator.variant, max_rounds=args.max_rounds)

    claims = [
        (r.claim_id, (agents.CONTEXT_PREFIX + r.text) if r.needs_context_prefix else r.text)
        for r in records
    ]
    out_dir = Path(args.out) if args.out else cfg.out_dir
    _, summary = debate.run_batch(
        claims, cfg.roster, mediator, backend, registry, out_dir,
        taxonomy, templates, jobs=args.jobs, subclaims=args.subclaims or cfg.subclaims,
    )
    print(_format_summary(summary))
    return EXIT_OK


def _format_summary(summary: dict) -> str:
    n_rounds = summary["n_rounds"]
    cols = [f"round_{r}" for r in range(1, n_rounds + 1)]
    lines = [f"claims: {summary['n_claims']} (completed: {summary['n_completed']})"]
    header = f"{'Verdict':<20}" + "".join(f"{c:>10}" for c in cols)
    lines.append(header)
    lines.append("-" * len(header))
    for row, counts in summary["counts"].items():
        lines.append(f"{row:<20}" + "".join(f"{counts.get(c, 0):>10}" for c in cols))
    if summary["failures"]:
        lines.append(f"failed claims: {', '.join(summary['failures'])}")
    return "\n".join(lines)


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else default_taxonomy()
        records = load_claims(args.claims, taxonomy)
    except (TaxonomyError, EvaluationError, OSError) as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)

    transcripts = []
    for path in sorted(Path(args.transcripts).glob("*.json")):
        if path.name == "summary.json":
            continue
        transcripts.append(json.loads(path.read_text()))
    try:
        preds = evaluation.predictions_from_transcripts(transcripts)
    except EvaluationError as exc:
        return _fail(str(exc), EXIT_CONFIG)

    golds = {r.claim_id: r.gold_fine_verdict for r in records if r.gold_fine_verdict}
    missing = sorted(cid for cid in preds if cid not in golds)
    if missing:
        return _fail(f"transcripts missing golds: {', '.join(missing)}", EXIT_CONFIG)

    levels = args.level or ["seven", "five", "binary"]
    if args.include_nei and not args.exclude_nei:
        modes: tuple[bool, ...] = (True,)
    elif args.exclude_nei and not args.include_nei:
        modes = (False,)
    else:
        modes = (False, True)
    try:
        rows = evaluation.report(preds, golds, taxonomy, levels=levels, nei_modes=modes)
    except EvaluationError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    print(evaluation.format_report(rows))
    payload = json.dumps([r.as_dict() for r in rows], sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n")
    else:
        print(payload)
    return EXIT_OK


def cmd_bootstrap(args: argparse.Namespace) -> int:
    try:
        cfg = RunConfig.from_file(args.config)
        taxonomy = cfg.load_taxonomy()
        records = load_claims(args.claims, taxonomy)
        if not records:
            raise EvaluationError("no claim records to bootstrap")
        for record in records:
            if not record.explanation:
                raise EvaluationError(
                    f"claim {record.claim_id!r} has no explanation to bootstrap from"
                )
    except (ConfigError, TaxonomyError, EvaluationError, OSError) as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)
    backend = cfg.load_backend()
    try:
        evaluation.bootstrap_labels(records, backend, taxonomy)
    except BackendError as exc:
        return _fail(f"backend failure: {exc}", EXIT_BACKEND)
    out_path = Path(args.out) if args.out else Path(args.claims).with_suffix(".labeled.jsonl")
    save_claims(records, out_path)
    flagged = [r.claim_id for r in records if r.bootstrap_failed]
    print(f"labeled {len(records) - len(flagged)} of {len(records)} claims -> {out_path}")
    if flagged:
        print(f"flagged (unparseable): {', '.join(flagged)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factdebate",
                                     description="Claim verification by mediated debate")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="chunk and index a corpus manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="index file to write")
    p.add_argument("--window", type=int, default=corpus.DEFAULT_WINDOW)
    p.add_argument("--overlap", type=int, default=corpus.DEFAULT_OVERLAP)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("check", help="fact-check a single claim")
    p.add_argument("claim")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="transcript output directory")
    p.add_argument("--subclaims", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-rounds", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("batch", help="fact-check a claims file")
    p.add_argument("claims")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="transcript output directory")
    p.add_argument("--subclaims", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-rounds", type=int, default=0)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("eval", help="score transcripts against gold labels")
    p.add_argument("transcripts", help="directory of transcript JSON files")
    p.add_argument("claims", help="claims JSONL with gold labels")
    p.add_argument("--level", action="append",
                   choices=["fine", "seven", "five", "binary"])
    p.add_argument("--include-nei", action="store_true")
    p.add_argument("--exclude-nei", action="store_true")
    p.add_argument("--taxonomy")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bootstrap", help="derive gold labels from explanations")
    p.add_argument("claims")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="labeled claims file to write")
    p.set_defaults(func=cmd_bootstrap)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        return _fail(f"backend failure: {exc}", EXIT_BACKEND)


if __name__ == "__main__":
    sys.exit(main())
