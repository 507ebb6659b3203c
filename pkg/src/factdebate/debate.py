"""Round-based debate state machine with transcript persistence.

One debate = repeated rounds of advocate assessments followed by one
mediation, until the mediator issues a final verdict or the round cap forces
a consolidation.  Transcripts record every prompt and raw response, so a
scripted backend rebuilt from a transcript replays to the same verdict.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import agents
from .agents import (
    AdvocateConfig,
    AdvocateResponse,
    MediatorConfig,
    MediatorOutcome,
    MediatorUnparseable,
)
from .backend import Backend, BackendError, ScriptedBackend, ScriptRule
from .corpus import CorpusIndex
from .taxonomy import NEI, Taxonomy, VerdictLabel, default_taxonomy

FOLLOW_UP_ROW = "follow_up"


@dataclass
class DebateTranscript:
    claim_id: str
    claim: str
    config_fingerprint: str
    rounds: list[dict] = field(default_factory=list)
    final_verdict: Optional[str] = None
    status: str = "in_progress"  # in_progress | final | forced
    subclaims: Optional[list[str]] = None
    subclaim_debates: Optional[list[dict]] = None
    error: Optional[str] = None

    def as_dict(self) -> dict:
        out = {
            "claim_id": self.claim_id,
            "claim": self.claim,
            "config_fingerprint": self.config_fingerprint,
            "rounds": self.rounds,
            "final_verdict": self.final_verdict,
            "status": self.status,
        }
        if self.subclaims is not None:
            out["subclaims"] = self.subclaims
            out["subclaim_debates"] = self.subclaim_debates
        if self.error is not None:
            out["error"] = self.error
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"


def config_fingerprint(roster: list[AdvocateConfig], mediator: MediatorConfig,
                       backend: Backend, taxonomy: Taxonomy) -> str:
    payload = {
        "roster": [
            {"name": a.name, "persona": a.persona, "corpus_id": a.corpus_id,
             "retrieval_k": a.retrieval_k}
            for a in sorted(roster, key=lambda a: a.name)
        ],
        "mediator": {"variant": mediator.variant, "max_rounds": mediator.max_rounds},
        "backend": backend.describe(),
        "taxonomy": taxonomy.version_fingerprint(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def resolve_mediator(roster: list[AdvocateConfig],
                     mediator: Optional[MediatorConfig]) -> MediatorConfig:
    """Default mediator: neutral whenever a contrarian advocate is on the roster."""
    if mediator is not None:
        return mediator
    if any(a.persona == "denier_rag" for a in roster):
        return MediatorConfig(variant="neutral")
    return MediatorConfig(variant="authoritative")


def forced_consolidation(latest_responses: list[AdvocateResponse],
                         taxonomy: Taxonomy) -> VerdictLabel:
    """Round-cap tie-break: binary strict majority; tie or all-abstain -> nei."""
    if not latest_responses:
        raise ValueError("forced_consolidation requires at least one response")
    counts = {"correct": 0, "incorrect": 0}
    for resp in latest_responses:
        if resp.verdict.token == NEI:
            continue
        counts[taxonomy.polarity(resp.verdict)] += 1
    if counts["correct"] > counts["incorrect"]:
        return taxonomy.label("correct")
    if counts["incorrect"] > counts["correct"]:
        return taxonomy.label("incorrect")
    return taxonomy.label(NEI)


def _assess_round(roster: list[AdvocateConfig], claim: str, registry: dict[str, CorpusIndex],
                  backend: Backend, taxonomy: Taxonomy, templates: dict[str, str],
                  jobs: int) -> list[AdvocateResponse]:
    if jobs > 1 and len(roster) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(agents.assess_claim, a, claim, registry, backend,
                            taxonomy, templates)
                for a in roster
            ]
            responses = [f.result() for f in futures]
    else:
        responses = [
            agents.assess_claim(a, claim, registry, backend, taxonomy, templates)
            for a in roster
        ]
    return sorted(responses, key=lambda r: r.advocate_name)


def _followup_round(roster: list[AdvocateConfig], claim: str, questions: dict[str, str],
                    rounds_so_far: list[tuple[list[AdvocateResponse], Optional[MediatorOutcome]]],
                    registry: dict[str, CorpusIndex], backend: Backend, taxonomy: Taxonomy,
                    templates: dict[str, str], jobs: int) -> list[AdvocateResponse]:
    def one(advocate: AdvocateConfig) -> AdvocateResponse:
        return agents.answer_followup(
            advocate, claim, questions.get(advocate.name, ""), rounds_so_far,
            registry, backend, taxonomy, templates,
        )

    if jobs > 1 and len(roster) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            responses = [f.result() for f in [pool.submit(one, a) for a in roster]]
    else:
        responses = [one(a) for a in roster]
    return sorted(responses, key=lambda r: r.advocate_name)


def run_debate(claim_id: str, claim: str, roster: list[AdvocateConfig],
               mediator: Optional[MediatorConfig], backend: Backend,
               registry: dict[str, CorpusIndex],
               taxonomy: Optional[Taxonomy] = None,
               templates: Optional[dict[str, str]] = None,
               jobs: int = 1, subclaims: bool = False) -> DebateTranscript:
    """Run one claim's debate to completion (or record the failure point)."""
    if not roster:
        raise ValueError("roster must be non-empty")
    names = [a.name for a in roster]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate advocate names in roster: {names}")
    taxonomy = taxonomy or default_taxonomy()
    templates = templates or agents.load_templates()
    mediator = resolve_mediator(roster, mediator)
    fingerprint = config_fingerprint(roster, mediator, backend, taxonomy)

    if subclaims:
        return _run_subclaim_debate(claim_id, claim, roster, mediator, backend, registry,
                                    taxonomy, templates, jobs, fingerprint)

    transcript = DebateTranscript(claim_id=claim_id, claim=claim,
                                  config_fingerprint=fingerprint)
    history: list[tuple[list[AdvocateResponse], Optional[MediatorOutcome]]] = []
    try:
        responses = _assess_round(roster, claim, registry, backend, taxonomy,
                                  templates, jobs)
        for round_no in range(1, mediator.max_rounds + 1):
            try:
                outcome = agents.mediate(mediator, claim, responses, round_no, backend,
                                         taxonomy, templates, prior_rounds=history)
            except MediatorUnparseable:
                verdict = forced_consolidation(responses, taxonomy)
                transcript.rounds.append(_round_record(responses, None))
                transcript.final_verdict = verdict.token
                transcript.status = "forced"
                return transcript

            transcript.rounds.append(_round_record(responses, outcome))
            history.append((responses, outcome))

            if outcome.kind == "final":
                transcript.final_verdict = outcome.verdict.token
                transcript.status = "final"
                return transcript
            if round_no == mediator.max_rounds:
                verdict = forced_consolidation(responses, taxonomy)
                transcript.final_verdict = verdict.token
                transcript.status = "forced"
                return transcript
            responses = _followup_round(roster, claim, outcome.questions, history,
                                        registry, backend, taxonomy, templates, jobs)
    except BackendError as exc:
        transcript.error = f"{type(exc).__name__}: {exc}"
        transcript.status = "in_progress"
    return transcript


def _round_record(responses: list[AdvocateResponse],
                  outcome: Optional[MediatorOutcome]) -> dict:
    return {
        "responses": [r.as_dict() for r in responses],
        "mediator": outcome.as_dict() if outcome else None,
    }


def _run_subclaim_debate(claim_id, claim, roster, mediator, backend, registry,
                         taxonomy, templates, jobs, fingerprint) -> DebateTranscript:
    subclaims = agents.decompose_claim(backend, claim)
    transcript = DebateTranscript(claim_id=claim_id, claim=claim,
                                  config_fingerprint=fingerprint,
                                  subclaims=subclaims, subclaim_debates=[])
    sub_transcripts = []
    for i, sub in enumerate(subclaims, start=1):
        sub_t = run_debate(f"{claim_id}.{i}", sub, roster, mediator, backend, registry,
                           taxonomy, templates, jobs=jobs, subclaims=False)
        sub_transcripts.append(sub_t)
        transcript.subclaim_debates.append(sub_t.as_dict())
        if sub_t.status == "in_progress":
            transcript.error = sub_t.error
            return transcript

    if len(sub_transcripts) == 1:
        only = sub_transcripts[0]
        transcript.rounds = only.rounds
        transcript.final_verdict = only.final_verdict
        transcript.status = only.status
        return transcript

    # one extra mediation over the subclaim verdicts
    synthetic = []
    for i, (sub, sub_t) in enumerate(zip(subclaims, sub_transcripts), start=1):
        verdict = taxonomy.label(sub_t.final_verdict)
        synthetic.append(AdvocateResponse(
            advocate_name=f"subclaim_{i}",
            verdict=verdict,
            evidence_level="unstated",
            agreement_level="unstated",
            citations=(),
            rationale=f"Subclaim: {sub}\nDebate verdict: {verdict.bracketed()}",
        ))
    try:
        outcome = agents.mediate(mediator, claim, synthetic, 1, backend, taxonomy, templates)
        if outcome.kind == "final":
            transcript.rounds.append(_round_record(synthetic, outcome))
            transcript.final_verdict = outcome.verdict.token
            transcript.status = "final"
            return transcript
    except MediatorUnparseable:
        pass
    except BackendError as exc:
        transcript.error = f"{type(exc).__name__}: {exc}"
        return transcript
    verdict = forced_consolidation(synthetic, taxonomy)
    transcript.rounds.append(_round_record(synthetic, None))
    transcript.final_verdict = verdict.token
    transcript.status = "forced"
    return transcript


# ---------------------------------------------------------------------------
# Batch runs


def summarize(transcripts: list[DebateTranscript | dict]) -> dict:
    """Verdict-by-round frequency table.

    Column "round_r" snapshots each claim at the end of round r: its final
    verdict once decided, otherwise the mediator's provisional verdict (when
    one was stated alongside the follow-up marker) or the follow-up row.
    Verdicts decided in earlier rounds carry forward to later columns.
    """
    dicts = [t.as_dict() if isinstance(t, DebateTranscript) else t for t in transcripts]
    completed = [t for t in dicts if t["status"] in ("final", "forced")]
    failures = sorted(t["claim_id"] for t in dicts if t["status"] == "in_progress")
    n_rounds = max((len(t["rounds"]) for t in completed), default=0)

    counts: dict[str, dict[str, int]] = {}

    def bump(row: str, col: str) -> None:
        counts.setdefault(row, {})[col] = counts.setdefault(row, {}).get(col, 0) + 1

    for t in completed:
        ended_at = len(t["rounds"])
        for r in range(1, n_rounds + 1):
            col = f"round_{r}"
            if r >= ended_at:
                bump(t["final_verdict"], col)
            else:
                outcome = t["rounds"][r - 1]["mediator"]
                provisional = outcome.get("provisional") if outcome else None
                bump(provisional or FOLLOW_UP_ROW, col)

    # make every row x column cell explicit
    for row in counts:
        for r in range(1, n_rounds + 1):
            counts[row].setdefault(f"round_{r}", 0)
    return {
        "n_claims": len(dicts),
        "n_completed": len(completed),
        "n_rounds": n_rounds,
        "counts": {row: dict(sorted(cols.items())) for row, cols in sorted(counts.items())},
        "failures": failures,
    }


def run_batch(claims: list[tuple[str, str]], roster: list[AdvocateConfig],
              mediator: Optional[MediatorConfig], backend: Backend,
              registry: dict[str, CorpusIndex], out_dir: str | Path,
              taxonomy: Optional[Taxonomy] = None,
              templates: Optional[dict[str, str]] = None,
              jobs: int = 1, subclaims: bool = False) -> tuple[list[DebateTranscript | dict], dict]:
    """Debate each claim, persisting one transcript file per claim.

    Completed transcripts already in out_dir are skipped (idempotent resume);
    per-claim failures are recorded and the batch continues.
    """
    taxonomy = taxonomy or default_taxonomy()
    templates = templates or agents.load_templates()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(item: tuple[str, str]):
        claim_id, text = item
        path = out / f"{claim_id}.json"
        if path.exists():
            existing = json.loads(path.read_text())
            if existing.get("status") in ("final", "forced"):
                return existing
        transcript = run_debate(claim_id, text, roster, mediator, backend, registry,
                                taxonomy, templates, subclaims=subclaims)
        path.write_text(transcript.to_json())
        return transcript

    if jobs > 1 and len(claims) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, claims))
    else:
        results = [one(c) for c in claims]

    summary = summarize(results)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return results, summary


# ---------------------------------------------------------------------------
# Replay


def replay_backend(transcript: DebateTranscript | dict) -> ScriptedBackend:
    """Rebuild a scripted backend whose rules reproduce a recorded debate."""
    t = transcript.as_dict() if isinstance(transcript, DebateTranscript) else transcript
    rules = []

    def add_rounds(rounds: list[dict]) -> None:
        for rnd in rounds:
            for resp in rnd["responses"]:
                rules.append(ScriptRule(role_id=resp["advocate_name"],
                                        match_substring=resp["prompt"],
                                        response=resp["rationale"]))
            med = rnd.get("mediator")
            if med:
                rules.append(ScriptRule(role_id="mediator",
                                        match_substring=med["prompt"],
                                        response=med["raw_text"]))

    for sub in t.get("subclaim_debates") or []:
        add_rounds(sub["rounds"])
    add_rounds(t["rounds"])
    return ScriptedBackend(rules=rules)
