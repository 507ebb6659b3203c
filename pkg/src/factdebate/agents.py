"""Role-specific prompting and response parsing for advocates and mediators.

Advocates come in three flavors: retrieval-grounded (scientific or contrarian
corpus) and a plain model arguing from in-house knowledge.  The mediator
synthesizes their responses into a final verdict or targeted follow-up
questions.  All prompt rendering is a pure function of its inputs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .backend import Backend, CompletionRequest
from .corpus import CorpusIndex, EmptyQuery, format_evidence
from .taxonomy import (
    FOLLOW_UP,
    NEI,
    Taxonomy,
    UnknownLabel,
    UnparseableVerdict,
    VerdictLabel,
    canonicalize,
)

PERSONAS = ("scientific_rag", "plain_model", "denier_rag")
TEMPLATE_ROLES = ("advocate", "plain_model", "arbitrator", "denier", "neutral_arbitrator")
_PERSONA_TEMPLATE = {
    "scientific_rag": "advocate",
    "plain_model": "plain_model",
    "denier_rag": "denier",
}
_PLACEHOLDERS = ("CLAIM", "EVIDENCE", "HISTORY", "ROSTER")

EVIDENCE_LEVELS = ("limited", "medium", "robust", "unstated")
AGREEMENT_LEVELS = ("low", "medium", "high", "unstated")

NO_EVIDENCE_BLOCK = "NO EVIDENCE FOUND"

#: Prepended to claims flagged as needing domain context.
CONTEXT_PREFIX = "This claim is made in a climate-change context: "

_QUESTION_RE = re.compile(r"^QUESTION\(([^)]+)\):\s*(.*)$", re.MULTILINE)
_BRACKET_RE = re.compile(r"\[\[([^\[\]]+)\]\]")
_PLACEHOLDER_RE = re.compile(r"\{([A-Z_]+)\}")


class TemplateError(ValueError):
    pass


class MediatorUnparseable(RuntimeError):
    """Mediator reply carries neither a final verdict nor a follow-up marker."""


# ---------------------------------------------------------------------------
# Configuration types


@dataclass(frozen=True)
class AdvocateConfig:
    name: str
    persona: str
    corpus_id: Optional[str] = None
    retrieval_k: int = 8

    def __post_init__(self):
        if self.persona not in PERSONAS:
            raise ValueError(f"unknown persona: {self.persona!r}")
        if self.persona == "plain_model" and self.corpus_id:
            raise ValueError(f"advocate {self.name!r}: plain_model forbids a corpus")
        if self.persona != "plain_model" and not self.corpus_id:
            raise ValueError(f"advocate {self.name!r}: persona {self.persona!r} requires a corpus")
        if self.retrieval_k < 1:
            raise ValueError(f"advocate {self.name!r}: retrieval_k must be >= 1")


@dataclass(frozen=True)
class MediatorConfig:
    variant: str = "authoritative"
    max_rounds: int = 3

    def __post_init__(self):
        if self.variant not in ("authoritative", "neutral"):
            raise ValueError(f"unknown mediator variant: {self.variant!r}")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass(frozen=True)
class Citation:
    title: str
    page: int = 0
    url: str = ""
    organization: str = ""


@dataclass(frozen=True)
class AdvocateResponse:
    advocate_name: str
    verdict: VerdictLabel
    evidence_level: str
    agreement_level: str
    citations: tuple[Citation, ...]
    rationale: str
    prompt: str = ""
    parse_failed: bool = False

    def as_dict(self) -> dict:
        return {
            "advocate_name": self.advocate_name,
            "verdict": self.verdict.token,
            "evidence_level": self.evidence_level,
            "agreement_level": self.agreement_level,
            "citations": [vars(c) for c in self.citations],
            "rationale": self.rationale,
            "prompt": self.prompt,
            "parse_failed": self.parse_failed,
        }


@dataclass(frozen=True)
class MediatorOutcome:
    kind: str  # "final" | "follow_up"
    verdict: Optional[VerdictLabel] = None
    summary: str = ""
    questions: dict[str, str] = field(default_factory=dict)
    provisional: Optional[VerdictLabel] = None
    raw_text: str = ""
    prompt: str = ""

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict.token if self.verdict else None,
            "summary": self.summary,
            "questions": dict(sorted(self.questions.items())),
            "provisional": self.provisional.token if self.provisional else None,
            "raw_text": self.raw_text,
            "prompt": self.prompt,
        }


# ---------------------------------------------------------------------------
# Templates


def load_templates(directory: str | Path | None = None) -> dict[str, str]:
    """Load the five role templates, validating their placeholder slots."""
    templates: dict[str, str] = {}
    for role in TEMPLATE_ROLES:
        if directory is None:
            text = resources.files("factdebate.data.prompts").joinpath(f"{role}.txt").read_text()
        else:
            text = (Path(directory) / f"{role}.txt").read_text()
        unknown = set(_PLACEHOLDER_RE.findall(text)) - set(_PLACEHOLDERS)
        if unknown:
            raise TemplateError(f"template {role!r} has unresolved placeholders: {sorted(unknown)}")
        templates[role] = text
    return templates


def render(template: str, *, claim: str = "", evidence: str = "", history: str = "",
           roster: str = "") -> str:
    values = {"CLAIM": claim, "EVIDENCE": evidence, "HISTORY": history, "ROSTER": roster}
    out = template
    for slot, value in values.items():
        out = out.replace("{" + slot + "}", value)
    return out


# ---------------------------------------------------------------------------
# Structured-field parsers

_SCALE_WORDS = ("limited", "low", "medium", "moderate", "robust", "high")
_TO_EVIDENCE = {"limited": "limited", "low": "limited", "medium": "medium",
                "moderate": "medium", "robust": "robust", "high": "robust"}
_TO_AGREEMENT = {"limited": "low", "low": "low", "medium": "medium",
                 "moderate": "medium", "robust": "high", "high": "high"}

_JOINT_RE = re.compile(
    r"level\s+of\s+evidence\s+and\s+agreement\W+(?:is\s+)?(\w+)", re.IGNORECASE
)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?;])\s+|\n+")
_SCALE_RE = re.compile(r"\b(" + "|".join(_SCALE_WORDS) + r")\b", re.IGNORECASE)


def _nearest_scale_word(sentence: str, keyword: str) -> Optional[str]:
    kw = re.search(keyword, sentence, re.IGNORECASE)
    if not kw:
        return None
    best = None
    best_dist = None
    for m in _SCALE_RE.finditer(sentence):
        dist = min(abs(m.start() - kw.end()), abs(kw.start() - m.end()))
        if best_dist is None or dist < best_dist:
            best, best_dist = m.group(1).lower(), dist
    return best


def parse_levels(raw_text: str) -> tuple[str, str]:
    """Extract (evidence_level, agreement_level) from free-form text.

    A joint grade ("level of evidence and agreement: high") sets both; else
    the scale word nearest to each keyword within a sentence is used.  The
    last resolvable mention wins, mirroring the verdict convention.  Total
    function: absent dimensions come back as "unstated".
    """
    evidence, agreement = "unstated", "unstated"
    for sentence in _SENTENCE_SPLIT_RE.split(raw_text):
        joint = _JOINT_RE.search(sentence)
        if joint and joint.group(1).lower() in _TO_EVIDENCE:
            word = joint.group(1).lower()
            evidence, agreement = _TO_EVIDENCE[word], _TO_AGREEMENT[word]
            continue
        if re.search(r"evidence", sentence, re.IGNORECASE):
            word = _nearest_scale_word(sentence, r"evidence")
            if word:
                evidence = _TO_EVIDENCE[word]
        if re.search(r"agreement", sentence, re.IGNORECASE):
            word = _nearest_scale_word(sentence, r"agreement")
            if word:
                agreement = _TO_AGREEMENT[word]
    return evidence, agreement


_REF_FIELD_RE = re.compile(r",\s*(Page|ORG|URL):\s*")


def parse_citations(raw_text: str) -> tuple[Citation, ...]:
    """Extract citations from "Reference:" lines."""
    citations = []
    for m in re.finditer(r"Reference:\s*", raw_text):
        seg = raw_text[m.end():].split("\n", 1)[0]
        # trim a trailing close-paren/bracket from inline "(Reference: ...)" style
        seg = seg.rstrip().rstrip(").]")
        first_field = _REF_FIELD_RE.search(seg)
        title = (seg[:first_field.start()] if first_field else seg).strip().rstrip(",")
        if not title:
            continue
        page_m = re.search(r",\s*Page:\s*(\d+)", seg)
        org_m = re.search(r",\s*ORG:\s*([^,\n]+?)(?=,\s*(?:Page|ORG|URL):|$)", seg)
        url_m = re.search(r",\s*URL:\s*(\S+)", seg)
        citations.append(Citation(
            title=title,
            page=int(page_m.group(1)) if page_m else 0,
            organization=org_m.group(1).strip() if org_m else "",
            url=url_m.group(1).rstrip(").,") if url_m else "",
        ))
    return tuple(citations)


# ---------------------------------------------------------------------------
# History rendering (shared by advocate follow-ups and the mediator)


def format_responses(responses: list[AdvocateResponse]) -> str:
    parts = []
    for resp in sorted(responses, key=lambda r: r.advocate_name):
        parts.append(f"--- Assessment by {resp.advocate_name} ---\n{resp.rationale}")
    return "\n\n".join(parts)


def format_history(rounds: list[tuple[list[AdvocateResponse], Optional[MediatorOutcome]]]) -> str:
    parts = []
    for i, (responses, outcome) in enumerate(rounds, start=1):
        parts.append(f"=== Round {i} ===")
        parts.append(format_responses(responses))
        if outcome is not None:
            parts.append(f"--- Mediator ---\n{outcome.raw_text}")
    return "\n\n".join(parts)


# ---------------------------------------------------------------------------
# Operations


def decompose_claim(backend: Backend, claim_text: str) -> list[str]:
    """Split a claim into atomic assertions, one per SUBCLAIM: line."""
    if not claim_text.strip():
        raise ValueError("claim must be non-empty")
    request = CompletionRequest(
        role_id="decomposer",
        system_prompt=(
            "You split factual claims into their atomic constituent assertions. "
            "Output one line per assertion, each prefixed with 'SUBCLAIM: '."
        ),
        user_prompt=f"Split this claim into atomic assertions:\n{claim_text}",
    )
    reply = backend.complete(request).text
    subclaims = [
        line.split("SUBCLAIM:", 1)[1].strip()
        for line in reply.splitlines()
        if line.strip().startswith("SUBCLAIM:")
    ]
    subclaims = [s for s in subclaims if s]
    return subclaims or [claim_text]


def _parse_advocate_reply(advocate: AdvocateConfig, taxonomy: Taxonomy, prompt: str,
                          reply: str) -> AdvocateResponse:
    parse_failed = False
    try:
        verdict = taxonomy.parse_verdict(reply)
    except (UnparseableVerdict, UnknownLabel):
        verdict, parse_failed = taxonomy.label(NEI), True
    if verdict.token == FOLLOW_UP:
        # only the mediator may emit follow_up_question
        verdict, parse_failed = taxonomy.label(NEI), True
    evidence_level, agreement_level = parse_levels(reply)
    return AdvocateResponse(
        advocate_name=advocate.name,
        verdict=verdict,
        evidence_level=evidence_level,
        agreement_level=agreement_level,
        citations=parse_citations(reply),
        rationale=reply,
        prompt=prompt,
        parse_failed=parse_failed,
    )


def _evidence_block(advocate: AdvocateConfig, claim: str,
                    index_registry: dict[str, CorpusIndex]) -> str:
    if advocate.persona == "plain_model":
        return ""
    index = index_registry[advocate.corpus_id]
    try:
        hits = index.retrieve(claim, advocate.retrieval_k)
    except EmptyQuery:
        hits = []
    return format_evidence(hits) if hits else NO_EVIDENCE_BLOCK


def assess_claim(advocate: AdvocateConfig, claim: str,
                 index_registry: dict[str, CorpusIndex], backend: Backend,
                 taxonomy: Taxonomy, templates: dict[str, str]) -> AdvocateResponse:
    """First-round assessment of a claim by one advocate."""
    template = templates[_PERSONA_TEMPLATE[advocate.persona]]
    prompt = render(
        template,
        claim=claim,
        evidence=_evidence_block(advocate, claim, index_registry),
        history="",
    )
    request = CompletionRequest(
        role_id=advocate.name,
        system_prompt=f"You are the {advocate.name} advocate in a fact-checking debate.",
        user_prompt=prompt,
    )
    reply = backend.complete(request).text
    return _parse_advocate_reply(advocate, taxonomy, prompt, reply)


def answer_followup(advocate: AdvocateConfig, claim: str, question: str,
                    rounds_so_far: list[tuple[list[AdvocateResponse], Optional[MediatorOutcome]]],
                    index_registry: dict[str, CorpusIndex], backend: Backend,
                    taxonomy: Taxonomy, templates: dict[str, str]) -> AdvocateResponse:
    """Reconsidered assessment after seeing the full debate and a mediator question."""
    if not rounds_so_far:
        raise ValueError("answer_followup requires at least one prior round")
    history = format_history(rounds_so_far)
    if question:
        history += f"\n\nMediator question addressed to you ({advocate.name}):\n{question}"
    else:
        history += (
            "\n\nThe mediator asked other advocates follow-up questions. Review the "
            "debate above and either reaffirm or revise your verdict."
        )
    template = templates[_PERSONA_TEMPLATE[advocate.persona]]
    prompt = render(
        template,
        claim=claim,
        evidence=_evidence_block(advocate, claim, index_registry),
        history=history,
    )
    request = CompletionRequest(
        role_id=advocate.name,
        system_prompt=f"You are the {advocate.name} advocate in a fact-checking debate.",
        user_prompt=prompt,
    )
    reply = backend.complete(request).text
    return _parse_advocate_reply(advocate, taxonomy, prompt, reply)


def mediate(mediator: MediatorConfig, claim: str, responses: list[AdvocateResponse],
            round_no: int, backend: Backend, taxonomy: Taxonomy,
            templates: dict[str, str],
            prior_rounds: list[tuple[list[AdvocateResponse], Optional[MediatorOutcome]]] | None = None,
            ) -> MediatorOutcome:
    """Synthesize advocate responses into a final verdict or follow-up questions."""
    if not responses:
        raise ValueError("mediate requires at least one advocate response")
    ordered = sorted(responses, key=lambda r: r.advocate_name)
    history_parts = []
    if prior_rounds:
        history_parts.append(format_history(prior_rounds))
    history_parts.append(f"=== Round {round_no} ===\n\n{format_responses(ordered)}")
    roster = "\n".join(f"- {r.advocate_name}" for r in ordered)
    role = "arbitrator" if mediator.variant == "authoritative" else "neutral_arbitrator"
    prompt = render(templates[role], claim=claim, history="\n\n".join(history_parts),
                    roster=roster)
    request = CompletionRequest(
        role_id="mediator",
        system_prompt="You are the mediator of a fact-checking debate.",
        user_prompt=prompt,
    )
    reply = backend.complete(request).text

    tokens = [canonicalize(t) for t in _BRACKET_RE.findall(reply)]
    known = [t for t in tokens if taxonomy.is_known(t)]
    if FOLLOW_UP in known:
        questions = {name.strip(): q.strip() for name, q in _QUESTION_RE.findall(reply)}
        others = [t for t in known if t != FOLLOW_UP]
        provisional = taxonomy.label(others[-1]) if others else None
        return MediatorOutcome(kind="follow_up", questions=questions,
                               provisional=provisional, raw_text=reply, prompt=prompt)
    if not known:
        raise MediatorUnparseable(
            f"mediator reply in round {round_no} has neither a verdict nor a follow-up marker"
        )
    return MediatorOutcome(kind="final", verdict=taxonomy.label(known[-1]),
                           summary=reply, raw_text=reply, prompt=prompt)
