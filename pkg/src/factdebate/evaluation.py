"""Claim datasets, gold-label bootstrapping, and classification metrics.

Metrics (precision, recall, macro-F1, accuracy, NEI ratio) are computed at a
chosen consolidation level, either including abstentions or dropping every
claim whose *prediction* is nei (which shrinks the denominator per model).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backend import Backend, BackendError, CompletionRequest
from .taxonomy import FOLLOW_UP, NEI, Taxonomy, UnknownLabel, UnparseableVerdict, canonicalize

SOURCES = ("climate_feedback", "skeptical_science", "nipcc", "other")


class EvaluationError(ValueError):
    pass


class MalformedRecord(EvaluationError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class UnknownGoldLabel(EvaluationError):
    def __init__(self, line: int, token: str):
        self.line = line
        self.token = token
        super().__init__(f"line {line}: unknown gold label {token!r}")


class MissingGold(EvaluationError):
    def __init__(self, claim_id: str):
        self.claim_id = claim_id
        super().__init__(f"no gold label for claim {claim_id!r}")


class EmptyEvaluation(EvaluationError):
    pass


@dataclass
class ClaimRecord:
    claim_id: str
    text: str
    source: str = "other"
    source_url: Optional[str] = None
    gold_fine_verdict: Optional[str] = None
    explanation: Optional[str] = None
    needs_context_prefix: bool = False
    bootstrap_failed: bool = False

    def as_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "text": self.text,
            "source": self.source,
            "source_url": self.source_url,
            "gold_fine_verdict": self.gold_fine_verdict,
            "explanation": self.explanation,
            "needs_context_prefix": self.needs_context_prefix,
        }


def load_claims(path: str | Path, taxonomy: Taxonomy,
                source: Optional[str] = None) -> list[ClaimRecord]:
    """Read claim records from a JSON-lines file, validating gold labels."""
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(row, dict) or not row.get("claim_id") or not row.get("text"):
            raise MalformedRecord(lineno, "record needs non-empty 'claim_id' and 'text'")
        gold = row.get("gold_fine_verdict")
        if gold is not None:
            gold = canonicalize(gold)
            if gold == FOLLOW_UP or not taxonomy.is_known(gold):
                raise UnknownGoldLabel(lineno, gold)
            if gold != NEI and gold not in taxonomy.fine_labels:
                raise UnknownGoldLabel(lineno, gold)
        records.append(ClaimRecord(
            claim_id=str(row["claim_id"]),
            text=row["text"],
            source=source or row.get("source", "other"),
            source_url=row.get("source_url"),
            gold_fine_verdict=gold,
            explanation=row.get("explanation"),
            needs_context_prefix=bool(row.get("needs_context_prefix", False)),
        ))
    return records


def save_claims(records: list[ClaimRecord], path: str | Path) -> None:
    lines = [json.dumps(r.as_dict(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def bootstrap_labels(records: list[ClaimRecord], backend: Backend,
                     taxonomy: Taxonomy) -> list[ClaimRecord]:
    """Fill gold labels by judging each claim against its own explanation.

    Every record must carry an explanation.  Unparseable or failed replies
    leave the gold empty and flag the record; the batch continues.
    """
    for record in records:
        if not record.explanation:
            raise EvaluationError(f"claim {record.claim_id!r} has no explanation to bootstrap from")
    allowed = ", ".join(f"[[{t}]]" for t in taxonomy.fine_labels + [NEI])
    for record in records:
        request = CompletionRequest(
            role_id="bootstrap",
            system_prompt=(
                "You judge a claim strictly in relation to the explanation provided, "
                "without using any further information."
            ),
            user_prompt=(
                f"Claim:\n{record.text}\n\nExplanation:\n{record.explanation}\n\n"
                f"Judge the claim only against this explanation, without using any "
                f"further information. End with exactly one verdict from: {allowed}"
            ),
        )
        try:
            reply = backend.complete(request).text
            verdict = taxonomy.parse_verdict(reply)
            if verdict.token == FOLLOW_UP:
                raise UnparseableVerdict("follow_up_question is not a gold label")
            record.gold_fine_verdict = verdict.token
            record.bootstrap_failed = False
        except (UnparseableVerdict, UnknownLabel, BackendError):
            record.gold_fine_verdict = None
            record.bootstrap_failed = True
    return records


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class ConfusionMatrix:
    level: str
    include_nei: bool
    labels: list[str]
    counts: dict[str, dict[str, int]]
    n: int


@dataclass
class MetricsReport:
    level: str
    include_nei: bool
    precision: float
    recall: float
    macro_f1: float
    accuracy: float
    n_claims: int
    nei_ratio: float = 0.0
    empty_denominators: bool = False

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "include_nei": self.include_nei,
            "precision": round(self.precision, 2),
            "recall": round(self.recall, 2),
            "macro_f1": round(self.macro_f1, 2),
            "accuracy": round(self.accuracy, 2),
            "n_claims": self.n_claims,
            "nei_ratio": round(self.nei_ratio, 2),
            "empty_denominators": self.empty_denominators,
        }


def confusion(preds: dict[str, str], golds: dict[str, str], taxonomy: Taxonomy,
              level: str, include_nei: bool = True) -> ConfusionMatrix:
    """Consolidate both sides to `level` and count gold x prediction pairs.

    With include_nei=False, claims whose prediction is nei are dropped
    entirely, shrinking the denominator.
    """
    counts: dict[str, dict[str, int]] = {}
    labels: set[str] = set()
    n = 0
    for claim_id in sorted(preds):
        if claim_id not in golds:
            raise MissingGold(claim_id)
        pred = taxonomy.consolidate(preds[claim_id], level).token
        gold = taxonomy.consolidate(golds[claim_id], level).token
        if not include_nei and pred == NEI:
            continue
        counts.setdefault(gold, {})[pred] = counts.setdefault(gold, {}).get(pred, 0) + 1
        labels.update((gold, pred))
        n += 1
    return ConfusionMatrix(level=level, include_nei=include_nei,
                           labels=sorted(labels), counts=counts, n=n)


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Macro-averaged precision/recall/F1 plus accuracy, as percentages.

    Per-class ratios substitute 0 on empty denominators (flagged); the macro
    average runs over the union of classes present in gold or prediction.
    """
    if matrix.n == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    classes = matrix.labels
    empty_denominator = False
    precisions, recalls, f1s = [], [], []
    trace = 0
    for c in classes:
        tp = matrix.counts.get(c, {}).get(c, 0)
        fp = sum(matrix.counts.get(g, {}).get(c, 0) for g in classes if g != c)
        fn = sum(matrix.counts.get(c, {}).get(p, 0) for p in classes if p != c)
        trace += tp
        if tp + fp == 0:
            p = 0.0
            empty_denominator = True
        else:
            p = tp / (tp + fp)
        if tp + fn == 0:
            r = 0.0
            empty_denominator = True
        else:
            r = tp / (tp + fn)
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)
    k = len(classes)
    return MetricsReport(
        level=matrix.level,
        include_nei=matrix.include_nei,
        precision=100.0 * sum(precisions) / k,
        recall=100.0 * sum(recalls) / k,
        macro_f1=100.0 * sum(f1s) / k,
        accuracy=100.0 * trace / matrix.n,
        n_claims=matrix.n,
        empty_denominators=empty_denominator,
    )


def nei_ratio(preds: dict[str, str]) -> float:
    """Percentage of nei predictions, to 2 decimals."""
    if not preds:
        raise EmptyEvaluation("no predictions")
    n_nei = sum(1 for v in preds.values() if v == NEI)
    return round(100.0 * n_nei / len(preds), 2)


# ---------------------------------------------------------------------------
# Reporting


def predictions_from_transcripts(transcripts: list[dict]) -> dict[str, str]:
    preds = {}
    for t in transcripts:
        if t.get("final_verdict"):
            preds[t["claim_id"]] = t["final_verdict"]
    if not preds:
        raise EmptyEvaluation("no transcripts with final verdicts")
    return preds


def report(preds: dict[str, str], golds: dict[str, str], taxonomy: Taxonomy,
           levels: list[str] = ("seven", "five", "binary"),
           nei_modes: tuple[bool, ...] = (False, True)) -> list[MetricsReport]:
    """One MetricsReport per (level, nei_mode)."""
    ratio = nei_ratio(preds)
    rows = []
    for level in levels:
        for include_nei in nei_modes:
            matrix = confusion(preds, golds, taxonomy, level, include_nei=include_nei)
            row = metrics(matrix)
            row.nei_ratio = ratio
            rows.append(row)
    return rows


def format_report(rows: list[MetricsReport]) -> str:
    """Fixed-width text table over the report rows."""
    header = (
        f"{'Level':<8} {'NEI':<8} {'Prec.':>8} {'Rec.':>8} {'F1':>8} "
        f"{'Acc.':>8} {'# Claims':>9} {'NEI %':>8}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        mode = "incl" if row.include_nei else "excl"
        lines.append(
            f"{row.level:<8} {mode:<8} {row.precision:>8.2f} {row.recall:>8.2f} "
            f"{row.macro_f1:>8.2f} {row.accuracy:>8.2f} {row.n_claims:>9d} "
            f"{row.nei_ratio:>8.2f}"
        )
    return "\n".join(lines)
