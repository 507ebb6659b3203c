"""Verdict vocabulary, multi-level consolidation maps, and verdict parsing.

Verdicts travel through model output as double-bracketed tokens, e.g.
``[[mostly_accurate]]``.  Fine-grained labels consolidate to coarser levels
(seven / five / binary classes) through a refinement chain, so two labels
merged at an earlier level can never split apart at a later one.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

NEI = "nei"
FOLLOW_UP = "follow_up_question"

#: Consolidation levels, ordered fine -> coarse.
LEVELS = ("fine", "seven", "five", "binary")

#: Levels that must be present in a taxonomy config ("fine" is implicit).
_CONFIG_LEVELS = ("seven", "five", "binary")

_BRACKET_RE = re.compile(r"\[\[([^\[\]]+)\]\]")


class TaxonomyError(ValueError):
    """Invalid taxonomy configuration."""


class UnparseableVerdict(ValueError):
    """No bracketed verdict token found in the text."""


class UnknownLabel(ValueError):
    """A bracketed token was found but is not part of the taxonomy."""

    def __init__(self, token: str, context: str = ""):
        self.token = token
        msg = f"unknown verdict label: {token!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class NotAFinalVerdict(ValueError):
    """follow_up_question cannot be consolidated; it is never a final label."""


def canonicalize(token: str) -> str:
    """Normalize a verdict token: lowercase, spaces and escaped underscores -> ``_``."""
    t = token.strip().lower()
    t = t.replace("\\_", "_")
    t = re.sub(r"\s+", "_", t)
    t = re.sub(r"_+", "_", t)
    return t.strip("_")


@dataclass(frozen=True)
class VerdictLabel:
    token: str
    display: str

    def __post_init__(self):
        if not re.fullmatch(r"[a-z][a-z_]*", self.token):
            raise TaxonomyError(f"invalid label token: {self.token!r}")

    def bracketed(self) -> str:
        return f"[[{self.token}]]"


class Taxonomy:
    """Immutable verdict vocabulary plus its consolidation maps.

    Safe for shared concurrent reads once constructed.
    """

    def __init__(self, labels: Iterable[VerdictLabel], level_maps: dict[str, dict[str, str]]):
        self._labels: dict[str, VerdictLabel] = {}
        for lab in labels:
            if lab.token in self._labels:
                raise TaxonomyError(f"duplicate label: {lab.token!r}")
            self._labels[lab.token] = lab
        for reserved in (NEI, FOLLOW_UP):
            self._labels.setdefault(reserved, VerdictLabel(reserved, reserved.replace("_", " ")))

        self._maps = {lvl: dict(m) for lvl, m in level_maps.items()}
        self._validate()

    # -- construction helpers ------------------------------------------------

    @property
    def fine_labels(self) -> list[str]:
        """Substantive fine labels (excludes the reserved nei / follow-up tokens)."""
        return [t for t in self._labels if t not in (NEI, FOLLOW_UP)]

    def _validate(self) -> None:
        missing = [lvl for lvl in _CONFIG_LEVELS if lvl not in self._maps]
        if missing:
            raise TaxonomyError(f"missing levels: {missing}")
        fine = self.fine_labels
        for lvl in _CONFIG_LEVELS:
            mapping = self._maps[lvl]
            for tok in fine:
                if tok not in mapping:
                    raise TaxonomyError(f"label {tok!r} has no image at level {lvl!r}")
            for tok in mapping:
                if tok in (NEI, FOLLOW_UP):
                    raise TaxonomyError(f"reserved label {tok!r} cannot be remapped")
                if tok not in fine:
                    raise TaxonomyError(f"level {lvl!r} maps unknown label {tok!r}")
            # nei is preserved at every level
            mapping[NEI] = NEI

        binary_images = {self._maps["binary"][t] for t in fine}
        if binary_images != {"correct", "incorrect"}:
            raise TaxonomyError(
                f"binary level must use exactly {{correct, incorrect}}, got {sorted(binary_images)}"
            )

        # Monotonicity along the refinement chain: labels merged at an earlier
        # level must stay merged at every later level.
        chain = ["seven", "five", "binary"]
        for i, a in enumerate(chain):
            for b in chain[i + 1:]:
                groups: dict[str, str] = {}
                for tok in fine:
                    img_a, img_b = self._maps[a][tok], self._maps[b][tok]
                    if img_a in groups and groups[img_a] != img_b:
                        raise TaxonomyError(
                            f"monotonicity violation at {tok!r}: "
                            f"{a}-class {img_a!r} splits between {groups[img_a]!r} "
                            f"and {img_b!r} at level {b!r}"
                        )
                    groups[img_a] = img_b

    # -- queries ---------------------------------------------------------------

    def is_known(self, token: str) -> bool:
        return token in self._labels

    def label(self, token: str) -> VerdictLabel:
        try:
            return self._labels[token]
        except KeyError:
            raise UnknownLabel(token) from None

    def labels_at(self, level: str) -> list[str]:
        """All label tokens that can appear at the given level (incl. nei)."""
        if level == "fine":
            return self.fine_labels + [NEI]
        return sorted({self._maps[level][t] for t in self.fine_labels}) + [NEI]

    def consolidate(self, label: VerdictLabel | str, level: str) -> VerdictLabel:
        token = label.token if isinstance(label, VerdictLabel) else label
        if token == FOLLOW_UP:
            raise NotAFinalVerdict("follow_up_question is not a final verdict")
        if not self.is_known(token):
            raise UnknownLabel(token)
        if level not in LEVELS:
            raise TaxonomyError(f"unknown level: {level!r}")
        if level == "fine" or token == NEI:
            return self.label(token)
        coarse = self._maps[level][token]
        return self._labels.get(coarse, VerdictLabel(coarse, coarse.replace("_", " ")))

    def polarity(self, label: VerdictLabel | str) -> str:
        """Binary polarity of any label: 'correct', 'incorrect', or 'nei'."""
        return self.consolidate(label, "binary").token

    def parse_verdict(self, raw_text: str) -> VerdictLabel:
        """Extract the final verdict from free-form model output.

        Scans for ``[[token]]`` occurrences and returns the last one that is a
        known label (final assessments appear last).  Raises UnparseableVerdict
        if no bracketed token exists, UnknownLabel if none of them is known.
        """
        tokens = [canonicalize(m) for m in _BRACKET_RE.findall(raw_text)]
        if not tokens:
            raise UnparseableVerdict("no [[...]] verdict token found")
        known = [t for t in tokens if self.is_known(t)]
        if not known:
            raise UnknownLabel(tokens[-1], "not in taxonomy")
        return self.label(known[-1])

    def version_fingerprint(self) -> str:
        """Stable hash input describing this taxonomy (for config fingerprints)."""
        payload = {
            "labels": sorted(self._labels),
            "maps": {lvl: dict(sorted(self._maps[lvl].items())) for lvl in _CONFIG_LEVELS},
        }
        return json.dumps(payload, sort_keys=True)


def load_taxonomy(source: str | Path | dict) -> Taxonomy:
    """Build a Taxonomy from a config document (path, JSON string, or dict).

    The document has two sections: ``labels`` (ordered list of
    ``{token, display}``) and ``levels`` (per-level lists of
    ``{token, maps_to}``).
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TaxonomyError(f"invalid taxonomy document: {exc}") from exc

    if not isinstance(doc.get("labels"), list) or not isinstance(doc.get("levels"), dict):
        raise TaxonomyError("taxonomy document needs 'labels' and 'levels' sections")

    labels = []
    for entry in doc["labels"]:
        token = canonicalize(entry["token"])
        labels.append(VerdictLabel(token, entry.get("display", token.replace("_", " "))))

    level_maps: dict[str, dict[str, str]] = {}
    for lvl, rows in doc["levels"].items():
        mapping: dict[str, str] = {}
        for row in rows:
            tok = canonicalize(row["token"])
            if tok in mapping:
                raise TaxonomyError(f"duplicate mapping for {tok!r} at level {lvl!r}")
            mapping[tok] = canonicalize(row["maps_to"])
        level_maps[lvl] = mapping

    return Taxonomy(labels, level_maps)


def default_taxonomy() -> Taxonomy:
    """The shipped default taxonomy config."""
    data = resources.files("factdebate.data").joinpath("taxonomy_default.json").read_text()
    return load_taxonomy(json.loads(data))
