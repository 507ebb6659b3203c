import json
from pathlib import Path

import pytest

from factdebate.agents import AdvocateConfig, MediatorConfig, load_templates
from factdebate.backend import ScriptedBackend, ScriptRule
from factdebate.corpus import Chunk, CorpusIndex, Document
from factdebate.taxonomy import default_taxonomy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture
def toy_index():
    docs = {
        "d1": Document(doc_id="d1", title="Forests", organization="ORG1", url="http://x/1"),
        "d2": Document(doc_id="d2", title="Oceans", organization="ORG2", url="http://x/2"),
    }
    chunks = [
        Chunk(doc_id="d1", page=1, ordinal=0, text="amazon forest", token_count=2),
        Chunk(doc_id="d1", page=2, ordinal=0, text="forest fire", token_count=2),
        Chunk(doc_id="d2", page=1, ordinal=0, text="ocean heat", token_count=2),
    ]
    return CorpusIndex(docs, chunks)


def make_index(texts, doc_id="doc", title="Doc", organization="ORG", url=""):
    """Index where each text becomes one single-chunk page."""
    docs = {doc_id: Document(doc_id=doc_id, title=title, organization=organization,
                             url=url, page_count=len(texts))}
    chunks = [
        Chunk(doc_id=doc_id, page=i + 1, ordinal=0, text=t, token_count=len(t.split()))
        for i, t in enumerate(texts)
    ]
    return CorpusIndex(docs, chunks)


# ---------------------------------------------------------------------------
# Scripted-debate scenario builder
#
# Each claim scenario describes, per round, the advocates' verdict tokens and
# the mediator's move.  A unique tag embedded in the claim text keys the
# scripted rules; later-round rules are emitted first so they shadow the
# round-1 rules that would otherwise also match.

def plain_roster(n=2):
    return [AdvocateConfig(name=f"A{i}", persona="plain_model") for i in range(1, n + 1)]


class Scenario:
    """rounds: list of ({advocate: verdict_token}, mediator_move)

    mediator_move is ("final", verdict_token) or
    ("follow_up", target_advocate, provisional_token_or_None).
    A debate that is still follow_up at max_rounds ends forced.
    """

    def __init__(self, tag, rounds):
        self.tag = tag
        self.rounds = rounds
        self.claim_text = f"Synthetic claim {tag} for scripted debate."

    def rules(self):
        out = []
        for r in range(len(self.rounds), 0, -1):
            verdicts, move = self.rounds[r - 1]
            answer_marker = f"ANSWER{r} {self.tag}"
            if r == 1:
                for name, verdict in verdicts.items():
                    out.append(ScriptRule(
                        role_id=name, match_substring=self.tag,
                        response=f"{answer_marker} by {name}: verdict [[{verdict}]]",
                    ))
                med_key = self.tag
            else:
                probe = f"probe-r{r} {self.tag}"
                for name, verdict in verdicts.items():
                    out.append(ScriptRule(
                        role_id=name, match_substring=probe,
                        response=f"{answer_marker} by {name}: verdict [[{verdict}]]",
                    ))
                med_key = answer_marker

            if move[0] == "final":
                med_reply = f"Settled {self.tag}.\n\nFinal verdict: [[{move[1]}]]"
            else:
                _, target, provisional = move
                lead = f"Unresolved {self.tag}."
                if provisional:
                    lead += f" Leaning [[{provisional}]]."
                med_reply = (
                    f"{lead} [[follow_up_question]]\n"
                    f"QUESTION({target}): probe-r{r + 1} {self.tag}"
                )
            out.append(ScriptRule(role_id="mediator", match_substring=med_key,
                                  response=med_reply))
        return out


def scripted_backend_for(scenarios):
    rules = []
    for s in scenarios:
        rules.extend(s.rules())
    return ScriptedBackend(rules=rules, default_response="no rule matched")


def unanimous_scenario(tag, verdict="incorrect", n_advocates=2):
    return Scenario(tag, [({f"A{i}": verdict for i in range(1, n_advocates + 1)},
                           ("final", verdict))])


@pytest.fixture
def mediator_cfg():
    return MediatorConfig(variant="authoritative", max_rounds=3)


def write_jsonl(path, rows):
    Path(path).write_text("\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n")
