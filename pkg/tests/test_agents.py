import pytest

from factdebate.agents import (
    AdvocateConfig,
    MediatorConfig,
    MediatorUnparseable,
    NO_EVIDENCE_BLOCK,
    TemplateError,
    answer_followup,
    assess_claim,
    decompose_claim,
    load_templates,
    mediate,
    parse_citations,
    parse_levels,
    render,
)
from factdebate.backend import ScriptRule, ScriptedBackend

from conftest import make_index


def scripted(*rules, default=""):
    return ScriptedBackend(rules=list(rules), default_response=default)


class TestConfigs:
    def test_plain_model_forbids_corpus(self):
        with pytest.raises(ValueError):
            AdvocateConfig(name="G", persona="plain_model", corpus_id="c")

    def test_rag_requires_corpus(self):
        with pytest.raises(ValueError):
            AdvocateConfig(name="IPCC", persona="scientific_rag")

    def test_denier_requires_corpus(self):
        with pytest.raises(ValueError):
            AdvocateConfig(name="N", persona="denier_rag")

    def test_mediator_variants(self):
        assert MediatorConfig(variant="neutral").max_rounds == 3
        with pytest.raises(ValueError):
            MediatorConfig(variant="bossy")


class TestTemplates:
    def test_all_roles_load(self, templates):
        assert set(templates) == {"advocate", "plain_model", "arbitrator",
                                  "denier", "neutral_arbitrator"}

    def test_unknown_placeholder_rejected(self, tmp_path):
        for role in ("advocate", "plain_model", "arbitrator", "denier",
                     "neutral_arbitrator"):
            (tmp_path / f"{role}.txt").write_text("ok {CLAIM}")
        (tmp_path / "advocate.txt").write_text("bad {WHATEVER}")
        with pytest.raises(TemplateError, match="WHATEVER"):
            load_templates(tmp_path)

    def test_render_is_pure(self, templates):
        a = render(templates["advocate"], claim="c", evidence="e", history="h")
        b = render(templates["advocate"], claim="c", evidence="e", history="h")
        assert a == b


class TestParseLevels:
    def test_joint_grade(self):
        assert parse_levels("Level of evidence and agreement: High") == ("robust", "high")

    def test_separate_mentions(self):
        assert parse_levels("high evidence and high agreement") == ("robust", "high")

    def test_absent(self):
        assert parse_levels("text with neither phrase") == ("unstated", "unstated")

    def test_mixed_grades(self):
        text = "There is medium evidence but the agreement is low."
        assert parse_levels(text) == ("medium", "low")

    def test_last_mention_wins(self):
        text = ("Point one has low agreement. "
                "Overall, the level of evidence and agreement is high.")
        assert parse_levels(text) == ("robust", "high")

    def test_total_on_garbage(self):
        assert parse_levels("") == ("unstated", "unstated")


class TestParseCitations:
    def test_full_citation_line(self):
        text = ("Reference: Climate Update 2023, Page: 2, ORG: WMO, "
                "URL: http://example/wmo\nsome chunk text")
        (c,) = parse_citations(text)
        assert c.title == "Climate Update 2023"
        assert c.page == 2
        assert c.organization == "WMO"
        assert c.url == "http://example/wmo"

    def test_inline_parenthesized(self):
        text = "supported by the study (Reference: Decline of the carbon sink, Page: 1)."
        (c,) = parse_citations(text)
        assert c.title == "Decline of the carbon sink"
        assert c.page == 1

    def test_title_only(self):
        (c,) = parse_citations("Reference: Some Standalone Report")
        assert c.title == "Some Standalone Report"
        assert c.page == 0

    def test_no_citations(self):
        assert parse_citations("nothing to cite") == ()


class TestDecompose:
    def test_prefixed_lines(self):
        backend = scripted(default="SUBCLAIM: A\nSUBCLAIM: B")
        assert decompose_claim(backend, "A and B") == ["A", "B"]

    def test_fallback_to_original(self):
        backend = scripted(default="cannot split this")
        assert decompose_claim(backend, "whole claim") == ["whole claim"]

    def test_two_part_split(self):
        backend = scripted(default=(
            "SUBCLAIM: The forest is near a tipping point\n"
            "SUBCLAIM: Forty percent could convert within decades"
        ))
        parts = decompose_claim(backend, "tipping point and the 40% figure")
        assert len(parts) == 2


@pytest.fixture
def rag_setup(taxonomy, templates):
    index = make_index(
        ["rainfall decline over the basin region", "observed warming of the surface"],
        doc_id="w1", title="Climate Update", organization="WMO", url="http://w",
    )
    advocate = AdvocateConfig(name="WMO", persona="scientific_rag", corpus_id="wmo",
                              retrieval_k=2)
    return advocate, {"wmo": index}


class TestAssessClaim:
    def test_parses_verdict_and_levels(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(ScriptRule(
            role_id="WMO", match_substring="rainfall",
            response=("The claim is supported. Level of evidence and agreement: High. "
                      "The claim is [[mostly accurate]]."),
        ))
        resp = assess_claim(advocate, "rainfall decline", registry, backend,
                            taxonomy, templates)
        assert resp.verdict.token == "mostly_accurate"
        assert (resp.evidence_level, resp.agreement_level) == ("robust", "high")
        assert not resp.parse_failed

    def test_nei_verdict(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(default="Not enough information to decide. [[nei]]")
        resp = assess_claim(advocate, "rainfall decline", registry, backend,
                            taxonomy, templates)
        assert resp.verdict.token == "nei"
        assert not resp.parse_failed

    def test_unparseable_degrades_to_flagged_nei(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(default="rambling with no verdict at all")
        resp = assess_claim(advocate, "rainfall decline", registry, backend,
                            taxonomy, templates)
        assert resp.verdict.token == "nei"
        assert resp.parse_failed

    def test_follow_up_never_an_advocate_verdict(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(default="I would like to ask [[follow_up_question]]")
        resp = assess_claim(advocate, "rainfall decline", registry, backend,
                            taxonomy, templates)
        assert resp.verdict.token == "nei"
        assert resp.parse_failed

    def test_no_evidence_block_on_empty_retrieval(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(default="[[nei]]")
        resp = assess_claim(advocate, "zzz qqq xxx", registry, backend,
                            taxonomy, templates)
        assert NO_EVIDENCE_BLOCK in resp.prompt

    def test_plain_model_has_no_evidence_slot(self, taxonomy, templates):
        advocate = AdvocateConfig(name="G", persona="plain_model")
        backend = scripted(default="[[correct]]")
        resp = assess_claim(advocate, "anything", {}, backend, taxonomy, templates)
        assert NO_EVIDENCE_BLOCK not in resp.prompt
        assert "Reference:" not in resp.prompt


class TestAnswerFollowup:
    def test_scripted_flip(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(
            ScriptRule(role_id="WMO", match_substring="reconsider",
                       response="on reflection [[incorrect]]"),
            default="[[correct]]",
        )
        first = assess_claim(advocate, "rainfall decline", registry, backend,
                             taxonomy, templates)
        assert first.verdict.token == "correct"
        second = answer_followup(advocate, "rainfall decline",
                                 "please reconsider your sources",
                                 [([first], None)], registry, backend,
                                 taxonomy, templates)
        assert second.verdict.token == "incorrect"

    def test_scripted_hold(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        backend = scripted(default="[[correct]]")
        first = assess_claim(advocate, "rainfall decline", registry, backend,
                             taxonomy, templates)
        second = answer_followup(advocate, "rainfall decline", "",
                                 [([first], None)], registry, backend,
                                 taxonomy, templates)
        assert second.verdict.token == first.verdict.token

    def test_requires_prior_round(self, rag_setup, taxonomy, templates):
        advocate, registry = rag_setup
        with pytest.raises(ValueError):
            answer_followup(advocate, "claim", "q", [], registry,
                            scripted(default="x"), taxonomy, templates)


class TestMediate:
    def make_responses(self, taxonomy, templates, verdicts):
        backend = scripted(default="placeholder")
        responses = []
        for name, verdict in verdicts.items():
            advocate = AdvocateConfig(name=name, persona="plain_model")
            b = scripted(default=f"my view: [[{verdict}]]")
            responses.append(assess_claim(advocate, "the claim", {}, b,
                                          taxonomy, templates))
        return responses

    def test_unanimous_final(self, taxonomy, templates, mediator_cfg):
        responses = self.make_responses(taxonomy, templates,
                                        {"A": "mostly_accurate", "B": "mostly_accurate"})
        backend = scripted(default="All agree. Final verdict: [[mostly_accurate]]")
        outcome = mediate(mediator_cfg, "the claim", responses, 1, backend,
                          taxonomy, templates)
        assert outcome.kind == "final"
        assert outcome.verdict.token == "mostly_accurate"

    def test_follow_up_with_targeted_questions(self, taxonomy, templates, mediator_cfg):
        responses = self.make_responses(taxonomy, templates,
                                        {"A": "correct", "B": "incorrect"})
        backend = scripted(default=(
            "[[follow_up_question]]\n"
            "QUESTION(A): what is your strongest source?\n"
            "QUESTION(B): does your source cover the period?"
        ))
        outcome = mediate(mediator_cfg, "the claim", responses, 1, backend,
                          taxonomy, templates)
        assert outcome.kind == "follow_up"
        assert set(outcome.questions) == {"A", "B"}

    def test_garbage_reply_raises(self, taxonomy, templates, mediator_cfg):
        responses = self.make_responses(taxonomy, templates, {"A": "correct"})
        backend = scripted(default="???")
        with pytest.raises(MediatorUnparseable):
            mediate(mediator_cfg, "the claim", responses, 1, backend,
                    taxonomy, templates)

    def test_roster_order_normalized(self, taxonomy, templates, mediator_cfg):
        responses = self.make_responses(taxonomy, templates,
                                        {"Zed": "correct", "Abe": "correct"})
        backend = scripted(default="fine [[correct]]")
        out_fwd = mediate(mediator_cfg, "c", responses, 1, backend, taxonomy, templates)
        out_rev = mediate(mediator_cfg, "c", responses[::-1], 1, backend,
                          taxonomy, templates)
        assert out_fwd.prompt == out_rev.prompt

    def test_provisional_verdict_captured(self, taxonomy, templates, mediator_cfg):
        responses = self.make_responses(taxonomy, templates, {"A": "nei"})
        backend = scripted(default=(
            "Leaning [[nei]] for now. [[follow_up_question]]\n"
            "QUESTION(A): anything else?"
        ))
        outcome = mediate(mediator_cfg, "c", responses, 1, backend, taxonomy, templates)
        assert outcome.kind == "follow_up"
        assert outcome.provisional.token == "nei"
