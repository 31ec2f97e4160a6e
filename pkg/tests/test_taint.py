from __future__ import annotations

import dataclasses
import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from flashtaint.bytecode import selector_of
from flashtaint.callgraph import AnalysisError, ContractRef, SubCallGraph, build_scg
from flashtaint.fixtures import BLOCK, CASES, TOKEN, addr
from flashtaint.taint import (
    TAINT_RELATIONS,
    Hop,
    ProfileError,
    TaintConfig,
    analyze,
    build_base,
    load_profile,
    load_taint_rules,
    parse_profile,
    replay,
)

from .conftest import case_scg

BASELINE = load_profile("baseline")
EXPANDED = load_profile("expanded")


def sub_config(sources, pairs) -> TaintConfig:
    sinks: dict = {}
    for sel, i in pairs:
        sinks[sel] = sinks.get(sel, frozenset()) | {i}
    return TaintConfig(frozenset(sources), sinks, "sub")


# -- profiles ----------------------------------------------------------------------


def test_shipped_profiles():
    assert BASELINE.sources == {selector_of("balanceOf(address)")}
    assert BASELINE.sink_pairs() == {(selector_of("transfer(address,uint256)"), 1),
                                     (selector_of("transferFrom(address,address,uint256)"), 2)}
    assert len(EXPANDED.sources) == 7 and len(EXPANDED.sinks) == 5
    assert EXPANDED.sinks[selector_of("buy(uint256,uint256)")] == {0, 1}
    assert BASELINE.issubset(EXPANDED) and not EXPANDED.issubset(BASELINE)


def test_profile_hex_must_agree_with_the_signature():
    with pytest.raises(ProfileError, match="hashes to 0xa9059cbb"):
        parse_profile("sink transfer(address,uint256)=0xdeadbeef params=1")
    ok = parse_profile("sink transfer(address,uint256)=0xa9059cbb params=1\nsource totalSupply()")
    assert ok.sink_pairs() == {(selector_of("transfer(address,uint256)"), 1)}


@pytest.mark.parametrize(
    "text",
    [
        "sink transfer(address,uint256) params=2",
        "sink transfer(address,uint256)",
        "source balanceOf(address) params=0",
        "source balanceOf(address, uint256)",
        "source balanceOf(address) 0x70a0823",
        "sink withdraw(uint256) params=x",
        "drain withdraw(uint256)",
    ],
)
def test_bad_profile_lines(text):
    with pytest.raises(ProfileError, match="line 1"):
        parse_profile(text)


def test_unknown_profile_name():
    with pytest.raises(ProfileError):
        load_profile("paranoid")


def test_profile_from_file(tmp_path):
    p = tmp_path / "mine.profile"
    p.write_text("# comment\n\nsource getReserves()\nsink withdraw(uint256) params=all\n")
    cfg = load_profile(p)
    assert cfg.profile_name == "mine" and cfg.sinks == {selector_of("withdraw(uint256)"): {0}}


def test_every_rule_has_one_taint_carrier_at_most():
    rules = load_taint_rules()
    assert {r.label for r in rules} == {f"R{i}" for i in range(1, 8)}
    for r in rules:
        carriers = [a for a in r.body if a.relation in TAINT_RELATIONS]
        assert len(carriers) == (0 if r.label == "R1" else 1), r


# -- corpus verdicts ---------------------------------------------------------------


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
@pytest.mark.parametrize("profile", ["baseline", "expanded"])
def test_corpus_verdicts(state, case, profile):
    report = analyze(case_scg(state, case), load_profile(profile))
    assert report.verdict == case.expected[profile]
    for f in report.findings:
        replay(f.witness, report.run.fixpoint, report.run.rules)


def test_direct_case_finding(state):
    report = analyze(case_scg(state, "v1-direct"), BASELINE)
    (f,) = report.findings
    assert f.source.selector == "0x70a08231" and f.sink.selector == "0x23b872dd" and f.param == 2
    assert f.source.node == f.sink.node == "n0"
    assert len(f.witness) >= 3
    assert [h.rule for h in f.witness][0] == "R1" and f.witness[-1].rule == "R7"


def test_safe_fixtures_have_no_findings_under_any_profile(state):
    for name in ("s1-constant", "s2-record"):
        for cfg in (BASELINE, EXPANDED):
            assert analyze(case_scg(state, name), cfg).findings == []


def test_reserves_case_needs_the_expanded_profile(state):
    g = case_scg(state, "v2-reserves")
    assert analyze(g, BASELINE).findings == []
    (f,) = analyze(g, EXPANDED).findings
    assert f.source.selector == "0x0902f1ac" and f.sink.selector == "0x2e1a7d4d" and f.param == 0


def test_proxy_taint_crosses_the_delegatecall_through_storage(state):
    report = analyze(case_scg(state, "v4-proxy"), BASELINE)
    (f,) = report.findings
    assert f.source.node == "n1" and f.sink.node == "n0"
    assert "R3" in [h.rule for h in f.witness]


def test_routed_case_taints_across_three_nodes(state):
    report = analyze(case_scg(state, "v5-router"), BASELINE)
    (f,) = report.findings
    assert f.source.node != f.sink.node
    assert "R6" in [h.rule for h in f.witness]


def test_no_sources_means_no_findings(state):
    for case in CASES:
        empty = TaintConfig(frozenset(), EXPANDED.sinks)
        run = analyze(case_scg(state, case), empty).run
        for rel in TAINT_RELATIONS:
            assert not run.fixpoint.tuples(rel), (case.name, rel)


def test_unsealed_graph_is_rejected():
    g = SubCallGraph(None)  # type: ignore[arg-type]
    with pytest.raises(AnalysisError):
        build_base(g, BASELINE)


def test_report_is_deterministic_json(state):
    g = case_scg(state, "v3-oracle")
    a, b = analyze(g, EXPANDED), analyze(g, EXPANDED)
    assert a.dumps() == b.dumps()
    doc = json.loads(a.dumps())
    assert doc["verdict"] == "vulnerable" and doc["config_profile"] == "expanded"
    assert doc["root"]["selector"] == selector_of("claim()").hex
    assert set(doc["stats"]) == {"nodes", "edges", "unresolved_calls", "facts", "rounds", "scg_rounds", "truncation"}
    assert a.dumps().endswith("}\n")


def test_findings_are_unique_per_source_sink_param(state):
    for case in CASES:
        keys = [f.key for f in analyze(case_scg(state, case), EXPANDED).findings]
        assert len(keys) == len(set(keys))


# -- replay ------------------------------------------------------------------------


def _v1(state):
    report = analyze(case_scg(state, "v1-direct"), BASELINE)
    return report.findings[0].witness, report.run


def test_replay_rejects_tampering(state):
    w, run = _v1(state)
    replay(w, run.fixpoint, run.rules)
    bad_rule = (dataclasses.replace(w[1], rule="R6"),) + w[2:]
    fake_fact = ("Tainted", ("n0:v999",))
    cases = [
        (),
        w[:-1],  # does not reach the sink
        w[1:],  # does not start at a source
        (w[0], w[2], *w[3:]) if len(w) > 3 else (w[0], w[-1]),  # skipped hop
        (w[0], *bad_rule),
        (w[0], Hop(w[1].rule, fake_fact, w[1].premises), *w[2:]),
        (Hop(w[0].rule, w[0].fact, w[0].premises[:-1]), *w[1:]),
    ]
    for tampered in cases:
        with pytest.raises(AssertionError):
            replay(tampered, run.fixpoint, run.rules)


def test_replay_against_a_different_program_fails(state):
    w, _ = _v1(state)
    other = analyze(case_scg(state, "s1-constant"), BASELINE).run
    with pytest.raises(AssertionError):
        replay(w, other.fixpoint, other.rules)


# -- monotonicity ------------------------------------------------------------------

SOURCES = sorted(EXPANDED.sources)
PAIRS = sorted(EXPANDED.sink_pairs())


@pytest.fixture(scope="module")
def full_findings(state):
    return {c.name: {f.key for f in analyze(case_scg(state, c), EXPANDED).findings} for c in CASES}


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    st.sets(st.sampled_from(SOURCES)),
    st.sets(st.sampled_from(PAIRS)),
    st.sampled_from(CASES),
)
def test_sub_config_findings_are_a_subset(state, full_findings, sources, pairs, case):
    sub = sub_config(sources, pairs)
    assert sub.issubset(EXPANDED)
    keys = {f.key for f in analyze(case_scg(state, case), sub).findings}
    assert keys <= full_findings[case.name]


def test_root_may_be_given_by_logic_and_storage(state):
    impl, proxy = addr("1a4"), addr("a4")
    g = build_scg(ContractRef(impl, proxy, BLOCK), selector_of("rebalance()"), state)
    report = analyze(g, BASELINE)
    assert report.root["storage_address"] == proxy and report.root["logic_address"] == impl
    # without the proxy's transfer, the stored balance is never sent anywhere
    assert report.findings == []
    assert TOKEN in {e.callee.contract.logic_address for e in g.edges if e.callee}
