from peepgen import textfmt
from peepgen.pipeline import (PipelineConfig, compare_generality, match_rule,
                              remove_flags, run_pipeline, stage3_relax,
                              stage4_widths, StageOutcome)
from peepgen.proposer import HeuristicBackend
from peepgen.verifier import Budget

from conftest import FIXTURES, parse


def _cfg(**kw):
    kw.setdefault("budget", Budget())
    kw.setdefault("backend", HeuristicBackend(kw["budget"]))
    return PipelineConfig(**kw)


FLAGGED = """
rule "f" {
  const C1: i8;
  pre: C1 <=u 100;
  lhs fn(x: i8) -> i8 {
    %0 = add.nsw i8 %x, C1;
    %1 = sub i8 %0, C1;
    ret %1
  }
  rhs fn(x: i8) -> i8 { ret %x }
}
"""


def test_relax_drops_flag_and_reaches_fixpoint():
    outcome, relaxed = stage3_relax(parse(FLAGGED), _cfg())
    assert outcome.counts["flags_removed"] == 1
    assert not any(i.flags for i in relaxed.lhs.body)
    # relaxation is idempotent: nothing left to remove on the second pass
    again, same = stage3_relax(relaxed, _cfg())
    assert again.counts == {"conjuncts_removed": 0, "conjuncts_weakened": 0,
                            "flags_removed": 0}
    assert textfmt.print_rule(same) == textfmt.print_rule(relaxed)


def test_flag_removal_is_monotone_on_fixture_corpus(fixture_corpus):
    # every output of the flag-removal sweep admits no further removal
    for fx in fixture_corpus:
        if fx.domain != "rules":
            continue
        widths = (fx.expect or {}).get("widths", {})
        if widths or fx.rule.width_vars:
            continue
        outcome = StageOutcome("relax", counts={})
        stripped, _n = remove_flags(fx.rule, _cfg(), outcome)
        outcome2 = StageOutcome("relax", counts={})
        _again, n2 = remove_flags(stripped, _cfg(), outcome2)
        assert n2 == 0, fx.name


def test_widths_stage_generalizes_xor_self():
    rule = parse((FIXTURES / "int" / "xor_self.peep").read_text())
    outcome, erased = stage4_widths(rule, _cfg())
    assert outcome.counts["widths_generalized"] == 1
    assert erased.width_vars == ("W",)
    assert "all widths" in outcome.note


def test_pipeline_transitions_never_lose_generality():
    instance = parse(
        (FIXTURES / "int" / "strength_reduce_mul8.peep").read_text())
    report = run_pipeline(instance, _cfg())
    current = parse(report.pruned_text)
    for stage in report.stages:
        if stage.accepted_text is None:
            continue
        nxt = parse(stage.accepted_text)
        widths = {v: 8 for v in nxt.width_vars}
        result = compare_generality(nxt, current, widths)
        assert result.verdict in ("AMoreGeneral", "Equal"), stage.stage
        current = nxt


def test_pipeline_is_deterministic():
    instance = parse(
        (FIXTURES / "int" / "strength_reduce_mul8.peep").read_text())
    a = run_pipeline(instance, _cfg())
    b = run_pipeline(instance, _cfg())
    assert a.dumps() == b.dumps()


def _xor_and_pair():
    rule = parse((FIXTURES / "rules" / "xor_and_distribute.peep").read_text())
    concrete = parse(
        (FIXTURES / "int" / "xor_and_distribute.peep").read_text())
    return rule, concrete


def test_match_rule_binds_constants():
    rule, concrete = _xor_and_pair()
    env = match_rule(rule, concrete)
    assert env is not None
    assert env["C1"] == 173 and env["C2"] == 94 and env["C3"] == 57
    assert env["C4"] == 53


def test_match_rule_rejects_broken_relation():
    rule, concrete = _xor_and_pair()
    broken = parse((FIXTURES / "int" / "xor_and_distribute.peep")
                   .read_text().replace(", 53", ", 54"))
    assert match_rule(rule, broken) is None


def test_match_rule_handles_commuted_operands():
    rule, concrete = _xor_and_pair()
    commuted = parse((FIXTURES / "int" / "xor_and_distribute.peep")
                     .read_text().replace("xor i8 %x, 173", "xor i8 173, %x"))
    env = match_rule(rule, commuted)
    assert env is not None and env["C1"] == 173


def test_match_then_substitute_reproduces_instance():
    from peepgen.ir import substitute

    rule, concrete = _xor_and_pair()
    env = match_rule(rule, concrete)
    widths = {v: env[v] for v in rule.width_vars}
    bindings = {n for n, _ in rule.sym_consts}
    inst = substitute(rule, {n: env[n] for n in bindings}, widths)
    assert textfmt.structural_eq(
        textfmt.parse_rule(textfmt.print_rule(inst)), concrete)


def test_compare_generality_reflexive_and_disjoint():
    rule = parse((FIXTURES / "rules" / "cttz_general.peep").read_text())
    assert compare_generality(rule, rule).verdict == "Equal"
    other = parse("""
rule "o" {
  lhs fn(x: i8) -> i8 { %0 = add i8 %x, 1; ret %0 }
  rhs fn(x: i8) -> i8 { %0 = sub i8 %x, 255; ret %0 }
}
""")
    assert compare_generality(rule, other).verdict == "Incomparable"


def test_compare_generality_strict_superset():
    a = parse((FIXTURES / "rules" / "cttz_general.peep").read_text())
    b = parse((FIXTURES / "rules" / "cttz_fixed_rhs.peep").read_text())
    result = compare_generality(a, b)
    assert result.verdict == "AMoreGeneral"
    assert result.witness is not None
