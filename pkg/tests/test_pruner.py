from peepgen import textfmt
from peepgen.cost import check_profitable
from peepgen.pruner import dce, prune
from peepgen.verifier import Budget, check_refinement

from conftest import FIXTURES, parse


def _prune_instance():
    return parse((FIXTURES / "int" / "mod_div_zero.peep").read_text())


def test_prune_eliminates_irrelevant_trunc():
    pruned, log = prune(_prune_instance())
    text = textfmt.print_rule(pruned)
    assert "trunc" not in text
    assert "newvar_v0: i8" in text
    assert any(a.outcome == "accepted" for a in log.attempts)


def test_prune_output_passes_both_gates():
    pruned, _log = prune(_prune_instance())
    assert check_refinement(pruned, {}, Budget()).kind == "verified"
    assert check_profitable(pruned)


def test_prune_is_idempotent():
    pruned, _ = prune(_prune_instance())
    again, log = prune(pruned)
    assert textfmt.print_rule(again) == textfmt.print_rule(pruned)
    assert not any(a.outcome == "accepted" for a in log.attempts)


def test_prune_monotone_shrinkage():
    rule = _prune_instance()
    pruned, _ = prune(rule)
    before = len(rule.lhs.body) + len(rule.rhs.body)
    after = len(pruned.lhs.body) + len(pruned.rhs.body)
    assert after <= before


def test_prune_keeps_essential_instance():
    rule = parse((FIXTURES / "int" / "xor_and_distribute.peep").read_text())
    pruned, log = prune(rule)
    assert textfmt.print_rule(pruned) == textfmt.print_rule(rule)
    assert not any(a.outcome == "accepted" for a in log.attempts)


def test_dce_removes_dead_instruction():
    rule = parse("""
rule "dead" {
  lhs fn(x: i8) -> i8 {
    %0 = add i8 %x, 1;
    %1 = mul i8 %x, 3;
    ret %0
  }
  rhs fn(x: i8) -> i8 { %0 = add i8 %x, 1; ret %0 }
}
""")
    cleaned = dce(rule)
    assert len(cleaned.lhs.body) == 1
    assert cleaned.lhs.body[0].op == "add"


def test_prune_deterministic():
    a, la = prune(_prune_instance())
    b, lb = prune(_prune_instance())
    assert textfmt.print_rule(a) == textfmt.print_rule(b)
    assert la.to_json() == lb.to_json()
