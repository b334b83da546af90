import pytest
from hypothesis import given, strategies as st

from peepgen.ir import (IntType, PeepError, PreconditionUnsatisfied,
                        literal_fits, mask, resolve_widths, substitute,
                        to_signed, to_unsigned, validate)
from peepgen import textfmt

from conftest import parse

MUL_W = """
rule "m" {
  const C1: iW;
  widthvar W;
  pre: PowerOfTwo(C1);
  lhs fn(x: iW) -> iW { %0 = mul iW %x, C1; ret %0 }
  rhs fn(x: iW) -> iW { %0 = shl iW %x, C1; ret %0 }
}
"""


@given(st.integers(min_value=1, max_value=64), st.data())
def test_signed_unsigned_round_trip(w, data):
    pattern = data.draw(st.integers(min_value=0, max_value=mask(w)))
    assert to_unsigned(to_signed(pattern, w), w) == pattern
    signed = to_signed(pattern, w)
    assert -(1 << (w - 1)) <= signed < (1 << (w - 1))
    assert literal_fits(signed, w)


def test_literal_fits_bounds():
    assert literal_fits(255, 8)
    assert literal_fits(-128, 8)
    assert not literal_fits(256, 8)
    assert not literal_fits(-129, 8)


def test_validate_clean_corpus(fixture_corpus):
    for fx in fixture_corpus:
        assert validate(fx.rule) == [], fx.name


def test_validate_rejects_duplicate_const():
    rule = parse(MUL_W)
    bad = rule.__class__(rule.name, rule.sym_consts * 2, rule.width_vars,
                         rule.pre, rule.lhs, rule.rhs)
    assert any("duplicate" in d.message for d in validate(bad))


def test_validate_rejects_unknown_width_var():
    rule = parse(MUL_W)
    bad = rule.__class__(rule.name, rule.sym_consts, (), rule.pre,
                         rule.lhs, rule.rhs)
    assert validate(bad)


def test_resolve_widths_concretizes():
    rule = parse(MUL_W)
    resolved = resolve_widths(rule, {"W": 8})
    assert resolved.width_vars == ()
    assert resolved.lhs.params[0][1] == IntType(8)
    assert resolved.sym_consts[0][1] == IntType(8)


def test_resolve_widths_requires_assignment():
    rule = parse(MUL_W)
    with pytest.raises(PeepError):
        resolve_widths(rule, {})


def test_substitute_binds_constants():
    rule = parse(MUL_W)
    inst = substitute(rule, {"C1": 4}, {"W": 8})
    text = textfmt.print_rule(inst)
    assert "mul i8 %x, 4" in text
    assert inst.sym_consts == ()


def test_substitute_accepts_signed_values():
    src = """
rule "s" {
  const C1: i8;
  pre: C1 <s 0;
  lhs fn(x: i8) -> i8 { %0 = add i8 %x, C1; ret %0 }
  rhs fn(x: i8) -> i8 { %0 = sub i8 %x, 3; ret %0 }
}
"""
    inst = substitute(parse(src), {"C1": -3})
    assert "add i8 %x, 253" in textfmt.print_rule(inst)


def test_substitute_rejects_pre_violations():
    rule = parse(MUL_W)
    with pytest.raises(PreconditionUnsatisfied):
        substitute(rule, {"C1": 3}, {"W": 8})
