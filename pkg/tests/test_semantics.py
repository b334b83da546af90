import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peepgen import semantics
from peepgen.ir import (FLOAT_BINOPS, INT_BINOPS, INT_UNOPS, CAST_OPS,
                        FloatType, Instr, IntType, mask, opcode_arity,
                        to_signed)
from peepgen.semantics import (Bits, CANONICAL_NAN, FloatBits, POISON,
                               eval_instr, float_to_bits, values_equal)

from conftest import oracle_instr, POISON as OPOISON


def _instr(op, ty=IntType(8), flags=(), pred=None):
    return Instr(op, (), ty, frozenset(flags), pred)


def test_poison_strict_per_int_opcode():
    for op in INT_BINOPS:
        instr = _instr(op)
        assert eval_instr(instr, [POISON, Bits(8, 1)]) is POISON
        assert eval_instr(instr, [Bits(8, 1), POISON]) is POISON
    for op in INT_UNOPS:
        assert eval_instr(_instr(op), [POISON]) is POISON
    for op in CAST_OPS:
        assert eval_instr(_instr(op, IntType(16)), [POISON]) is POISON
    assert eval_instr(_instr("icmp", IntType(1), pred="eq"),
                      [POISON, Bits(8, 0)]) is POISON


def test_poison_strict_per_float_opcode():
    one = FloatBits(32, float_to_bits(1.0, 32))
    for op in FLOAT_BINOPS:
        instr = _instr(op, FloatType(32))
        assert eval_instr(instr, [POISON, one]) is POISON
        assert eval_instr(instr, [one, POISON]) is POISON
    assert eval_instr(_instr("fneg", FloatType(32)), [POISON]) is POISON
    assert eval_instr(_instr("fcmp", IntType(1), pred="oeq"),
                      [POISON, one]) is POISON


def test_select_poison_rules():
    sel = _instr("select")
    t, f = Bits(8, 3), Bits(8, 4)
    assert eval_instr(sel, [POISON, t, f]) is POISON
    # poison in the untaken arm does not leak
    assert eval_instr(sel, [Bits(1, 1), t, POISON]) == t
    assert eval_instr(sel, [Bits(1, 0), POISON, f]) == f


def test_nsw_overflow_oracle_exhaustive_i8():
    for op in ("add", "sub", "mul"):
        instr = _instr(op, flags=("nsw",))
        for a in range(256):
            for b in range(256):
                got = eval_instr(instr, [Bits(8, a), Bits(8, b)])
                sa, sb = to_signed(a, 8), to_signed(b, 8)
                exact = {"add": sa + sb, "sub": sa - sb, "mul": sa * sb}[op]
                if -128 <= exact < 128:
                    assert got == Bits(8, exact & 0xFF)
                else:
                    assert got is POISON


def test_shift_out_of_range_is_poison():
    for op in ("shl", "lshr", "ashr"):
        assert eval_instr(_instr(op), [Bits(8, 1), Bits(8, 8)]) is POISON
        assert eval_instr(_instr(op), [Bits(8, 1), Bits(8, 7)]) is not POISON


def test_division_by_zero_is_poison():
    for op in ("udiv", "sdiv", "urem", "srem"):
        assert eval_instr(_instr(op), [Bits(8, 1), Bits(8, 0)]) is POISON
    # signed overflow case INT_MIN / -1
    for op in ("sdiv", "srem"):
        assert eval_instr(_instr(op), [Bits(8, 0x80), Bits(8, 0xFF)]) is POISON


def test_count_ops_zero_input():
    for op, expect in (("cttz", 8), ("ctlz", 8), ("ctpop", 0)):
        assert eval_instr(_instr(op), [Bits(8, 0)]) == Bits(8, expect)


def test_float_nan_results_are_canonical():
    for prec in (16, 32, 64):
        inf = float_to_bits(np.inf, prec)
        instr = _instr("fsub", FloatType(prec))
        got = eval_instr(instr, [FloatBits(prec, inf), FloatBits(prec, inf)])
        assert got == FloatBits(prec, CANONICAL_NAN[prec])


def test_values_equal_treats_nans_alike():
    a = FloatBits(32, CANONICAL_NAN[32])
    b = FloatBits(32, 0x7FC00001)  # a different NaN payload
    assert values_equal(a, b)
    assert not values_equal(a, FloatBits(32, float_to_bits(1.0, 32)))


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(INT_BINOPS + INT_UNOPS),
       st.sampled_from([1, 4, 8, 16]), st.data())
def test_int_semantics_match_independent_oracle(op, w, data):
    arity = opcode_arity(op)
    args = [data.draw(st.integers(0, mask(w))) for _ in range(arity)]
    allowed = (["nsw", "nuw"] if op in ("add", "sub", "mul", "shl", "neg")
               else ["exact"] if op in ("udiv", "sdiv", "lshr", "ashr")
               else [])
    flags = (data.draw(st.sets(st.sampled_from(allowed), max_size=2))
             if allowed else set())
    instr = _instr(op, IntType(w), flags=flags)
    got = eval_instr(instr, [Bits(w, a) for a in args])
    want = oracle_instr(op, None, flags, IntType(w), args, [w] * arity)
    if want == OPOISON:
        assert got is POISON
    else:
        assert got == Bits(w, want)


def test_fcmp_unordered_predicates():
    nan = FloatBits(32, CANONICAL_NAN[32])
    one = FloatBits(32, float_to_bits(1.0, 32))
    oeq = _instr("fcmp", IntType(1), pred="oeq")
    ueq = _instr("fcmp", IntType(1), pred="ueq")
    assert eval_instr(oeq, [nan, one]) == Bits(1, 0)
    assert eval_instr(ueq, [nan, one]) == Bits(1, 1)
    assert eval_instr(_instr("fcmp", IntType(1), pred="ord"),
                      [nan, nan]) == Bits(1, 0)
    assert eval_instr(_instr("fcmp", IntType(1), pred="uno"),
                      [nan, one]) == Bits(1, 1)


def test_signed_zero_compares_equal():
    neg0 = FloatBits(32, 0x80000000)
    pos0 = FloatBits(32, 0)
    assert eval_instr(_instr("fcmp", IntType(1), pred="oeq"),
                      [neg0, pos0]) == Bits(1, 1)
