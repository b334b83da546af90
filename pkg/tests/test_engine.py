import numpy as np
from hypothesis import given, settings, strategies as st

from peepgen import engine, semantics
from peepgen.ir import (FLOAT_BINOPS, INT_BINOPS, INT_UNOPS, FloatType,
                        Function, Instr, IntType, Local, Param, mask,
                        opcode_arity)
from peepgen.semantics import Bits, FloatBits, POISON

WIDTHS = [1, 3, 8, 16, 32, 64]
FLAG_POOL = {"add": ["nsw", "nuw"], "sub": ["nsw", "nuw"],
             "mul": ["nsw", "nuw"], "shl": ["nsw", "nuw"],
             "udiv": ["exact"], "sdiv": ["exact"],
             "lshr": ["exact"], "ashr": ["exact"], "neg": ["nsw", "nuw"]}


def _run_both(op, w, args, flags=(), pred=None):
    ty = IntType(w)
    arity = len(args)
    params = tuple((f"p{i}", ty) for i in range(arity))
    out_ty = IntType(1) if op == "icmp" else ty
    fn = Function("lhs", params,
                  (Instr(op, tuple(Param(f"p{i}") for i in range(arity)),
                         out_ty, frozenset(flags), pred),),
                  Local(0))
    scalar = semantics.eval_function(fn, [Bits(w, a) for a in args])
    vparams = {f"p{i}": engine.VVal(np.array([a], dtype=engine.udtype(w)),
                                    None, ty)
               for i, a in enumerate(args)}
    vec = engine.eval_function_vec(fn, vparams, {})
    if scalar is POISON:
        assert vec.poison is not None and bool(np.asarray(vec.poison).reshape(-1)[0])
    else:
        if vec.poison is not None:
            assert not bool(np.asarray(vec.poison).reshape(-1)[0])
        assert int(np.asarray(vec.data).reshape(-1)[0]) == scalar.value


@settings(max_examples=1500, deadline=None)
@given(st.sampled_from(INT_BINOPS + INT_UNOPS), st.sampled_from(WIDTHS),
       st.data())
def test_vector_matches_scalar_int(op, w, data):
    arity = opcode_arity(op)
    args = [data.draw(st.integers(0, mask(w))) for _ in range(arity)]
    allowed = FLAG_POOL.get(op, [])
    flags = (data.draw(st.sets(st.sampled_from(allowed), max_size=2))
             if allowed else set())
    _run_both(op, w, args, flags)


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(["eq", "ne", "ult", "ule", "ugt", "uge",
                        "slt", "sle", "sgt", "sge"]),
       st.sampled_from(WIDTHS), st.data())
def test_vector_matches_scalar_icmp(pred, w, data):
    a = data.draw(st.integers(0, mask(w)))
    b = data.draw(st.integers(0, mask(w)))
    _run_both("icmp", w, [a, b], pred=pred)


@settings(max_examples=500, deadline=None)
@given(st.sampled_from(FLOAT_BINOPS), st.sampled_from([16, 32, 64]),
       st.data())
def test_vector_matches_scalar_float(op, prec, data):
    ty = FloatType(prec)
    pats = [data.draw(st.integers(0, (1 << prec) - 1)) for _ in range(2)]
    fn = Function("lhs", (("a", ty), ("b", ty)),
                  (Instr(op, (Param("a"), Param("b")), ty, frozenset(), None),),
                  Local(0))
    scalar = semantics.eval_function(fn, [FloatBits(prec, p) for p in pats])
    vparams = {n: engine.VVal(
        np.array([p], dtype=engine._FUINT[prec]).view(engine._FLOAT[prec]),
        None, ty) for n, p in zip(("a", "b"), pats)}
    vec = engine.eval_function_vec(fn, vparams, {})
    vpat = int(np.asarray(vec.data).view(engine._FUINT[prec]).reshape(-1)[0])
    assert semantics.values_equal(scalar, FloatBits(prec, vpat))


def test_special_int_patterns_cover_corners():
    for w in (8, 16, 32):
        sp = set(int(x) for x in engine.special_int_patterns(w))
        assert {0, 1, 2, mask(w), 1 << (w - 1), mask(w) >> 1} <= sp
        assert all(0 <= x <= mask(w) for x in sp)
        assert (1 << (w // 2)) in sp  # powers of two are included


def test_special_float_patterns_cover_corners():
    for prec in (16, 32, 64):
        sp = set(int(x) for x in engine.special_float_patterns(prec))
        floats = [semantics.bits_to_float(p, prec) for p in sp]
        assert any(np.isnan(f) for f in floats)
        assert any(np.isposinf(f) for f in floats)
        assert any(np.isneginf(f) for f in floats)
        assert 0x8000000000000000 >> (64 - prec) in sp  # negative zero


def test_space_of():
    assert engine.space_of(IntType(8)) == 256
    assert engine.space_of(FloatType(16)) == 65536
