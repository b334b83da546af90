"""Vectorized evaluation over constant and input spaces.

The verifier enumerates (or samples) joint (constants, inputs) spaces; this
module does the heavy lifting with numpy.  All rules handled here must have
concrete types (width variables already resolved).  Integer values are kept
as unsigned bit patterns in the narrowest ufunc dtype that fits; floats are
kept in their native dtype and compared by bit pattern.

Poison is tracked as a parallel boolean mask per value.  Partial constant
operations (log2 of a non-power, division by zero) are tracked as per-lane
"domain" masks that make the enclosing predicate atom false, mirroring the
scalar evaluator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ir import (
    CAST_OPS, CBin, CCast, CConst, CFloat, CInt, CRef, CUn, FloatType,
    Function, Instr, IntType, Literal, Local, Param, PeepError, PAnd, PCmp,
    PKnownBits, PLowBitsZero, PNot, POr, PPow2, PRange, PTrue, Rule,
    SymConst, mask, pred_param_refs, to_unsigned,
)
from .ir import FCMP_PREDS as _FCMP_PREDS
from .ir import ICMP_PREDS as _ICMP_PREDS
from . import semantics

_UINT = {8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}
_SINT = {8: np.int8, 16: np.int16, 32: np.int32, 64: np.int64}
_FLOAT = {16: np.float16, 32: np.float32, 64: np.float64}
_FUINT = {16: np.uint16, 32: np.uint32, 64: np.uint64}


class UnsupportedConstruct(PeepError):
    """Raised when a rule cannot be evaluated by the vectorized engine."""


def storage_bits(width: int) -> int:
    for b in (8, 16, 32, 64):
        if width <= b:
            return b
    raise UnsupportedConstruct(f"integer width {width} exceeds 64")


def udtype(width: int):
    return _UINT[storage_bits(width)]


def sdtype(width: int):
    return _SINT[storage_bits(width)]


def space_of(ty) -> int:
    if isinstance(ty, IntType):
        return 1 << ty.width
    if isinstance(ty, FloatType):
        return 1 << ty.bits
    raise UnsupportedConstruct(f"non-concrete type {ty}")


def _signed(data, width: int):
    """Reinterpret zero-extended patterns as sign-extended signed values."""
    sb = storage_bits(width)
    if width == sb:
        return data.astype(_UINT[sb], copy=False).view(_SINT[sb])
    shift = sb - width
    return (data.astype(_UINT[sb]) << np.uint8(shift)).view(_SINT[sb]) >> shift


def _wrap(data, width: int):
    dt = udtype(width)
    data = data.astype(dt, copy=False)
    if width == storage_bits(width):
        return data
    return data & dt(mask(width))


@dataclass
class VVal:
    """A vectorized value: patterns (ints) or native floats, plus poison."""

    data: np.ndarray
    poison: Optional[np.ndarray]
    ty: object  # IntType or FloatType

    @property
    def width(self) -> int:
        return self.ty.width


def _por(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a | b


# ---------------------------------------------------------------------------
# Population counts and friends (on uint64 inputs)


def _popcount64(v):
    v = v.astype(np.uint64, copy=True)
    v -= (v >> np.uint64(1)) & np.uint64(0x5555555555555555)
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


def _cttz64(v, width: int):
    low = v & (~v + np.uint64(1))
    r = _popcount64(low - np.uint64(1))
    return np.where(v == 0, np.uint64(width), r)


def _ctlz64(v, width: int):
    s = v.astype(np.uint64, copy=True)
    for k in (1, 2, 4, 8, 16, 32):
        s |= s >> np.uint64(k)
    return np.uint64(width) - _popcount64(s)


# ---------------------------------------------------------------------------
# Integer instruction kernels


def _int_binop_vec(op: str, flags, a: VVal, b: VVal) -> VVal:
    w = a.width
    dt = udtype(w)
    av, bv = a.data, b.data
    poison = _por(a.poison, b.poison)

    if op in ("and", "or", "xor"):
        r = {"and": av & bv, "or": av | bv, "xor": av ^ bv}[op]
        return VVal(r, poison, a.ty)

    if op in ("add", "sub"):
        r = _wrap(av + bv if op == "add" else av - bv, w)
        if "nsw" in flags:
            sa, sb, sr = _signed(av, w), _signed(bv, w), _signed(r, w)
            if op == "add":
                ovf = ((sa >= 0) == (sb >= 0)) & ((sr >= 0) != (sa >= 0))
            else:
                ovf = ((sa >= 0) != (sb >= 0)) & ((sr >= 0) != (sa >= 0))
            poison = _por(poison, ovf)
        if "nuw" in flags:
            ovf = r < av if op == "add" else av < bv
            poison = _por(poison, ovf)
        return VVal(r, poison, a.ty)

    if op == "mul":
        if w <= 32:
            wide = av.astype(np.uint64) * bv.astype(np.uint64)
            r = _wrap(wide, w)
            if "nuw" in flags:
                poison = _por(poison, wide > np.uint64(mask(w)))
            if "nsw" in flags:
                ws = _signed(av, w).astype(np.int64) * _signed(bv, w).astype(np.int64)
                poison = _por(poison, (ws < -(1 << (w - 1))) | (ws > (1 << (w - 1)) - 1))
        else:
            r = av * bv
            if "nuw" in flags:
                # divide-back overflow check: sound because when a*b wraps,
                # r // a is strictly below b
                safe = np.where(av == 0, np.uint64(1), av)
                poison = _por(poison, (av != 0) & (r // safe != bv))
            if "nsw" in flags:
                sa, sb = _signed(av, w), _signed(bv, w)
                na, nb = sa < 0, sb < 0
                ma = np.where(na, (~av) + np.uint64(1), av)
                mb = np.where(nb, (~bv) + np.uint64(1), bv)
                prod = ma * mb
                safe = np.where(ma == 0, np.uint64(1), ma)
                ovf_u = (ma != 0) & (prod // safe != mb)
                limit = np.uint64((1 << 63) - 1) + (na ^ nb).astype(np.uint64)
                poison = _por(poison, ovf_u | (prod > limit))
        return VVal(r, poison, a.ty)

    if op in ("udiv", "urem"):
        zero = bv == 0
        safe = np.where(zero, dt(1), bv)
        q, rem = av // safe, av % safe
        poison = _por(poison, zero)
        if op == "udiv":
            if "exact" in flags:
                poison = _por(poison, rem != 0)
            return VVal(q, poison, a.ty)
        return VVal(rem, poison, a.ty)

    if op in ("sdiv", "srem"):
        sa, sb = _signed(av, w), _signed(bv, w)
        na, nb = sa < 0, sb < 0
        ma = _wrap(np.where(na, (~av.astype(dt)) + dt(1), av), w)
        mb = _wrap(np.where(nb, (~bv.astype(dt)) + dt(1), bv), w)
        zero = bv == 0
        int_min = dt(1 << (w - 1)) if w < 64 else np.uint64(1 << 63)
        minneg = (av == _wrap(np.asarray(int_min), w)) & (_wrap(bv, w) == dt(mask(w)))
        safe = np.where(zero, dt(1), mb)
        q, rem = ma // safe, ma % safe
        poison = _por(poison, zero | minneg)
        if op == "sdiv":
            qs = np.where(na ^ nb, _wrap((~q.astype(dt)) + dt(1), w), q)
            if "exact" in flags:
                poison = _por(poison, rem != 0)
            return VVal(_wrap(qs, w), poison, a.ty)
        rs = np.where(na, _wrap((~rem.astype(dt)) + dt(1), w), rem)
        return VVal(_wrap(rs, w), poison, a.ty)

    if op in ("shl", "lshr", "ashr"):
        big = bv >= dt(w)
        amt = np.where(big, dt(0), bv)
        poison = _por(poison, big)
        if op == "shl":
            r = _wrap(av << amt, w)
            if "nsw" in flags:
                back = _signed(r, w) >> _signed(amt, w)
                poison = _por(poison, back != _signed(av, w))
            if "nuw" in flags:
                poison = _por(poison, (r >> amt) != av)
            return VVal(r, poison, a.ty)
        if op == "lshr":
            r = av >> amt
            if "exact" in flags:
                lost = av & _wrap((dt(1) << amt) - dt(1), w)
                poison = _por(poison, lost != 0)
            return VVal(r, poison, a.ty)
        r = _wrap(_signed(av, w) >> _signed(amt, w), w)
        if "exact" in flags:
            lost = av & _wrap((dt(1) << amt) - dt(1), w)
            poison = _por(poison, lost != 0)
        return VVal(r, poison, a.ty)

    if op in ("smin", "smax", "umin", "umax"):
        if op[0] == "s":
            ka, kb = _signed(av, w), _signed(bv, w)
        else:
            ka, kb = av, bv
        pick_a = ka <= kb if op.endswith("min") else ka >= kb
        return VVal(np.where(pick_a, av, bv), poison, a.ty)

    raise UnsupportedConstruct(f"integer binop {op}")


def _int_unop_vec(op: str, flags, a: VVal) -> VVal:
    w = a.width
    dt = udtype(w)
    av = np.asarray(a.data, dtype=dt)
    poison = a.poison
    if op == "neg":
        r = _wrap((~av) + dt(1), w)
        if "nsw" in flags:
            poison = _por(poison, av == _wrap(np.asarray(dt(1) << dt(w - 1)), w))
        if "nuw" in flags:
            poison = _por(poison, av != 0)
        return VVal(r, poison, a.ty)
    if op == "not":
        return VVal(_wrap(~av, w), poison, a.ty)
    v64 = av.astype(np.uint64)
    if op == "ctpop":
        return VVal(_popcount64(v64).astype(dt), poison, a.ty)
    if op == "cttz":
        return VVal(_cttz64(v64, w).astype(dt), poison, a.ty)
    if op == "ctlz":
        return VVal(_ctlz64(v64, w).astype(dt), poison, a.ty)
    raise UnsupportedConstruct(f"integer unop {op}")


# ---------------------------------------------------------------------------
# Float instruction kernels


def _fcmp_vec(pred: str, fa, fb):
    with np.errstate(all="ignore"):
        unordered = np.isnan(fa) | np.isnan(fb)
        if pred == "ord":
            return ~unordered
        if pred == "uno":
            return unordered
        base = pred[1:]
        cmp = {
            "eq": fa == fb, "ne": fa != fb,
            "lt": fa < fb, "le": fa <= fb, "gt": fa > fb, "ge": fa >= fb,
        }[base]
    if pred.startswith("o"):
        return cmp & ~unordered
    return cmp | unordered


def _float_flag_poison(flags, poison, *arrs):
    for f in arrs:
        if "nnan" in flags:
            poison = _por(poison, np.isnan(f))
        if "ninf" in flags:
            poison = _por(poison, np.isinf(f))
    return poison


def _float_binop_vec(op: str, flags, a: VVal, b: VVal) -> VVal:
    poison = _por(a.poison, b.poison)
    poison = _float_flag_poison(flags, poison, a.data, b.data)
    with np.errstate(all="ignore"):
        if op == "fadd":
            r = a.data + b.data
        elif op == "fsub":
            r = a.data - b.data
        elif op == "fmul":
            r = a.data * b.data
        elif op == "fdiv":
            r = a.data / b.data
        else:
            raise UnsupportedConstruct(f"float binop {op}")
    poison = _float_flag_poison(flags, poison, r)
    return VVal(r, poison, a.ty)


# ---------------------------------------------------------------------------
# Function evaluation


def lit_vval(lit: Literal) -> VVal:
    if isinstance(lit.ty, IntType):
        return VVal(udtype(lit.ty.width)(to_unsigned(lit.value, lit.ty.width)),
                    None, lit.ty)
    if isinstance(lit.ty, FloatType):
        return VVal(semantics.bits_to_float(lit.value, lit.ty.bits), None, lit.ty)
    raise UnsupportedConstruct("literal with unresolved width")


def _operand_vval(fn: Function, opnd, params: dict, locals_: list,
                  consts: dict) -> VVal:
    if isinstance(opnd, Param):
        return params[opnd.name]
    if isinstance(opnd, Local):
        return locals_[opnd.index]
    if isinstance(opnd, Literal):
        return lit_vval(opnd)
    if isinstance(opnd, SymConst):
        data, ty = consts[opnd.name]
        return VVal(data, None, ty)
    raise UnsupportedConstruct(f"operand {opnd!r}")


def eval_instr_vec(instr: Instr, args: list) -> VVal:
    op = instr.op
    if op == "select":
        cond, t, f = args
        taken = cond.data != 0
        data = np.where(taken, t.data, f.data)
        arm_p = None
        if t.poison is not None or f.poison is not None:
            tp = t.poison if t.poison is not None else np.zeros(1, bool)
            fp = f.poison if f.poison is not None else np.zeros(1, bool)
            arm_p = np.where(taken, tp, fp)
        return VVal(data, _por(cond.poison, arm_p), instr.ty)
    if op == "icmp":
        a, b = args
        w = a.width
        if instr.pred in ("eq", "ne"):
            r = a.data == b.data if instr.pred == "eq" else a.data != b.data
        elif instr.pred[0] == "u":
            r = _ucmp(instr.pred[1:], a.data, b.data)
        else:
            r = _ucmp(instr.pred[1:], _signed(a.data, w), _signed(b.data, w))
        return VVal(r.astype(np.uint8), _por(a.poison, b.poison), instr.ty)
    if op == "fcmp":
        a, b = args
        poison = _por(a.poison, b.poison)
        poison = _float_flag_poison(instr.flags, poison, a.data, b.data)
        r = _fcmp_vec(instr.pred, a.data, b.data)
        return VVal(r.astype(np.uint8), poison, instr.ty)
    if op in CAST_OPS:
        (a,) = args
        dst = instr.ty.width
        dt = udtype(dst)
        poison = a.poison
        if op == "zext":
            if "nneg" in instr.flags:
                poison = _por(poison, _signed(a.data, a.width) < 0)
            return VVal(np.asarray(a.data, dtype=udtype(a.width)).astype(dt), poison, instr.ty)
        if op == "sext":
            return VVal(_wrap(_signed(a.data, a.width).astype(_SINT[storage_bits(dst)]),
                              dst), poison, instr.ty)
        return VVal(_wrap(np.asarray(a.data), dst), poison, instr.ty)
    if op == "fneg":
        (a,) = args
        poison = _float_flag_poison(instr.flags, a.poison, a.data)
        return VVal(-np.asarray(a.data), poison, a.ty)
    if op in ("fadd", "fsub", "fmul", "fdiv"):
        return _float_binop_vec(op, instr.flags, args[0], args[1])
    if len(args) == 2:
        return _int_binop_vec(op, instr.flags, args[0], args[1])
    return _int_unop_vec(op, instr.flags, args[0])


def _ucmp(base: str, a, b):
    return {"lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b}[base]


def eval_function_vec(fn: Function, params: dict, consts: dict) -> VVal:
    """Evaluate `fn` over numpy-valued parameters and constant bindings.

    `params` maps parameter names to VVal; `consts` maps symbolic constant
    names to (data array, Type).  All arrays must be mutually broadcastable.
    """
    locals_: list = []
    for instr in fn.body:
        args = [_operand_vval(fn, o, params, locals_, consts) for o in instr.operands]
        locals_.append(eval_instr_vec(instr, args))
    return _operand_vval(fn, fn.ret, params, locals_, consts)


def values_equal_vec(a: VVal, b: VVal):
    if isinstance(a.ty, FloatType):
        fa, fb = np.asarray(a.data), np.asarray(b.data)
        pa = fa.view(_FUINT[a.ty.bits])
        pb = fb.view(_FUINT[b.ty.bits])
        return (pa == pb) | (np.isnan(fa) & np.isnan(fb))
    return np.asarray(a.data) == np.asarray(b.data)


# ---------------------------------------------------------------------------
# Constant-expression and predicate evaluation (vectorized)


@dataclass
class CVal:
    """Const-expr value: integer patterns with a width, floats, or
    width-polymorphic Python ints; `ok` masks lanes outside partial-op
    domains."""

    data: object  # ndarray | int | float
    width: Optional[int]  # None for poly ints and floats
    prec: Optional[int]
    ok: Optional[np.ndarray]

    @property
    def is_float(self) -> bool:
        return self.prec is not None


def _poly(v) -> CVal:
    return CVal(v, None, None, None)


def _ok_and(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a & b


def _as_width(v: CVal, width: int):
    """Patterns of `v` at `width` (poly ints wrapped)."""
    if isinstance(v.data, (int, np.integer)) and v.width is None:
        return udtype(width)(to_unsigned(int(v.data), width))
    return np.asarray(v.data)


def eval_constexpr_vec(e, consts: dict, params: Optional[dict] = None) -> CVal:
    params = params or {}

    def ev(e) -> CVal:
        if isinstance(e, CInt):
            return _poly(e.value)
        if isinstance(e, CFloat):
            return CVal(float(e.value), None, None, None)
        if isinstance(e, CConst):
            data, ty = consts[e.name]
            if isinstance(ty, FloatType):
                return CVal(data, None, ty.bits, None)
            return CVal(data, ty.width, None, None)
        if isinstance(e, CRef):
            v = params[e.name]
            ok = None if v.poison is None else ~v.poison
            if isinstance(v.ty, FloatType):
                return CVal(v.data, None, v.ty.bits, ok)
            return CVal(v.data, v.ty.width, None, ok)
        if isinstance(e, CUn):
            a = ev(e.a)
            if a.is_float or isinstance(a.data, float):
                if e.op == "neg":
                    return CVal(-np.asarray(a.data) if a.is_float else -a.data,
                                a.width, a.prec, a.ok)
                raise UnsupportedConstruct(f"{e.op} on float constant")
            if a.width is None:
                # poly scalar: reuse the scalar evaluator's semantics
                try:
                    r = semantics.eval_constexpr(CUn(e.op, CInt(int(a.data))), {}, {})
                except semantics.ConstEvalError:
                    return CVal(0, None, None, np.zeros(1, bool))
                return _poly(int(r))
            w = a.width
            av = np.asarray(a.data)
            if e.op == "neg":
                return CVal(_wrap((~av.astype(udtype(w))) + udtype(w)(1), w), w, None, a.ok)
            v64 = av.astype(np.uint64)
            if e.op == "popcount":
                return CVal(_popcount64(v64).astype(udtype(w)), w, None, a.ok)
            if e.op == "cttz":
                return CVal(_cttz64(v64, w).astype(udtype(w)), w, None, a.ok)
            if e.op == "ctlz":
                return CVal(_ctlz64(v64, w).astype(udtype(w)), w, None, a.ok)
            if e.op == "log2":
                ispow = (v64 != 0) & ((v64 & (v64 - np.uint64(1))) == 0)
                lg = _cttz64(v64, w).astype(udtype(w))
                return CVal(lg, w, None, _ok_and(a.ok, ispow))
            raise UnsupportedConstruct(f"constant operator {e.op}")
        if isinstance(e, CCast):
            a = ev(e.a)
            if a.is_float:
                raise UnsupportedConstruct("integer cast of float constant")
            w = e.width
            if not isinstance(w, int):
                raise UnsupportedConstruct(f"unresolved width variable {w}")
            if a.width is None:
                return CVal(udtype(w)(to_unsigned(int(a.data), w)), w, None, a.ok)
            av = np.asarray(a.data)
            if e.kind == "sext":
                return CVal(_wrap(_signed(av, a.width).astype(_SINT[storage_bits(w)]), w),
                            w, None, a.ok)
            return CVal(_wrap(av, w), w, None, a.ok)
        if isinstance(e, CBin):
            a, b = ev(e.a), ev(e.b)
            ok = _ok_and(a.ok, b.ok)
            if a.is_float or b.is_float or isinstance(a.data, float) or isinstance(b.data, float):
                return _cbin_float_vec(e.op, a, b, ok)
            if a.width is not None and b.width is not None and a.width != b.width:
                raise UnsupportedConstruct(
                    f"width mismatch i{a.width} vs i{b.width} in constant expression")
            w = a.width if a.width is not None else b.width
            if w is None:
                try:
                    r = semantics.eval_constexpr(
                        CBin(e.op, CInt(int(a.data)), CInt(int(b.data))), {}, {})
                except semantics.ConstEvalError:
                    return CVal(0, None, None, np.zeros(1, bool))
                return CVal(int(r), None, None, ok)
            av, bv = _as_width(a, w), _as_width(b, w)
            return _cbin_int_vec(e.op, av, bv, w, ok)
        raise UnsupportedConstruct(f"constant expression {e!r}")

    return ev(e)


def _cbin_int_vec(op: str, av, bv, w: int, ok) -> CVal:
    dt = udtype(w)
    av = np.asarray(av, dtype=dt)
    bv = np.asarray(bv, dtype=dt)
    if op == "+":
        return CVal(_wrap(av + bv, w), w, None, ok)
    if op == "-":
        return CVal(_wrap(av - bv, w), w, None, ok)
    if op == "*":
        return CVal(_wrap(av * bv, w), w, None, ok)
    if op == "/":
        zero = bv == 0
        safe = np.where(zero, dt(1), bv)
        return CVal(av // safe, w, None, _ok_and(ok, ~zero))
    if op == "&":
        return CVal(av & bv, w, None, ok)
    if op == "|":
        return CVal(av | bv, w, None, ok)
    if op == "^":
        return CVal(av ^ bv, w, None, ok)
    if op in ("<<", ">>u", ">>s"):
        big = bv >= dt(w)
        amt = np.where(big, dt(0), bv)
        if op == "<<":
            r = _wrap(av << amt, w)
            return CVal(r, w, None, _ok_and(ok, ~big))
        if op == ">>u":
            return CVal(av >> amt, w, None, _ok_and(ok, ~big))
        r = _wrap(_signed(av, w) >> _signed(amt, w), w)
        return CVal(r, w, None, _ok_and(ok, ~big))
    raise UnsupportedConstruct(f"constant operator {op}")


def _cbin_float_vec(op: str, a: CVal, b: CVal, ok) -> CVal:
    prec = a.prec if a.prec is not None else (b.prec if b.prec is not None else 64)
    dt = _FLOAT[prec]
    fa = np.asarray(a.data, dtype=dt) if not a.is_float else np.asarray(a.data)
    fb = np.asarray(b.data, dtype=dt) if not b.is_float else np.asarray(b.data)
    with np.errstate(all="ignore"):
        if op == "+":
            r = fa + fb
        elif op == "-":
            r = fa - fb
        elif op == "*":
            r = fa * fb
        elif op == "/":
            r = fa / fb
        else:
            raise UnsupportedConstruct(f"operator {op} on float constants")
    return CVal(r, None, prec, ok)


def _interp_vec(v: CVal, signed: bool):
    if v.is_float:
        return np.asarray(v.data)
    if v.width is None:
        return int(v.data)
    data = np.asarray(v.data)
    if signed:
        return _signed(data, v.width).astype(np.int64)
    return data.astype(np.uint64)


def _cmp_vec(pred: str, a: CVal, b: CVal, shape):
    # ult/ule/ugt/uge name both an integer and a float predicate; the
    # operands decide which one is meant
    if pred in _FCMP_PREDS and (pred not in _ICMP_PREDS
                                or a.is_float or b.is_float):
        prec = a.prec if a.prec is not None else (b.prec if b.prec is not None else 64)
        dt = _FLOAT[prec]
        fa = np.asarray(a.data) if a.is_float else np.asarray(a.data, dtype=dt)
        fb = np.asarray(b.data) if b.is_float else np.asarray(b.data, dtype=dt)
        return _fcmp_vec(pred, fa, fb)
    if pred in ("eq", "ne"):
        if (a.width is not None and b.width is not None and a.width == b.width):
            r = np.asarray(a.data) == np.asarray(b.data)
        else:
            r = _num_cmp("eq", a, b, False) | _num_cmp("eq", a, b, True)
        return r if pred == "eq" else ~np.asarray(r, dtype=bool)
    signed = pred[0] == "s"
    return _num_cmp(pred[1:], a, b, signed)


def _num_cmp(base: str, a: CVal, b: CVal, signed: bool):
    av, bv = _interp_vec(a, signed), _interp_vec(b, signed)
    # mixed-sign compares against python ints are resolved without promotion
    for x, y, flip in ((av, bv, False), (bv, av, True)):
        if isinstance(y, int) and not isinstance(x, int):
            if x.dtype == np.uint64 and y < 0:
                const = {"eq": False, "lt": False, "le": False,
                         "gt": True, "ge": True}[base if not flip else _flip(base)]
                return np.full(np.shape(x), const, dtype=bool)
            if x.dtype == np.uint64 and y > mask(64):
                const = {"eq": False, "lt": True, "le": True,
                         "gt": False, "ge": False}[base if not flip else _flip(base)]
                return np.full(np.shape(x), const, dtype=bool)
    with np.errstate(all="ignore"):
        return {"eq": av == bv, "lt": av < bv, "le": av <= bv,
                "gt": av > bv, "ge": av >= bv}[base]


def _flip(base: str) -> str:
    return {"eq": "eq", "lt": "gt", "le": "ge", "gt": "lt", "ge": "le"}[base]


def eval_pred_vec(p, params: dict, consts: dict):
    """Boolean ndarray for predicate `p`; lanes with out-of-domain constant
    arithmetic or poison-bound value references are false."""
    if isinstance(p, (tuple, list)):
        r = np.asarray(True)
        for c in p:
            r = r & eval_pred_vec(c, params, consts)
        return r
    if isinstance(p, PTrue):
        return np.asarray(True)
    if isinstance(p, PNot):
        return ~np.asarray(eval_pred_vec(p.a, params, consts), dtype=bool)
    if isinstance(p, POr):
        return eval_pred_vec(p.a, params, consts) | eval_pred_vec(p.b, params, consts)
    if isinstance(p, PAnd):
        return eval_pred_vec(p.a, params, consts) & eval_pred_vec(p.b, params, consts)

    def ref_cval(name: str) -> CVal:
        v = params[name]
        ok = None if v.poison is None else ~v.poison
        if isinstance(v.ty, FloatType):
            return CVal(v.data, None, v.ty.bits, ok)
        return CVal(v.data, v.ty.width, None, ok)

    if isinstance(p, PCmp):
        a = eval_constexpr_vec(p.a, consts, params)
        b = eval_constexpr_vec(p.b, consts, params)
        r = _cmp_vec(p.pred, a, b, None)
        return _apply_ok(r, a.ok, b.ok)
    if isinstance(p, PPow2):
        a = eval_constexpr_vec(p.e, consts, params)
        if a.is_float:
            raise UnsupportedConstruct("PowerOfTwo on float")
        if a.width is None:
            v = int(a.data)
            return np.asarray(v > 0 and v & (v - 1) == 0)
        v64 = np.asarray(a.data).astype(np.uint64)
        r = (v64 != 0) & ((v64 & (v64 - np.uint64(1))) == 0)
        return _apply_ok(r, a.ok)
    if isinstance(p, PKnownBits):
        v = ref_cval(p.ref)
        z = eval_constexpr_vec(p.zeros, consts, params)
        o = eval_constexpr_vec(p.ones, consts, params)
        vd = np.asarray(v.data).astype(np.uint64)
        zd = np.asarray(_as_width(z, v.width)).astype(np.uint64)
        od = np.asarray(_as_width(o, v.width)).astype(np.uint64)
        r = ((vd & zd) == 0) & ((vd & od) == od)
        return _apply_ok(r, v.ok, z.ok, o.ok)
    if isinstance(p, PRange):
        v = ref_cval(p.ref)
        lo = eval_constexpr_vec(p.lo, consts, params)
        hi = eval_constexpr_vec(p.hi, consts, params)
        r = _num_cmp("le", lo, v, p.signed) & _num_cmp("le", v, hi, p.signed)
        return _apply_ok(r, v.ok, lo.ok, hi.ok)
    if isinstance(p, PLowBitsZero):
        v = ref_cval(p.ref)
        k = eval_constexpr_vec(p.k, consts, params)
        kv = _interp_vec(k, False)
        kv = np.minimum(np.asarray(kv, dtype=np.uint64), np.uint64(v.width))
        m = np.where(kv >= 64, np.uint64(mask(64)),
                     (np.uint64(1) << kv) - np.uint64(1))
        r = (np.asarray(v.data).astype(np.uint64) & m) == 0
        return _apply_ok(r, v.ok, k.ok)
    raise UnsupportedConstruct(f"predicate {p!r}")


def _apply_ok(r, *oks):
    r = np.asarray(r, dtype=bool)
    for ok in oks:
        if ok is not None:
            r = r & ok
    return r


# ---------------------------------------------------------------------------
# Constant-space handling


def split_const_defs(rule: Rule):
    """Partition symbolic constants into free ones and derived ones.

    A conjunct `C == expr` (either side) whose expression mentions only
    earlier-known constants defines C; derived constants are computed
    instead of enumerated, which shrinks the search space.  The defining
    conjuncts are still checked like any other.
    """
    from .ir import pred_const_names

    all_names = {name for name, _ in rule.sym_consts}
    candidates: dict = {}  # name -> expr, first defining conjunct wins
    for conj in rule.pre:
        if not isinstance(conj, PCmp) or conj.pred != "eq" or pred_param_refs(conj):
            continue
        for tgt, other in ((conj.a, conj.b), (conj.b, conj.a)):
            if isinstance(tgt, CConst) and tgt.name not in candidates:
                used = pred_const_names(PCmp("eq", other, other))
                if tgt.name not in used:
                    candidates[tgt.name] = other
                    break
    # consts with no candidate definition are enumerated; candidates whose
    # expression depends only on available consts become derived, iteratively
    available = all_names - set(candidates)
    defs: list = []
    progress = True
    while progress:
        progress = False
        for name, expr in list(candidates.items()):
            used = pred_const_names(PCmp("eq", expr, expr))
            if used <= available:
                defs.append((name, expr))
                available.add(name)
                del candidates[name]
                progress = True
    derived_names = {n for n, _ in defs}
    free = [(n, t) for n, t in rule.sym_consts if n not in derived_names]
    return free, defs


# ---------------------------------------------------------------------------
# Grids, special values and sampling


def unravel_chunk(sizes: list, start: int, end: int) -> list:
    """Arrays of mixed-radix digits for flat indices [start, end)."""
    idx = np.arange(start, end, dtype=np.uint64)
    out = []
    for size in reversed(sizes):
        out.append(idx % np.uint64(size))
        idx = idx // np.uint64(size)
    out.reverse()
    return out


def special_int_patterns(width: int) -> np.ndarray:
    m = mask(width)
    vals = {0, 1, m, 2 & m, 1 << (width - 1), m >> 1}
    for k in range(width):
        vals.add(1 << k)
        vals.add((1 << k) - 1)
    return np.array(sorted(vals), dtype=udtype(width))


def special_float_patterns(prec: int) -> np.ndarray:
    f = semantics.float_to_bits
    pats = {
        f(0.0, prec), f(-0.0, prec), f(1.0, prec), f(-1.0, prec),
        f(float("inf"), prec), f(float("-inf"), prec),
        semantics.CANONICAL_NAN[prec], 1,  # smallest subnormal
        f(0.5, prec),
    }
    # largest finite value
    exp_bits = {16: 5, 32: 8, 64: 11}[prec]
    frac_bits = prec - 1 - exp_bits
    pats.add(((1 << exp_bits) - 2) << frac_bits | mask(frac_bits))
    return np.array(sorted(pats), dtype=_FUINT[prec])


def sample_int_patterns(rng: np.random.Generator, width: int, n: int) -> np.ndarray:
    """Mixture: uniform bits, geometric bit-length, and special values."""
    lo = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    hi = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    uniform = ((hi << np.uint64(32)) | lo) & np.uint64(mask(width))
    blen = rng.integers(1, width + 1, size=n, dtype=np.uint64)
    bmask = np.where(blen >= 64, np.uint64(mask(64)),
                     (np.uint64(1) << blen) - np.uint64(1))
    short = uniform & bmask
    specials = special_int_patterns(width).astype(np.uint64)
    spec = specials[rng.integers(0, len(specials), size=n)]
    branch = rng.integers(0, 3, size=n)
    out = np.where(branch == 0, uniform, np.where(branch == 1, short, spec))
    return out.astype(udtype(width))


def sample_float_patterns(rng: np.random.Generator, prec: int, n: int) -> np.ndarray:
    lo = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    hi = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    uniform = ((hi << np.uint64(32)) | lo) & np.uint64(mask(prec))
    specials = special_float_patterns(prec).astype(np.uint64)
    spec = specials[rng.integers(0, len(specials), size=n)]
    branch = rng.integers(0, 3, size=n)
    out = np.where(branch < 2, uniform, spec)
    return out.astype(_FUINT[prec])


def patterns_to_vval(patterns: np.ndarray, ty) -> VVal:
    if isinstance(ty, FloatType):
        return VVal(np.asarray(patterns, dtype=_FUINT[ty.bits]).view(_FLOAT[ty.bits]),
                    None, ty)
    return VVal(np.asarray(patterns, dtype=udtype(ty.width)), None, ty)


def vval_pattern_at(v: VVal, index) -> int:
    data = np.asarray(v.data)
    x = data.reshape(-1)[index] if data.ndim else data[()]
    if isinstance(v.ty, FloatType):
        return int(np.asarray(x).view(_FUINT[v.ty.bits]))
    return int(x)
