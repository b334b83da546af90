"""Core IR: types, operands, instructions, functions, predicates and rules.

Everything here is an immutable value; the rest of the package builds on
these types.  A rewrite rule is the triple (pre, lhs, rhs) together with its
declared symbolic constants and width variables; a concrete instance is just
a rule with no symbols left.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

MAX_INT_WIDTH = 64
FLOAT_PRECISIONS = (16, 32, 64)


class PeepError(Exception):
    """Base class for errors raised by this package."""


class SubstituteError(PeepError):
    pass


class PreconditionUnsatisfied(SubstituteError):
    """Raised by substitute() when a binding falsifies a precondition."""


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class IntType:
    width: int

    def __str__(self) -> str:
        return f"i{self.width}"


@dataclass(frozen=True)
class FloatType:
    bits: int  # 16, 32 or 64

    def __str__(self) -> str:
        return f"f{self.bits}"


@dataclass(frozen=True)
class VarWidthType:
    """Integer type whose width is a declared width variable."""

    var: str

    def __str__(self) -> str:
        return f"i{self.var}"


Type = Union[IntType, FloatType, VarWidthType]

I1 = IntType(1)


def is_int_like(ty: Type) -> bool:
    return isinstance(ty, (IntType, VarWidthType))


def mask(width: int) -> int:
    return (1 << width) - 1


def to_signed(pattern: int, width: int) -> int:
    pattern &= mask(width)
    if pattern >= 1 << (width - 1):
        return pattern - (1 << width)
    return pattern


def to_unsigned(value: int, width: int) -> int:
    return value & mask(width)


def literal_fits(value: int, width: int) -> bool:
    """True when `value` (as written, possibly negative) is encodable at `width`."""
    return -(1 << (width - 1)) <= value < (1 << width)


# ---------------------------------------------------------------------------
# Operands


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Local:
    index: int


@dataclass(frozen=True)
class Literal:
    """A constant operand.

    For concrete integer types `value` is the two's-complement bit pattern
    (0 <= value < 2^width).  For var-width types only the trivial literals
    are allowed and `value` is stored as written (0, 1 or -1).  For float
    types `value` is the IEEE-754 bit pattern.
    """

    value: int
    ty: Type


@dataclass(frozen=True)
class SymConst:
    name: str
    ty: Type


Operand = Union[Param, Local, Literal, SymConst]


# ---------------------------------------------------------------------------
# Instructions

ICMP_PREDS = ("eq", "ne", "ult", "ule", "slt", "sle", "ugt", "uge", "sgt", "sge")
FCMP_PREDS = (
    "oeq", "one", "olt", "ole", "ogt", "oge", "ord", "uno",
    "ueq", "une", "ult", "ule", "ugt", "uge",
)

INT_BINOPS = (
    "add", "sub", "mul", "udiv", "sdiv", "urem", "srem",
    "and", "or", "xor", "shl", "lshr", "ashr",
    "smin", "smax", "umin", "umax",
)
INT_UNOPS = ("neg", "not", "ctpop", "cttz", "ctlz")
CAST_OPS = ("zext", "sext", "trunc")
FLOAT_BINOPS = ("fadd", "fsub", "fmul", "fdiv")
FLOAT_UNOPS = ("fneg",)

OPCODES = INT_BINOPS + INT_UNOPS + CAST_OPS + FLOAT_BINOPS + FLOAT_UNOPS + (
    "icmp", "fcmp", "select",
)

COMMUTATIVE_OPS = ("add", "mul", "and", "or", "xor", "umin", "umax",
                   "smin", "smax", "fadd", "fmul")

FLOAT_FLAGS = frozenset({"nnan", "ninf", "nsz"})

LEGAL_FLAGS = {
    "add": frozenset({"nsw", "nuw"}),
    "sub": frozenset({"nsw", "nuw"}),
    "mul": frozenset({"nsw", "nuw"}),
    "shl": frozenset({"nsw", "nuw"}),
    "neg": frozenset({"nsw", "nuw"}),
    "udiv": frozenset({"exact"}),
    "sdiv": frozenset({"exact"}),
    "lshr": frozenset({"exact"}),
    "ashr": frozenset({"exact"}),
    "zext": frozenset({"nneg"}),
    "fadd": FLOAT_FLAGS,
    "fsub": FLOAT_FLAGS,
    "fmul": FLOAT_FLAGS,
    "fdiv": FLOAT_FLAGS,
    "fneg": FLOAT_FLAGS,
    "fcmp": FLOAT_FLAGS,
}


def opcode_arity(op: str) -> int:
    if op == "select":
        return 3
    if op in INT_BINOPS or op in FLOAT_BINOPS or op in ("icmp", "fcmp"):
        return 2
    return 1


@dataclass(frozen=True)
class Instr:
    op: str
    operands: tuple
    ty: Type  # result type
    flags: frozenset = frozenset()
    pred: Optional[str] = None  # icmp/fcmp predicate


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple  # of (name, Type)
    body: tuple  # of Instr
    ret: Operand

    def param_type(self, name: str) -> Optional[Type]:
        for pname, ty in self.params:
            if pname == name:
                return ty
        return None

    def operand_type(self, opnd: Operand) -> Optional[Type]:
        if isinstance(opnd, Param):
            return self.param_type(opnd.name)
        if isinstance(opnd, Local):
            if 0 <= opnd.index < len(self.body):
                return self.body[opnd.index].ty
            return None
        if isinstance(opnd, (Literal, SymConst)):
            return opnd.ty
        return None


# ---------------------------------------------------------------------------
# Constant expressions (the precondition term language)


@dataclass(frozen=True)
class CConst:
    name: str


@dataclass(frozen=True)
class CRef:
    """Reference to an lhs/rhs parameter, usable only inside predicates."""

    name: str


@dataclass(frozen=True)
class CInt:
    value: int


@dataclass(frozen=True)
class CFloat:
    value: float


@dataclass(frozen=True)
class CWidth:
    name: str


CBIN_OPS = ("+", "-", "*", "/", "&", "|", "^", "<<", ">>u", ">>s")
CUN_OPS = ("neg", "popcount", "cttz", "ctlz", "log2")


@dataclass(frozen=True)
class CBin:
    op: str
    a: "ConstExpr"
    b: "ConstExpr"


@dataclass(frozen=True)
class CUn:
    op: str
    a: "ConstExpr"


@dataclass(frozen=True)
class CCast:
    kind: str  # zext | sext | trunc
    a: "ConstExpr"
    width: Union[int, str]  # concrete width or width-var name


ConstExpr = Union[CConst, CRef, CInt, CFloat, CWidth, CBin, CUn, CCast]


# ---------------------------------------------------------------------------
# Predicates


@dataclass(frozen=True)
class PTrue:
    pass


# eq/ne and the signed/unsigned orders for integers; o*/u* preds for floats.
@dataclass(frozen=True)
class PCmp:
    pred: str
    a: ConstExpr
    b: ConstExpr


@dataclass(frozen=True)
class PPow2:
    e: ConstExpr


@dataclass(frozen=True)
class PKnownBits:
    ref: str
    zeros: ConstExpr
    ones: ConstExpr


@dataclass(frozen=True)
class PRange:
    ref: str
    lo: ConstExpr
    hi: ConstExpr
    signed: bool


@dataclass(frozen=True)
class PLowBitsZero:
    ref: str
    k: ConstExpr


@dataclass(frozen=True)
class PNot:
    a: "Predicate"


@dataclass(frozen=True)
class POr:
    a: "Predicate"
    b: "Predicate"


@dataclass(frozen=True)
class PAnd:
    a: "Predicate"
    b: "Predicate"


Predicate = Union[PTrue, PCmp, PPow2, PKnownBits, PRange, PLowBitsZero,
                  PNot, POr, PAnd]

PCMP_INT_PREDS = ("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")


def pred_const_names(p: Predicate) -> set:
    names: set = set()

    def walk_e(e: ConstExpr) -> None:
        if isinstance(e, CConst):
            names.add(e.name)
        elif isinstance(e, CBin):
            walk_e(e.a)
            walk_e(e.b)
        elif isinstance(e, CUn):
            walk_e(e.a)
        elif isinstance(e, CCast):
            walk_e(e.a)

    for e in pred_exprs(p):
        walk_e(e)
    return names


def pred_param_refs(p: Predicate) -> set:
    refs: set = set()

    def walk_e(e: ConstExpr) -> None:
        if isinstance(e, CRef):
            refs.add(e.name)
        elif isinstance(e, CBin):
            walk_e(e.a)
            walk_e(e.b)
        elif isinstance(e, CUn):
            walk_e(e.a)
        elif isinstance(e, CCast):
            walk_e(e.a)

    if isinstance(p, (PKnownBits, PRange, PLowBitsZero)):
        refs.add(p.ref)
    for e in pred_exprs(p):
        walk_e(e)
    return refs


def pred_exprs(p: Predicate) -> Iterable[ConstExpr]:
    if isinstance(p, PCmp):
        return (p.a, p.b)
    if isinstance(p, PPow2):
        return (p.e,)
    if isinstance(p, PKnownBits):
        return (p.zeros, p.ones)
    if isinstance(p, PRange):
        return (p.lo, p.hi)
    if isinstance(p, PLowBitsZero):
        return (p.k,)
    if isinstance(p, PNot):
        return pred_exprs(p.a)
    if isinstance(p, (POr, PAnd)):
        return tuple(pred_exprs(p.a)) + tuple(pred_exprs(p.b))
    return ()


def pred_width_vars(p: Predicate) -> set:
    names: set = set()

    def walk_e(e: ConstExpr) -> None:
        if isinstance(e, CWidth):
            names.add(e.name)
        elif isinstance(e, CBin):
            walk_e(e.a)
            walk_e(e.b)
        elif isinstance(e, CUn):
            walk_e(e.a)
        elif isinstance(e, CCast):
            walk_e(e.a)
            if isinstance(e.width, str):
                names.add(e.width)

    for e in pred_exprs(p):
        walk_e(e)
    return names


# ---------------------------------------------------------------------------
# Rules


@dataclass(frozen=True)
class Rule:
    name: str
    sym_consts: tuple  # of (name, Type)
    width_vars: tuple  # of str
    pre: tuple  # conjunct list; empty means True
    lhs: Function
    rhs: Function

    @property
    def is_instance(self) -> bool:
        return not self.sym_consts and not self.width_vars and not self.pre

    def sym_const_type(self, name: str) -> Optional[Type]:
        for cname, ty in self.sym_consts:
            if cname == name:
                return ty
        return None

    def conjuncts(self) -> tuple:
        return self.pre


@dataclass(frozen=True)
class Diag:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


# ---------------------------------------------------------------------------
# Validation


def _check_type(ty: Type, path: str, width_vars: set, diags: list) -> None:
    if isinstance(ty, IntType):
        if not 1 <= ty.width <= MAX_INT_WIDTH:
            diags.append(Diag(path, f"integer width {ty.width} out of range"))
    elif isinstance(ty, FloatType):
        if ty.bits not in FLOAT_PRECISIONS:
            diags.append(Diag(path, f"unknown float precision f{ty.bits}"))
    elif isinstance(ty, VarWidthType):
        if ty.var not in width_vars:
            diags.append(Diag(path, f"undeclared width variable {ty.var}"))


def _check_operand(fn: Function, opnd: Operand, idx: int, path: str,
                   rule: Optional[Rule], diags: list) -> None:
    if isinstance(opnd, Param):
        if fn.param_type(opnd.name) is None:
            diags.append(Diag(path, f"unknown parameter %{opnd.name}"))
    elif isinstance(opnd, Local):
        if not 0 <= opnd.index < idx:
            diags.append(Diag(path, f"local %{opnd.index} does not dominate use"))
    elif isinstance(opnd, Literal):
        if isinstance(opnd.ty, IntType):
            if not 0 <= opnd.value < (1 << opnd.ty.width):
                diags.append(Diag(path, f"literal {opnd.value} does not fit {opnd.ty}"))
        elif isinstance(opnd.ty, VarWidthType):
            if opnd.value not in (0, 1, -1):
                diags.append(Diag(path, "var-width literal must be 0, 1 or -1"))
    elif isinstance(opnd, SymConst):
        if rule is None or rule.sym_const_type(opnd.name) is None:
            diags.append(Diag(path, f"undeclared symbolic constant {opnd.name}"))
        elif rule.sym_const_type(opnd.name) != opnd.ty:
            diags.append(Diag(path, f"symbolic constant {opnd.name} type mismatch"))


def _types_equal_or_symbolic(a: Type, b: Type) -> bool:
    return a == b


def _check_instr(fn: Function, instr: Instr, idx: int, path: str,
                 width_vars: set, rule: Optional[Rule], diags: list) -> None:
    op = instr.op
    if op not in OPCODES:
        diags.append(Diag(path, f"unknown opcode {op}"))
        return
    if len(instr.operands) != opcode_arity(op):
        diags.append(Diag(path, f"arity: {op} takes {opcode_arity(op)} operands"))
        return
    _check_type(instr.ty, path, width_vars, diags)
    for i, opnd in enumerate(instr.operands):
        _check_operand(fn, opnd, idx, f"{path}.operand[{i}]", rule, diags)
    for flag in instr.flags:
        if flag not in LEGAL_FLAGS.get(op, frozenset()):
            diags.append(Diag(path, f"flag {flag} not legal on {op}"))
    if op == "icmp":
        if instr.pred not in ICMP_PREDS:
            diags.append(Diag(path, f"bad icmp predicate {instr.pred}"))
        if instr.ty != I1:
            diags.append(Diag(path, "icmp result must be i1"))
    elif op == "fcmp":
        if instr.pred not in FCMP_PREDS:
            diags.append(Diag(path, f"bad fcmp predicate {instr.pred}"))
        if instr.ty != I1:
            diags.append(Diag(path, "fcmp result must be i1"))
    elif instr.pred is not None:
        diags.append(Diag(path, f"predicate on non-comparison opcode {op}"))

    otys = [fn.operand_type(o) for o in instr.operands]
    if any(t is None for t in otys):
        return  # already diagnosed above
    if op in INT_BINOPS or op in INT_UNOPS:
        for t in otys:
            if not is_int_like(t):
                diags.append(Diag(path, f"{op} requires integer operands"))
                return
        if any(t != otys[0] for t in otys) or instr.ty != otys[0]:
            diags.append(Diag(path, f"{op} operand/result types must match"))
    elif op in FLOAT_BINOPS or op in FLOAT_UNOPS:
        for t in otys:
            if not isinstance(t, FloatType):
                diags.append(Diag(path, f"{op} requires float operands"))
                return
        if any(t != otys[0] for t in otys) or instr.ty != otys[0]:
            diags.append(Diag(path, f"{op} operand/result types must match"))
    elif op == "icmp":
        if not is_int_like(otys[0]) or otys[0] != otys[1]:
            diags.append(Diag(path, "icmp operands must be same integer type"))
    elif op == "fcmp":
        if not isinstance(otys[0], FloatType) or otys[0] != otys[1]:
            diags.append(Diag(path, "fcmp operands must be same float type"))
    elif op == "select":
        if otys[0] != I1:
            diags.append(Diag(path, "select condition must be i1"))
        if otys[1] != otys[2] or instr.ty != otys[1]:
            diags.append(Diag(path, "select arms/result types must match"))
    elif op in CAST_OPS:
        src, dst = otys[0], instr.ty
        if not is_int_like(src) or not is_int_like(dst):
            diags.append(Diag(path, f"{op} requires integer types"))
        elif isinstance(src, IntType) and isinstance(dst, IntType):
            if op in ("zext", "sext") and dst.width <= src.width:
                diags.append(Diag(path, f"{op} must widen"))
            if op == "trunc" and dst.width >= src.width:
                diags.append(Diag(path, "trunc must narrow"))


def _check_function(fn: Function, path: str, width_vars: set,
                    rule: Optional[Rule], diags: list) -> None:
    seen = set()
    for pname, ty in fn.params:
        if pname in seen:
            diags.append(Diag(f"{path}.params", f"duplicate parameter %{pname}"))
        seen.add(pname)
        _check_type(ty, f"{path}.params.{pname}", width_vars, diags)
    for i, instr in enumerate(fn.body):
        _check_instr(fn, instr, i, f"{path}.body[{i}]", width_vars, rule, diags)
    _check_operand(fn, fn.ret, len(fn.body), f"{path}.ret", rule, diags)


def _check_constexpr(e: ConstExpr, path: str, rule: Rule, params: set,
                     diags: list) -> None:
    if isinstance(e, CConst):
        if rule.sym_const_type(e.name) is None:
            diags.append(Diag(path, f"undeclared symbolic constant {e.name}"))
    elif isinstance(e, CRef):
        if e.name not in params:
            diags.append(Diag(path, f"unknown value reference {e.name}"))
    elif isinstance(e, CWidth):
        if e.name not in rule.width_vars:
            diags.append(Diag(path, f"undeclared width variable {e.name}"))
    elif isinstance(e, CBin):
        if e.op not in CBIN_OPS:
            diags.append(Diag(path, f"bad operator {e.op}"))
        _check_constexpr(e.a, path, rule, params, diags)
        _check_constexpr(e.b, path, rule, params, diags)
    elif isinstance(e, CUn):
        if e.op not in CUN_OPS:
            diags.append(Diag(path, f"bad operator {e.op}"))
        _check_constexpr(e.a, path, rule, params, diags)
    elif isinstance(e, CCast):
        if e.kind not in CAST_OPS:
            diags.append(Diag(path, f"bad cast {e.kind}"))
        if isinstance(e.width, str) and e.width not in rule.width_vars:
            diags.append(Diag(path, f"undeclared width variable {e.width}"))
        _check_constexpr(e.a, path, rule, params, diags)


def _check_predicate(p: Predicate, path: str, rule: Rule, params: set,
                     diags: list) -> None:
    if isinstance(p, PTrue):
        return
    if isinstance(p, (PKnownBits, PRange, PLowBitsZero)):
        if p.ref not in params:
            diags.append(Diag(path, f"unknown value reference {p.ref}"))
    if isinstance(p, PCmp) and p.pred not in PCMP_INT_PREDS + FCMP_PREDS:
        diags.append(Diag(path, f"bad comparison predicate {p.pred}"))
    if isinstance(p, PNot):
        _check_predicate(p.a, path, rule, params, diags)
        return
    if isinstance(p, (POr, PAnd)):
        _check_predicate(p.a, path, rule, params, diags)
        _check_predicate(p.b, path, rule, params, diags)
        return
    for e in pred_exprs(p):
        _check_constexpr(e, path, rule, params, diags)


def validate(rule: Rule) -> list:
    """Structural validation; returns one Diag per violated invariant."""
    diags: list = []
    width_vars = set(rule.width_vars)
    seen = set()
    for name, ty in rule.sym_consts:
        if name in seen:
            diags.append(Diag("sym_consts", f"duplicate symbolic constant {name}"))
        seen.add(name)
        _check_type(ty, f"sym_consts.{name}", width_vars, diags)
    if len(set(rule.width_vars)) != len(rule.width_vars):
        diags.append(Diag("width_vars", "duplicate width variable"))

    _check_function(rule.lhs, "lhs", width_vars, rule, diags)
    _check_function(rule.rhs, "rhs", width_vars, rule, diags)

    if rule.lhs.params != rule.rhs.params:
        diags.append(Diag("rhs.params", "param list mismatch with lhs"))
    lret = rule.lhs.operand_type(rule.lhs.ret)
    rret = rule.rhs.operand_type(rule.rhs.ret)
    if lret is not None and rret is not None and lret != rret:
        diags.append(Diag("rhs.ret", "return type mismatch with lhs"))

    params = {name for name, _ in rule.lhs.params}
    for i, conj in enumerate(rule.pre):
        _check_predicate(conj, f"pre[{i}]", rule, params, diags)
    return diags


# ---------------------------------------------------------------------------
# Width resolution and substitution


def resolve_type(ty: Type, widths: dict) -> Type:
    if isinstance(ty, VarWidthType):
        if ty.var not in widths:
            raise SubstituteError(f"unbound width variable {ty.var}")
        return IntType(widths[ty.var])
    return ty


def _resolve_operand(opnd: Operand, widths: dict) -> Operand:
    if isinstance(opnd, Literal) and isinstance(opnd.ty, VarWidthType):
        ty = resolve_type(opnd.ty, widths)
        return Literal(to_unsigned(opnd.value, ty.width), ty)
    if isinstance(opnd, Literal):
        return opnd
    if isinstance(opnd, SymConst):
        return SymConst(opnd.name, resolve_type(opnd.ty, widths))
    return opnd


def _resolve_constexpr(e: ConstExpr, widths: dict) -> ConstExpr:
    if isinstance(e, CWidth):
        if e.name not in widths:
            raise SubstituteError(f"unbound width variable {e.name}")
        return CInt(widths[e.name])
    if isinstance(e, CBin):
        return CBin(e.op, _resolve_constexpr(e.a, widths), _resolve_constexpr(e.b, widths))
    if isinstance(e, CUn):
        return CUn(e.op, _resolve_constexpr(e.a, widths))
    if isinstance(e, CCast):
        w = e.width
        if isinstance(w, str):
            if w not in widths:
                raise SubstituteError(f"unbound width variable {w}")
            w = widths[w]
        return CCast(e.kind, _resolve_constexpr(e.a, widths), w)
    return e


def _resolve_predicate(p: Predicate, widths: dict) -> Predicate:
    if isinstance(p, PTrue):
        return p
    if isinstance(p, PCmp):
        return PCmp(p.pred, _resolve_constexpr(p.a, widths), _resolve_constexpr(p.b, widths))
    if isinstance(p, PPow2):
        return PPow2(_resolve_constexpr(p.e, widths))
    if isinstance(p, PKnownBits):
        return PKnownBits(p.ref, _resolve_constexpr(p.zeros, widths),
                          _resolve_constexpr(p.ones, widths))
    if isinstance(p, PRange):
        return PRange(p.ref, _resolve_constexpr(p.lo, widths),
                      _resolve_constexpr(p.hi, widths), p.signed)
    if isinstance(p, PLowBitsZero):
        return PLowBitsZero(p.ref, _resolve_constexpr(p.k, widths))
    if isinstance(p, PNot):
        return PNot(_resolve_predicate(p.a, widths))
    if isinstance(p, POr):
        return POr(_resolve_predicate(p.a, widths), _resolve_predicate(p.b, widths))
    if isinstance(p, PAnd):
        return PAnd(_resolve_predicate(p.a, widths), _resolve_predicate(p.b, widths))
    raise SubstituteError(f"unknown predicate {p!r}")


def resolve_function(fn: Function, widths: dict) -> Function:
    params = tuple((n, resolve_type(t, widths)) for n, t in fn.params)
    body = tuple(
        Instr(i.op, tuple(_resolve_operand(o, widths) for o in i.operands),
              resolve_type(i.ty, widths), i.flags, i.pred)
        for i in fn.body
    )
    return Function(fn.name, params, body, _resolve_operand(fn.ret, widths))


def resolve_widths(rule: Rule, widths: dict) -> Rule:
    """Instantiate all width variables, leaving symbolic constants in place."""
    for w in rule.width_vars:
        if w not in widths:
            raise SubstituteError(f"unbound width variable {w}")
    sym_consts = tuple((n, resolve_type(t, widths)) for n, t in rule.sym_consts)
    pre = tuple(_resolve_predicate(c, widths) for c in rule.pre)
    return Rule(rule.name, sym_consts, (), pre,
                resolve_function(rule.lhs, widths),
                resolve_function(rule.rhs, widths))


def _substitute_operand(opnd: Operand, bindings: dict) -> Operand:
    if isinstance(opnd, SymConst):
        return Literal(bindings[opnd.name], opnd.ty)
    return opnd


def substitute(rule: Rule, bindings: dict, widths: Optional[dict] = None) -> Rule:
    """Instantiate every symbolic constant and width variable.

    `bindings` maps constant names to bit patterns; `widths` maps width
    variables to concrete widths.  Raises PreconditionUnsatisfied when a
    fully-bound precondition conjunct evaluates to false.  Conjuncts that
    reference lhs parameters cannot be discharged here and are kept on the
    resulting rule.
    """
    from . import semantics  # local import to avoid a cycle

    widths = widths or {}
    resolved = resolve_widths(rule, widths)
    consts: dict = {}
    for name, ty in resolved.sym_consts:
        if name not in bindings:
            raise SubstituteError(f"unbound symbolic constant {name}")
        value = bindings[name]
        if isinstance(ty, IntType):
            if not 0 <= value < (1 << ty.width):
                if literal_fits(value, ty.width):
                    value = to_unsigned(value, ty.width)
                else:
                    raise SubstituteError(
                        f"binding {value} for {name} does not fit {ty}")
        elif isinstance(ty, FloatType):
            if not 0 <= value < (1 << ty.bits):
                raise SubstituteError(
                    f"binding {value} for {name} does not fit {ty}")
        consts[name] = (value, ty)

    residual = []
    for conj in resolved.pre:
        if pred_param_refs(conj):
            residual.append(_substitute_pred_consts(conj, consts))
            continue
        if not semantics.eval_predicate((conj,), {}, consts, {}):
            raise PreconditionUnsatisfied(f"precondition unsatisfied: {conj!r}")

    lhs = Function(resolved.lhs.name, resolved.lhs.params,
                   tuple(Instr(i.op, tuple(_substitute_operand(o, consts_patterns(consts))
                                           for o in i.operands), i.ty, i.flags, i.pred)
                         for i in resolved.lhs.body),
                   _substitute_operand(resolved.lhs.ret, consts_patterns(consts)))
    rhs = Function(resolved.rhs.name, resolved.rhs.params,
                   tuple(Instr(i.op, tuple(_substitute_operand(o, consts_patterns(consts))
                                           for o in i.operands), i.ty, i.flags, i.pred)
                         for i in resolved.rhs.body),
                   _substitute_operand(resolved.rhs.ret, consts_patterns(consts)))
    return Rule(rule.name, (), (), tuple(residual), lhs, rhs)


def consts_patterns(consts: dict) -> dict:
    return {name: value for name, (value, _ty) in consts.items()}


def _subst_expr_consts(e: ConstExpr, consts: dict) -> ConstExpr:
    if isinstance(e, CConst) and e.name in consts:
        value, ty = consts[e.name]
        if isinstance(ty, FloatType):
            from . import semantics
            return CFloat(semantics.bits_to_float(value, ty.bits))
        return CInt(to_signed(value, ty.width) if isinstance(ty, IntType) else value)
    if isinstance(e, CBin):
        return CBin(e.op, _subst_expr_consts(e.a, consts), _subst_expr_consts(e.b, consts))
    if isinstance(e, CUn):
        return CUn(e.op, _subst_expr_consts(e.a, consts))
    if isinstance(e, CCast):
        return CCast(e.kind, _subst_expr_consts(e.a, consts), e.width)
    return e


def _substitute_pred_consts(p: Predicate, consts: dict) -> Predicate:
    if isinstance(p, PTrue):
        return p
    if isinstance(p, PCmp):
        return PCmp(p.pred, _subst_expr_consts(p.a, consts), _subst_expr_consts(p.b, consts))
    if isinstance(p, PPow2):
        return PPow2(_subst_expr_consts(p.e, consts))
    if isinstance(p, PKnownBits):
        return PKnownBits(p.ref, _subst_expr_consts(p.zeros, consts),
                          _subst_expr_consts(p.ones, consts))
    if isinstance(p, PRange):
        return PRange(p.ref, _subst_expr_consts(p.lo, consts),
                      _subst_expr_consts(p.hi, consts), p.signed)
    if isinstance(p, PLowBitsZero):
        return PLowBitsZero(p.ref, _subst_expr_consts(p.k, consts))
    if isinstance(p, PNot):
        return PNot(_substitute_pred_consts(p.a, consts))
    if isinstance(p, POr):
        return POr(_substitute_pred_consts(p.a, consts), _substitute_pred_consts(p.b, consts))
    if isinstance(p, PAnd):
        return PAnd(_substitute_pred_consts(p.a, consts), _substitute_pred_consts(p.b, consts))
    return p


# ---------------------------------------------------------------------------
# Misc helpers shared across modules


def function_locals_used(fn: Function) -> set:
    """Indices of instructions transitively used by the return value."""
    used: set = set()
    work = [fn.ret]
    while work:
        opnd = work.pop()
        if isinstance(opnd, Local) and opnd.index not in used:
            used.add(opnd.index)
            work.extend(fn.body[opnd.index].operands)
    return used


def rule_width_var_uses(rule: Rule) -> set:
    names: set = set()
    for fn in (rule.lhs, rule.rhs):
        for _n, ty in fn.params:
            if isinstance(ty, VarWidthType):
                names.add(ty.var)
        for instr in fn.body:
            if isinstance(instr.ty, VarWidthType):
                names.add(instr.ty.var)
            for o in instr.operands:
                ty = fn.operand_type(o)
                if isinstance(ty, VarWidthType):
                    names.add(ty.var)
    for _n, ty in rule.sym_consts:
        if isinstance(ty, VarWidthType):
            names.add(ty.var)
    for conj in rule.pre:
        names |= pred_width_vars(conj)
    return names
