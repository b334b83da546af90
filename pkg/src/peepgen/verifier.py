"""Bounded refinement checking, strictly-weaker precondition testing, and
recursive width/precision reduction.

The joint (constants, inputs) space is enumerated exhaustively when it fits
the budget; above the limit, satisfying constant assignments are drawn by
rejection sampling and inputs are sampled with a special-value set mixed in.
Every Refuted verdict carries a counterexample that is re-checked with the
scalar evaluator before being returned (self-validation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import engine, semantics
from .ir import (
    CBin, CConst, CInt, CUn, FloatType, Function, IntType, Literal, PCmp,
    PeepError, Predicate, Rule, VarWidthType, literal_fits, mask,
    pred_const_names, pred_exprs, pred_param_refs, resolve_widths, to_signed,
    to_unsigned,
)

REJECTION_CAP = 10 ** 6
_SPECIAL_CROSS_CAP = 1 << 16
_SPECIAL_LOOP_CAP = 512
_CHUNK = 1 << 22
# constant assignments are materialized for exhaustive scans; above this cap
# memory would blow up, so the sampled path takes over even when the budget
# would nominally allow enumeration
_ENUM_CAP = 1 << 26


class ReplayMismatch(PeepError):
    """Vectorized and scalar evaluation disagreed on a counterexample."""


@dataclass(frozen=True)
class Budget:
    exhaustive_limit: int = 1 << 24
    sample_count: int = 65536  # 0 disables sampling (exhaustive-only mode)
    constant_sample_count: int = 256
    rng_seed: int = 0


@dataclass(frozen=True)
class Counterexample:
    consts: dict  # name -> bit pattern
    widths: dict  # width var -> int
    inputs: dict  # param -> bit pattern
    lhs_poison: bool
    rhs_poison: bool
    lhs_value: Optional[int]
    rhs_value: Optional[int]


@dataclass(frozen=True)
class Verified:
    mode: str  # "exhaustive" | "sampled"
    points: int
    space: str
    seed: int

    @property
    def kind(self) -> str:
        return "verified"


@dataclass(frozen=True)
class Refuted:
    counterexample: Counterexample
    seed: int

    @property
    def kind(self) -> str:
        return "refuted"


@dataclass(frozen=True)
class Inconclusive:
    reason: str  # BudgetExceeded | NoSatisfyingConstants | UnsupportedConstruct
    detail: str = ""

    @property
    def kind(self) -> str:
        return "inconclusive"


Verdict = Union[Verified, Refuted, Inconclusive]


def verdict_to_json(v: Verdict) -> dict:
    if isinstance(v, Verified):
        return {"kind": "verified", "mode": v.mode, "points": v.points,
                "space": v.space, "seed": v.seed}
    if isinstance(v, Refuted):
        cx = v.counterexample
        return {
            "kind": "refuted", "seed": v.seed,
            "counterexample": {
                "consts": {k: hex(p) for k, p in cx.consts.items()},
                "widths": dict(cx.widths),
                "inputs": {k: hex(p) for k, p in cx.inputs.items()},
                "lhs": "poison" if cx.lhs_poison else hex(cx.lhs_value),
                "rhs": "poison" if cx.rhs_poison else hex(cx.rhs_value),
            },
        }
    return {"kind": "inconclusive", "reason": v.reason, "detail": v.detail}


# ---------------------------------------------------------------------------
# Scalar replay


def _scalar_value(pattern: int, ty):
    if isinstance(ty, FloatType):
        return semantics.FloatBits(ty.bits, pattern)
    return semantics.Bits(ty.width, pattern)


def replay_counterexample(rule: Rule, cx: Counterexample) -> bool:
    """Re-evaluate a counterexample with the scalar evaluator; True when the
    refinement violation reproduces."""
    resolved = resolve_widths(rule, dict(cx.widths)) if rule.width_vars else rule
    consts = {name: (cx.consts[name], ty) for name, ty in resolved.sym_consts}
    params = {name: _scalar_value(cx.inputs[name], ty)
              for name, ty in resolved.lhs.params}
    if not semantics.eval_predicate(resolved.pre, params, consts, {}):
        return False
    args = [params[name] for name, _ in resolved.lhs.params]
    inst = _substitute_all(resolved, consts)
    lv = semantics.eval_function(inst.lhs, args)
    rv = semantics.eval_function(inst.rhs, args)
    if lv is semantics.POISON:
        return False
    return rv is semantics.POISON or not semantics.values_equal(lv, rv)


def _substitute_all(resolved: Rule, consts: dict) -> Rule:
    """Replace SymConst operands with literals, leaving the pre untouched."""
    def subst_fn(fn: Function) -> Function:
        from .ir import Instr, SymConst

        def subst(o):
            if isinstance(o, SymConst):
                value, ty = consts[o.name]
                return Literal(value, ty)
            return o

        body = tuple(Instr(i.op, tuple(subst(o) for o in i.operands), i.ty,
                           i.flags, i.pred) for i in fn.body)
        return Function(fn.name, fn.params, body, subst(fn.ret))

    return Rule(resolved.name, resolved.sym_consts, (), resolved.pre,
                subst_fn(resolved.lhs), subst_fn(resolved.rhs))


# ---------------------------------------------------------------------------
# Constant-space enumeration and sampling


def _const_space(free: list) -> int:
    return math.prod(engine.space_of(ty) for _, ty in free) if free else 1


def _param_space(fn: Function) -> int:
    return math.prod(engine.space_of(ty) for _, ty in fn.params) if fn.params else 1


def _digits_to_data(digits, ty):
    if isinstance(ty, FloatType):
        return np.asarray(digits, dtype=engine._FUINT[ty.bits]).view(engine._FLOAT[ty.bits])
    return np.asarray(digits, dtype=engine.udtype(ty.width))


def _compute_derived(consts: dict, defs: list):
    """Extend `consts` with derived constants (in definition order)."""
    for name, expr, ty in defs:
        cv = engine.eval_constexpr_vec(expr, consts)
        if isinstance(ty, FloatType):
            data = np.asarray(cv.data, dtype=engine._FLOAT[ty.bits])
        else:
            if cv.width is None:
                data = engine.udtype(ty.width)(to_unsigned(int(cv.data), ty.width))
            elif cv.width == ty.width:
                data = np.asarray(cv.data)
            else:
                raise engine.UnsupportedConstruct(
                    f"derived constant {name} width mismatch")
        consts[name] = (data, ty)
    return consts


def _typed_defs(resolved: Rule, defs: list) -> list:
    types = dict(resolved.sym_consts)
    return [(name, expr, types[name]) for name, expr in defs]


def _filter_chunk(consts: dict, const_only, n: int):
    ok = engine.eval_pred_vec(const_only, {}, consts)
    return np.broadcast_to(np.asarray(ok, dtype=bool), (n,))


def enumerate_satisfying_consts(resolved: Rule, free: list, defs: list,
                                const_only) -> dict:
    """All satisfying constant assignments; returns name -> (array, Type)."""
    sizes = [engine.space_of(ty) for _, ty in free]
    total = math.prod(sizes) if sizes else 1
    names = [n for n, _ in resolved.sym_consts]
    collected: dict = {n: [] for n in names}
    for start in range(0, total, _CHUNK):
        end = min(start + _CHUNK, total)
        digits = engine.unravel_chunk(sizes, start, end) if sizes else []
        consts = {}
        for (name, ty), d in zip(free, digits):
            consts[name] = (_digits_to_data(d, ty), ty)
        _compute_derived(consts, defs)
        keep = _filter_chunk(consts, const_only, end - start)
        for n in names:
            data, ty = consts[n]
            data = np.broadcast_to(np.asarray(data), (end - start,))
            collected[n].append(data[keep])
    types = dict(resolved.sym_consts)
    return {n: (np.concatenate(collected[n]) if collected[n] else np.array([]),
                types[n]) for n in names}


def _special_tuples(types: list) -> list:
    """Cross product (capped) of per-type special values."""
    return _special_tuples_wide(types, _SPECIAL_CROSS_CAP)


def _type_pools(types: list) -> list:
    return [engine.special_float_patterns(ty.bits) if isinstance(ty, FloatType)
            else engine.special_int_patterns(ty.width) for ty in types]


def _cross_pools(pools: list, cap: int) -> list:
    """Cross the per-position pools up to `cap` tuples, diagonal beyond."""
    if not pools:
        return []
    if math.prod(len(p) for p in pools) <= cap:
        grids = np.meshgrid(*pools, indexing="ij")
        return [g.reshape(-1) for g in grids]
    n = max(len(p) for p in pools)
    return [np.resize(p, n) for p in pools]


def _special_tuples_wide(types: list, cap: int) -> list:
    return _cross_pools(_type_pools(types), cap)


def _harvested_literals(resolved: Rule) -> list:
    """Integer literals appearing in the precondition."""
    out: set = set()

    def walk(e) -> None:
        if isinstance(e, CInt):
            out.add(e.value)
        elif isinstance(e, CBin):
            walk(e.a)
            walk(e.b)
        elif isinstance(e, CUn):
            walk(e.a)
        elif hasattr(e, "a"):  # CCast
            walk(e.a)

    for conj in resolved.pre:
        for e in pred_exprs(conj):
            walk(e)
    return sorted(out)


def _const_special_pools(resolved: Rule, free: list) -> list:
    """Special values plus precondition literals (and neighbours) per constant.

    Pins such as `C1 <=u 173 && C1 >=u 173` confine the satisfying set to a
    region random draws essentially never hit; seeding the pool with the
    precondition's own literals makes those assignments deterministic finds.
    """
    lits = _harvested_literals(resolved)
    pools = []
    for (_name, ty), base in zip(free, _type_pools([ty for _, ty in free])):
        if isinstance(ty, IntType) and lits:
            extra = {to_unsigned(v + d, ty.width)
                     for v in lits for d in (-1, 0, 1)
                     if literal_fits(v + d, ty.width)}
            if extra:
                base = np.unique(np.concatenate(
                    [base, np.array(sorted(extra), dtype=base.dtype)]))
        pools.append(base)
    return pools


def _sample_free_patterns(rng, free: list, n: int) -> list:
    out = []
    for _, ty in free:
        if isinstance(ty, FloatType):
            out.append(engine.sample_float_patterns(rng, ty.bits, n))
        else:
            out.append(engine.sample_int_patterns(rng, ty.width, n))
    return out


def sample_satisfying_consts(resolved: Rule, free: list, defs: list,
                             const_only, budget: Budget, rng) -> Optional[dict]:
    """Rejection-sample satisfying assignments; None when the cap is hit
    without finding any."""
    names = [n for n, _ in resolved.sym_consts]
    types = dict(resolved.sym_consts)
    collected: dict = {n: [] for n in names}
    found = 0
    drawn = 0

    def consume(pattern_arrays: list, count: int) -> int:
        nonlocal found
        consts = {}
        for (name, ty), pats in zip(free, pattern_arrays):
            consts[name] = (_digits_to_data(pats, ty), ty)
        _compute_derived(consts, defs)
        keep = _filter_chunk(consts, const_only, count)
        kept = int(keep.sum())
        if kept:
            for n in names:
                data, ty = consts[n]
                data = np.broadcast_to(np.asarray(data), (count,))
                collected[n].append(data[keep])
            found += kept
        return kept

    specials = (_cross_pools(_const_special_pools(resolved, free), _CHUNK)
                if free else [])
    if specials:
        consume(specials, len(specials[0]))
    batch = 8192
    while found < budget.constant_sample_count and drawn < REJECTION_CAP:
        take = min(batch, REJECTION_CAP - drawn)
        consume(_sample_free_patterns(rng, free, take), take)
        drawn += take
    if found == 0:
        return None
    limit = budget.constant_sample_count
    out = {}
    for n in names:
        data = np.concatenate(collected[n])
        out[n] = (data[:limit] if len(data) > limit else data, types[n])
    return out


def _choose_consts(const_map: dict, count: int, rng) -> dict:
    if not const_map:
        return const_map
    some = next(iter(const_map.values()))[0]
    total = len(some)
    if total <= count:
        return const_map
    idx = rng.choice(total, size=count, replace=False)
    return {n: (arr[idx], ty) for n, (arr, ty) in const_map.items()}


def _satisfying_specials(resolved: Rule, free: list, defs: list,
                         const_only) -> Optional[dict]:
    """Special-value constant tuples that satisfy the precondition."""
    specials = _cross_pools(_const_special_pools(resolved, free),
                            _SPECIAL_CROSS_CAP)
    if not specials:
        return None
    n = len(specials[0])
    consts = {}
    for (name, ty), pats in zip(free, specials):
        consts[name] = (_digits_to_data(pats, ty), ty)
    _compute_derived(consts, defs)
    keep = _filter_chunk(consts, const_only, n)
    if not keep.any():
        return None
    types = dict(resolved.sym_consts)
    return {name: (np.broadcast_to(np.asarray(data), (n,))[keep], types[name])
            for name, (data, _ty) in consts.items()}


def _concat_const_maps(a: dict, b: Optional[dict]) -> dict:
    if not b:
        return a
    return {n: (np.concatenate([arr, b[n][0].astype(arr.dtype, copy=False)]), ty)
            for n, (arr, ty) in a.items()}


def _special_cross_refute(resolved: Rule, widths: dict, free: list, defs: list,
                          const_only, budget: Budget) -> Optional[Verdict]:
    """Scan every satisfying special constant tuple against special inputs.

    Random constant selection can miss narrow corner regions entirely; this
    pass makes refutation on the special-value grid deterministic.  The
    smaller axis is looped, the larger vectorized.
    """
    if not resolved.sym_consts:
        return None
    param_conjs = [c for c in resolved.pre if pred_param_refs(c)]
    sp_consts = _satisfying_specials(resolved, free, defs, const_only)
    if sp_consts is None:
        return None
    nc = len(next(iter(sp_consts.values()))[0])
    sp = _special_tuples([ty for _, ty in resolved.lhs.params])
    pdata = {name: _digits_to_data(p, ty)
             for (name, ty), p in zip(resolved.lhs.params, sp)}
    np_ = len(sp[0]) if sp else 1
    if nc <= np_:
        params = {name: engine.VVal(pdata[name], None, ty)
                  for name, ty in resolved.lhs.params}
        for i in range(min(nc, _SPECIAL_LOOP_CAP)):
            consts = _index_consts(sp_consts, i)
            viol, lv, rv = _violation(resolved, params, consts, param_conjs)
            hit = _first_true(viol, np_)
            if hit is not None:
                cx = _extract_point(resolved, widths, params, consts, lv, rv,
                                    hit, np_)
                return _refute(resolved, cx, budget)
    else:
        for j in range(min(np_, _SPECIAL_LOOP_CAP)):
            point = {name: engine.VVal(pdata[name][j:j + 1], None, ty)
                     for name, ty in resolved.lhs.params}
            viol, lv, rv = _violation(resolved, point, sp_consts, param_conjs)
            hit = _first_true(viol, nc)
            if hit is not None:
                cx = _extract_point(resolved, widths, point, sp_consts, lv, rv,
                                    hit, nc)
                return _refute(resolved, cx, budget)
    return None


# ---------------------------------------------------------------------------
# Cross-space scanning


def _param_grid_chunks(fn: Function, chunk: int):
    sizes = [engine.space_of(ty) for _, ty in fn.params]
    total = math.prod(sizes) if sizes else 1
    for start in range(0, total, chunk):
        end = min(start + chunk, total)
        digits = engine.unravel_chunk(sizes, start, end) if sizes else []
        params = {}
        for (name, ty), d in zip(fn.params, digits):
            params[name] = engine.VVal(_digits_to_data(d, ty), None, ty)
        yield params, end - start


def _sampled_params(fn: Function, budget: Budget, rng) -> tuple:
    arrays = {}
    n = budget.sample_count
    for name, ty in fn.params:
        if isinstance(ty, FloatType):
            pats = engine.sample_float_patterns(rng, ty.bits, n)
        else:
            pats = engine.sample_int_patterns(rng, ty.width, n)
        arrays[name] = pats
    specials = _special_tuples([ty for _, ty in fn.params])
    if specials:
        for (name, ty), pats in zip(fn.params, specials):
            arrays[name] = np.concatenate(
                [arrays[name], pats.astype(arrays[name].dtype)])
    count = len(next(iter(arrays.values()))) if arrays else 1
    params = {name: engine.VVal(_digits_to_data(arrays[name], ty), None, ty)
              for name, ty in fn.params}
    return params, count


def _index_consts(const_map: dict, i: int) -> dict:
    return {n: (np.asarray(arr)[i], ty) for n, (arr, ty) in const_map.items()}


def _violation(resolved: Rule, params: dict, consts: dict, param_conjs):
    lv = engine.eval_function_vec(resolved.lhs, params, consts)
    rv = engine.eval_function_vec(resolved.rhs, params, consts)
    ok = engine.values_equal_vec(lv, rv)
    viol = ~np.asarray(ok, dtype=bool)
    if rv.poison is not None:
        viol = viol | rv.poison
    if lv.poison is not None:
        viol = viol & ~lv.poison
    if param_conjs:
        pre = engine.eval_pred_vec(param_conjs, params, consts)
        viol = viol & np.asarray(pre, dtype=bool)
    return viol, lv, rv


def _extract_point(resolved: Rule, widths: dict, params: dict, consts: dict,
                   lv, rv, flat_index: int, n: int) -> Counterexample:
    def pick(data):
        return np.broadcast_to(np.asarray(data), (n,)).reshape(-1)[flat_index]

    inputs = {name: _pattern_of(pick(params[name].data), ty)
              for name, ty in resolved.lhs.params}
    cx_consts = {name: _pattern_of(pick(data), ty)
                 for name, (data, ty) in consts.items()}

    def result(v: engine.VVal):
        pois = bool(pick(v.poison)) if v.poison is not None else False
        return pois, (None if pois else _pattern_of(pick(v.data), v.ty))

    lp, lval = result(lv)
    rp, rval = result(rv)
    return Counterexample(cx_consts, dict(widths), inputs, lp, rp, lval, rval)


def _pattern_of(x, ty) -> int:
    if isinstance(ty, FloatType):
        return int(np.asarray(x).view(engine._FUINT[ty.bits]))
    return int(x)


# ---------------------------------------------------------------------------
# check_refinement


def check_refinement(rule: Rule, widths: Optional[dict] = None,
                     budget: Optional[Budget] = None) -> Verdict:
    widths = widths or {}
    budget = budget or Budget()
    try:
        return _check_refinement(rule, widths, budget)
    except engine.UnsupportedConstruct as e:
        return Inconclusive("UnsupportedConstruct", str(e))


def _check_refinement(rule: Rule, widths: dict, budget: Budget) -> Verdict:
    resolved = resolve_widths(rule, widths) if rule.width_vars else rule
    rng = np.random.default_rng(budget.rng_seed)

    const_only = [c for c in resolved.pre if not pred_param_refs(c)]
    param_conjs = [c for c in resolved.pre if pred_param_refs(c)]
    free, defs = engine.split_const_defs(resolved)
    defs = _typed_defs(resolved, defs)

    cspace = _const_space(free)
    pspace = _param_space(resolved.lhs)

    if cspace <= min(budget.exhaustive_limit, _ENUM_CAP):
        const_map = enumerate_satisfying_consts(resolved, free, defs, const_only)
        sat = len(next(iter(const_map.values()))[0]) if const_map else 1
        if resolved.sym_consts and sat == 0:
            return Inconclusive("NoSatisfyingConstants",
                                "no constant assignment satisfies the precondition")
        if sat * pspace <= budget.exhaustive_limit or budget.sample_count == 0:
            if sat * pspace > budget.exhaustive_limit:
                return Inconclusive(
                    "BudgetExceeded",
                    f"joint satisfying space {sat}x{pspace} exceeds "
                    f"{budget.exhaustive_limit} and sampling is disabled")
            return _scan_exhaustive(resolved, widths, const_map, sat, pspace, budget)
        refuted = _special_cross_refute(resolved, widths, free, defs,
                                        const_only, budget)
        if refuted is not None:
            return refuted
        const_map = _choose_consts(const_map, budget.constant_sample_count, rng)
        const_map = _concat_const_maps(
            const_map, _satisfying_specials(resolved, free, defs, const_only))
        return _scan_sampled(resolved, widths, const_map, budget, rng)

    if budget.sample_count == 0:
        return Inconclusive(
            "BudgetExceeded",
            f"constant space {cspace} exceeds {budget.exhaustive_limit} "
            "and sampling is disabled")
    refuted = _special_cross_refute(resolved, widths, free, defs, const_only,
                                    budget)
    if refuted is not None:
        return refuted
    const_map = sample_satisfying_consts(resolved, free, defs, const_only,
                                         budget, rng)
    if const_map is None:
        return Inconclusive("NoSatisfyingConstants",
                            f"no satisfying constants in {REJECTION_CAP} draws")
    return _scan_sampled(resolved, widths, const_map, budget, rng)


def _scan_exhaustive(resolved: Rule, widths: dict, const_map: dict, sat: int,
                     pspace: int, budget: Budget) -> Verdict:
    param_conjs = [c for c in resolved.pre if pred_param_refs(c)]
    space = f"{max(sat, 1)} constants x {pspace} inputs"
    checked = 0
    if not const_map or sat <= pspace:
        # loop constants (possibly none), vectorize inputs
        for i in range(max(sat, 1) if const_map else 1):
            consts = _index_consts(const_map, i) if const_map else {}
            for params, n in _param_grid_chunks(resolved.lhs, _CHUNK):
                viol, lv, rv = _violation(resolved, params, consts, param_conjs)
                checked += n
                hit = _first_true(viol, n)
                if hit is not None:
                    cx = _extract_point(resolved, widths, params, consts, lv, rv,
                                        hit, n)
                    return _refute(resolved, cx, budget)
    else:
        # loop inputs, vectorize constants
        for params, n in _param_grid_chunks(resolved.lhs, 4096):
            for j in range(n):
                point = {name: engine.VVal(np.asarray(v.data).reshape(-1)[j:j + 1],
                                           None, v.ty)
                         for name, v in params.items()}
                viol, lv, rv = _violation(resolved, point, const_map, param_conjs)
                checked += sat
                hit = _first_true(viol, sat)
                if hit is not None:
                    cx = _extract_point(resolved, widths, point, const_map, lv, rv,
                                        hit, sat)
                    return _refute(resolved, cx, budget)
    return Verified("exhaustive", checked, space, budget.rng_seed)


def _scan_sampled(resolved: Rule, widths: dict, const_map: dict,
                  budget: Budget, rng) -> Verdict:
    param_conjs = [c for c in resolved.pre if pred_param_refs(c)]
    sat = len(next(iter(const_map.values()))[0]) if const_map else 1
    pspace = _param_space(resolved.lhs)
    full_grid = pspace <= max(budget.sample_count, 1)
    checked = 0
    sampled_params = None
    if not full_grid:
        sampled_params, pcount = _sampled_params(resolved.lhs, budget, rng)
    for i in range(max(sat, 1)):
        consts = _index_consts(const_map, i) if const_map else {}
        if full_grid:
            chunks = _param_grid_chunks(resolved.lhs, _CHUNK)
        else:
            chunks = [(sampled_params, pcount)]
        for params, n in chunks:
            viol, lv, rv = _violation(resolved, params, consts, param_conjs)
            checked += n
            hit = _first_true(viol, n)
            if hit is not None:
                cx = _extract_point(resolved, widths, params, consts, lv, rv,
                                    hit, n)
                return _refute(resolved, cx, budget)
    space = f"{max(sat, 1)} sampled constants x " + (
        f"{pspace} inputs (full grid)" if full_grid else "sampled inputs")
    return Verified("sampled", checked, space, budget.rng_seed)


def _first_true(viol, n: int) -> Optional[int]:
    v = np.broadcast_to(np.asarray(viol, dtype=bool), (n,))
    idx = np.flatnonzero(v)
    return int(idx[0]) if len(idx) else None


def _refute(resolved: Rule, cx: Counterexample, budget: Budget) -> Verdict:
    if not replay_counterexample(resolved, cx):
        raise ReplayMismatch(
            f"counterexample does not replay under scalar semantics: {cx}")
    return Refuted(cx, budget.rng_seed)


# ---------------------------------------------------------------------------
# Strictly-weaker precondition testing


@dataclass(frozen=True)
class StrictlyWeaker:
    witness: dict  # const name -> pattern (and input name -> pattern if needed)

    @property
    def kind(self) -> str:
        return "strictly_weaker"


@dataclass(frozen=True)
class EquivalentOrIncomparable:
    direction: str  # "no_witness" (B failed) | "not_implied" (A failed)
    point: Optional[dict] = None

    @property
    def kind(self) -> str:
        return "equivalent_or_incomparable"


def check_strictly_weaker(rule: Rule, weakened_pre: tuple,
                          widths: Optional[dict] = None,
                          budget: Optional[Budget] = None):
    """Is `weakened_pre` implied by rule.pre with some point separating them?

    Direction A: every point satisfying pre satisfies weakened_pre.
    Direction B: some point satisfies weakened_pre but not pre.
    """
    widths = widths or {}
    budget = budget or Budget()
    if not isinstance(weakened_pre, tuple):
        weakened_pre = (weakened_pre,)
    try:
        resolved = resolve_widths(rule, widths) if rule.width_vars else rule
        weak = tuple(_resolve_conjunct(c, widths) for c in weakened_pre)
        return _strictly_weaker(resolved, weak, budget)
    except engine.UnsupportedConstruct as e:
        return Inconclusive("UnsupportedConstruct", str(e))


def _resolve_conjunct(c, widths: dict):
    from .ir import _resolve_predicate
    return _resolve_predicate(c, widths)


def _strictly_weaker(resolved: Rule, weak: tuple, budget: Budget):
    refs = set()
    for c in tuple(resolved.pre) + weak:
        refs |= pred_param_refs(c)
    if refs:
        # parameters appear in a predicate; fold them into the point space as
        # extra enumerated/sampled dimensions
        dims = [(n, ty) for n, ty in resolved.lhs.params if n in refs]
    else:
        dims = []
    free = list(resolved.sym_consts)
    space = math.prod(engine.space_of(ty) for _, ty in free + dims) if (free or dims) else 1
    rng = np.random.default_rng(budget.rng_seed)

    a_fail = None
    b_witness = None

    def scan(consts: dict, params: dict, n: int):
        nonlocal a_fail, b_witness
        pre_ok = np.broadcast_to(
            np.asarray(engine.eval_pred_vec(tuple(resolved.pre), params, consts),
                       dtype=bool), (n,))
        weak_ok = np.broadcast_to(
            np.asarray(engine.eval_pred_vec(weak, params, consts), dtype=bool), (n,))
        if a_fail is None:
            bad = pre_ok & ~weak_ok
            i = _first_true(bad, n)
            if i is not None:
                a_fail = _point_at(consts, params, i)
        if b_witness is None:
            good = weak_ok & ~pre_ok
            i = _first_true(good, n)
            if i is not None:
                b_witness = _point_at(consts, params, i)

    if space <= budget.exhaustive_limit:
        sizes = [engine.space_of(ty) for _, ty in free + dims]
        for start in range(0, space, _CHUNK):
            end = min(start + _CHUNK, space)
            digits = engine.unravel_chunk(sizes, start, end) if sizes else []
            consts = {}
            params = {}
            for (name, ty), d in zip(free, digits[:len(free)]):
                consts[name] = (_digits_to_data(d, ty), ty)
            for (name, ty), d in zip(dims, digits[len(free):]):
                params[name] = engine.VVal(_digits_to_data(d, ty), None, ty)
            scan(consts, params, end - start)
            if a_fail is not None and b_witness is not None:
                break
        exhaustive = True
    else:
        if budget.sample_count == 0:
            return Inconclusive("BudgetExceeded",
                                f"point space {space} exceeds the budget "
                                "and sampling is disabled")
        n = budget.sample_count
        pats = _sample_free_patterns(rng, free + dims, n)
        # predicates are cheap to evaluate, so the special cross can be much
        # larger here than in function scans
        specials = _special_tuples_wide(
            [ty for _, ty in free + dims], _CHUNK)
        if specials:
            pats = [np.concatenate([p, s.astype(p.dtype)])
                    for p, s in zip(pats, specials)]
            n = len(pats[0])
        consts = {}
        params = {}
        for (name, ty), p in zip(free, pats[:len(free)]):
            consts[name] = (_digits_to_data(p, ty), ty)
        for (name, ty), p in zip(dims, pats[len(free):]):
            params[name] = engine.VVal(_digits_to_data(p, ty), None, ty)
        scan(consts, params, n)
        exhaustive = False

    if a_fail is not None:
        return EquivalentOrIncomparable("not_implied", a_fail)
    if b_witness is None:
        if exhaustive:
            return EquivalentOrIncomparable("no_witness")
        return Inconclusive("BudgetExceeded",
                            "no separating point found in the sampled space")
    _replay_witness(resolved, weak, b_witness)
    return StrictlyWeaker(b_witness)


def _point_at(consts: dict, params: dict, i: int) -> dict:
    out = {}
    for name, (data, ty) in consts.items():
        out[name] = _pattern_of(np.asarray(data).reshape(-1)[i], ty)
    for name, v in params.items():
        out[name] = _pattern_of(np.asarray(v.data).reshape(-1)[i], v.ty)
    return out


def _replay_witness(resolved: Rule, weak: tuple, point: dict) -> None:
    consts = {name: (point[name], ty) for name, ty in resolved.sym_consts}
    params = {name: _scalar_value(point[name], ty)
              for name, ty in resolved.lhs.params if name in point}
    weak_ok = semantics.eval_predicate(weak, params, consts, {})
    pre_ok = semantics.eval_predicate(resolved.pre, params, consts, {})
    if not (weak_ok and not pre_ok):
        raise ReplayMismatch(f"strictly-weaker witness does not replay: {point}")


# ---------------------------------------------------------------------------
# Width reduction


@dataclass(frozen=True)
class ReductionBlocked:
    reason: str


def _reduce_width(w: int):
    if w == 1:
        return 1  # i1 is never scaled
    if w % 2:
        return None
    return w // 2


def _reduce_type(ty):
    if isinstance(ty, IntType):
        w = _reduce_width(ty.width)
        if w is None:
            return ReductionBlocked(f"odd width i{ty.width}")
        return IntType(w)
    if isinstance(ty, FloatType):
        if ty.bits == 16:
            return ReductionBlocked("f16 cannot be demoted further")
        return FloatType(32 if ty.bits == 64 else 16)
    return ty  # width variables are handled via the assignment


def _reduce_literal(lit: Literal, new_ty):
    if isinstance(lit.ty, IntType) and isinstance(new_ty, IntType):
        w, nw = lit.ty.width, new_ty.width
        signed = to_signed(lit.value, w)
        if lit.value < (1 << nw):
            return Literal(lit.value, new_ty)
        if literal_fits(signed, nw):
            return Literal(to_unsigned(signed, nw), new_ty)
        return ReductionBlocked(f"literal {signed} not encodable at {new_ty}")
    if isinstance(lit.ty, FloatType) and isinstance(new_ty, FloatType):
        f = semantics.bits_to_float(lit.value, lit.ty.bits)
        pat = semantics.float_to_bits(f, new_ty.bits)
        back = semantics.bits_to_float(pat, new_ty.bits)
        same = (back == f) or (np.isnan(back) and np.isnan(f))
        if not same:
            return ReductionBlocked(
                f"float literal {float(f)} not exactly representable at {new_ty}")
        return Literal(pat, new_ty)
    return lit


def reduce_widths(rule: Rule, widths: Optional[dict] = None):
    """Halve integer widths / demote float precisions uniformly.

    Returns (reduced rule, reduced width assignment) or ReductionBlocked.
    The rule itself is transformed because concrete types appear directly in
    functions and literals.
    """
    from .ir import Instr, SymConst

    widths = widths or {}
    new_widths = {}
    for var, w in widths.items():
        nw = _reduce_width(w)
        if nw is None:
            return ReductionBlocked(f"odd width i{w} for {var}")
        if w > 1 and nw < 1:
            return ReductionBlocked(f"width for {var} would reach 0")
        new_widths[var] = nw

    def conv_ty(ty):
        if isinstance(ty, VarWidthType):
            return ty
        return _reduce_type(ty)

    blocked: list = []

    def conv_operand(o, new_ty):
        if isinstance(o, Literal):
            r = _reduce_literal(o, new_ty if not isinstance(o.ty, VarWidthType) else o.ty)
            if isinstance(r, ReductionBlocked):
                blocked.append(r)
                return o
            return r
        if isinstance(o, SymConst):
            nt = conv_ty(o.ty)
            if isinstance(nt, ReductionBlocked):
                blocked.append(nt)
                return o
            return SymConst(o.name, nt)
        return o

    def conv_fn(fn: Function) -> Function:
        params = []
        for n, ty in fn.params:
            nt = conv_ty(ty)
            if isinstance(nt, ReductionBlocked):
                blocked.append(nt)
                nt = ty
            params.append((n, nt))
        new_fn_types = []
        body = []
        for instr in fn.body:
            nt = conv_ty(instr.ty)
            if isinstance(nt, ReductionBlocked):
                blocked.append(nt)
                nt = instr.ty
            new_fn_types.append(nt)
            ops = []
            for o in instr.operands:
                old_ty = fn.operand_type(o)
                not_ = conv_ty(old_ty) if old_ty is not None else None
                if isinstance(not_, ReductionBlocked):
                    blocked.append(not_)
                    not_ = old_ty
                ops.append(conv_operand(o, not_))
            body.append(Instr(instr.op, tuple(ops), nt, instr.flags, instr.pred))
        ret = conv_operand(fn.ret, conv_ty(fn.operand_type(fn.ret)))
        return Function(fn.name, tuple(params), tuple(body), ret)

    lhs = conv_fn(rule.lhs)
    rhs = conv_fn(rule.rhs)
    sym_consts = []
    for n, ty in rule.sym_consts:
        nt = conv_ty(ty)
        if isinstance(nt, ReductionBlocked):
            blocked.append(nt)
            nt = ty
        sym_consts.append((n, nt))

    pre_block = _check_pre_literals(rule, dict(sym_consts), new_widths)
    if pre_block is not None:
        blocked.append(pre_block)
    if blocked:
        return blocked[0]
    reduced = Rule(rule.name, tuple(sym_consts), rule.width_vars, rule.pre,
                   lhs, rhs)
    return reduced, new_widths


def _check_pre_literals(rule: Rule, reduced_const_types: dict,
                        new_widths: dict) -> Optional[ReductionBlocked]:
    """Integer literals used in width-wrapped PRE arithmetic must still be
    encodable at the reduced width of the constants they combine with."""
    for conj in rule.pre:
        ws = []
        for name in pred_const_names(conj):
            ty = reduced_const_types.get(name)
            if isinstance(ty, IntType):
                ws.append(ty.width)
            elif isinstance(ty, VarWidthType) and ty.var in new_widths:
                ws.append(new_widths[ty.var])
        if not ws:
            continue
        wmin = min(ws)
        for e in pred_exprs(conj):
            bad = _arith_literal_overflow(e, wmin, top=True)
            if bad is not None:
                return ReductionBlocked(
                    f"precondition constant {bad} not encodable at i{wmin}")
    return None


def _arith_literal_overflow(e, width: int, top: bool) -> Optional[int]:
    # bare comparison operands are compared mathematically and are exempt;
    # literals inside arithmetic wrap at the constant's width and must fit
    if isinstance(e, CInt):
        if not top and not literal_fits(e.value, width):
            return e.value
        return None
    if isinstance(e, CBin):
        return (_arith_literal_overflow(e.a, width, False)
                or _arith_literal_overflow(e.b, width, False))
    if isinstance(e, CUn):
        return _arith_literal_overflow(e.a, width, False)
    return None


# ---------------------------------------------------------------------------
# verify_with_reduction


def verify_with_reduction(rule: Rule, widths: Optional[dict] = None,
                          budget: Optional[Budget] = None):
    """check_refinement with recursive width reduction on BudgetExceeded.

    Returns (verdict, final rule, final width assignment).
    """
    widths = dict(widths or {})
    budget = budget or Budget()
    current = rule
    while True:
        verdict = check_refinement(current, widths, budget)
        if not (isinstance(verdict, Inconclusive)
                and verdict.reason == "BudgetExceeded"):
            return verdict, current, widths
        reduced = reduce_widths(current, widths)
        if isinstance(reduced, ReductionBlocked):
            return (Inconclusive("BudgetExceeded",
                                 f"still over budget; reduction blocked: "
                                 f"{reduced.reason}"),
                    current, widths)
        current, widths = reduced
