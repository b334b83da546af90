"""Closed-loop rule generalization: prune, then four gated stages.

Stage 1 symbolizes constants (with a feedback loop to the backend), stage 2
abstracts preserved subexpressions into fresh inputs, stage 3 relaxes the
precondition and instruction flags, and stage 4 generalizes bitwidths or
float precisions.  Every accepted transition passes refinement and
profitability; weakenings additionally pass the strictly-weaker check.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import cost as costmod
from . import engine, proposer, pruner, semantics, textfmt, verifier
from .ir import (
    CAST_OPS, CBin, CCast, COMMUTATIVE_OPS, CUn, FloatType, Function, Instr,
    IntType, Literal, Local, PCmp, PeepError, Param, PreconditionUnsatisfied,
    Rule, SymConst, VarWidthType, pred_exprs, pred_param_refs, resolve_widths,
    substitute, to_signed, to_unsigned, validate,
)
from .proposer import (
    FeedbackItem, ProposalRequest, ProposerError, Structural,
    SymbolicConstants, WeakenPrecondition, WidthPredicate, _guards_partial_op,
)
from .textfmt import ParseError, canonical_text, print_pred, print_rule
from .verifier import Budget, StrictlyWeaker, verdict_to_json


# ---------------------------------------------------------------------------
# Configuration and reporting


@dataclass
class PipelineConfig:
    budget: Budget = field(default_factory=Budget)
    table: Optional[costmod.CostTable] = None
    backend: object = None
    stage1_max_iterations: int = 4
    k: int = 4
    max_width: int = 64
    width_cap: int = 16  # per-width verification sweep bound

    def __post_init__(self):
        if self.table is None:
            self.table = costmod.default_table()
        if self.backend is None:
            self.backend = proposer.HeuristicBackend(self.budget)
        for name in ("stage1_max_iterations", "k", "max_width", "width_cap"):
            if getattr(self, name) <= 0:
                raise PeepError(f"{name} must be positive")


@dataclass
class CandidateOutcome:
    text: str
    syntax_ok: bool
    diagnostics: list = field(default_factory=list)
    verdict: Optional[dict] = None
    profitable: Optional[bool] = None
    strictly_weaker: Optional[bool] = None
    accepted: bool = False

    def to_json(self) -> dict:
        return {
            "text": self.text, "syntax_ok": self.syntax_ok,
            "diagnostics": list(self.diagnostics), "verdict": self.verdict,
            "profitable": self.profitable,
            "strictly_weaker": self.strictly_weaker,
            "accepted": self.accepted,
        }


@dataclass
class StageOutcome:
    stage: str
    candidates: list = field(default_factory=list)
    accepted_text: Optional[str] = None
    counts: dict = field(default_factory=dict)
    note: str = ""

    @property
    def accepted(self) -> bool:
        return self.accepted_text is not None

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "candidates": [c.to_json() for c in self.candidates],
            "accepted": self.accepted_text,
            "counts": dict(self.counts),
            "note": self.note,
        }


@dataclass
class PipelineReport:
    instance_text: str
    prune_log: dict
    pruned_text: str
    stages: list
    final_text: Optional[str]
    final_verdict: Optional[dict]
    final_widths: dict
    lhs_cost: str
    rhs_cost: str
    schema: str = "peepgen-report-1"

    def to_json(self) -> dict:
        return {
            "schema": self.schema,
            "instance": self.instance_text,
            "prune_log": self.prune_log,
            "pruned": self.pruned_text,
            "stages": [s.to_json() for s in self.stages],
            "final": self.final_text,
            "final_verdict": self.final_verdict,
            "final_widths": dict(self.final_widths),
            "lhs_cost": self.lhs_cost,
            "rhs_cost": self.rhs_cost,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Gating helpers


def _proposals(req: ProposalRequest, cfg: PipelineConfig) -> list:
    try:
        return proposer.propose(req, cfg.backend)
    except ProposerError:
        return []


def _gate(rule: Rule, cfg: PipelineConfig, widths: Optional[dict] = None):
    verdict, _r, _w = verifier.verify_with_reduction(rule, widths, cfg.budget)
    profitable = costmod.check_profitable(rule, cfg.table)
    return verdict, profitable


def _parse_candidate(text: str):
    """Returns (rule, CandidateOutcome) with syntax/validation prefilled."""
    try:
        rule = textfmt.parse_rule(text)
    except ParseError as e:
        return None, CandidateOutcome(text, False, [str(e)])
    diags = validate(rule)
    if diags:
        return None, CandidateOutcome(text, False, [str(d) for d in diags])
    return rule, CandidateOutcome(text, True)


# ---------------------------------------------------------------------------
# Stage 1: symbolic constants


def stage1_symbolic_constants(rule: Rule, cfg: PipelineConfig):
    outcome = StageOutcome("symbolic_constants",
                           counts={"constants_symbolized": 0})
    feedback: list = []
    for _iteration in range(cfg.stage1_max_iterations):
        req = ProposalRequest(SymbolicConstants(), print_rule(rule),
                              tuple(feedback), cfg.k)
        proposals = _proposals(req, cfg)
        passers: list = []
        new_feedback = 0
        for idx, p in enumerate(proposals):
            cand, co = _parse_candidate(p.text)
            outcome.candidates.append(co)
            if cand is None:
                feedback.append(FeedbackItem("SyntaxError",
                                             "; ".join(co.diagnostics), p.text))
                new_feedback += 1
                continue
            verdict, profitable = _gate(cand, cfg)
            co.verdict = verdict_to_json(verdict)
            co.profitable = profitable
            if verdict.kind == "verified" and profitable:
                passers.append((len(cand.sym_consts), idx, cand, co))
            elif verdict.kind == "refuted":
                feedback.append(FeedbackItem(
                    "Counterexample", json.dumps(co.verdict["counterexample"]),
                    p.text))
                new_feedback += 1
            elif verdict.kind == "verified":
                feedback.append(FeedbackItem(
                    "Unprofitable",
                    f"lhs {costmod.cost(cand.lhs, cfg.table)} vs "
                    f"rhs {costmod.cost(cand.rhs, cfg.table)}", p.text))
                new_feedback += 1
        if passers:
            passers.sort(key=lambda t: (-t[0], t[1]))
            count, _idx, accepted, co = passers[0]
            co.accepted = True
            outcome.accepted_text = print_rule(accepted)
            outcome.counts["constants_symbolized"] = (
                len(accepted.sym_consts) - len(rule.sym_consts))
            return outcome, accepted
        if new_feedback == 0:
            break  # a deterministic backend would just repeat itself
    return outcome, rule


# ---------------------------------------------------------------------------
# Stage 2: structural abstraction


def _new_lhs_params(rule: Rule, cand: Rule) -> list:
    old = {n for n, _ in rule.lhs.params}
    return [n for n, _ in cand.lhs.params if n not in old]


def _param_used(fn: Function, name: str) -> bool:
    if isinstance(fn.ret, Param) and fn.ret.name == name:
        return True
    return any(isinstance(o, Param) and o.name == name
               for i in fn.body for o in i.operands)


def stage2_structural(rule: Rule, cfg: PipelineConfig):
    outcome = StageOutcome("structural",
                           counts={"subexpressions_abstracted": 0})
    req = ProposalRequest(Structural(), print_rule(rule), (), cfg.k)
    passers: list = []
    for idx, p in enumerate(_proposals(req, cfg)):
        cand, co = _parse_candidate(p.text)
        outcome.candidates.append(co)
        if cand is None:
            continue
        fresh = _new_lhs_params(rule, cand)
        if not fresh or not any(_param_used(cand.lhs, n) for n in fresh):
            co.diagnostics.append("no fresh parameter used in lhs")
            continue
        verdict, profitable = _gate(cand, cfg)
        co.verdict = verdict_to_json(verdict)
        co.profitable = profitable
        if verdict.kind == "verified" and profitable:
            abstracted = ((len(rule.lhs.body) + len(rule.rhs.body))
                          - (len(cand.lhs.body) + len(cand.rhs.body)))
            passers.append((abstracted, idx, cand, co))
    if passers:
        passers.sort(key=lambda t: (-t[0], t[1]))
        abstracted, _idx, accepted, co = passers[0]
        co.accepted = True
        outcome.accepted_text = print_rule(accepted)
        outcome.counts["subexpressions_abstracted"] = max(abstracted, 0)
        return outcome, accepted
    return outcome, rule


# ---------------------------------------------------------------------------
# Stage 3: relaxation (remove conjuncts, weaken conjuncts, remove flags)


def _with_pre(rule: Rule, pre: tuple) -> Rule:
    return Rule(rule.name, rule.sym_consts, rule.width_vars, pre,
                rule.lhs, rule.rhs)


def remove_conjuncts(rule: Rule, cfg: PipelineConfig, outcome: StageOutcome):
    removed = 0
    changed = True
    while changed:
        changed = False
        for i, conj in enumerate(rule.pre):
            if _guards_partial_op(conj, list(rule.pre)):
                continue
            trial = _with_pre(rule, rule.pre[:i] + rule.pre[i + 1:])
            co = CandidateOutcome(f"remove: {print_pred(conj)}", True)
            verdict, profitable = _gate(trial, cfg)
            co.verdict = verdict_to_json(verdict)
            co.profitable = profitable
            outcome.candidates.append(co)
            if verdict.kind == "verified" and profitable:
                co.accepted = True
                rule = trial
                removed += 1
                changed = True
                break
    return rule, removed


def weaken_conjuncts(rule: Rule, cfg: PipelineConfig, outcome: StageOutcome):
    weakened = 0
    i = 0
    while i < len(rule.pre):
        req = ProposalRequest(WeakenPrecondition(i), print_rule(rule), (),
                              cfg.k)
        accepted_here = False
        for p in _proposals(req, cfg):
            co = CandidateOutcome(f"weaken[{i}]: {p.text.strip()}", True)
            outcome.candidates.append(co)
            try:
                parsed = textfmt.parse_conjuncts(
                    p.text, dict(rule.sym_consts), list(rule.width_vars))
            except ParseError as e:
                co.syntax_ok = False
                co.diagnostics.append(str(e))
                continue
            new_pre = rule.pre[:i] + parsed + rule.pre[i + 1:]
            trial = _with_pre(rule, new_pre)
            verdict, profitable = _gate(trial, cfg)
            co.verdict = verdict_to_json(verdict)
            co.profitable = profitable
            if verdict.kind != "verified" or not profitable:
                continue
            sw = verifier.check_strictly_weaker(rule, new_pre, {}, cfg.budget)
            co.strictly_weaker = isinstance(sw, StrictlyWeaker)
            if not co.strictly_weaker:
                continue
            co.accepted = True
            rule = trial
            weakened += 1
            i += len(parsed)
            accepted_here = True
            break
        if not accepted_here:
            i += 1
    return rule, weakened


def _drop_flag(rule: Rule, side: str, index: int, flag: str) -> Rule:
    fn = getattr(rule, side)
    body = list(fn.body)
    instr = body[index]
    body[index] = Instr(instr.op, instr.operands, instr.ty,
                        instr.flags - {flag}, instr.pred)
    fn = Function(fn.name, fn.params, tuple(body), fn.ret)
    lhs = fn if side == "lhs" else rule.lhs
    rhs = fn if side == "rhs" else rule.rhs
    return Rule(rule.name, rule.sym_consts, rule.width_vars, rule.pre,
                lhs, rhs)


def remove_flags(rule: Rule, cfg: PipelineConfig, outcome: StageOutcome):
    removed = 0
    changed = True
    while changed:
        changed = False
        for side in ("lhs", "rhs"):
            fn = getattr(rule, side)
            for index, instr in enumerate(fn.body):
                for flag in sorted(instr.flags):
                    trial = _drop_flag(rule, side, index, flag)
                    co = CandidateOutcome(
                        f"drop flag {flag} from {side} %{index}", True)
                    verdict, profitable = _gate(trial, cfg)
                    co.verdict = verdict_to_json(verdict)
                    co.profitable = profitable
                    outcome.candidates.append(co)
                    if verdict.kind == "verified" and profitable:
                        co.accepted = True
                        rule = trial
                        removed += 1
                        changed = True
                        break
                if changed:
                    break
            if changed:
                break
    return rule, removed


def stage3_relax(rule: Rule, cfg: PipelineConfig):
    outcome = StageOutcome("relax", counts={"conjuncts_removed": 0,
                                            "conjuncts_weakened": 0,
                                            "flags_removed": 0})
    before = rule
    rule, removed = remove_conjuncts(rule, cfg, outcome)
    rule, weakened = weaken_conjuncts(rule, cfg, outcome)
    rule, flags = remove_flags(rule, cfg, outcome)
    outcome.counts.update({"conjuncts_removed": removed,
                           "conjuncts_weakened": weakened,
                           "flags_removed": flags})
    if removed or weakened or flags:
        outcome.accepted_text = print_rule(rule)
        return outcome, rule
    return outcome, before


# ---------------------------------------------------------------------------
# Stage 4: bitwidth / precision generalization


def _rule_types(rule: Rule):
    for fn in (rule.lhs, rule.rhs):
        for _n, ty in fn.params:
            yield ty
        for instr in fn.body:
            yield instr.ty
            for o in instr.operands:
                t = fn.operand_type(o)
                if t is not None:
                    yield t
    for _n, ty in rule.sym_consts:
        yield ty


def _uses_floats(rule: Rule) -> bool:
    return any(isinstance(t, FloatType) for t in _rule_types(rule))


def _expr_has_cast(e) -> bool:
    if isinstance(e, CCast):
        return True
    if isinstance(e, CBin):
        return _expr_has_cast(e.a) or _expr_has_cast(e.b)
    if isinstance(e, CUn):
        return _expr_has_cast(e.a)
    return False


def _int_static_gate(rule: Rule) -> Optional[str]:
    for fn in (rule.lhs, rule.rhs):
        for instr in fn.body:
            if instr.op in CAST_OPS:
                return f"width-changing cast {instr.op} in {fn.name}"
            for o in instr.operands:
                if (isinstance(o, Literal) and isinstance(o.ty, IntType)
                        and to_signed(o.value, o.ty.width) not in (0, 1, -1)):
                    return (f"literal {to_signed(o.value, o.ty.width)} "
                            "outside {0, 1, -1}")
        if (isinstance(fn.ret, Literal) and isinstance(fn.ret.ty, IntType)
                and to_signed(fn.ret.value, fn.ret.ty.width) not in (0, 1, -1)):
            return (f"literal {to_signed(fn.ret.value, fn.ret.ty.width)} "
                    "outside {0, 1, -1}")
    for conj in rule.pre:
        for e in pred_exprs(conj):
            if _expr_has_cast(e):
                return "width-changing cast in the precondition"
    return None


def _erase_widths(rule: Rule, width: int, var: str) -> Rule:
    target = IntType(width)
    wty = VarWidthType(var)

    def conv_ty(ty):
        return wty if ty == target else ty

    def conv(o):
        if isinstance(o, Literal) and o.ty == target:
            return Literal(to_signed(o.value, width), wty)
        if isinstance(o, SymConst) and o.ty == target:
            return SymConst(o.name, wty)
        return o

    def conv_fn(fn: Function) -> Function:
        params = tuple((n, conv_ty(t)) for n, t in fn.params)
        body = tuple(Instr(i.op, tuple(conv(o) for o in i.operands),
                           conv_ty(i.ty), i.flags, i.pred) for i in fn.body)
        return Function(fn.name, params, body, conv(fn.ret))

    sym_consts = tuple((n, conv_ty(t)) for n, t in rule.sym_consts)
    return Rule(rule.name, sym_consts, rule.width_vars + (var,), rule.pre,
                conv_fn(rule.lhs), conv_fn(rule.rhs))


def _retype_floats(rule: Rule, prec: int) -> Optional[Rule]:
    """Instantiate every float type at `prec`; None when a literal does not
    convert exactly."""
    new = FloatType(prec)

    def conv_ty(ty):
        return new if isinstance(ty, FloatType) else ty

    bad = []

    def conv(o, fn: Function):
        if isinstance(o, Literal) and isinstance(o.ty, FloatType):
            f = semantics.bits_to_float(o.value, o.ty.bits)
            pat = semantics.float_to_bits(f, prec)
            back = semantics.bits_to_float(pat, prec)
            if not (back == f or (back != back and f != f)):
                bad.append(o)
            return Literal(pat, new)
        if isinstance(o, SymConst):
            return SymConst(o.name, conv_ty(o.ty))
        return o

    def conv_fn(fn: Function) -> Function:
        params = tuple((n, conv_ty(t)) for n, t in fn.params)
        body = tuple(Instr(i.op, tuple(conv(o, fn) for o in i.operands),
                           conv_ty(i.ty), i.flags, i.pred) for i in fn.body)
        return Function(fn.name, params, body, conv(fn.ret, fn))

    sym_consts = tuple((n, conv_ty(t)) for n, t in rule.sym_consts)
    out = Rule(rule.name, sym_consts, rule.width_vars, rule.pre,
               conv_fn(rule.lhs), conv_fn(rule.rhs))
    return None if bad else out


def _admitted_widths(conjuncts: tuple, var: str, cap: int) -> list:
    out = []
    for w in range(1, cap + 1):
        try:
            if semantics.eval_predicate(conjuncts, {}, {}, {var: w}):
                out.append(w)
        except (semantics.EvalError, semantics.ConstEvalError):
            pass
    return out


def stage4_widths(rule: Rule, cfg: PipelineConfig):
    outcome = StageOutcome("widths", counts={"widths_generalized": 0,
                                             "precisions_passing": []})
    if _uses_floats(rule):
        return _stage4_floats(rule, cfg, outcome)

    reason = _int_static_gate(rule)
    if reason is not None:
        outcome.note = f"static gate: {reason}"
        return outcome, rule
    widths = sorted({t.width for t in _rule_types(rule)
                     if isinstance(t, IntType) and t.width != 1})
    if not widths:
        outcome.note = "no concrete integer widths to erase"
        return outcome, rule
    if len(widths) > 1:
        outcome.note = (f"multiple distinct widths {widths}; "
                        "joint erasure not attempted")
        return outcome, rule
    original = widths[0]
    var = "W"
    taken = set(rule.width_vars)
    n = 1
    while var in taken:
        n += 1
        var = f"W{n}"
    erased = _erase_widths(rule, original, var)

    passing, failing = [], []
    for w in range(1, cfg.width_cap + 1):
        verdict = verifier.check_refinement(erased, {var: w}, cfg.budget)
        co = CandidateOutcome(f"width {var}={w}", True,
                              verdict=verdict_to_json(verdict),
                              profitable=costmod.check_profitable(erased,
                                                                  cfg.table))
        outcome.candidates.append(co)
        if verdict.kind == "verified" and co.profitable:
            passing.append(w)
            co.accepted = True
        else:
            failing.append(w)

    if not failing and passing:
        outcome.accepted_text = print_rule(erased)
        outcome.counts["widths_generalized"] = 1
        outcome.note = f"all widths 1..{cfg.width_cap} pass"
        return outcome, erased
    if passing:
        req = ProposalRequest(WidthPredicate(tuple(passing), tuple(failing)),
                              print_rule(erased), (), cfg.k)
        for p in _proposals(req, cfg):
            co = CandidateOutcome(f"width predicate: {p.text.strip()}", True)
            outcome.candidates.append(co)
            try:
                parsed = textfmt.parse_conjuncts(
                    p.text, dict(erased.sym_consts), list(erased.width_vars))
            except ParseError as e:
                co.syntax_ok = False
                co.diagnostics.append(str(e))
                continue
            admitted = _admitted_widths(parsed, var, cfg.width_cap)
            ok = (admitted
                  and set(admitted) <= set(passing)
                  and (original in admitted or original > cfg.width_cap)
                  and any(w != original for w in admitted))
            if not ok:
                co.diagnostics.append(
                    f"admits {admitted}, passing set is {passing}")
                continue
            co.accepted = True
            guarded = _with_pre(erased, erased.pre + parsed)
            outcome.accepted_text = print_rule(guarded)
            outcome.counts["widths_generalized"] = 1
            outcome.note = f"width predicate admits {admitted}"
            return outcome, guarded
    outcome.note = outcome.note or (
        f"passing widths {passing}, failing {failing}; no predicate accepted")
    return outcome, rule


def _stage4_floats(rule: Rule, cfg: PipelineConfig, outcome: StageOutcome):
    original = sorted({t.bits for t in _rule_types(rule)
                       if isinstance(t, FloatType)})
    if len(original) != 1:
        outcome.note = f"multiple float precisions {original}"
        return outcome, rule
    passing = []
    for prec in (16, 32, 64):
        retyped = _retype_floats(rule, prec)
        if retyped is None:
            outcome.candidates.append(CandidateOutcome(
                f"precision f{prec}", True,
                diagnostics=["literal not exactly representable"]))
            continue
        verdict = verifier.check_refinement(retyped, {}, cfg.budget)
        profitable = costmod.check_profitable(retyped, cfg.table)
        co = CandidateOutcome(f"precision f{prec}", True,
                              verdict=verdict_to_json(verdict),
                              profitable=profitable)
        outcome.candidates.append(co)
        if verdict.kind == "verified" and profitable:
            passing.append(prec)
            co.accepted = True
    outcome.counts["precisions_passing"] = [f"f{p}" for p in passing]
    if len(passing) > 1:
        outcome.accepted_text = print_rule(rule)
        outcome.note = ("rule holds at " +
                        ", ".join(f"f{p}" for p in passing))
    else:
        outcome.note = f"only f{original[0]} passes"
    return outcome, rule


# ---------------------------------------------------------------------------
# The pipeline


def run_pipeline(instance: Rule, cfg: Optional[PipelineConfig] = None
                 ) -> PipelineReport:
    cfg = cfg or PipelineConfig()
    diags = validate(instance)
    if diags:
        raise PeepError("invalid instance: " + "; ".join(str(d) for d in diags))
    pruned, log = pruner.prune(instance, cfg.budget, cfg.table)
    rule = pruned
    stages = []
    for stage_fn in (stage1_symbolic_constants, stage2_structural,
                     stage3_relax, stage4_widths):
        outcome, rule = stage_fn(rule, cfg)
        stages.append(outcome)

    final_widths = {}
    if rule.width_vars:
        # re-verify the width-generalized rule at its largest passing width
        widths_stage = stages[-1]
        passing = [int(c.text.split("=")[-1]) for c in widths_stage.candidates
                   if c.accepted and c.text.startswith("width ")]
        w = max(passing) if passing else cfg.width_cap
        final_widths = {v: w for v in rule.width_vars}
    recheck = Budget(cfg.budget.exhaustive_limit, cfg.budget.sample_count,
                     cfg.budget.constant_sample_count, cfg.budget.rng_seed + 1)
    verdict, _r, _w = verifier.verify_with_reduction(rule, final_widths,
                                                     recheck)
    final_text = print_rule(rule) if verdict.kind == "verified" else None
    return PipelineReport(
        instance_text=print_rule(instance),
        prune_log=log.to_json(),
        pruned_text=print_rule(pruned),
        stages=stages,
        final_text=final_text,
        final_verdict=verdict_to_json(verdict),
        final_widths=final_widths,
        lhs_cost=str(costmod.cost(rule.lhs, cfg.table)),
        rhs_cost=str(costmod.cost(rule.rhs, cfg.table)),
    )


# ---------------------------------------------------------------------------
# Rule matching and generality comparison


def _match_type(rty, cty, env: dict) -> bool:
    if isinstance(rty, VarWidthType):
        if not isinstance(cty, IntType):
            return False
        bound = env["widths"].get(rty.var)
        if bound is None:
            env["widths"][rty.var] = cty.width
            return True
        return bound == cty.width
    return rty == cty


def _match_operand(rfn: Function, rop, cfn: Function, cop, env: dict) -> bool:
    if isinstance(rop, Param):
        if not isinstance(cop, Param):
            return False
        fwd, rev = env["params"], env["rparams"]
        if rop.name in fwd:
            return fwd[rop.name] == cop.name
        if cop.name in rev:
            return False
        if not _match_type(rfn.param_type(rop.name),
                           cfn.param_type(cop.name), env):
            return False
        fwd[rop.name] = cop.name
        rev[cop.name] = rop.name
        return True
    if isinstance(rop, SymConst):
        if not isinstance(cop, Literal):
            return False
        if not _match_type(rop.ty, cop.ty, env):
            return False
        bound = env["consts"].get(rop.name)
        if bound is None:
            env["consts"][rop.name] = cop.value
            return True
        return bound == cop.value
    if isinstance(rop, Literal):
        if not isinstance(cop, Literal):
            return False
        if isinstance(rop.ty, VarWidthType):
            if not _match_type(rop.ty, cop.ty, env):
                return False
            w = env["widths"][rop.ty.var]
            return to_unsigned(rop.value, w) == cop.value
        return rop.ty == cop.ty and rop.value == cop.value
    if isinstance(rop, Local):
        if not isinstance(cop, Local):
            return False
        return _match_instr(rfn, rfn.body[rop.index], cfn,
                            cfn.body[cop.index], env)
    return False


def _snapshot(env: dict) -> dict:
    return {k: dict(v) for k, v in env.items()}


def _restore(env: dict, snap: dict) -> None:
    for k in env:
        env[k].clear()
        env[k].update(snap[k])


def _match_instr(rfn: Function, ri: Instr, cfn: Function, ci: Instr,
                 env: dict) -> bool:
    if ri.op != ci.op or ri.flags != ci.flags or ri.pred != ci.pred:
        return False
    if not _match_type(ri.ty, ci.ty, env):
        return False
    commutable = (ri.op in COMMUTATIVE_OPS
                  or (ri.op == "icmp" and ri.pred in ("eq", "ne"))
                  or (ri.op == "fcmp" and ri.pred in ("oeq", "one", "ueq",
                                                      "une")))
    snap = _snapshot(env)
    if all(_match_operand(rfn, ro, cfn, co, env)
           for ro, co in zip(ri.operands, ci.operands)):
        return True
    _restore(env, snap)
    if commutable and len(ri.operands) == 2:
        ro0, ro1 = ri.operands
        co0, co1 = ci.operands
        if (_match_operand(rfn, ro0, cfn, co1, env)
                and _match_operand(rfn, ro1, cfn, co0, env)):
            return True
        _restore(env, snap)
    return False


def _match_function(rfn: Function, cfn: Function, env: dict) -> bool:
    # matching starts from the returned value, so dead instructions on
    # either side do not affect applicability
    return _match_operand(rfn, rfn.ret, cfn, cfn.ret, env)


_PARAM_SPACE_CAP = 1 << 16


def _residual_implied(rule_conjs: tuple, inst: Rule, env: dict) -> bool:
    """Every input admitted by the instance's residual precondition must be
    admitted by the rule's (bound) parameter conjuncts."""
    if not rule_conjs:
        return True
    refs = set()
    for c in rule_conjs + tuple(inst.pre):
        refs |= pred_param_refs(c)
    dims = [(n, ty) for n, ty in inst.lhs.params if n in refs]
    import math
    space = math.prod(engine.space_of(ty) for _n, ty in dims) if dims else 1
    if space > _PARAM_SPACE_CAP:
        return False  # conservatively refuse to certify
    from .verifier import _scalar_value

    sizes = [engine.space_of(ty) for _n, ty in dims]
    for flat in range(space):
        point = {}
        rem = flat
        for (name, ty), size in zip(dims, sizes):
            point[name] = _scalar_value(rem % size, ty)
            rem //= size
        if not semantics.eval_predicate(tuple(inst.pre), point, {}, {}):
            continue
        if not semantics.eval_predicate(rule_conjs, point, {}, {}):
            return False
    return True


def match_rule(rule: Rule, concrete: Rule,
               widths: Optional[dict] = None) -> Optional[dict]:
    """Match `rule` against a concrete instance.

    Returns the constant/width bindings on success, None otherwise.
    """
    widths = dict(widths or {})
    env = {"params": {}, "rparams": {}, "consts": {},
           "widths": dict(widths)}
    if not _match_function(rule.lhs, concrete.lhs, env):
        return None
    if not _match_function(rule.rhs, concrete.rhs, env):
        return None
    if any(n not in env["consts"] for n, _ in rule.sym_consts):
        return None
    if any(v not in env["widths"] for v in rule.width_vars):
        return None
    wmap = env["widths"]
    resolved = resolve_widths(rule, wmap) if rule.width_vars else rule
    consts = {n: (env["consts"][n], ty) for n, ty in resolved.sym_consts}
    const_only = tuple(c for c in resolved.pre if not pred_param_refs(c))
    param_conjs = tuple(c for c in resolved.pre if pred_param_refs(c))
    try:
        if not semantics.eval_predicate(const_only, {}, consts, {}):
            return None
    except (semantics.EvalError, semantics.ConstEvalError):
        return None
    from .ir import _substitute_pred_consts
    bound = tuple(_substitute_pred_consts(c, consts) for c in param_conjs)
    renamed = tuple(_rename_pred_refs(c, env["params"]) for c in bound)
    if frozenset(renamed) != frozenset(concrete.pre):
        if not _residual_implied(renamed, concrete, env):
            return None
    bindings = dict(env["consts"])
    bindings.update({v: w for v, w in env["widths"].items()
                     if v in rule.width_vars})
    return bindings


def _rename_pred_refs(p, mapping: dict):
    from .ir import (CRef, PAnd, PKnownBits, PLowBitsZero, PNot, POr, PPow2,
                     PRange, PTrue)

    def rex(e):
        if isinstance(e, CRef):
            return CRef(mapping.get(e.name, e.name))
        if isinstance(e, CBin):
            return CBin(e.op, rex(e.a), rex(e.b))
        if isinstance(e, CUn):
            return CUn(e.op, rex(e.a))
        if isinstance(e, CCast):
            return CCast(e.kind, rex(e.a), e.width)
        return e

    if isinstance(p, PCmp):
        return PCmp(p.pred, rex(p.a), rex(p.b))
    if isinstance(p, PRange):
        return PRange(mapping.get(p.ref, p.ref), rex(p.lo), rex(p.hi),
                      p.signed)
    if isinstance(p, PKnownBits):
        return PKnownBits(mapping.get(p.ref, p.ref), rex(p.zeros),
                          rex(p.ones))
    if isinstance(p, PLowBitsZero):
        return PLowBitsZero(mapping.get(p.ref, p.ref), rex(p.k))
    if isinstance(p, PNot):
        return PNot(_rename_pred_refs(p.a, mapping))
    if isinstance(p, POr):
        return POr(_rename_pred_refs(p.a, mapping),
                   _rename_pred_refs(p.b, mapping))
    if isinstance(p, PAnd):
        return PAnd(_rename_pred_refs(p.a, mapping),
                    _rename_pred_refs(p.b, mapping))
    if isinstance(p, PPow2):
        return PPow2(rex(p.e))
    return p


@dataclass(frozen=True)
class CompareResult:
    verdict: str  # AMoreGeneral | BMoreGeneral | Equal | Incomparable | Inconclusive
    mode: str  # exhaustive | sampled
    witness: Optional[dict] = None

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "mode": self.mode,
                "witness": self.witness}


_DOMAIN_CAP = 1 << 12


def _rule_domain(rule: Rule, widths: dict, budget: Budget):
    """Concrete instances of `rule`; returns (instances, exhaustive flag).

    Each instance is (bindings, substituted Rule).
    """
    import numpy as np

    relevant = {v: w for v, w in widths.items() if v in rule.width_vars}
    resolved = resolve_widths(rule, relevant) if rule.width_vars else rule
    if not resolved.sym_consts:
        try:
            return [({}, substitute(resolved, {}, {}))], True
        except PreconditionUnsatisfied:
            return [], True
    free, defs = engine.split_const_defs(resolved)
    defs = verifier._typed_defs(resolved, defs)
    const_only = [c for c in resolved.pre if not pred_param_refs(c)]
    cspace = verifier._const_space(free)
    exhaustive = cspace <= min(budget.exhaustive_limit, _DOMAIN_CAP * 16)
    if exhaustive:
        const_map = verifier.enumerate_satisfying_consts(
            resolved, free, defs, const_only)
    else:
        rng = np.random.default_rng(budget.rng_seed)
        const_map = verifier.sample_satisfying_consts(
            resolved, free, defs, const_only, budget, rng)
        if const_map is None:
            return [], False
    n = len(next(iter(const_map.values()))[0]) if const_map else 0
    if n > _DOMAIN_CAP:
        exhaustive = False
        n = _DOMAIN_CAP
    instances = []
    seen = set()
    for i in range(n):
        bindings = {}
        for name, (arr, ty) in const_map.items():
            bindings[name] = verifier._pattern_of(
                np.asarray(arr).reshape(-1)[i], ty)
        key = tuple(sorted(bindings.items()))
        if key in seen:
            continue
        seen.add(key)
        try:
            inst = substitute(resolved, bindings, {})
        except PreconditionUnsatisfied:
            continue
        instances.append((bindings, inst))
    return instances, exhaustive


def compare_generality(a: Rule, b: Rule, widths: Optional[dict] = None,
                       budget: Optional[Budget] = None) -> CompareResult:
    """Compare applicability domains by enumerating matched instances."""
    widths = dict(widths or {})
    budget = budget or Budget()
    try:
        dom_a, ex_a = _rule_domain(a, widths, budget)
        dom_b, ex_b = _rule_domain(b, widths, budget)
    except engine.UnsupportedConstruct:
        return CompareResult("Inconclusive", "sampled")
    mode = "exhaustive" if (ex_a and ex_b) else "sampled"

    def witness_of(rule_id, bindings, inst):
        return {"rule": rule_id, "bindings": dict(bindings),
                "instance": canonical_text(inst)}

    a_only = None
    for bindings, inst in dom_a:
        if match_rule(b, inst, widths) is None:
            a_only = witness_of("a", bindings, inst)
            break
    b_only = None
    for bindings, inst in dom_b:
        if match_rule(a, inst, widths) is None:
            b_only = witness_of("b", bindings, inst)
            break

    if a_only and b_only:
        return CompareResult("Incomparable", mode,
                             {"a_only": a_only, "b_only": b_only})
    if a_only:
        # A has an instance B misses; A is more general iff A covers B
        if ex_b:
            return CompareResult("AMoreGeneral", mode, a_only)
        return CompareResult("Inconclusive", mode, a_only)
    if b_only:
        if ex_a:
            return CompareResult("BMoreGeneral", mode, b_only)
        return CompareResult("Inconclusive", mode, b_only)
    if mode == "exhaustive":
        return CompareResult("Equal", mode)
    return CompareResult("Inconclusive", mode)
