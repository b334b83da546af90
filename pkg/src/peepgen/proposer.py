"""Pluggable candidate generation for the four generalization stages.

Three interchangeable backends sit behind one `propose` entry point: a
remote chat-completion backend, a deterministic offline heuristic, and a
replay backend that serves previously recorded responses keyed by request
hash.  Backends emit raw candidate texts; parsing and gating happen in the
pipeline.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from . import semantics, textfmt, verifier
from .ir import (
    CBin, CConst, CInt, CUn, Function, Instr, IntType, Literal, Local, PCmp,
    PeepError, PPow2, PRange, Param, PTrue, Rule, SymConst, VarWidthType,
    to_signed, to_unsigned, validate,
)


class ProposerError(PeepError):
    """Transport failure or malformed backend response (retryable)."""


# ---------------------------------------------------------------------------
# Requests and proposals


@dataclass(frozen=True)
class SymbolicConstants:
    tag = "symbolic_constants"


@dataclass(frozen=True)
class Structural:
    tag = "structural"


@dataclass(frozen=True)
class WeakenPrecondition:
    conjunct: int
    tag = "weaken_precondition"


@dataclass(frozen=True)
class WidthPredicate:
    passing: tuple
    failing: tuple
    tag = "width_predicate"


@dataclass(frozen=True)
class FeedbackItem:
    kind: str  # SyntaxError | Counterexample | Unprofitable | NotStrictlyWeaker
    detail: str
    candidate: str


@dataclass(frozen=True)
class ProposalRequest:
    stage: object
    rule_text: str
    feedback: tuple = ()
    k: int = 4

    def __post_init__(self):
        if self.feedback and not isinstance(self.stage, SymbolicConstants):
            raise PeepError("feedback is only fed back into the first stage")


@dataclass(frozen=True)
class Proposal:
    text: str
    backend: str
    response_hash: str


def request_hash(req: ProposalRequest) -> str:
    stage = req.stage
    key = {
        "stage": stage.tag,
        "conjunct": getattr(stage, "conjunct", None),
        "passing": list(getattr(stage, "passing", ()) or ()),
        "failing": list(getattr(stage, "failing", ()) or ()),
        "rule": req.rule_text,
        "feedback": [[f.kind, f.detail, f.candidate] for f in req.feedback],
        "k": req.k,
    }
    blob = json.dumps(key, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _data_text(name: str) -> str:
    return resources.files("peepgen").joinpath(f"data/prompts/{name}").read_text()


def render_prompt(req: ProposalRequest) -> str:
    stage = req.stage
    template = _data_text(stage.tag + ".txt")
    feedback = ""
    if req.feedback:
        lines = ["", "Previous attempts failed:"]
        for f in req.feedback:
            lines.append(f"- {f.kind}: {f.detail}")
            if f.candidate:
                lines.append("  candidate was:")
                lines.extend("  " + ln for ln in f.candidate.splitlines())
        lines.append("")
        feedback = "\n".join(lines)
    text = (template
            .replace("{{GRAMMAR}}", _data_text("grammar.txt").rstrip())
            .replace("{{RULE}}", req.rule_text.rstrip())
            .replace("{{FEEDBACK}}", feedback)
            .replace("{{K}}", str(req.k)))
    if isinstance(stage, WeakenPrecondition):
        rule = textfmt.parse_rule(req.rule_text)
        text = text.replace("{{CONJUNCT}}",
                            textfmt.print_pred(rule.pre[stage.conjunct]))
    if isinstance(stage, WidthPredicate):
        text = (text
                .replace("{{PASSING}}", ", ".join(map(str, stage.passing)) or "none")
                .replace("{{FAILING}}", ", ".join(map(str, stage.failing)) or "none"))
    return text


_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_fenced(text: str) -> list:
    return [m.group(1).strip() + "\n" for m in _FENCE.finditer(text)]


def propose(req: ProposalRequest, backend) -> list:
    return backend.generate(req)[: req.k]


# ---------------------------------------------------------------------------
# Symbolizing literals (shared by the heuristic backend and tests)

_TRIVIAL = (0, 1, -1)


def symbolize_literals(instance: Rule):
    """Replace each distinct non-trivial integer literal with a SymConst.

    Returns (symbolized rule with an empty precondition, assignment mapping
    each new constant name to its original bit pattern).
    """
    taken = {n for n, _ in instance.sym_consts}
    names: dict = {}  # (pattern, ty) -> SymConst
    assignment: dict = {}
    order = [0]

    def conv(o):
        if (isinstance(o, Literal) and isinstance(o.ty, IntType)
                and to_signed(o.value, o.ty.width) not in _TRIVIAL):
            key = (o.value, o.ty)
            if key not in names:
                order[0] += 1
                name = f"C{order[0]}"
                while name in taken:
                    order[0] += 1
                    name = f"C{order[0]}"
                names[key] = SymConst(name, o.ty)
                assignment[name] = o.value
            return names[key]
        return o

    def conv_fn(fn: Function) -> Function:
        body = tuple(Instr(i.op, tuple(conv(o) for o in i.operands), i.ty,
                           i.flags, i.pred) for i in fn.body)
        return Function(fn.name, fn.params, body, conv(fn.ret))

    lhs = conv_fn(instance.lhs)
    rhs = conv_fn(instance.rhs)
    sym_consts = instance.sym_consts + tuple(
        (sc.name, sc.ty) for sc in names.values())
    return (Rule(instance.name, sym_consts, instance.width_vars, instance.pre,
                 lhs, rhs), assignment)


# ---------------------------------------------------------------------------
# Heuristic template search (stage 1)

_TEMPLATE_BINOPS = ("&", "|", "^", "+", "-", "<<", ">>u")
_TEMPLATE_UNOPS = ("log2", "cttz", "popcount")


def _candidate_exprs(others: list):
    """Constant expressions over `others`, up to two nested operators."""
    atoms = [CConst(n) for n in others]
    depth1 = list(atoms)
    depth2 = []
    for u in _TEMPLATE_UNOPS:
        depth2.extend(CUn(u, a) for a in atoms)
    for b in _TEMPLATE_BINOPS:
        depth2.extend(CBin(b, a1, a2) for a1 in atoms for a2 in atoms)
    out = depth1 + depth2
    for b in _TEMPLATE_BINOPS:
        for inner in depth2:
            out.extend(CBin(b, inner, a) for a in atoms)
            out.extend(CBin(b, a, inner) for a in atoms)
    for u in _TEMPLATE_UNOPS:
        out.extend(CUn(u, inner) for inner in depth2)
    return out


def _holds(conj, consts: dict) -> bool:
    try:
        return semantics.eval_predicate((conj,), {}, consts, {})
    except (semantics.EvalError, semantics.ConstEvalError):
        return False


def _guards_partial_op(conj, remaining: list) -> bool:
    # an explicit PowerOfTwo guard is kept when another conjunct applies
    # log2 to the same constant; log2 is partial and the guard keeps its
    # domain condition visible in the final rule
    if not (isinstance(conj, PPow2) and isinstance(conj.e, CConst)):
        return False
    name = conj.e.name

    def mentions(e) -> bool:
        if isinstance(e, CUn):
            if e.op == "log2" and e.a == CConst(name):
                return True
            return mentions(e.a)
        if isinstance(e, CBin):
            return mentions(e.a) or mentions(e.b)
        return False

    for other in remaining:
        if other is conj:
            continue
        if isinstance(other, PCmp) and (mentions(other.a) or mentions(other.b)):
            return True
    return False


def _probe_budget(budget: verifier.Budget) -> verifier.Budget:
    return verifier.Budget(
        exhaustive_limit=min(budget.exhaustive_limit, 1 << 20),
        sample_count=min(budget.sample_count, 8192) or 8192,
        constant_sample_count=min(budget.constant_sample_count, 64) or 64,
        rng_seed=budget.rng_seed)


def heuristic_fit_constants(instance: Rule, widths: Optional[dict] = None,
                            budget: Optional[verifier.Budget] = None) -> list:
    """Symbolize literals and search templates for precondition conjuncts.

    Returns a list of (assignment, conjunct tuple) candidates; the
    symbolized rule itself is `symbolize_literals(instance)[0]`.
    """
    widths = dict(widths or {})
    budget = budget or verifier.Budget()
    probe = _probe_budget(budget)
    skeleton, assignment = symbolize_literals(instance)
    if not assignment:
        return [(assignment, ())]

    consts = {name: (pattern, dict(skeleton.sym_consts)[name])
              for name, pattern in assignment.items()}
    names = list(assignment)

    pins: list = []
    pow2s: list = []
    equalities: list = []
    for name in names:
        pattern, ty = consts[name]
        pins.append(PCmp("ule", CConst(name), CInt(pattern)))
        pins.append(PCmp("uge", CConst(name), CInt(pattern)))
        for delta in (0, 1, -1):
            e = CConst(name) if delta == 0 else CBin("+", CConst(name), CInt(delta))
            conj = PPow2(e)
            if _holds(conj, consts):
                pow2s.append(conj)
        others = [n for n in names if n != name]
        seen = set()
        for expr in _candidate_exprs(others):
            conj = PCmp("eq", CConst(name), expr)
            if _holds(conj, consts) and conj not in seen:
                seen.add(conj)
                equalities.append(conj)

    # start pinned (trivially verified: the rule is the instance itself),
    # then greedily drop conjuncts while the probe check stays green
    keep = pins + pow2s + equalities
    # pins are dropped first (the other conjuncts still constrain), then the
    # deepest equality templates, so the simplest sufficient conjunct survives
    removable = pins + pow2s + equalities[::-1]

    def verified(conjuncts: list) -> bool:
        rule = Rule(skeleton.name, skeleton.sym_consts, skeleton.width_vars,
                    tuple(conjuncts), skeleton.lhs, skeleton.rhs)
        verdict, _r, _w = verifier.verify_with_reduction(rule, widths, probe)
        return verdict.kind == "verified"

    if not verified(keep):
        return []
    # a coincidental conjunct can block removal of an earlier one until it is
    # itself dropped, so sweep to a fixpoint
    changed = True
    while changed:
        changed = False
        for conj in removable:
            if conj not in keep or _guards_partial_op(conj, keep):
                continue
            trial = [c for c in keep if c is not conj]
            if verified(trial):
                keep = trial
                changed = True
    candidates = [(assignment, tuple(keep))]
    pinned = tuple(pins + [c for c in keep if c not in pins])
    if pinned != candidates[0][1]:
        candidates.append((assignment, pinned))
    return candidates


# ---------------------------------------------------------------------------
# Heuristic backend: the other stages


def _value_bound(fn: Function, index: int):
    """Upper bound (as a ConstExpr) for instruction `index`, when obvious."""
    instr = fn.body[index]
    if instr.op == "and":
        for o in instr.operands:
            if isinstance(o, Literal) and isinstance(o.ty, IntType):
                return CInt(o.value)
            if isinstance(o, SymConst):
                return CConst(o.name)
        return None
    if instr.op == "zext" and isinstance(instr.operands[0], Local):
        inner = _value_bound(fn, instr.operands[0].index)
        if inner is not None and isinstance(instr.ty, IntType):
            from .ir import CCast
            return CCast("zext", inner, instr.ty.width)
        return None
    if instr.op in ("lshr", "urem", "umin"):
        return None
    return None


def _structural_candidates(rule: Rule) -> list:
    """Replace a bounded lhs subexpression (and its rhs mirror) by a fresh
    parameter with a RangeU atom."""
    from .pruner import _expr_key, _replace_local, dce

    out = []
    taken = {n for n, _ in rule.lhs.params}
    for i in range(len(rule.lhs.body)):
        ty = rule.lhs.body[i].ty
        if not isinstance(ty, IntType):
            continue
        bound = _value_bound(rule.lhs, i)
        if bound is None:
            continue
        fresh = "V"
        n = 1
        while fresh in taken:
            n += 1
            fresh = f"V{n}"
        key = _expr_key(rule.lhs, Local(i))
        lhs = _replace_local(rule.lhs, i, fresh, ty)
        rhs = rule.rhs
        for j in range(len(rule.rhs.body)):
            if _expr_key(rule.rhs, Local(j)) == key:
                rhs = _replace_local(rule.rhs, j, fresh, ty)
                break
        else:
            rhs = Function(rhs.name, rhs.params + ((fresh, ty),), rhs.body,
                           rhs.ret)
        atom = PRange(fresh, CInt(0), bound, False)
        candidate = dce(Rule(rule.name, rule.sym_consts, rule.width_vars,
                             rule.pre + (atom,), lhs, rhs))
        out.append(candidate)
    return out


def _weaken_candidates(rule: Rule, index: int) -> list:
    conj = rule.pre[index]
    out = []
    if isinstance(conj, PCmp) and len(conj.pred) == 3 and conj.pred[1:] == "lt":
        out.append(PCmp(conj.pred[0] + "le", conj.a, conj.b))
    if isinstance(conj, PCmp) and len(conj.pred) == 3 and conj.pred[1:] == "gt":
        out.append(PCmp(conj.pred[0] + "ge", conj.a, conj.b))
    return out


def _width_pred_candidates(rule: Rule, stage: WidthPredicate) -> list:
    if not rule.width_vars or not stage.passing:
        return []
    w = rule.width_vars[0]
    out = [f"{w} <= {max(stage.passing)}"]
    if min(stage.passing) > 1:
        out.append(f"{w} >= {min(stage.passing)} && {w} <= {max(stage.passing)}")
    return out


class HeuristicBackend:
    """Deterministic offline candidate generation."""

    name = "heuristic"

    def __init__(self, budget: Optional[verifier.Budget] = None):
        self.budget = budget or verifier.Budget()

    def raw_response(self, req: ProposalRequest) -> Optional[str]:
        return None

    def generate(self, req: ProposalRequest) -> list:
        rule = textfmt.parse_rule(req.rule_text)
        stage = req.stage
        texts: list = []
        if isinstance(stage, SymbolicConstants):
            skeleton, _ = symbolize_literals(rule)
            for _assignment, conjuncts in heuristic_fit_constants(
                    rule, {}, self.budget):
                cand = Rule(skeleton.name, skeleton.sym_consts,
                            skeleton.width_vars, conjuncts, skeleton.lhs,
                            skeleton.rhs)
                texts.append(textfmt.print_rule(cand))
        elif isinstance(stage, Structural):
            texts = [textfmt.print_rule(c) for c in _structural_candidates(rule)]
        elif isinstance(stage, WeakenPrecondition):
            texts = [textfmt.print_pred(p)
                     for p in _weaken_candidates(rule, stage.conjunct)]
        elif isinstance(stage, WidthPredicate):
            texts = _width_pred_candidates(rule, stage)
        h = request_hash(req)
        return [Proposal(t, self.name, h) for t in texts[: req.k]]


# ---------------------------------------------------------------------------
# Remote chat-completion backend


_ENV_DEFAULTS = {
    "endpoint": "PEEPGEN_LLM_ENDPOINT",
    "model": "PEEPGEN_LLM_MODEL",
    "api_key": "PEEPGEN_LLM_API_KEY",
    "timeout_s": "PEEPGEN_LLM_TIMEOUT_S",
    "retries": "PEEPGEN_LLM_RETRIES",
}


class LLMBackend:
    """HTTP chat-completion backend.

    Configuration comes from the PEEPGEN_LLM_* environment variables,
    overridden by an explicit config mapping.
    """

    name = "llm"

    def __init__(self, config: Optional[dict] = None):
        cfg = dict(config or {})
        for key, env in _ENV_DEFAULTS.items():
            if key not in cfg and env in os.environ:
                cfg[key] = os.environ[env]
        if "endpoint" not in cfg:
            raise ProposerError(
                "no endpoint configured (set PEEPGEN_LLM_ENDPOINT)")
        self.endpoint = cfg["endpoint"]
        self.model = cfg.get("model", "")
        self.api_key = cfg.get("api_key", "")
        self.timeout_s = float(cfg.get("timeout_s", 60))
        self.retries = int(cfg.get("retries", 2))

    def _complete(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        last: Optional[Exception] = None
        for _attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.endpoint, json=payload,
                                     headers=headers, timeout=self.timeout_s)
                if resp.status_code // 100 != 2:
                    raise ProposerError(
                        f"chat endpoint returned {resp.status_code}")
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (ProposerError, KeyError, IndexError, TypeError,
                    ValueError, requests.RequestException) as e:
                last = e
        raise ProposerError(f"chat request failed after retries: {last}")

    def raw_response(self, req: ProposalRequest) -> str:
        return self._complete(render_prompt(req))

    def generate(self, req: ProposalRequest) -> list:
        raw = self.raw_response(req)
        h = hashlib.sha256(raw.encode()).hexdigest()
        return [Proposal(t, self.name, h)
                for t in extract_fenced(raw)[: req.k]]


# ---------------------------------------------------------------------------
# Recorded-response replay


class ReplayBackend:
    """Serves recorded responses from a directory keyed by request hash."""

    name = "replay"

    def __init__(self, directory):
        self.directory = Path(directory)

    def _path(self, req: ProposalRequest) -> Path:
        return self.directory / f"{request_hash(req)}.txt"

    def raw_response(self, req: ProposalRequest) -> Optional[str]:
        path = self._path(req)
        return path.read_text() if path.exists() else None

    def generate(self, req: ProposalRequest) -> list:
        raw = self.raw_response(req)
        if raw is None:
            return []
        h = hashlib.sha256(raw.encode()).hexdigest()
        return [Proposal(t, self.name, h)
                for t in extract_fenced(raw)[: req.k]]


class RecordingBackend:
    """Wraps a backend and captures its raw responses for later replay."""

    def __init__(self, inner, directory):
        self.inner = inner
        self.name = inner.name
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def raw_response(self, req: ProposalRequest):
        return self.inner.raw_response(req)

    def generate(self, req: ProposalRequest) -> list:
        raw = self.inner.raw_response(req)
        if raw is None:
            proposals = self.inner.generate(req)
            raw = "\n".join(f"```\n{p.text.rstrip()}\n```" for p in proposals)
        (self.directory / f"{request_hash(req)}.txt").write_text(raw)
        h = hashlib.sha256(raw.encode()).hexdigest()
        return [Proposal(t, self.name, h)
                for t in extract_fenced(raw)[: req.k]]
