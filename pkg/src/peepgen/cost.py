"""Static profitability model: per-opcode micro-operation costs.

Costs are width-independent rationals; a rewrite is profitable only when the
replacement is strictly cheaper.  The default table lives in a data file so
it can be recalibrated against a real analyzer.
"""
from __future__ import annotations

from fractions import Fraction
from importlib import resources
from typing import Optional

from .ir import OPCODES, Function, PeepError, Rule


class CostTableError(PeepError):
    pass


class CostTable:
    """Immutable opcode -> uOps mapping covering every opcode."""

    def __init__(self, entries: dict):
        for op in OPCODES:
            if op not in entries:
                raise CostTableError(f"cost table missing opcode {op}")
        for op, c in entries.items():
            if op not in OPCODES:
                raise CostTableError(f"cost table has unknown opcode {op}")
            if c <= 0:
                raise CostTableError(f"cost for {op} must be positive")
        self._entries = dict(entries)

    def __getitem__(self, op: str) -> Fraction:
        return self._entries[op]

    @classmethod
    def parse(cls, text: str, base: Optional["CostTable"] = None) -> "CostTable":
        """Line-oriented `opcode = number` overrides on top of `base`."""
        entries = dict(base._entries) if base is not None else {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CostTableError(f"line {lineno}: expected `opcode = number`")
            op, value = (part.strip() for part in line.split("=", 1))
            if op not in OPCODES:
                raise CostTableError(f"line {lineno}: unknown opcode {op}")
            try:
                entries[op] = Fraction(value)
            except (ValueError, ZeroDivisionError):
                raise CostTableError(f"line {lineno}: bad cost {value!r}")
        return cls(entries)

    @classmethod
    def default(cls) -> "CostTable":
        text = resources.files("peepgen").joinpath("data/uops.cost").read_text()
        return cls.parse(text)


_DEFAULT: Optional[CostTable] = None


def default_table() -> CostTable:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = CostTable.default()
    return _DEFAULT


def cost(fn: Function, table: Optional[CostTable] = None) -> Fraction:
    """Sum of per-instruction uOps; parameters and ret are free."""
    table = table or default_table()
    return sum((table[i.op] for i in fn.body), Fraction(0))


def check_profitable(rule: Rule, table: Optional[CostTable] = None) -> bool:
    table = table or default_table()
    return cost(rule.rhs, table) < cost(rule.lhs, table)
