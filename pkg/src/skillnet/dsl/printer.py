"""Canonical pretty-printer. Equal trees print identically and vice versa."""
from __future__ import annotations

from .ast import (
    Assert, BinOp, Call, Cap, Compare, Func, If, InvAtLeast, InvCount, Kind,
    Let, Num, Prim, Repeat, SkillProgram, StationPlaced, ToolTier,
    ToolTierAtLeast, Var,
)

INDENT = "  "
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def print_expr(e, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, (Var, Kind)):
        return e.name
    if isinstance(e, InvCount):
        return f"inv({print_expr(e.item)})"
    if isinstance(e, Cap):
        return f"cap({print_expr(e.item)})"
    if isinstance(e, ToolTier):
        return "tooltier"
    if isinstance(e, Func):
        return f"{e.name}({', '.join(print_expr(a) for a in e.args)})"
    if isinstance(e, BinOp):
        prec = _PREC[e.op]
        text = f"{print_expr(e.left, prec)} {e.op} {print_expr(e.right, prec, right=True)}"
        if prec < parent_prec or (right and prec == parent_prec):
            return f"({text})"
        return text
    raise TypeError(f"not an expression: {e!r}")


def print_condition(c) -> str:
    if isinstance(c, InvAtLeast):
        return f"inv({print_expr(c.item)}) >= {print_expr(c.count)}"
    if isinstance(c, StationPlaced):
        return f"station({print_expr(c.kind)})"
    if isinstance(c, ToolTierAtLeast):
        return f"tooltier >= {c.tier}"
    if isinstance(c, Compare):
        return f"{print_expr(c.left)} {c.op} {print_expr(c.right)}"
    raise TypeError(f"not a condition: {c!r}")


def print_conditions(conds) -> str:
    return "{" + ", ".join(print_condition(c) for c in conds) + "}"


def _args(args) -> str:
    return ", ".join(print_expr(a) for a in args)


def _block(stmts, depth: int) -> list:
    lines = []
    for s in stmts:
        lines.extend(print_statement_lines(s, depth))
    return lines


def print_statement_lines(s, depth: int = 0) -> list:
    pad = INDENT * depth
    if isinstance(s, Prim):
        return [f"{pad}prim {s.name}({_args(s.args)});"]
    if isinstance(s, Call):
        return [f"{pad}call {s.name}({_args(s.args)});"]
    if isinstance(s, Let):
        return [f"{pad}let {s.name} = {print_expr(s.expr)};"]
    if isinstance(s, Assert):
        return [f"{pad}assert ({print_condition(s.cond)});"]
    if isinstance(s, If):
        return ([f"{pad}if ({print_condition(s.cond)}) {{"]
                + _block(s.then, depth + 1)
                + [f"{pad}}} else {{"]
                + _block(s.orelse, depth + 1)
                + [f"{pad}}}"])
    if isinstance(s, Repeat):
        return ([f"{pad}repeat ({print_expr(s.count)}) {{"]
                + _block(s.body, depth + 1)
                + [f"{pad}}}"])
    raise TypeError(f"not a statement: {s!r}")


def print_statement(s) -> str:
    return "\n".join(print_statement_lines(s))


def _param(p) -> str:
    text = f"{p.name}: {p.kind}"
    if p.default is not None:
        text += f" = {p.default}"
    return text


def print_skill(p: SkillProgram) -> str:
    head = (f"skill {p.name}({', '.join(_param(x) for x in p.params)}) "
            f"pre{print_conditions(p.pre)} post{print_conditions(p.post)} {{")
    return "\n".join([head] + _block(p.body, 1) + ["}"]) + "\n"
