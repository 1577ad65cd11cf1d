"""Structural edits on skill programs.

Edits are plain values; ``apply_edit`` returns a new program or raises,
never leaving a half-edited tree behind (programs are immutable anyway).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..kinds import PRIMITIVES
from .ast import (
    Call, DSLError, Kind, Num, PathError, Prim, SkillProgram, atom_key,
    format_path, get_node, parse_path, replace_node,
)
from .check import WellFormednessError, canonical, check_program
from .printer import print_condition, print_expr, print_statement


class EditError(DSLError):
    pass


@dataclass(frozen=True)
class SetConstant:
    path: tuple
    value: int | str


@dataclass(frozen=True)
class InsertStatement:
    path: tuple  # ends in the index the new statement will occupy
    stmt: object


@dataclass(frozen=True)
class InsertStatements:
    """Several consecutive insertions at one position (a block splice)."""
    path: tuple
    stmts: tuple


@dataclass(frozen=True)
class RemoveStatement:
    path: tuple


@dataclass(frozen=True)
class ReplaceCall:
    path: tuple
    callee: str
    args: tuple


@dataclass(frozen=True)
class AddPrecondition:
    cond: object


@dataclass(frozen=True)
class AddPostcondition:
    cond: object


@dataclass(frozen=True)
class RemoveCondition:
    which: str  # pre | post
    cond: object


@dataclass(frozen=True)
class ReorderStatements:
    path: tuple  # addresses a block, e.g. ("body",) or ("body", 3, "then")
    permutation: tuple


Edit = (SetConstant | InsertStatement | InsertStatements | RemoveStatement | ReplaceCall
        | AddPrecondition | AddPostcondition | RemoveCondition | ReorderStatements)

# edits that address a node by path (used for conflict detection)
PATH_EDITS = (SetConstant, InsertStatement, InsertStatements, RemoveStatement,
              ReplaceCall, ReorderStatements)


def _block_and_index(p: SkillProgram, path: tuple, inserting: bool):
    if not path or not isinstance(path[-1], int):
        raise PathError(f"path {format_path(path)} does not address a statement slot")
    block = get_node(p, path[:-1])
    if not isinstance(block, tuple):
        raise PathError(f"{format_path(path[:-1])} is not a statement block")
    idx = path[-1]
    hi = len(block) if inserting else len(block) - 1
    if not 0 <= idx <= hi:
        raise PathError(f"index {idx} out of range at {format_path(path)}")
    return block, idx


def _with_condition(conds: tuple, cond) -> tuple:
    key = atom_key(cond)
    return tuple(c for c in conds if atom_key(c) != key) + (cond,)


def _apply(p: SkillProgram, e) -> SkillProgram:
    if isinstance(e, SetConstant):
        node = get_node(p, e.path)
        if isinstance(node, Num) and isinstance(e.value, int) and not isinstance(e.value, bool):
            return replace_node(p, e.path, Num(e.value))
        if isinstance(node, Kind) and isinstance(e.value, str):
            return replace_node(p, e.path, Kind(e.value))
        raise EditError(f"no literal of matching type at {format_path(e.path)}")
    if isinstance(e, (InsertStatement, InsertStatements)):
        stmts = (e.stmt,) if isinstance(e, InsertStatement) else tuple(e.stmts)
        block, idx = _block_and_index(p, e.path, inserting=True)
        return replace_node(p, e.path[:-1], block[:idx] + stmts + block[idx:])
    if isinstance(e, RemoveStatement):
        block, idx = _block_and_index(p, e.path, inserting=False)
        return replace_node(p, e.path[:-1], block[:idx] + block[idx + 1:])
    if isinstance(e, ReplaceCall):
        node = get_node(p, e.path)
        if not isinstance(node, (Prim, Call)):
            raise EditError(f"no call at {format_path(e.path)}")
        new = Prim(e.callee, tuple(e.args)) if e.callee in PRIMITIVES else Call(e.callee, tuple(e.args))
        return replace_node(p, e.path, new)
    if isinstance(e, AddPrecondition):
        return dataclasses.replace(p, pre=_with_condition(p.pre, e.cond))
    if isinstance(e, AddPostcondition):
        return dataclasses.replace(p, post=_with_condition(p.post, e.cond))
    if isinstance(e, RemoveCondition):
        conds = getattr(p, e.which)
        if e.cond not in conds:
            raise EditError(f"{print_condition(e.cond)} not in {e.which}")
        return dataclasses.replace(p, **{e.which: tuple(c for c in conds if c != e.cond)})
    if isinstance(e, ReorderStatements):
        block = get_node(p, e.path)
        if not isinstance(block, tuple):
            raise PathError(f"{format_path(e.path)} is not a statement block")
        if sorted(e.permutation) != list(range(len(block))):
            raise EditError(f"not a permutation of {len(block)} statements")
        return replace_node(p, e.path, tuple(block[i] for i in e.permutation))
    raise EditError(f"unknown edit {e!r}")


def apply_edit(p: SkillProgram, e) -> SkillProgram:
    """Apply one edit; the result is canonicalised and re-checked."""
    try:
        out = canonical(_apply(p, e))
        check_program(out)
    except WellFormednessError as exc:
        raise EditError(f"edit yields ill-formed program: {exc}") from exc
    return out


def apply_edits(p: SkillProgram, edits) -> SkillProgram:
    for e in edits:
        p = apply_edit(p, e)
    return p


def inverse_edit(p: SkillProgram, e):
    """The edit undoing ``e`` when applied to ``apply_edit(p, e)``."""
    if isinstance(e, SetConstant):
        node = get_node(p, e.path)
        return SetConstant(e.path, node.value if isinstance(node, Num) else node.name)
    if isinstance(e, InsertStatement):
        return RemoveStatement(e.path)
    if isinstance(e, RemoveStatement):
        return InsertStatement(e.path, get_node(p, e.path))
    if isinstance(e, ReplaceCall):
        node = get_node(p, e.path)
        return ReplaceCall(e.path, node.name, node.args)
    if isinstance(e, (AddPrecondition, AddPostcondition)):
        which = "pre" if isinstance(e, AddPrecondition) else "post"
        old = [c for c in getattr(p, which) if atom_key(c) == atom_key(e.cond)]
        if old:
            return type(e)(old[0])
        return RemoveCondition(which, e.cond)
    if isinstance(e, RemoveCondition):
        return AddPrecondition(e.cond) if e.which == "pre" else AddPostcondition(e.cond)
    if isinstance(e, ReorderStatements):
        inv = [0] * len(e.permutation)
        for new_pos, old_pos in enumerate(e.permutation):
            inv[old_pos] = new_pos
        return ReorderStatements(e.path, tuple(inv))
    raise EditError(f"no inverse for {e!r}")


def inverse_edits(p: SkillProgram, e) -> list:
    """Edits undoing ``e`` (a block splice needs one removal per statement)."""
    if isinstance(e, InsertStatements):
        return [RemoveStatement(e.path) for _ in e.stmts]
    return [inverse_edit(p, e)]


def edit_path(e) -> tuple | None:
    return getattr(e, "path", None)


# -- JSON wire format ----------------------------------------------------------

_NAMES = {
    SetConstant: "set_constant", InsertStatement: "insert_statement",
    InsertStatements: "insert_statements", RemoveStatement: "remove_statement",
    ReplaceCall: "replace_call", AddPrecondition: "add_precondition",
    AddPostcondition: "add_postcondition", RemoveCondition: "remove_condition",
    ReorderStatements: "reorder_statements",
}
_BY_NAME = {v: k for k, v in _NAMES.items()}


def edit_to_json(e) -> dict:
    out = {"op": _NAMES[type(e)]}
    if hasattr(e, "path"):
        out["path"] = format_path(e.path)
    if isinstance(e, SetConstant):
        out["value"] = e.value
    elif isinstance(e, InsertStatement):
        out["stmt"] = print_statement(e.stmt)
    elif isinstance(e, InsertStatements):
        out["stmts"] = [print_statement(s) for s in e.stmts]
    elif isinstance(e, ReplaceCall):
        out["callee"] = e.callee
        out["args"] = [print_expr(a) for a in e.args]
    elif isinstance(e, (AddPrecondition, AddPostcondition)):
        out["cond"] = print_condition(e.cond)
    elif isinstance(e, RemoveCondition):
        out["which"] = e.which
        out["cond"] = print_condition(e.cond)
    elif isinstance(e, ReorderStatements):
        out["permutation"] = list(e.permutation)
    return out


def edit_from_json(d: dict):
    from .parse import parse_condition, parse_expr, parse_statement

    try:
        cls = _BY_NAME[d["op"]]
        path = parse_path(d.get("path", ""))
        if cls is SetConstant:
            return SetConstant(path, d["value"])
        if cls is InsertStatement:
            return InsertStatement(path, parse_statement(d["stmt"]))
        if cls is InsertStatements:
            return InsertStatements(path, tuple(parse_statement(s) for s in d["stmts"]))
        if cls is RemoveStatement:
            return RemoveStatement(path)
        if cls is ReplaceCall:
            return ReplaceCall(path, d["callee"], tuple(parse_expr(a) for a in d["args"]))
        if cls in (AddPrecondition, AddPostcondition):
            return cls(parse_condition(d["cond"]))
        if cls is RemoveCondition:
            return RemoveCondition(d["which"], parse_condition(d["cond"]))
        return ReorderStatements(path, tuple(d["permutation"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise EditError(f"malformed edit {d!r}: {exc}") from exc
