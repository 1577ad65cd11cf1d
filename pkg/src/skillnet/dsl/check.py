"""Well-formedness and light type checking of skill programs."""
from __future__ import annotations

import dataclasses

from ..kinds import ITEMS, KINDS, PRIMITIVES, STATIONS
from .ast import (
    Assert, BinOp, Call, Cap, Compare, DSLError, Func, If, InvAtLeast, InvCount,
    Kind, Let, Num, Prim, Repeat, SkillProgram, StationPlaced, ToolTier,
    ToolTierAtLeast, Var,
)
from .printer import print_condition


class WellFormednessError(DSLError):
    """Raised for arity/type/scope violations; ``identifier`` names the culprit."""

    def __init__(self, message: str, identifier: str | None = None):
        super().__init__(message)
        self.identifier = identifier


def canonical(p: SkillProgram) -> SkillProgram:
    """Sort pre/post atoms by printed form so printing is order independent."""
    pre = tuple(sorted(set(p.pre), key=print_condition))
    post = tuple(sorted(set(p.post), key=print_condition))
    if pre == p.pre and post == p.post:
        return p
    return dataclasses.replace(p, pre=pre, post=post)


def expr_kinds(e, scope: dict) -> set:
    """Possible kinds ('int', 'item', 'station') of an expression under ``scope``."""
    if isinstance(e, Num):
        return {"int"}
    if isinstance(e, Kind):
        out = set()
        if e.name in ITEMS:
            out.add("item")
        if e.name in STATIONS:
            out.add("station")
        if not out:
            raise WellFormednessError(f"unknown kind {e.name!r}", e.name)
        return out
    if isinstance(e, Var):
        if e.name not in scope:
            raise WellFormednessError(f"undeclared identifier {e.name!r}", e.name)
        return {scope[e.name]}
    if isinstance(e, (InvCount, Cap)):
        _require(e.item, "item", scope)
        return {"int"}
    if isinstance(e, ToolTier):
        return {"int"}
    if isinstance(e, Func):
        if e.name not in ("min", "max") or len(e.args) != 2:
            raise WellFormednessError(f"bad function {e.name}/{len(e.args)}", e.name)
        for a in e.args:
            _require(a, "int", scope)
        return {"int"}
    if isinstance(e, BinOp):
        _require(e.left, "int", scope)
        _require(e.right, "int", scope)
        return {"int"}
    raise WellFormednessError(f"not an expression: {e!r}")


def _require(e, kind: str, scope: dict, who: str | None = None):
    kinds = expr_kinds(e, scope)
    if kind not in kinds:
        ident = getattr(e, "name", None) or who
        raise WellFormednessError(f"expected {kind} expression, got {sorted(kinds)} ({ident})", ident)


def check_condition(c, scope: dict):
    if isinstance(c, InvAtLeast):
        _require(c.item, "item", scope)
        _require(c.count, "int", scope)
    elif isinstance(c, StationPlaced):
        _require(c.kind, "station", scope)
    elif isinstance(c, ToolTierAtLeast):
        if not isinstance(c.tier, int) or c.tier < 0:
            raise WellFormednessError("tool tier must be a non-negative integer")
    elif isinstance(c, Compare):
        _require(c.left, "int", scope)
        _require(c.right, "int", scope)
    else:
        raise WellFormednessError(f"not a condition: {c!r}")


def _check_block(block: tuple, scope: dict, params: frozenset):
    scope = dict(scope)
    for s in block:
        if isinstance(s, Prim):
            sig = PRIMITIVES.get(s.name)
            if sig is None:
                raise WellFormednessError(f"unknown primitive {s.name!r}", s.name)
            if len(s.args) != len(sig):
                raise WellFormednessError(
                    f"primitive {s.name} takes {len(sig)} arguments, got {len(s.args)}", s.name)
            for a, kind in zip(s.args, sig):
                _require(a, kind, scope, s.name)
        elif isinstance(s, Call):
            if s.name in PRIMITIVES:
                raise WellFormednessError(f"{s.name!r} is a primitive; use prim", s.name)
            for a in s.args:
                expr_kinds(a, scope)
        elif isinstance(s, If):
            check_condition(s.cond, scope)
            _check_block(s.then, scope, params)
            _check_block(s.orelse, scope, params)
        elif isinstance(s, Repeat):
            _require(s.count, "int", scope)
            _check_block(s.body, scope, params)
        elif isinstance(s, Let):
            if s.name in KINDS:
                raise WellFormednessError(f"variable {s.name!r} shadows a kind", s.name)
            if s.name in params:
                raise WellFormednessError(f"variable {s.name!r} shadows a parameter", s.name)
            _require(s.expr, "int", scope)
            scope[s.name] = "int"
        elif isinstance(s, Assert):
            check_condition(s.cond, scope)
        else:
            raise WellFormednessError(f"not a statement: {s!r}")


def check_program(p: SkillProgram) -> SkillProgram:
    scope = {}
    for prm in p.params:
        if prm.name in scope:
            raise WellFormednessError(f"duplicate parameter {prm.name!r}", prm.name)
        if prm.name in KINDS:
            raise WellFormednessError(f"parameter {prm.name!r} shadows a kind", prm.name)
        if prm.kind not in ("int", "item", "station"):
            raise WellFormednessError(f"bad parameter kind {prm.kind!r}", prm.name)
        if prm.default is not None:
            ok = (isinstance(prm.default, int) if prm.kind == "int"
                  else prm.default in (ITEMS if prm.kind == "item" else STATIONS))
            if not ok:
                raise WellFormednessError(f"default of {prm.name!r} does not match {prm.kind}", prm.name)
        scope[prm.name] = prm.kind
    params_only = dict(scope)
    for c in p.pre + p.post:
        check_condition(c, params_only)
    _check_block(p.body, scope, frozenset(p.param_names))
    return p
