"""Immutable syntax tree for skill programs.

Every node is a frozen dataclass holding tuples, so programs have value
semantics: structural equality is ``==`` and edits always build new trees.

Nodes are addressed by *paths*: tuples of field names and tuple indices,
e.g. ``("body", 2, "args", 1)`` is the second argument of the third
top-level statement.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Union


class DSLError(Exception):
    pass


class PathError(DSLError):
    pass


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Kind:
    """An item or station literal such as ``plank``."""
    name: str


@dataclass(frozen=True)
class InvCount:
    item: "Expr"


@dataclass(frozen=True)
class Cap:
    item: "Expr"


@dataclass(frozen=True)
class ToolTier:
    pass


@dataclass(frozen=True)
class Func:
    name: str  # min | max
    args: tuple


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Kind, InvCount, Cap, ToolTier, Func, BinOp]


# -- conditions --------------------------------------------------------------

@dataclass(frozen=True)
class InvAtLeast:
    item: Expr
    count: Expr


@dataclass(frozen=True)
class StationPlaced:
    kind: Expr


@dataclass(frozen=True)
class ToolTierAtLeast:
    tier: int


@dataclass(frozen=True)
class Compare:
    left: Expr
    op: str
    right: Expr


Condition = Union[InvAtLeast, StationPlaced, ToolTierAtLeast, Compare]


# -- statements --------------------------------------------------------------

@dataclass(frozen=True)
class Prim:
    name: str
    args: tuple


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class If:
    cond: Condition
    then: tuple
    orelse: tuple


@dataclass(frozen=True)
class Repeat:
    count: Expr
    body: tuple


@dataclass(frozen=True)
class Let:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Assert:
    cond: Condition


Statement = Union[Prim, Call, If, Repeat, Let, Assert]
BLOCK_FIELDS = {If: ("then", "orelse"), Repeat: ("body",)}


# -- programs ----------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int | item | station
    default: int | str | None = None


@dataclass(frozen=True)
class SkillProgram:
    name: str
    params: tuple = ()
    pre: tuple = ()
    post: tuple = ()
    body: tuple = ()

    @property
    def param_names(self) -> tuple:
        return tuple(p.name for p in self.params)

    def children(self) -> frozenset:
        """Names of every skill invoked anywhere in the body."""
        return frozenset(s.name for _, s in walk_statements(self.body) if isinstance(s, Call))

    def renamed(self, name: str) -> "SkillProgram":
        return dataclasses.replace(self, name=name)


def atom_key(cond) -> tuple:
    """Identity of an atom ignoring its threshold; used to merge strengthened atoms."""
    if isinstance(cond, InvAtLeast):
        return ("inv", cond.item)
    if isinstance(cond, StationPlaced):
        return ("station", cond.kind)
    if isinstance(cond, ToolTierAtLeast):
        return ("tooltier",)
    return ("cmp", cond)


# -- traversal and path addressing -------------------------------------------

def walk_statements(block: tuple, prefix: tuple = ("body",)):
    """Yield ``(path, statement)`` for every statement, depth first, in order."""
    for i, stmt in enumerate(block):
        path = prefix + (i,)
        yield path, stmt
        for field in BLOCK_FIELDS.get(type(stmt), ()):
            yield from walk_statements(getattr(stmt, field), path + (field,))


def get_node(root, path: tuple):
    node = root
    for step in path:
        try:
            if isinstance(step, int):
                if not isinstance(node, tuple) or not 0 <= step < len(node):
                    raise PathError(f"index {step} out of range at {format_path(path)}")
                node = node[step]
            else:
                if not dataclasses.is_dataclass(node) or not hasattr(node, step):
                    raise PathError(f"no field {step!r} at {format_path(path)}")
                node = getattr(node, step)
        except TypeError as exc:
            raise PathError(f"bad path {format_path(path)}") from exc
    return node


def replace_node(root, path: tuple, value):
    """Return a copy of ``root`` with the node at ``path`` swapped for ``value``."""
    if not path:
        return value
    head, rest = path[0], path[1:]
    if isinstance(head, int):
        if not isinstance(root, tuple) or not 0 <= head < len(root):
            raise PathError(f"index {head} out of range")
        return root[:head] + (replace_node(root[head], rest, value),) + root[head + 1:]
    if not dataclasses.is_dataclass(root) or not hasattr(root, head):
        raise PathError(f"no field {head!r}")
    return dataclasses.replace(root, **{head: replace_node(getattr(root, head), rest, value)})


def format_path(path: tuple) -> str:
    return ".".join(str(p) for p in path)


def parse_path(text: str) -> tuple:
    if not text:
        return ()
    return tuple(int(p) if p.lstrip("-").isdigit() else p for p in text.split("."))


def count_nodes(node) -> int:
    """Number of syntax nodes (dataclass instances) in a tree."""
    if isinstance(node, tuple):
        return sum(count_nodes(n) for n in node)
    if dataclasses.is_dataclass(node):
        return 1 + sum(count_nodes(getattr(node, f.name)) for f in dataclasses.fields(node))
    return 0


def free_vars(node) -> set:
    """Var names referenced anywhere under ``node``."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, tuple):
        out = set()
        for n in node:
            out |= free_vars(n)
        return out
    if dataclasses.is_dataclass(node):
        out = set()
        for f in dataclasses.fields(node):
            out |= free_vars(getattr(node, f.name))
        return out
    return set()


def substitute(node, env: dict):
    """Replace ``Var`` nodes named in ``env`` by the mapped expressions."""
    if isinstance(node, Var):
        return env.get(node.name, node)
    if isinstance(node, tuple):
        return tuple(substitute(n, env) for n in node)
    if dataclasses.is_dataclass(node) and not isinstance(node, type):
        changes = {}
        for f in dataclasses.fields(node):
            old = getattr(node, f.name)
            new = substitute(old, env)
            if new is not old:
                changes[f.name] = new
        return dataclasses.replace(node, **changes) if changes else node
    return node
