"""Pluggable Reflect / CodeGen / Plan operators.

``OracleOperators`` is a deterministic rule-based backend: recipe regression
for forward planning, straight-line composites for code generation, and a
trace-driven fault classifier for reflection. ``HttpOperators`` forwards the
same requests as JSON and falls back to the oracle on any protocol error.
"""
from __future__ import annotations

import json
import logging
import math
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace

import jsonschema
import numpy as np

from .dsl import (
    AddPrecondition, Call, Compare, EvalError, If, InsertStatement, InsertStatements,
    InvAtLeast, Kind, Let, Num, Prim, RemoveStatement, Repeat, ReplaceCall, SetConstant,
    SkillProgram, StationPlaced, ToolTierAtLeast, Var, apply_edit, edit_from_json,
    edit_to_json, eval_expr, get_node, parse_skill, print_condition, print_skill,
)
from .dsl.ast import BinOp, Cap, Func, walk_statements
from .dsl.edits import EditError
from .executor import Feedback, composite_from_plan, execute_skill
from .planner import PlannerConfig, backward_chain
from .world import WorldError, default_book, step_primitive

log = logging.getLogger(__name__)

# gradient types and their default magnitudes
MAGNITUDE = {
    "logic": 0.8,
    "precondition": 0.7,
    "error_handling": 0.7,
    "resource_management": 0.6,
    "physical_constraint": 0.5,
    "interface": 0.4,
    "parameter_semantic": 0.5,
}
# literal search radius for dry-run repairs
SEARCH_RADIUS = 64


@dataclass
class Issue:
    gradient_type: str
    magnitude: float
    direction: str
    edit: object

    def to_json(self) -> dict:
        return {"gradient_type": self.gradient_type, "magnitude": self.magnitude,
                "direction": self.direction, "edit": edit_to_json(self.edit)}

    @classmethod
    def from_json(cls, d: dict) -> "Issue":
        return cls(d["gradient_type"], float(d["magnitude"]), d.get("direction", ""),
                   edit_from_json(d["edit"]))


@dataclass
class Gradient:
    target: str
    issues: list = field(default_factory=list)
    child_feedback: dict = field(default_factory=dict)  # child id -> Feedback
    child_entries: dict = field(default_factory=dict)  # child id -> TraceEntry it refers to
    reasoning: str = ""

    def to_json(self) -> dict:
        return {"target": self.target, "self_issues": [i.to_json() for i in self.issues],
                "child_issues": [{"child": k, "feedback": v.to_json()}
                                 for k, v in sorted(self.child_feedback.items())],
                "reasoning": self.reasoning}


# -- forward planning: recipe regression with simulation ------------------------------

class RegressionError(Exception):
    pass


def regress(atom, state, book=None, limit: int = 200) -> list:
    """Primitive steps reaching ``atom`` from ``state``, found by regressing
    through the recipe graph and simulating each step."""
    book = book or default_book()
    steps = []
    sim = [state]

    def do(name, args):
        if len(steps) >= limit:
            raise RegressionError("step limit reached")
        new, fb, ok = step_primitive(sim[0], name, args, book)
        if not ok:
            raise RegressionError(fb.message)
        sim[0] = new
        steps.append((name, args))

    def need_tier(t, depth):
        if sim[0].tool_tier >= t:
            return
        tools = sorted((tier, tool) for tool, tier in book.tools.items() if tier >= t)
        if not tools:
            raise RegressionError(f"no tool reaches tier {t}")
        need_item(tools[0][1], 1, depth + 1)

    def need_station(s, depth):
        if s in sim[0].stations:
            return
        need_item(s, 1, depth + 1)
        do("place", (s,))

    def need_item(item, n, depth):
        if depth > 32:
            raise RegressionError("recipe graph too deep")
        if sim[0].count(item) >= n:
            return
        if item in book.gather:
            need_tier(book.gather[item], depth)
            do("gather", (item, n - sim[0].count(item)))
            return
        recipe = book.recipes.get(item)
        if recipe is None:
            raise RegressionError(f"no way to obtain {item}")
        batches = math.ceil((n - sim[0].count(item)) / recipe.count)
        if recipe.station:
            need_station(recipe.station, depth)
        need_tier(recipe.tool_tier_required, depth)
        # inputs can compete (sticks eat planks), so loop until all are present together
        for _ in range(len(recipe.inputs) + 1):
            for inp, k in recipe.inputs:
                need_item(inp, k * batches, depth + 1)
            if all(sim[0].count(inp) >= k * batches for inp, k in recipe.inputs):
                break
        do(recipe.kind, (item, batches))

    if isinstance(atom, InvAtLeast):
        need_item(atom.item.name, atom.count.value, 0)
    elif isinstance(atom, StationPlaced):
        need_station(atom.kind.name, 0)
    elif isinstance(atom, ToolTierAtLeast):
        need_tier(atom.tier, 0)
    else:
        raise RegressionError(f"cannot regress {print_condition(atom)}")
    return steps


# -- network views used while reflecting ------------------------------------------

class Overlay:
    """Read-only view of a network with some programs swapped (for dry runs)."""

    def __init__(self, net, programs: dict):
        self.net = net
        self.programs = programs

    def __contains__(self, name):
        return name in self.programs or name in self.net

    def node(self, name):
        node = self.net.node(name)
        if name in self.programs:
            return _NodeView(self.programs[name])
        return node

    def program(self, name):
        return self.node(name).program


@dataclass
class _NodeView:
    program: SkillProgram


class ExcludingView:
    """Planning view hiding skills that would create call cycles."""

    def __init__(self, net, excluded: set):
        self.net = net
        self.excluded = set(excluded)

    @property
    def nodes(self):
        return self.net.nodes

    def skills_achieving(self, goal):
        return self.net.skills_achieving(goal) - self.excluded

    def program(self, name):
        return self.net.program(name)

    def value(self, name):
        return self.net.value(name)

    def __contains__(self, name):
        return name in self.net


def ancestors(net, name: str) -> set:
    """``name`` plus every skill that can reach it through calls."""
    out, frontier = {name}, [name]
    while frontier:
        cur = frontier.pop()
        for p in net.parents(cur):
            if p not in out:
                out.add(p)
                frontier.append(p)
    return out


# -- reflection context ----------------------------------------------------------------

@dataclass
class ReflectContext:
    net: object
    trace: object
    book: object = None
    budget: int = 512
    history: list = field(default_factory=list)
    # the frame candidate edits are replayed against; the whole episode when unset
    frame: object = None

    def at(self, entry) -> "ReflectContext":
        return replace(self, frame=entry)

    def parent_of(self, entry):
        for e in self.trace.root.walk():
            if any(c is entry for c in e.children):
                return e
        return None

    @property
    def target(self):
        return self.frame if self.frame is not None else self.trace.root


def progress(trace_root) -> int:
    """Primitive steps that succeeded anywhere in a trace."""
    return sum(1 for e in trace_root.walk() for ev in e.events if ev.kind == "prim" and ev.ok)


def failure_signature(trace_root):
    """(skill, path, kind, item) of the innermost failure, or None on success."""
    e = trace_root
    while True:
        i = e.failed_child()
        if i is None:
            break
        e = e.children[i]
    if e.ok:
        return None
    fb = e.feedback
    return (e.skill, e.failing_path, fb.kind if fb else e.status, fb.item if fb else None)


def dry_run(ctx: ReflectContext, programs: dict):
    """Re-run the target frame from its recorded start with ``programs`` swapped in.

    Only the frame under repair is replayed, so a candidate is judged on the
    slice of the episode its skill can see.
    """
    root = ctx.target
    view = Overlay(ctx.net, programs)
    try:
        _, delta, trace, _ = execute_skill(root.skill, root.bindings, root.sigma_pre, view,
                                           ctx.budget, ctx.book)
    except Exception:  # a candidate that breaks execution outright never passes
        return False, None, -1
    return delta, failure_signature(trace.root), progress(trace.root)


def _passes(ctx, programs, before) -> bool:
    """A candidate passes if the episode succeeds, or fails elsewhere after doing more."""
    delta, sig, done = dry_run(ctx, programs)
    return delta or (sig is not None and sig != before and done > progress(ctx.target))


# -- helpers over programs ------------------------------------------------------------

def _literal_paths(expr, path) -> list:
    """Paths of integer literals inside an expression, in reading order."""
    if isinstance(expr, Num):
        return [path]
    if isinstance(expr, BinOp):
        return _literal_paths(expr.left, path + ("left",)) + _literal_paths(expr.right, path + ("right",))
    if isinstance(expr, Func):
        out = []
        for i, a in enumerate(expr.args):
            out += _literal_paths(a, path + ("args", i))
        return out
    return []


def _let_sites(program: SkillProgram) -> dict:
    return {s.name: (p, s) for p, s in walk_statements(program.body) if isinstance(s, Let)}


def traced_literals(program: SkillProgram, expr, path) -> list:
    """Literal paths an expression's value depends on, following let bindings."""
    out = list(_literal_paths(expr, path))
    lets = _let_sites(program)
    seen = set()

    def follow(e):
        if isinstance(e, Var) and e.name in lets and e.name not in seen:
            seen.add(e.name)
            lpath, let = lets[e.name]
            out.extend(_literal_paths(let.expr, lpath + ("expr",)))
            follow(let.expr)
        elif isinstance(e, BinOp):
            follow(e.left)
            follow(e.right)
        elif isinstance(e, Func):
            for a in e.args:
                follow(a)

    follow(expr)
    return out


def _enclosing_repeats(program, path) -> list:
    """Literal paths in the count of every Repeat enclosing ``path``."""
    out = []
    for i in range(1, len(path)):
        node_path = path[:i]
        if not isinstance(node_path[-1], int):
            continue
        try:
            node = get_node(program, node_path)
        except Exception:
            continue
        if isinstance(node, Repeat):
            out += traced_literals(program, node.count, node_path + ("count",))
    return out


def _arg_item(program, arg, bindings):
    if isinstance(arg, Kind):
        return arg.name
    if isinstance(arg, Var) and arg.name in bindings and isinstance(bindings[arg.name], str):
        return bindings[arg.name]
    return None


def produces(stmt, need, net, bindings, book=None) -> bool:
    """Does ``stmt`` (recursively) establish ``need``?

    ``need`` is ("item", X) | ("station", S) | ("tier", t).
    """
    kind, what = need
    if isinstance(stmt, Prim):
        book = book or default_book()
        if not stmt.args:
            return False
        item = _arg_item(None, stmt.args[0], bindings)
        if stmt.name == "place":
            return kind == "station" and item == what
        if kind == "item":
            return stmt.name in ("gather", "craft", "smelt") and item == what
        if kind == "station":
            return item == what
        if kind == "tier":
            return item is not None and book.tools.get(item, 0) >= what
        return False
    if isinstance(stmt, Call):
        if stmt.name not in net:
            return False
        callee = net.program(stmt.name)
        for c in callee.post:
            if kind == "item" and isinstance(c, InvAtLeast):
                ci = c.item
                if isinstance(ci, Kind) and ci.name == what:
                    return True
                if isinstance(ci, Var) and ci.name in callee.param_names:
                    idx = callee.param_names.index(ci.name)
                    if idx < len(stmt.args) and _arg_item(None, stmt.args[idx], bindings) == what:
                        return True
            if kind == "station" and isinstance(c, StationPlaced) and getattr(c.kind, "name", None) == what:
                return True
            if kind == "tier" and isinstance(c, ToolTierAtLeast) and c.tier >= what:
                return True
        return False
    if isinstance(stmt, If):
        return any(produces(s, need, net, bindings, book) for s in stmt.then + stmt.orelse)
    if isinstance(stmt, Repeat):
        return any(produces(s, need, net, bindings, book) for s in stmt.body)
    return False


def _need_of(fb, atom=None):
    """Translate a failure into the requirement that was missing."""
    if atom is not None:
        if isinstance(atom, InvAtLeast) and isinstance(atom.item, Kind):
            return ("item", atom.item.name)
        if isinstance(atom, StationPlaced) and isinstance(atom.kind, Kind):
            return ("station", atom.kind.name)
        if isinstance(atom, ToolTierAtLeast):
            return ("tier", atom.tier)
        return None
    if fb is None:
        return None
    if fb.kind in ("insufficient", "postcondition") and fb.item:
        return ("item", fb.item)
    if fb.kind == "missing_station":
        return ("station", fb.item)
    if fb.kind == "tool_tier":
        return ("tier", fb.need)
    return None


def need_atom(need, amount=None):
    kind, what = need
    if kind == "item":
        return InvAtLeast(Kind(what), Num(max(1, amount or 1)))
    if kind == "station":
        return StationPlaced(Kind(what))
    return ToolTierAtLeast(what)


def _statement_paths_before(entry, stop_path=None) -> list:
    """Executed statement events of a frame, in order, up to ``stop_path``."""
    out = []
    for ev in entry.events:
        if stop_path is not None and ev.path == stop_path:
            break
        out.append(ev)
    return out


# -- the oracle -------------------------------------------------------------------------

class OracleOperators:
    name = "oracle"

    def __init__(self, book=None):
        self.book = book or default_book()

    # Plan operator
    def forward(self, atoms, state, net):
        out = []
        for a in atoms:
            try:
                out.append(regress(a, state, self.book))
            except (RegressionError, WorldError):
                out.append([])
        return out

    # CodeGen operator
    def codegen(self, plan, context, net):
        return composite_from_plan(context["name"], plan, context["goal"], net, context.get("assumed", ()))

    # Reflect operator
    def reflect(self, program: SkillProgram, feedback: Feedback, entry, ctx: ReflectContext) -> Gradient:
        g = Gradient(program.name)
        contract = [m for m in feedback.messages if m.get("kind") == "contract"]
        if contract and entry.ok:
            # judged on the caller's frame: that is where the shortfall showed
            caller = ctx.parent_of(entry)
            self._contract(program, contract[0], entry, ctx.at(caller or ctx.trace.root), g)
            return g
        ctx = ctx.at(entry)
        i = entry.failed_child()
        if i is not None:
            self._child_failure(program, entry, i, ctx, g)
        elif not entry.ok:
            self._local_failure(program, entry, ctx, g)
        if not g.issues and not g.child_feedback:
            g.reasoning = g.reasoning or "no repair rule applies"
        return g

    # -- cases ----------------------------------------------------------------------
    def _child_failure(self, program, entry, i, ctx, g):
        child = entry.children[i]
        call_ev = next(ev for ev in entry.events if ev.kind == "call" and ev.child == i)
        if child.pre_violated:
            # the caller broke the callee's contract: fix the caller
            atom = child.pre_violated[0]
            need = _need_of(None, atom)
            g.reasoning = (f"{child.skill} was entered with its precondition "
                           f"{print_condition(atom)} unmet; {program.name} must establish it")
            amount = None
            if isinstance(atom, InvAtLeast) and isinstance(atom.count, Num):
                amount = atom.count.value
            if need is not None:
                self._supply(program, entry, call_ev.path, need, amount, child.sigma_pre, ctx, g,
                             gtype="precondition", contract=need[0] == "item")
            if not g.issues:
                g.child_feedback[child.skill] = _child_fb(child)
                g.child_entries[child.skill] = child
            return
        g.reasoning = f"failure localised inside {child.skill}"
        g.child_feedback[child.skill] = _child_fb(child)
        g.child_entries[child.skill] = child

    def _local_failure(self, program, entry, ctx, g):
        fb = entry.feedback
        path = entry.failing_path
        state = entry.sigma_post
        if entry.status == "aborted":
            g.reasoning = "primitive budget exhausted"
            return
        if fb is None:
            g.reasoning = "failure without feedback"
            return
        atom = None
        if fb.kind == "postcondition" and entry.post_violated:
            atom = entry.post_violated[0]
        elif fb.kind == "assertion" and path is not None:
            atom = get_node(program, path).cond
        need = _need_of(fb, atom)
        # 1. a primitive producing something nobody asked for
        if self._wrong_call(program, entry, need, ctx, g):
            return
        if fb.kind == "capacity":
            self._clamp(program, path, fb, g)
            return
        if fb.kind == "depleted":
            if self._trim(program, path, fb, ctx, g):
                return
            g.issues.append(Issue("physical_constraint", MAGNITUDE["physical_constraint"],
                                  f"explore for more {fb.item} before gathering",
                                  InsertStatement(path, Prim("explore", (Kind(fb.item), Num(fb.need))))))
            return
        if need is None:
            g.reasoning = f"unclassified failure kind {fb.kind!r}: {fb.message}"
            return
        # 2. a guard that skipped the producer
        if self._unsafe_fallback(program, entry, need, path, ctx, g):
            return
        where = path if path is not None else ("body", len(program.body))
        amount = fb.need if need[0] == "item" else None
        gtype = "resource_management" if need[0] == "item" else "precondition"
        self._supply(program, entry, where, need, amount, state, ctx, g, gtype=gtype,
                     contract=need[0] == "item")
        if need[0] in ("station", "tier") and g.issues:
            g.issues.append(Issue("precondition", MAGNITUDE["precondition"],
                                  f"declare {print_condition(need_atom(need))}",
                                  AddPrecondition(need_atom(need))))

    # -- rules ------------------------------------------------------------------------
    def _wrong_call(self, program, entry, need, ctx, g) -> bool:
        post_items = {c.item.name for c in program.post
                      if isinstance(c, InvAtLeast) and isinstance(c.item, Kind)}
        post_items |= {entry.bindings[c.item.name] for c in program.post
                       if isinstance(c, InvAtLeast) and isinstance(c.item, Var)
                       and c.item.name in entry.bindings}
        wanted = set(post_items)
        if need is not None and need[0] == "item":
            wanted.add(need[1])
        needed = set(post_items)
        for ev in entry.events:
            if ev.kind == "prim" and ev.name in ("craft", "smelt"):
                r = self.book.recipes.get(ev.args[0])
                if r:
                    needed |= {i for i, _ in r.inputs}
        for p, s in walk_statements(program.body):
            if isinstance(s, Call) and s.name in ctx.net:
                for c in ctx.net.program(s.name).pre:
                    if isinstance(c, InvAtLeast) and isinstance(c.item, Kind):
                        needed.add(c.item.name)
        candidates = [ev for ev in entry.events if ev.kind == "prim"
                      and ev.name in ("gather", "craft", "smelt")]
        for ev in reversed(candidates):
            stmt = get_node(program, ev.path)
            item = ev.args[0]
            if item in needed or not isinstance(stmt.args[0], Kind):
                continue
            options = sorted(x for x in wanted
                             if x != item and self.book.producer(x) == ev.name)
            if not options:
                continue
            target = options[0]
            g.issues.append(Issue("logic", MAGNITUDE["logic"],
                                  f"{ev.name} produces {item}, which nothing here needs; "
                                  f"the skill needs {target}",
                                  ReplaceCall(ev.path, ev.name, (Kind(target),) + stmt.args[1:])))
            g.reasoning = f"wrong primitive target {item} at {'.'.join(map(str, ev.path))}"
            return True
        return False

    def _unsafe_fallback(self, program, entry, need, path, ctx, g) -> bool:
        for ev in reversed(_statement_paths_before(entry, path)):
            if ev.kind != "branch" or ev.taken != "orelse":
                continue
            stmt = get_node(program, ev.path)
            if stmt.orelse or not stmt.then:
                continue
            if not any(produces(s, need, ctx.net, entry.bindings, ctx.book) for s in stmt.then):
                continue
            g.issues.append(Issue("error_handling", MAGNITUDE["error_handling"],
                                  "guard skipped the statement that supplies "
                                  f"{need[1]}; run it unconditionally and fail loudly",
                                  RemoveStatement(ev.path)))
            g.issues.append(Issue("error_handling", MAGNITUDE["error_handling"],
                                  "restore the guarded statements in place",
                                  InsertStatements(ev.path, stmt.then)))
            g.reasoning = f"silent fallback at {'.'.join(map(str, ev.path))}"
            return True
        return False

    def _trim(self, program, path, fb, ctx, g) -> bool:
        """An over-sized request: the smallest literal value that still lets the frame succeed."""
        stmt = get_node(program, path)
        if not isinstance(stmt, Prim) or len(stmt.args) != 2:
            return False
        before = failure_signature(ctx.target)
        for lit in traced_literals(program, stmt.args[1], path + ("args", 1)):
            old = get_node(program, lit).value
            for v in range(old):
                cand = apply_edit(program, SetConstant(lit, v))
                delta, _, _ = dry_run(ctx, {program.name: cand})
                if delta:
                    g.issues.append(Issue("physical_constraint", MAGNITUDE["physical_constraint"],
                                          f"request no more {fb.item} than needed: constant {old} -> {v}",
                                          SetConstant(lit, v)))
                    g.reasoning = f"{fb.item} request exceeds the field at {'.'.join(map(str, path))}"
                    return True
        return False

    def _clamp(self, program, path, fb, g):
        stmt = get_node(program, path)
        if not isinstance(stmt, Prim) or len(stmt.args) != 2:
            g.reasoning = f"capacity failure outside a counted primitive: {fb.message}"
            return
        name = _fresh_name(program, "clamp")
        item = stmt.args[0]
        room = Cap(item)
        if stmt.name in ("craft", "smelt") and isinstance(item, Kind):
            r = self.book.recipes.get(item.name)
            if r and r.count > 1:
                room = BinOp("/", room, Num(r.count))
        g.issues.append(Issue("physical_constraint", MAGNITUDE["physical_constraint"],
                              "compute an amount the inventory can hold",
                              InsertStatement(path, Let(name, Func("min", (stmt.args[1], room))))))
        moved = path[:-1] + (path[-1] + 1,)
        g.issues.append(Issue("physical_constraint", MAGNITUDE["physical_constraint"],
                              "request only the clamped amount",
                              ReplaceCall(moved, stmt.name, (item, Var(name)))))
        g.reasoning = fb.message

    def _amount_literals(self, program, stmt, path, ctx) -> list:
        lits = []
        if isinstance(stmt, Prim) and len(stmt.args) == 2:
            lits = traced_literals(program, stmt.args[1], path + ("args", 1))
        elif isinstance(stmt, Call):
            callee = ctx.net.program(stmt.name)
            for j, (p, a) in enumerate(zip(callee.params, stmt.args)):
                if p.kind == "int":
                    lits += traced_literals(program, a, path + ("args", j))
        return lits + _enclosing_repeats(program, path)

    def _producer_literals(self, program, entry, need, stop_path, ctx):
        """Latest in-frame producer of ``need`` and the literals its amount depends on.

        Executed producers are preferred; otherwise the nearest producer
        before ``stop_path`` in program order (e.g. inside a loop that ran zero times).
        """
        for ev in reversed(_statement_paths_before(entry, stop_path)):
            if ev.kind not in ("prim", "call"):
                continue
            stmt = get_node(program, ev.path)
            if produces(stmt, need, ctx.net, entry.bindings, ctx.book):
                return ev, stmt, self._amount_literals(program, stmt, ev.path, ctx)
        for path, stmt in reversed(list(walk_statements(program.body))):
            if stop_path is not None and not _before(path, stop_path):
                continue
            if isinstance(stmt, (Prim, Call)) and produces(stmt, need, ctx.net, entry.bindings, ctx.book):
                return None, stmt, self._amount_literals(program, stmt, path, ctx)
        return None, None, []

    def _search_literal(self, program, lit_path, ctx, before, extra=()):
        """Smallest change to one literal that moves the episode past its failure."""
        old = get_node(program, lit_path).value
        for step in range(1, SEARCH_RADIUS + 1):
            for v in (old + step, old - step):
                if v < 0:
                    continue
                try:
                    cand = apply_edit(program, SetConstant(lit_path, v))
                    for e in extra:
                        cand = apply_edit(cand, e(v))
                except EditError:
                    continue
                if _passes(ctx, {program.name: cand}, before):
                    return v
        return None

    def _supply(self, program, entry, where, need, amount, state, ctx, g, gtype, contract=False):
        """Make ``need`` hold at ``where``: raise a producing literal, else insert an ensure block."""
        before = failure_signature(ctx.target)
        ev, stmt, lits = (None, None, [])
        if need[0] == "item":
            ev, stmt, lits = self._producer_literals(program, entry, need, where, ctx)
        for lit in lits:
            v = self._search_literal(program, lit, ctx, before)
            if v is not None:
                old = get_node(program, lit).value
                g.issues.append(Issue(gtype if gtype != "precondition" else "resource_management",
                                      MAGNITUDE["resource_management"],
                                      f"produce enough {need[1]}: constant {old} -> {v}",
                                      SetConstant(lit, v)))
                g.reasoning = (g.reasoning + "; " if g.reasoning else "") + \
                    f"shortfall of {need[1]} traced to literal at {'.'.join(map(str, lit))}"
                break
        if contract and ev is not None and ev.kind == "call":
            child = entry.children[ev.child]
            if child.ok:
                g.child_feedback[child.skill] = Feedback(False, [{
                    "skill": child.skill, "kind": "contract", "item": need[1],
                    "need": amount, "have": state.count(need[1]) if need[0] == "item" else None,
                    "text": f"{program.name} ran short of {need[1]} after calling {child.skill}",
                    "caller": program.name}])
                g.child_entries[child.skill] = child
        if g.issues:
            return
        block = self._ensure_block(program, need, amount, state, ctx)
        if block is None:
            g.reasoning = (g.reasoning + "; " if g.reasoning else "") + f"cannot establish {need}"
            return
        g.issues.append(Issue(gtype, MAGNITUDE[gtype],
                              f"ensure {print_condition(block.cond)} before continuing",
                              InsertStatement(where, block)))

    def _ensure_block(self, program, need, amount, state, ctx):
        atom = need_atom(need, amount)
        view = ExcludingView(ctx.net, ancestors(ctx.net, program.name))
        p = backward_chain([atom], view, state, PlannerConfig(temperature=1e-12),
                           np.random.default_rng(0))
        stmts = []
        if p.unground:
            try:
                prims = regress(atom, state, self.book)
            except (RegressionError, WorldError):
                return None
            stmts = [Prim(n, tuple(Num(a) if isinstance(a, int) else Kind(a) for a in args))
                     for n, args in prims]
        else:
            for step in p.steps:
                callee = ctx.net.program(step.skill)
                b = step.args
                stmts.append(Call(step.skill, tuple(Num(b[q.name]) if isinstance(b[q.name], int)
                                                    else Kind(b[q.name]) for q in callee.params)))
        if not stmts:
            return None
        return If(atom, (), tuple(stmts))

    def _contract(self, program, msg, entry, ctx, g):
        """A caller ran short of an item this skill produced: raise the internal amount."""
        item = msg["item"]
        need = ("item", item)
        before = failure_signature(ctx.target)
        for p, s in walk_statements(program.body):
            if not (isinstance(s, Prim) and s.name in ("gather", "craft", "smelt") and len(s.args) == 2):
                continue
            if _arg_item(program, s.args[0], entry.bindings) != item:
                continue
            count = s.args[1]
            lits = [lp for lp in traced_literals(program, count, p + ("args", 1))]
            # preconditions computed from the same amount must move with it
            mirrors = [(i, c) for i, c in enumerate(program.pre)
                       if isinstance(c, InvAtLeast) and _contains(c.count, count)]
            for lp in lits:
                rel = lp[len(p) + 2:] if lp[:len(p) + 2] == p + ("args", 1) else None
                extra = []
                for i, c in mirrors:
                    off = _find_sub(c.count, count)
                    if rel is not None and off is not None:
                        extra.append(_pre_literal_setter(i, off + rel))
                v = self._search_literal(program, lp, ctx, before, extra)
                if v is None:
                    continue
                old = get_node(program, lp).value
                g.issues.append(Issue("interface", MAGNITUDE["interface"],
                                      f"callers expect more {item}: constant {old} -> {v}",
                                      SetConstant(lp, v)))
                for e in extra:
                    g.issues.append(Issue("interface", MAGNITUDE["interface"],
                                          "keep the declared input requirement in step", e(v)))
                g.reasoning = f"contract with {msg.get('caller')}: {item} output raised"
                return
        g.reasoning = f"no internal constant controls the amount of {item}"


def _before(a: tuple, b: tuple) -> bool:
    """Does statement path ``a`` come before ``b`` in program order?"""
    for x, y in zip(a, b):
        if x == y:
            continue
        if isinstance(x, int) and isinstance(y, int):
            return x < y
        return str(x) < str(y)
    return len(a) > len(b)


def _contains(expr, sub) -> bool:
    return _find_sub(expr, sub) is not None


def _find_sub(expr, sub, path=()):
    """Relative path of ``sub`` inside ``expr``."""
    if expr == sub:
        return path
    if isinstance(expr, BinOp):
        return _find_sub(expr.left, sub, path + ("left",)) or _find_sub(expr.right, sub, path + ("right",))
    if isinstance(expr, Func):
        for i, a in enumerate(expr.args):
            r = _find_sub(a, sub, path + ("args", i))
            if r is not None:
                return r
    return None


def _pre_literal_setter(index, rel):
    path = ("pre", index, "count") + tuple(rel)
    return lambda v: SetConstant(path, v)


def _fresh_name(program, base):
    used = set(program.param_names) | {s.name for _, s in walk_statements(program.body) if isinstance(s, Let)}
    name, k = base, 2
    while name in used:
        name, k = f"{base}{k}", k + 1
    return name


def _child_fb(child) -> Feedback:
    msgs = []
    for e in child.walk():
        if e.feedback is not None:
            msgs.append({"skill": e.skill, "kind": e.feedback.kind, "text": e.feedback.message,
                         "item": e.feedback.item, "need": e.feedback.need, "have": e.feedback.have})
    if not msgs:
        msgs.append({"skill": child.skill, "kind": child.status, "text": f"{child.skill} {child.status}"})
    return Feedback(False, msgs)


# -- HTTP backend -----------------------------------------------------------------------

TOKEN_ENV = "SKILLNET_OPERATOR_TOKEN"
DEFAULT_TIMEOUT = 60.0

_EDIT_SCHEMA = {"type": "object", "required": ["op"], "properties": {"op": {"type": "string"}}}
SCHEMAS = {
    "reflect": {
        "type": "object",
        "required": ["self_issues", "child_issues", "reasoning"],
        "properties": {
            "self_issues": {"type": "array", "items": {
                "type": "object",
                "required": ["gradient_type", "magnitude", "direction", "edit"],
                "properties": {
                    "gradient_type": {"enum": sorted(MAGNITUDE)},
                    "magnitude": {"type": "number", "minimum": 0, "maximum": 1},
                    "direction": {"type": "string"},
                    "edit": _EDIT_SCHEMA,
                }}},
            "child_issues": {"type": "array", "items": {
                "type": "object", "required": ["child", "feedback"],
                "properties": {"child": {"type": "string"}, "feedback": {
                    "type": "object", "required": ["messages"],
                    "properties": {"messages": {"type": "array"}}}}}},
            "reasoning": {"type": "string"},
        },
    },
    "codegen": {"type": "object", "required": ["source"], "properties": {"source": {"type": "string"}}},
    "plan": {
        "type": "object", "required": ["steps"],
        "properties": {"steps": {"type": "array", "items": {
            "type": "array", "items": {
                "type": "object", "required": ["primitive", "args"],
                "properties": {"primitive": {"type": "string"}, "args": {"type": "array"}}}}}},
    },
}


class OperatorProtocolError(Exception):
    pass


class HttpOperators:
    """Operators served over HTTP: POST ``{"operator": ..., "payload": ...}``.

    Any transport or schema error logs a warning and answers with the oracle.
    """

    name = "http"

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT, fallback=None, token: str | None = None):
        self.url = url
        self.timeout = timeout
        self.fallback = fallback or OracleOperators()
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.fallbacks = 0

    def request(self, operator: str, payload: dict) -> dict:
        body = json.dumps({"operator": operator, "payload": payload}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read()
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise OperatorProtocolError(f"{operator}: transport error: {exc}") from exc
        try:
            data = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise OperatorProtocolError(f"{operator}: malformed JSON: {exc}") from exc
        try:
            jsonschema.validate(data, SCHEMAS[operator])
        except jsonschema.ValidationError as exc:
            raise OperatorProtocolError(f"{operator}: schema violation: {exc.message}") from exc
        return data

    def _fallback(self, exc):
        self.fallbacks += 1
        log.warning("operator backend failed, using oracle: %s", exc)

    def forward(self, atoms, state, net):
        payload = {"atoms": [print_condition(a) for a in atoms], "state": state.to_json()}
        try:
            data = self.request("plan", payload)
            return [[(s["primitive"], tuple(s["args"])) for s in steps] for steps in data["steps"]]
        except OperatorProtocolError as exc:
            self._fallback(exc)
            return self.fallback.forward(atoms, state, net)

    def codegen(self, plan, context, net):
        payload = {"name": context["name"], "goal": [print_condition(c) for c in context["goal"]],
                   "steps": [{"skill": s.skill, "bindings": dict(s.bindings)} for s in plan.steps],
                   "history": context.get("history", [])[-5:]}
        try:
            data = self.request("codegen", payload)
            program = parse_skill(data["source"])
            if program.name != context["name"]:
                raise OperatorProtocolError("codegen returned a differently named skill")
            return program
        except (OperatorProtocolError, Exception) as exc:
            self._fallback(exc)
            return self.fallback.codegen(plan, context, net)

    def reflect(self, program, feedback, entry, ctx):
        payload = {"skill": print_skill(program), "feedback": feedback.to_json(),
                   "trace": entry.to_json(), "history": ctx.history[-5:]}
        try:
            data = self.request("reflect", payload)
            g = Gradient(program.name, [Issue.from_json(i) for i in data["self_issues"]],
                         reasoning=data["reasoning"])
            for ci in data["child_issues"]:
                child = next((c for c in entry.children if c.skill == ci["child"]), None)
                if child is None:
                    raise OperatorProtocolError(f"unknown child {ci['child']!r}")
                g.child_feedback[ci["child"]] = Feedback(False, list(ci["feedback"]["messages"]))
                g.child_entries[ci["child"]] = child
            return g
        except (OperatorProtocolError, EditError, KeyError, ValueError) as exc:
            self._fallback(exc)
            return self.fallback.reflect(program, feedback, entry, ctx)


def make_operators(backend: str = "oracle", **kw):
    """``oracle`` or ``http:URL``."""
    if backend == "oracle":
        return OracleOperators(kw.get("book"))
    if backend.startswith("http:"):
        return HttpOperators(backend[len("http:"):], timeout=kw.get("timeout", DEFAULT_TIMEOUT),
                             fallback=OracleOperators(kw.get("book")))
    raise ValueError(f"unknown operator backend {backend!r}")
