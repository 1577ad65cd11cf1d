"""Two-phase skill optimization.

Phase I walks the failure trace top-down and asks the Reflect operator for a
gradient per skill; nothing is edited. Phase II applies the gradients
bottom-up, each behind the maturity gate and the momentum buffer.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dsl import (
    AddPostcondition, AddPrecondition, Call, If, InsertStatement, InsertStatements,
    RemoveStatement, SetConstant, apply_edit, entails, get_node, ground, print_condition,
    walk_statements,
)
from .dsl.edits import EditError, edit_to_json
from .executor import Feedback
from .operators import ReflectContext

GAMMA = 5.0
EPSILON = 0.1
PIVOT = 0.6
BUFFER_SIZE = 5


def gate_probability(v: float) -> float:
    """Probability of applying a pending update to a skill with value ``v``."""
    return (1.0 - EPSILON) / (1.0 + math.exp(-GAMMA * (PIVOT - v))) + EPSILON


# -- data ------------------------------------------------------------------------------

@dataclass
class PendingSubgraph:
    nodes: set = field(default_factory=set)
    edges: set = field(default_factory=set)  # (caller, callee)


@dataclass
class OptimizationReport:
    skill: str
    applied: list = field(default_factory=list)
    skipped: bool = False
    summary: str = ""
    post_changes: list = field(default_factory=list)
    conflicts: list = field(default_factory=list)
    suppressed: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    order: int = 0
    value: float = 0.0
    gate: float = 1.0
    u: float = 0.0

    def to_json(self) -> dict:
        return {"skill": self.skill, "applied": [edit_to_json(e) for e in self.applied],
                "skipped": self.skipped, "summary": self.summary,
                "post_changes": self.post_changes, "conflicts": self.conflicts,
                "suppressed": [edit_to_json(e) for e in self.suppressed],
                "rejected": self.rejected, "order": self.order,
                "value": round(self.value, 12), "gate": round(self.gate, 12), "u": round(self.u, 12)}


def _signature(program, edit):
    """(path, direction) used to detect an edit undoing a recent one."""
    if isinstance(edit, SetConstant):
        try:
            old = get_node(program, edit.path)
        except Exception:
            return None
        if isinstance(edit.value, int) and hasattr(old, "value") and isinstance(old.value, int):
            d = edit.value - old.value
            return (edit.path, "const", (d > 0) - (d < 0)) if d else None
        return (edit.path, "kind", edit.value)
    if isinstance(edit, (InsertStatement, InsertStatements)):
        return (edit.path, "stmt", 1)
    if isinstance(edit, RemoveStatement):
        return (edit.path, "stmt", -1)
    if isinstance(edit, (AddPrecondition, AddPostcondition)):
        return (type(edit).__name__, print_condition(edit.cond), 1)
    return None


def _inverts(a, b) -> bool:
    if a is None or b is None or a[0] != b[0] or a[1] != b[1]:
        return False
    if a[1] in ("const", "stmt"):
        return a[2] == -b[2]
    return False


class MomentumBuffer:
    """The last few gradients per skill, with the edit signatures they proposed."""

    def __init__(self, size: int = BUFFER_SIZE):
        self.size = size
        self.slots: dict = {}

    def get(self, skill: str) -> deque:
        return self.slots.setdefault(skill, deque(maxlen=self.size))

    def push(self, skill: str, gradient, program):
        sigs = [_signature(program, i.edit) for i in gradient.issues]
        self.get(skill).append((gradient, sigs))

    def inverts(self, skill: str, program, edit) -> bool:
        sig = _signature(program, edit)
        return any(_inverts(sig, old) for _, sigs in self.get(skill) for old in sigs)

    def to_json(self) -> dict:
        return {k: [[list(map(str, s)) if s else None for s in sigs] for _, sigs in v]
                for k, v in sorted(self.slots.items())}


# -- phase I ---------------------------------------------------------------------------

def _merge(into, g):
    into.issues.extend(g.issues)
    for k, v in g.child_feedback.items():
        if k not in into.child_feedback:
            into.child_feedback[k] = v
            into.child_entries[k] = g.child_entries[k]
    if g.reasoning:
        into.reasoning = (into.reasoning + " | " if into.reasoning else "") + g.reasoning


def backprop_feedback(root_entry, f_root, trace, net, operator, ctx: ReflectContext | None = None):
    """Top-down credit assignment. Returns ``(G, H, F)``; no program is modified."""
    ctx = ctx or ReflectContext(net, trace)
    G, F = {}, {}
    edges = set()
    queue = deque([(root_entry, f_root)])
    seen = set()
    while queue:
        entry, fb = queue.popleft()
        key = (entry.skill, id(entry), tuple(m.get("kind") for m in fb.messages))
        if key in seen:
            continue
        seen.add(key)
        g = operator.reflect(net.program(entry.skill), fb, entry, ctx)
        if entry.skill in G:
            _merge(G[entry.skill], g)
            F[entry.skill] = Feedback(False, F[entry.skill].messages + fb.messages)
        else:
            G[entry.skill] = g
            F[entry.skill] = fb
        # reverse completion order among this frame's children
        order = {id(c): i for i, c in enumerate(entry.children)}
        kids = sorted(g.child_feedback, key=lambda k: -order.get(id(g.child_entries[k]), -1))
        for k in kids:
            edges.add((entry.skill, k))
            queue.append((g.child_entries[k], g.child_feedback[k]))
    H = PendingSubgraph(set(G), {(a, b) for a, b in edges if a in G and b in G and a != b})
    return G, H, F


class CycleError(Exception):
    pass


def post_order(H: PendingSubgraph) -> list:
    """Every node after all of its descendants; ties broken by name."""
    kids = {n: sorted(b for a, b in H.edges if a == n) for n in H.nodes}
    has_parent = {b for _, b in H.edges}
    out, done, active = [], set(), set()

    def visit(n):
        if n in done:
            return
        if n in active:
            raise CycleError(f"cycle through {n!r}")
        active.add(n)
        for c in kids[n]:
            visit(c)
        active.discard(n)
        done.add(n)
        out.append(n)

    for n in sorted(H.nodes):
        if n not in has_parent:
            visit(n)
    if len(out) != len(H.nodes):
        raise CycleError("pending subgraph has a cycle")
    return out


# -- phase II --------------------------------------------------------------------------

def _rederive(program, net, context):
    """Drop ensure blocks made redundant by a child's strengthened postconditions."""
    changed = {r.skill for r in context if r.post_changes}
    if not changed:
        return program, []
    removed = []
    for path, stmt in reversed(list(walk_statements(program.body))):
        if not (isinstance(stmt, If) and not stmt.then and stmt.orelse):
            continue
        block_path, idx = path[:-1], path[-1]
        block = get_node(program, block_path)
        for prev in block[:idx]:
            if not (isinstance(prev, Call) and prev.name in changed and prev.name in net):
                continue
            callee = net.program(prev.name)
            if not all(hasattr(a, "value") or hasattr(a, "name") for a in prev.args):
                continue
            b = {p.name: (a.value if hasattr(a, "value") else a.name)
                 for p, a in zip(callee.params, prev.args)}
            posts = [ground(c, b) for c in callee.post]
            if entails(posts, stmt.cond):
                program = apply_edit(program, RemoveStatement(path))
                removed.append(f"removed ensure {print_condition(stmt.cond)} now provided by {prev.name}")
                break
    return program, removed


def apply_gradients(program, g, context, net=None):
    """Apply a gradient's edits in issue order. Returns ``(program, report)``."""
    report = OptimizationReport(program.name)
    before_post = program.post
    notes = []
    if net is not None:
        program, notes = _rederive(program, net, context)
    # same-path edits of the same kind conflict: keep the strongest
    keep = []
    for i, issue in enumerate(g.issues):
        path = getattr(issue.edit, "path", None)
        rivals = [j for j, o in enumerate(g.issues) if j != i and path is not None
                  and getattr(o.edit, "path", None) == path and type(o.edit) is type(issue.edit)
                  and o.edit != issue.edit]
        if rivals:
            best = max([i] + rivals, key=lambda j: (g.issues[j].magnitude, -j))
            if best != i:
                report.conflicts.append(f"{type(issue.edit).__name__} at "
                                        f"{'.'.join(map(str, path))} lost to a stronger proposal")
                continue
        if any(issue.edit == k.edit for k in keep):
            continue
        keep.append(issue)
    for issue in keep:
        try:
            program = apply_edit(program, issue.edit)
            report.applied.append(issue.edit)
        except (EditError, Exception) as exc:  # a stale or ill-formed proposal is dropped alone
            report.rejected.append(f"{type(issue.edit).__name__}: {exc}")
    if program.post != before_post:
        report.post_changes = [print_condition(c) for c in program.post]
    parts = [i.direction for i in keep if i.edit in report.applied] + notes
    report.summary = "; ".join(parts) if parts else (g.reasoning or "no change")
    return program, report


@dataclass
class OptimizeResult:
    reports: list
    G: dict
    H: PendingSubgraph
    order: list


def optimize(root_entry, feedback, trace, net, buffers: MomentumBuffer, rng: np.random.Generator,
             operator, *, gating: bool = True, ctx: ReflectContext | None = None,
             forced=None) -> OptimizeResult:
    """Phase I credit assignment then gated, buffered Phase II application.

    ``forced`` optionally maps skill id -> bool and overrides the gate decision
    (used by replay); a uniform number is still drawn for every skill.
    """
    ctx = ctx or ReflectContext(net, trace)
    G, H, _ = backprop_feedback(root_entry, feedback, trace, net, operator, ctx)
    order = post_order(H)
    reports = {}
    for k, name in enumerate(order):
        g = G[name]
        program = net.program(name)
        v = net.value(name)
        gate = gate_probability(v)
        u = float(rng.random())
        apply = (u <= gate) if gating else True
        if forced is not None and name in forced:
            apply = bool(forced[name])
        if not g.issues:
            rep = OptimizationReport(name, summary=g.reasoning or "nothing to apply")
        elif not apply:
            rep = OptimizationReport(name, skipped=True, summary=f"gated: u={u:.4f} > p={gate:.4f}")
        else:
            live = [i for i in g.issues if not buffers.inverts(name, program, i.edit)]
            suppressed = [i.edit for i in g.issues if i not in live]
            g_live = type(g)(g.target, live, g.child_feedback, g.child_entries, g.reasoning)
            context = [reports[c] for a, c in sorted(H.edges) if a == name and c in reports]
            new, rep = apply_gradients(program, g_live, context, net)
            rep.suppressed = suppressed
            net.replace_program(name, new)
        if g.issues:
            buffers.push(name, g, program)
        rep.order, rep.value, rep.gate, rep.u = k, v, gate, u
        reports[name] = rep
    return OptimizeResult([reports[n] for n in order], G, H, order)
