"""Skill interpretation with nested traces, composite synthesis and condition calibration."""
from __future__ import annotations

from dataclasses import dataclass, field

from .dsl import (
    Assert, Call, EvalError, If, InvAtLeast, Kind, Let, Num, Prim, Repeat,
    SkillProgram, eval_expr, format_path, ground, holds, print_condition,
)
from .kinds import ITEMS, STATIONS
from .world import PrimitiveFeedback, WorldError, default_book, step_primitive

DEFAULT_BUDGET = 512


class ExecutionError(Exception):
    pass


@dataclass
class Event:
    """One executed statement inside a frame."""
    path: tuple
    kind: str  # prim | call | branch | let | assert | repeat
    name: str = ""
    args: tuple = ()
    ok: bool = True
    delta: dict = field(default_factory=dict)  # inventory change of a primitive
    child: int | None = None  # index into the frame's children for calls
    taken: str | None = None  # branch taken by an if


@dataclass
class TraceEntry:
    skill: str
    bindings: dict
    sigma_pre: object
    sigma_post: object = None
    status: str = "success"  # success | failed | aborted
    failing_path: tuple | None = None
    feedback: PrimitiveFeedback | None = None
    children: list = field(default_factory=list)
    events: list = field(default_factory=list)
    pre_violated: list = field(default_factory=list)
    post_violated: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def failed_child(self) -> int | None:
        for i, c in enumerate(self.children):
            if not c.ok:
                return i
        return None

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_json(self) -> dict:
        return {
            "skill": self.skill,
            "bindings": self.bindings,
            "sigma_pre": self.sigma_pre.to_json(),
            "sigma_post": self.sigma_post.to_json() if self.sigma_post is not None else None,
            "status": self.status,
            "failing_path": format_path(self.failing_path) if self.failing_path else None,
            "feedback": self.feedback.to_json() if self.feedback else None,
            "pre_violated": [print_condition(c) for c in self.pre_violated],
            "post_violated": [print_condition(c) for c in self.post_violated],
            "children": [c.to_json() for c in self.children],
        }


@dataclass
class Trace:
    root: TraceEntry
    episode: int = 0
    task: str = ""

    def entries(self):
        return list(self.root.walk())

    def to_json(self) -> dict:
        return {"episode": self.episode, "task": self.task, "root": self.root.to_json()}


@dataclass
class Feedback:
    delta: bool
    messages: list = field(default_factory=list)  # [{"skill", "kind", "text"}]

    @property
    def errors(self) -> list:
        return [m for m in self.messages if m.get("kind") != "info"]

    def to_json(self) -> dict:
        return {"delta": self.delta, "messages": list(self.messages)}


class _Stop(Exception):
    """Unwinds the interpreter on failure or budget exhaustion (fail fast)."""

    def __init__(self, status: str, state):
        super().__init__(status)
        self.status = status
        self.state = state


class _Interpreter:
    def __init__(self, net, budget: int, book):
        self.net = net
        self.budget = budget
        self.book = book
        self.steps = 0

    def frame(self, name: str, bindings: dict, state):
        node = self.net.node(name)
        program = node.program
        env = dict(bindings)
        entry = TraceEntry(name, dict(bindings), state)
        for c in program.pre:
            try:
                if not holds(c, env, state):
                    entry.pre_violated.append(ground(c, bindings))
            except EvalError:
                entry.pre_violated.append(c)
        try:
            state = self.block(program.body, ("body",), env, state, entry)
        except _Stop as stop:
            entry.status = stop.status
            entry.sigma_post = stop.state
            return entry, stop.state
        entry.sigma_post = state
        for c in program.post:
            try:
                ok = holds(c, env, state)
            except EvalError:
                ok = False
            if not ok:
                entry.post_violated.append(ground(c, bindings))
        if entry.post_violated:
            entry.status = "failed"
            atom = entry.post_violated[0]
            item = need = have = None
            if isinstance(atom, InvAtLeast) and isinstance(atom.item, Kind) and isinstance(atom.count, Num):
                item, need, have = atom.item.name, atom.count.value, state.count(atom.item.name)
            entry.feedback = PrimitiveFeedback(
                "postcondition", f"{name}: postcondition {print_condition(atom)} violated", item, need, have)
        return entry, state

    def _fail(self, entry, path, feedback, state):
        entry.failing_path = path
        entry.feedback = feedback
        raise _Stop("failed", state)

    def block(self, stmts, prefix, env, state, entry):
        env = dict(env)
        for i, s in enumerate(stmts):
            path = prefix + (i,)
            state = self.statement(s, path, env, state, entry)
        return state

    def _eval(self, e, env, state, entry, path):
        try:
            return eval_expr(e, env, state)
        except EvalError as exc:
            self._fail(entry, path, PrimitiveFeedback("malformed", str(exc)), state)

    def statement(self, s, path, env, state, entry):
        if isinstance(s, Prim):
            args = tuple(self._eval(a, env, state, entry, path) for a in s.args)
            if self.steps >= self.budget:
                entry.failing_path = path
                raise _Stop("aborted", state)
            self.steps += 1
            try:
                new, fb, ok = step_primitive(state, s.name, args, self.book)
            except WorldError as exc:
                self._fail(entry, path, PrimitiveFeedback("malformed", str(exc)), state)
            delta = {k: new.count(k) - state.count(k)
                     for k in set(new.inventory) | set(state.inventory) if new.count(k) != state.count(k)}
            entry.events.append(Event(path, "prim", s.name, args, ok, delta))
            if not ok:
                self._fail(entry, path, fb, new)
            return new
        if isinstance(s, Call):
            args = tuple(self._eval(a, env, state, entry, path) for a in s.args)
            if s.name not in self.net:
                self._fail(entry, path, PrimitiveFeedback("malformed", f"unknown skill {s.name}"), state)
            callee = self.net.program(s.name)
            try:
                bindings = bind_args(callee, args)
            except ExecutionError as exc:
                self._fail(entry, path, PrimitiveFeedback("malformed", str(exc)), state)
            child, state = self.frame(s.name, bindings, state)
            entry.events.append(Event(path, "call", s.name, args, child.ok, child=len(entry.children)))
            entry.children.append(child)
            if not child.ok:
                raise _Stop(child.status, state)
            return state
        if isinstance(s, If):
            try:
                taken = "then" if holds(s.cond, env, state) else "orelse"
            except EvalError as exc:
                self._fail(entry, path, PrimitiveFeedback("malformed", str(exc)), state)
            entry.events.append(Event(path, "branch", taken=taken))
            return self.block(getattr(s, taken), path + (taken,), env, state, entry)
        if isinstance(s, Repeat):
            n = self._eval(s.count, env, state, entry, path)
            entry.events.append(Event(path, "repeat", args=(n,)))
            for _ in range(max(0, n)):
                state = self.block(s.body, path + ("body",), env, state, entry)
            return state
        if isinstance(s, Let):
            env[s.name] = self._eval(s.expr, env, state, entry, path)
            entry.events.append(Event(path, "let", s.name, (env[s.name],)))
            return state
        if isinstance(s, Assert):
            try:
                ok = holds(s.cond, env, state)
            except EvalError:
                ok = False
            entry.events.append(Event(path, "assert", ok=ok))
            if not ok:
                self._fail(entry, path, PrimitiveFeedback(
                    "assertion", f"assertion {print_condition(s.cond)} failed"), state)
            return state
        raise ExecutionError(f"not a statement: {s!r}")


def bind_args(program: SkillProgram, args: tuple) -> dict:
    """Positional arguments plus defaults, type checked against the signature."""
    if len(args) > len(program.params):
        raise ExecutionError(f"{program.name} takes {len(program.params)} arguments, got {len(args)}")
    out = {}
    for i, p in enumerate(program.params):
        if i < len(args):
            v = args[i]
        elif p.default is not None:
            v = p.default
        else:
            raise ExecutionError(f"{program.name}: missing argument {p.name!r}")
        ok = (isinstance(v, int) and not isinstance(v, bool)) if p.kind == "int" else \
            (v in ITEMS if p.kind == "item" else v in STATIONS)
        if not ok:
            raise ExecutionError(f"{program.name}: argument {p.name}={v!r} is not a {p.kind}")
        out[p.name] = v
    return out


def execute_skill(name: str, bindings: dict, state, net, budget: int = DEFAULT_BUDGET,
                  book=None, episode: int = 0, task: str = ""):
    """Run ``name`` from ``state``. Returns ``(feedback, delta, trace, final_state)``."""
    book = book or default_book()
    program = net.program(name)
    given = dict(bindings or {})
    unknown = set(given) - set(program.param_names)
    if unknown:
        raise ExecutionError(f"{name}: unknown parameters {sorted(unknown)}")
    args = []
    for p in program.params:
        if p.name in given:
            args.append(given[p.name])
        elif p.default is not None:
            args.append(p.default)
        else:
            raise ExecutionError(f"{name}: missing argument {p.name!r}")
    full = bind_args(program, tuple(args))
    root, final = _Interpreter(net, budget, book).frame(name, full, state)
    delta = root.ok
    messages = []
    for e in root.walk():
        if e.feedback is not None:
            messages.append({"skill": e.skill, "kind": e.feedback.kind, "text": e.feedback.message,
                             "item": e.feedback.item, "need": e.feedback.need, "have": e.feedback.have})
        if e.status == "aborted" and e is root:
            messages.append({"skill": e.skill, "kind": "budget",
                             "text": f"primitive budget {budget} exhausted"})
    return Feedback(delta, messages), delta, Trace(root, episode, task), final


def record_trace_outcomes(net, trace: Trace):
    for e in trace.root.walk():
        if e.skill in net:
            net.record_outcome(e.skill, e.ok)


# -- composite synthesis -----------------------------------------------------------

def composite_from_plan(name: str, plan, goal, net, assumed=()) -> SkillProgram:
    """Oracle CodeGen: one call per plan step, literal arguments in signature order."""
    body = []
    for step in plan.steps:
        callee = net.program(step.skill) if step.skill in net else None
        if callee is None:
            callee = next(p for p in plan.new_skills if p.name == step.skill)
        b = step.args
        args = tuple(Num(b[p.name]) if isinstance(b[p.name], int) else Kind(b[p.name])
                     for p in callee.params)
        body.append(Call(step.skill, args))
    from .dsl import canonical

    return canonical(SkillProgram(name, (), tuple(assumed), tuple(goal), tuple(body)))


def synthesize_composite(plan, context: dict, codegen_op, net) -> SkillProgram | None:
    """CodeGen through the pluggable operator; inserts the result into ``net``.

    Returns None for an empty plan (goal already satisfied).
    """
    if plan.unground:
        raise ExecutionError("cannot synthesize a plan with unground atoms")
    if not plan.steps:
        return None
    for p in plan.new_skills:
        if p.name not in net:
            net.insert_skill(p)
    program = codegen_op.codegen(plan, context, net)
    if program.name in net:
        net.replace_program(program.name, program)
    else:
        net.insert_skill(program)
    return program


# -- condition calibration ---------------------------------------------------------

CALIBRATION_STREAK = 3


def _drawdown(entry: TraceEntry) -> dict:
    """Per item, the largest net consumption at any point of the frame."""
    running, worst = {}, {}
    for ev in _prim_events(entry):
        for item, d in ev.delta.items():
            running[item] = running.get(item, 0) + d
            worst[item] = min(worst.get(item, 0), running[item])
    return {k: -v for k, v in worst.items() if v < 0}


def _prim_events(entry: TraceEntry):
    for ev in entry.events:
        if ev.kind == "prim" and ev.ok:
            yield ev
        elif ev.kind == "call" and ev.child is not None and ev.child < len(entry.children):
            yield from _prim_events(entry.children[ev.child])


def calibrate_conditions(net, name: str, trace: Trace) -> bool:
    """Tighten declared literal conditions after repeated contradicting evidence.

    Returns True when the declared conditions changed.
    """
    from .dsl import AddPostcondition, AddPrecondition, apply_edit

    node = net.node(name)
    entries = [e for e in trace.root.walk() if e.skill == name and e.ok]
    if not entries:
        return False
    program = node.program
    cal = node.calibration
    pre_lit = {c.item.name: c.count.value for c in program.pre
               if isinstance(c, InvAtLeast) and isinstance(c.item, Kind) and isinstance(c.count, Num)}
    pre_param = {c.item.name for c in program.pre
                 if isinstance(c, InvAtLeast) and isinstance(c.item, Kind) and not isinstance(c.count, Num)}
    edits = []
    need = {}
    for e in entries:
        for item, r in _drawdown(e).items():
            need[item] = max(need.get(item, 0), r)
    for item in sorted(set(need) | {k[4:] for k in cal if k.startswith("pre:")}):
        key = f"pre:{item}"
        r = need.get(item, 0)
        if item in pre_param or r <= pre_lit.get(item, 0):
            cal.pop(key, None)
            continue
        streak, seen = cal.get(key, [0, 0])
        streak, seen = streak + 1, max(seen, r)
        cal[key] = [streak, seen]
        if streak >= CALIBRATION_STREAK:
            edits.append(AddPrecondition(InvAtLeast(Kind(item), Num(seen))))
            cal.pop(key)
    for c in program.post:
        if not (isinstance(c, InvAtLeast) and isinstance(c.item, Kind) and isinstance(c.count, Num)):
            continue
        item = c.item.name
        key = f"post:{item}"
        gain = min(e.sigma_post.count(item) - e.sigma_pre.count(item) for e in entries)
        if gain >= c.count.value:
            cal.pop(key, None)
            continue
        streak, low = cal.get(key, [0, c.count.value])
        streak, low = streak + 1, min(low, gain)
        cal[key] = [streak, low]
        if streak >= CALIBRATION_STREAK and low >= 1:
            edits.append(AddPostcondition(InvAtLeast(Kind(item), Num(low))))
            cal.pop(key)
    if not edits:
        return False
    for e in edits:
        program = apply_edit(program, e)
    net.replace_program(name, program)
    return True
