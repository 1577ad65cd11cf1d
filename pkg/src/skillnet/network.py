"""The skill network: nodes with execution statistics, invocation links, persistence."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

from .dsl import (
    Call, SkillProgram, Var, entails, ground, parse_skill, print_skill, walk_statements,
)
from .dsl.logic import bind_for_goal

FORMAT_VERSION = 1


class NetworkError(Exception):
    pass


@dataclass
class SkillNode:
    program: SkillProgram
    n_exec: int = 0
    n_succ: int = 0
    alias_of: str | None = None
    # per-atom counters used by condition calibration
    calibration: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.program.name


def success_estimate(n_exec: int, n_succ: int) -> float:
    return (n_succ + 1) / (n_exec + 2)


def uncertainty(n_exec: int) -> float:
    return 1.0 / math.sqrt(n_exec + 1)


def value_of(n_exec: int, n_succ: int) -> float:
    """Laplace-smoothed success rate minus a decaying uncertainty penalty."""
    return success_estimate(n_exec, n_succ) - uncertainty(n_exec)


def value(node: SkillNode) -> float:
    return value_of(node.n_exec, node.n_succ)


def make_alias(program: SkillProgram, target: str) -> SkillProgram:
    """Wrapper body forwarding every parameter to ``target``."""
    body = (Call(target, tuple(Var(p) for p in program.param_names)),)
    return SkillProgram(program.name, program.params, program.pre, program.post, body)


class SkillNetwork:
    def __init__(self, nodes: dict | None = None, generation: int = 0):
        self.nodes: dict = dict(nodes or {})
        self.generation = generation

    # -- queries -----------------------------------------------------------
    def __contains__(self, name: str) -> bool:
        return name in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, name: str) -> SkillNode:
        try:
            return self.nodes[name]
        except KeyError:
            raise NetworkError(f"unknown skill {name!r}") from None

    def program(self, name: str) -> SkillProgram:
        return self.node(name).program

    def value(self, name: str) -> float:
        return value(self.node(name))

    def canonical(self, name: str) -> str:
        seen = set()
        while self.node(name).alias_of is not None:
            if name in seen:
                raise NetworkError(f"alias cycle through {name!r}")
            seen.add(name)
            name = self.node(name).alias_of
        return name

    def library_size(self) -> int:
        return sum(1 for n in self.nodes.values() if n.alias_of is None)

    @property
    def links(self) -> set:
        return {(name, callee) for name, n in self.nodes.items() for callee in n.program.children()}

    def children(self, name: str) -> set:
        return set(self.program(name).children())

    def parents(self, name: str) -> set:
        return {caller for caller, n in self.nodes.items() if name in n.program.children()}

    def kind_domain(self, name: str) -> dict:
        """Kinds each item/station parameter of ``name`` is known to work with.

        That is its default plus every constant passed to it at a call site,
        so an abstracted template only covers the variants it came from.
        """
        prog = self.program(name)
        out = {p.name: ({p.default} if p.default is not None else set())
               for p in prog.params if p.kind != "int"}
        if not out:
            return out
        for other in self.nodes.values():
            for _, stmt in walk_statements(other.program.body):
                if isinstance(stmt, Call) and stmt.name == name:
                    for p, a in zip(prog.params, stmt.args):
                        if p.name in out and hasattr(a, "name") and not isinstance(a, Var):
                            out[p.name].add(a.name)
        return out

    def skills_achieving(self, goal) -> set:
        """Non-alias skills whose declared post (under some binding) entails ``goal``."""
        out = set()
        for name, n in self.nodes.items():
            if n.alias_of is not None:
                continue
            if entails(n.program.post, goal):
                out.add(name)
                continue
            b = bind_for_goal(n.program, goal)
            if b is None:
                continue
            dom = self.kind_domain(name)
            if all(b.get(k) in v for k, v in dom.items()):
                out.add(name)
        return out

    # -- statistics --------------------------------------------------------
    def record_outcome(self, name: str, success: bool):
        node = self.node(self.canonical(name))
        node.n_exec += 1
        if success:
            node.n_succ += 1

    # -- structural changes ------------------------------------------------
    def _check_callees(self, program: SkillProgram, extra: set = frozenset()):
        for callee in program.children():
            if callee not in self.nodes and callee not in extra:
                raise NetworkError(f"{program.name} calls unknown skill {callee!r}")

    def insert_skill(self, program: SkillProgram, *, n_exec: int = 0, n_succ: int = 0,
                     alias_of: str | None = None) -> SkillNode:
        if program.name in self.nodes:
            raise NetworkError(f"skill {program.name!r} already exists")
        self._check_callees(program, {program.name})
        node = SkillNode(program, n_exec, n_succ, alias_of)
        self.nodes[program.name] = node
        self.generation += 1
        return node

    def insert_many(self, programs):
        """Insert mutually referencing skills at once (e.g. a bundled library)."""
        names = {p.name for p in programs}
        for p in programs:
            if p.name in self.nodes:
                raise NetworkError(f"skill {p.name!r} already exists")
            self._check_callees(p, names)
        for p in programs:
            self.nodes[p.name] = SkillNode(p)
        self.generation += 1

    def replace_program(self, name: str, program: SkillProgram):
        node = self.node(name)
        if program.name != name:
            raise NetworkError("replacement must keep the skill name")
        self._check_callees(program, {name})
        if program != node.program:
            node.program = program
            self.generation += 1

    def remove_skill(self, name: str):
        self.node(name)
        callers = self.parents(name) - {name}
        if callers:
            raise NetworkError(f"cannot remove {name!r}: called by {sorted(callers)}")
        if any(n.alias_of == name for n in self.nodes.values()):
            raise NetworkError(f"cannot remove {name!r}: aliased")
        del self.nodes[name]
        self.generation += 1

    def redirect_links(self, old: str, new: str) -> list:
        """Point every call of ``old`` at ``new``; returns the rewritten callers."""
        self.node(old)
        self.node(new)
        changed = []
        for name, n in self.nodes.items():
            if name == old or old not in n.program.children():
                continue
            n.program = _rename_calls(n.program, old, new)
            changed.append(name)
        if changed:
            self.generation += 1
        return sorted(changed)

    def demote_to_alias(self, name: str, target: str):
        node = self.node(name)
        self.node(target)
        node.program = make_alias(node.program, target)
        node.alias_of = target
        self.generation += 1

    # -- snapshots and persistence ----------------------------------------
    def snapshot(self) -> "NetworkSnapshot":
        return NetworkSnapshot(copy.deepcopy(self.nodes), self.generation)

    def restore(self, snap: "NetworkSnapshot"):
        self.nodes = copy.deepcopy(snap.nodes)
        self.generation = snap.generation

    def copy(self) -> "SkillNetwork":
        return SkillNetwork(copy.deepcopy(self.nodes), self.generation)

    def to_json(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "generation": self.generation,
            "nodes": [
                {"id": name, "source": print_skill(n.program), "n_exec": n.n_exec,
                 "n_succ": n.n_succ, "alias_of": n.alias_of,
                 "calibration": n.calibration}
                for name, n in sorted(self.nodes.items())
            ],
        }

    def serialize(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, indent=1).encode("utf-8")

    def structure_bytes(self) -> bytes:
        """Serialization without the generation counter."""
        d = self.to_json()
        d.pop("generation")
        return json.dumps(d, sort_keys=True).encode("utf-8")

    @classmethod
    def deserialize(cls, data: bytes | str) -> "SkillNetwork":
        try:
            d = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise NetworkError(f"corrupt network payload: {exc}") from exc
        if not isinstance(d, dict) or "version" not in d:
            raise NetworkError("corrupt network payload: missing version")
        if d["version"] != FORMAT_VERSION:
            raise NetworkError(f"unsupported network version {d['version']!r}")
        try:
            nodes = {}
            for rec in d["nodes"]:
                prog = parse_skill(rec["source"])
                if prog.name != rec["id"]:
                    raise NetworkError(f"node id {rec['id']!r} does not match source")
                nodes[rec["id"]] = SkillNode(prog, int(rec["n_exec"]), int(rec["n_succ"]),
                                             rec.get("alias_of"), dict(rec.get("calibration", {})))
            net = cls(nodes, int(d["generation"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"corrupt network payload: {exc}") from exc
        for n in net.nodes.values():
            net._check_callees(n.program)
            if n.alias_of is not None:
                net.node(n.alias_of)
        return net

    def __eq__(self, other) -> bool:
        return isinstance(other, SkillNetwork) and self.to_json() == other.to_json()


@dataclass
class NetworkSnapshot:
    nodes: dict
    generation: int


def _rename_calls(program: SkillProgram, old: str, new: str) -> SkillProgram:
    from .dsl import replace_node

    out = program
    for path, stmt in list(walk_statements(program.body)):
        if isinstance(stmt, Call) and stmt.name == old:
            out = replace_node(out, path, Call(new, stmt.args))
    return out


def load_library(text: str) -> SkillNetwork:
    from .dsl import parse_skills

    net = SkillNetwork()
    net.insert_many(parse_skills(text))
    return net


def grounded_pre(program: SkillProgram, bindings: dict) -> tuple:
    return tuple(ground(c, bindings) for c in program.pre)
