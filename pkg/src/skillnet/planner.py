"""Backward chaining over skill postconditions with Boltzmann skill selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsl import (
    InvAtLeast, Kind, Num, Prim, SkillProgram, StationPlaced, ToolTierAtLeast,
    bind_for_goal, entails, ground, holds, print_condition,
)
from .dsl.logic import default_bindings, entails_atom


class PlanningError(Exception):
    def __init__(self, message: str, atoms=()):
        super().__init__(message)
        self.atoms = tuple(atoms)


@dataclass(frozen=True)
class PlannerConfig:
    temperature: float = 0.5
    max_depth: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


@dataclass(frozen=True)
class PlanStep:
    skill: str
    bindings: tuple = ()  # sorted (param, value) pairs

    @property
    def args(self) -> dict:
        return dict(self.bindings)


@dataclass
class Plan:
    steps: list = field(default_factory=list)
    unground: list = field(default_factory=list)
    # index in ``steps`` before which each unground atom must be established
    splice: list = field(default_factory=list)
    new_skills: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


def softmax_probabilities(values, temperature: float) -> np.ndarray:
    v = np.asarray(values, dtype=float) / temperature
    v -= v.max()
    w = np.exp(v)
    return w / w.sum()


# below this temperature selection is a deterministic argmax
ARGMAX_TEMPERATURE = 1e-9


def select_skill(candidates, net, cfg: PlannerConfig, rng: np.random.Generator) -> str:
    """Sample a candidate with probability proportional to exp(V / T)."""
    names = sorted(candidates)
    if not names:
        raise PlanningError("no candidate skills")
    values = [net.value(n) for n in names]
    u = rng.random()
    if cfg.temperature <= ARGMAX_TEMPERATURE:
        best = max(values)
        return next(n for n, v in zip(names, values) if v == best)
    probs = softmax_probabilities(values, cfg.temperature)
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return names[min(idx, len(names) - 1)]


def _bindings_for(program: SkillProgram, atom) -> dict:
    b = bind_for_goal(program, atom)
    if b is None:
        b = default_bindings(program)
    return b


def _self_requiring(program: SkillProgram, atom) -> bool:
    b = _bindings_for(program, atom)
    return any(entails_atom(ground(c, b), atom) for c in program.pre)


def backward_chain(goal, net, state, cfg: PlannerConfig, rng: np.random.Generator | None = None) -> Plan:
    """Regress ``goal`` through skill postconditions.

    Every open atom gets its own provider; the chain is resource oblivious,
    leaving shortfalls to execution and repair.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    plan = Plan()
    # stations and tool tier are never consumed, so an earlier step's post settles them
    lasting = []

    def expand(atom, depth: int, visiting: frozenset):
        if holds(atom, {}, state):
            return
        if isinstance(atom, (StationPlaced, ToolTierAtLeast)) and entails(lasting, atom):
            return
        if depth > cfg.max_depth or atom in visiting:
            plan.unground.append(atom)
            plan.splice.append(len(plan.steps))
            return
        # a provider that itself needs the atom (or something stronger) cannot help
        candidates = {c for c in net.skills_achieving(atom)
                      if not _self_requiring(net.program(c), atom)}
        if not candidates:
            plan.unground.append(atom)
            plan.splice.append(len(plan.steps))
            return
        name = select_skill(candidates, net, cfg, rng)
        program = net.program(name)
        bindings = _bindings_for(program, atom)
        # the pre list is a stack: push in reverse so atoms pop in declared order
        stack = [ground(c, bindings) for c in program.pre][::-1]
        while stack:
            expand(stack.pop(), depth + 1, visiting | {atom})
        plan.steps.append(PlanStep(name, tuple(sorted(bindings.items()))))
        lasting.extend(g for g in (ground(c, bindings) for c in program.post)
                       if isinstance(g, (StationPlaced, ToolTierAtLeast)))

    for atom in goal:
        expand(atom, 1, frozenset())
    return plan


def plan(task, net, state, forward_op, cfg: PlannerConfig, rng: np.random.Generator | None = None) -> Plan:
    """Backward chain, then fill unground atoms with skills distilled from ``forward_op``."""
    result = backward_chain(task.goal, net, state, cfg, rng)
    if not result.unground:
        return result
    try:
        proposals = forward_op.forward(list(result.unground), state, net)
    except Exception as exc:
        raise PlanningError(f"forward planner failed: {exc}", result.unground) from exc
    missing = [a for a, p in zip(result.unground, proposals or []) if not p]
    missing += result.unground[len(proposals or []):]
    if missing:
        raise PlanningError("unplannable: " + ", ".join(print_condition(a) for a in missing), missing)
    taken = set(net.nodes)
    inserts = []
    for atom, pos, prims in zip(result.unground, result.splice, proposals):
        program = distill(atom, prims, taken)
        taken.add(program.name)
        result.new_skills.append(program)
        inserts.append((pos, PlanStep(program.name, ())))
    for pos, step in sorted(inserts, key=lambda x: x[0], reverse=True):
        result.steps.insert(pos, step)
    result.unground = []
    result.splice = []
    return result


def distilled_name(atom) -> str:
    if isinstance(atom, InvAtLeast) and isinstance(atom.item, Kind):
        return f"obtain_{atom.item.name}"
    if isinstance(atom, StationPlaced) and isinstance(atom.kind, Kind):
        return f"setup_{atom.kind.name}"
    if isinstance(atom, ToolTierAtLeast):
        return f"reach_tier_{atom.tier}"
    return "achieve"


def distill(atom, prims, taken) -> SkillProgram:
    """Turn a primitive step list into a parameterless skill posting ``atom``."""
    base = distilled_name(atom)
    name, k = base, 2
    while name in taken:
        name, k = f"{base}_{k}", k + 1
    body = tuple(Prim(p, tuple(Num(a) if isinstance(a, int) else Kind(a) for a in args))
                 for p, args in prims)
    return SkillProgram(name, (), (), (atom,), body)


def symbolic_replay(plan_: Plan, net, state, goal) -> bool:
    """Check a plan abstractly: each step's grounded pre must follow from facts so far."""
    facts = []
    for step in plan_.steps:
        program = net.program(step.skill)
        b = step.args
        for c in program.pre:
            g = ground(c, b)
            if not (holds(g, {}, state) or entails(facts, g)):
                return False
        facts.extend(ground(c, b) for c in program.post)
    return all(holds(g, {}, state) or entails(facts, g) for g in goal)
