"""Fault injection: seeded, invertible perturbations of skill programs.

A fault is a short list of perturbations applied through ordinary edits, so
every injection is well formed and carries the exact edits that undo it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dsl import (
    If, InsertStatement, Kind, Num, RemoveCondition, RemoveStatement, SetConstant,
    SkillProgram, apply_edit, atom_key, get_node, inverse_edits, parse_condition,
    parse_path, parse_statement,
)
from .dsl.edits import EditError

FAULT_CLASSES = (
    "resource-miscalculation",
    "missing-precondition",
    "boundary-condition",
    "unsafe-fallback",
    "wrong-call",
    "cross-skill-contract",
)


class FaultError(Exception):
    pass


@dataclass(frozen=True)
class Perturbation:
    op: str  # set | delta | remove | remove_pre | replace | wrap
    target: str = ""  # ast path, or a condition for remove_pre
    value: object = None


@dataclass(frozen=True)
class FaultSpec:
    id: str
    fault_class: str
    skill: str
    perturbations: tuple = ()
    in_run: bool = False  # injected into curriculum runs
    note: str = ""

    def __post_init__(self):
        if self.fault_class not in FAULT_CLASSES:
            raise FaultError(f"unknown fault class {self.fault_class!r}")
        if not self.perturbations:
            raise FaultError(f"fault {self.id} has no perturbations")


def _edits_for(p: SkillProgram, pert: Perturbation, rng) -> list:
    if pert.op == "remove_pre":
        cond = parse_condition(pert.target)
        if not any(atom_key(c) == atom_key(cond) for c in p.pre):
            raise FaultError(f"{p.name} has no precondition {pert.target!r}")
        return [RemoveCondition("pre", cond)]
    try:
        path = parse_path(pert.target)
        node = get_node(p, path)
    except Exception as exc:
        raise FaultError(f"invalid target {pert.target!r} in {p.name}: {exc}") from exc
    if pert.op == "set":
        return [SetConstant(path, pert.value)]
    if pert.op == "delta":
        if not isinstance(node, Num):
            raise FaultError(f"delta needs an integer literal at {pert.target}")
        d = pert.value
        if isinstance(d, (list, tuple)):
            d = int(rng.integers(d[0], d[1] + 1))
        return [SetConstant(path, max(0, node.value + int(d)))]
    if pert.op == "remove":
        return [RemoveStatement(path)]
    if pert.op == "replace":
        return [RemoveStatement(path), InsertStatement(path, parse_statement(pert.value))]
    if pert.op == "wrap":
        wrapped = If(parse_condition(pert.value), (node,), ())
        return [RemoveStatement(path), InsertStatement(path, wrapped)]
    raise FaultError(f"unknown perturbation {pert.op!r}")


def inject_fault(p: SkillProgram, f: FaultSpec, rng: np.random.Generator | None = None):
    """Return ``(faulty_program, inverse_edits)``.

    Applying the inverse edits in order to the faulty program restores ``p``.
    """
    if p.name != f.skill:
        raise FaultError(f"fault {f.id} targets {f.skill}, not {p.name}")
    rng = rng if rng is not None else np.random.default_rng(0)
    inverse = []
    out = p
    for pert in f.perturbations:
        for e in _edits_for(out, pert, rng):
            try:
                inverse[:0] = inverse_edits(out, e)
                out = apply_edit(out, e)
            except EditError as exc:
                raise FaultError(f"fault {f.id}: {exc}") from exc
    if out == p:
        raise FaultError(f"fault {f.id} leaves {p.name} unchanged")
    return out, inverse


def parse_faults(text: str) -> list:
    try:
        data = json.loads(text)
        return [FaultSpec(d["id"], d["class"], d["skill"],
                          tuple(Perturbation(q["op"], q.get("target", ""), q.get("value"))
                                for q in d["perturbations"]),
                          bool(d.get("run", False)), d.get("note", ""))
                for d in data]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FaultError(f"malformed fault corpus: {exc}") from exc


def load_faults(path: str | Path | None = None) -> list:
    if path is None:
        return parse_faults(resources.files("skillnet.data").joinpath("faults.json").read_text("utf-8"))
    return parse_faults(Path(path).read_text(encoding="utf-8"))


def inject_into(net, faults, rng: np.random.Generator | None = None) -> dict:
    """Inject several faults into a network in place; returns id -> inverse edits."""
    rng = rng if rng is not None else np.random.default_rng(0)
    seen, out = set(), {}
    for f in faults:
        if f.skill in seen:
            raise FaultError(f"two faults target {f.skill}")
        seen.add(f.skill)
        program, inverse = inject_fault(net.program(f.skill), f, rng)
        net.replace_program(f.skill, program)
        out[f.id] = inverse
    return out
