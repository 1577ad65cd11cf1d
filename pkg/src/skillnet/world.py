"""MiniCraft: a small deterministic crafting world with a fixed tech tree."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dsl import DSLError, InvAtLeast, StationPlaced, ToolTierAtLeast, holds, parse_condition_list
from .kinds import ITEMS, PRIMITIVES, STATIONS

SLOTS = 36
STACK = 64
# sparse fields: a careless request can exceed what a world offers
FIELD_BASE = 64
FIELD_JITTER = 192


class WorldError(Exception):
    pass


@dataclass(frozen=True)
class Recipe:
    output: str
    count: int
    inputs: tuple = ()  # ((item, n), ...) sorted by item
    station: str | None = None
    tool_tier_required: int = 0
    kind: str = "craft"  # craft | smelt | gather


@dataclass
class RecipeBook:
    recipes: dict = field(default_factory=dict)  # output -> Recipe (craft and smelt)
    gather: dict = field(default_factory=dict)  # resource -> required tier
    tools: dict = field(default_factory=dict)  # tool item -> tier granted

    def producer(self, item: str) -> str | None:
        """Name of the primitive that yields ``item``, if any."""
        if item in self.gather:
            return "gather"
        if item in self.recipes:
            return self.recipes[item].kind
        return None


def parse_recipes(text: str) -> RecipeBook:
    book = RecipeBook()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            head, _, conds_text = line.partition(":")
            words = head.split()
            conds = parse_condition_list(conds_text) if conds_text.strip() else ()
            if words[0] in ("recipe", "smelt"):
                inputs, station, tier = {}, None, 0
                for c in conds:
                    if isinstance(c, InvAtLeast):
                        inputs[c.item.name] = c.count.value
                    elif isinstance(c, StationPlaced):
                        station = c.kind.name
                    elif isinstance(c, ToolTierAtLeast):
                        tier = c.tier
                    else:
                        raise WorldError(f"unsupported recipe condition {c!r}")
                kind = "craft" if words[0] == "recipe" else "smelt"
                book.recipes[words[1]] = Recipe(words[1], int(words[2]), tuple(sorted(inputs.items())),
                                                station, tier, kind)
            elif words[0] == "gather":
                tier = 0
                for c in conds:
                    if not isinstance(c, ToolTierAtLeast):
                        raise WorldError("gather lines only take a tooltier requirement")
                    tier = c.tier
                book.gather[words[1]] = tier
            elif words[0] == "tool":
                book.tools[words[1]] = int(words[2])
            else:
                raise WorldError(f"unknown directive {words[0]!r}")
        except (IndexError, ValueError, AttributeError, DSLError, WorldError) as exc:
            raise WorldError(f"recipes line {lineno}: {raw.strip()!r}: {exc}") from exc
    return book


def _data_text(name: str) -> str:
    return resources.files("skillnet.data").joinpath(name).read_text(encoding="utf-8")


def load_recipes(path: str | Path | None = None) -> RecipeBook:
    if path is None:
        return parse_recipes(_data_text("recipes.txt"))
    return parse_recipes(Path(path).read_text(encoding="utf-8"))


_DEFAULT_BOOK = None


def default_book() -> RecipeBook:
    global _DEFAULT_BOOK
    if _DEFAULT_BOOK is None:
        _DEFAULT_BOOK = load_recipes()
    return _DEFAULT_BOOK


@dataclass
class WorldState:
    """Symbolic world snapshot. Treated as a value: stepping returns a new state."""
    inventory: dict = field(default_factory=dict)
    stations: frozenset = frozenset()
    field: dict = field(default_factory=dict)
    tool_tier: int = 0
    tick: int = 0

    def count(self, item: str) -> int:
        return self.inventory.get(item, 0)

    def slots_used(self, inventory: dict | None = None) -> int:
        inv = self.inventory if inventory is None else inventory
        return sum(math.ceil(n / STACK) for n in inv.values())

    def capacity_for(self, item: str) -> int:
        """How many more units of ``item`` fit in the inventory."""
        free = SLOTS - self.slots_used()
        partial = self.count(item) % STACK
        return max(0, free) * STACK + (STACK - partial if partial else 0)

    def copy(self, **changes) -> "WorldState":
        out = WorldState(dict(self.inventory), self.stations, dict(self.field), self.tool_tier, self.tick)
        for k, v in changes.items():
            setattr(out, k, v)
        return out

    def to_json(self) -> dict:
        return {
            "inventory": dict(sorted(self.inventory.items())),
            "stations": sorted(self.stations),
            "field": dict(sorted(self.field.items())),
            "tool_tier": self.tool_tier,
            "tick": self.tick,
        }

    @classmethod
    def from_json(cls, d: dict) -> "WorldState":
        return cls(dict(d["inventory"]), frozenset(d["stations"]), dict(d["field"]),
                   d["tool_tier"], d["tick"])

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


def reset_world(seed: int, book: RecipeBook | None = None) -> WorldState:
    book = book or default_book()
    rng = np.random.default_rng(seed)
    resources_ = sorted(book.gather)
    jitter = rng.integers(0, FIELD_JITTER + 1, size=len(resources_))
    return WorldState(field={r: FIELD_BASE + int(j) for r, j in zip(resources_, jitter)})


@dataclass(frozen=True)
class PrimitiveFeedback:
    kind: str  # ok | insufficient | missing_station | tool_tier | capacity | depleted | no_recipe | malformed
    message: str = ""
    item: str | None = None
    need: int | None = None
    have: int | None = None

    @property
    def ok(self) -> bool:
        return self.kind == "ok"

    def to_json(self) -> dict:
        return {"kind": self.kind, "message": self.message, "item": self.item,
                "need": self.need, "have": self.have}

    @classmethod
    def from_json(cls, d: dict) -> "PrimitiveFeedback":
        return cls(d["kind"], d.get("message", ""), d.get("item"), d.get("need"), d.get("have"))


OK = PrimitiveFeedback("ok")


def _fail(s: WorldState, kind: str, message: str, item=None, need=None, have=None):
    return s.copy(tick=s.tick + 1), PrimitiveFeedback(kind, message, item, need, have), False


def _validate(name: str, args: tuple):
    sig = PRIMITIVES.get(name)
    if sig is None:
        raise WorldError(f"unknown primitive {name!r}")
    if len(args) != len(sig):
        raise WorldError(f"{name} takes {len(sig)} arguments, got {len(args)}")
    for a, kind in zip(args, sig):
        if kind == "int":
            ok = isinstance(a, (int, np.integer)) and not isinstance(a, bool)
        elif kind == "item":
            ok = a in ITEMS
        else:
            ok = a in STATIONS
        if not ok:
            raise WorldError(f"{name}: argument {a!r} is not a valid {kind}")


def step_primitive(s: WorldState, name: str, args, book: RecipeBook | None = None):
    """Apply one primitive. Returns ``(state, feedback, success)``.

    A failed step leaves everything but ``tick`` untouched.
    """
    book = book or default_book()
    args = tuple(args)
    _validate(name, args)
    if name == "place":
        (station,) = args
        if station in s.stations:
            return s.copy(tick=s.tick + 1), OK, True
        have = s.count(station)
        if have < 1:
            return _fail(s, "insufficient", f"insufficient {station}: need 1 have {have}", station, 1, have)
        inv = dict(s.inventory)
        inv[station] = have - 1
        if inv[station] == 0:
            del inv[station]
        return s.copy(inventory=inv, stations=s.stations | {station}, tick=s.tick + 1), OK, True

    item, n = args[0], int(args[1])
    if n < 0:
        return _fail(s, "malformed", f"negative count {n} for {name}({item})", item, n, None)

    if name == "explore":
        if item not in book.gather:
            return _fail(s, "no_recipe", f"{item} cannot be found by exploring", item)
        fld = dict(s.field)
        fld[item] = fld.get(item, 0) + n
        return s.copy(field=fld, tick=s.tick + 1), OK, True

    if name == "gather":
        if item not in book.gather:
            return _fail(s, "no_recipe", f"{item} cannot be gathered", item)
        tier = book.gather[item]
        if s.tool_tier < tier:
            return _fail(s, "tool_tier", f"gathering {item} requires tool tier {tier} have {s.tool_tier}",
                         item, tier, s.tool_tier)
        room = s.capacity_for(item)
        if n > room:
            return _fail(s, "capacity", f"inventory full: {item} need room {n} have {room}", item, n, room)
        left = s.field.get(item, 0)
        if n > left:
            return _fail(s, "depleted", f"field depleted: {item} need {n} have {left}", item, n, left)
        inv = dict(s.inventory)
        fld = dict(s.field)
        if n:
            inv[item] = inv.get(item, 0) + n
        fld[item] = left - n
        return s.copy(inventory=inv, field=fld, tick=s.tick + 1), OK, True

    # craft / smelt
    recipe = book.recipes.get(item)
    if recipe is None or recipe.kind != name:
        return _fail(s, "no_recipe", f"no {name} recipe for {item}", item)
    if recipe.station and recipe.station not in s.stations:
        return _fail(s, "missing_station", f"{name} {item} requires station {recipe.station}",
                     recipe.station)
    if s.tool_tier < recipe.tool_tier_required:
        return _fail(s, "tool_tier", f"{name} {item} requires tool tier {recipe.tool_tier_required} "
                     f"have {s.tool_tier}", item, recipe.tool_tier_required, s.tool_tier)
    for inp, k in recipe.inputs:
        need, have = k * n, s.count(inp)
        if have < need:
            return _fail(s, "insufficient", f"insufficient {inp}: need {need} have {have}", inp, need, have)
    inv = dict(s.inventory)
    for inp, k in recipe.inputs:
        if not k * n:
            continue
        inv[inp] -= k * n
        if inv[inp] == 0:
            del inv[inp]
    made = recipe.count * n
    if made:
        inv[item] = inv.get(item, 0) + made
    if s.slots_used(inv) > SLOTS:
        room = s.copy(inventory={k: v for k, v in inv.items() if k != item}).capacity_for(item)
        return _fail(s, "capacity", f"inventory full: {item} need room {made} have {room}", item, made, room)
    tier = max(s.tool_tier, book.tools.get(item, 0)) if made else s.tool_tier
    return s.copy(inventory=inv, tool_tier=tier, tick=s.tick + 1), OK, True


# -- tasks ---------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    name: str
    goal: tuple
    iteration_budget: int


def check_goal(task: Task, s: WorldState) -> bool:
    return all(holds(c, {}, s) for c in task.goal)


def parse_curriculum(text: str) -> list:
    tasks = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, goal_text = line.partition("goal:")
        words = head.split()
        if not sep or len(words) != 3 or words[0] != "task" or not words[2].startswith("budget="):
            raise WorldError(f"curriculum line {lineno}: expected 'task NAME budget=N goal: ...'")
        try:
            budget = int(words[2][len("budget="):])
        except ValueError as exc:
            raise WorldError(f"curriculum line {lineno}: bad budget") from exc
        goal = parse_condition_list(goal_text)
        if budget < 1:
            raise WorldError(f"curriculum line {lineno}: budget must be >= 1")
        tasks.append(Task(words[1], goal, budget))
    if not tasks:
        raise WorldError("curriculum is empty")
    return tasks


def load_curriculum(path: str | Path | None = None) -> list:
    if path is None:
        return parse_curriculum(_data_text("curriculum.txt"))
    return parse_curriculum(Path(path).read_text(encoding="utf-8"))
