"""Expression evaluation, condition grounding and syntactic entailment."""
from __future__ import annotations

from .ast import (
    BinOp, Cap, Compare, DSLError, Func, InvAtLeast, InvCount, Kind, Num,
    StationPlaced, ToolTier, ToolTierAtLeast, Var, free_vars, substitute,
)

# counts searched when binding an integer parameter to reach a goal threshold
MAX_BIND = 256


class EvalError(DSLError):
    pass


def literal(value) -> Num | Kind:
    return Num(value) if isinstance(value, int) else Kind(value)


def eval_expr(e, env: dict, state=None):
    """Evaluate to an ``int`` or a kind name. ``state`` may be None for pure expressions."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Kind):
        return e.name
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, BinOp):
        a = eval_expr(e.left, env, state)
        b = eval_expr(e.right, env, state)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            raise EvalError("division by zero")
        return a // b if e.op == "/" else a % b
    if isinstance(e, Func):
        vals = [eval_expr(a, env, state) for a in e.args]
        return min(vals) if e.name == "min" else max(vals)
    if state is None:
        raise EvalError("expression depends on world state")
    if isinstance(e, InvCount):
        return state.count(eval_expr(e.item, env, state))
    if isinstance(e, Cap):
        return state.capacity_for(eval_expr(e.item, env, state))
    if isinstance(e, ToolTier):
        return state.tool_tier
    raise EvalError(f"cannot evaluate {e!r}")


_REL = {
    ">=": lambda a, b: a >= b, "<=": lambda a, b: a <= b, ">": lambda a, b: a > b,
    "<": lambda a, b: a < b, "==": lambda a, b: a == b, "!=": lambda a, b: a != b,
}


def holds(c, env: dict, state) -> bool:
    if isinstance(c, InvAtLeast):
        return state.count(eval_expr(c.item, env, state)) >= eval_expr(c.count, env, state)
    if isinstance(c, StationPlaced):
        return eval_expr(c.kind, env, state) in state.stations
    if isinstance(c, ToolTierAtLeast):
        return state.tool_tier >= c.tier
    if isinstance(c, Compare):
        return _REL[c.op](eval_expr(c.left, env, state), eval_expr(c.right, env, state))
    raise EvalError(f"not a condition: {c!r}")


def fold(e):
    """Constant-fold an expression; returns a literal when no variables or state remain."""
    if isinstance(e, BinOp):
        left, right = fold(e.left), fold(e.right)
        if isinstance(left, Num) and isinstance(right, Num):
            try:
                return Num(eval_expr(BinOp(e.op, left, right), {}))
            except EvalError:
                pass
        return BinOp(e.op, left, right)
    if isinstance(e, Func):
        args = tuple(fold(a) for a in e.args)
        if all(isinstance(a, Num) for a in args):
            return Num(eval_expr(Func(e.name, args), {}))
        return Func(e.name, args)
    if isinstance(e, InvCount):
        return InvCount(fold(e.item))
    if isinstance(e, Cap):
        return Cap(fold(e.item))
    return e


def ground(cond, bindings: dict):
    """Substitute parameter bindings into a condition and fold constants."""
    env = {k: literal(v) for k, v in bindings.items()}
    c = substitute(cond, env)
    if isinstance(c, InvAtLeast):
        return InvAtLeast(fold(c.item), fold(c.count))
    if isinstance(c, StationPlaced):
        return StationPlaced(fold(c.kind))
    if isinstance(c, Compare):
        return Compare(fold(c.left), c.op, fold(c.right))
    return c


def is_ground(cond) -> bool:
    if free_vars(cond):
        return False
    if isinstance(cond, InvAtLeast):
        return isinstance(cond.item, Kind) and isinstance(cond.count, Num)
    if isinstance(cond, StationPlaced):
        return isinstance(cond.kind, Kind)
    return True


def entails_atom(atom, goal) -> bool:
    if isinstance(goal, InvAtLeast) and isinstance(atom, InvAtLeast):
        return (isinstance(atom.item, Kind) and atom.item == goal.item
                and isinstance(atom.count, Num) and isinstance(goal.count, Num)
                and atom.count.value >= goal.count.value)
    if isinstance(goal, StationPlaced) and isinstance(atom, StationPlaced):
        return isinstance(atom.kind, Kind) and atom.kind == goal.kind
    if isinstance(goal, ToolTierAtLeast) and isinstance(atom, ToolTierAtLeast):
        return atom.tier >= goal.tier
    if isinstance(goal, Compare):
        return atom == goal
    return False


def entails(post, goal) -> bool:
    """True iff a single ground atom of ``post`` dominates ``goal``.

    Sound but incomplete: no reasoning across atoms and no arithmetic beyond
    comparing literal thresholds.
    """
    return any(entails_atom(a, goal) for a in post)


def default_bindings(program) -> dict:
    return {p.name: p.default for p in program.params if p.default is not None}


def bind_for_goal(program, goal) -> dict | None:
    """Find parameter bindings under which ``program.post`` entails ``goal``.

    Item/station parameters are matched against the goal's kind; a single
    free integer parameter is set to the smallest value reaching the goal's
    threshold. Remaining parameters fall back to defaults (or 1 for ints).
    Returns None when no binding works.
    """
    kinds = {p.name: p.kind for p in program.params}
    for atom in program.post:
        bindings = _try_bind(atom, goal, kinds)
        if bindings is None:
            continue
        full = default_bindings(program)
        full.update(bindings)
        for p in program.params:
            if p.name not in full:
                if p.kind != "int":
                    break
                full[p.name] = 1
        else:
            if entails([ground(a, full) for a in program.post], goal):
                return full
    return None


def _try_bind(atom, goal, kinds: dict) -> dict | None:
    if isinstance(goal, StationPlaced) and isinstance(atom, StationPlaced):
        if atom.kind == goal.kind:
            return {}
        if isinstance(atom.kind, Var) and kinds.get(atom.kind.name) == "station":
            return {atom.kind.name: goal.kind.name}
        return None
    if isinstance(goal, ToolTierAtLeast) and isinstance(atom, ToolTierAtLeast):
        return {} if atom.tier >= goal.tier else None
    if not (isinstance(goal, InvAtLeast) and isinstance(atom, InvAtLeast)):
        return None
    out = {}
    if isinstance(atom.item, Var):
        if kinds.get(atom.item.name) != "item":
            return None
        out[atom.item.name] = goal.item.name
    elif atom.item != goal.item:
        return None
    need = goal.count.value
    count = substitute(atom.count, {k: literal(v) for k, v in out.items()})
    names = sorted(free_vars(count))
    if not names:
        return out
    if len(names) != 1 or kinds.get(names[0]) != "int":
        return None
    for n in range(1, MAX_BIND + 1):
        try:
            if eval_expr(count, {names[0]: n}) >= need:
                out[names[0]] = n
                return out
        except EvalError:
            return None
    return None
