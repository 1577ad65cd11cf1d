"""Online structural refactoring of the skill network.

Around a skill that just succeeded we look for five kinds of structural
redundancy, rewrite the network deterministically, and keep the rewrite only
if recent tasks that touch the rewritten skills still succeed.
"""
from __future__ import annotations

import dataclasses
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .dsl import (
    BinOp, Call, If, Kind, Let, Num, Param, Prim, Repeat, SkillProgram, Var, check_program,
    count_nodes, entails, free_vars, print_skill, substitute, walk_statements,
)
from .dsl.check import WellFormednessError
from .network import NetworkError, make_alias

CASES = ("A-parametric", "B-subgraph", "C-sibling", "D-extract", "E-duplicate")
# most conservative first
PRIORITY = {"E-duplicate": 0, "A-parametric": 1, "B-subgraph": 2, "D-extract": 3, "C-sibling": 4}
TRIGGER_PERIOD = 5
WINDOW_SIZE = 3
DROP_RATIO = 0.8
MAX_TEMPLATE_PARAMS = 4
TOP_K = 5
MIN_EXTRACT = 2  # shortest shared block worth a subskill


class StaleProposal(Exception):
    """The network changed between detection and application."""


# -- rewrite steps -------------------------------------------------------------------------

@dataclass(frozen=True)
class SetProgram:
    name: str
    program: SkillProgram


@dataclass(frozen=True)
class AddSkill:
    program: SkillProgram
    n_exec: int = 0
    n_succ: int = 0
    alias_of: str | None = None


@dataclass(frozen=True)
class DropSkill:
    name: str


@dataclass(frozen=True)
class SetAlias:
    name: str
    target: str | None


def apply_step(net, step):
    """Apply one rewrite step in place and return the step that undoes it."""
    if isinstance(step, SetProgram):
        old = net.program(step.name)
        net.replace_program(step.name, step.program)
        return SetProgram(step.name, old)
    if isinstance(step, AddSkill):
        net.insert_skill(step.program, n_exec=step.n_exec, n_succ=step.n_succ, alias_of=step.alias_of)
        return DropSkill(step.program.name)
    if isinstance(step, DropSkill):
        node = net.node(step.name)
        net.remove_skill(step.name)
        return AddSkill(node.program, node.n_exec, node.n_succ, node.alias_of)
    if isinstance(step, SetAlias):
        node = net.node(step.name)
        if step.target is not None:
            net.node(step.target)
        old = node.alias_of
        node.alias_of = step.target
        net.generation += 1
        return SetAlias(step.name, old)
    raise TypeError(f"not a rewrite step: {step!r}")


def step_to_json(step) -> dict:
    if isinstance(step, SetProgram):
        return {"op": "set_program", "name": step.name, "source": print_skill(step.program)}
    if isinstance(step, AddSkill):
        return {"op": "add_skill", "source": print_skill(step.program), "n_exec": step.n_exec,
                "n_succ": step.n_succ, "alias_of": step.alias_of}
    if isinstance(step, DropSkill):
        return {"op": "drop_skill", "name": step.name}
    return {"op": "set_alias", "name": step.name, "target": step.target}


@dataclass
class RefactorProposal:
    case: str
    involved: list
    script: list
    inverse: list = field(default_factory=list)
    generation: int = 0
    note: str = ""

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown refactor case {self.case!r}")

    @property
    def affected(self) -> set:
        """Skills whose program or status the script touches."""
        out = set(self.involved)
        for s in self.script:
            out.add(s.program.name if isinstance(s, AddSkill) else s.name)
        return out

    def to_json(self) -> dict:
        return {"case": self.case, "involved": list(self.involved), "note": self.note,
                "script": [step_to_json(s) for s in self.script]}


def _simulate_inverse(net, script) -> list:
    """Inverse steps for ``script`` computed on a scratch copy."""
    scratch = net.copy()
    inverse = []
    for s in script:
        inverse.insert(0, apply_step(scratch, s))
    return inverse


def _proposal(net, case, involved, script, note="") -> RefactorProposal | None:
    try:
        inverse = _simulate_inverse(net, script)
    except (NetworkError, WellFormednessError, KeyError):
        return None
    return RefactorProposal(case, sorted(involved), list(script), inverse, net.generation, note)


# -- features and candidates ---------------------------------------------------------------

def _kinds_in(node, out: Counter):
    if isinstance(node, Kind):
        out["kind:" + node.name] += 1
    elif isinstance(node, tuple):
        for n in node:
            _kinds_in(n, out)
    elif dataclasses.is_dataclass(node):
        for f in dataclasses.fields(node):
            _kinds_in(getattr(node, f.name), out)


def features(p: SkillProgram) -> Counter:
    """Bag of features: primitives, callees, kind literals, parameter kinds, statement forms."""
    out = Counter()
    for prm in p.params:
        out["param:" + prm.kind] += 1
    for _, s in walk_statements(p.body):
        out["stmt:" + type(s).__name__.lower()] += 1
        if isinstance(s, Prim):
            out["prim:" + s.name] += 1
        elif isinstance(s, Call):
            out["call:" + s.name] += 1
    _kinds_in((p.pre, p.post, p.body), out)
    return out


def cosine(a: Counter, b: Counter) -> float:
    dot = sum(v * b.get(k, 0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb) if na and nb else 0.0


def candidate_set(s_t: str, net, k: int = TOP_K) -> set:
    """Graph neighbours of ``s_t`` plus its ``k`` most similar non-neighbours."""
    live = {n for n, node in net.nodes.items() if node.alias_of is None}
    neighbours = (net.parents(s_t) | net.children(s_t)) & live
    neighbours.discard(s_t)
    f = features(net.program(s_t))
    others = sorted(live - neighbours - {s_t})
    ranked = sorted(others, key=lambda n: (-cosine(f, features(net.program(n))), n))
    return neighbours | set(ranked[:k])


# -- matching helpers ----------------------------------------------------------------------

_LEAVES = (Num, Kind, Var)


def _children(node):
    if isinstance(node, tuple):
        return list(node)
    return [getattr(node, f.name) for f in dataclasses.fields(node)]


def _is_tree(x) -> bool:
    return isinstance(x, tuple) or dataclasses.is_dataclass(x)


def _same_shape(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, tuple):
        return len(a) == len(b)
    if isinstance(a, _LEAVES):
        return True
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if not (dataclasses.is_dataclass(x) or isinstance(x, tuple)) and x != y:
            return False  # names of prims, calls, lets, operators and tiers must agree
    return True


def match(general, special, gparams: set, sigma: dict) -> bool:
    """One-sided matching: parameters of ``general`` may stand for any expression of ``special``."""
    if isinstance(general, Var) and general.name in gparams:
        if general.name in sigma:
            return sigma[general.name] == special
        sigma[general.name] = special
        return True
    if isinstance(general, _LEAVES) or isinstance(special, _LEAVES) or not _is_tree(general):
        return general == special
    if not _same_shape(general, special):
        return False
    return all(match(x, y, gparams, sigma) for x, y in zip(_children(general), _children(special)))


def _fold(node):
    """Drop arithmetic identities (x + 0, x - 0, x * 1, x / 1, 0 + x, 1 * x)."""
    if isinstance(node, tuple):
        return tuple(_fold(n) for n in node)
    if not dataclasses.is_dataclass(node):
        return node
    node = dataclasses.replace(node, **{f.name: _fold(getattr(node, f.name))
                                        for f in dataclasses.fields(node)
                                        if isinstance(getattr(node, f.name), tuple)
                                        or dataclasses.is_dataclass(getattr(node, f.name))})
    if isinstance(node, BinOp):
        if node.right == Num(0) and node.op in ("+", "-"):
            return node.left
        if node.right == Num(1) and node.op in ("*", "/"):
            return node.left
        if (node.left == Num(0) and node.op == "+") or (node.left == Num(1) and node.op == "*"):
            return node.right
    return node


def normalized(p: SkillProgram) -> SkillProgram:
    """The program renamed to ``_``, parameters renamed positionally, identities folded."""
    env = {prm.name: Var(f"p{i}") for i, prm in enumerate(p.params)}
    params = tuple(Param(f"p{i}", prm.kind, prm.default) for i, prm in enumerate(p.params))
    return SkillProgram("_", params, _fold(substitute(p.pre, env)), _fold(substitute(p.post, env)),
                        _fold(substitute(p.body, env)))


def _is_wrapper(p: SkillProgram) -> bool:
    return len(p.body) == 1 and isinstance(p.body[0], Call)


def _wrapper(p: SkillProgram, target: str, args) -> SkillProgram:
    return SkillProgram(p.name, p.params, p.pre, p.post, (Call(target, tuple(args)),))


def _redirect(net, old: str, new: str, skip=()) -> list:
    steps = []
    for caller in sorted(net.parents(old) - {old} - set(skip)):
        prog = net.program(caller)
        body = _rename(prog.body, old, new)
        steps.append(SetProgram(caller, dataclasses.replace(prog, body=body)))
    return steps


def _rename(block, old, new):
    out = []
    for s in block:
        if isinstance(s, Call) and s.name == old:
            s = Call(new, s.args)
        elif isinstance(s, If):
            s = If(s.cond, _rename(s.then, old, new), _rename(s.orelse, old, new))
        elif isinstance(s, Repeat):
            s = Repeat(s.count, _rename(s.body, old, new))
        out.append(s)
    return tuple(out)


def _blocks(block, path=("body",)):
    """Every statement list in a body with its path, outermost first."""
    yield path, block
    for i, s in enumerate(block):
        if isinstance(s, If):
            yield from _blocks(s.then, path + (i, "then"))
            yield from _blocks(s.orelse, path + (i, "orelse"))
        elif isinstance(s, Repeat):
            yield from _blocks(s.body, path + (i, "body"))


def _replace_block(body, path, start, length, stmts):
    if len(path) == 1:
        return body[:start] + tuple(stmts) + body[start + length:]
    i, fld = path[1], path[2]
    s = body[i]
    inner = _replace_block(getattr(s, fld), ("body",) + path[3:], start, length, stmts)
    return body[:i] + (dataclasses.replace(s, **{fld: inner}),) + body[i + 1:]


def _lets(block) -> set:
    return {s.name for _, s in walk_statements(block) if isinstance(s, Let)}


def _block_is_closed(block, rest, params) -> bool:
    """A block can move into its own skill: it only reads lets it defines, none leak out."""
    own = _lets(block)
    if not free_vars(block) <= own:
        return False
    return not (own & free_vars(rest))


def _calls_into(net, start: str, target: str) -> bool:
    """Does ``start`` (transitively) call ``target``?"""
    seen, stack = set(), [start]
    while stack:
        n = stack.pop()
        if n == target:
            return True
        if n in seen or n not in net:
            continue
        seen.add(n)
        stack.extend(net.children(n))
    return False


# -- case detection ------------------------------------------------------------------------

def _case_e(net, a: str, b: str):
    pa, pb = net.program(a), net.program(b)
    if print_skill(normalized(pa)) != print_skill(normalized(pb)):
        return None
    va, vb = net.value(a), net.value(b)
    keep, drop = (a, b) if (va, b) > (vb, a) else (b, a)
    script = [SetProgram(drop, make_alias(net.program(drop), keep)), SetAlias(drop, keep)]
    script += _redirect(net, drop, keep, skip=(keep,))
    return _proposal(net, "E-duplicate", [keep, drop], script,
                     f"{drop} duplicates {keep}; {keep} kept as canonical")


def _case_a(net, general: str, special: str):
    g, s = net.program(general), net.program(special)
    if general == special or _calls_into(net, general, special):
        return None
    if _is_wrapper(s):
        return _covered_wrapper(net, g, s)
    gparams = set(g.param_names)
    sigma = {}
    if len(g.body) != len(s.body) or not match(g.body, s.body, gparams, sigma):
        return None
    if not all(isinstance(v, (Num, Kind, Var)) for v in sigma.values()):
        return None
    sp = set(s.param_names)
    if any(isinstance(v, Var) and v.name not in sp for v in sigma.values()):
        return None
    # a strict specialization binds at least one parameter to a constant
    if not any(isinstance(v, (Num, Kind)) for v in sigma.values()):
        return None
    if substitute(g.post, sigma) != s.post or not _pre_covered(g, s, sigma):
        return None
    args = []
    for prm in g.params:
        v = sigma.get(prm.name)
        if v is None:
            if prm.default is None:
                return None
            v = Num(prm.default) if isinstance(prm.default, int) else Kind(prm.default)
        args.append(v)
    wrapper = _wrapper(s, general, args)
    script = [SetProgram(special, wrapper), SetAlias(special, general)]
    return _proposal(net, "A-parametric", [general, special], script,
                     f"{special} is {general} with bound arguments")


def _pre_covered(g, s, sigma) -> bool:
    """The specialization may not run where the general skill would refuse to."""
    return all(entails(s.pre, c) for c in substitute(g.pre, sigma))


def _covered_wrapper(net, g, s):
    """A wrapper that already calls ``g`` with constants only needs demoting."""
    call = s.body[0]
    if call.name != g.name or s.params or net.node(s.name).alias_of is not None:
        return None
    if len(call.args) != len(g.params) or not all(isinstance(a, (Num, Kind)) for a in call.args):
        return None
    sigma = dict(zip(g.param_names, call.args))
    if substitute(g.post, sigma) != s.post or not _pre_covered(g, s, sigma):
        return None
    return _proposal(net, "A-parametric", [g.name, s.name], [SetAlias(s.name, g.name)],
                     f"{s.name} is {g.name} with bound arguments")


def _case_b(net, host: str, sub: str):
    h, y = net.program(host), net.program(sub)
    if host == sub or not y.body or _is_wrapper(y) or _calls_into(net, sub, host):
        return None
    k = len(y.body)
    gparams = set(y.param_names)
    if _lets(y.body) & set(y.param_names):
        return None
    for path, block in _blocks(h.body):
        for i in range(len(block) - k + 1):
            seg = block[i:i + k]
            if k == 1 and isinstance(seg[0], Call):
                continue
            if path == ("body",) and k == len(block):
                continue  # the whole skill: that is case A or E
            sigma = {}
            if not match(y.body, seg, gparams, sigma):
                continue
            if _lets(seg) & free_vars(block[i + k:]):
                continue
            args = []
            for prm in y.params:
                v = sigma.get(prm.name)
                if v is None:
                    if prm.default is None:
                        break
                    v = Num(prm.default) if isinstance(prm.default, int) else Kind(prm.default)
                args.append(v)
            else:
                call = Call(sub, tuple(args))
                if count_nodes(call) >= count_nodes(seg):
                    continue
                body = _replace_block(h.body, path, i, k, (call,))
                new = dataclasses.replace(h, body=body)
                return _proposal(net, "B-subgraph", [host, sub], [SetProgram(host, new)],
                                 f"block of {host} replaced by a call to {sub}")
    return None


def _common_block(a_body, b_body):
    """Longest identical contiguous run of top-level statements, at least MIN_EXTRACT long."""
    best = (0, 0, 0)
    for i in range(len(a_body)):
        for j in range(len(b_body)):
            n = 0
            while i + n < len(a_body) and j + n < len(b_body) and a_body[i + n] == b_body[j + n]:
                n += 1
            if n > best[2]:
                best = (i, j, n)
    return best if best[2] >= MIN_EXTRACT else None


def _extract_name(net, stmts) -> str:
    calls = [s.name for s in stmts if isinstance(s, Call)]
    if calls:
        base = calls[0] + "Then" + calls[-1][0].upper() + calls[-1][1:] if len(calls) > 1 else calls[0] + "Block"
    else:
        base = "routine"
    name, k = base, 2
    while name in net:
        name, k = f"{base}{k}", k + 1
    return name


def _case_d(net, a: str, b: str):
    pa, pb = net.program(a), net.program(b)
    if a == b:
        return None
    found = _common_block(pa.body, pb.body)
    if found is None:
        return None
    i, j, n = found
    block = pa.body[i:i + n]
    if any(n.program.body == block for n in net.nodes.values()):
        return None  # already the whole of some skill: that is case B
    if not (_block_is_closed(block, pa.body[i + n:], pa.param_names)
            and _block_is_closed(block, pb.body[j + n:], pb.param_names)):
        return None
    name = _extract_name(net, block)
    try:
        sub = check_program(SkillProgram(name, (), (), (), block))
    except WellFormednessError:
        return None
    call = Call(name, ())
    script = [AddSkill(sub),
              SetProgram(a, dataclasses.replace(pa, body=pa.body[:i] + (call,) + pa.body[i + n:])),
              SetProgram(b, dataclasses.replace(pb, body=pb.body[:j] + (call,) + pb.body[j + n:]))]
    return _proposal(net, "D-extract", [a, b], script,
                     f"{n} shared statements of {a} and {b} moved into {name}")


def anti_unify(a, b, table: dict):
    """Template of two same-shaped trees; differing leaves become parameters.

    ``table`` maps (leaf_a, leaf_b) to the parameter name standing for the pair.
    Returns None when the shapes differ.
    """
    if not _is_tree(a):
        return a if a == b else None
    if isinstance(a, _LEAVES) or isinstance(b, _LEAVES):
        if a == b and not isinstance(a, Var):
            return a
        if not (isinstance(a, _LEAVES) and isinstance(b, _LEAVES)):
            return None
        key = (a, b)
        if key not in table:
            table[key] = f"_t{len(table)}"
        return Var(table[key])
    if not _same_shape(a, b):
        return None
    parts = [anti_unify(x, y, table) for x, y in zip(_children(a), _children(b))]
    if any(p is None for p in parts):
        return None
    if isinstance(a, tuple):
        return tuple(parts)
    return type(a)(*parts)


def _camel(name: str) -> list:
    return re.findall(r"[A-Z]?[a-z0-9]+|[A-Z]+(?![a-z])", name) or [name]


def template_name(a: str, b: str, net) -> str:
    ta, tb = _camel(a), _camel(b)
    pre = 0
    while pre < min(len(ta), len(tb)) and ta[pre] == tb[pre]:
        pre += 1
    suf = 0
    while suf < min(len(ta), len(tb)) - pre and ta[-1 - suf] == tb[-1 - suf]:
        suf += 1
    words = ta[:pre] + (ta[len(ta) - suf:] if suf else [])
    base = "".join(w if i == 0 else w[0].upper() + w[1:] for i, w in enumerate(words)) or a + "Family"
    if base[0].isupper():
        base = base[0].lower() + base[1:]
    name, k = base, 2
    while name in net or name in (a, b):
        name, k = f"{base}{k}", k + 1
    return name


def _leaf_kind(leaf, program) -> str:
    if isinstance(leaf, Num):
        return "int"
    if isinstance(leaf, Var):
        for prm in program.params:
            if prm.name == leaf.name:
                return prm.kind
        return "int"
    return "item"


def _leaf_default(leaf, program):
    if isinstance(leaf, Num):
        return leaf.value
    if isinstance(leaf, Kind):
        return leaf.name
    for prm in program.params:
        if prm.name == leaf.name:
            return prm.default
    return None


def _case_c(net, a: str, b: str):
    pa, pb = net.program(a), net.program(b)
    if a == b or _is_wrapper(pa) or _is_wrapper(pb) or len(pa.body) != len(pb.body):
        return None
    table = {}
    tpl = anti_unify((pa.pre, pa.post, pa.body), (pb.pre, pb.post, pb.body), table)
    if tpl is None or not table:
        return None
    if len(table) > MAX_TEMPLATE_PARAMS:
        return None
    # every parameter of either skill must be expressible through the template's parameters
    pairs = sorted(table.items(), key=lambda kv: int(kv[1][2:]))
    if any(isinstance(x, Var) and x.name not in pa.param_names for (x, _), _ in pairs):
        return None
    if any(isinstance(y, Var) and y.name not in pb.param_names for (_, y), _ in pairs):
        return None
    if all(isinstance(x, Var) and isinstance(y, Var) for (x, y), _ in pairs):
        return None  # identical up to renaming: that is case E
    names, used = {}, Counter()
    params = []
    for (x, y), tmp in pairs:
        kind = _leaf_kind(x, pa)
        if kind != _leaf_kind(y, pb):
            return None
        if isinstance(x, Var) and isinstance(y, Var) and x.name == y.name:
            base = x.name
        else:
            base = {"int": "amount", "item": "type", "station": "where"}[kind]
        used[base] += 1
        nm = base if used[base] == 1 else f"{base}{used[base]}"
        names[tmp] = nm
        params.append(Param(nm, kind, _leaf_default(x, pa)))
    env = {tmp: Var(nm) for tmp, nm in names.items()}
    pre, post, body = substitute(tpl, env)
    name = template_name(a, b, net)
    try:
        general = check_program(SkillProgram(name, tuple(params), pre, post, body))
    except WellFormednessError:
        # kind literals may be stations rather than items
        try:
            params = [dataclasses.replace(p, kind="station") if p.kind == "item" else p for p in params]
            general = check_program(SkillProgram(name, tuple(params), pre, post, body))
        except WellFormednessError:
            return None
    wa = _wrapper(pa, name, [x for (x, _), _ in pairs])
    wb = _wrapper(pb, name, [y for (_, y), _ in pairs])
    script = [AddSkill(general), SetProgram(a, wa), SetAlias(a, name), SetProgram(b, wb), SetAlias(b, name)]
    return _proposal(net, "C-sibling", [a, b, name], script,
                     f"{a} and {b} abstracted into {name}")


def detect_cases(s_t: str, candidates, net, composites=None) -> list:
    """Refactor proposals among ``s_t`` and its candidates, most conservative first.

    ``composites`` optionally names the skills synthesized from plans. When
    given, cases B and D rewrite only those, and B substitutes calls to
    library skills, never to another task's composite.
    """
    pool = sorted({s_t} | set(candidates))
    pool = [n for n in pool if n in net and net.node(n).alias_of is None]
    found = []
    for i, a in enumerate(pool):
        for b in pool[i + 1:]:
            cands = [_case_e(net, a, b), _case_c(net, a, b)]
            if composites is None or (a in composites and b in composites):
                cands.append(_case_d(net, a, b))
            found += [p for p in cands if p is not None]
            for x, y in ((a, b), (b, a)):
                cands = [_case_a(net, x, y)]
                if composites is None or (x in composites and y not in composites):
                    cands.append(_case_b(net, x, y))
                found += [p for p in cands if p is not None]
    uniq, seen = [], set()
    for p in sorted(found, key=lambda p: (PRIORITY[p.case], p.involved, p.note)):
        key = (p.case, tuple(p.involved))
        if key not in seen:
            seen.add(key)
            uniq.append(p)
    return uniq


# -- application and validation ------------------------------------------------------------

def apply_refactor(net, p: RefactorProposal):
    """Apply a proposal in place. Returns ``(net, journal)`` of inverse steps, newest first."""
    if net.generation != p.generation:
        raise StaleProposal(f"proposal built at generation {p.generation}, network is at {net.generation}")
    journal = []
    try:
        for s in p.script:
            journal.insert(0, apply_step(net, s))
    except Exception:
        for inv in journal:
            apply_step(net, inv)
        raise
    return net, journal


def revert(net, journal, snapshot=None) -> str:
    """Undo a refactor; falls back to the snapshot if the inverse script misbehaves."""
    gen = net.generation
    try:
        for inv in journal:
            apply_step(net, inv)
        for node in net.nodes.values():
            check_program(node.program)
            net._check_callees(node.program)
        if snapshot is not None and _structure(net.nodes) != _structure(snapshot.nodes):
            raise NetworkError("inverse script did not restore the network")
        how = "inverse"
    except Exception:
        if snapshot is None:
            raise
        net.restore(snapshot)
        how = "snapshot"
    net.generation = max(net.generation, gen) + 1
    return how


def _structure(nodes) -> list:
    return sorted((k, print_skill(n.program), n.n_exec, n.n_succ, n.alias_of) for k, n in nodes.items())


@dataclass(frozen=True)
class WindowTask:
    """A completed episode that can be re-run from its recorded start."""
    task: object
    root: str
    bindings: tuple
    seed: int
    success: bool
    skills: frozenset = frozenset()
    inventory: tuple = ()


@dataclass
class ValidationRecord:
    case: str
    involved: list
    committed: bool
    pre_rate: float | None
    post_rate: float | None
    window: list = field(default_factory=list)
    reverted_by: str = ""

    def to_json(self) -> dict:
        return {"case": self.case, "involved": self.involved,
                "status": "committed" if self.committed else "reverted",
                "pre_rate": self.pre_rate, "post_rate": self.post_rate,
                "window": self.window, "reverted_by": self.reverted_by}


def replay_window_task(net, w: WindowTask, book=None):
    """Re-run ``w`` on a fresh world; returns ``(success, inventory)``."""
    from .executor import execute_skill
    from .world import check_goal, reset_world

    start = reset_world(w.seed, book)
    try:
        _, _, _, final = execute_skill(w.root, dict(w.bindings), start, net, book=book)
    except Exception:  # a broken rewrite counts as a failed task
        return False, ()
    return check_goal(w.task, final), tuple(sorted(final.inventory.items()))


def validate_and_commit(net, window, journal, snapshot, proposal=None, book=None):
    """Re-run the window against the rewritten network; revert on a > 20 % drop."""
    window = list(window)[-WINDOW_SIZE:]
    case = proposal.case if proposal else ""
    involved = list(proposal.involved) if proposal else []
    if not window:
        return net, ValidationRecord(case, involved, True, None, None)
    pre = sum(w.success for w in window) / len(window)
    post = sum(replay_window_task(net, w, book)[0] for w in window) / len(window)
    names = [getattr(w.task, "name", str(w.task)) for w in window]
    if post < DROP_RATIO * pre:
        how = revert(net, journal, snapshot)
        return net, ValidationRecord(case, involved, False, pre, post, names, how)
    return net, ValidationRecord(case, involved, True, pre, post, names)


def build_window(history, affected) -> list:
    """Last completed tasks whose recorded traces touch any affected skill."""
    affected = set(affected)
    out = [w for w in history if w.skills & affected]
    return out[-WINDOW_SIZE:]


def _stabilized(net, p: RefactorProposal) -> bool:
    # an exact duplicate can be merged whatever its history; otherwise skip
    # skills that have only ever failed (their behaviour is still being repaired)
    if p.case == "E-duplicate":
        return True
    return not any(net.node(n).n_exec > 0 and net.node(n).n_succ == 0
                   for n in p.involved if n in net)


def maybe_refactor(net, s_t, success_counter: int, history=(), book=None,
                   period: int = TRIGGER_PERIOD, composites=None):
    """Every ``period`` successes, apply and validate at most one proposal.

    ``s_t`` is the skill that succeeded, or several (e.g. every frame that
    succeeded in the episode); proposals around all of them compete on priority.
    Returns ``(net, record)``; ``record`` is None when nothing was attempted.
    """
    if success_counter <= 0 or success_counter % period:
        return net, None
    roots = [s_t] if isinstance(s_t, str) else list(s_t)
    proposals = []
    for name in dict.fromkeys(roots):
        if name not in net:
            continue
        name = net.canonical(name)
        proposals += detect_cases(name, candidate_set(name, net), net, composites)
    # only behaviour that has worked is reorganized
    proposals = [q for q in proposals if _stabilized(net, q)]
    if not proposals:
        return net, None
    p = min(proposals, key=lambda q: (PRIORITY[q.case], q.involved, q.note))
    window = build_window(history, p.affected)
    snap = net.snapshot()
    net, journal = apply_refactor(net, p)
    return validate_and_commit(net, window, journal, snap, p, book)
