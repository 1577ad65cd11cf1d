import itertools

import pytest
from hypothesis import given, settings, strategies as st

from skillnet.dsl import (
    BinOp, Call, If, InvAtLeast, InsertStatement, Kind, Num, Param, ParseError, PathError,
    Prim, Repeat, RemoveStatement, SetConstant, SkillProgram, StationPlaced, ToolTierAtLeast,
    Var, apply_edit, canonical, check_program, entails, get_node, holds, inverse_edit, parse_condition,
    parse_skill, parse_skills, print_skill,
)
from skillnet.kinds import ITEMS


def test_minimal_program():
    p = parse_skill("skill noop() pre{} post{} {}")
    assert p == SkillProgram(name="noop")


def test_mine_logs_template_parses():
    p = parse_skill(
        "skill mineLogs(type: item = log, num: int = 1) pre{} post{inv(type) >= num} {"
        " repeat (num) { prim gather(type, 1); } }")
    assert p.param_names == ("type", "num")
    (loop,) = p.body
    assert isinstance(loop, Repeat) and loop.count == Var("num")
    assert loop.body == (Prim("gather", (Var("type"), Num(1))),)


def test_unclosed_parameter_list():
    with pytest.raises(ParseError, match="parameter"):
        parse_skill("skill f( {")


def test_seed_corpus_round_trips(seed_text):
    for p in parse_skills(seed_text):
        assert parse_skill(print_skill(p)) == p


def test_equal_trees_print_identically():
    a = parse_skill("skill f(n: int = 2) pre{station(furnace), inv(log) >= n} post{} {prim gather(log,n);}")
    b = parse_skill("skill f(n: int = 2) pre{inv(log) >= n, station(furnace)} post{} {\n prim gather(log, n);\n}")
    assert a == b
    assert print_skill(a) == print_skill(b)


# -- edits ---------------------------------------------------------------------

LOOP = parse_skill("skill f() pre{} post{} { repeat (2) { prim gather(log, 1); } prim craft(plank, 1); }")


def _literals(node, path=()):
    if isinstance(node, (Num, Kind)):
        yield path, node
        return
    if isinstance(node, tuple):
        for i, x in enumerate(node):
            yield from _literals(x, path + (i,))
        return
    if hasattr(node, "__dataclass_fields__"):
        for f in node.__dataclass_fields__:
            yield from _literals(getattr(node, f), path + (f,))


def test_set_constant_touches_one_literal():
    path = ("body", 0, "count")
    out = apply_edit(LOOP, SetConstant(path, 3))
    before, after = dict(_literals(LOOP)), dict(_literals(out))
    assert before.keys() == after.keys()
    assert [k for k in before if before[k] != after[k]] == [path]
    assert get_node(out, path) == Num(3)


def test_insert_ensure_call_is_one_insertion():
    p = parse_skill("skill g() pre{} post{} { call craftPlanks(4); prim craft(wooden_pickaxe, 1); call x(); }")
    ensure = Call("setupTable", ())
    out = apply_edit(p, InsertStatement(("body", 1), ensure))
    assert out.body == p.body[:1] + (ensure,) + p.body[1:]


def test_remove_missing_path():
    with pytest.raises(PathError):
        apply_edit(LOOP, RemoveStatement(("body", 5)))


def test_edit_leaves_original_untouched():
    snapshot = print_skill(LOOP)
    apply_edit(LOOP, SetConstant(("body", 0, "count"), 7))
    assert print_skill(LOOP) == snapshot


@given(st.integers(0, 50))
def test_set_constant_inverse(v):
    e = SetConstant(("body", 0, "count"), v)
    out = apply_edit(LOOP, e)
    assert apply_edit(out, inverse_edit(LOOP, e)) == LOOP


# -- entailment ----------------------------------------------------------------

def cond(text):
    return parse_condition(text)


@pytest.mark.parametrize("post, goal, want", [
    (["inv(plank) >= 4"], "inv(plank) >= 3", True),
    (["inv(plank) >= 2"], "inv(plank) >= 3", False),
    (["station(crafting_table)"], "inv(plank) >= 1", False),
    (["tooltier >= 2"], "tooltier >= 1", True),
    (["inv(stick) >= 9"], "inv(plank) >= 1", False),
])
def test_entails(post, goal, want):
    assert entails([cond(c) for c in post], cond(goal)) is want


class _State:
    def __init__(self, inv, stations, tier):
        self.inventory, self.stations, self.tool_tier = inv, stations, tier

    def count(self, item):
        return self.inventory.get(item, 0)


small_items = st.sampled_from(["log", "plank", "stick"])
atoms = st.one_of(
    st.builds(lambda i, n: InvAtLeast(Kind(i), Num(n)), small_items, st.integers(0, 4)),
    st.builds(lambda k: StationPlaced(Kind(k)), st.sampled_from(["crafting_table", "furnace"])),
    st.builds(ToolTierAtLeast, st.integers(0, 3)),
)


@settings(max_examples=60)
@given(st.lists(atoms, min_size=1, max_size=3), atoms)
def test_entailment_is_sound(post, goal):
    # enumerate every small state; any state meeting post must meet goal
    if not entails(post, goal):
        return
    for counts in itertools.product(range(5), repeat=3):
        inv = dict(zip(["log", "plank", "stick"], counts))
        for stations in ({"crafting_table"}, {"furnace"}, set(), {"crafting_table", "furnace"}):
            for tier in range(4):
                s = _State(inv, frozenset(stations), tier)
                if all(holds(a, {}, s) for a in post):
                    assert holds(goal, {}, s)


# -- round-trip over generated programs ------------------------------------------

exprs = st.recursive(
    st.one_of(st.integers(0, 20).map(Num), st.just(Var("n"))),
    lambda sub: st.builds(BinOp, st.sampled_from(["+", "-", "*", "/"]), sub, sub),
    max_leaves=5,
)
items = st.sampled_from(sorted(ITEMS))
leaf_stmts = st.one_of(
    st.builds(lambda i, e: Prim("gather", (Kind(i), e)), items, exprs),
    st.builds(lambda i, e: Prim("craft", (Kind(i), e)), items, exprs),
    st.builds(lambda e: Call("helper", (e,)), exprs),
)
stmts = st.recursive(
    leaf_stmts,
    lambda sub: st.one_of(
        st.builds(lambda e, b: Repeat(e, tuple(b)), exprs, st.lists(sub, max_size=3)),
        st.builds(lambda i, a, b: If(InvAtLeast(Kind(i), Num(1)), tuple(a), tuple(b)),
                  items, st.lists(sub, max_size=2), st.lists(sub, max_size=2)),
    ),
    max_leaves=6,
)


@settings(max_examples=80)
@given(st.lists(stmts, max_size=4), st.lists(st.builds(lambda i, n: InvAtLeast(Kind(i), Num(n)), items, st.integers(0, 9)), max_size=3, unique_by=lambda c: c.item))
def test_print_parse_round_trip(body, pre):
    p = canonical(SkillProgram("gen", (Param("n", "int", 1),), tuple(pre), (), tuple(body)))
    assert parse_skill(print_skill(p), check=False) == p


def test_checker_accepts_seed(net):
    for node in net.nodes.values():
        check_program(node.program)
