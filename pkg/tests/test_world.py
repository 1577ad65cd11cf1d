import pytest
from hypothesis import given, settings, strategies as st

from skillnet.dsl import apply_edits, check_program, parse_skill, print_skill
from skillnet.faults import FAULT_CLASSES, FaultError, inject_fault, load_faults, parse_faults
from skillnet.kinds import ITEMS, STATIONS
from skillnet.world import (
    FIELD_BASE, SLOTS, STACK, WorldError, check_goal, default_book, load_curriculum,
    parse_curriculum, reset_world, step_primitive,
)


def test_reset_is_empty():
    s = reset_world(0)
    assert s.inventory == {} and s.tool_tier == 0 and s.stations == frozenset()
    assert all(v >= FIELD_BASE for v in s.field.values())


def test_reset_deterministic():
    assert reset_world(7) == reset_world(7)


def test_fields_differ_across_seeds():
    assert reset_world(0).field != reset_world(1).field


def test_gather_log():
    s, fb, ok = step_primitive(reset_world(0), "gather", ("log", 1))
    assert ok and fb.ok and s.inventory == {"log": 1}


def test_pickaxe_without_planks():
    s0 = reset_world(0).copy(stations=frozenset({"crafting_table"}))
    s, fb, ok = step_primitive(s0, "craft", ("wooden_pickaxe", 1))
    assert not ok
    assert fb.message == "insufficient plank: need 3 have 0"
    assert (fb.item, fb.need, fb.have) == ("plank", 3, 0)


def test_iron_needs_tier():
    _, fb, ok = step_primitive(reset_world(0), "gather", ("iron_ore", 1))
    assert not ok and fb.kind == "tool_tier" and "tier 2" in fb.message


def test_capacity_overflow():
    s0 = reset_world(0).copy(field={"log": 10**6})
    _, fb, ok = step_primitive(s0, "gather", ("log", SLOTS * STACK + 1))
    assert not ok and fb.kind == "capacity"


def test_unknown_primitive():
    with pytest.raises(WorldError):
        step_primitive(reset_world(0), "teleport", ("log", 1))


# every primitive on every item, from a moderately stocked state
primitive_calls = st.one_of(
    st.tuples(st.sampled_from(["gather", "craft", "smelt", "explore"]),
              st.sampled_from(sorted(ITEMS)), st.integers(0, 12)),
    st.tuples(st.just("place"), st.sampled_from(sorted(STATIONS))),
)
inventories = st.dictionaries(st.sampled_from(sorted(ITEMS)), st.integers(1, 20), max_size=6)


@settings(max_examples=200)
@given(inventories, st.frozensets(st.sampled_from(sorted(STATIONS))), st.integers(0, 3), primitive_calls)
def test_step_purity_and_conservation(inv, stations, tier, call):
    s0 = reset_world(3).copy(inventory=dict(inv), stations=stations, tool_tier=tier)
    name, *args = call
    s1, fb, ok = step_primitive(s0, name, args)
    assert s1.tick == s0.tick + 1
    assert all(v >= 0 for v in s1.inventory.values())
    if not ok:
        assert s1.copy(tick=s0.tick) == s0
        assert fb.kind != "ok"
        return
    if name == "craft" or name == "smelt":
        recipe = default_book().recipes[args[0]]
        for item, k in recipe.inputs:
            assert s0.count(item) - s1.count(item) == k * args[1]
    # same input, same output
    assert step_primitive(s0, name, args) == (s1, fb, ok)


def test_curriculum_goal_on_completed_state():
    plan = [("gather", "log", 3), ("craft", "plank", 3), ("craft", "crafting_table", 1),
            ("place", "crafting_table"), ("craft", "stick", 2), ("craft", "wooden_pickaxe", 1),
            ("gather", "cobblestone", 11), ("craft", "stone_pickaxe", 1), ("craft", "furnace", 1),
            ("place", "furnace"), ("gather", "iron_ore", 3), ("gather", "coal", 3),
            ("smelt", "iron_ingot", 3), ("craft", "iron_pickaxe", 1)]
    s = reset_world(0)
    for name, *args in plan:
        s, fb, ok = step_primitive(s, name, args)
        assert ok, fb.message
    tasks = load_curriculum()
    assert check_goal(tasks[-1], s)
    assert not check_goal(tasks[-1], reset_world(0))


def test_check_goal_atoms():
    (t,) = parse_curriculum("task a budget=1 goal: inv(log) >= 1")
    assert check_goal(t, reset_world(0).copy(inventory={"log": 2}))
    (t,) = parse_curriculum("task b budget=1 goal: station(crafting_table)")
    assert not check_goal(t, reset_world(0))


def test_bundled_curriculum():
    tasks = load_curriculum()
    assert len(tasks) == 9
    assert tasks[0].name == "mine_wood"
    assert str(tasks[-1].goal[0].item.name) == "iron_pickaxe"


def test_empty_curriculum():
    with pytest.raises(WorldError):
        parse_curriculum("")


def test_curriculum_keeps_file_order():
    text = "task z budget=2 goal: inv(log) >= 1\ntask a budget=3 goal: inv(plank) >= 1\n"
    assert [t.name for t in parse_curriculum(text)] == ["z", "a"]


# -- faults --------------------------------------------------------------------

def test_corpus_covers_all_classes():
    faults = load_faults()
    by_class = {}
    for f in faults:
        by_class.setdefault(f.fault_class, []).append(f)
    assert set(by_class) == set(FAULT_CLASSES)
    assert all(len(v) >= 2 for v in by_class.values())


def test_injection_is_well_formed_and_invertible(net):
    for f in load_faults():
        original = net.program(f.skill)
        faulty, inverse = inject_fault(original, f)
        assert faulty != original
        check_program(faulty)
        assert parse_skill(print_skill(faulty)) == faulty
        assert apply_edits(faulty, inverse) == original


def test_plank_fault_forgets_sticks(net):
    (f,) = [f for f in load_faults() if f.id == "resource-planks"]
    faulty, _ = inject_fault(net.program("craftWoodenPickaxe"), f)
    assert "let planks = 3;" in print_skill(faulty)
    assert "let planks = 5;" in print_skill(net.program("craftWoodenPickaxe"))


def test_table_fault_drops_requirement(net):
    (f,) = [f for f in load_faults() if f.id == "precondition-table"]
    faulty, _ = inject_fault(net.program("craftWoodenPickaxe"), f)
    assert "station(crafting_table)" not in print_skill(faulty)


def test_wrong_call_substitutes_item(net):
    (f,) = [f for f in load_faults() if f.id == "wrong-call-logs"]
    faulty, _ = inject_fault(net.program("gatherLogs"), f)
    assert "prim gather(cobblestone, n);" in print_skill(faulty)


def test_bad_target():
    (f,) = parse_faults('[{"id": "x", "class": "wrong-call", "skill": "gatherLogs",'
                        ' "perturbations": [{"op": "remove", "target": "body.9"}]}]')
    with pytest.raises(FaultError):
        inject_fault(parse_skill("skill gatherLogs(n: int = 1) pre{} post{} { prim gather(log, n); }"), f)


def test_zero_craft_without_inputs():
    s = reset_world(0).copy(stations=frozenset({"crafting_table"}))
    after, _, ok = step_primitive(s, "craft", ("iron_pickaxe", 0))
    assert ok and after.inventory == {} and after.tool_tier == 0
