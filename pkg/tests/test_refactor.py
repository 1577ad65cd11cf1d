import pytest
from hypothesis import given, settings, strategies as st

from skillnet.dsl import Call, count_nodes, parse_skill, print_skill
from skillnet.executor import execute_skill
from skillnet.network import load_library, value_of
from skillnet.refactor import (
    CASES, AddSkill, RefactorProposal, SetProgram, StaleProposal, WindowTask, apply_refactor,
    candidate_set, cosine, detect_cases, features, maybe_refactor, replay_window_task, revert,
    validate_and_commit,
)
from skillnet.world import Task, reset_world
from support import refactor_corpus, refactor_instance

MINE_LOGS = ("skill mineLogs(type: item = log, num: int = 1) pre{} post{inv(type) >= num} {"
             " repeat (num) { prim gather(type, 1); } }")
OAK = ("skill mineOakLogs(num: int = 1) pre{} post{inv(oak_log) >= num} {"
       " repeat (num) { prim gather(oak_log, 1); } }")
BIRCH = OAK.replace("Oak", "Birch").replace("oak_log", "birch_log")


def cases_of(net, name=None):
    names = [name] if name else sorted(net.nodes)
    out, seen = [], set()
    for n in names:
        for p in detect_cases(n, candidate_set(n, net), net):
            key = (p.case, tuple(p.involved))
            if key not in seen:
                seen.add(key)
                out.append(p)
    return out


# -- candidates ----------------------------------------------------------------

def test_isolated_pair():
    net = load_library(OAK + "\n" + MINE_LOGS)
    assert candidate_set("mineOakLogs", net) == {"mineLogs"}


def test_hub_neighbours():
    net = load_library("""
    skill c1() pre{} post{} { prim gather(log, 1); }
    skill c2() pre{} post{} { prim gather(log, 2); }
    skill hub() pre{} post{} { call c1(); call c2(); }
    skill p1() pre{} post{} { call hub(); }
    skill p2() pre{} post{} { call hub(); }
    skill p3() pre{} post{} { call hub(); }
    """)
    cands = candidate_set("hub", net)
    assert {"c1", "c2", "p1", "p2", "p3"} <= cands


def test_sibling_found_by_similarity(net):
    assert "mineBirchLogs" in candidate_set("mineOakLogs", net)
    f = features(net.program("mineOakLogs"))
    sib = cosine(f, features(net.program("mineBirchLogs")))
    others = [cosine(f, features(net.program(n))) for n in net.nodes
              if n not in ("mineOakLogs", "mineBirchLogs")]
    assert sib > max(others)


# -- detection -----------------------------------------------------------------

def test_case_a_specialization():
    net = load_library(OAK + "\n" + MINE_LOGS)
    (p,) = [p for p in cases_of(net) if p.case == "A-parametric"]
    assert p.involved == ["mineLogs", "mineOakLogs"]


def test_case_a_wrapper_is_a_single_call():
    net = load_library(OAK + "\n" + MINE_LOGS)
    (p,) = [p for p in cases_of(net) if p.case == "A-parametric"]
    apply_refactor(net, p)
    by_hand = parse_skill("skill mineOakLogs(num: int = 1) pre{} post{inv(oak_log) >= num} {"
                          " call mineLogs(oak_log, num); }")
    assert print_skill(net.program("mineOakLogs")) == print_skill(by_hand)


def test_case_b_inlined_block(net):
    net.insert_skill(parse_skill(
        "skill craftTableFromLogs() pre{inv(log) >= 1} post{inv(crafting_table) >= 1} {"
        " prim craft(plank, (4 + 3) / 4); prim craft(crafting_table, 1); }"))
    props = [p for p in cases_of(net, "craftTableFromLogs") if p.case == "B-subgraph"]
    assert any(p.involved == ["craftPlanks", "craftTableFromLogs"] for p in props)
    (p,) = [p for p in props if "craftPlanks" in p.involved]
    apply_refactor(net, p)
    assert net.program("craftTableFromLogs").body[0] == parse_skill(
        "skill x() pre{} post{} { call craftPlanks(4); }").body[0]


def test_case_c_synthesizes_template():
    net = load_library(OAK + "\n" + BIRCH)
    (p,) = [p for p in cases_of(net) if p.case == "C-sibling"]
    apply_refactor(net, p)
    general = net.program("mineLogs")
    assert general.param_names == ("type", "num")
    assert print_skill(general).startswith("skill mineLogs(type: item")
    assert net.program("mineOakLogs").body == (Call("mineLogs", parse_skill(
        "skill x(num: int = 1) pre{} post{} { call f(oak_log, num); }").body[0].args),)


def test_case_e_on_seed(net):
    assert any(p.case == "E-duplicate" and p.involved == ["collectWood", "gatherLogs"]
               for p in cases_of(net, "gatherLogs"))


def test_priority_order(net):
    ps = cases_of(net, "mineOakLogs")
    ranks = [CASES.index(p.case) for p in ps]
    order = {"E-duplicate": 0, "A-parametric": 1, "B-subgraph": 2, "D-extract": 3, "C-sibling": 4}
    assert [order[p.case] for p in ps] == sorted(order[p.case] for p in ps)
    assert ranks  # something was found


# -- application ---------------------------------------------------------------

def test_e_keeps_higher_value():
    net = load_library("""
    skill grab(n: int = 1) pre{} post{inv(log) >= n} { prim gather(log, n); }
    skill take(k: int = 1) pre{} post{inv(log) >= k} { prim gather(log, k); }
    skill user() pre{} post{} { call grab(2); }
    """)
    assert value_of(24, 12) == pytest.approx(0.3) and value_of(3, 1) == pytest.approx(-0.1)
    net.node("take").n_exec, net.node("take").n_succ = 24, 12
    net.node("grab").n_exec, net.node("grab").n_succ = 3, 1
    (p,) = [p for p in cases_of(net) if p.case == "E-duplicate"]
    apply_refactor(net, p)
    assert net.node("grab").alias_of == "take" and net.node("take").alias_of is None
    assert ("user", "take") in net.links and ("user", "grab") not in net.links
    assert (net.node("take").n_exec, net.node("take").n_succ) == (24, 12)


def test_a_wrapper_equivalent_on_20_worlds():
    original = load_library(OAK + "\n" + MINE_LOGS)
    net = original.copy()
    (p,) = [p for p in cases_of(net) if p.case == "A-parametric"]
    apply_refactor(net, p)
    for seed in range(20):
        for num in (1, 3):
            *_, a = execute_skill("mineOakLogs", {"num": num}, reset_world(seed), original)
            *_, b = execute_skill("mineOakLogs", {"num": num}, reset_world(seed), net)
            assert (a.inventory, a.field, a.stations, a.tool_tier) == (b.inventory, b.field, b.stations, b.tool_tier)


def test_d_extracts_shared_block():
    net = load_library("""
    skill one() pre{} post{} { prim gather(log, 2); prim craft(plank, 1); prim craft(stick, 1); prim gather(log, 1); }
    skill two() pre{} post{} { prim gather(birch_log, 1); prim gather(log, 2); prim craft(plank, 1); prim craft(stick, 1); }
    """)
    (p,) = [p for p in cases_of(net) if p.case == "D-extract"]
    apply_refactor(net, p)
    (new,) = set(net.nodes) - {"one", "two"}
    assert len(net.program(new).body) == 3
    assert net.parents(new) == {"one", "two"}


def test_stale_proposal(net):
    (p,) = [p for p in cases_of(net, "gatherLogs") if p.case == "E-duplicate"]
    net.record_outcome("craftTable", True)
    net.insert_skill(parse_skill("skill extra() pre{} post{} {}"))
    with pytest.raises(StaleProposal):
        apply_refactor(net, p)


# -- validation ----------------------------------------------------------------

WINDOW_LIB = """
skill good() pre{} post{inv(log) >= 1} { prim gather(log, 1); }
skill fine() pre{} post{inv(log) >= 2} { prim gather(log, 2); }
skill other() pre{} post{inv(oak_log) >= 1} { prim gather(oak_log, 1); }
"""


def _window(net, roots, flags):
    out = []
    for k, (root, ok) in enumerate(zip(roots, flags)):
        program = net.program(root)
        out.append(WindowTask(Task(f"t{k}", program.post, 1), root, (), k, ok))
    return out


def _breaking(net):
    """A fake refactor that makes ``other`` gather the wrong item."""
    bad = parse_skill("skill other() pre{} post{inv(oak_log) >= 1} { prim gather(birch_log, 1); }")
    return RefactorProposal("A-parametric", ["other"], [SetProgram("other", bad)], [], net.generation)


def test_drop_to_two_thirds_reverts():
    net = load_library(WINDOW_LIB)
    before = net.structure_bytes()
    window = _window(net, ["good", "fine", "other"], [True, True, True])
    snap = net.snapshot()
    net, journal = apply_refactor(net, _breaking(net))
    net, rec = validate_and_commit(net, window, journal, snap)
    assert (rec.pre_rate, rec.post_rate) == (1.0, pytest.approx(2 / 3))
    assert not rec.committed
    assert net.structure_bytes() == before


def test_no_drop_commits():
    net = load_library(WINDOW_LIB)
    window = _window(net, ["good", "fine", "good"], [True, True, True])
    snap = net.snapshot()
    net, journal = apply_refactor(net, _breaking(net))
    net, rec = validate_and_commit(net, window, journal, snap)
    assert rec.committed and (rec.pre_rate, rec.post_rate) == (1.0, 1.0)


def test_two_thirds_steady_commits():
    net = load_library(WINDOW_LIB)
    window = _window(net, ["good", "fine", "other"], [True, True, False])
    snap = net.snapshot()
    net, journal = apply_refactor(net, _breaking(net))
    net, rec = validate_and_commit(net, window, journal, snap)
    assert rec.committed and rec.pre_rate == rec.post_rate == pytest.approx(2 / 3)


def test_snapshot_fallback_when_inverse_is_bad():
    net = load_library(WINDOW_LIB)
    before = net.structure_bytes()
    snap = net.snapshot()
    net, _ = apply_refactor(net, _breaking(net))
    how = revert(net, [AddSkill(parse_skill("skill other() pre{} post{} {}"))], snap)
    assert how == "snapshot" and net.structure_bytes() == before


# -- trigger -------------------------------------------------------------------

@pytest.mark.parametrize("counter", [1, 2, 3, 4])
def test_off_period_noop(net, counter):
    g = net.generation
    _, rec = maybe_refactor(net, "gatherLogs", counter)
    assert rec is None and net.generation == g


def test_period_merges_duplicate(net):
    net, rec = maybe_refactor(net, "gatherLogs", 5)
    assert rec.case == "E-duplicate" and rec.committed
    assert {net.node("gatherLogs").alias_of, net.node("collectWood").alias_of} == {None, "gatherLogs"} or \
        {net.node("gatherLogs").alias_of, net.node("collectWood").alias_of} == {None, "collectWood"}


def test_period_without_cases():
    net = load_library("skill lone() pre{} post{inv(log) >= 1} { prim gather(log, 1); }")
    g = net.generation
    net, rec = maybe_refactor(net, "lone", 5)
    assert rec is None and net.generation == g


# -- properties over the seeded corpus -----------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(CASES))
def test_rollback_restores_serialization(seed, case):
    net, p, _ = refactor_instance(case, seed)
    before = net.structure_bytes()
    snap = net.snapshot()
    net, journal = apply_refactor(net, p)
    assert net.structure_bytes() != before
    assert revert(net, journal, snap) == "inverse"
    assert net.structure_bytes() == before


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(CASES))
def test_committed_refactors_preserve_window(seed, case):
    net, p, window = refactor_instance(case, seed)
    nodes_before = sum(count_nodes(n.program) for n in net.nodes.values())
    snap = net.snapshot()
    net, journal = apply_refactor(net, p)
    net, rec = validate_and_commit(net, window, journal, snap, p)
    assert rec.committed
    for w in window:
        assert replay_window_task(net, w) == (w.success, w.inventory)
    if case in ("A-parametric", "B-subgraph", "E-duplicate"):
        assert sum(count_nodes(n.program) for n in net.nodes.values()) <= nodes_before


def test_corpus_spans_all_cases():
    assert {case for case, _ in refactor_corpus(100)} == set(CASES)
