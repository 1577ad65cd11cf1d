"""Shared builders for fault fixtures and curriculum ablations."""
import numpy as np

from skillnet.dsl import ground
from skillnet.dsl.logic import default_bindings
from skillnet.executor import composite_from_plan, execute_skill, record_trace_outcomes
from skillnet.faults import inject_fault
from skillnet.network import load_library
from skillnet.operators import ReflectContext, make_operators
from skillnet.optimizer import MomentumBuffer, optimize
from skillnet.planner import PlannerConfig, PlanStep, backward_chain
from skillnet.world import _data_text, reset_world

ORACLE = make_operators("oracle")
# acceptance outcomes, printed in the terminal summary
RESULTS = []


def fault_fixture(fault, world_seed=0):
    """Seed library with ``fault`` injected, plus a root skill that sets up and calls it."""
    net = load_library(_data_text("seed_skills.txt"))
    faulty, _ = inject_fault(net.program(fault.skill), fault, np.random.default_rng(0))
    net.replace_program(fault.skill, faulty)
    s0 = reset_world(world_seed)
    b = default_bindings(faulty)
    # argmax planning so the fixture is the same every time
    p = backward_chain([ground(c, b) for c in faulty.pre], net, s0, PlannerConfig(temperature=1e-12))
    p.steps.append(PlanStep(fault.skill, tuple(sorted(b.items()))))
    net.insert_skill(composite_from_plan("fixture", p, [ground(c, b) for c in faulty.post], net))
    return net, s0


def repair_loop(net, s0, episodes=5, seed=0, gating=True):
    """execute -> optimize until success; returns the success flag of each episode."""
    buffers, rng = MomentumBuffer(), np.random.default_rng(seed)
    flags = []
    for _ in range(episodes):
        fb, ok, trace, _ = execute_skill("fixture", {}, s0, net)
        record_trace_outcomes(net, trace)
        flags.append(ok)
        if ok:
            break
        optimize(trace.root, fb, trace, net, buffers, rng, ORACLE, gating=gating,
                 ctx=ReflectContext(net, trace))
    return flags


# -- refactor corpus -----------------------------------------------------------

WOODS = {"log": "Plain", "oak_log": "Oak", "birch_log": "Birch"}


def _case_library(case, rng):
    """Source text of a small library exhibiting ``case``, and the runnable roots."""
    i = lambda lo, hi: int(rng.integers(lo, hi + 1))  # noqa: E731
    a, b = rng.choice(sorted(WOODS), size=2, replace=False)
    if case == "E-duplicate":
        d = i(1, 4)
        src = (f"skill grab(n: int = {d}) pre{{}} post{{inv({a}) >= n}} {{ prim gather({a}, n); }}\n"
               f"skill take(amount: int = {d}) pre{{}} post{{inv({a}) >= amount}} {{ prim gather({a}, amount); }}")
        roots = [("grab", (("n", i(1, 6)),)), ("take", (("amount", i(1, 6)),)), ("take", ())]
    elif case == "A-parametric":
        k = i(1, 6)
        src = ("skill fetch(type: item = log, num: int = 1) pre{} post{inv(type) >= num} {"
               " repeat (num) { prim gather(type, 1); } }\n"
               f"skill fetchSome() pre{{}} post{{inv({a}) >= {k}}} {{ repeat ({k}) {{ prim gather({a}, 1); }} }}")
        roots = [("fetchSome", ()), ("fetch", (("num", i(1, 5)), ("type", str(b)))), ("fetchSome", ())]
    elif case == "C-sibling":
        src = "\n".join(
            f"skill collect{WOODS[w]}Wood(num: int = {i(1, 4)}) pre{{}} post{{inv({w}) >= num}} {{"
            f" repeat (num) {{ prim gather({w}, 1); }} }}" for w in (a, b))
        roots = [(f"collect{WOODS[a]}Wood", ()), (f"collect{WOODS[b]}Wood", (("num", i(1, 5)),)),
                 (f"collect{WOODS[a]}Wood", (("num", i(1, 5)),))]
    elif case == "B-subgraph":
        m = i(1, 3)
        src = ("skill planks(n: int = 1) pre{inv(log) >= n} post{inv(plank) >= n} { prim craft(plank, n); }\n"
               f"skill kit() pre{{}} post{{inv(plank) >= {4 * m}}} {{ prim gather(log, {m + i(0, 2)});"
               f" prim craft(plank, {m}); prim gather({a}, {i(1, 3)}); }}")
        roots = [("kit", ()), ("kit", ()), ("kit", ())]
    elif case == "D-extract":
        p = i(1, 4)
        q = i(1, p)
        src = (f"skill kitA() pre{{}} post{{inv(plank) >= 4}} {{ prim gather(log, {p}); prim craft(plank, {q});"
               f" prim gather({a}, {i(1, 3)}); }}\n"
               f"skill kitB() pre{{}} post{{inv(plank) >= 4}} {{ prim gather({b}, {i(1, 3)});"
               f" prim gather(log, {p}); prim craft(plank, {q}); }}")
        roots = [("kitA", ()), ("kitB", ()), ("kitA", ())]
    else:
        raise ValueError(case)
    return src, roots


def _goal_of(net, root, bindings):
    from skillnet.dsl.logic import default_bindings as defaults
    from skillnet.world import Task

    program = net.program(root)
    b = defaults(program)
    b.update(dict(bindings))
    return Task(f"run_{root}", tuple(ground(c, b) for c in program.post), 1)


def refactor_instance(case, seed):
    """``(net, proposal, window)`` for one seeded instance of ``case``.

    The window holds three completed tasks recorded against the original network.
    """
    from skillnet.refactor import WindowTask, candidate_set, detect_cases, replay_window_task

    rng = np.random.default_rng(seed)
    src, roots = _case_library(case, rng)
    net = load_library(src)
    window = []
    for root, bindings in roots:
        w = WindowTask(_goal_of(net, root, bindings), root, tuple(bindings), int(rng.integers(0, 10**6)), True,
                       frozenset(net.nodes))
        ok, inv = replay_window_task(net, w)
        window.append(WindowTask(w.task, root, w.bindings, w.seed, ok, w.skills, inv))
    props = []
    for name in sorted(net.nodes):
        props += [p for p in detect_cases(name, candidate_set(name, net), net) if p.case == case]
    if not props:
        raise AssertionError(f"no {case} proposal for seed {seed}:\n{src}")
    return net, props[0], window


def refactor_corpus(n=100, seed=0):
    """``n`` instances spread evenly over the five cases."""
    from skillnet.refactor import CASES

    return [(CASES[k % len(CASES)], seed * 1000 + k) for k in range(n)]
