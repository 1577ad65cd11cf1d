"""
Writing a skill and running it
==============================

Skills are small programs with declared pre/postconditions. This script
parses one, runs it in a fresh world and walks the execution trace.
"""
from skillnet.dsl import parse_skill, print_skill
from skillnet.executor import execute_skill
from skillnet.network import load_library
from skillnet.world import reset_world

source = """
skill gatherLogs(n: int = 1) pre{} post{inv(log) >= n} { prim gather(log, n); }
skill craftPlanks(n: int = 4) pre{inv(log) >= (n + 3) / 4} post{inv(plank) >= n} {
  prim craft(plank, (n + 3) / 4);
}
skill planksFromScratch() pre{} post{inv(plank) >= 8} {
  call gatherLogs(2);
  call craftPlanks(8);
}
"""
net = load_library(source)
print(print_skill(net.program("planksFromScratch")))

# every episode starts from a seeded world; same seed, same world
state = reset_world(7)
print("field:", dict(sorted(state.field.items())))

feedback, ok, trace, final = execute_skill("planksFromScratch", {}, state, net)
print("goal reached:", ok, "inventory:", final.inventory)

# one trace entry per skill invocation, with the world before and after
for entry in trace.entries():
    print(f"  {entry.skill:<18} {entry.status:<8} {dict(entry.sigma_post.inventory)}")

# a too-greedy variant fails fast and says why
greedy = parse_skill("skill greedy() pre{} post{} { prim craft(plank, 3); }")
net.insert_skill(greedy)
feedback, ok, trace, _ = execute_skill("greedy", {}, reset_world(7), net)
print("greedy ok:", ok, "->", feedback.errors[0]["text"])
