"""
Repairing a broken skill
========================

Inject a known fault into the seed library, then alternate execution and
optimization until the skill works again. Each round prints the edits that
were applied.
"""
import numpy as np

from skillnet.dsl import print_skill
from skillnet.executor import execute_skill
from skillnet.faults import inject_into, load_faults
from skillnet.network import load_library
from skillnet.operators import ReflectContext, make_operators
from skillnet.optimizer import MomentumBuffer, optimize
from skillnet.world import _data_text, reset_world

net = load_library(_data_text("seed_skills.txt"))
(fault,) = [f for f in load_faults() if f.id == "resource-planks"]
inject_into(net, [fault])
print(f"fault {fault.id} ({fault.fault_class}) in {fault.skill}:")
print(print_skill(net.program(fault.skill)))

# the pickaxe is crafted at a table, so start with one placed
start = reset_world(0).copy(stations=frozenset({"crafting_table"}))
oracle = make_operators("oracle")
buffers = MomentumBuffer()
rng = np.random.default_rng(0)

for episode in range(1, 6):
    fb, ok, trace, _ = execute_skill(fault.skill, {}, start, net)
    print(f"episode {episode}: {'success' if ok else 'failure'}")
    if ok:
        break
    for msg in fb.errors:
        print("   feedback:", msg["text"])
    res = optimize(trace.root, fb, trace, net, buffers, rng, oracle, ctx=ReflectContext(net, trace))
    for report in res.reports:
        print(f"   {report.skill}: gate={report.gate:.3f} applied={not report.skipped} {report.summary}")

print(print_skill(net.program(fault.skill)))
