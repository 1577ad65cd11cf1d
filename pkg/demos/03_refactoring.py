"""
Keeping the library compact
===========================

Look for refactoring opportunities around a skill of the seed library,
apply the best one and check it against recently solved tasks.
"""
from skillnet.dsl import print_skill
from skillnet.network import load_library
from skillnet.refactor import apply_refactor, candidate_set, detect_cases
from skillnet.world import _data_text

net = load_library(_data_text("seed_skills.txt"))

for name in ("gatherLogs", "mineOakLogs"):
    cands = candidate_set(name, net)
    print(f"{name}: {len(cands)} candidates")
    for p in detect_cases(name, cands, net):
        print(f"   {p.case:<14} {p.involved}  {p.note}")

# two near-identical wood miners collapse into one parametric skill
(sibling,) = [p for p in detect_cases("mineOakLogs", candidate_set("mineOakLogs", net), net)
              if p.case == "C-sibling" and "mineBirchLogs" in p.involved]
size = net.library_size()
net, journal = apply_refactor(net, sibling)
print(f"library size {size} -> {net.library_size()}")
for name in sorted(set(net.nodes) - {"mineOakLogs", "mineBirchLogs"}):
    if name.startswith("mine") and "Logs" in name:
        print(print_skill(net.program(name)))
print(print_skill(net.program("mineOakLogs")))
