"""
Continual learning on the curriculum
====================================

Run the nine-task curriculum with and without the pieces that protect
earlier skills, then compare retention and library size. Takes a few
seconds per run.
"""
import tempfile
from pathlib import Path

from skillnet.harness import RunConfig, read_log, run_curriculum

variants = {
    "full": {},
    "no_gating": {"no_gating": True},
    "no_optimizer": {"no_optimizer": True},
    "no_refactor": {"no_refactor": True},
    "always_new_skill": {"always_new_skill": True},
}

print(f"{'variant':<18}{'mastered':>9}{'srr':>8}{'library':>9}{'episodes':>10}")
for name, flags in variants.items():
    m = run_curriculum(RunConfig(seed=0, **flags))
    srr = m.srr[-1] if m.srr else float("nan")
    print(f"{name:<18}{m.n_mastered:>9}{srr:>8.3f}{m.library_size[-1]:>9}{len(m.episodes):>10}")

# the same run from a config file, with its logs on disk; replay one with
#   python -m skillnet replay --log OUT/metrics.jsonl
cfg = RunConfig.from_file(Path(__file__).with_name("config.json"))
out = Path(tempfile.mkdtemp(prefix="skillnet-"))
run_curriculum(cfg, out)
kinds = [r["type"] for r in read_log(out / "metrics.jsonl")]
print(out, {k: kinds.count(k) for k in sorted(set(kinds))})
