"""Curriculum runner: plan, synthesize, execute, optimize and refactor, task after task.

One run is a single thread of control. All randomness comes from streams
derived from the run seed, so a run is a pure function of its configuration.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .executor import (
    ExecutionError, calibrate_conditions, execute_skill, record_trace_outcomes,
    synthesize_composite,
)
from .faults import inject_into, load_faults
from .network import load_library
from .operators import ExcludingView, ReflectContext, ancestors, make_operators
from .optimizer import MomentumBuffer, optimize
from .planner import PlannerConfig, PlanningError, plan
from .refactor import WindowTask, maybe_refactor
from .world import _data_text, check_goal, default_book, load_curriculum, load_recipes, reset_world

log = logging.getLogger(__name__)

LOG_FORMAT = 1
# stream ids for seed-derived generators
_PLANNER, _GATE, _FAULTS, _WORLD = 1, 2, 3, 4


class ConfigError(ValueError):
    pass


class ReplayDivergence(Exception):
    def __init__(self, episode: int, message: str):
        super().__init__(f"episode {episode}: {message}")
        self.episode = episode


@dataclass
class RunConfig:
    seed: int = 0
    curriculum: str | None = None  # None: bundled curriculum
    recipes: str | None = None  # None: bundled recipe table
    operator: str = "oracle"  # oracle | http:URL
    no_optimizer: bool = False
    no_gating: bool = False
    no_refactor: bool = False
    always_new_skill: bool = False
    temperature: float = 0.5
    mastery_threshold: float = 0.8
    mastery_window: int = 5
    max_attempts: int | None = None  # None: each task's own budget
    faults: str | None = "bundled"  # bundled | none | path to a fault corpus
    refactor_period: int = 5
    budget: int = 512

    def __post_init__(self):
        if not 0 < self.mastery_threshold <= 1:
            raise ConfigError("mastery threshold must be in (0, 1]")
        if self.mastery_window < 1:
            raise ConfigError("mastery window must be positive")
        if not (self.operator == "oracle" or self.operator.startswith("http:")):
            raise ConfigError(f"operator must be 'oracle' or 'http:URL', got {self.operator!r}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.max_attempts is not None and self.max_attempts < 1:
            raise ConfigError("max_attempts must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Metrics:
    iterations: dict = field(default_factory=dict)  # task -> attempts to mastery (None if never)
    mastered: list = field(default_factory=list)
    episodes: list = field(default_factory=list)  # {episode, task, phase, success}
    library_size: list = field(default_factory=list)  # one entry per episode
    reevals: list = field(default_factory=list)  # per mastery: list of (task, success)
    srr: list = field(default_factory=list)
    gate_decisions: list = field(default_factory=list)
    refactors: list = field(default_factory=list)
    network_digest: str = ""

    @property
    def n_mastered(self) -> int:
        return len(self.mastered)

    def to_json(self) -> dict:
        return asdict(self)


def compute_srr(metrics) -> list:
    """Cumulative re-evaluation success rate after each mastery that re-evaluated something.

    Accepts a Metrics object or a list of groups of 0/1 outcomes.
    """
    groups = metrics.reevals if isinstance(metrics, Metrics) else metrics
    out, ok, total = [], 0, 0
    for group in groups:
        for item in group:
            ok += int(bool(item[1] if isinstance(item, (list, tuple)) else item))
            total += 1
        if total:
            out.append(ok / total)
    return out


def digest(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()[:16]


def _stream(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, k]))


def _world_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, _WORLD, episode]).generate_state(1)[0])


def _mastered(outcomes: list, cfg: RunConfig) -> bool:
    tail = outcomes[-cfg.mastery_window:]
    return len(tail) == cfg.mastery_window and sum(tail) / len(tail) >= cfg.mastery_threshold


def build_network(cfg: RunConfig):
    net = load_library(_data_text("seed_skills.txt"))
    if cfg.faults in (None, "none"):
        return net, []
    corpus = load_faults(None if cfg.faults == "bundled" else cfg.faults)
    chosen = [f for f in corpus if f.in_run]
    inject_into(net, chosen, _stream(cfg.seed, _FAULTS))
    return net, [f.id for f in chosen]


class Runner:
    """Holds the state of one curriculum run; ``forced`` replays recorded gate decisions."""

    def __init__(self, cfg: RunConfig, sink=None, forced: dict | None = None, check=None,
                 trace_sink=None):
        self.cfg = cfg
        self.book = load_recipes(cfg.recipes) if cfg.recipes else default_book()
        self.tasks = load_curriculum(cfg.curriculum)
        self.net, self.fault_ids = build_network(cfg)
        self.ops = make_operators(cfg.operator, book=self.book)
        self.buffers = MomentumBuffer()
        self.plan_rng = _stream(cfg.seed, _PLANNER)
        self.gate_rng = _stream(cfg.seed, _GATE)
        self.pcfg = PlannerConfig(temperature=cfg.temperature)
        self.metrics = Metrics()
        self.sink = sink
        self.trace_sink = trace_sink
        self.forced = forced or {}
        self.check = check
        self.episode = 0
        self.successes = 0
        self.history: list = []  # WindowTask records of completed training episodes
        self.composites: dict = {}  # task -> current composite
        self.versions: dict = {}
        self.synthesized: set = set()
        self.stale: set = set()  # tasks to replan (no_optimizer)
        self.reflections: list = []

    # -- logging -------------------------------------------------------------------------
    def emit(self, rec: dict):
        if self.sink is not None:
            self.sink.write(json.dumps(rec, sort_keys=True) + "\n")
            self.sink.flush()

    # -- composites ----------------------------------------------------------------------
    def _composite_name(self, task) -> str:
        base = f"solve_{task.name}"
        if not self.cfg.always_new_skill and base not in self.net:
            return base
        k = self.versions.get(task.name, 1)
        name = base if k == 1 and base not in self.net else None
        while name is None or name in self.net:
            k += 1
            name = f"{base}_v{k}"
        self.versions[task.name] = k
        return name

    def composite_for(self, task, state):
        """Existing composite for ``task``, or a freshly planned one."""
        current = self.composites.get(task.name)
        stale = task.name in self.stale
        if current is not None and current in self.net and not self.cfg.always_new_skill and not stale:
            return current, []
        if stale and current in self.net:
            # without repair the only recourse is a fresh plan under the same name
            self.stale.discard(task.name)
            view = ExcludingView(self.net, ancestors(self.net, current))
            p = plan(task, view, state, self.ops, self.pcfg, self.plan_rng)
            synthesize_composite(p, {"name": current, "goal": list(task.goal)}, self.ops, self.net)
            return current, [s.name for s in p.new_skills]
        p = plan(task, self.net, state, self.ops, self.pcfg, self.plan_rng)
        name = self._composite_name(task)
        program = synthesize_composite(p, {"name": name, "goal": list(task.goal)}, self.ops, self.net)
        if program is None:
            return None, [s.name for s in p.new_skills]
        self.composites[task.name] = name
        self.synthesized.add(name)
        return name, [s.name for s in p.new_skills] + [name]

    # -- episodes ------------------------------------------------------------------------
    def run_episode(self, task, attempt: int, phase: str) -> bool:
        self.episode += 1
        ep = self.episode
        wseed = _world_seed(self.cfg.seed, ep)
        state = reset_world(wseed, self.book)
        rec = {"type": "episode", "episode": ep, "task": task.name, "attempt": attempt,
               "phase": phase, "world_seed": wseed, "composite": None, "success": False,
               "new_skills": [], "gate": [], "refactor": None, "error": None, "calibrated": []}
        trace = None
        try:
            if phase == "reeval":
                root = self.composites.get(task.name)
                new = []
            else:
                root, new = self.composite_for(task, state)
            rec["composite"], rec["new_skills"] = root, new
            if root is None:
                success, final = check_goal(task, state), state
            else:
                fb, _, trace, final = execute_skill(root, {}, state, self.net, self.cfg.budget,
                                                    self.book, ep, task.name)
                success = check_goal(task, final)
                record_trace_outcomes(self.net, trace)
                if self.trace_sink is not None:
                    self.trace_sink.write(json.dumps(trace.to_json(), sort_keys=True) + "\n")
        except (PlanningError, ExecutionError) as exc:
            rec["error"] = str(exc)
            success, final = False, state
        rec["success"] = success
        rec["final_digest"] = final.digest()
        if phase == "train" and trace is not None:
            if success:
                self._after_success(task, trace, rec, wseed, final)
            elif not self.cfg.no_optimizer:
                self._optimize(trace, fb, rec, ep)
            else:
                self.stale.add(task.name)
        self.metrics.episodes.append({"episode": ep, "task": task.name, "phase": phase, "success": success})
        self.metrics.library_size.append(self.net.library_size())
        rec["library_size"] = self.net.library_size()
        rec["network_digest"] = digest(self.net.structure_bytes())
        self.emit(rec)
        if self.check is not None:
            self.check(rec)
        return success

    def _optimize(self, trace, fb, rec, ep):
        ctx = ReflectContext(self.net, trace, self.book, self.cfg.budget, history=self.reflections[-5:])
        forced = self.forced.get(ep)
        res = optimize(trace.root, fb, trace, self.net, self.buffers, self.gate_rng, self.ops,
                       gating=not self.cfg.no_gating, ctx=ctx, forced=forced)
        for r in res.reports:
            if not res.G[r.skill].issues:
                continue
            d = {"skill": r.skill, "value": round(r.value, 9), "gate": round(r.gate, 9),
                 "u": round(r.u, 9), "applied": not r.skipped, "summary": r.summary}
            rec["gate"].append(d)
            self.metrics.gate_decisions.append({"episode": ep, **d})
            self.reflections.append({"skill": r.skill, "summary": r.summary})

    def _after_success(self, task, trace, rec, wseed, final):
        self.successes += 1
        skills = []
        for e in trace.root.walk():
            if e.ok and e.skill in self.net and e.skill not in skills:
                skills.append(e.skill)
        for name in sorted(skills):
            if calibrate_conditions(self.net, name, trace):
                rec["calibrated"].append(name)
        root = trace.root.skill
        self.history.append(WindowTask(task, root, (), wseed, True, frozenset(skills),
                                       tuple(sorted(final.inventory.items()))))
        if self.cfg.no_refactor:
            return
        self.net, record = maybe_refactor(self.net, skills, self.successes, self.history,
                                          self.book, self.cfg.refactor_period, self.synthesized)
        if record is not None:
            rec["refactor"] = record.to_json()
            self.metrics.refactors.append({"episode": rec["episode"], **record.to_json()})

    # -- the curriculum ------------------------------------------------------------------
    def run(self) -> Metrics:
        self.emit({"type": "header", "format": LOG_FORMAT, "config": self.cfg.to_dict(),
                   "faults": self.fault_ids,
                   "network_digest": digest(self.net.structure_bytes())})
        for task in self.tasks:
            budget = self.cfg.max_attempts or task.iteration_budget
            outcomes = []
            for attempt in range(1, budget + 1):
                outcomes.append(self.run_episode(task, attempt, "train"))
                if _mastered(outcomes, self.cfg):
                    break
            if _mastered(outcomes, self.cfg):
                self.metrics.iterations[task.name] = len(outcomes)
                earlier = list(self.metrics.mastered)
                self.metrics.mastered.append(task.name)
                self.emit({"type": "mastery", "task": task.name, "iterations": len(outcomes)})
                group = [(t.name, self.run_episode(t, 0, "reeval"))
                         for t in self.tasks if t.name in earlier]
                self.metrics.reevals.append(group)
                self.metrics.srr = compute_srr(self.metrics)
                if group:
                    self.emit({"type": "srr", "after": task.name, "outcomes": group,
                               "srr": self.metrics.srr[-1]})
            else:
                self.metrics.iterations[task.name] = None
                self.emit({"type": "unmastered", "task": task.name, "attempts": len(outcomes)})
        self.metrics.network_digest = digest(self.net.structure_bytes())
        self.emit({"type": "summary", "mastered": self.metrics.mastered,
                   "iterations": self.metrics.iterations, "srr": self.metrics.srr,
                   "library_size": self.net.library_size(),
                   "network_digest": self.metrics.network_digest})
        return self.metrics


def run_curriculum(cfg: RunConfig, out_dir=None) -> Metrics:
    """Run the curriculum; with ``out_dir`` write the logs, summary CSV and final network."""
    if out_dir is None:
        return Runner(cfg).run()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as sink, \
            open(out / "traces.jsonl", "w", encoding="utf-8") as traces:
        runner = Runner(cfg, sink, trace_sink=traces)
        metrics = runner.run()
    (out / "summary.csv").write_text(summary_csv(metrics), encoding="utf-8")
    (out / "network.json").write_bytes(runner.net.serialize())
    return metrics


def summary_csv(metrics: Metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "task", "phase", "success", "library_size"])
    for e, size in zip(metrics.episodes, metrics.library_size):
        w.writerow([e["episode"], e["task"], e["phase"], int(e["success"]), size])
    return buf.getvalue()


# -- reading logs back ---------------------------------------------------------------------

def read_log(path) -> list:
    recs = []
    text = Path(path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            recs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ReplayDivergence(0, f"corrupt log line {i}: {exc}") from exc
    if not recs or recs[0].get("type") != "header":
        raise ReplayDivergence(0, "log has no header")
    if recs[0].get("format") != LOG_FORMAT:
        raise ReplayDivergence(0, f"unsupported log format {recs[0].get('format')!r}")
    return recs


def srr_from_log(path) -> list:
    groups = [[o[1] for o in r["outcomes"]] for r in read_log(path) if r.get("type") == "srr"]
    return compute_srr(groups)


def replay(path) -> Metrics:
    """Re-run a logged run with its recorded gate decisions; check every episode boundary."""
    recs = read_log(path)
    header = recs[0]
    episodes = {r["episode"]: r for r in recs if r.get("type") == "episode"}
    if not any(r.get("type") == "summary" for r in recs):
        raise ReplayDivergence(max(episodes, default=0), "log is truncated (no summary record)")
    forced = {ep: {g["skill"]: bool(g["applied"]) for g in r["gate"]} for ep, r in episodes.items()}
    keys = ("task", "phase", "world_seed", "composite", "success", "final_digest", "network_digest")

    def check(rec):
        want = episodes.get(rec["episode"])
        if want is None:
            raise ReplayDivergence(rec["episode"], "episode missing from the log")
        for k in keys:
            if rec.get(k) != want.get(k):
                raise ReplayDivergence(rec["episode"], f"{k}: logged {want.get(k)!r}, replayed {rec.get(k)!r}")
        got = [(g["skill"], g["applied"]) for g in rec["gate"]]
        exp = [(g["skill"], g["applied"]) for g in want["gate"]]
        if got != exp:
            raise ReplayDivergence(rec["episode"], f"gate decisions differ: logged {exp}, replayed {got}")

    cfg = RunConfig.from_dict(header["config"])
    runner = Runner(cfg, forced=forced, check=check)
    if digest(runner.net.structure_bytes()) != header.get("network_digest"):
        raise ReplayDivergence(0, "initial network differs")
    metrics = runner.run()
    if runner.episode != len(episodes):
        raise ReplayDivergence(runner.episode, f"replayed {runner.episode} episodes, log has {len(episodes)}")
    return metrics
