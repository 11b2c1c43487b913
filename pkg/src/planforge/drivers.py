"""Planner orchestration: declarative adapters, a reference planner, batching.

Adapters describe external planners as command templates; every invocation is
a subprocess with a hard timeout, and wall time is measured here so that all
planners are timed the same way.  Exit status mapping: a recognized no-plan
message maps to ``no_solution``, a nonzero exit, spawn failure or output the
dialect cannot normalize maps to ``crashed``, and anything that normalizes
and parses maps to ``solved``.
"""

from __future__ import annotations

import json
import re
import subprocess
import sys
import tempfile
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from planforge import assets_dir
from planforge.pddl.ground import (
    apply_effects,
    first_failure,
    goal_satisfied,
    iter_applicable_candidates,
)
from planforge.pddl.model import Domain, Problem
from planforge.pddl.parser import parse_problem
from planforge.plans import PlanStep, parse_plan, render_plan, validate

DIALECTS = ("val_native", "probe")
OUTPUT_MODES = ("file", "stdout")

_NO_PLAN_MARKERS = ("no plan", "no solution", "unsolvable", "goal is unreachable")

_PROBE_STEP_RE = re.compile(
    r"^(?:\d+(?:\.\d+)?\s*:\s*)?(\([^()]+\))\s*(?:\[\d+(?:\.\d+)?\])?$"
)
_PROBE_NOISE_PREFIXES = (
    "plan found",
    "solution found",
    "plan cost",
    "total time",
    "search time",
    "planning time",
    "expanded",
    "evaluated",
    "generated",
    "dead ends",
    "nodes",
    "makespan",
    "steps",
    "time",
)


class AdapterError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


class ExpansionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerAdapter:
    name: str
    executable: str
    args: tuple[str, ...]
    output: str = "file"
    dialect: str = "val_native"
    timeout: float = 60.0


@dataclass(frozen=True)
class SolveResult:
    status: str  # solved | no_solution | timeout | crashed
    plan_text: str | None
    raw_output: str
    wall_time: float
    detail: str = ""


def load_adapters(path: str | Path | None = None) -> dict[str, PlannerAdapter]:
    """Read an adapter registry; defaults to the bundled one."""
    path = Path(path) if path else assets_dir() / "adapters.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise AdapterError(f"cannot read adapter registry {path}: {err}") from err
    entries = data.get("adapters")
    if not isinstance(entries, list):
        raise AdapterError(f"{path}: expected a top-level 'adapters' array")
    out: dict[str, PlannerAdapter] = {}
    for i, raw in enumerate(entries):
        where = f"{path}: adapters[{i}]"
        for key in ("name", "executable", "args"):
            if key not in raw:
                raise AdapterError(f"{where}: missing '{key}'")
        adapter = PlannerAdapter(
            name=raw["name"],
            executable=raw["executable"],
            args=tuple(raw["args"]),
            output=raw.get("output", "file"),
            dialect=raw.get("dialect", "val_native"),
            timeout=float(raw.get("timeout", 60.0)),
        )
        if adapter.output not in OUTPUT_MODES:
            raise AdapterError(f"{where}: unknown output mode '{adapter.output}'")
        if adapter.dialect not in DIALECTS:
            raise AdapterError(f"{where}: unknown dialect '{adapter.dialect}'")
        if adapter.name in out:
            raise AdapterError(f"{where}: duplicate adapter '{adapter.name}'")
        if adapter.timeout <= 0:
            raise AdapterError(f"{where}: timeout must be positive")
        out[adapter.name] = adapter
    return out


def normalize_output(text: str, dialect: str) -> str:
    """Bring planner output into one-action-per-line form.

    val_native output is already in that form and passes through byte for
    byte.  The probe dialect strips numeric step prefixes and trailing cost
    annotations, drops known progress/noise lines, and fails loudly on
    anything else so silent plan corruption is impossible.
    """
    if dialect == "val_native":
        return text
    if dialect != "probe":
        raise NormalizationError(f"unknown dialect '{dialect}'")
    steps: list[str] = []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        m = _PROBE_STEP_RE.match(line)
        if m:
            steps.append(m.group(1).lower())
            continue
        lowered = line.lower()
        if any(lowered.startswith(prefix) for prefix in _PROBE_NOISE_PREFIXES):
            continue
        raise NormalizationError(f"unrecognized planner output line: '{raw.strip()}'")
    return "".join(s + "\n" for s in steps)


def _fill(template: str, mapping: dict[str, str]) -> str:
    out = template
    for key, value in mapping.items():
        out = out.replace("{" + key + "}", value)
    return out


def solve(
    adapter: PlannerAdapter,
    domain_path: str | Path,
    problem_path: str | Path,
    *,
    timeout: float | None = None,
) -> SolveResult:
    """Run one planner invocation with a hard timeout."""
    timeout = timeout if timeout is not None else adapter.timeout
    with tempfile.TemporaryDirectory(prefix="planforge-solve-") as tmp:
        output_path = Path(tmp) / "plan.out"
        mapping = {
            "domain": str(Path(domain_path).resolve()),
            "problem": str(Path(problem_path).resolve()),
            "output": str(output_path),
            "python": sys.executable,
        }
        cmd = [_fill(adapter.executable, mapping)] + [
            _fill(arg, mapping) for arg in adapter.args
        ]
        start = time.perf_counter()
        try:
            proc = subprocess.run(
                cmd, capture_output=True, text=True, timeout=timeout
            )
        except subprocess.TimeoutExpired:
            wall = time.perf_counter() - start
            return SolveResult("timeout", None, "", wall, f"killed after {timeout}s")
        except (OSError, FileNotFoundError) as err:
            wall = time.perf_counter() - start
            return SolveResult("crashed", None, "", wall, f"spawn failure: {err}")
        wall = time.perf_counter() - start

        raw = proc.stdout + proc.stderr
        lowered = raw.lower()
        if any(marker in lowered for marker in _NO_PLAN_MARKERS):
            return SolveResult("no_solution", None, raw, wall)
        if proc.returncode != 0:
            return SolveResult(
                "crashed", None, raw, wall, f"exit code {proc.returncode}"
            )
        if adapter.output == "file":
            if not output_path.exists():
                return SolveResult(
                    "crashed", None, raw, wall, "exited 0 but wrote no plan file"
                )
            payload = output_path.read_text()
        else:
            payload = proc.stdout
        try:
            plan_text = normalize_output(payload, adapter.dialect)
            parse_plan(plan_text)
        except ValueError as err:
            return SolveResult("crashed", None, raw, wall, str(err))
        return SolveResult("solved", plan_text, raw, wall)


def reference_plan(
    domain: Domain, problem: Problem, *, max_expansions: int = 1_000_000
) -> list[PlanStep] | None:
    """Breadth-first search for a shortest plan.

    Returns None only when the whole reachable space was exhausted, which
    proves unsolvability.  Ties between equal-length plans are broken by the
    deterministic candidate order of ``ground_actions``.  Raises
    ExpansionBudgetExceeded when the search grows past ``max_expansions``
    dequeued states.
    """
    candidates = list(iter_applicable_candidates(domain, problem))
    start = problem.init
    if goal_satisfied(start, problem.goal):
        return []
    visited: dict = {start: None}
    queue: deque = deque([start])
    expansions = 0
    while queue:
        state = queue.popleft()
        expansions += 1
        if expansions > max_expansions:
            raise ExpansionBudgetExceeded(
                f"expansion budget exceeded ({max_expansions} states)"
            )
        for action in candidates:
            if first_failure(state, action.precondition) is not None:
                continue
            successor = apply_effects(state, action)
            if successor in visited:
                continue
            visited[successor] = (state, action)
            if goal_satisfied(successor, problem.goal):
                steps: list[PlanStep] = []
                cursor = successor
                while visited[cursor] is not None:
                    prev, act = visited[cursor]
                    steps.append((act.name,) + act.args)
                    cursor = prev
                steps.reverse()
                return steps
            queue.append(successor)
    return None


@dataclass(frozen=True)
class BatchEntry:
    problem_id: str
    status: str  # solved | invalid | no_solution | timeout | crashed
    wall_time: float
    plan_length: int | None
    plan_path: Path | None


@dataclass
class BatchResult:
    entries: list[BatchEntry]

    def tally(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in self.entries:
            counts[entry.status] = counts.get(entry.status, 0) + 1
        return counts

    @property
    def solved(self) -> int:
        return sum(1 for e in self.entries if e.status == "solved")

    @property
    def shortfall(self) -> int:
        return len(self.entries) - self.solved


def plan_batch(
    adapter: PlannerAdapter,
    domain: Domain,
    domain_path: str | Path,
    problem_paths: list[Path],
    plans_dir: str | Path,
    *,
    timeout: float | None = None,
    workers: int = 1,
    log_path: str | Path | None = None,
) -> BatchResult:
    """Solve a set of problems and keep only plans that validate exactly.

    A solved-but-invalid plan is counted as ``invalid`` and contributes to
    the shortfall; its plan file is not written.  The log has one line per
    problem: id, status, wall time, plan length (``-`` when there is none).
    """
    plans_dir = Path(plans_dir)
    plans_dir.mkdir(parents=True, exist_ok=True)

    def work(problem_path: Path) -> BatchEntry:
        pid = problem_path.stem
        result = solve(adapter, domain_path, problem_path, timeout=timeout)
        if result.status != "solved":
            return BatchEntry(pid, result.status, result.wall_time, None, None)
        problem = parse_problem(problem_path.read_text(), domain)
        outcome = validate(domain, problem, result.plan_text)
        if not outcome.valid:
            return BatchEntry(pid, "invalid", result.wall_time, None, None)
        steps = parse_plan(result.plan_text)
        plan_path = plans_dir / f"{pid}.plan"
        plan_path.write_text(render_plan(steps))
        return BatchEntry(pid, "solved", result.wall_time, len(steps), plan_path)

    if workers <= 1:
        entries = [work(p) for p in problem_paths]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(work, problem_paths))

    if log_path is not None:
        with open(log_path, "a") as log:
            log.write(f"# plan adapter={adapter.name} problems={len(problem_paths)}\n")
            for entry in entries:
                length = entry.plan_length if entry.plan_length is not None else "-"
                log.write(
                    f"{entry.problem_id} {entry.status} {entry.wall_time:.3f} {length}\n"
                )
            counts = " ".join(
                f"{k}={v}" for k, v in sorted(BatchResult(entries).tally().items())
            )
            log.write(f"# done {counts}\n")
    return BatchResult(entries)
