import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional

from rich.console import Console
from rich.progress import BarColumn, Progress, TaskID, TextColumn, TimeRemainingColumn

PHASES = ("burn-in", "sampling")


class ProgressStatus(Enum):
    PENDING = "pending"
    IN_PROGRESS = "in progress"
    COMPLETE = "complete"
    FAILED = "failed"


@dataclass
class ProgressStep:
    name: str
    status: ProgressStatus
    progress: float
    total: int = 0
    done: int = 0
    error: Optional[str] = None


class ProgressTracker:
    """Thread-safe phase tracking for one chain.

    Callbacks run on every change; a failing callback is ignored so that
    rendering can never break a run.
    """

    def __init__(self, task_name: str):
        self.task_name = task_name
        self.steps: List[ProgressStep] = []
        self.callbacks: List[Callable[["ProgressTracker"], None]] = []
        self._lock = threading.Lock()

    @classmethod
    def for_chain(cls, task_name: str, burn_in: int, sweeps: int) -> "ProgressTracker":
        tracker = cls(task_name)
        # no burn-in sweeps, no burn-in step
        if burn_in:
            tracker.add_step("burn-in", burn_in)
        tracker.add_step("sampling", sweeps)
        return tracker

    def _step(self, name: str) -> ProgressStep:
        for step in self.steps:
            if step.name == name:
                return step
        raise KeyError(name)

    def add_step(self, name: str, total: int = 0) -> None:
        with self._lock:
            self.steps.append(ProgressStep(name=name, status=ProgressStatus.PENDING, progress=0.0, total=total))
        self._notify()

    def start_step(self, name: str) -> None:
        with self._lock:
            step = self._step(name)
            step.status = ProgressStatus.IN_PROGRESS
            step.progress = 0.0
        self._notify()

    def update_step(self, name: str, done: int) -> None:
        with self._lock:
            step = self._step(name)
            step.done = done
            step.progress = done / step.total if step.total else 1.0
        self._notify()

    def complete_step(self, name: str) -> None:
        with self._lock:
            step = self._step(name)
            step.status = ProgressStatus.COMPLETE
            step.progress = 1.0
            step.done = step.total
        self._notify()

    def fail_step(self, name: str, error: str) -> None:
        with self._lock:
            step = self._step(name)
            step.status = ProgressStatus.FAILED
            step.error = error
        self._notify()

    def on_sweep(self, iteration: int, total: int, phase: str) -> None:
        """Engine hook: iteration is 1-based within the phase."""
        step = self._step(phase)
        if step.status == ProgressStatus.PENDING:
            self.start_step(phase)
        self.update_step(phase, iteration)
        if iteration >= total:
            self.complete_step(phase)

    def get_overall_progress(self) -> float:
        total = sum(step.total for step in self.steps)
        if not total:
            return 0.0
        return sum(step.done for step in self.steps) / total

    def running_step(self) -> str:
        """The step a failure belongs to: the one in progress, else the next pending one."""
        for status in (ProgressStatus.IN_PROGRESS, ProgressStatus.PENDING):
            for step in self.steps:
                if step.status == status:
                    return step.name
        return self.steps[-1].name

    def is_complete(self) -> bool:
        return all(step.status in (ProgressStatus.COMPLETE, ProgressStatus.FAILED) for step in self.steps)

    def has_errors(self) -> bool:
        return any(step.status == ProgressStatus.FAILED for step in self.steps)

    def add_callback(self, callback: Callable[["ProgressTracker"], None]) -> None:
        self.callbacks.append(callback)

    def _notify(self) -> None:
        for callback in self.callbacks:
            try:
                callback(self)
            except Exception:
                pass


class RichProgressView:
    """Renders a ProgressTracker as rich progress bars on stderr."""

    def __init__(self, tracker: ProgressTracker, console: Optional[Console] = None):
        self.tracker = tracker
        self.progress = Progress(
            TextColumn("[bold]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            TimeRemainingColumn(),
            console=console or Console(stderr=True),
            transient=True,
        )
        self.tasks: Dict[str, TaskID] = {}
        tracker.add_callback(self._on_update)

    def __enter__(self) -> "RichProgressView":
        self.progress.start()
        for step in self.tracker.steps:
            self.tasks[step.name] = self.progress.add_task(step.name, total=max(step.total, 1))
        return self

    def __exit__(self, *exc) -> None:
        self.progress.stop()
        if self.tracker.has_errors():
            for step in self.tracker.steps:
                if step.status == ProgressStatus.FAILED:
                    self.progress.console.print(f"[red]{step.name} stopped after {step.done}/{step.total}:[/red] {step.error}")

    def _on_update(self, tracker: ProgressTracker) -> None:
        for step in tracker.steps:
            task = self.tasks.get(step.name)
            if task is not None:
                self.progress.update(task, completed=step.done)
        if tracker.is_complete():
            self.progress.refresh()
