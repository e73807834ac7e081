"""Human annotation study: dispatch correctly predicted samples, collect binary
votes, resolve by majority, and score per-class explanation accuracy.

Votes go to an append-only JSON-lines log; replaying a log reproduces the
exact study state, so the report is auditable.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (DuplicateVote, EmptyStudy, InvalidLabel, MissingOverlay,
                     NoResolvedTasks, ResolvedTask, UnknownAnnotator, UnknownStudy)
from .metrics import ClassificationReport

DEFAULT_VOTES_NEEDED = 3


@dataclass
class StudyTask:
    sample_id: str
    class_id: int
    class_name: str
    votes_needed: int
    votes: dict[str, int] = field(default_factory=dict)  # annotator_id -> label
    resolved_label: int | None = None

    @property
    def resolved(self) -> bool:
        return self.resolved_label is not None


@dataclass(frozen=True)
class VoteRecord:
    sample_id: str
    annotator_id: str
    label: int
    timestamp: float


@dataclass
class StudyReport:
    per_class_accuracy: dict[str, float]
    weighted_accuracy: float
    resolved_tasks: int
    unresolved_tasks: int

    def to_dict(self) -> dict:
        return {
            "per_class_accuracy": self.per_class_accuracy,
            "weighted_accuracy": self.weighted_accuracy,
            "resolved_tasks": self.resolved_tasks,
            "unresolved_tasks": self.unresolved_tasks,
        }


def majority(labels) -> int:
    """Strict majority of binary labels; callers guarantee an odd count."""
    ones = sum(labels)
    return 1 if ones * 2 > len(labels) else 0


class Study:
    """One study over the correctly predicted samples of a classification run.

    Vote submission is serialized by a lock: the duplicate check, the log
    append, and the state update form one atomic step.
    """

    def __init__(self, study_id: str, tasks: list[StudyTask],
                 vote_log_path: str | Path | None = None):
        self.study_id = study_id
        self.tasks = {t.sample_id: t for t in tasks}
        self.annotators: set[str] = set()
        self.vote_log_path = Path(vote_log_path) if vote_log_path else None
        self._lock = threading.Lock()

    # --- construction ---

    @classmethod
    def from_report(cls, report: ClassificationReport, overlay_ids,
                    votes_needed: int = DEFAULT_VOTES_NEEDED,
                    study_id: str | None = None,
                    vote_log_path=None) -> "Study":
        """Build tasks for every correctly predicted sample in the report.

        ``overlay_ids`` is the set of sample_ids that have a rendered overlay;
        every correct prediction must have one.
        """
        if votes_needed < 1 or votes_needed % 2 == 0:
            raise ValueError("votes_needed must be a positive odd integer")
        correct = [(sid, t) for sid, t, p in report.per_sample if t == p]
        if not correct:
            raise EmptyStudy("no correctly predicted samples to study")
        overlay_ids = set(overlay_ids)
        missing = [sid for sid, _ in correct if sid not in overlay_ids]
        if missing:
            raise MissingOverlay(missing)
        tasks = [
            StudyTask(sample_id=sid, class_id=t, class_name=report.class_names[t],
                      votes_needed=votes_needed)
            for sid, t in correct
        ]
        return cls(study_id or uuid.uuid4().hex[:12], tasks, vote_log_path)

    # --- annotators ---

    def register_annotator(self, annotator_id: str) -> None:
        if not annotator_id:
            raise UnknownAnnotator("annotator id must be non-empty")
        with self._lock:
            self.annotators.add(annotator_id)

    def _check_annotator(self, annotator_id: str) -> None:
        if annotator_id not in self.annotators:
            raise UnknownAnnotator(f"annotator {annotator_id!r} is not registered")

    # --- dispatch ---

    def next_task(self, annotator_id: str) -> StudyTask | None:
        """The unresolved task with the fewest votes that this annotator has not
        voted on yet; ties break by sample_id. None when nothing is eligible."""
        self._check_annotator(annotator_id)
        with self._lock:
            eligible = [t for t in self.tasks.values()
                        if not t.resolved and annotator_id not in t.votes]
            if not eligible:
                return None
            return min(eligible, key=lambda t: (len(t.votes), t.sample_id))

    # --- voting ---

    def submit_vote(self, annotator_id: str, sample_id: str, label: int) -> VoteRecord:
        self._check_annotator(annotator_id)
        if label not in (0, 1):
            raise InvalidLabel(f"label must be 0 or 1, got {label!r}")
        with self._lock:
            task = self.tasks.get(sample_id)
            if task is None:
                raise UnknownStudy(f"no task for sample {sample_id!r}")
            if task.resolved:
                raise ResolvedTask(f"task {sample_id!r} already resolved")
            if annotator_id in task.votes:
                raise DuplicateVote(
                    f"annotator {annotator_id!r} already voted on {sample_id!r}")
            record = VoteRecord(sample_id, annotator_id, int(label), time.time())
            self._append_log(record)
            task.votes[annotator_id] = int(label)
            if len(task.votes) >= task.votes_needed:
                task.resolved_label = majority(list(task.votes.values()))
            return record

    def _append_log(self, record: VoteRecord) -> None:
        if self.vote_log_path is None:
            return
        line = json.dumps({
            "sample_id": record.sample_id,
            "annotator_id": record.annotator_id,
            "label": record.label,
            "timestamp": record.timestamp,
        }, sort_keys=True)
        with open(self.vote_log_path, "a") as fh:
            fh.write(line + "\n")

    def replay_log(self, path) -> int:
        """Apply every vote from a JSON-lines log in order. Returns the count."""
        n = 0
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            self.register_annotator(doc["annotator_id"])
            self.submit_vote(doc["annotator_id"], doc["sample_id"], doc["label"])
            n += 1
        return n

    # --- reporting ---

    def report(self) -> StudyReport:
        resolved = [t for t in self.tasks.values() if t.resolved]
        if not resolved:
            raise NoResolvedTasks("no task has reached its vote quorum yet")
        by_class: dict[str, list[int]] = {}
        for t in resolved:
            by_class.setdefault(t.class_name, []).append(t.resolved_label)
        per_class = {name: sum(labels) / len(labels) for name, labels in by_class.items()}
        total = len(resolved)
        weighted = sum(len(labels) * per_class[name] for name, labels in by_class.items()) / total
        return StudyReport(
            per_class_accuracy=per_class,
            weighted_accuracy=weighted,
            resolved_tasks=total,
            unresolved_tasks=len(self.tasks) - total,
        )

    def progress(self) -> tuple[int, int]:
        with self._lock:
            resolved = sum(1 for t in self.tasks.values() if t.resolved)
        return resolved, len(self.tasks)


class StudyStore:
    """In-memory registry of studies keyed by id."""

    def __init__(self):
        self._studies: dict[str, Study] = {}
        self._lock = threading.Lock()

    def add(self, study: Study) -> str:
        with self._lock:
            self._studies[study.study_id] = study
        return study.study_id

    def get(self, study_id: str) -> Study:
        study = self._studies.get(study_id)
        if study is None:
            raise UnknownStudy(f"no study with id {study_id!r}")
        return study
