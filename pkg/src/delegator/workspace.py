"""Persistent orchestration layer: plan, committed artifacts, journal.

One workspace per task run, single writer (the protocol engine). The journal
is append-only; committed artifacts only ever grow; execution sessions never
get write access to any of it. The planning context rendered here is the only
thing the planner ever sees about progress, and it is O(n) in the number of
subtasks: per-subtask summaries are hard-capped, artifact samples truncated,
and no sandbox transcript content is ever admitted.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

from .codec import canonical_dumps, encode_message
from .messages import CoderResult, ReplanEdit, SUCCESS
from .values import (
    TypeAnnotation,
    Value,
    annotate,
    render_annotation,
    render_preview,
)

__all__ = [
    "PENDING",
    "IN_PROGRESS",
    "DONE",
    "FAILED",
    "SubTask",
    "Plan",
    "CommittedArtifact",
    "JournalEntry",
    "Workspace",
    "WorkspaceError",
    "ReplanExhausted",
    "SEED_PRODUCER",
    "SUMMARY_CAP",
]

PENDING = "pending"
IN_PROGRESS = "in_progress"
DONE = "done"
FAILED = "failed"

_TRANSITIONS = {
    PENDING: {IN_PROGRESS},
    IN_PROGRESS: {DONE, FAILED},
    DONE: set(),
    FAILED: set(),
}

# Per-subtask cap on summaries/diagnostics admitted into the planning context.
SUMMARY_CAP = 1024

SEED_PRODUCER = "__seed__"


class WorkspaceError(Exception):
    pass


class ReplanExhausted(Exception):
    """Signal to the protocol engine: a replan was demanded with no budget."""


@dataclass
class SubTask:
    id: str
    title: str
    directive_seed: str
    status: str = PENDING
    retry_count: int = 0
    order_index: int = 0

    def transition(self, new_status: str):
        if new_status not in _TRANSITIONS[self.status]:
            raise WorkspaceError(
                f"illegal status transition {self.status} -> {new_status} for {self.id}"
            )
        self.status = new_status


@dataclass
class Plan:
    subtasks: list = field(default_factory=list)
    replan_count: int = 0

    def __post_init__(self):
        ids = [s.id for s in self.subtasks]
        if len(set(ids)) != len(ids):
            raise WorkspaceError("subtask ids must be unique")
        indices = [s.order_index for s in self.subtasks]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise WorkspaceError("order_index values must be strictly increasing")


@dataclass(frozen=True)
class CommittedArtifact:
    name: str
    value: Value
    annotation: TypeAnnotation
    produced_by: str
    committed_at: int

    def __post_init__(self):
        from .values import conforms

        if not conforms(self.value, self.annotation):
            raise WorkspaceError(
                f"annotation for {self.name!r} does not match its value"
            )


@dataclass(frozen=True)
class JournalEntry:
    seq: int
    kind: str
    subtask_id: str | None
    payload: str
    ts: float

    def to_obj(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "subtask_id": self.subtask_id,
            "payload": self.payload,
            "ts": self.ts,
        }


JOURNAL_KINDS = (
    "plan_set",
    "spec_issued",
    "result_received",
    "committed",
    "retry",
    "replan",
    "failure",
)


class Workspace:
    """Plan tracking, typed artifact store, and append-only journal."""

    def __init__(self, task_statement: str, journal_path=None,
                 summary_cap: int = SUMMARY_CAP):
        self.task_statement = task_statement
        self.journal_path = journal_path
        self.summary_cap = summary_cap
        self.plan: Plan | None = None
        self._artifacts: dict = {}
        self._journal: list = []
        self._last_note: dict = {}
        self._commit_seq = 0
        self._journal_file = None
        if journal_path is not None:
            self._journal_file = open(journal_path, "a", encoding="utf-8")

    # -- journal ------------------------------------------------------------

    def _append(self, kind: str, subtask_id, payload: str):
        if kind not in JOURNAL_KINDS:
            raise WorkspaceError(f"unknown journal kind {kind!r}")
        entry = JournalEntry(
            seq=len(self._journal), kind=kind, subtask_id=subtask_id,
            payload=payload, ts=time.time(),
        )
        self._journal.append(entry)
        if self._journal_file is not None:
            self._journal_file.write(canonical_dumps(entry.to_obj()) + "\n")
            self._journal_file.flush()
        return entry

    @property
    def journal(self) -> tuple:
        return tuple(self._journal)

    def journal_hash(self) -> str:
        """Chained hash over entries, timestamps excluded."""
        h = hashlib.sha256()
        for e in self._journal:
            obj = e.to_obj()
            del obj["ts"]
            h.update(canonical_dumps(obj).encode("utf-8"))
        return h.hexdigest()

    def close(self):
        if self._journal_file is not None:
            self._journal_file.close()
            self._journal_file = None

    # -- plan ---------------------------------------------------------------

    def set_plan(self, plan: Plan):
        if self.plan is not None:
            raise WorkspaceError("workspace already has an active plan")
        self.plan = plan
        self._append("plan_set", None, canonical_dumps(
            [{"id": s.id, "title": s.title} for s in plan.subtasks]
        ))

    def next_pending(self) -> SubTask | None:
        if self.plan is None:
            return None
        best = None
        for s in self.plan.subtasks:
            if s.status == PENDING and (best is None or s.order_index < best.order_index):
                best = s
        return best

    def subtask(self, subtask_id: str) -> SubTask:
        for s in (self.plan.subtasks if self.plan else ()):
            if s.id == subtask_id:
                return s
        raise WorkspaceError(f"no subtask {subtask_id!r}")

    def mark_in_progress(self, st: SubTask):
        st.transition(IN_PROGRESS)

    def mark_failed(self, st: SubTask, reason: str = ""):
        st.transition(FAILED)
        self._append("failure", st.id, reason[: self.summary_cap])

    def note_spec_issued(self, spec) -> None:
        self._append("spec_issued", spec.subtask_id, encode_message(spec).decode("utf-8"))

    def note_result(self, result: CoderResult):
        self._append("result_received", result.subtask_id,
                     encode_message(result).decode("utf-8"))
        if result.status == SUCCESS:
            note = result.summary
        else:
            d = result.diagnostics
            note = f"failed: {d.root_cause}" + (f" ({d.failed_operation})" if d.failed_operation else "")
        self._last_note[result.subtask_id] = note[: self.summary_cap]

    def note_retry(self, st: SubTask, refined_directive: str):
        st.retry_count += 1
        self._append("retry", st.id, refined_directive[: self.summary_cap])

    # -- artifacts ----------------------------------------------------------

    def seed_artifact(self, name: str, value: Value):
        """Pre-populate environment data before the run starts."""
        self._store(name, value, SEED_PRODUCER)

    def _store(self, name: str, value: Value, produced_by: str):
        self._commit_seq += 1
        superseded = self._artifacts.get(name)
        self._artifacts[name] = CommittedArtifact(
            name=name, value=value, annotation=annotate(value),
            produced_by=produced_by, committed_at=self._commit_seq,
        )
        note = {"name": name, "produced_by": produced_by}
        if superseded is not None:
            note["supersedes"] = superseded.committed_at
        return note

    def commit(self, result: CoderResult, returns, values) -> None:
        """Store a successful result's outputs and mark its subtask done.

        ``values`` maps output name to the extracted Value; results carry
        references only, and the values exist only before session disposal.
        Name collisions overwrite (a retry legitimately reproduces the same
        output names) with a supersession note in the journal.
        """
        if result.status != SUCCESS:
            raise WorkspaceError("only success results can be committed")
        notes = []
        for name, _ref in result.artifacts:
            if name not in values:
                raise WorkspaceError(f"no extracted value for artifact {name!r}")
            notes.append(self._store(name, values[name], result.subtask_id))
        st = self.subtask(result.subtask_id)
        st.transition(DONE)
        self._append("committed", result.subtask_id, canonical_dumps(notes))

    def resolve(self, name: str):
        """Return (value, annotation) by reference; no text round-trip."""
        art = self._artifacts.get(name)
        if art is None:
            raise WorkspaceError(f"unresolved artifact {name!r}")
        return art.value, art.annotation

    def artifact(self, name: str) -> CommittedArtifact:
        art = self._artifacts.get(name)
        if art is None:
            raise WorkspaceError(f"unresolved artifact {name!r}")
        return art

    def has_artifact(self, name: str) -> bool:
        return name in self._artifacts

    def artifact_names(self) -> tuple:
        return tuple(sorted(self._artifacts))

    def visible_annotations(self) -> dict:
        return {name: art.annotation for name, art in self._artifacts.items()}

    # -- replanning ---------------------------------------------------------

    def splice_replan(self, edit: ReplanEdit, replan_budget: int) -> list:
        """Replace the target subtask with the edit's replacements.

        Committed artifacts are never touched; order indices are renumbered;
        replacement ids are generated deterministically when seeds omit them.
        """
        if self.plan is None:
            raise WorkspaceError("no active plan")
        if self.plan.replan_count >= replan_budget:
            raise ReplanExhausted(edit.target_id)
        position = None
        for i, s in enumerate(self.plan.subtasks):
            if s.id == edit.target_id:
                position = i
                break
        if position is None:
            raise WorkspaceError(f"replan targets unknown subtask {edit.target_id!r}")
        ordinal = self.plan.replan_count + 1
        replacements = []
        for i, seed in enumerate(edit.replacements):
            if seed.id is not None:
                new_id = seed.id
            elif len(edit.replacements) == 1:
                new_id = f"{edit.target_id}.r{ordinal}"
            else:
                new_id = f"{edit.target_id}.r{ordinal}.{i + 1}"
            replacements.append(SubTask(
                id=new_id, title=seed.title, directive_seed=seed.directive_seed,
            ))
        subtasks = (
            self.plan.subtasks[:position]
            + replacements
            + self.plan.subtasks[position + 1:]
        )
        for i, s in enumerate(subtasks):
            s.order_index = i
        new_plan = Plan(subtasks=subtasks, replan_count=self.plan.replan_count + 1)
        self.plan = new_plan
        self._append("replan", edit.target_id, canonical_dumps({
            "target": edit.target_id,
            "replacements": [s.id for s in replacements],
            "note": edit.note,
        }))
        return replacements

    # -- planning context ----------------------------------------------------

    def planning_context(self) -> str:
        """Compact O(n) planning state: task statement, subtask status lines,
        artifact annotations with previews, last note per subtask. Never any
        sandbox transcript content."""
        lines = [f"Task: {self.task_statement}"]
        if self.plan is not None and self.plan.subtasks:
            lines.append("Plan:")
            for s in self.plan.subtasks:
                lines.append(
                    f"  [{s.id}] {s.title} :: {s.status} retries={s.retry_count}"
                )
        if self._artifacts:
            lines.append("Artifacts:")
            for name in sorted(self._artifacts):
                art = self._artifacts[name]
                lines.append(
                    f"  {name}: {render_annotation(art.annotation)}"
                    f" sample={render_preview(art.value)}"
                )
        notes = {
            sid: note for sid, note in self._last_note.items()
            if self.plan is not None and any(s.id == sid for s in self.plan.subtasks)
        }
        if notes:
            lines.append("Notes:")
            for sid in sorted(notes):
                lines.append(f"  [{sid}] {notes[sid]}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        done = sum(1 for s in (self.plan.subtasks if self.plan else ()) if s.status == DONE)
        arts = ", ".join(self.artifact_names())
        return f"{done} subtasks done; artifacts: {arts or '(none)'}"
