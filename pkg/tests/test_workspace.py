"""Orchestration layer: plan tracking, commits, replan splices, journal."""

import json

import pytest

from delegator.messages import CoderResult, ReplanEdit, SubTaskSeed
from delegator.values import VInt, VTable
from delegator.workspace import (
    DONE,
    FAILED,
    IN_PROGRESS,
    PENDING,
    Plan,
    ReplanExhausted,
    SubTask,
    Workspace,
    WorkspaceError,
)


def _plan(n):
    return Plan(subtasks=[
        SubTask(id=f"s{i+1}", title=f"t{i+1}", directive_seed="d", order_index=i)
        for i in range(n)
    ])


def _success(sid, names):
    return CoderResult(subtask_id=sid, status="success",
                       artifacts=tuple((n, f"ref:{n}") for n in names), summary="ok")


def _start(ws, sid):
    st = ws.subtask(sid)
    ws.mark_in_progress(st)
    return st


def test_empty_plan_stores_and_next_pending_none():
    ws = Workspace("task")
    ws.set_plan(_plan(0))
    assert ws.next_pending() is None


def test_next_pending_returns_lowest_order_index():
    ws = Workspace("task")
    ws.set_plan(_plan(3))
    ws.subtask("s1").status = DONE
    assert ws.next_pending().id == "s2"


def test_next_pending_all_done_is_none():
    ws = Workspace("task")
    ws.set_plan(_plan(2))
    for sid in ("s1", "s2"):
        ws.subtask(sid).status = DONE
    assert ws.next_pending() is None


def test_failed_is_terminal_and_skipped():
    # A Failed subtask only arises via terminal failure (or ablation modes);
    # next_pending must still pick the Pending one.
    ws = Workspace("task")
    ws.set_plan(_plan(2))
    ws.subtask("s1").status = FAILED
    assert ws.next_pending().id == "s2"


def test_duplicate_subtask_ids_rejected():
    with pytest.raises(WorkspaceError):
        Plan(subtasks=[
            SubTask(id="s1", title="a", directive_seed="d", order_index=0),
            SubTask(id="s1", title="b", directive_seed="d", order_index=1),
        ])


def test_second_set_plan_rejected():
    ws = Workspace("task")
    ws.set_plan(_plan(1))
    with pytest.raises(WorkspaceError):
        ws.set_plan(_plan(1))


def test_status_transitions_enforced():
    st = SubTask(id="s1", title="t", directive_seed="d")
    with pytest.raises(WorkspaceError):
        st.transition(DONE)  # pending -> done skips in_progress
    st.transition(IN_PROGRESS)
    st.transition(DONE)
    with pytest.raises(WorkspaceError):
        st.transition(FAILED)


def test_commit_stores_and_resolves_by_reference():
    ws = Workspace("task")
    ws.set_plan(_plan(1))
    _start(ws, "s1")
    table = VTable(("a",), tuple((VInt(i),) for i in range(821)))
    ws.commit(_success("s1", ["df_clean"]), (), {"df_clean": table})
    value, ann = ws.resolve("df_clean")
    assert value is table  # reference semantics, no text round-trip
    assert ann.shape == (821, 1)
    assert ws.subtask("s1").status == DONE


def test_commit_of_fail_result_rejected():
    from delegator.messages import Diagnostics

    ws = Workspace("task")
    ws.set_plan(_plan(1))
    fail = CoderResult(subtask_id="s1", status="fail", summary="",
                       diagnostics=Diagnostics(root_cause="x"))
    with pytest.raises(WorkspaceError):
        ws.commit(fail, (), {})


def test_commit_overwrite_second_wins_with_supersession_note():
    ws = Workspace("task")
    ws.set_plan(_plan(2))
    _start(ws, "s1")
    ws.commit(_success("s1", ["out"]), (), {"out": VInt(1)})
    _start(ws, "s2")
    ws.commit(_success("s2", ["out"]), (), {"out": VInt(2)})
    value, _ = ws.resolve("out")
    assert value == VInt(2)
    commits = [e for e in ws.journal if e.kind == "committed"]
    notes = json.loads(commits[-1].payload)
    assert "supersedes" in notes[0]


def test_resolve_unknown_is_error():
    ws = Workspace("task")
    with pytest.raises(WorkspaceError):
        ws.resolve("nope")


def test_splice_replaces_with_pending_subtasks():
    ws = Workspace("task")
    ws.set_plan(_plan(3))
    edit = ReplanEdit("s2", (SubTaskSeed("a", "d"), SubTaskSeed("b", "d")))
    new = ws.splice_replan(edit, replan_budget=3)
    ids = [s.id for s in ws.plan.subtasks]
    assert ids == ["s1", "s2.r1.1", "s2.r1.2", "s3"]
    assert all(s.status == PENDING for s in new)
    assert [s.order_index for s in ws.plan.subtasks] == [0, 1, 2, 3]
    assert ws.plan.replan_count == 1


def test_splice_preserves_committed_artifacts():
    ws = Workspace("task")
    ws.set_plan(_plan(2))
    _start(ws, "s1")
    ws.commit(_success("s1", ["kept"]), (), {"kept": VInt(9)})
    before = ws.artifact_names()
    ws.splice_replan(ReplanEdit("s2", (SubTaskSeed("a", "d"),)), replan_budget=3)
    assert ws.artifact_names() == before
    assert ws.resolve("kept")[0] == VInt(9)


def test_splice_unknown_target_rejected():
    ws = Workspace("task")
    ws.set_plan(_plan(1))
    with pytest.raises(WorkspaceError):
        ws.splice_replan(ReplanEdit("zzz", (SubTaskSeed("a", "d"),)), replan_budget=3)


def test_splice_budget_exhaustion_signals():
    ws = Workspace("task")
    ws.set_plan(_plan(1))
    with pytest.raises(ReplanExhausted):
        ws.splice_replan(ReplanEdit("s1", (SubTaskSeed("a", "d"),)), replan_budget=0)


def test_journal_seq_strictly_increasing_and_hash_stable():
    ws = Workspace("task")
    ws.set_plan(_plan(2))
    _start(ws, "s1")
    ws.commit(_success("s1", ["x"]), (), {"x": VInt(1)})
    seqs = [e.seq for e in ws.journal]
    assert seqs == sorted(set(seqs))
    h1 = ws.journal_hash()
    assert h1 == ws.journal_hash()


def test_journal_file_is_jsonl(tmp_path):
    path = tmp_path / "run.jsonl"
    ws = Workspace("task", journal_path=str(path))
    ws.set_plan(_plan(1))
    ws.close()
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1
    entry = json.loads(lines[0])
    assert entry["kind"] == "plan_set" and entry["seq"] == 0


def test_planning_context_renders_artifact_annotation_line():
    ws = Workspace("task")
    ws.set_plan(_plan(1))
    _start(ws, "s1")
    table = VTable(
        tuple(f"c{i}" for i in range(12)),
        tuple(tuple(VInt(0) for _ in range(12)) for _ in range(821)),
    )
    ws.commit(_success("s1", ["df_clean"]), (), {"df_clean": table})
    ctx = ws.planning_context()
    assert "df_clean: table 821×12" in ctx


def test_empty_workspace_context_is_task_statement_only():
    ws = Workspace("just the task")
    assert ws.planning_context() == "Task: just the task\n"


def test_planning_context_caps_summaries():
    from delegator.messages import Diagnostics

    ws = Workspace("task")
    ws.set_plan(_plan(1))
    huge = CoderResult(subtask_id="s1", status="fail", summary="",
                       diagnostics=Diagnostics(root_cause="r" * 50_000))
    ws.note_result(huge)
    ctx = ws.planning_context()
    assert len(ctx) < 3000


def test_planning_context_growth_bounded_per_subtask():
    sizes = []
    for n in (1, 2, 3, 4):
        ws = Workspace("task")
        ws.set_plan(_plan(n))
        for i in range(n):
            st = _start(ws, f"s{i+1}")
            result = _success(st.id, [f"out_{st.id}"])
            ws.note_result(result)
            ws.commit(result, (), {f"out_{st.id}": VInt(i)})
        sizes.append(len(ws.planning_context()))
    deltas = [b - a for a, b in zip(sizes, sizes[1:])]
    assert all(d <= 1024 for d in deltas)
