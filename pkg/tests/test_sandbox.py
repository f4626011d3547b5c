"""Session isolation, confinement, disposal, and the black-box executor
contract shared by the builtin interpreter and the subprocess kernel."""

import os
import random
import string
import sys
import time

import pytest

from delegator.sandbox import (
    BuiltinExecutor,
    ExecutorError,
    ExtractionError,
    KernelExecutor,
    STDOUT_CAP,
    SandboxError,
    SessionDisposedError,
    TRUNCATION_MARKER,
)
from delegator.messages import ReturnField
from delegator.values import TypeAnnotation, VInt

KERNEL_SHIM = os.path.join(
    os.path.dirname(__file__), "..", "kernel", "src", "kernel_shim", "shim.py"
)
KERNEL_CMD = [sys.executable, KERNEL_SHIM]


def _ret(name, kind="int"):
    return ReturnField(name, TypeAnnotation(kind))


@pytest.fixture
def builtin():
    return BuiltinExecutor()


@pytest.fixture
def kernel():
    ex = KernelExecutor(KERNEL_CMD)
    yield ex
    ex.shutdown()


def test_spawn_contains_exactly_the_bindings(builtin):
    s = builtin.spawn({"df_raw": VInt(1), "exchange_rates": VInt(2)})
    out = s.execute_cell("print df_raw\nprint exchange_rates")
    assert out.stdout == "1\n2\n" and out.error is None
    out = s.execute_cell("print anything_else")
    assert out.error is not None
    s.dispose()


def test_spawn_with_empty_inputs_is_empty_namespace(builtin):
    s = builtin.spawn({})
    out = s.execute_cell("print x")
    assert out.error is not None
    s.dispose()


def test_spawn_rejects_bad_identifiers(builtin):
    with pytest.raises(SandboxError):
        builtin.spawn({"not an ident": VInt(1)})


def test_sequential_sessions_do_not_share_names(builtin):
    s1 = builtin.spawn({})
    s1.execute_cell("let y = 10")
    s1.dispose()
    s2 = builtin.spawn({})
    out = s2.execute_cell("print y")
    assert out.error is not None
    s2.dispose()


def test_namespace_persists_across_cells_within_session(builtin):
    s = builtin.spawn({})
    s.execute_cell("let y = 41")
    out = s.execute_cell("print y + 1")
    assert out.stdout == "42\n"
    s.dispose()


def test_isolation_matrix_over_random_programs(builtin):
    # (define, read) x (same-session, cross-session): reads succeed only
    # within the defining session, over randomized names and values.
    rng = random.Random(2024)
    for _ in range(60):
        name = rng.choice(string.ascii_lowercase) + "".join(
            rng.choices(string.ascii_lowercase, k=5)
        )
        val = rng.randint(0, 999)
        a = builtin.spawn({})
        b = builtin.spawn({})
        a.execute_cell(f"let {name} = {val}")
        same = a.execute_cell(f"print {name}")
        cross = b.execute_cell(f"print {name}")
        assert same.error is None and same.stdout == f"{val}\n"
        assert cross.error is not None
        a.dispose()
        b.dispose()


def test_extract_artifacts_converts_bindings(builtin):
    s = builtin.spawn({})
    s.execute_cell('let df_clean = table(["a"], [[1]])')
    values = s.extract_artifacts([_ret("df_clean", "table")])
    assert values["df_clean"].shape == (1, 1)
    s.dispose()


def test_extract_empty_returns_is_empty(builtin):
    s = builtin.spawn({})
    assert s.extract_artifacts([]) == {}
    s.dispose()


def test_extract_missing_name_reported_not_invented(builtin):
    s = builtin.spawn({})
    with pytest.raises(ExtractionError) as err:
        s.extract_artifacts([_ret("never_defined")])
    assert "never_defined" in str(err.value)
    s.dispose()


def test_execute_after_dispose_errors(builtin):
    s = builtin.spawn({})
    s.dispose()
    with pytest.raises(SessionDisposedError):
        s.execute_cell("let x = 1")
    with pytest.raises(SessionDisposedError):
        s.extract_artifacts([])


def test_dispose_is_idempotent(builtin):
    s = builtin.spawn({})
    s.dispose()
    s.dispose()
    assert builtin.sessions_spawned == builtin.sessions_disposed == 1


def test_stdout_capped_with_marker(builtin):
    s = builtin.spawn({})
    line = "x" * 1000
    code = "\n".join(f'print "{line}"' for _ in range(80))
    out = s.execute_cell(code)
    assert len(out.stdout) <= STDOUT_CAP + len(TRUNCATION_MARKER)
    assert out.stdout.endswith(TRUNCATION_MARKER)
    s.dispose()


def test_cell_log_confined_to_session(builtin):
    s = builtin.spawn({})
    s.execute_cell('print "SECRET_TRACE"')
    assert "SECRET_TRACE" in s.cell_log[0].stdout
    values = None
    try:
        values = s.extract_artifacts([])
    finally:
        s.dispose()
    assert values == {}


# -- kernel executor: same black-box contract ---------------------------------


def test_kernel_spawn_exec_extract(kernel):
    s = kernel.spawn({"n": VInt(20)})
    out = s.execute_cell("x = n + 22")
    assert out.error is None and out.defined_names == ("x",)
    values = s.extract_artifacts([_ret("x")])
    assert values["x"] == VInt(42)
    s.dispose()


def test_kernel_sessions_isolated(kernel):
    a = kernel.spawn({})
    b = kernel.spawn({})
    a.execute_cell("w = 1")
    out = b.execute_cell("print(w)")
    assert out.error is not None
    a.dispose()
    b.dispose()


def test_kernel_user_error_vs_infrastructure(kernel):
    s = kernel.spawn({})
    out = s.execute_cell("1 / 0")
    assert out.error is not None and out.error.kind == "runtime"
    # the session is still usable: user errors are not infrastructure
    assert s.execute_cell("ok = 1").error is None
    s.dispose()


def test_kernel_unavailable_is_spawn_error():
    ex = KernelExecutor([sys.executable, "/nonexistent/kernel.py"])
    with pytest.raises(ExecutorError):
        s = ex.spawn({})
        s.execute_cell("x = 1")  # whichever step sees the dead kernel first


def test_kernel_process_gone_after_dispose(kernel):
    s = kernel.spawn({})
    proc = kernel._procs[s.session_id]
    s.dispose()
    assert proc.poll() is not None  # absent from the process table


def test_kernel_kill_mid_cell_is_infrastructure_error(kernel):
    s = kernel.spawn({})
    proc = kernel._procs[s.session_id]

    import threading

    def killer():
        time.sleep(0.3)
        proc.kill()

    t = threading.Thread(target=killer)
    t.start()
    started = time.time()
    with pytest.raises(ExecutorError):
        s.execute_cell("import time\ntime.sleep(30)")
    t.join()
    assert time.time() - started < kernel.timeout
    s.dispose()


# -- builtin/kernel equivalence -------------------------------------------------
# One abstract program suite, two renderings; outcomes must agree field by
# field (stdout, error kind, defined names).

EQUIVALENCE_SUITE = [
    # (builtin cells, kernel cells)
    (["let x = 2 + 3\nprint x"], ["x = 2 + 3\nprint(x)"]),
    (["let a = 5 / 2\nprint a"], ["a = 5 / 2\nprint(a)"]),
    (['let s = "ab" + "cd"\nprint s'], ['s = "ab" + "cd"\nprint(s)']),
    (["let x = 1\nlet y = 2", "print x + y"], ["x = 1\ny = 2", "print(x + y)"]),
    (["let z = 1 / 0"], ["z = 1 / 0"]),
    (["print nope"], ["print(nope)"]),
    (["print 3 < 4"], ["print(3 < 4)"]),
    (["let v = -7\nprint v * 2"], ["v = -7\nprint(v * 2)"]),
]


def test_builtin_kernel_equivalence(kernel, builtin):
    for b_cells, k_cells in EQUIVALENCE_SUITE:
        bs = builtin.spawn({})
        ks = kernel.spawn({})
        for b_code, k_code in zip(b_cells, k_cells):
            b_out = bs.execute_cell(b_code)
            k_out = ks.execute_cell(k_code)
            assert b_out.cell_index == k_out.cell_index
            assert b_out.stdout == k_out.stdout, (b_code, k_code)
            assert b_out.defined_names == k_out.defined_names
            if b_out.error is None:
                assert k_out.error is None
            else:
                assert k_out.error is not None
                assert b_out.error.kind == k_out.error.kind
                assert b_out.error.message == k_out.error.message
        bs.dispose()
        ks.dispose()
