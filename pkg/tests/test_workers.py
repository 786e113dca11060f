import os
import threading
from helpers import *
from roadbev.workers import *

def test_task_queue_order():
	q = TaskQueue()
	assert q.push_task("b", 2)
	assert q.push_task("a1", 1)
	assert q.push_task("a2", 1)
	assert not q.push_task(None)
	assert q.get_status() == {"total_count": 3, "peak_count": 3, "count": 3}
	assert [q.pop_task() for _ in range(4)] == ["a1", "a2", "b", None]

def test_run_chunks_keeps_chunk_order():
	chunks = [list(range(k, k + 10)) for k in range(0, 200, 10)]
	expected = [sum(c) for c in chunks]
	for threads in (1, 2, 4, 0):
		assert run_chunks(sum, chunks, threads) == expected
	assert run_chunks(sum, [], 4) == []

def test_single_thread_runs_inline():
	caller = threading.current_thread()
	seen = run_chunks(lambda chunk: threading.current_thread(), [1, 2, 3], 1)
	assert all(t is caller for t in seen)
	seen = run_chunks(lambda chunk: threading.current_thread(), [1, 2, 3], 3)
	assert not any(t is caller for t in seen)

def test_first_failure_by_index_is_raised():
	def fn(chunk):
		if chunk in (3, 7): raise KeyError(chunk)
		return chunk
	for threads in (1, 4):
		e = expect_error(KeyError, run_chunks, fn, list(range(10)), threads)
		assert e.args == (3,)

def test_interrupt_in_chunk_reaches_caller():
	def fn(chunk):
		if chunk == 1: raise KeyboardInterrupt()
		return chunk
	expect_error(KeyboardInterrupt, run_chunks, fn, [0, 1, 2], 2)
	with ChunkTeam(2) as team:
		expect_error(SystemExit, team.run, lambda chunk: sys.exit(chunk), [5])
		assert team.run(abs, [-1, -2]) == [1, 2]

def test_chunk_team_is_reusable():
	with ChunkTeam(3) as team:
		assert len(team.operators) == 3
		assert team.run(lambda x: x * x, [1, 2, 3, 4]) == [1, 4, 9, 16]
		assert team.run(str, [5, 6]) == ["5", "6"]
	assert team.operators == [] and team.task_queue is None

def test_resolve_threads():
	assert resolve_threads(3) == 3
	assert resolve_threads(0) == (os.cpu_count() or 1)
	expect_error(ValueError, resolve_threads, -1)

if __name__ == "__main__":
	sys.exit(run_tests(globals()))
