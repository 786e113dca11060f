from abc import ABC, abstractmethod
import os
import queue
import threading
import uuid

__all__ = [
	"TaskQueue",
	"Worker",
	"ChunkOperator",
	"ChunkTeam",
	"resolve_threads",
	"run_chunks"]

class _TaskQueueItem(object):
	def __init__(self, index, priority, task):
		self.index = index
		self.priority = priority
		self.task = task

	def __lt__(self, other):
		if self.priority != other.priority:
			return self.priority < other.priority
		return self.index < other.index

class TaskQueue(queue.PriorityQueue):
	"""Task queue.

	Lower priority value pops first; tasks with the same priority pop in
	the order they were pushed.
	"""
	def __init__(self, maxsize=0):
		queue.PriorityQueue.__init__(self, maxsize)
		self.__total_count = 0
		self.__peak_count = 0

	def get_status(self):
		"""Get status of the queue.

		:returns: Returns a dict with summary of queue status.
		"""
		with self.mutex:
			return {
				"total_count": self.__total_count,	#number of tasks had ever been queued
				"peak_count": self.__peak_count,	#number of tasks at peak time
				"count": self._qsize()				#number of current tasks
			}

	def push_task(self, task, priority=100, timeout=None):
		"""Push task to the queue.

		:param task: Task.  None is rejected.
		:param priority: Priority of the task.  Lower value takes higher priority.
		:param timeout: Timeout in seconds.  If it's None, it's infinite.

		:returns: Returns True on success and False on failure.
		"""
		if task is None: return False
		with self.mutex:
			self.__total_count += 1
			index = self.__total_count
		try:
			self.put(_TaskQueueItem(index, priority, task), block=True, timeout=timeout)
		except queue.Full:
			return False
		with self.mutex:
			if self._qsize() > self.__peak_count: self.__peak_count = self._qsize()
		return True

	def pop_task(self, timeout=None):
		"""Pop a task from the queue.

		:param timeout: If it's None, don't wait.  Otherwise wait up to
			``timeout`` seconds for a task.

		:returns: Returns a task, or None when no task is available.
		"""
		try:
			if timeout is None:
				item = self.get(block=False)
			else:
				item = self.get(block=True, timeout=timeout)
		except queue.Empty:
			return None
		return item.task

class Worker(ABC, threading.Thread):
	"""Base class of worker classes.

	A worker runs ``_process()`` in its own thread.  Program takes below
	actions to manage a worker:

	1. Create an instance of worker class
	2. Call ``bind()`` to pass the data it works on
	3. Call ``hire()`` to start the working thread
	4. Call ``dismiss()`` to stop it and wait for it
	"""
	def __init__(self):
		threading.Thread.__init__(self, daemon=True)

		#control
		self.__state_lock = threading.Lock()
		self.__state = 0	#s0(init), s1(hired), s2(working), s3(dismissed)
		self._dismiss_notice = threading.Event()

		#id
		self.id = ""

	@abstractmethod
	def _process(self): pass

	def _handle_exception(self, e): pass

	def bind(self, data): pass

	def hire(self, id=None):
		"""Hire the worker (start the working thread).

		:param id: Worker ID.  If it is None, an ID will be generated.

		:returns: Returns True on success and False on failure.
		"""
		with self.__state_lock:
			if self.__state != 0: return False
			self.__state = 1
		self.id = id if id is not None else str(uuid.uuid4())
		try:
			self.start()
		except RuntimeError:
			return False
		return True

	def dismiss(self):
		"""Dismiss the worker and wait for the working thread to end."""
		with self.__state_lock:
			state = self.__state
		if state not in (1, 2): return
		self._dismiss_notice.set()
		self.join()

	def run(self):
		with self.__state_lock:
			self.__state = 2
		try:
			self._process()
		except Exception as e:
			self._handle_exception(e)
		with self.__state_lock:
			self.__state = 3

class ChunkOperator(Worker):
	"""Operator of a ``ChunkTeam``.

	It pops ``(index, fn, chunk)`` tasks from the team's shared task queue
	and hands ``fn(chunk)`` (or the exception it raised) back to the team
	under the chunk index.
	"""
	def __init__(self):
		Worker.__init__(self)
		self.team = None

	def bind(self, data):
		self.team = data

	def _process(self):
		while True:
			task = self.team.task_queue.pop_task(0.01)
			if task is not None:
				index, fn, chunk = task
				try:
					result = fn(chunk)
				except BaseException as e:
					self.team._deliver(index, None, e)
				else:
					self.team._deliver(index, result, None)
				continue
			if self._dismiss_notice.is_set(): break

class ChunkTeam:
	"""Team of operators running independent chunks of one computation.

	Results are collected by chunk index, so the merged output never
	depends on how many operators there are or which one took which chunk.

	Example::

		with ChunkTeam(4) as team:
			sums = team.run(np.sum, [a[:100], a[100:]])

	:ivar size: Number of operators.
	"""
	def __init__(self, size):
		#config
		self.size = max(int(size), 1)

		#control
		self.task_queue = None
		self.operators = []
		self._lock = threading.Condition()
		self._results = {}
		self._errors = {}

	def __enter__(self):
		self.hire()
		return self

	def __exit__(self, exc_type, exc_val, exc_tb):
		self.dismiss()

	def hire(self):
		"""Create the task queue and hire operators."""
		self.task_queue = TaskQueue()
		for i in range(self.size):
			operator = ChunkOperator()
			operator.bind(self)
			if operator.hire("operator-{}".format(i)): self.operators.append(operator)
		if not self.operators:
			raise RuntimeError("failed to hire any operator")

	def dismiss(self):
		"""Dismiss all operators."""
		for operator in self.operators: operator.dismiss()
		self.operators.clear()
		self.task_queue = None

	def _deliver(self, index, result, error):
		with self._lock:
			if error is not None:
				self._errors[index] = error
			else:
				self._results[index] = result
			self._lock.notify_all()

	def run(self, fn, chunks):
		"""Run ``fn`` on every chunk.

		:param fn: Function taking one chunk.
		:param chunks: List of chunks.

		:returns: List of results in chunk order.  If any chunk failed, the
			exception of the failed chunk with the lowest index is raised.
		"""
		with self._lock:
			self._results = {}
			self._errors = {}
		for index, chunk in enumerate(chunks):
			self.task_queue.push_task((index, fn, chunk))
		with self._lock:
			while len(self._results) + len(self._errors) < len(chunks):
				self._lock.wait()
			if self._errors:
				raise self._errors[min(self._errors.keys())]
			return [self._results[i] for i in range(len(chunks))]

def resolve_threads(threads):
	"""Resolve the worker count: 0 means one per CPU."""
	threads = int(threads)
	if threads < 0: raise ValueError("thread count must not be negative")
	if threads == 0: return os.cpu_count() or 1
	return threads

def run_chunks(fn, chunks, threads=1):
	"""Run ``fn`` over chunks with ``threads`` workers and merge in chunk order.

	:param fn: Function taking one chunk.
	:param chunks: List of chunks.
	:param threads: Number of workers, 0 for one per CPU.  With a single
		worker (or a single chunk) it runs inline.

	:returns: List of results in chunk order.
	"""
	chunks = list(chunks)
	threads = min(resolve_threads(threads), len(chunks))
	if threads <= 1: return [fn(chunk) for chunk in chunks]
	with ChunkTeam(threads) as team:
		return team.run(fn, chunks)
