import time

__all__ = ["Clocker"]

class Clocker:
	"""Stage timer.

	Each ``record(label)`` closes the stage that started at the previous
	checkpoint.  The command line tool uses it to time scene loading,
	mapping, aggregation and writing, and logs the summary at debug level.

	Example::

		with Clocker() as clocker:
			table = build_mapping(scene, spec)
			clocker.record("build-mapping")
			feature = aggregate(maps, table, scene)
			clocker.record("aggregate")
		clocker.log_results(loggers)
	"""

	def __init__(self):
		self.checkpoints = []
		self.reset()

	def reset(self):
		"""Reset."""
		self.checkpoints.clear()
		self.record()

	def record(self, label=""):
		"""Record a checkpoint.

		:param label: Label of the stage ending at this checkpoint.
		"""
		self.checkpoints.append((label, time.perf_counter()))

	def __enter__(self):
		self.reset()
		return self

	def __exit__(self, exc_type, exc_val, exc_tb):
		pass

	def results(self):
		"""Get timing results.

		:returns: A list of (label, duration in seconds), one per stage.
		"""
		results = []
		for i in range(1, len(self.checkpoints)):
			label, timestamp = self.checkpoints[i]
			results.append((label, timestamp - self.checkpoints[i - 1][1]))
		return results

	def results_text(self):
		"""Get timing results in text, one stage per line."""
		lines = []
		for index, (label, duration) in enumerate(self.results()):
			name = label if label else "(#{})".format(index + 1)
			lines.append("{}: {:.3f} seconds".format(name, duration))
		return "\n".join(lines)

	def duration(self, label=None):
		"""Get duration of a stage.

		:param label: Label of the stage.  If it's None, the last stage.

		:returns: Duration in seconds, or None when the stage is not found.
		"""
		results = self.results()
		if not results: return None
		if label is None: return results[-1][1]
		for (label2, duration) in reversed(results):
			if label2 == label: return duration
		return None

	def total(self):
		"""Total duration since the first checkpoint, in seconds."""
		if len(self.checkpoints) <= 1: return 0.0
		return self.checkpoints[-1][1] - self.checkpoints[0][1]

	def log_results(self, loggers, depth=0):
		"""Log timing results at debug level.

		:param loggers: A logger or ``Loggers`` aggregator.
		:param depth: Depth of the messages.
		"""
		for (label, duration) in self.results():
			loggers.debug("stage timing", depth, stage=label, seconds=duration)
