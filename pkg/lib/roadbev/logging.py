import sys
import time
import threading
import traceback
from abc import ABC, abstractmethod

__all__ = [
	"MessageLevel",
	"Logger",
	"TextLogger",
	"ConsoleLogger",
	"FileLogger",
	"Loggers",
	"loggers"]

class MessageLevel:
	"""Message level."""
	GENERAL = 5
	DEBUG = 10
	INFO = 20
	WARNING = 30
	ERROR = 40
	CRITICAL = 50
	SEPARATOR = 100

	NAMES = {
		"general": GENERAL,
		"debug": DEBUG,
		"info": INFO,
		"warning": WARNING,
		"error": ERROR,
		"critical": CRITICAL
	}

	@classmethod
	def from_name(cls, name):
		"""Get the level by its name (case insensitive).

		:param name: Level name, eg. "info".

		:returns: Level value.  Unknown names map to INFO.
		"""
		return cls.NAMES.get(str(name).lower(), cls.INFO)

class Logger(ABC):
	"""Base class of logger classes.

	Implementation of specific logger needs to override ``_log()`` to output
	the formatted message to certain device.

	Every logging method takes ``(message, depth=0, **fields)``.  ``depth``
	indents the message to show the calling hierarchy of a workflow and
	``fields`` are appended as ``key=value`` pairs, so stage summaries such
	as ``info("mapping built", cells=250000, hits=912)`` stay greppable.

	:ivar enabled_level: Minimal level of message to be logged.
		All messages at ``enabled_level`` or higher will be logged.
	"""
	def __init__(self):
		#config
		self.enabled_level = 0

		#control
		self._log_lock = threading.Lock()

	def open(self): pass

	def close(self): pass

	@abstractmethod
	def _log(self, timestamp, message, depth, level): pass

	@classmethod
	def _with_fields(cls, message, fields):
		if not fields: return message
		parts = []
		for key in sorted(fields.keys()):
			value = fields[key]
			if isinstance(value, float):
				value = "{:.6g}".format(value)
			parts.append("{}={}".format(key, value))
		return message + " " + " ".join(parts)

	def __log(self, message, depth, level, fields):
		if level < self.enabled_level: return
		with self._log_lock:
			self._log(time.time(), self._with_fields(message, fields), depth, level)

	def log(self, message, depth=0, **fields):
		self.__log(message, depth, MessageLevel.GENERAL, fields)

	def debug(self, message, depth=0, **fields):
		self.__log(message, depth, MessageLevel.DEBUG, fields)

	def info(self, message, depth=0, **fields):
		self.__log(message, depth, MessageLevel.INFO, fields)

	def warning(self, message, depth=0, **fields):
		self.__log(message, depth, MessageLevel.WARNING, fields)

	def error(self, message, depth=0, **fields):
		self.__log(message, depth, MessageLevel.ERROR, fields)

	def critical(self, message, depth=0, **fields):
		self.__log(message, depth, MessageLevel.CRITICAL, fields)

	def separator(self, ch="=", width=80):
		self.__log(ch * width, 0, MessageLevel.SEPARATOR, None)

	def exception(self, ex, depth=0):
		message = "EXCEPTION: " + str(ex) + "\n"
		message += traceback.format_exc()
		self.__log(message, depth, MessageLevel.DEBUG, None)

class TextLogger(Logger):
	"""Base class of text logger classes.

	:ivar include_timestamp: Whether to include the timestamp.
	:ivar use_utc: Whether to use UTC or local time for timestamp.
	:ivar indent_size: Size of indent for each depth.
	:ivar vline: The character to be used to represent the vertical line.
	"""
	PREFIXES = {
		MessageLevel.DEBUG: "DEBUG: ",
		MessageLevel.INFO: "INFO: ",
		MessageLevel.WARNING: "WARNING: ",
		MessageLevel.ERROR: "ERROR: ",
		MessageLevel.CRITICAL: "CRITICAL: "
	}

	def __init__(self):
		Logger.__init__(self)

		#config
		self.include_timestamp = True
		self.use_utc = False
		self.indent_size = 4
		self.vline = "|"

	def format_output(self, timestamp, message, depth, level):
		if level == MessageLevel.SEPARATOR: return message

		#timestamp
		ts_text = ""
		if self.include_timestamp:
			if self.use_utc:
				ts_text = time.strftime("%Y-%m-%d %H:%M:%SZ ", time.gmtime(timestamp))
			else:
				ts_text = time.strftime("%Y-%m-%d %H:%M:%S ", time.localtime(timestamp))

		#message
		message_text = self.PREFIXES.get(level, "") + message
		message_lines = message_text.replace("\r\n", "\n").replace("\r", "\n").split("\n")

		#indent
		indent_size = max(self.indent_size, 0)
		depth = max(depth, 0)
		if indent_size >= 3 and len(self.vline) == 1:
			indent_text = self.vline + " " * (indent_size - 1)
		else:
			indent_text = " " * indent_size

		lines = [ts_text + indent_text * depth + message_lines[0]]
		for line in message_lines[1:]:
			lines.append(" " * len(ts_text) + indent_text * depth + line)
		return "\n".join(lines)

class ConsoleLogger(TextLogger):
	"""Logger for console.

	It writes to stderr, so stdout of the command line tool carries reports
	only.
	"""
	def __init__(self, stream=None):
		TextLogger.__init__(self)
		self.stream = stream

	def _log(self, timestamp, message, depth, level):
		stream = self.stream if self.stream is not None else sys.stderr
		print(self.format_output(timestamp, message, depth, level), file=stream)

class FileLogger(TextLogger):
	"""Logger for a standalone log file.

	:ivar encoding: Encoding of text file.
	:ivar auto_flush: Whether to flush on each log activity.
	"""
	def __init__(self, filepath, reset=False):
		TextLogger.__init__(self)

		#config
		self.encoding = "utf-8"
		self.mode = "w" if reset else "a"
		self.auto_flush = True

		#control
		self._filepath = filepath
		self._file = None

	def __del__(self):
		self.close()

	def close(self):
		if self._file is not None:
			self._file.close()
			self._file = None

	def _log(self, timestamp, message, depth, level):
		if self._file is None:
			try:
				self._file = open(self._filepath, mode=self.mode, encoding=self.encoding)
			except OSError:
				return
		print(self.format_output(timestamp, message, depth, level), file=self._file)
		if self.auto_flush: self._file.flush()

class Loggers:
	"""Aggregator of loggers.

	It will distribute the log messages to all loggers registered.  The
	package-level instance ``loggers`` is what library modules log through;
	it has no logger registered until an application (eg. the command line
	tool) registers one.
	"""
	def __init__(self):
		self.loggers = []

	def close(self):
		for logger in self.loggers: logger.close()
		self.loggers.clear()

	def register_logger(self, logger):
		"""Register a logger.

		:param logger: A logger instance.
		"""
		self.loggers.append(logger)

	def log(self, message, depth=0, **fields):
		for logger in self.loggers: logger.log(message, depth, **fields)

	def debug(self, message, depth=0, **fields):
		for logger in self.loggers: logger.debug(message, depth, **fields)

	def info(self, message, depth=0, **fields):
		for logger in self.loggers: logger.info(message, depth, **fields)

	def warning(self, message, depth=0, **fields):
		for logger in self.loggers: logger.warning(message, depth, **fields)

	def error(self, message, depth=0, **fields):
		for logger in self.loggers: logger.error(message, depth, **fields)

	def critical(self, message, depth=0, **fields):
		for logger in self.loggers: logger.critical(message, depth, **fields)

	def separator(self, ch="=", width=80):
		for logger in self.loggers: logger.separator(ch, width)

	def exception(self, ex, depth=0):
		for logger in self.loggers: logger.exception(ex, depth)

loggers = Loggers()
