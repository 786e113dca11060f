__all__ = [
	"ExitCode",
	"RoadBevError",
	"UsageError",
	"GenerationError", "InfeasibleLayout",
	"ValidationError", "ParseError", "NonFinite", "DegeneratePose",
	"IndexOutOfRange", "MaskShapeMismatch", "AllCamerasMasked",
	"DimensionMismatch", "ChannelMismatch", "MissingFeatureMap",
	"OutOfBounds", "OddChannels", "NoGroundTruth",
	"FileIOError", "RenderError"]

class ExitCode:
	"""Process exit codes of the command line tool."""
	OK = 0
	USAGE = 2
	GENERATION = 3
	VALIDATION = 4
	IO = 5

class RoadBevError(Exception):
	"""Base class of all errors raised by roadbev.

	:ivar message: Human readable message.
	:ivar context: Dict of details to locate the problem, eg. ``field``,
		``line`` or ``camera_index``.  They are appended to the message
		as ``key=value`` pairs when formatted.
	"""
	exit_code = ExitCode.VALIDATION

	def __init__(self, message, **context):
		Exception.__init__(self, message)
		self.message = message
		self.context = context

	@property
	def kind(self):
		"""Error kind, which is the class name."""
		return type(self).__name__

	def __str__(self):
		if not self.context: return self.message
		details = " ".join("{}={}".format(k, v) for k, v in sorted(self.context.items()))
		return "{} ({})".format(self.message, details)

	def to_line(self):
		"""Format the error as a single machine-parsable line.

		:returns: Text like ``error kind=ParseError exit=4 message="..." line=3``.
		"""
		message = self.message.replace("\\", "\\\\").replace("\"", "\\\"").replace("\n", " ")
		text = "error kind={} exit={} message=\"{}\"".format(self.kind, self.exit_code, message)
		for key, value in sorted(self.context.items()):
			text += " {}={}".format(key, str(value).replace(" ", "_"))
		return text

class UsageError(RoadBevError):
	"""Invalid command line usage."""
	exit_code = ExitCode.USAGE

class GenerationError(RoadBevError):
	"""Synthetic generation failed."""
	exit_code = ExitCode.GENERATION

class InfeasibleLayout(GenerationError):
	"""Requested objects could not be placed in view of any camera."""
	pass

class ValidationError(RoadBevError):
	"""A value violates an invariant."""
	exit_code = ExitCode.VALIDATION

class ParseError(ValidationError):
	"""Malformed input file."""
	pass

class NonFinite(ValidationError): pass
class DegeneratePose(ValidationError): pass
class IndexOutOfRange(ValidationError): pass
class MaskShapeMismatch(ValidationError): pass
class AllCamerasMasked(ValidationError): pass
class DimensionMismatch(ValidationError): pass
class ChannelMismatch(DimensionMismatch): pass
class MissingFeatureMap(ValidationError): pass
class OutOfBounds(ValidationError): pass
class OddChannels(ValidationError): pass
class NoGroundTruth(ValidationError): pass

class FileIOError(RoadBevError):
	"""File system access failed."""
	exit_code = ExitCode.IO

class RenderError(RoadBevError):
	"""Figure or raster could not be produced."""
	exit_code = ExitCode.IO
