import os
import uuid
import shutil
from roadbev.errors import FileIOError

__all__ = ["FileSystemUtils", "TempFile", "TempFolder"]

class FileSystemUtils:
	"""File system utilities.

	All loaders and savers raise ``FileIOError`` (exit code 5 on the command
	line) with the offending path in its context.
	"""

	@classmethod
	def create_folder(cls, folderpath):
		"""Create a folder (and its parents) if it does not exist.

		:param folderpath: Folder path.
		"""
		if not folderpath: return
		try:
			os.makedirs(folderpath, exist_ok=True)
		except OSError as e:
			raise FileIOError("cannot create folder: {}".format(e.strerror), path=folderpath)

	@classmethod
	def create_parent_folder(cls, fpath):
		"""Create the parent folder of a file/folder path."""
		cls.create_folder(os.path.split(os.path.abspath(fpath))[0])

	@classmethod
	def file_exists(cls, filepath):
		return os.path.isfile(filepath)

	@classmethod
	def folder_exists(cls, folderpath):
		return os.path.isdir(folderpath)

	@classmethod
	def delete_file(cls, filepath):
		"""Delete a file if it exists.

		:returns: True when the file no longer exists.
		"""
		try:
			if os.path.isfile(filepath): os.remove(filepath)
		except OSError:
			pass
		return not cls.file_exists(filepath)

	@classmethod
	def delete_folder(cls, folderpath):
		"""Delete a folder tree if it exists.

		:returns: True when the folder no longer exists.
		"""
		shutil.rmtree(folderpath, ignore_errors=True)
		return not cls.folder_exists(folderpath)

	@classmethod
	def load_bytes(cls, filepath):
		"""Load a binary file.

		:param filepath: File path.

		:returns: File contents as bytes.
		"""
		try:
			with open(filepath, "rb") as f:
				return f.read()
		except OSError as e:
			raise FileIOError("cannot read file: {}".format(e.strerror), path=filepath)

	@classmethod
	def load_text(cls, filepath, encoding="utf-8"):
		"""Load a text file into a string."""
		try:
			with open(filepath, "r", encoding=encoding) as f:
				return f.read()
		except OSError as e:
			raise FileIOError("cannot read file: {}".format(e.strerror), path=filepath)
		except UnicodeDecodeError:
			raise FileIOError("file is not valid {} text".format(encoding), path=filepath)

	@classmethod
	def save_bytes(cls, filepath, contents, create_parent=True):
		"""Save bytes into a file.

		The contents are written into a temp file next to the target first,
		which is then detached and renamed over the target, so a reader never
		sees a half written file.

		:param filepath: File path.
		:param contents: Bytes to be written.
		:param create_parent: Whether to create the parent folder first.
		"""
		if create_parent: cls.create_parent_folder(filepath)
		folderpath = os.path.split(os.path.abspath(filepath))[0]
		temp_file = TempFile(folderpath)
		try:
			with open(temp_file.path, "wb") as f:
				f.write(contents)
			os.replace(temp_file.detach(), filepath)
		except OSError as e:
			temp_file.delete()
			raise FileIOError("cannot write file: {}".format(e.strerror), path=filepath)

	@classmethod
	def save_text(cls, filepath, contents, encoding="utf-8", create_parent=True):
		"""Save a string into a text file (atomically, see ``save_bytes()``)."""
		cls.save_bytes(filepath, contents.encode(encoding), create_parent)

class TempFileSystemObject:
	"""Base class of TempFile and TempFolder."""

	def __init__(self):
		self._is_folder = False
		self._fpath = None

	def __del__(self):
		self.delete()

	def __enter__(self):
		return self

	def __exit__(self, exc_type, exc_val, exc_tb):
		self.delete()

	@property
	def path(self):
		"""Temp file/folder path."""
		return self._fpath

	def create(self, temp_folderpath):
		"""Create a temp file/folder under ``temp_folderpath``.

		:returns: The created path.
		"""
		FileSystemUtils.create_folder(temp_folderpath)
		while True:
			fpath = os.path.join(temp_folderpath, ".tmp-" + str(uuid.uuid4()))
			if not os.path.exists(fpath): break
		try:
			if self._is_folder:
				os.makedirs(fpath)
			else:
				with open(fpath, "wb"): pass
		except OSError as e:
			raise FileIOError("cannot create temp object: {}".format(e.strerror), path=fpath)
		self.attach(fpath)
		return fpath

	def attach(self, fpath):
		"""Attach a file/folder as temp object."""
		self.delete()
		self._fpath = fpath

	def detach(self):
		"""Detach the temp file/folder, so it will not be deleted automatically.

		:returns: Detached path.
		"""
		fpath = self._fpath
		self._fpath = None
		return fpath

	def delete(self):
		"""Delete the temp file/folder."""
		if self._fpath:
			if self._is_folder:
				FileSystemUtils.delete_folder(self._fpath)
			else:
				FileSystemUtils.delete_file(self._fpath)
			self._fpath = None

	def join(self, *names):
		"""Join names onto the temp path."""
		return os.path.join(self._fpath, *names)

class TempFile(TempFileSystemObject):
	"""Temp file."""

	def __init__(self, temp_folderpath):
		super().__init__()
		self._is_folder = False
		if temp_folderpath: self.create(temp_folderpath)

class TempFolder(TempFileSystemObject):
	"""Temp folder."""

	def __init__(self, temp_folderpath):
		super().__init__()
		self._is_folder = True
		if temp_folderpath: self.create(temp_folderpath)
