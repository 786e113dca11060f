import os

__all__ = ["about", "version"]

def _load_about():
	about = {}
	here = os.path.abspath(os.path.dirname(__file__))
	filepath = os.path.join(here, "__version__.py")
	with open(filepath, "r", encoding="utf-8") as f:
		exec(f.read(), None, about)
	return about

def version():
	"""Get the version text of the library.

	:returns: Version in format of "<version>.<build>".
	"""
	about = _load_about()
	return "{}.{}".format(about["__VERSION__"], about["__BUILD__"])

def about():
	"""Print the library information.

	:returns: A dict with the library metadata.
	"""
	about = _load_about()
	print(about["__NAME__"] + ": " + about["__DESC__"])
	print("Version: " + version())
	print("Author: " + about["__AUTHOR__"])
	print("Email: " + about["__AUTHOR_EMAIL__"])
	return about
