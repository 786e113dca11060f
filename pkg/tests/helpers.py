"""Shared test helpers.

Test scripts import this module first: it puts ``lib/`` on ``sys.path``.
A script runs its tests with ``sys.exit(run_tests(globals()))`` and prints the
timings, eg. ``python tests/test_grid.py``.
"""
import os
import sys
import math
import traceback
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "lib")))

import numpy as np
from roadbev.debugging import Clocker
from roadbev.fsio import TempFolder
from roadbev.geometry import PinholeIntrinsics, RigidTransform, CameraModel, look_at
from roadbev.grid import BevGridSpec
from roadbev.scene import SyntheticSceneSpec, generate_synthetic_scene

TEMP_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".test-temp"))

def expect_error(cls, fn, *args, **kwargs):
	"""Call ``fn`` and check that it raises ``cls``.

	:returns: The raised error.
	"""
	try:
		fn(*args, **kwargs)
	except cls as e:
		return e
	raise AssertionError("{} not raised by {}".format(cls.__name__, getattr(fn, "__name__", fn)))

def temp_folder():
	"""Scratch folder, deleted when the returned object goes away."""
	return TempFolder(TEMP_ROOT)

def default_intrinsics():
	return PinholeIntrinsics(1000.0, 1000.0, 480.0, 272.0, 960, 544)

def random_rotation(rng):
	#uniform rotation from a random unit quaternion
	q = rng.standard_normal(4)
	w, x, y, z = q / np.linalg.norm(q)
	return np.array([
		[1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
		[2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
		[2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)]])

def random_transform(rng, scale=20.0):
	return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))

def random_camera(rng, camera_id="cam"):
	"""Camera 5 to 15 m high looking at a ground point within 30 m."""
	position = np.array([rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(5, 15)])
	target = np.array([rng.uniform(-30, 30), rng.uniform(-30, 30), 0.0])
	return CameraModel(camera_id, default_intrinsics(), look_at(position, target))

def small_scene(seed=0, cameras=4, objects=6, layout="corridor"):
	"""Small synthetic scene with reduced image size."""
	return generate_synthetic_scene(SyntheticSceneSpec(
		seed=seed, num_cameras=cameras, num_objects=objects, layout=layout,
		image_size=(240, 136), focal=250.0))

def small_grid():
	"""Grid covering the first poles of a generated corridor."""
	return BevGridSpec(32, 40, (-16.0, 48.0), (-20.0, 140.0), (0.0, 1.5))

def symmetric_grid(n=24, half=60.0):
	return BevGridSpec(n, n, (-half, half), (-half, half), (0.0, 2.0))

def wrap_reference(a):
	#repeated subtraction, independent of the library
	while a > math.pi: a -= 2 * math.pi
	while a <= -math.pi: a += 2 * math.pi
	return a

def run_tests(namespace):
	"""Run every ``test_*`` function of a module namespace.

	:returns: Number of failed tests.
	"""
	clocker = Clocker()
	failed = 0
	names = [name for name in namespace if name.startswith("test_") and callable(namespace[name])]
	for name in names:
		try:
			namespace[name]()
			clocker.record(name)
		except Exception:
			failed += 1
			clocker.record(name + " (FAILED)")
			traceback.print_exc()
	print(clocker.results_text())
	print("{} passed, {} failed".format(len(names) - failed, failed))
	return failed
