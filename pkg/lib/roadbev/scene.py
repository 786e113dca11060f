"""Scene configuration, synthetic scene generation and scene file I/O.

A scene holds cameras (world frame), the BEV frame (world->BEV) and
labelled objects whose boxes live in the BEV frame.

Scene files are JSON documents::

	{
		"scene_id": "...",
		"bev_frame": {"rotation": [9 reals, row-major], "translation": [3 reals]},
		"cameras": [{
			"camera_id": "...",
			"intrinsics": {"fx": ..., "fy": ..., "cx": ..., "cy": ..., "width": ..., "height": ...},
			"world_to_camera": {"rotation": [...], "translation": [...]},
			"roi_mask": "optional/relative/path.pgm"
		}],
		"objects": [{"id": "...", "category": "...", "center": [3], "dims": [3], "yaw": ...}]
	}

Angles are radians and lengths are meters.  Numbers are written with full
precision, so loading a saved scene gives back the same values exactly.
"""
import io
import json
import math
import os
import numpy as np
from PIL import Image
from roadbev.errors import ValidationError, ParseError, InfeasibleLayout, FileIOError
from roadbev.fsio import FileSystemUtils
from roadbev.geometry import (
	RigidTransform, PinholeIntrinsics, CameraModel, Box3D, Category,
	project_points, unproject, pole_camera, yaw_in_frame)
from roadbev.logging import loggers

__all__ = [
	"DEFAULT_MAX_CAMERAS",
	"SceneObject", "SceneConfig", "SyntheticSceneSpec", "Layout",
	"frame_at_camera", "generate_synthetic_scene",
	"scene_to_dict", "scene_from_dict", "dumps_scene", "loads_scene",
	"object_to_dict", "object_from_dict",
	"load_scene", "save_scene",
	"loads_json", "load_roi_bitmap", "save_roi_bitmap", "resolve_roi_path"]

DEFAULT_MAX_CAMERAS = 12

class SceneObject:
	"""A labelled object.

	:ivar object_id: Stable identifier, unique within a scene.
	:ivar box: ``Box3D`` in the BEV frame.
	"""
	def __init__(self, object_id, box):
		self.object_id = str(object_id)
		self.box = box
		if not self.object_id:
			raise ValidationError("object id must not be empty", field="id")

	@property
	def category(self):
		return self.box.category

	def __eq__(self, other):
		if not isinstance(other, SceneObject): return NotImplemented
		return self.object_id == other.object_id and self.box == other.box

	__hash__ = None

	def __repr__(self):
		return "SceneObject({!r}, {!r})".format(self.object_id, self.box)

class SceneConfig:
	"""Scene configuration.

	:ivar scene_id: Scene identifier.
	:ivar cameras: Tuple of ``CameraModel``, in index order.
	:ivar bev_frame: World->BEV ``RigidTransform``.
	:ivar objects: Tuple of ``SceneObject``.
	:ivar roi_refs: Tuple with an optional ROI mask file reference per camera
		(relative to the scene file), aligned with ``cameras``.
	:ivar max_cameras: Maximal number of cameras allowed.
	"""
	def __init__(self, scene_id, cameras, bev_frame, objects=(), roi_refs=None, max_cameras=DEFAULT_MAX_CAMERAS):
		#config
		self.scene_id = str(scene_id)
		self.cameras = tuple(cameras)
		self.bev_frame = bev_frame
		self.objects = tuple(objects)
		self.roi_refs = tuple(roi_refs) if roi_refs is not None else (None,) * len(self.cameras)
		self.max_cameras = int(max_cameras)

		#validate
		if not (1 <= len(self.cameras) <= self.max_cameras):
			raise ValidationError(
				"camera count must be in [1, {}]".format(self.max_cameras),
				field="cameras", count=len(self.cameras))
		if len(self.roi_refs) != len(self.cameras):
			raise ValidationError("ROI references must align with cameras", field="roi_refs")
		camera_ids = [cam.camera_id for cam in self.cameras]
		if len(set(camera_ids)) != len(camera_ids):
			raise ValidationError("camera ids must be unique", field="cameras")
		object_ids = [obj.object_id for obj in self.objects]
		if len(set(object_ids)) != len(object_ids):
			raise ValidationError("object ids must be unique", field="objects")

	@property
	def num_cameras(self):
		return len(self.cameras)

	def camera_index(self, camera_id):
		"""Get the index of a camera by its id."""
		for index, cam in enumerate(self.cameras):
			if cam.camera_id == camera_id: return index
		raise ValidationError("unknown camera id: {}".format(camera_id), field="camera_id")

	def replace(self, cameras=None, bev_frame=None, objects=None, roi_refs=None, scene_id=None):
		"""Get a copy with some fields replaced."""
		if cameras is not None and roi_refs is None: roi_refs = (None,) * len(cameras)
		return SceneConfig(
			self.scene_id if scene_id is None else scene_id,
			self.cameras if cameras is None else cameras,
			self.bev_frame if bev_frame is None else bev_frame,
			self.objects if objects is None else objects,
			self.roi_refs if roi_refs is None else roi_refs,
			self.max_cameras)

	def without_camera(self, index):
		"""Get a copy with camera ``index`` physically removed.

		Cameras after it shift down by one index.
		"""
		if not 0 <= index < len(self.cameras):
			raise ValidationError("camera index out of range", camera_index=index)
		keep = [i for i in range(len(self.cameras)) if i != index]
		return self.replace(
			cameras=[self.cameras[i] for i in keep],
			roi_refs=[self.roi_refs[i] for i in keep])

	def __eq__(self, other):
		if not isinstance(other, SceneConfig): return NotImplemented
		return self.scene_id == other.scene_id and self.cameras == other.cameras and \
			self.bev_frame == other.bev_frame and self.objects == other.objects and \
			self.roi_refs == other.roi_refs

	__hash__ = None

	def __repr__(self):
		return "SceneConfig({!r}, cameras={}, objects={})".format(
			self.scene_id, len(self.cameras), len(self.objects))

class Layout:
	"""Synthetic scene layouts."""
	CORRIDOR = "corridor"
	INTERSECTION = "intersection"
	ALL = (CORRIDOR, INTERSECTION)

class SyntheticSceneSpec:
	"""Specification of a synthetic scene.

	:ivar seed: Random seed, an integer in [0, 2^64).
	:ivar num_cameras: Number of cameras.
	:ivar pole_height_range: (min, max) camera mounting height in meters.
	:ivar pitch_range: (min, max) downward camera pitch in degrees, inside [15, 60].
	:ivar layout: ``Layout.CORRIDOR`` or ``Layout.INTERSECTION``.
	:ivar num_objects: Number of objects.
	:ivar object_mix: Dict of category to proportion.
	:ivar image_size: (width, height) of camera images in pixels.
	:ivar focal: Focal length in pixels.
	:ivar max_cameras: Maximal camera count of the generated scene.
	:ivar scene_id: Scene id.  If it's None, it's derived from the seed.
	"""
	def __init__(self, seed=0, num_cameras=4, pole_height_range=(6.0, 15.0), layout=Layout.CORRIDOR, num_objects=10,
			object_mix=None, pitch_range=(15.0, 45.0), image_size=(960, 544), focal=1000.0,
			max_cameras=DEFAULT_MAX_CAMERAS, scene_id=None):
		#config
		self.seed = int(seed)
		self.num_cameras = int(num_cameras)
		self.pole_height_range = (float(pole_height_range[0]), float(pole_height_range[1]))
		self.pitch_range = (float(pitch_range[0]), float(pitch_range[1]))
		self.layout = layout
		self.num_objects = int(num_objects)
		self.object_mix = dict(object_mix) if object_mix else {
			Category.VEHICLE: 0.6, Category.CYCLIST: 0.2, Category.PEDESTRIAN: 0.2}
		self.image_size = (int(image_size[0]), int(image_size[1]))
		self.focal = float(focal)
		self.max_cameras = int(max_cameras)
		self.scene_id = scene_id if scene_id is not None else "synthetic-{}-{}".format(layout, self.seed)

		#validate
		if not 0 <= self.seed < 2 ** 64:
			raise ValidationError("seed must be in [0, 2^64)", field="seed")
		if not 1 <= self.num_cameras <= self.max_cameras:
			raise ValidationError("camera count must be in [1, {}]".format(self.max_cameras), field="num_cameras")
		lo, hi = self.pole_height_range
		if not (0 < lo <= hi < 100):
			raise ValidationError("pole height range must lie within (0, 100) meters", field="pole_height_range")
		lo, hi = self.pitch_range
		if not (15.0 <= lo <= hi <= 60.0):
			raise ValidationError("pitch range must lie within [15, 60] degrees", field="pitch_range")
		if self.layout not in Layout.ALL:
			raise ValidationError("unknown layout: {}".format(self.layout), field="layout")
		if self.num_objects < 0:
			raise ValidationError("object count must not be negative", field="num_objects")
		for category, weight in self.object_mix.items():
			Category.validate(category)
			if not (math.isfinite(weight) and weight >= 0):
				raise ValidationError("object mix proportions must be non-negative", field="object_mix")
		if sum(self.object_mix.values()) <= 0:
			raise ValidationError("object mix must not be empty", field="object_mix")

def frame_at_camera(cam):
	"""BEV frame centered under a camera.

	The origin is the ground point below the camera center and +Y follows
	the ground heading of its optical axis, +X points to the right of it.

	:returns: World->BEV ``RigidTransform``.
	"""
	center = cam.center
	axis = cam.optical_axis
	heading = math.atan2(axis[1], axis[0])
	s, c = math.sin(heading), math.cos(heading)
	rotation = np.array([[s, -c, 0.0], [c, s, 0.0], [0.0, 0.0, 1.0]])
	translation = -np.array([
		rotation[0, 0] * center[0] + rotation[0, 1] * center[1],
		rotation[1, 0] * center[0] + rotation[1, 1] * center[1],
		0.0])
	return RigidTransform(rotation, translation)

#corridor: road along world +Y, poles on both sides
_ROAD_HALF_WIDTH = 10.0
_POLE_OFFSET = 12.0
_POLE_SPACING = 60.0

#intersection: poles on a circle around the junction
_POLE_RADIUS = 25.0
_AREA_RADIUS = 40.0

_MAX_VIEW_DISTANCE = 150.0
_ATTEMPTS_PER_OBJECT = 200

def _place_cameras(spec, rng):
	width, height = spec.image_size
	intrinsics = PinholeIntrinsics(spec.focal, spec.focal, width / 2.0, height / 2.0, width, height)
	cameras = []
	for i in range(spec.num_cameras):
		if spec.layout == Layout.CORRIDOR:
			side = -1.0 if i % 2 == 0 else 1.0
			ground_xy = (side * _POLE_OFFSET, _POLE_SPACING * (i // 2) + rng.uniform(-5.0, 5.0))
			#toe in towards the road
			heading = math.pi / 2 + side * rng.uniform(0.0, math.radians(15.0))
		else:
			angle = 2 * math.pi * i / spec.num_cameras + rng.uniform(-0.2, 0.2)
			ground_xy = (_POLE_RADIUS * math.cos(angle), _POLE_RADIUS * math.sin(angle))
			heading = angle + math.pi + rng.uniform(-math.radians(10.0), math.radians(10.0))
		height = rng.uniform(*spec.pole_height_range)
		pitch = math.radians(rng.uniform(*spec.pitch_range))
		cameras.append(pole_camera("cam{:02d}".format(i), intrinsics, ground_xy, height, heading, pitch))
	return cameras

def _inside_layout(spec, cam, point):
	if math.hypot(point[0] - cam.center[0], point[1] - cam.center[1]) > _MAX_VIEW_DISTANCE: return False
	if spec.layout == Layout.CORRIDOR: return abs(point[0]) <= _ROAD_HALF_WIDTH
	return math.hypot(point[0], point[1]) <= _AREA_RADIUS

def _visible_in_any(cameras, point):
	for cam in cameras:
		u, v, depth = project_points(cam, point[None, :])
		if depth[0] > 1e-6 and cam.intrinsics.contains(u[0], v[0]): return True
	return False

def _sample_ground_point(spec, cameras, rng):
	#pixel of a random camera, cast onto the ground plane
	cam = cameras[int(rng.integers(len(cameras)))]
	intrinsics = cam.intrinsics
	u = rng.uniform(1.0, intrinsics.width - 1.0)
	v = rng.uniform(1.0, intrinsics.height - 1.0)
	ray = unproject(cam, u, v, 1.0) - cam.center
	if ray[2] >= -1e-9: return None
	point = unproject(cam, u, v, -cam.center[2] / ray[2])
	point[2] = 0.0
	if not _inside_layout(spec, cam, point): return None
	if not _visible_in_any(cameras, point): return None
	return point

def _place_objects(spec, cameras, bev_frame, rng):
	categories = sorted(spec.object_mix.keys())
	weights = np.array([spec.object_mix[c] for c in categories], dtype=np.float64)
	weights = weights / weights.sum()

	objects = []
	attempts = 0
	while len(objects) < spec.num_objects:
		if attempts >= _ATTEMPTS_PER_OBJECT * spec.num_objects:
			raise InfeasibleLayout(
				"cannot place requested objects in view of any camera",
				placed=len(objects), requested=spec.num_objects, attempts=attempts)
		attempts += 1
		point = _sample_ground_point(spec, cameras, rng)
		if point is None: continue

		category = categories[int(rng.choice(len(categories), p=weights))]
		dims = np.array(Category.DIMS[category]) * rng.uniform(0.9, 1.1, size=3)
		if spec.layout == Layout.CORRIDOR:
			yaw = (math.pi / 2 if rng.random() < 0.5 else -math.pi / 2) + rng.normal(0.0, 0.05)
		else:
			yaw = rng.uniform(-math.pi, math.pi)
		center = bev_frame.apply(np.array([point[0], point[1], dims[2] / 2.0]))
		box = Box3D(center, dims, yaw_in_frame(yaw, bev_frame), category)
		objects.append(SceneObject("obj{:04d}".format(len(objects)), box))
	return objects

def generate_synthetic_scene(spec):
	"""Generate a synthetic scene.

	Generation is a pure function of ``spec``.  Cameras sit on poles at
	heights within ``spec.pole_height_range``, pitched down within
	``spec.pitch_range``.  The BEV frame is ``frame_at_camera()`` of camera
	0.  Objects stand on the ground and their footprint centers project into
	at least one image.

	:param spec: ``SyntheticSceneSpec``.

	:returns: ``SceneConfig``.
	"""
	rng = np.random.default_rng(spec.seed)
	cameras = _place_cameras(spec, rng)
	bev_frame = frame_at_camera(cameras[0])
	objects = _place_objects(spec, cameras, bev_frame, rng)
	scene = SceneConfig(spec.scene_id, cameras, bev_frame, objects, max_cameras=spec.max_cameras)
	loggers.info("scene generated", scene_id=scene.scene_id, cameras=len(cameras), objects=len(objects))
	return scene

def _transform_to_dict(transform):
	return {
		"rotation": transform.rotation.flatten().tolist(),
		"translation": transform.translation.tolist()
	}

def object_to_dict(obj, score=None):
	"""Convert a ``SceneObject`` into its file representation.

	:param score: Detection score.  Only written when it's not None.
	"""
	data = {
		"id": obj.object_id,
		"category": obj.category,
		"center": obj.box.center.tolist(),
		"dims": obj.box.dims.tolist(),
		"yaw": obj.box.yaw
	}
	if score is not None: data["score"] = float(score)
	return data

def scene_to_dict(scene):
	cameras = []
	for cam, roi_ref in zip(scene.cameras, scene.roi_refs):
		intrinsics = cam.intrinsics
		data = {
			"camera_id": cam.camera_id,
			"intrinsics": {
				"fx": intrinsics.fx, "fy": intrinsics.fy,
				"cx": intrinsics.cx, "cy": intrinsics.cy,
				"width": intrinsics.width, "height": intrinsics.height
			},
			"world_to_camera": _transform_to_dict(cam.world_to_camera)
		}
		if roi_ref is not None: data["roi_mask"] = roi_ref
		cameras.append(data)
	return {
		"scene_id": scene.scene_id,
		"bev_frame": _transform_to_dict(scene.bev_frame),
		"cameras": cameras,
		"objects": [object_to_dict(obj) for obj in scene.objects]
	}

def _field(data, key, path, kind=None):
	if not isinstance(data, dict):
		raise ParseError("expected an object", field=path)
	if key not in data:
		raise ParseError("missing field", field="{}.{}".format(path, key) if path else key)
	value = data[key]
	path = "{}.{}".format(path, key) if path else key
	if kind == "real":
		if isinstance(value, bool) or not isinstance(value, (int, float)):
			raise ParseError("expected a number", field=path)
		return float(value)
	if kind == "int":
		if isinstance(value, bool) or not isinstance(value, int):
			raise ParseError("expected an integer", field=path)
	if kind == "str" and not isinstance(value, str):
		raise ParseError("expected a string", field=path)
	if kind == "list" and not isinstance(value, list):
		raise ParseError("expected a list", field=path)
	return value

def _reals(data, key, path, count):
	values = _field(data, key, path, "list")
	path = "{}.{}".format(path, key) if path else key
	if len(values) != count:
		raise ParseError("expected {} numbers".format(count), field=path)
	for value in values:
		if isinstance(value, bool) or not isinstance(value, (int, float)):
			raise ParseError("expected a number", field=path)
	return np.array(values, dtype=np.float64)

def _located(path, fn, *args):
	try:
		return fn(*args)
	except ValidationError as e:
		if isinstance(e, ParseError): raise
		field = e.context.get("field")
		e.context["field"] = "{}.{}".format(path, field) if field else path
		raise

def _transform_from_dict(data, key, path):
	value = _field(data, key, path)
	path = "{}.{}".format(path, key) if path else key
	rotation = _reals(value, "rotation", path, 9).reshape(3, 3)
	translation = _reals(value, "translation", path, 3)
	return _located(path, RigidTransform, rotation, translation)

def object_from_dict(data, path="object"):
	"""Parse a ``SceneObject`` from its file representation."""
	object_id = _field(data, "id", path, "str")
	category = _field(data, "category", path, "str")
	center = _reals(data, "center", path, 3)
	dims = _reals(data, "dims", path, 3)
	yaw = _field(data, "yaw", path, "real")
	box = _located(path, Box3D, center, dims, yaw, category)
	return _located(path, SceneObject, object_id, box)

def scene_from_dict(data, max_cameras=DEFAULT_MAX_CAMERAS):
	scene_id = _field(data, "scene_id", "", "str")
	bev_frame = _transform_from_dict(data, "bev_frame", "")
	cameras = []
	roi_refs = []
	for i, item in enumerate(_field(data, "cameras", "", "list")):
		path = "cameras[{}]".format(i)
		camera_id = _field(item, "camera_id", path, "str")
		intrinsics_data = _field(item, "intrinsics", path)
		ipath = path + ".intrinsics"
		intrinsics = _located(ipath, PinholeIntrinsics,
			_field(intrinsics_data, "fx", ipath, "real"),
			_field(intrinsics_data, "fy", ipath, "real"),
			_field(intrinsics_data, "cx", ipath, "real"),
			_field(intrinsics_data, "cy", ipath, "real"),
			_field(intrinsics_data, "width", ipath, "int"),
			_field(intrinsics_data, "height", ipath, "int"))
		world_to_camera = _transform_from_dict(item, "world_to_camera", path)
		cameras.append(_located(path, CameraModel, camera_id, intrinsics, world_to_camera))
		roi_refs.append(_field(item, "roi_mask", path, "str") if "roi_mask" in item else None)
	objects = []
	for i, item in enumerate(_field(data, "objects", "", "list")):
		objects.append(object_from_dict(item, "objects[{}]".format(i)))
	return SceneConfig(scene_id, cameras, bev_frame, objects, roi_refs, max_cameras)

def dumps_scene(scene):
	"""Serialize a scene into text."""
	return json.dumps(scene_to_dict(scene), indent=2) + "\n"

def loads_json(text):
	"""Parse JSON text, raising ``ParseError`` with the line and column."""
	try:
		return json.loads(text)
	except json.JSONDecodeError as e:
		raise ParseError("malformed JSON: {}".format(e.msg), line=e.lineno, column=e.colno)

def loads_scene(text, max_cameras=DEFAULT_MAX_CAMERAS):
	"""Parse a scene from text."""
	return scene_from_dict(loads_json(text), max_cameras)

def load_scene(filepath, max_cameras=DEFAULT_MAX_CAMERAS):
	"""Load a scene file.

	:param filepath: Scene file path.
	:param max_cameras: Maximal camera count allowed.

	:returns: ``SceneConfig``.
	"""
	try:
		scene = loads_scene(FileSystemUtils.load_text(filepath), max_cameras)
	except ValidationError as e:
		e.context.setdefault("path", filepath)
		raise
	loggers.debug("scene loaded", path=filepath, cameras=scene.num_cameras, objects=len(scene.objects))
	return scene

def save_scene(scene, filepath):
	"""Save a scene file."""
	FileSystemUtils.save_text(filepath, dumps_scene(scene))
	loggers.debug("scene saved", path=filepath)

def load_roi_bitmap(filepath):
	"""Load a ROI bitmap from a binary PGM (P5) file.

	:returns: uint8 array of shape (height, width) with values 0 or 255.
	"""
	contents = FileSystemUtils.load_bytes(filepath)
	if not contents.startswith(b"P5"):
		raise ParseError("ROI mask must be a binary PGM (P5) file", path=filepath)
	try:
		with Image.open(io.BytesIO(contents)) as image:
			if image.mode != "L":
				raise ParseError("ROI mask must have one byte per pixel", path=filepath, mode=image.mode)
			bitmap = np.array(image, dtype=np.uint8)
	except OSError as e:
		raise ParseError("cannot decode ROI mask: {}".format(e), path=filepath)
	if not np.all((bitmap == 0) | (bitmap == 255)):
		raise ValidationError("ROI mask values must be 0 or 255", path=filepath)
	return bitmap

def save_roi_bitmap(filepath, bitmap):
	"""Save a ROI bitmap as a binary PGM (P5) file."""
	bitmap = np.asarray(bitmap, dtype=np.uint8)
	buffer = io.BytesIO()
	try:
		Image.fromarray(bitmap).save(buffer, format="PPM")
	except (OSError, ValueError) as e:
		raise FileIOError("cannot encode ROI mask: {}".format(e), path=filepath)
	FileSystemUtils.save_bytes(filepath, buffer.getvalue())

def resolve_roi_path(scene_filepath, roi_ref):
	"""Resolve a ROI reference relative to the folder of the scene file."""
	return os.path.join(os.path.dirname(os.path.abspath(scene_filepath)), roi_ref)
