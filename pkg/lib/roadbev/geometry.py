"""Rigid transforms, pinhole cameras, projection and angle arithmetic.

Conventions used throughout the package:

* A ``RigidTransform`` maps points from a source frame into a target frame,
  ``p_target = R @ p_source + t``.  Camera extrinsics are world->camera and a
  scene's BEV frame is world->BEV.
* Camera frames are x right, y down, z forward (optical axis).
* The world and BEV frames are z up, ground plane at z = 0.
* Angles are radians in (-pi, pi].  [0, 2pi) appears only for display.
"""
import math
import numpy as np
from roadbev.errors import ValidationError, NonFinite, DegeneratePose

__all__ = [
	"ORTHONORMAL_TOLERANCE", "BEHIND_DEPTH", "frozen_array",
	"RigidTransform", "PinholeIntrinsics", "CameraModel", "Box3D", "Category",
	"Projection", "Behind", "BEHIND",
	"compose", "invert", "transform_points",
	"project", "project_points", "unproject",
	"camera_yaw_in_frame", "yaw_in_frame",
	"wrap_angle", "wrap_angles", "to_display_angle",
	"rotation_about_z", "rotate_frame",
	"look_at", "pole_camera"]

ORTHONORMAL_TOLERANCE = 1e-9
BEHIND_DEPTH = 1e-6
DEGENERATE_AXIS_DEG = 1.0

TWO_PI = 2.0 * math.pi

def frozen_array(values, shape, field):
	try:
		array = np.array(values, dtype=np.float64)
	except (TypeError, ValueError):
		raise ValidationError("{} must be numeric".format(field), field=field)
	if array.shape != shape:
		raise ValidationError("{} must have shape {}".format(field, shape), field=field, shape=array.shape)
	if not np.all(np.isfinite(array)):
		raise NonFinite("{} must be finite".format(field), field=field)
	array.flags.writeable = False
	return array

def _matmul(a, b):
	#term by term in a fixed order, so results never depend on batch shape
	if b.ndim == 1:
		return a[:, 0] * b[0] + a[:, 1] * b[1] + a[:, 2] * b[2]
	return a[:, 0:1] * b[0:1, :] + a[:, 1:2] * b[1:2, :] + a[:, 2:3] * b[2:3, :]

class RigidTransform:
	"""Rigid transform (rotation + translation) in 3D.

	It's an immutable value: ``rotation`` (3x3) and ``translation`` (3, meters)
	are read-only arrays.  The rotation is checked on construction to be
	orthonormal with determinant +1 within ``ORTHONORMAL_TOLERANCE``.

	:ivar rotation: 3x3 rotation matrix.
	:ivar translation: Translation vector in meters.
	"""
	def __init__(self, rotation=None, translation=None):
		self.rotation = frozen_array(np.eye(3) if rotation is None else rotation, (3, 3), "rotation")
		self.translation = frozen_array(np.zeros(3) if translation is None else translation, (3,), "translation")

		gram_error = float(np.max(np.abs(self.rotation @ self.rotation.T - np.eye(3))))
		det = float(np.linalg.det(self.rotation))
		if gram_error > ORTHONORMAL_TOLERANCE or abs(det - 1.0) > ORTHONORMAL_TOLERANCE:
			raise ValidationError(
				"rotation must be orthonormal with determinant +1",
				field="rotation", gram_error="{:.3g}".format(gram_error), det="{:.12g}".format(det))

	@classmethod
	def identity(cls):
		return cls()

	@classmethod
	def from_matrix(cls, matrix):
		"""Create from a 4x4 homogeneous matrix."""
		matrix = np.asarray(matrix, dtype=np.float64)
		if matrix.shape != (4, 4):
			raise ValidationError("homogeneous matrix must be 4x4", field="matrix")
		return cls(matrix[:3, :3], matrix[:3, 3])

	def as_matrix(self):
		"""Get the 4x4 homogeneous matrix."""
		matrix = np.eye(4)
		matrix[:3, :3] = self.rotation
		matrix[:3, 3] = self.translation
		return matrix

	def apply(self, points):
		"""Transform points, see ``transform_points()``."""
		return transform_points(self, points)

	def inverse(self):
		return invert(self)

	def __matmul__(self, other):
		return compose(self, other)

	def __eq__(self, other):
		if not isinstance(other, RigidTransform): return NotImplemented
		return np.array_equal(self.rotation, other.rotation) and \
			np.array_equal(self.translation, other.translation)

	__hash__ = None

	def __repr__(self):
		return "RigidTransform(rotation={}, translation={})".format(
			self.rotation.tolist(), self.translation.tolist())

def compose(a, b):
	"""Compose two transforms.

	:returns: The transform applying ``b`` first and then ``a``.
	"""
	return RigidTransform(_matmul(a.rotation, b.rotation), _matmul(a.rotation, b.translation) + a.translation)

def invert(transform):
	"""Invert a transform."""
	rotation = np.ascontiguousarray(transform.rotation.T)
	return RigidTransform(rotation, -_matmul(rotation, transform.translation))

def transform_points(transform, points):
	"""Transform points.

	:param transform: A ``RigidTransform``.
	:param points: Array of shape (..., 3).

	:returns: Array of shape (..., 3) with the transformed points.  Each
		component is evaluated term by term in a fixed order, so a point gets
		bit-identical results whatever batch it is part of.
	"""
	points = np.asarray(points, dtype=np.float64)
	rotation = transform.rotation
	translation = transform.translation
	x = points[..., 0]
	y = points[..., 1]
	z = points[..., 2]
	out = np.empty(points.shape, dtype=np.float64)
	for i in range(3):
		out[..., i] = rotation[i, 0] * x + rotation[i, 1] * y + rotation[i, 2] * z + translation[i]
	return out

class PinholeIntrinsics:
	"""Intrinsic parameters of a pinhole camera.

	:ivar fx: Focal length along x, in pixels.
	:ivar fy: Focal length along y, in pixels.
	:ivar cx: Principal point x, in pixels.
	:ivar cy: Principal point y, in pixels.
	:ivar width: Image width in pixels.
	:ivar height: Image height in pixels.
	"""
	def __init__(self, fx, fy, cx, cy, width, height):
		self.fx = float(fx)
		self.fy = float(fy)
		self.cx = float(cx)
		self.cy = float(cy)
		self.width = int(width)
		self.height = int(height)

		for name in ("fx", "fy", "cx", "cy"):
			if not math.isfinite(getattr(self, name)):
				raise NonFinite("{} must be finite".format(name), field=name)
		if self.width < 1 or self.height < 1 or self.width != width or self.height != height:
			raise ValidationError("image size must be positive integers", field="width/height")
		if not (self.fx > 0 and self.fy > 0):
			raise ValidationError("focal lengths must be positive", field="fx/fy")
		if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
			raise ValidationError("principal point must lie inside the image", field="cx/cy")

	@classmethod
	def from_fov(cls, hfov_deg, width, height):
		"""Create intrinsics with square pixels and the principal point at the image center.

		:param hfov_deg: Horizontal field of view in degrees.
		"""
		f = 0.5 * width / math.tan(math.radians(hfov_deg) / 2)
		return cls(f, f, width / 2.0, height / 2.0, width, height)

	@property
	def K(self):
		"""The 3x3 intrinsic matrix."""
		return np.array([[self.fx, 0., self.cx], [0., self.fy, self.cy], [0., 0., 1.]])

	def contains(self, u, v):
		"""Whether pixel (u, v) lies inside the image, ``0 <= u < width``, ``0 <= v < height``."""
		return (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)

	def __eq__(self, other):
		if not isinstance(other, PinholeIntrinsics): return NotImplemented
		return (self.fx, self.fy, self.cx, self.cy, self.width, self.height) == \
			(other.fx, other.fy, other.cx, other.cy, other.width, other.height)

	__hash__ = None

	def __repr__(self):
		return "PinholeIntrinsics(fx={}, fy={}, cx={}, cy={}, width={}, height={})".format(
			self.fx, self.fy, self.cx, self.cy, self.width, self.height)

class CameraModel:
	"""A calibrated pinhole camera.

	:ivar camera_id: Identifier, unique within a scene.
	:ivar intrinsics: ``PinholeIntrinsics``.
	:ivar world_to_camera: Extrinsics as a ``RigidTransform``.
	"""
	def __init__(self, camera_id, intrinsics, world_to_camera):
		self.camera_id = str(camera_id)
		self.intrinsics = intrinsics
		self.world_to_camera = world_to_camera
		if not self.camera_id:
			raise ValidationError("camera id must not be empty", field="camera_id")

	@property
	def center(self):
		"""Camera center in world coordinates."""
		return invert(self.world_to_camera).translation

	@property
	def optical_axis(self):
		"""Unit optical axis in world coordinates."""
		return np.array(self.world_to_camera.rotation[2])

	def __eq__(self, other):
		if not isinstance(other, CameraModel): return NotImplemented
		return self.camera_id == other.camera_id and self.intrinsics == other.intrinsics and \
			self.world_to_camera == other.world_to_camera

	__hash__ = None

	def __repr__(self):
		return "CameraModel({!r}, {!r})".format(self.camera_id, self.intrinsics)

class Projection:
	"""Projection result of a point in front of a camera."""
	__slots__ = ("u", "v", "depth")

	def __init__(self, u, v, depth):
		self.u = u
		self.v = v
		self.depth = depth

	@property
	def pixel(self):
		return (self.u, self.v)

	def __repr__(self):
		return "Projection(u={}, v={}, depth={})".format(self.u, self.v, self.depth)

class Behind:
	"""Projection result of a point at or behind the optical plane."""
	def __bool__(self):
		return False

	def __repr__(self):
		return "BEHIND"

BEHIND = Behind()

def project_points(cam, points):
	"""Project world points into a camera.

	:param cam: ``CameraModel``.
	:param points: World points of shape (..., 3).

	:returns: Tuple (u, v, depth) of arrays with shape (...).  Pixels of
		points with ``depth <= 1e-6`` are meaningless; callers filter them.
	"""
	p = transform_points(cam.world_to_camera, points)
	intrinsics = cam.intrinsics
	depth = p[..., 2]
	with np.errstate(divide="ignore", invalid="ignore"):
		u = intrinsics.fx * (p[..., 0] / depth) + intrinsics.cx
		v = intrinsics.fy * (p[..., 1] / depth) + intrinsics.cy
	return u, v, depth

def project(cam, world_point):
	"""Project a world point into a camera.

	:param cam: ``CameraModel``.
	:param world_point: 3-vector in world coordinates (meters).

	:returns: ``Projection`` with continuous pixel coordinates and depth, or
		``BEHIND`` when the point is at or behind the optical plane.  The
		pixel may lie outside the image; visibility is decided by callers.
	"""
	point = frozen_array(world_point, (3,), "world_point")
	u, v, depth = project_points(cam, point[None, :])
	if not depth[0] > BEHIND_DEPTH: return BEHIND
	return Projection(float(u[0]), float(v[0]), float(depth[0]))

def unproject(cam, u, v, depth):
	"""Lift a pixel at given depth back to a world point (inverse of ``project()``)."""
	intrinsics = cam.intrinsics
	p = np.array([
		(u - intrinsics.cx) / intrinsics.fx * depth,
		(v - intrinsics.cy) / intrinsics.fy * depth,
		depth])
	return transform_points(invert(cam.world_to_camera), p)

def wrap_angle(a):
	"""Wrap an angle into (-pi, pi].

	:param a: Angle in radians.

	:returns: The congruent angle in (-pi, pi].  Angles already in range are
		returned unchanged, so the function is idempotent.
	"""
	a = float(a)
	if not math.isfinite(a): raise NonFinite("angle must be finite", value=a)
	if -math.pi < a <= math.pi: return a
	w = math.fmod(a + math.pi, TWO_PI)
	if w <= 0.0: w += TWO_PI
	w -= math.pi
	if w <= -math.pi: w = math.pi
	return w

def wrap_angles(a):
	"""Vectorized ``wrap_angle()`` over an array."""
	a = np.asarray(a, dtype=np.float64)
	if not np.all(np.isfinite(a)): raise NonFinite("angles must be finite")
	w = np.mod(a + math.pi, TWO_PI)
	w = np.where(w <= 0.0, w + TWO_PI, w) - math.pi
	w = np.where(w <= -math.pi, math.pi, w)
	return np.where((a > -math.pi) & (a <= math.pi), a, w)

def to_display_angle(a):
	"""Convert an angle into the [0, 2pi) display convention."""
	w = wrap_angle(a)
	if w < 0.0: w += TWO_PI
	if w >= TWO_PI: w = 0.0
	return w

_QUARTER_TURNS = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]

def rotation_about_z(psi):
	"""Rotation matrix of angle ``psi`` about the vertical axis.

	Multiples of pi/2 give exact 0/+-1 entries.
	"""
	psi = float(psi)
	quarters = psi / (math.pi / 2)
	k = round(quarters)
	if abs(quarters - k) < 1e-12:
		c, s = _QUARTER_TURNS[int(k) % 4]
	else:
		c, s = math.cos(psi), math.sin(psi)
	return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

def rotate_frame(frame, psi):
	"""Rotate a frame by ``psi`` about its vertical axis.

	Coordinates expressed in the rotated frame are the old coordinates
	rotated by ``-psi``, so orientation angles measured in it drop by ``psi``.

	:param frame: World->frame ``RigidTransform``.
	:param psi: Rotation angle in radians.
	"""
	return compose(RigidTransform(rotation_about_z(-psi)), frame)

def camera_yaw_in_frame(cam, frame):
	"""Orientation angle of a camera in a frame.

	The camera orientation is the ground-plane projection of its optical
	axis; the angle is measured about the frame's vertical axis from the
	frame's X axis.

	:param cam: ``CameraModel``.
	:param frame: World->frame ``RigidTransform`` (eg. the BEV frame).

	:returns: Angle in (-pi, pi].
	"""
	axis = _matmul(frame.rotation, cam.world_to_camera.rotation[2])
	horizontal = math.hypot(axis[0], axis[1])
	if horizontal <= math.sin(math.radians(DEGENERATE_AXIS_DEG)) * float(np.linalg.norm(axis)):
		raise DegeneratePose("optical axis is within 1 degree of vertical", camera_id=cam.camera_id)
	return wrap_angle(math.atan2(axis[1], axis[0]))

def yaw_in_frame(yaw, frame):
	"""Re-express a heading angle measured in one frame in another frame.

	:param yaw: Heading angle about the vertical axis in the source frame.
	:param frame: Source->target ``RigidTransform``.
	"""
	direction = _matmul(frame.rotation, np.array([math.cos(yaw), math.sin(yaw), 0.0]))
	return wrap_angle(math.atan2(direction[1], direction[0]))

def look_at(position, target, up=(0.0, 0.0, 1.0)):
	"""World->camera transform of a camera at ``position`` looking at ``target``."""
	position = np.asarray(position, dtype=np.float64)
	forward = np.asarray(target, dtype=np.float64) - position
	norm = np.linalg.norm(forward)
	if norm == 0: raise DegeneratePose("camera target coincides with its position")
	forward = forward / norm
	right = np.cross(forward, np.asarray(up, dtype=np.float64))
	norm = np.linalg.norm(right)
	if norm < 1e-9: raise DegeneratePose("optical axis is parallel to the up vector")
	right = right / norm
	down = np.cross(forward, right)
	rotation = np.stack([right, down, forward])
	return RigidTransform(rotation, -_matmul(rotation, position))

def pole_camera(camera_id, intrinsics, ground_xy, height, heading, pitch):
	"""Camera on a pole.

	:param ground_xy: Pole foot (x, y) in world, meters.
	:param height: Mounting height in meters.
	:param heading: Heading of the optical axis about the vertical axis, radians.
	:param pitch: Downward pitch of the optical axis, radians.
	"""
	position = np.array([ground_xy[0], ground_xy[1], height], dtype=np.float64)
	forward = np.array([
		math.cos(pitch) * math.cos(heading),
		math.cos(pitch) * math.sin(heading),
		-math.sin(pitch)])
	return CameraModel(camera_id, intrinsics, look_at(position, position + forward))

class Category:
	"""Object categories.

	Subtypes are grouped into Vehicle, Cyclist and Pedestrian.  The group
	names are valid categories by themselves.
	"""
	CAR = "car"
	VAN = "van"
	BUS = "bus"
	TRUCK = "truck"
	CYCLIST = "cyclist"
	MOTORCYCLIST = "motorcyclist"
	TRICYCLIST = "tricyclist"
	PEDESTRIAN = "pedestrian"
	VEHICLE = "vehicle"

	GROUPS = {
		VEHICLE: (CAR, VAN, BUS, TRUCK),
		CYCLIST: (CYCLIST, MOTORCYCLIST, TRICYCLIST),
		PEDESTRIAN: (PEDESTRIAN,)
	}

	ALL = (CAR, VAN, BUS, TRUCK, CYCLIST, MOTORCYCLIST, TRICYCLIST, PEDESTRIAN, VEHICLE)

	#typical length/width/height in meters
	DIMS = {
		CAR: (4.5, 1.8, 1.5),
		VAN: (5.2, 2.0, 2.2),
		BUS: (11.0, 2.5, 3.2),
		TRUCK: (9.0, 2.5, 3.5),
		CYCLIST: (1.8, 0.6, 1.7),
		MOTORCYCLIST: (2.0, 0.8, 1.6),
		TRICYCLIST: (2.6, 1.2, 1.7),
		PEDESTRIAN: (0.6, 0.6, 1.7),
		VEHICLE: (4.5, 1.8, 1.5)
	}

	@classmethod
	def validate(cls, category):
		if category not in cls.ALL:
			raise ValidationError("unknown category: {}".format(category), field="category")
		return category

	@classmethod
	def group_of(cls, category):
		"""Get the group (vehicle, cyclist or pedestrian) of a category."""
		for group, members in cls.GROUPS.items():
			if category == group or category in members: return group
		raise ValidationError("unknown category: {}".format(category), field="category")

class Box3D:
	"""3D bounding box.

	:ivar center: Box center (3, meters) in the frame it is expressed in.
	:ivar dims: Length, width, height in meters, all positive.
	:ivar yaw: Heading of the length axis about the vertical axis, radians,
		always stored wrapped to (-pi, pi].
	:ivar category: One of ``Category.ALL``.
	"""
	def __init__(self, center, dims, yaw, category):
		self.center = frozen_array(center, (3,), "center")
		self.dims = frozen_array(dims, (3,), "dims")
		self.yaw = wrap_angle(yaw)
		self.category = Category.validate(category)
		if not np.all(self.dims > 0):
			raise ValidationError("box dims must be strictly positive", field="dims")

	def replace(self, center=None, dims=None, yaw=None, category=None):
		"""Get a copy with some fields replaced."""
		return Box3D(
			self.center if center is None else center,
			self.dims if dims is None else dims,
			self.yaw if yaw is None else yaw,
			self.category if category is None else category)

	@property
	def volume(self):
		return float(self.dims[0] * self.dims[1] * self.dims[2])

	def corners(self):
		"""The 8 corners, shape (8, 3), bottom face first."""
		l, w, h = self.dims / 2.0
		local = np.array([
			[l, w, -h], [l, -w, -h], [-l, -w, -h], [-l, w, -h],
			[l, w, h], [l, -w, h], [-l, -w, h], [-l, w, h]])
		return transform_points(RigidTransform(rotation_about_z(self.yaw), self.center), local)

	def footprint(self):
		"""The 4 ground footprint corners (x, y), shape (4, 2)."""
		return self.corners()[:4, :2]

	def __eq__(self, other):
		if not isinstance(other, Box3D): return NotImplemented
		return np.array_equal(self.center, other.center) and np.array_equal(self.dims, other.dims) and \
			self.yaw == other.yaw and self.category == other.category

	__hash__ = None

	def __repr__(self):
		return "Box3D(center={}, dims={}, yaw={}, category={!r})".format(
			self.center.tolist(), self.dims.tolist(), self.yaw, self.category)
