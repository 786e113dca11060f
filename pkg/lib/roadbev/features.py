"""Camera rotation embedding, BEV position encoding and feature aggregation.

Per-camera 2D features are lifted into the BEV grid through a mapping
table: every hit samples its camera's feature map bilinearly and a cell
takes the mean over its hits.  Optionally each camera's features are first
shifted by an embedding of its orientation in the BEV frame::

	F'_n = F_n + Expand(Embed([sin(theta_n), cos(theta_n)]))

where ``Embed`` is a fixed (c, 2) matrix and ``Expand`` broadcasts over the
feature map.
"""
import math
import struct
import numpy as np
from roadbev.errors import (
	ValidationError, ParseError, NonFinite, IndexOutOfRange, DimensionMismatch, ChannelMismatch,
	MissingFeatureMap, OutOfBounds, OddChannels)
from roadbev.fsio import FileSystemUtils
from roadbev.geometry import camera_yaw_in_frame
from roadbev.grid import CHUNK_ROWS
from roadbev.logging import loggers
from roadbev.workers import run_chunks

__all__ = [
	"FeatureMap", "RotationEmbeddingTable", "BevFeature", "AggregateOptions",
	"rotation_embedding", "apply_rotation_embedding",
	"bilinear_sample", "bilinear_sample_many",
	"position_encoding", "position_encoding_grid",
	"aggregate", "synthesize_feature_maps",
	"dumps_feature_map", "loads_feature_map", "save_feature_map", "load_feature_map",
	"dumps_bev_feature", "loads_bev_feature", "save_bev_feature", "load_bev_feature"]

POSITION_BASE = 10000.0

class FeatureMap:
	"""2D feature map of one camera.

	:ivar data: Array of shape (c, h, w), all finite.
	:ivar camera_index: Index of the camera in the scene.
	:ivar stride: Image pixels per feature pixel.
	:ivar image_size: (width, height) of the camera image in pixels.
	"""
	def __init__(self, data, camera_index, stride, image_size=None):
		self.data = np.array(data, dtype=np.float64)
		self.camera_index = int(camera_index)
		self.stride = float(stride)
		if self.data.ndim != 3 or min(self.data.shape) < 1:
			raise DimensionMismatch("feature map must have shape (c, h, w) with c, h, w >= 1",
				camera_index=self.camera_index, shape=self.data.shape)
		if not np.all(np.isfinite(self.data)):
			raise NonFinite("feature map values must be finite", camera_index=self.camera_index)
		if not (math.isfinite(self.stride) and self.stride > 0):
			raise ValidationError("stride must be positive", camera_index=self.camera_index)
		if self.camera_index < 0:
			raise ValidationError("camera index must not be negative", camera_index=self.camera_index)
		c, h, w = self.data.shape
		self.image_size = tuple(image_size) if image_size is not None else (w * self.stride, h * self.stride)
		self.data.flags.writeable = False

	@classmethod
	def for_image(cls, data, camera_index, image_size):
		"""Create with the stride derived from the image width (``image_width / w``)."""
		data = np.asarray(data)
		return cls(data, camera_index, image_size[0] / data.shape[2], image_size)

	@property
	def channels(self):
		return self.data.shape[0]

	@property
	def height(self):
		return self.data.shape[1]

	@property
	def width(self):
		return self.data.shape[2]

	def replace_data(self, data):
		return FeatureMap(data, self.camera_index, self.stride, self.image_size)

class RotationEmbeddingTable:
	"""Fixed linear embedding of [sin(theta), cos(theta)] into c channels.

	:ivar matrix: Array of shape (c, 2).
	:ivar seed: Seed it was generated from, or None.
	"""
	def __init__(self, matrix, seed=None):
		self.matrix = np.array(matrix, dtype=np.float64)
		self.seed = seed
		if self.matrix.ndim != 2 or self.matrix.shape[1] != 2 or self.matrix.shape[0] < 1:
			raise DimensionMismatch("embedding table must have shape (c, 2)", shape=self.matrix.shape)
		if not np.all(np.isfinite(self.matrix)):
			raise NonFinite("embedding table values must be finite")
		self.matrix.flags.writeable = False

	@classmethod
	def from_seed(cls, seed, channels):
		"""Standard normal table, a deterministic function of (seed, channels)."""
		return cls(np.random.default_rng(seed).standard_normal((channels, 2)), seed)

	@classmethod
	def zeros(cls, channels):
		return cls(np.zeros((channels, 2)))

	@property
	def channels(self):
		return self.matrix.shape[0]

def rotation_embedding(theta, table):
	"""Embedding of a camera orientation angle.

	:returns: ``table.matrix @ [sin(theta), cos(theta)]``, a c-vector.
	"""
	theta = float(theta)
	if not math.isfinite(theta): raise NonFinite("angle must be finite", value=theta)
	return table.matrix[:, 0] * math.sin(theta) + table.matrix[:, 1] * math.cos(theta)

def apply_rotation_embedding(f, theta, table):
	"""Add the rotation embedding to every location of a feature map."""
	if table.channels != f.channels:
		raise ChannelMismatch("embedding table does not match feature channels",
			table=table.channels, channels=f.channels, camera_index=f.camera_index)
	return f.replace_data(f.data + rotation_embedding(theta, table)[:, None, None])

def bilinear_sample_many(f, u, v):
	"""Sample a feature map at many image pixels.

	:param f: ``FeatureMap``.
	:param u: Array of pixel x coordinates.
	:param v: Array of pixel y coordinates.

	:returns: Array of shape (n, c).
	"""
	u = np.asarray(u, dtype=np.float64)
	v = np.asarray(v, dtype=np.float64)
	width, height = f.image_size
	outside = ~((u >= 0) & (u < width) & (v >= 0) & (v < height))
	if np.any(outside):
		i = int(np.argmax(outside))
		raise OutOfBounds("pixel outside the image", camera_index=f.camera_index, u=float(u[i]), v=float(v[i]))

	h, w = f.height, f.width
	fx = np.clip(u / f.stride - 0.5, 0.0, w - 1)
	fy = np.clip(v / f.stride - 0.5, 0.0, h - 1)
	x0 = np.floor(fx).astype(np.int64)
	y0 = np.floor(fy).astype(np.int64)
	x1 = np.minimum(x0 + 1, w - 1)
	y1 = np.minimum(y0 + 1, h - 1)
	ax = (fx - x0)[:, None]
	ay = (fy - y0)[:, None]
	data = f.data
	return (1 - ax) * (1 - ay) * data[:, y0, x0].T + ax * (1 - ay) * data[:, y0, x1].T + \
		(1 - ax) * ay * data[:, y1, x0].T + ax * ay * data[:, y1, x1].T

def bilinear_sample(f, pixel):
	"""Sample a feature map at an image pixel.

	The pixel maps to feature coordinates ``(u/stride - 0.5, v/stride - 0.5)``,
	clamped to the edges.

	:param f: ``FeatureMap``.
	:param pixel: (u, v) in image pixels.

	:returns: c-vector.
	"""
	return bilinear_sample_many(f, [pixel[0]], [pixel[1]])[0]

def _encode(xn, yn, channels):
	if channels < 4 or channels % 4:
		#x and y take c/4 sin/cos pairs each
		raise OddChannels("position encoding needs a channel count divisible by 4", channels=channels)
	pairs = channels // 2
	out = np.empty((channels,) + np.shape(xn), dtype=np.float64)
	for k in range(pairs):
		coordinate = xn if k % 2 == 0 else yn
		omega = POSITION_BASE ** (-2.0 * (k // 2) / pairs)
		angle = 2 * math.pi * omega * coordinate
		out[2 * k] = np.sin(angle)
		out[2 * k + 1] = np.cos(angle)
	return out

def position_encoding(spec, ix, iy, c):
	"""Sinusoidal encoding of a cell's normalized center.

	The center maps to ``((ix + 0.5)/nx, (iy + 0.5)/ny)`` in [0, 1]^2.  Pair
	k of the c/2 sin/cos pairs encodes x for even k and y for odd k, so c
	must be a multiple of 4 for both axes to get the same frequencies.  The
	angle is ``2 pi * 10000^(-2m/(c/2)) * coordinate`` with ``m = k // 2``.

	:returns: c-vector.
	"""
	if not (0 <= ix < spec.nx and 0 <= iy < spec.ny):
		raise IndexOutOfRange("cell index out of range", ix=ix, iy=iy, nx=spec.nx, ny=spec.ny)
	xn = np.array([(ix + 0.5) / spec.nx])
	yn = np.array([(iy + 0.5) / spec.ny])
	return _encode(xn, yn, c)[:, 0]

def position_encoding_grid(spec, c):
	"""Encodings of all cells, shape (c, ny, nx)."""
	xn = (np.arange(spec.nx, dtype=np.float64) + 0.5) / spec.nx
	yn = (np.arange(spec.ny, dtype=np.float64) + 0.5) / spec.ny
	xn, yn = np.meshgrid(xn, yn)
	return _encode(xn, yn, c)

class BevFeature:
	"""Dense BEV feature.

	:ivar data: Array of shape (c, ny, nx).  Cells without hits are zero.
	:ivar hit_count: int64 array of shape (ny, nx).
	"""
	def __init__(self, data, hit_count):
		self.data = np.asarray(data, dtype=np.float64)
		self.hit_count = np.asarray(hit_count, dtype=np.int64)
		if self.data.ndim != 3 or self.data.shape[1:] != self.hit_count.shape:
			raise DimensionMismatch("BEV feature and hit counts differ in shape")
		if np.any(self.data[:, self.hit_count == 0]):
			raise ValidationError("cells without hits must have zero features")

	@property
	def channels(self):
		return self.data.shape[0]

	def cell(self, ix, iy):
		return self.data[:, iy, ix]

	def __eq__(self, other):
		if not isinstance(other, BevFeature): return NotImplemented
		return np.array_equal(self.data, other.data) and np.array_equal(self.hit_count, other.hit_count)

	__hash__ = None

class AggregateOptions:
	"""Aggregation options.

	:ivar use_rotation_embedding: Whether to add the camera rotation embedding.
	:ivar use_position_encoding: Whether to add the cell position encoding.
	:ivar embedding_table: ``RotationEmbeddingTable``, needed with the rotation embedding.
	:ivar threads: Worker count, 0 for one per CPU.
	"""
	def __init__(self, use_rotation_embedding=False, use_position_encoding=True, embedding_table=None, threads=1):
		#config
		self.use_rotation_embedding = bool(use_rotation_embedding)
		self.use_position_encoding = bool(use_position_encoding)
		self.embedding_table = embedding_table
		self.threads = threads

		if self.use_rotation_embedding and self.embedding_table is None:
			raise ValidationError("rotation embedding needs an embedding table", field="embedding_table")

class _CellSummer:
	#sums the samples of a range of cells, left to right in canonical hit order
	def __init__(self, table, maps, channels):
		self.table = table
		self.maps = maps
		self.channels = channels

	def __call__(self, cells):
		cell_begin, cell_end = cells
		offsets = self.table.offsets
		hits = self.table.hits[offsets[cell_begin]:offsets[cell_end]]
		samples = np.empty((len(hits), self.channels), dtype=np.float64)
		cams = hits["camera_index"]
		for cam_index in np.unique(cams):
			where = np.nonzero(cams == cam_index)[0]
			samples[where] = bilinear_sample_many(self.maps[int(cam_index)], hits["u"][where], hits["v"][where])

		counts = np.diff(offsets[cell_begin:cell_end + 1])
		starts = offsets[cell_begin:cell_end] - offsets[cell_begin]
		sums = np.zeros((cell_end - cell_begin, self.channels), dtype=np.float64)
		for j in range(int(counts.max()) if len(counts) else 0):
			cells_j = np.nonzero(counts > j)[0]
			sums[cells_j] += samples[starts[cells_j] + j]
		return sums

def aggregate(features, table, scene, options=None):
	"""Aggregate camera features into a BEV feature.

	Each cell takes the mean of the bilinear samples over all its hits
	(all cameras, all z levels), plus its position encoding when enabled.
	With the rotation embedding, camera n's features are shifted by the
	embedding of ``camera_yaw_in_frame(cam_n, scene.bev_frame)`` first.

	:param features: List of ``FeatureMap``, keyed by their ``camera_index``.
	:param table: ``MappingTable`` built for ``scene``.
	:param scene: ``SceneConfig``.
	:param options: ``AggregateOptions``.

	:returns: ``BevFeature``.
	"""
	if options is None: options = AggregateOptions()
	maps = {}
	for f in features:
		if f.camera_index in maps:
			raise ValidationError("duplicate feature map", camera_index=f.camera_index)
		maps[f.camera_index] = f
	if table.provenance.num_cameras != scene.num_cameras:
		raise DimensionMismatch("mapping table and scene differ in camera count",
			table=table.provenance.num_cameras, scene=scene.num_cameras)
	channels = set(f.channels for f in maps.values())
	if len(channels) > 1:
		raise ChannelMismatch("feature maps differ in channel count", channels=sorted(channels))

	used = [int(i) for i in np.unique(table.hits["camera_index"])]
	for cam_index in used:
		if cam_index not in maps:
			raise MissingFeatureMap("no feature map for an active camera", camera_index=cam_index)
	c = channels.pop() if channels else (options.embedding_table.channels if options.embedding_table else 4)

	used_maps = {}
	for cam_index in used:
		f = maps[cam_index]
		if options.use_rotation_embedding:
			theta = camera_yaw_in_frame(scene.cameras[cam_index], scene.bev_frame)
			f = apply_rotation_embedding(f, theta, options.embedding_table)
		used_maps[cam_index] = f

	grid = table.grid
	step = CHUNK_ROWS * grid.nx
	chunks = [(b, min(b + step, grid.num_cells)) for b in range(0, grid.num_cells, step)]
	sums = np.concatenate(run_chunks(_CellSummer(table, used_maps, c), chunks, options.threads))

	counts = table.counts
	nonempty = counts > 0
	values = np.zeros_like(sums)
	values[nonempty] = sums[nonempty] / counts[nonempty][:, None]
	data = values.T.reshape(c, grid.ny, grid.nx)
	if options.use_position_encoding:
		data = data + np.where(nonempty.reshape(grid.ny, grid.nx), position_encoding_grid(grid, c), 0.0)
	feature = BevFeature(data, counts.reshape(grid.ny, grid.nx))
	loggers.info("aggregation done", cells=grid.num_cells, nonempty=int(nonempty.sum()), channels=c,
		rotation_embedding=options.use_rotation_embedding, position_encoding=options.use_position_encoding)
	return feature

def synthesize_feature_maps(scene, channels, stride, seed):
	"""Deterministic stand-in for backbone features.

	Camera i gets standard normal features drawn from the seed stream
	``(seed, i)``, so a camera's map does not depend on the other cameras.

	:param channels: Channel count c.
	:param stride: Integer stride dividing every image width.

	:returns: List of ``FeatureMap``, one per camera.
	"""
	stride = int(stride)
	maps = []
	for index, cam in enumerate(scene.cameras):
		width, height = cam.intrinsics.width, cam.intrinsics.height
		if stride < 1 or width % stride:
			raise ValidationError("stride must divide the image width", stride=stride, width=width)
		w = width // stride
		h = -(-height // stride)
		data = np.random.default_rng([seed, index]).standard_normal((channels, h, w))
		maps.append(FeatureMap(data, index, stride, (width, height)))
	return maps

_FMAP_HEADER = struct.Struct("<4sIIIIIdII")
_BEVF_HEADER = struct.Struct("<4sIIII")
_VERSION = 1

def dumps_feature_map(f):
	"""Serialize a feature map (FMAP): header, then f32 channel-major data."""
	header = _FMAP_HEADER.pack(b"FMAP", _VERSION, f.channels, f.height, f.width, f.camera_index,
		f.stride, int(f.image_size[0]), int(f.image_size[1]))
	return header + f.data.astype("<f4").tobytes()

def loads_feature_map(contents):
	if len(contents) < _FMAP_HEADER.size: raise ParseError("truncated feature map file")
	magic, version, c, h, w, camera_index, stride, image_width, image_height = _FMAP_HEADER.unpack_from(contents)
	if magic != b"FMAP": raise ParseError("not a feature map file", magic=magic)
	if version != _VERSION: raise ParseError("unsupported feature map version", version=version)
	if len(contents) != _FMAP_HEADER.size + 4 * c * h * w:
		raise ParseError("feature map payload size mismatch", expected=4 * c * h * w)
	data = np.frombuffer(contents, dtype="<f4", offset=_FMAP_HEADER.size).reshape(c, h, w)
	return FeatureMap(data.astype(np.float64), camera_index, stride, (image_width, image_height))

def dumps_bev_feature(feature):
	"""Serialize a BEV feature (BEVF): header, f32 channel-major data, u32 hit counts."""
	c, ny, nx = feature.data.shape
	return _BEVF_HEADER.pack(b"BEVF", _VERSION, c, ny, nx) + \
		feature.data.astype("<f4").tobytes() + feature.hit_count.astype("<u4").tobytes()

def loads_bev_feature(contents):
	if len(contents) < _BEVF_HEADER.size: raise ParseError("truncated BEV feature file")
	magic, version, c, ny, nx = _BEVF_HEADER.unpack_from(contents)
	if magic != b"BEVF": raise ParseError("not a BEV feature file", magic=magic)
	if version != _VERSION: raise ParseError("unsupported BEV feature version", version=version)
	size = 4 * c * ny * nx
	if len(contents) != _BEVF_HEADER.size + size + 4 * ny * nx:
		raise ParseError("BEV feature payload size mismatch")
	data = np.frombuffer(contents, dtype="<f4", count=c * ny * nx, offset=_BEVF_HEADER.size).reshape(c, ny, nx)
	hit_count = np.frombuffer(contents, dtype="<u4", offset=_BEVF_HEADER.size + size).reshape(ny, nx)
	return BevFeature(data.astype(np.float64), hit_count.astype(np.int64))

def save_feature_map(f, filepath):
	FileSystemUtils.save_bytes(filepath, dumps_feature_map(f))

def load_feature_map(filepath):
	return loads_feature_map(FileSystemUtils.load_bytes(filepath))

def save_bev_feature(feature, filepath):
	FileSystemUtils.save_bytes(filepath, dumps_bev_feature(feature))
	loggers.debug("BEV feature saved", path=filepath)

def load_bev_feature(filepath):
	return loads_bev_feature(FileSystemUtils.load_bytes(filepath))
