"""BEV grid, reference points and the masked 2D-3D mapping table.

Cells are addressed by (ix, iy) with ``0 <= ix < nx``, ``0 <= iy < ny``
and linearized as ``iy * nx + ix``.  Every cell carries a pillar of
reference points, one per z sample.  Projecting them into the active
cameras gives the hits of the cell.
"""
import hashlib
import math
import struct
import numpy as np
from roadbev.errors import (
	ValidationError, ParseError, NonFinite, IndexOutOfRange, MaskShapeMismatch,
	AllCamerasMasked, DimensionMismatch)
from roadbev.fsio import FileSystemUtils
from roadbev.geometry import invert, transform_points, project_points, BEHIND_DEPTH
from roadbev.logging import loggers
from roadbev.scene import load_roi_bitmap, resolve_roi_path
from roadbev.workers import run_chunks

__all__ = [
	"DEFAULT_Z_SAMPLES",
	"BevGridSpec", "CamMask", "RoiMask", "Provenance", "MappingTable", "CoverageStats",
	"cell_center", "cell_centers", "cell_of_point", "reference_points",
	"build_mapping", "coverage_stats", "rotate_table",
	"dumps_mapping", "loads_mapping", "save_mapping", "load_mapping"]

DEFAULT_Z_SAMPLES = (0.0, 1.0, 2.0, 3.0)

#rows of cells per work chunk
CHUNK_ROWS = 16

class BevGridSpec:
	"""BEV grid specification.

	:ivar nx: Cell count along X.
	:ivar ny: Cell count along Y.
	:ivar x_range: (min, max) along X in meters, BEV frame.
	:ivar y_range: (min, max) along Y in meters, BEV frame.
	:ivar z_samples: Tuple of strictly increasing reference heights in meters.
	"""
	def __init__(self, nx, ny, x_range, y_range, z_samples=DEFAULT_Z_SAMPLES):
		#config
		self.nx = int(nx)
		self.ny = int(ny)
		self.x_range = (float(x_range[0]), float(x_range[1]))
		self.y_range = (float(y_range[0]), float(y_range[1]))
		self.z_samples = tuple(float(z) for z in z_samples)

		#validate
		if self.nx < 1 or self.ny < 1 or self.nx != nx or self.ny != ny:
			raise ValidationError("cell counts must be positive integers", field="nx/ny")
		for name, (lo, hi) in (("x_range", self.x_range), ("y_range", self.y_range)):
			if not (math.isfinite(lo) and math.isfinite(hi)):
				raise NonFinite("grid range must be finite", field=name)
			if not lo < hi:
				raise ValidationError("grid range must not be degenerate", field=name)
		if not self.z_samples:
			raise ValidationError("z samples must not be empty", field="z_samples")
		if not all(math.isfinite(z) for z in self.z_samples):
			raise NonFinite("z samples must be finite", field="z_samples")
		if any(b <= a for a, b in zip(self.z_samples, self.z_samples[1:])):
			raise ValidationError("z samples must be strictly increasing", field="z_samples")
		if len(self.z_samples) > 0xffff:
			raise ValidationError("too many z samples", field="z_samples")

	@classmethod
	def roscenes(cls, z_samples=DEFAULT_Z_SAMPLES):
		"""Highway benchmark grid, 500x500 over X [-160, 160], Y [-20, 800]."""
		return cls(500, 500, (-160.0, 160.0), (-20.0, 800.0), z_samples)

	@classmethod
	def urban(cls, z_samples=DEFAULT_Z_SAMPLES):
		"""Urban intersection grid, 300x300 over X [-170, 130], Y [-80, 220]."""
		return cls(300, 300, (-170.0, 130.0), (-80.0, 220.0), z_samples)

	@property
	def dx(self):
		return (self.x_range[1] - self.x_range[0]) / self.nx

	@property
	def dy(self):
		return (self.y_range[1] - self.y_range[0]) / self.ny

	@property
	def num_cells(self):
		return self.nx * self.ny

	@property
	def num_points(self):
		return self.nx * self.ny * len(self.z_samples)

	def is_square_symmetric(self):
		"""Whether the grid is square and centered on the frame origin."""
		lo, hi = self.x_range
		return self.nx == self.ny and lo == -hi and self.y_range == self.x_range

	def __eq__(self, other):
		if not isinstance(other, BevGridSpec): return NotImplemented
		return (self.nx, self.ny, self.x_range, self.y_range, self.z_samples) == \
			(other.nx, other.ny, other.x_range, other.y_range, other.z_samples)

	__hash__ = None

	def __repr__(self):
		return "BevGridSpec(nx={}, ny={}, x_range={}, y_range={}, z_samples={})".format(
			self.nx, self.ny, self.x_range, self.y_range, self.z_samples)

def _axis_centers(value_range, n, index):
	#midpoint form keeps origin-centered grids exactly symmetric, so quarter turns permute cells without rounding
	lo, hi = value_range
	return 0.5 * (lo + hi) + (index + 0.5 - 0.5 * n) * ((hi - lo) / n)

def cell_center(spec, ix, iy):
	"""Center of a cell.

	:returns: (x, y) in meters, BEV frame.
	"""
	if not (0 <= ix < spec.nx and 0 <= iy < spec.ny):
		raise IndexOutOfRange("cell index out of range", ix=ix, iy=iy, nx=spec.nx, ny=spec.ny)
	return (
		float(_axis_centers(spec.x_range, spec.nx, np.float64(int(ix)))),
		float(_axis_centers(spec.y_range, spec.ny, np.float64(int(iy)))))

def cell_centers(spec):
	"""Centers of all cells.

	:returns: Tuple (xs, ys) of arrays with shape (nx,) and (ny,).
	"""
	xs = _axis_centers(spec.x_range, spec.nx, np.arange(spec.nx, dtype=np.float64))
	ys = _axis_centers(spec.y_range, spec.ny, np.arange(spec.ny, dtype=np.float64))
	return xs, ys

def cell_of_point(spec, x, y):
	"""Cell containing a BEV point.

	:returns: (ix, iy), or None when the point is outside the grid.
	"""
	ix = int(math.floor((x - spec.x_range[0]) / spec.dx))
	iy = int(math.floor((y - spec.y_range[0]) / spec.dy))
	if not (0 <= ix < spec.nx and 0 <= iy < spec.ny): return None
	return (ix, iy)

def _pillar_points(spec, row_begin, row_end):
	xs, ys = cell_centers(spec)
	zs = np.array(spec.z_samples)
	rows = row_end - row_begin
	points = np.empty((rows, spec.nx, len(zs), 3), dtype=np.float64)
	points[..., 0] = xs[None, :, None]
	points[..., 1] = ys[row_begin:row_end, None, None]
	points[..., 2] = zs[None, None, :]
	return points

def reference_points(spec):
	"""Reference points of all cells.

	:returns: Tuple (cell_index, z_level, points) ordered by cell and then z
		level; ``points`` has shape (nx*ny*nz, 3) in the BEV frame.
	"""
	nz = len(spec.z_samples)
	points = _pillar_points(spec, 0, spec.ny).reshape(-1, 3)
	cell_index = np.repeat(np.arange(spec.num_cells, dtype=np.int64), nz)
	z_level = np.tile(np.arange(nz, dtype=np.int64), spec.num_cells)
	return cell_index, z_level, points

class CamMask:
	"""Active flag per camera, aligned with the scene's camera order.

	:ivar active: Tuple of bools, at least one True.
	"""
	def __init__(self, active):
		self.active = tuple(bool(a) for a in active)
		if not any(self.active):
			raise AllCamerasMasked("at least one camera must be active", cameras=len(self.active))

	@classmethod
	def all_active(cls, num_cameras):
		return cls([True] * num_cameras)

	@classmethod
	def from_bits(cls, bits):
		"""Create from a bit string such as ``"1101"``, one character per camera."""
		if not bits or any(ch not in "01" for ch in bits):
			raise ValidationError("camera mask must be a string of 0 and 1", field="cam_mask", value=bits)
		return cls([ch == "1" for ch in bits])

	@classmethod
	def random(cls, rng, num_cameras):
		"""Random training mask with between 1 and ``num_cameras`` active cameras.

		:param rng: ``numpy.random.Generator``.
		"""
		count = int(rng.integers(1, num_cameras + 1))
		chosen = set(int(i) for i in rng.choice(num_cameras, size=count, replace=False))
		return cls([i in chosen for i in range(num_cameras)])

	@property
	def bits(self):
		return "".join("1" if a else "0" for a in self.active)

	def active_indices(self):
		return [i for i, a in enumerate(self.active) if a]

	def digest(self):
		return hashlib.sha256(self.bits.encode("ascii")).digest()

	def __len__(self):
		return len(self.active)

	def __eq__(self, other):
		if not isinstance(other, CamMask): return NotImplemented
		return self.active == other.active

	__hash__ = None

	def __repr__(self):
		return "CamMask({!r})".format(self.bits)

class RoiMask:
	"""Per-camera ROI bitmaps.

	A bitmap is a uint8 array of shape (height, width) holding 255 inside
	the ROI and 0 outside.  None stands for a camera without ROI (all 255).

	:ivar bitmaps: Tuple of bitmaps (or None), aligned with the cameras.
	"""
	def __init__(self, bitmaps):
		frozen = []
		for index, bitmap in enumerate(bitmaps):
			if bitmap is not None:
				bitmap = np.array(bitmap, dtype=np.uint8)
				if bitmap.ndim != 2:
					raise MaskShapeMismatch("ROI bitmap must be 2D", camera_index=index)
				if not np.all((bitmap == 0) | (bitmap == 255)):
					raise ValidationError("ROI bitmap values must be 0 or 255", camera_index=index)
				bitmap.flags.writeable = False
			frozen.append(bitmap)
		self.bitmaps = tuple(frozen)

	@classmethod
	def filled(cls, scene, value=255):
		"""ROI mask with every pixel of every camera set to ``value`` (0 or 255)."""
		return cls([
			np.full((cam.intrinsics.height, cam.intrinsics.width), value, dtype=np.uint8)
			for cam in scene.cameras])

	@classmethod
	def from_scene(cls, scene, scene_filepath=None, roi_dir=None):
		"""Load the ROI bitmaps of a scene.

		With ``roi_dir``, camera ``<camera_id>`` takes ``<roi_dir>/<camera_id>.pgm``
		when that file exists.  Otherwise the camera's ``roi_mask`` reference is
		resolved against the folder of the scene file.  Cameras with neither
		have no ROI.
		"""
		bitmaps = []
		for cam, roi_ref in zip(scene.cameras, scene.roi_refs):
			filepath = None
			if roi_dir is not None:
				candidate = "{}/{}.pgm".format(roi_dir.rstrip("/"), cam.camera_id)
				if FileSystemUtils.file_exists(candidate): filepath = candidate
			if filepath is None and roi_ref is not None:
				filepath = resolve_roi_path(scene_filepath or ".", roi_ref)
			bitmaps.append(load_roi_bitmap(filepath) if filepath is not None else None)
			if filepath is None: loggers.debug("camera has no ROI", camera_id=cam.camera_id)
		return cls(bitmaps)

	def intersect(self, other):
		"""Pixelwise AND of two ROI masks."""
		if len(self.bitmaps) != len(other.bitmaps):
			raise MaskShapeMismatch("ROI masks cover different camera counts")
		bitmaps = []
		for index, (a, b) in enumerate(zip(self.bitmaps, other.bitmaps)):
			if a is None or b is None:
				bitmaps.append(b if a is None else a)
				continue
			if a.shape != b.shape:
				raise MaskShapeMismatch("ROI bitmaps differ in size", camera_index=index)
			bitmaps.append(np.bitwise_and(a, b))
		return RoiMask(bitmaps)

	def digest(self):
		h = hashlib.sha256()
		for bitmap in self.bitmaps:
			if bitmap is None:
				h.update(b"none;")
			else:
				h.update("{}x{};".format(bitmap.shape[1], bitmap.shape[0]).encode("ascii"))
				h.update(bitmap.tobytes())
		return h.digest()

	def __len__(self):
		return len(self.bitmaps)

_NO_ROI_DIGEST = hashlib.sha256(b"no-roi").digest()

class Provenance:
	"""Where a mapping table comes from.

	:ivar scene_id: Scene id.
	:ivar num_cameras: Camera count of the scene.
	:ivar cam_mask_bits: CamMask bit string.
	:ivar cam_mask_digest: SHA-256 digest of the CamMask.
	:ivar roi_digest: SHA-256 digest of the RoiMask.
	"""
	def __init__(self, scene_id, num_cameras, cam_mask_bits, cam_mask_digest, roi_digest):
		self.scene_id = scene_id
		self.num_cameras = num_cameras
		self.cam_mask_bits = cam_mask_bits
		self.cam_mask_digest = cam_mask_digest
		self.roi_digest = roi_digest

	def __eq__(self, other):
		if not isinstance(other, Provenance): return NotImplemented
		return vars(self) == vars(other)

	__hash__ = None

class MappingTable:
	"""Cell to (camera, pixel, z level) hits.

	Hits are stored flat in canonical order (cell, camera index, z level),
	with ``offsets[c]:offsets[c+1]`` the hits of linear cell ``c``.

	:ivar grid: ``BevGridSpec``.
	:ivar offsets: int64 array of shape (nx*ny+1,).
	:ivar hits: Structured array of ``HIT_DTYPE``.
	:ivar provenance: ``Provenance``.
	"""
	HIT_DTYPE = np.dtype([("camera_index", "<u2"), ("z_level", "<u2"), ("u", "<f8"), ("v", "<f8")])

	def __init__(self, grid, offsets, hits, provenance):
		self.grid = grid
		self.offsets = np.asarray(offsets, dtype=np.int64)
		self.hits = np.asarray(hits, dtype=self.HIT_DTYPE)
		self.provenance = provenance
		if self.offsets.shape != (grid.num_cells + 1,) or self.offsets[0] != 0 or self.offsets[-1] != len(self.hits):
			raise DimensionMismatch("hit offsets do not match the grid", cells=grid.num_cells)
		self.offsets.flags.writeable = False
		self.hits.flags.writeable = False

	@classmethod
	def from_counts(cls, grid, counts, hits, provenance):
		offsets = np.zeros(grid.num_cells + 1, dtype=np.int64)
		np.cumsum(counts, out=offsets[1:])
		return cls(grid, offsets, hits, provenance)

	@property
	def counts(self):
		"""Hit count per linear cell."""
		return np.diff(self.offsets)

	@property
	def num_hits(self):
		return len(self.hits)

	def hit_cells(self):
		"""Linear cell index of every hit."""
		return np.repeat(np.arange(self.grid.num_cells, dtype=np.int64), self.counts)

	def cell_hits(self, ix, iy):
		"""Hits of a cell, as a structured array."""
		if not (0 <= ix < self.grid.nx and 0 <= iy < self.grid.ny):
			raise IndexOutOfRange("cell index out of range", ix=ix, iy=iy)
		c = iy * self.grid.nx + ix
		return self.hits[self.offsets[c]:self.offsets[c + 1]]

	def filter(self, keep):
		"""Get a table holding only the hits where ``keep`` is True."""
		keep = np.asarray(keep, dtype=bool)
		counts = np.bincount(self.hit_cells()[keep], minlength=self.grid.num_cells)
		return MappingTable.from_counts(self.grid, counts, self.hits[keep], self.provenance)

	def reindexed(self, index_map):
		"""Get a table with camera indices renumbered.

		:param index_map: Sequence giving the new index of every old index.
			It must be increasing over the cameras that have hits, so the
			canonical order is kept.
		"""
		index_map = np.asarray(index_map, dtype=np.int64)
		hits = self.hits.copy()
		hits["camera_index"] = index_map[self.hits["camera_index"]]
		return MappingTable(self.grid, self.offsets, hits, self.provenance)

	def same_hits(self, other):
		"""Whether two tables have the same grid and bit-identical hits."""
		return self.grid == other.grid and np.array_equal(self.offsets, other.offsets) and \
			self.hits.tobytes() == other.hits.tobytes()

	def __eq__(self, other):
		if not isinstance(other, MappingTable): return NotImplemented
		return self.same_hits(other)

	__hash__ = None

	def __repr__(self):
		return "MappingTable({!r}, hits={})".format(self.grid, self.num_hits)

def _check_masks(scene, cam_mask, roi_mask):
	if cam_mask is None: cam_mask = CamMask.all_active(scene.num_cameras)
	if len(cam_mask) != scene.num_cameras:
		raise MaskShapeMismatch("camera mask length differs from camera count",
			mask=len(cam_mask), cameras=scene.num_cameras)
	if roi_mask is not None:
		if len(roi_mask) != scene.num_cameras:
			raise MaskShapeMismatch("ROI mask count differs from camera count",
				masks=len(roi_mask), cameras=scene.num_cameras)
		for index, (cam, bitmap) in enumerate(zip(scene.cameras, roi_mask.bitmaps)):
			if bitmap is None: continue
			if bitmap.shape != (cam.intrinsics.height, cam.intrinsics.width):
				raise MaskShapeMismatch("ROI bitmap size differs from image size", camera_index=index,
					bitmap="{}x{}".format(bitmap.shape[1], bitmap.shape[0]),
					image="{}x{}".format(cam.intrinsics.width, cam.intrinsics.height))
	return cam_mask

class _RowMapper:
	#maps a block of grid rows, independent of how rows are chunked
	def __init__(self, scene, spec, cam_mask, roi_mask):
		self.scene = scene
		self.spec = spec
		self.bev_to_world = invert(scene.bev_frame)
		self.active = cam_mask.active_indices()
		self.bitmaps = roi_mask.bitmaps if roi_mask is not None else (None,) * scene.num_cameras

	def __call__(self, rows):
		row_begin, row_end = rows
		spec = self.spec
		nz = len(spec.z_samples)
		world = transform_points(self.bev_to_world, _pillar_points(spec, row_begin, row_end))
		shape = world.shape[:3]
		cell = np.broadcast_to(
			(np.arange(row_begin, row_end, dtype=np.int64)[:, None, None] * spec.nx +
			np.arange(spec.nx, dtype=np.int64)[None, :, None]), shape)
		z_level = np.broadcast_to(np.arange(nz, dtype=np.int64)[None, None, :], shape)

		parts = []
		for cam_index in self.active:
			cam = self.scene.cameras[cam_index]
			u, v, depth = project_points(cam, world)
			ok = depth > BEHIND_DEPTH
			ok &= cam.intrinsics.contains(np.where(ok, u, -1.0), np.where(ok, v, -1.0))
			bitmap = self.bitmaps[cam_index]
			if bitmap is not None and np.any(ok):
				where = np.nonzero(ok)
				pu = np.clip(np.floor(u[where]), 0, cam.intrinsics.width - 1).astype(np.int64)
				pv = np.clip(np.floor(v[where]), 0, cam.intrinsics.height - 1).astype(np.int64)
				inside = bitmap[pv, pu] == 255
				ok[tuple(w[~inside] for w in where)] = False
			parts.append((cell[ok], np.full(int(ok.sum()), cam_index, dtype=np.int64), z_level[ok], u[ok], v[ok]))

		if parts:
			cells, cams, zs, us, vs = (np.concatenate(p) for p in zip(*parts))
		else:
			cells = cams = zs = np.zeros(0, dtype=np.int64)
			us = vs = np.zeros(0, dtype=np.float64)
		order = np.lexsort((zs, cams, cells))
		hits = np.empty(len(order), dtype=MappingTable.HIT_DTYPE)
		hits["camera_index"] = cams[order]
		hits["z_level"] = zs[order]
		hits["u"] = us[order]
		hits["v"] = vs[order]
		first_cell = row_begin * spec.nx
		counts = np.bincount(cells - first_cell, minlength=(row_end - row_begin) * spec.nx)
		return counts, hits

def build_mapping(scene, spec, cam_mask=None, roi_mask=None, threads=1):
	"""Build the masked 2D-3D mapping table.

	Every reference point is taken from the BEV frame to the world and
	projected into each active camera.  It is a hit of its cell when the
	depth is positive, the pixel lies inside the image and the ROI bitmap
	at the nearest pixel is 255.

	:param scene: ``SceneConfig``.
	:param spec: ``BevGridSpec``.
	:param cam_mask: ``CamMask``.  If it's None, all cameras are active.
	:param roi_mask: ``RoiMask``.  If it's None, no ROI is applied.
	:param threads: Worker count, 0 for one per CPU.  The table does not
		depend on it.

	:returns: ``MappingTable``.
	"""
	cam_mask = _check_masks(scene, cam_mask, roi_mask)
	if scene.num_cameras > 0xffff:
		raise ValidationError("too many cameras for a mapping table", cameras=scene.num_cameras)

	chunks = [(r, min(r + CHUNK_ROWS, spec.ny)) for r in range(0, spec.ny, CHUNK_ROWS)]
	results = run_chunks(_RowMapper(scene, spec, cam_mask, roi_mask), chunks, threads)
	counts = np.concatenate([r[0] for r in results])
	hits = np.concatenate([r[1] for r in results])

	provenance = Provenance(
		scene.scene_id, scene.num_cameras, cam_mask.bits, cam_mask.digest(),
		roi_mask.digest() if roi_mask is not None else _NO_ROI_DIGEST)
	table = MappingTable.from_counts(spec, counts, hits, provenance)
	loggers.info("mapping built", cells=spec.num_cells, hits=table.num_hits,
		empty_fraction=float(np.count_nonzero(counts == 0)) / spec.num_cells, cam_mask=cam_mask.bits)
	return table

class CoverageStats:
	"""Coverage of a mapping table.

	:ivar cells_with_hits: Number of cells with at least one hit.
	:ivar hits_per_camera: List of hit counts, one per scene camera.
	:ivar empty_cell_fraction: Fraction of cells without hits.
	"""
	def __init__(self, cells_with_hits, hits_per_camera, empty_cell_fraction):
		self.cells_with_hits = cells_with_hits
		self.hits_per_camera = hits_per_camera
		self.empty_cell_fraction = empty_cell_fraction

	def to_dict(self):
		return {
			"cells_with_hits": self.cells_with_hits,
			"hits_per_camera": list(self.hits_per_camera),
			"empty_cell_fraction": self.empty_cell_fraction
		}

def coverage_stats(table):
	"""Count cells with hits, hits per camera and the empty cell fraction."""
	counts = table.counts
	cells_with_hits = int(np.count_nonzero(counts))
	hits_per_camera = np.bincount(
		table.hits["camera_index"].astype(np.int64), minlength=table.provenance.num_cameras)
	return CoverageStats(
		cells_with_hits,
		[int(n) for n in hits_per_camera],
		(table.grid.num_cells - cells_with_hits) / table.grid.num_cells)

def rotate_table(table, k):
	"""Re-address a table for a BEV frame rotated by ``k`` quarter turns.

	The result is the table expected after augmenting the scene with a pure
	rotation of ``k * pi/2``: augmented cell (ix, iy) takes the hits of the
	original cell it lies on.

	:param table: ``MappingTable`` on a square, origin-centered grid.
	:param k: Number of quarter turns.
	"""
	grid = table.grid
	if not grid.is_square_symmetric():
		raise ValidationError("grid rotation needs a square grid centered on the origin")
	n = grid.nx
	k = int(k) % 4
	iy, ix = np.divmod(np.arange(grid.num_cells, dtype=np.int64), n)
	if k == 0:
		src_ix, src_iy = ix, iy
	elif k == 1:
		src_ix, src_iy = n - 1 - iy, ix
	elif k == 2:
		src_ix, src_iy = n - 1 - ix, n - 1 - iy
	else:
		src_ix, src_iy = iy, n - 1 - ix
	src = src_iy * n + src_ix
	counts = table.counts[src]
	offsets = np.zeros(grid.num_cells + 1, dtype=np.int64)
	np.cumsum(counts, out=offsets[1:])
	index = np.repeat(table.offsets[:-1][src] - offsets[:-1], counts) + np.arange(offsets[-1], dtype=np.int64)
	return MappingTable(grid, offsets, table.hits[index], table.provenance)

_BMAP_MAGIC = b"BMAP"
_BMAP_VERSION = 1
_BMAP_HEADER = struct.Struct("<4sIIIII32s32s")

def dumps_mapping(table):
	"""Serialize a mapping table (BMAP, little-endian).

	Layout: magic, version, nx, ny, n_z, n_cameras, CamMask digest, RoiMask
	digest; then x/y ranges and z samples (f64), the scene id (u32 length +
	UTF-8), CamMask bits (one byte per camera); then one u32 hit count per
	cell and the hit records ``{u16 camera, u16 z level, f64 u, f64 v}``.
	"""
	grid = table.grid
	provenance = table.provenance
	scene_id = provenance.scene_id.encode("utf-8")
	parts = [
		_BMAP_HEADER.pack(_BMAP_MAGIC, _BMAP_VERSION, grid.nx, grid.ny, len(grid.z_samples),
			provenance.num_cameras, provenance.cam_mask_digest, provenance.roi_digest),
		np.array(grid.x_range + grid.y_range + grid.z_samples, dtype="<f8").tobytes(),
		struct.pack("<I", len(scene_id)), scene_id,
		bytes(1 if ch == "1" else 0 for ch in provenance.cam_mask_bits),
		table.counts.astype("<u4").tobytes(),
		table.hits.tobytes()
	]
	return b"".join(parts)

class _Cursor:
	def __init__(self, contents):
		self.contents = contents
		self.position = 0

	def take(self, size, what):
		if self.position + size > len(self.contents):
			raise ParseError("truncated mapping file", section=what, offset=self.position)
		data = self.contents[self.position:self.position + size]
		self.position += size
		return data

def loads_mapping(contents):
	"""Parse a mapping table serialized by ``dumps_mapping()``."""
	cursor = _Cursor(contents)
	magic, version, nx, ny, nz, num_cameras, cam_digest, roi_digest = \
		_BMAP_HEADER.unpack(cursor.take(_BMAP_HEADER.size, "header"))
	if magic != _BMAP_MAGIC: raise ParseError("not a mapping file", magic=magic)
	if version != _BMAP_VERSION: raise ParseError("unsupported mapping file version", version=version)
	values = np.frombuffer(cursor.take(8 * (4 + nz), "ranges"), dtype="<f8")
	grid = BevGridSpec(nx, ny, values[0:2], values[2:4], values[4:])
	(length,) = struct.unpack("<I", cursor.take(4, "scene id"))
	scene_id = cursor.take(length, "scene id").decode("utf-8", errors="replace")
	bits = "".join("1" if b else "0" for b in cursor.take(num_cameras, "camera mask"))
	counts = np.frombuffer(cursor.take(4 * grid.num_cells, "counts"), dtype="<u4").astype(np.int64)
	total = int(counts.sum())
	hits = np.frombuffer(cursor.take(MappingTable.HIT_DTYPE.itemsize * total, "hits"), dtype=MappingTable.HIT_DTYPE)
	if cursor.position != len(contents):
		raise ParseError("trailing bytes in mapping file", offset=cursor.position)
	provenance = Provenance(scene_id, num_cameras, bits, cam_digest, roi_digest)
	return MappingTable.from_counts(grid, counts, hits.copy(), provenance)

def save_mapping(table, filepath):
	FileSystemUtils.save_bytes(filepath, dumps_mapping(table))
	loggers.debug("mapping saved", path=filepath, hits=table.num_hits)

def load_mapping(filepath):
	try:
		return loads_mapping(FileSystemUtils.load_bytes(filepath))
	except ValidationError as e:
		e.context.setdefault("path", filepath)
		raise
