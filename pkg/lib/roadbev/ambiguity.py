"""Orientation ambiguity of single-cell objects under BEV frame rotation.

Two cameras watch one obstacle.  The same deployment is labelled in two
BEV frames: frame A sits at camera A's ground point, frame B is frame A
moved to camera B's ground point and rotated by a quarter turn.  The
obstacle stands on the one cell that keeps its index in both frames, so a
pedestrian covering that cell alone gets the same BEV feature and the same
position encoding in both frames, while its yaw label changes by pi/2.
Adding the camera rotation embedding separates the two features.  A
vehicle covers several cells whose indices do change, so its feature block
differs between frames even without the embedding.

Construction (world frame, meters)::

	camera A   (0, 0), 8 m high, looking at the pivot (9, 9) on the ground
	camera B   (0, 18), 8 m high, looking at the pivot
	frame A    identity: origin at camera A, +X east, +Y north
	frame B    frame A moved by (0, 18) and rotated by -pi/2
	grid       20 x 20 cells of 2 m over [-20, 20]^2 in either frame
	obstacle   centered on the pivot, cell (14, 14) in both frames
"""
import math
import numpy as np
from roadbev.augmentation import BevAugmentation, apply_augmentation
from roadbev.errors import ValidationError
from roadbev.features import AggregateOptions, RotationEmbeddingTable, aggregate, synthesize_feature_maps
from roadbev.geometry import Box3D, Category, PinholeIntrinsics, CameraModel, RigidTransform, look_at, to_display_angle
from roadbev.grid import BevGridSpec, build_mapping, cell_centers
from roadbev.logging import loggers
from roadbev.scene import SceneConfig, SceneObject

__all__ = [
	"Variant", "Frame", "AmbiguityReport", "AmbiguityRun",
	"AMBIGUITY_GRID", "PIVOT", "FRAME_B_AUGMENTATION", "RESOLVED_DISTANCE",
	"build_ambiguity_scenario", "object_cells", "run_ambiguity_experiment"]

class Variant:
	VEHICLE = "vehicle"
	PEDESTRIAN = "pedestrian"
	ALL = (VEHICLE, PEDESTRIAN)

class Frame:
	A = "A"
	B = "B"
	ALL = (A, B)

AMBIGUITY_GRID = BevGridSpec(20, 20, (-20.0, 20.0), (-20.0, 20.0))
PIVOT = (9.0, 9.0)
FRAME_B_AUGMENTATION = BevAugmentation((0.0, 18.0), -math.pi / 2)
RESOLVED_DISTANCE = 1e-3

CAMERA_HEIGHT = 8.0

def _cameras():
	intrinsics = PinholeIntrinsics(1000.0, 1000.0, 480.0, 272.0, 960, 544)
	target = (PIVOT[0], PIVOT[1], 0.0)
	return [
		CameraModel("camA", intrinsics, look_at((0.0, 0.0, CAMERA_HEIGHT), target)),
		CameraModel("camB", intrinsics, look_at((0.0, 18.0, CAMERA_HEIGHT), target))]

def _obstacle(variant):
	if variant == Variant.PEDESTRIAN:
		dims = Category.DIMS[Category.PEDESTRIAN]
		category = Category.PEDESTRIAN
	else:
		dims = Category.DIMS[Category.CAR]
		category = Category.CAR
	#frame A is the world frame, heading towards -X
	return SceneObject("obstacle", Box3D((PIVOT[0], PIVOT[1], dims[2] / 2), dims, math.pi, category))

def build_ambiguity_scenario(variant, frame):
	"""Build the scene of a variant labelled in frame A or frame B.

	Both frames share cameras and the obstacle's world pose; only the BEV
	frame and the labels differ.

	:param variant: ``Variant.PEDESTRIAN`` or ``Variant.VEHICLE``.
	:param frame: ``Frame.A`` or ``Frame.B``.

	:returns: ``SceneConfig``.
	"""
	if variant not in Variant.ALL: raise ValidationError("unknown variant: {}".format(variant), field="variant")
	if frame not in Frame.ALL: raise ValidationError("unknown frame: {}".format(frame), field="frame")
	scene = SceneConfig("ambiguity-{}-A".format(variant), _cameras(), RigidTransform(), [_obstacle(variant)])
	if frame == Frame.A: return scene
	return apply_augmentation(scene, FRAME_B_AUGMENTATION).replace(scene_id="ambiguity-{}-B".format(variant))

def object_cells(spec, box):
	"""Cells whose centers lie inside a box footprint.

	:returns: List of (ix, iy) ordered by the cell center's coordinates in
		the box's own frame (along the length axis, then across), so the
		same physical cells come in the same order in any BEV frame.
	"""
	xs, ys = cell_centers(spec)
	c, s = math.cos(box.yaw), math.sin(box.yaw)
	half_length, half_width = box.dims[0] / 2, box.dims[1] / 2
	cells = []
	for iy, y in enumerate(ys):
		for ix, x in enumerate(xs):
			dx, dy = x - box.center[0], y - box.center[1]
			along = c * dx + s * dy
			across = -s * dx + c * dy
			if abs(along) <= half_length and abs(across) <= half_width:
				cells.append((round(along, 6), round(across, 6), ix, iy))
	cells.sort()
	return [(ix, iy) for (_, _, ix, iy) in cells]

class AmbiguityReport:
	"""Outcome of one ambiguity experiment.

	:ivar variant: ``Variant``.
	:ivar feature_distance: Infinity norm distance between the obstacle's
		BEV features in the two frames.
	:ivar yaw_pair: Obstacle yaw labels in frames A and B, radians in (-pi, pi].
	:ivar embedding_enabled: Whether the rotation embedding was used.
	:ivar resolved: Whether the features tell the two labels apart.
	:ivar cells_a: Obstacle cells in frame A.
	:ivar cells_b: Obstacle cells in frame B.
	:ivar embedding_seed: Seed of the embedding table.
	"""
	def __init__(self, variant, feature_distance, yaw_pair, embedding_enabled, cells_a, cells_b, embedding_seed):
		self.variant = variant
		self.feature_distance = feature_distance
		self.yaw_pair = yaw_pair
		self.embedding_enabled = embedding_enabled
		self.cells_a = cells_a
		self.cells_b = cells_b
		self.embedding_seed = embedding_seed
		if yaw_pair[0] != yaw_pair[1]:
			self.resolved = feature_distance > RESOLVED_DISTANCE
		else:
			self.resolved = True

	@property
	def yaw_pair_display(self):
		"""Yaw labels in the [0, 2pi) display convention."""
		return (to_display_angle(self.yaw_pair[0]), to_display_angle(self.yaw_pair[1]))

	def to_dict(self):
		return {
			"variant": self.variant,
			"embedding_enabled": self.embedding_enabled,
			"embedding_seed": self.embedding_seed,
			"feature_distance": self.feature_distance,
			"yaw_a": self.yaw_pair[0],
			"yaw_b": self.yaw_pair[1],
			"yaw_a_display": self.yaw_pair_display[0],
			"yaw_b_display": self.yaw_pair_display[1],
			"cells_a": [list(c) for c in self.cells_a],
			"cells_b": [list(c) for c in self.cells_b],
			"resolved": self.resolved
		}

	def to_text(self):
		"""Report as ``key=value`` lines, construction included."""
		lines = []
		for key, value in self.to_dict().items():
			if isinstance(value, bool): value = "true" if value else "false"
			elif isinstance(value, float): value = repr(value)
			elif isinstance(value, list): value = ";".join("{},{}".format(*c) for c in value)
			lines.append("{}={}".format(key, value))
		lines.append("construction=frame B is frame A moved by (0, 18) m and rotated by -pi/2;"
			" the obstacle stands on the pivot (9, 9) m, cell (14, 14) in both frames")
		return "\n".join(lines) + "\n"

class AmbiguityRun:
	"""Everything an ambiguity experiment computed, for rendering.

	:ivar report: ``AmbiguityReport``.
	:ivar scenes: (frame A scene, frame B scene).
	:ivar features: (frame A ``BevFeature``, frame B ``BevFeature``).
	"""
	def __init__(self, report, scenes, features):
		self.report = report
		self.scenes = scenes
		self.features = features

def run_ambiguity_experiment(variant, embedding_enabled, embedding_seed=0, channels=16, stride=8, feature_seed=0,
		threads=1, detailed=False):
	"""Compare the obstacle's BEV features across frames A and B.

	Both frames get the same synthesized camera features.  The features of
	the obstacle cells, taken in the obstacle's own cell order, are compared
	across frames by infinity norm.

	:param variant: ``Variant``.
	:param embedding_enabled: Whether to add the camera rotation embedding.
	:param embedding_seed: Seed of the embedding table.
	:param channels: Feature channels, a multiple of 4.
	:param stride: Feature stride in image pixels.
	:param feature_seed: Seed of the synthesized camera features.
	:param detailed: If it's True, return an ``AmbiguityRun`` instead of the report.

	:returns: ``AmbiguityReport`` (or ``AmbiguityRun``).
	"""
	scenes = (build_ambiguity_scenario(variant, Frame.A), build_ambiguity_scenario(variant, Frame.B))
	maps = synthesize_feature_maps(scenes[0], channels, stride, feature_seed)
	options = AggregateOptions(
		use_rotation_embedding=embedding_enabled,
		use_position_encoding=True,
		embedding_table=RotationEmbeddingTable.from_seed(embedding_seed, channels) if embedding_enabled else None,
		threads=threads)

	features = []
	cells = []
	for scene in scenes:
		table = build_mapping(scene, AMBIGUITY_GRID, threads=threads)
		features.append(aggregate(maps, table, scene, options))
		cells.append(object_cells(AMBIGUITY_GRID, scene.objects[0].box))

	block_a = np.stack([features[0].cell(ix, iy) for (ix, iy) in cells[0]])
	block_b = np.stack([features[1].cell(ix, iy) for (ix, iy) in cells[1]])
	distance = float(np.max(np.abs(block_a - block_b)))
	yaws = (scenes[0].objects[0].box.yaw, scenes[1].objects[0].box.yaw)
	report = AmbiguityReport(variant, distance, yaws, bool(embedding_enabled), cells[0], cells[1], embedding_seed)
	loggers.info("ambiguity experiment", variant=variant, embedding=embedding_enabled,
		distance=distance, resolved=report.resolved)
	if detailed: return AmbiguityRun(report, scenes, tuple(features))
	return report
