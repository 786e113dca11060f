"""BEV frame augmentation.

An augmentation moves the BEV frame, never the world: the new frame is
translated by ``delta_xy`` and rotated by ``delta_psi`` about the vertical
axis, relative to the old one.  Cameras keep their world poses, so pixels
do not move, while the labels (which live in the BEV frame) are rewritten.
"""
import math
import numpy as np
from roadbev.errors import ValidationError
from roadbev.geometry import (
	RigidTransform, compose, transform_points, rotation_about_z, wrap_angle, frozen_array)
from roadbev.grid import build_mapping
from roadbev.logging import loggers
from roadbev.scene import SceneObject

__all__ = [
	"BevAugmentation", "PsiMode", "AugmentationRanges", "BalanceReport",
	"sample_augmentation", "apply_augmentation", "compose_augmentations",
	"coverage_balance"]

class BevAugmentation:
	"""Planar rigid motion of the BEV frame.

	:ivar delta_xy: Translation of the frame origin (2, meters), in old frame coordinates.
	:ivar delta_psi: Rotation about the vertical axis in radians, wrapped to (-pi, pi].
	"""
	def __init__(self, delta_xy=(0.0, 0.0), delta_psi=0.0):
		self.delta_xy = frozen_array(delta_xy, (2,), "delta_xy")
		self.delta_psi = wrap_angle(delta_psi)

	@classmethod
	def identity(cls):
		return cls()

	def is_identity(self):
		return self.delta_psi == 0.0 and not np.any(self.delta_xy)

	def frame_change(self):
		"""The transform g taking old BEV coordinates to new ones.

		``p' = R(-delta_psi) (p - delta_xy)``
		"""
		rotation = rotation_about_z(-self.delta_psi)
		shift = np.array([self.delta_xy[0], self.delta_xy[1], 0.0])
		return RigidTransform(rotation, -transform_points(RigidTransform(rotation), shift))

	def to_dict(self):
		return {"delta_xy": self.delta_xy.tolist(), "delta_psi": self.delta_psi}

	@classmethod
	def from_dict(cls, data):
		return cls(data["delta_xy"], data["delta_psi"])

	def __eq__(self, other):
		if not isinstance(other, BevAugmentation): return NotImplemented
		return np.array_equal(self.delta_xy, other.delta_xy) and self.delta_psi == other.delta_psi

	__hash__ = None

	def __repr__(self):
		return "BevAugmentation(delta_xy={}, delta_psi={})".format(self.delta_xy.tolist(), self.delta_psi)

class PsiMode:
	"""Rotation sampling modes."""
	UNIFORM = "uniform"
	RIGHT_ANGLES = "right-angles"
	ALL = (UNIFORM, RIGHT_ANGLES)

class AugmentationRanges:
	"""Sampling ranges of augmentations.

	:ivar max_translation: Radius of the translation disk in meters.
	:ivar psi_mode: ``PsiMode.UNIFORM`` over (-pi, pi] or ``PsiMode.RIGHT_ANGLES``.
	:ivar right_angles: Quarter turns allowed in right-angle mode, subset of {0, 1, 2, 3}.
	"""
	def __init__(self, max_translation=0.0, psi_mode=PsiMode.UNIFORM, right_angles=(0, 1, 2, 3)):
		#config
		self.max_translation = float(max_translation)
		self.psi_mode = psi_mode
		self.right_angles = tuple(int(k) for k in right_angles)

		#validate
		if not (math.isfinite(self.max_translation) and self.max_translation >= 0):
			raise ValidationError("max translation must be non-negative", field="max_translation")
		if self.psi_mode not in PsiMode.ALL:
			raise ValidationError("unknown rotation mode: {}".format(psi_mode), field="psi_mode")
		if not self.right_angles or any(k not in (0, 1, 2, 3) for k in self.right_angles):
			raise ValidationError("right angles must be quarter turns in {0, 1, 2, 3}", field="right_angles")

	@classmethod
	def for_grid(cls, spec, psi_mode=PsiMode.UNIFORM):
		"""Default ranges for a grid: translation up to 25% of its smaller extent."""
		extent = min(spec.x_range[1] - spec.x_range[0], spec.y_range[1] - spec.y_range[0])
		return cls(0.25 * extent, psi_mode)

def _as_rng(rng):
	if isinstance(rng, np.random.Generator): return rng
	return np.random.default_rng(rng)

def sample_augmentation(rng, ranges):
	"""Sample an augmentation.

	The translation is uniform in the disk of radius ``max_translation``.
	The rotation is uniform over (-pi, pi] or over the allowed right angles.

	:param rng: ``numpy.random.Generator`` or a seed.
	:param ranges: ``AugmentationRanges``.
	"""
	rng = _as_rng(rng)
	radius = ranges.max_translation * math.sqrt(rng.random())
	direction = 2 * math.pi * rng.random()
	delta_xy = (radius * math.cos(direction), radius * math.sin(direction))
	if ranges.psi_mode == PsiMode.RIGHT_ANGLES:
		k = ranges.right_angles[int(rng.integers(len(ranges.right_angles)))]
		delta_psi = k * (math.pi / 2)
	else:
		delta_psi = rng.uniform(-math.pi, math.pi)
	return BevAugmentation(delta_xy, delta_psi)

def apply_augmentation(scene, aug):
	"""Apply an augmentation to a scene.

	The BEV frame becomes ``g o bev_frame`` with ``g = aug.frame_change()``.
	Object centers become ``R(-delta_psi) (center - delta_xy)`` and yaws
	become ``wrap(yaw - delta_psi)``.  Cameras are untouched.

	:returns: A new ``SceneConfig``.
	"""
	g = aug.frame_change()
	rotation = RigidTransform(g.rotation)
	shift = np.array([aug.delta_xy[0], aug.delta_xy[1], 0.0])
	objects = []
	for obj in scene.objects:
		box = obj.box
		center = transform_points(rotation, box.center - shift)
		objects.append(SceneObject(obj.object_id, box.replace(center=center, yaw=wrap_angle(box.yaw - aug.delta_psi))))
	return scene.replace(bev_frame=compose(g, scene.bev_frame), objects=objects)

def compose_augmentations(b, a):
	"""Single augmentation equal to applying ``a`` and then ``b``."""
	rotation = rotation_about_z(a.delta_psi)
	c, s = rotation[0, 0], rotation[1, 0]
	delta_xy = (
		a.delta_xy[0] + (c * b.delta_xy[0] - s * b.delta_xy[1]),
		a.delta_xy[1] + (s * b.delta_xy[0] + c * b.delta_xy[1]))
	return BevAugmentation(delta_xy, a.delta_psi + b.delta_psi)

class BalanceReport:
	"""Grid coverage with and without augmentation.

	:ivar samples: Number of augmentations sampled.
	:ivar baseline_empty_fraction: Fraction of cells never hit in the original frame.
	:ivar augmented_empty_fraction: Fraction of cells hit by none of the augmented frames.
	:ivar trained_counts: Per cell, how many augmented frames give it a hit, shape (ny, nx).
	"""
	def __init__(self, samples, baseline_empty_fraction, augmented_empty_fraction, trained_counts):
		self.samples = samples
		self.baseline_empty_fraction = baseline_empty_fraction
		self.augmented_empty_fraction = augmented_empty_fraction
		self.trained_counts = trained_counts

	def to_dict(self):
		counts = self.trained_counts
		return {
			"samples": self.samples,
			"baseline_empty_fraction": self.baseline_empty_fraction,
			"augmented_empty_fraction": self.augmented_empty_fraction,
			"trained_count_min": int(counts.min()),
			"trained_count_max": int(counts.max()),
			"trained_count_mean": float(counts.mean())
		}

def coverage_balance(scene, spec, ranges, samples, seed, threads=1):
	"""Measure how evenly augmentation spreads training over the grid.

	A cell outside every camera in the original frame is never trained;
	under random frame motion most cells get hits in some frames.

	:param samples: Number of augmentations.
	:param seed: Seed of the augmentation stream.

	:returns: ``BalanceReport``.
	"""
	rng = np.random.default_rng(seed)
	baseline = build_mapping(scene, spec, threads=threads)
	baseline_empty = float(np.count_nonzero(baseline.counts == 0)) / spec.num_cells
	trained = np.zeros(spec.num_cells, dtype=np.int64)
	for i in range(samples):
		aug = sample_augmentation(rng, ranges)
		table = build_mapping(apply_augmentation(scene, aug), spec, threads=threads)
		trained += table.counts > 0
	augmented_empty = float(np.count_nonzero(trained == 0)) / spec.num_cells
	loggers.info("coverage balance", samples=samples, baseline_empty=baseline_empty, augmented_empty=augmented_empty)
	return BalanceReport(samples, baseline_empty, augmented_empty, trained.reshape(spec.ny, spec.nx))
