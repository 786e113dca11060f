import math
import numpy as np
from helpers import *
from roadbev.augmentation import *
from roadbev.errors import ValidationError
from roadbev.geometry import (
	Box3D, Category, camera_yaw_in_frame, invert, project_points, to_display_angle, transform_points, wrap_angle)
from roadbev.scene import SceneObject

def _world_corners(scene, obj):
	return transform_points(invert(scene.bev_frame), obj.box.corners())

def test_zero_ranges_give_identity():
	ranges = AugmentationRanges(0.0, PsiMode.RIGHT_ANGLES, right_angles=(0,))
	for seed in range(10):
		aug = sample_augmentation(seed, ranges)
		assert aug.is_identity()
		assert aug == BevAugmentation.identity()

def test_identity_leaves_scene_unchanged():
	scene = small_scene(1)
	assert apply_augmentation(scene, BevAugmentation.identity()) == scene

def test_sampling_is_deterministic():
	ranges = AugmentationRanges(30.0)
	rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
	assert [sample_augmentation(rng_a, ranges) for _ in range(5)] == [sample_augmentation(rng_b, ranges) for _ in range(5)]
	assert sample_augmentation(9, ranges) == sample_augmentation(9, ranges)

def test_sampled_translation_stays_in_disk():
	ranges = AugmentationRanges(12.0)
	rng = np.random.default_rng(2)
	for _ in range(1000):
		aug = sample_augmentation(rng, ranges)
		assert math.hypot(*aug.delta_xy) <= 12.0
		assert -math.pi < aug.delta_psi <= math.pi

def test_right_angle_histogram_is_uniform():
	ranges = AugmentationRanges(0.0, PsiMode.RIGHT_ANGLES)
	rng = np.random.default_rng(3)
	n = 10000
	counts = [0, 0, 0, 0]
	for _ in range(n):
		psi = sample_augmentation(rng, ranges).delta_psi
		k = int(round(to_display_angle(psi) / (math.pi / 2))) % 4
		assert abs(wrap_angle(psi - k * math.pi / 2)) <= 1e-12
		counts[k] += 1
	sigma = math.sqrt(n * 0.25 * 0.75)
	for count in counts:
		assert abs(count - n / 4) <= 3 * sigma

def test_ranges_validation():
	expect_error(ValidationError, AugmentationRanges, -1.0)
	expect_error(ValidationError, AugmentationRanges, 1.0, "spiral")
	expect_error(ValidationError, AugmentationRanges, 1.0, PsiMode.RIGHT_ANGLES, (0, 4))
	ranges = AugmentationRanges.for_grid(small_grid())
	assert ranges.max_translation == 16.0

def test_augmentation_keeps_pixels_and_shifts_yaws():
	rng = np.random.default_rng(4)
	ranges = AugmentationRanges(40.0)
	for seed in range(100):
		scene = small_scene(seed, cameras=3, objects=4)
		for _ in range(10):
			aug = sample_augmentation(rng, ranges)
			augmented = apply_augmentation(scene, aug)
			assert augmented.cameras == scene.cameras
			for before, after in zip(scene.objects, augmented.objects):
				world_before = _world_corners(scene, before)
				world_after = _world_corners(augmented, after)
				assert np.max(np.abs(world_after - world_before)) <= 1e-9
				for cam in scene.cameras:
					u0, v0, d0 = project_points(cam, world_before)
					u1, v1, d1 = project_points(cam, world_after)
					front = d0 > 1e-3
					assert np.all(np.abs(u1[front] - u0[front]) <= 1e-6)
					assert np.all(np.abs(v1[front] - v0[front]) <= 1e-6)
				assert abs(wrap_angle(after.box.yaw - (before.box.yaw - aug.delta_psi))) <= 1e-12
			for cam in scene.cameras:
				shift = camera_yaw_in_frame(cam, augmented.bev_frame) - camera_yaw_in_frame(cam, scene.bev_frame)
				assert abs(wrap_angle(shift + aug.delta_psi)) <= 1e-9

def test_quarter_turn_display_yaw():
	box = Box3D((5.0, 5.0, 0.85), Category.DIMS[Category.PEDESTRIAN], math.pi, Category.PEDESTRIAN)
	scene = small_scene(0).replace(objects=[SceneObject("p", box)])
	augmented = apply_augmentation(scene, BevAugmentation((0.0, 0.0), -math.pi / 2))
	yaw = augmented.objects[0].box.yaw
	assert abs(yaw - (-math.pi / 2)) <= 1e-12
	assert abs(to_display_angle(yaw) - 3 * math.pi / 2) <= 1e-12
	assert to_display_angle(scene.objects[0].box.yaw) == math.pi

def test_composition_matches_sequence():
	rng = np.random.default_rng(6)
	ranges = AugmentationRanges(25.0)
	scene = small_scene(6)
	for _ in range(20):
		a = sample_augmentation(rng, ranges)
		b = sample_augmentation(rng, ranges)
		twice = apply_augmentation(apply_augmentation(scene, a), b)
		once = apply_augmentation(scene, compose_augmentations(b, a))
		assert np.allclose(twice.bev_frame.as_matrix(), once.bev_frame.as_matrix(), rtol=0, atol=1e-9)
		for x, y in zip(twice.objects, once.objects):
			assert np.allclose(x.box.center, y.box.center, rtol=0, atol=1e-9)
			assert abs(wrap_angle(x.box.yaw - y.box.yaw)) <= 1e-9

def test_augmentation_record_round_trip():
	aug = BevAugmentation((1.5, -2.25), 0.75)
	assert BevAugmentation.from_dict(aug.to_dict()) == aug
	assert BevAugmentation((0, 0), -math.pi).delta_psi == math.pi

def test_coverage_balance_spreads_hits():
	scene = small_scene(7, objects=0)
	grid = small_grid()
	report = coverage_balance(scene, grid, AugmentationRanges.for_grid(grid), 6, seed=1)
	assert report.samples == 6
	assert report.trained_counts.shape == (grid.ny, grid.nx)
	assert report.trained_counts.max() <= 6
	assert 0.0 <= report.augmented_empty_fraction <= 1.0
	again = coverage_balance(scene, grid, AugmentationRanges.for_grid(grid), 6, seed=1, threads=3)
	assert np.array_equal(report.trained_counts, again.trained_counts)
	assert report.to_dict()["trained_count_max"] == int(report.trained_counts.max())

if __name__ == "__main__":
	sys.exit(run_tests(globals()))
