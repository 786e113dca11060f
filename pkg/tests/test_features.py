import math
import numpy as np
from helpers import *
from roadbev.errors import (
	DimensionMismatch, ChannelMismatch, MissingFeatureMap, OutOfBounds, OddChannels, NonFinite, IndexOutOfRange)
from roadbev.features import *
from roadbev.geometry import camera_yaw_in_frame
from roadbev.grid import CamMask, build_mapping

def _setup(seed=0, channels=4, mask=None):
	scene = small_scene(seed)
	table = build_mapping(scene, small_grid(), mask)
	maps = synthesize_feature_maps(scene, channels, 8, seed)
	return scene, table, maps

def test_rotation_embedding_values():
	table = RotationEmbeddingTable.from_seed(3, 6)
	assert np.array_equal(rotation_embedding(0.0, table), table.matrix[:, 1])
	assert np.allclose(rotation_embedding(math.pi / 2, table), table.matrix[:, 0], rtol=0, atol=1e-15)
	rng = np.random.default_rng(1)
	for theta in rng.uniform(-10, 10, 50):
		expected = np.array([row[0] * math.sin(theta) + row[1] * math.cos(theta) for row in table.matrix])
		assert np.allclose(rotation_embedding(theta, table), expected, rtol=0, atol=1e-12)
		assert np.allclose(rotation_embedding(theta + 2 * math.pi, table), rotation_embedding(theta, table), rtol=0, atol=1e-12)
	expect_error(NonFinite, rotation_embedding, math.nan, table)

def test_embedding_table_is_seeded():
	a = RotationEmbeddingTable.from_seed(7, 16)
	assert np.array_equal(a.matrix, RotationEmbeddingTable.from_seed(7, 16).matrix)
	assert not np.array_equal(a.matrix, RotationEmbeddingTable.from_seed(8, 16).matrix)
	expect_error(DimensionMismatch, RotationEmbeddingTable, np.zeros((4, 3)))

def test_apply_rotation_embedding():
	rng = np.random.default_rng(2)
	f = FeatureMap(rng.standard_normal((4, 3, 5)), 0, 8)
	assert np.array_equal(apply_rotation_embedding(f, 0.4, RotationEmbeddingTable.zeros(4)).data, f.data)

	table = RotationEmbeddingTable.from_seed(2, 4)
	single = FeatureMap(rng.standard_normal((4, 1, 1)), 0, 8)
	shifted = apply_rotation_embedding(single, 1.1, table)
	assert np.allclose(shifted.data[:, 0, 0] - rotation_embedding(1.1, table), single.data[:, 0, 0], rtol=0, atol=1e-12)
	expect_error(ChannelMismatch, apply_rotation_embedding, f, 0.0, RotationEmbeddingTable.zeros(5))

def test_bilinear_texel_centers_are_exact():
	rng = np.random.default_rng(3)
	f = FeatureMap(rng.standard_normal((3, 6, 8)), 0, 4)
	for y in range(6):
		for x in range(8):
			assert np.array_equal(bilinear_sample(f, ((x + 0.5) * 4, (y + 0.5) * 4)), f.data[:, y, x])

def test_bilinear_constant_and_midpoint():
	constant = FeatureMap(np.full((2, 4, 4), 3.25), 0, 2)
	rng = np.random.default_rng(4)
	for u, v in rng.uniform(0, 8, (50, 2)):
		assert np.allclose(bilinear_sample(constant, (u, v)), 3.25, rtol=0, atol=1e-12)
	f = FeatureMap(rng.standard_normal((3, 4, 4)), 0, 2)
	middle = bilinear_sample(f, (4.0, 3.0))
	assert np.allclose(middle, (f.data[:, 1, 1] + f.data[:, 1, 2]) / 2, rtol=0, atol=1e-12)
	#edges clamp
	assert np.array_equal(bilinear_sample(f, (0.0, 0.0)), f.data[:, 0, 0])

def test_bilinear_out_of_bounds():
	f = FeatureMap(np.zeros((2, 4, 4)), 3, 2)
	e = expect_error(OutOfBounds, bilinear_sample, f, (8.0, 1.0))
	assert e.context["camera_index"] == 3
	expect_error(OutOfBounds, bilinear_sample, f, (1.0, -0.01))

def test_position_encoding_formula():
	grid = small_grid()
	c = 8
	for ix, iy in ((0, 0), (5, 17), (31, 39)):
		xn = (ix + 0.5) / grid.nx
		yn = (iy + 0.5) / grid.ny
		expected = []
		for k in range(c // 2):
			coordinate = xn if k % 2 == 0 else yn
			angle = 2 * math.pi * 10000.0 ** (-2.0 * (k // 2) / (c // 2)) * coordinate
			expected += [math.sin(angle), math.cos(angle)]
		encoding = position_encoding(grid, ix, iy, c)
		assert np.allclose(encoding, expected, rtol=0, atol=1e-12)
		assert np.all(np.abs(encoding) <= 1.0)
		assert np.allclose(position_encoding_grid(grid, c)[:, iy, ix], encoding, rtol=0, atol=1e-12)
	expect_error(OddChannels, position_encoding, grid, 0, 0, 3)
	expect_error(IndexOutOfRange, position_encoding, grid, 32, 0, 4)

def test_position_encoding_uses_both_axes():
	grid = small_grid()
	for c in (2, 6, 10):
		expect_error(OddChannels, position_encoding, grid, 3, 0, c)
	assert not np.allclose(position_encoding(grid, 3, 0, 4), position_encoding(grid, 3, grid.ny - 1, 4))
	assert not np.allclose(position_encoding(grid, 0, 7, 4), position_encoding(grid, grid.nx - 1, 7, 4))
	encodings = position_encoding_grid(grid, 4).reshape(4, -1).T
	assert len(set(map(tuple, encodings.round(12)))) == grid.num_cells

def test_aggregate_matches_scalar_loop():
	scene, table, maps = _setup(1)
	feature = aggregate(maps, table, scene)
	grid = table.grid
	for iy in range(0, grid.ny, 3):
		for ix in range(grid.nx):
			hits = table.cell_hits(ix, iy)
			if not len(hits):
				assert not np.any(feature.cell(ix, iy))
				continue
			total = np.zeros(4)
			for hit in hits:
				total = total + bilinear_sample(maps[int(hit["camera_index"])], (hit["u"], hit["v"]))
			expected = total / len(hits) + position_encoding(grid, ix, iy, 4)
			assert np.allclose(feature.cell(ix, iy), expected, rtol=0, atol=1e-12)
			assert feature.hit_count[iy, ix] == len(hits)

def test_aggregate_zero_maps_gives_embedding():
	scene, table, maps = _setup(2, mask=CamMask.from_bits("0100"))
	zeros = [f.replace_data(np.zeros_like(f.data)) for f in maps]
	embedding = RotationEmbeddingTable.from_seed(5, 4)
	options = AggregateOptions(use_rotation_embedding=True, use_position_encoding=False, embedding_table=embedding)
	feature = aggregate(zeros, table, scene, options)
	expected = rotation_embedding(camera_yaw_in_frame(scene.cameras[1], scene.bev_frame), embedding)
	hit = feature.hit_count > 0
	assert np.any(hit)
	assert np.allclose(feature.data[:, hit], expected[:, None], rtol=0, atol=1e-12)
	assert not np.any(feature.data[:, ~hit])

def test_aggregate_is_linear():
	scene, table, maps = _setup(3)
	others = synthesize_feature_maps(scene, 4, 8, 99)
	options = AggregateOptions(use_position_encoding=False)
	combined = [f.replace_data(2.0 * f.data - 0.5 * g.data) for f, g in zip(maps, others)]
	left = aggregate(combined, table, scene, options).data
	right = 2.0 * aggregate(maps, table, scene, options).data - 0.5 * aggregate(others, table, scene, options).data
	assert np.allclose(left, right, rtol=0, atol=1e-9)

def test_aggregate_independent_of_threads():
	scene, table, maps = _setup(4)
	options = AggregateOptions(True, True, RotationEmbeddingTable.from_seed(1, 4), threads=1)
	one = aggregate(maps, table, scene, options)
	options.threads = 4
	assert aggregate(maps, table, scene, options) == one

def test_aggregate_errors():
	scene, table, maps = _setup(5)
	expect_error(MissingFeatureMap, aggregate, maps[1:], table, scene)
	wide = maps[:1] + synthesize_feature_maps(scene, 6, 8, 0)[1:]
	expect_error(ChannelMismatch, aggregate, wide, table, scene)
	expect_error(DimensionMismatch, aggregate, maps, table, scene.without_camera(0))
	expect_error(ChannelMismatch, aggregate, maps, table, scene,
		AggregateOptions(True, embedding_table=RotationEmbeddingTable.from_seed(0, 8)))

def test_masked_camera_needs_no_feature_map():
	scene, table, maps = _setup(6, mask=CamMask.from_bits("1101"))
	feature = aggregate(maps[:2] + maps[3:], table, scene)
	assert feature.hit_count.sum() == table.num_hits

def test_feature_files_round_trip():
	scene, table, maps = _setup(7)
	f = maps[2].replace_data(maps[2].data.astype(np.float32))
	with temp_folder() as folder:
		save_feature_map(f, folder.join("cam02.fmap"))
		loaded = load_feature_map(folder.join("cam02.fmap"))
		assert np.array_equal(loaded.data, f.data)
		assert (loaded.camera_index, loaded.stride, loaded.image_size) == (2, 8.0, (240, 136))

		feature = aggregate(maps, table, scene)
		feature = BevFeature(feature.data.astype(np.float32), feature.hit_count)
		save_bev_feature(feature, folder.join("scene.bevf"))
		assert load_bev_feature(folder.join("scene.bevf")) == feature

if __name__ == "__main__":
	sys.exit(run_tests(globals()))
