import math
import numpy as np
from helpers import *
from roadbev.augmentation import BevAugmentation, apply_augmentation
from roadbev.errors import ValidationError, ParseError, IndexOutOfRange, MaskShapeMismatch, AllCamerasMasked
from roadbev.grid import *
from roadbev.scene import save_roi_bitmap

def test_grid_presets():
	roscenes = BevGridSpec.roscenes()
	assert (roscenes.nx, roscenes.ny) == (500, 500)
	assert abs(roscenes.dx - 0.64) <= 1e-12
	assert abs(roscenes.dy - 1.64) <= 1e-12
	urban = BevGridSpec.urban()
	assert abs(urban.dx - 1.0) <= 1e-12 and abs(urban.dy - 1.0) <= 1e-12
	assert roscenes.z_samples == DEFAULT_Z_SAMPLES

def test_grid_validation():
	expect_error(ValidationError, BevGridSpec, 0, 10, (0, 1), (0, 1))
	expect_error(ValidationError, BevGridSpec, 10, 10, (1, 0), (0, 1))
	expect_error(ValidationError, BevGridSpec, 10, 10, (0, 1), (0, 1), (1.0, 0.0))

def test_cell_centers():
	grid = BevGridSpec.roscenes()
	x, y = cell_center(grid, 0, 0)
	assert abs(x - (-160.0 + 0.32)) <= 1e-9 and abs(y - (-20.0 + 0.82)) <= 1e-9
	x, y = cell_center(grid, 499, 499)
	assert abs(x - (160.0 - 0.32)) <= 1e-9 and abs(y - (800.0 - 0.82)) <= 1e-9
	expect_error(IndexOutOfRange, cell_center, grid, 500, 0)
	expect_error(IndexOutOfRange, cell_center, grid, 0, -1)
	xs, ys = cell_centers(grid)
	assert (xs[17], ys[230]) == cell_center(grid, 17, 230)
	assert cell_of_point(grid, x, y) == (499, 499)
	assert cell_of_point(grid, 161.0, 0.0) is None

def test_cell_centers_match_left_edge_form():
	for grid in (small_grid(), symmetric_grid(), BevGridSpec.roscenes()):
		xs, ys = cell_centers(grid)
		dx = (grid.x_range[1] - grid.x_range[0]) / grid.nx
		dy = (grid.y_range[1] - grid.y_range[0]) / grid.ny
		assert np.allclose(xs, grid.x_range[0] + (np.arange(grid.nx) + 0.5) * dx, rtol=0, atol=1e-9)
		assert np.allclose(ys, grid.y_range[0] + (np.arange(grid.ny) + 0.5) * dy, rtol=0, atol=1e-9)

def test_symmetric_grid_mirrors_exactly():
	grid = symmetric_grid()
	xs, _ = cell_centers(grid)
	assert np.array_equal(xs[::-1], -xs)

def test_reference_points():
	grid = small_grid()
	cell_index, z_level, points = reference_points(grid)
	assert points.shape == (grid.num_points, 3)
	assert grid.num_points == 32 * 40 * 2
	assert np.array_equal(np.bincount(cell_index), np.full(grid.num_cells, 2))
	c = 5 * grid.nx + 7
	assert tuple(points[2 * c, :2]) == cell_center(grid, 7, 5)
	assert points[2 * c + 1, 2] == 1.5 and z_level[2 * c + 1] == 1

def test_mapping_has_hits_in_canonical_order():
	scene = small_scene(1)
	table = build_mapping(scene, small_grid())
	assert table.num_hits > 0
	keys = table.hit_cells() * 2 ** 32 + table.hits["camera_index"].astype(np.int64) * 2 ** 16 + table.hits["z_level"]
	assert np.all(np.diff(keys) > 0)
	assert np.all((table.hits["u"] >= 0) & (table.hits["u"] < 240))
	assert np.all((table.hits["v"] >= 0) & (table.hits["v"] < 136))

def test_masked_camera_equals_deleted_camera():
	grid = small_grid()
	for seed in range(20):
		scene = small_scene(seed)
		for i in range(scene.num_cameras):
			active = [j != i for j in range(scene.num_cameras)]
			masked = build_mapping(scene, grid, CamMask(active))
			deleted = build_mapping(scene.without_camera(i), grid)
			index_map = [j if j < i else j + 1 for j in range(scene.num_cameras - 1)]
			assert masked.same_hits(deleted.reindexed(index_map))
			assert not np.any(masked.hits["camera_index"] == i)

def test_full_mask_equals_default():
	scene = small_scene(2)
	grid = small_grid()
	full = build_mapping(scene, grid, CamMask.from_bits("1111"))
	default = build_mapping(scene, grid)
	assert full.same_hits(default)
	assert dumps_mapping(full) == dumps_mapping(default)

def test_mask_validation():
	scene = small_scene(3)
	e = expect_error(AllCamerasMasked, CamMask.from_bits, "0000")
	assert e.exit_code == 4
	expect_error(ValidationError, CamMask.from_bits, "10x1")
	expect_error(MaskShapeMismatch, build_mapping, scene, small_grid(), CamMask.from_bits("111"))
	roi = RoiMask([np.full((10, 10), 255, dtype=np.uint8)] + [None] * 3)
	expect_error(MaskShapeMismatch, build_mapping, scene, small_grid(), None, roi)

def test_random_mask_keeps_a_camera():
	rng = np.random.default_rng(4)
	for _ in range(100):
		mask = CamMask.random(rng, 6)
		assert len(mask) == 6 and 1 <= len(mask.active_indices()) <= 6

def test_full_roi_equals_no_roi():
	scene = small_scene(5)
	grid = small_grid()
	assert build_mapping(scene, grid, roi_mask=RoiMask.filled(scene, 255)).same_hits(build_mapping(scene, grid))

def test_empty_roi_gives_empty_grid():
	scene = small_scene(5)
	table = build_mapping(scene, small_grid(), roi_mask=RoiMask.filled(scene, 0))
	assert table.num_hits == 0
	assert coverage_stats(table).empty_cell_fraction == 1.0

def _random_roi(scene, rng):
	bitmaps = []
	for cam in scene.cameras:
		h, w = cam.intrinsics.height, cam.intrinsics.width
		bitmap = np.zeros((h, w), dtype=np.uint8)
		x0, y0 = int(rng.integers(0, w // 2)), int(rng.integers(0, h // 2))
		bitmap[y0:y0 + h // 2, x0:x0 + w // 2] = 255
		bitmaps.append(bitmap)
	return RoiMask(bitmaps)

def test_roi_masking_filters_hits():
	rng = np.random.default_rng(6)
	scene = small_scene(6)
	grid = small_grid()
	full = build_mapping(scene, grid)
	roi = _random_roi(scene, rng)
	keep = np.zeros(full.num_hits, dtype=bool)
	for k, hit in enumerate(full.hits):
		bitmap = roi.bitmaps[hit["camera_index"]]
		h, w = bitmap.shape
		row = min(max(int(math.floor(hit["v"])), 0), h - 1)
		col = min(max(int(math.floor(hit["u"])), 0), w - 1)
		keep[k] = bitmap[row, col] == 255
	assert build_mapping(scene, grid, roi_mask=roi).same_hits(full.filter(keep))

def test_roi_edge_column_uses_containing_pixel():
	scene = small_scene(6)
	grid = small_grid()
	full = build_mapping(scene, grid)
	bitmaps = []
	for cam in scene.cameras:
		bitmap = np.zeros((cam.intrinsics.height, cam.intrinsics.width), dtype=np.uint8)
		bitmap[:, :cam.intrinsics.width // 2] = 255
		bitmaps.append(bitmap)
	masked = build_mapping(scene, grid, roi_mask=RoiMask(bitmaps))
	edge = [scene.cameras[int(c)].intrinsics.width // 2 for c in full.hits["camera_index"]]
	keep = np.floor(full.hits["u"]) < np.array(edge)
	assert masked.same_hits(full.filter(keep))
	#a hit at u=119.85 lies in pixel 119, inside the left half
	assert np.all(np.floor(masked.hits["u"]) < 120)

def test_roi_intersection_is_monotone():
	rng = np.random.default_rng(7)
	scene = small_scene(7)
	grid = small_grid()
	a = _random_roi(scene, rng)
	b = _random_roi(scene, rng)
	table_a = build_mapping(scene, grid, roi_mask=a)
	table_ab = build_mapping(scene, grid, roi_mask=a.intersect(b))
	assert np.all(table_ab.counts <= table_a.counts)
	hits_a = set(zip(table_a.hit_cells().tolist(), table_a.hits.tolist()))
	hits_ab = set(zip(table_ab.hit_cells().tolist(), table_ab.hits.tolist()))
	assert hits_ab <= hits_a

def test_roi_from_scene_folder():
	scene = small_scene(8)
	with temp_folder() as folder:
		bitmap = np.zeros((136, 240), dtype=np.uint8)
		save_roi_bitmap(folder.join("cam01.pgm"), bitmap)
		roi = RoiMask.from_scene(scene, roi_dir=folder.path)
	assert roi.bitmaps[0] is None and roi.bitmaps[2] is None
	assert np.array_equal(roi.bitmaps[1], bitmap)
	table = build_mapping(scene, small_grid(), roi_mask=roi)
	assert not np.any(table.hits["camera_index"] == 1)

def test_right_angle_rotation_permutes_cells():
	grid = symmetric_grid()
	for seed in range(3):
		scene = small_scene(seed, layout="intersection")
		base = build_mapping(scene, grid)
		assert base.num_hits > 0
		for k in range(4):
			augmented = apply_augmentation(scene, BevAugmentation((0.0, 0.0), k * math.pi / 2))
			assert build_mapping(augmented, grid).same_hits(rotate_table(base, k))

def test_rotate_table_needs_symmetric_grid():
	table = build_mapping(small_scene(0), small_grid())
	expect_error(ValidationError, rotate_table, table, 1)

def test_coverage_stats_match_recount():
	scene = small_scene(9)
	grid = small_grid()
	table = build_mapping(scene, grid)
	stats = coverage_stats(table)
	cells = 0
	per_camera = [0] * scene.num_cameras
	for iy in range(grid.ny):
		for ix in range(grid.nx):
			hits = table.cell_hits(ix, iy)
			if len(hits): cells += 1
			for hit in hits: per_camera[int(hit["camera_index"])] += 1
	assert stats.cells_with_hits == cells
	assert stats.hits_per_camera == per_camera
	assert stats.empty_cell_fraction == (grid.num_cells - cells) / grid.num_cells
	assert stats.to_dict()["hits_per_camera"] == per_camera

def test_mapping_independent_of_threads():
	scene = small_scene(10)
	grid = small_grid()
	one = build_mapping(scene, grid, threads=1)
	four = build_mapping(scene, grid, threads=4)
	assert one.same_hits(four)
	assert dumps_mapping(one) == dumps_mapping(four)

def test_mapping_file_round_trip():
	scene = small_scene(11)
	table = build_mapping(scene, small_grid(), CamMask.from_bits("1011"))
	with temp_folder() as folder:
		filepath = folder.join("scene.bmap")
		save_mapping(table, filepath)
		loaded = load_mapping(filepath)
	assert loaded == table
	assert loaded.provenance == table.provenance
	assert loaded.provenance.cam_mask_bits == "1011"
	contents = dumps_mapping(table)
	e = expect_error(ParseError, loads_mapping, contents[:-3])
	assert e.context["section"] == "hits"
	expect_error(ParseError, loads_mapping, b"XMAP" + contents[4:])

if __name__ == "__main__":
	sys.exit(run_tests(globals()))
