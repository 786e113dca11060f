import json
import math
import numpy as np
from helpers import *
from roadbev.errors import ValidationError, ParseError, InfeasibleLayout
from roadbev.geometry import project_points, transform_points, invert
from roadbev.scene import *

def _visible(cam, point):
	u, v, depth = project_points(cam, np.asarray(point, dtype=np.float64)[None, :])
	return depth[0] > 1e-6 and cam.intrinsics.contains(u[0], v[0])

def test_generator_places_cameras_on_poles():
	for seed in range(5):
		for layout in Layout.ALL:
			scene = small_scene(seed, cameras=6, objects=4, layout=layout)
			assert scene.num_cameras == 6
			for cam in scene.cameras:
				assert 6.0 <= cam.center[2] <= 15.0
				pitch = math.degrees(math.asin(-cam.optical_axis[2]))
				assert 15.0 - 1e-9 <= pitch <= 45.0 + 1e-9

def test_generator_is_deterministic():
	a = small_scene(11)
	b = small_scene(11)
	assert a == b
	assert dumps_scene(a) == dumps_scene(b)
	assert small_scene(12) != a

def test_generated_objects_are_visible():
	spec = SyntheticSceneSpec(seed=3, num_cameras=12, num_objects=20, image_size=(480, 272), focal=500.0)
	scene = generate_synthetic_scene(spec)
	assert scene.num_cameras == 12 and len(scene.objects) == 20
	bev_to_world = invert(scene.bev_frame)
	for obj in scene.objects:
		ground = transform_points(bev_to_world, obj.box.center)
		assert abs(ground[2] - obj.box.dims[2] / 2) <= 1e-9
		ground[2] = 0.0
		assert any(_visible(cam, ground) for cam in scene.cameras)

def test_frame_at_first_camera():
	scene = small_scene(4)
	origin = transform_points(scene.bev_frame, scene.cameras[0].center)
	assert abs(origin[0]) <= 1e-9 and abs(origin[1]) <= 1e-9

def test_generator_reports_infeasible_layout():
	#from 99 m at 15 degrees every ground point is out of viewing range
	spec = SyntheticSceneSpec(seed=0, num_cameras=1, num_objects=1,
		pole_height_range=(99.0, 99.5), pitch_range=(15.0, 15.0))
	e = expect_error(InfeasibleLayout, generate_synthetic_scene, spec)
	assert e.exit_code == 3
	assert e.context["requested"] == 1

def test_synthetic_spec_validation():
	expect_error(ValidationError, SyntheticSceneSpec, num_cameras=0)
	expect_error(ValidationError, SyntheticSceneSpec, num_cameras=13)
	expect_error(ValidationError, SyntheticSceneSpec, pole_height_range=(0.0, 10.0))
	expect_error(ValidationError, SyntheticSceneSpec, pitch_range=(10.0, 30.0))
	expect_error(ValidationError, SyntheticSceneSpec, layout="roundabout")
	expect_error(ValidationError, SyntheticSceneSpec, seed=-1)
	assert SyntheticSceneSpec(num_cameras=16, max_cameras=16).num_cameras == 16

def test_scene_file_round_trip():
	scene = small_scene(5, objects=8)
	with temp_folder() as folder:
		filepath = folder.join("scene.json")
		save_scene(scene, filepath)
		loaded = load_scene(filepath)
	assert loaded == scene
	assert dumps_scene(loaded) == dumps_scene(scene)

def test_scene_file_rejects_bad_cameras():
	data = scene_to_dict(small_scene(6))
	empty = dict(data, cameras=[])
	e = expect_error(ValidationError, scene_from_dict, empty)
	assert e.context["field"] == "cameras"

	skewed = json.loads(json.dumps(data))
	skewed["cameras"][1]["world_to_camera"]["rotation"][0] *= 1.01
	e = expect_error(ValidationError, scene_from_dict, skewed)
	assert e.context["field"].startswith("cameras[1].world_to_camera")

	missing = json.loads(json.dumps(data))
	del missing["cameras"][0]["intrinsics"]["fx"]
	e = expect_error(ParseError, scene_from_dict, missing)
	assert e.context["field"] == "cameras[0].intrinsics.fx"

def test_scene_file_parse_error_location():
	e = expect_error(ParseError, loads_scene, "{\n  \"scene_id\": ,\n}")
	assert e.context["line"] == 2
	assert e.context["column"] > 1
	assert "line=2" in e.to_line()

def test_scene_camera_removal():
	scene = small_scene(7, cameras=4)
	smaller = scene.without_camera(1)
	assert smaller.num_cameras == 3
	assert [c.camera_id for c in smaller.cameras] == ["cam00", "cam02", "cam03"]
	assert smaller.objects == scene.objects
	expect_error(ValidationError, scene.without_camera, 4)

def test_roi_bitmap_round_trip():
	rng = np.random.default_rng(8)
	bitmap = np.where(rng.random((17, 23)) < 0.5, 0, 255).astype(np.uint8)
	with temp_folder() as folder:
		filepath = folder.join("roi", "cam00.pgm")
		save_roi_bitmap(filepath, bitmap)
		with open(filepath, "rb") as f: assert f.read(2) == b"P5"
		assert np.array_equal(load_roi_bitmap(filepath), bitmap)
		bad = folder.join("bad.pgm")
		save_roi_bitmap(bad, np.full((4, 4), 7, dtype=np.uint8))
		expect_error(ValidationError, load_roi_bitmap, bad)

def test_roi_reference_resolution():
	assert resolve_roi_path("/data/scenes/a.json", "roi/cam00.pgm") == "/data/scenes/roi/cam00.pgm"

if __name__ == "__main__":
	sys.exit(run_tests(globals()))
