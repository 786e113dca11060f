import io
import json
import contextlib
from helpers import *
from roadbev.cli import build_parser, main, _grid_from_args, _join_range_values
from roadbev.grid import BevGridSpec, load_mapping
from roadbev.metrics import DetectionSet, Detection, detections_from_scene, save_detections
from roadbev.scene import load_scene

SCENE_FLAGS = ["--cameras", "4", "--objects", "6", "--image-size", "240x136", "--focal", "250"]
GRID_FLAGS = ["--nx", "32", "--ny", "40", "--x-range", "-16:48", "--y-range", "-20:140", "--z-samples", "0,1.5"]

def run(*argv):
	"""Run the tool, returning (exit code, stdout, stderr)."""
	stdout, stderr = io.StringIO(), io.StringIO()
	with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
		code = main([str(a) for a in argv])
	return code, stdout.getvalue(), stderr.getvalue()

def read_bytes(filepath):
	with open(filepath, "rb") as f:
		return f.read()

def make_scene(folder, name="scene.json", seed=1):
	filepath = folder.join(name)
	code, _, err = run("gen-scene", "--seed", seed, "--out", filepath, *SCENE_FLAGS)
	assert code == 0, err
	return filepath

def make_mapping(folder, scene, name="scene.bmap", threads=1, *extra):
	filepath = folder.join(name)
	code, out, err = run("build-mapping", scene, "--out", filepath, "--threads", threads, *GRID_FLAGS, *extra)
	assert code == 0, err
	return filepath, out

def test_gen_scene_is_deterministic():
	with temp_folder() as folder:
		a = make_scene(folder, "a.json", seed=5)
		b = make_scene(folder, "b.json", seed=5)
		assert read_bytes(a) == read_bytes(b)
		code, out, _ = run("gen-scene", "--seed", 5, *SCENE_FLAGS)
		assert code == 0 and out.encode("utf-8") == read_bytes(a)
		assert load_scene(a).num_cameras == 4

def test_usage_errors():
	code, _, err = run("gen-scene", "--cameras", "0")
	assert code == 2
	assert err.startswith("error kind=UsageError exit=2")
	assert run("gen-scene", "--bogus")[0] == 2
	assert run("frobnicate")[0] == 2
	assert run("gen-scene", "--seed", "-1")[0] == 2
	assert run("gen-scene", "--pitch", "5:30")[0] == 2

def test_help_and_version():
	for argv in (["--help"], ["build-mapping", "--help"], ["--version"]):
		try:
			run(*argv)
		except SystemExit as e:
			assert e.code == 0
		else:
			raise AssertionError("argparse did not exit")
	text = build_parser().format_help()
	assert "build-mapping" in text and "ambiguity-demo" in text

def test_grid_flags():
	args = build_parser().parse_args(_join_range_values(
		["build-mapping", "s.json", "--nx", "500", "--ny", "500", "--x-range", "-160:160", "--y-range", "-20:800"]))
	assert _grid_from_args(args) == BevGridSpec.roscenes()
	args = build_parser().parse_args(["build-mapping", "s.json", "--grid-preset", "urban"])
	assert _grid_from_args(args) == BevGridSpec.urban()
	code, _, err = run("build-mapping", "s.json", "--out", "x.bmap", "--nx", "0")
	assert code == 2 and "kind=UsageError" in err

def test_build_mapping_masks():
	with temp_folder() as folder:
		scene = make_scene(folder)
		default, report = make_mapping(folder, scene, "default.bmap")
		full, _ = make_mapping(folder, scene, "full.bmap", 1, "--cam-mask", "1111")
		assert read_bytes(default) == read_bytes(full)
		pairs = dict(line.split("=", 1) for line in report.splitlines())
		assert int(pairs["cells"]) == 32 * 40
		assert int(pairs["hits"]) == load_mapping(default).num_hits
		code, _, err = run("build-mapping", scene, "--out", folder.join("none.bmap"), "--cam-mask", "0000", *GRID_FLAGS)
		assert code == 4 and "kind=AllCamerasMasked" in err
		code, _, err = run("build-mapping", scene, "--out", folder.join("short.bmap"), "--cam-mask", "101", *GRID_FLAGS)
		assert code == 4 and "kind=MaskShapeMismatch" in err
		code, _, err = run("build-mapping", folder.join("missing.json"), "--out", folder.join("m.bmap"), *GRID_FLAGS)
		assert code == 5 and "kind=FileIOError" in err
		assert run("build-mapping", scene, *GRID_FLAGS)[0] == 2

def test_outputs_independent_of_threads():
	with temp_folder() as folder:
		scene = make_scene(folder)
		bmap_1, report_1 = make_mapping(folder, scene, "t1.bmap", 1)
		bmap_4, report_4 = make_mapping(folder, scene, "t4.bmap", 4)
		assert read_bytes(bmap_1) == read_bytes(bmap_4) and report_1 == report_4

		features = []
		for threads in (1, 4):
			filepath = folder.join("t{}.bevf".format(threads))
			code, _, err = run("aggregate", scene, bmap_1, "--synth-features", 7, "--channels", 4,
				"--embedding", "on", "--threads", threads, "--out", filepath)
			assert code == 0, err
			features.append(read_bytes(filepath))
		assert features[0] == features[1]

		balances = []
		for threads in (1, 4):
			code, out, err = run("balance", scene, "--samples", 2, "--seed", 3, "--threads", threads, *GRID_FLAGS)
			assert code == 0, err
			balances.append(out)
		assert balances[0] == balances[1]
		assert "augmented_empty_fraction=" in balances[0]

def test_augment_record():
	with temp_folder() as folder:
		scene = make_scene(folder)
		outputs = []
		for threads in (1, 4):
			augmented = folder.join("aug{}.json".format(threads))
			code, out, err = run("augment", scene, "--seed", 9, "--max-translation", 20, "--psi-mode", "right-angles",
				"--threads", threads, "--out", augmented, "--record", folder.join("record.json"))
			assert code == 0, err
			outputs.append((out, read_bytes(augmented)))
		assert outputs[0] == outputs[1]
		record = json.loads(outputs[0][0])
		assert record["source_scene"] == load_scene(scene).scene_id
		assert len(record["augmentation"]["delta_xy"]) == 2
		assert json.loads(read_bytes(folder.join("record.json")).decode("utf-8")) == record

		code, out, _ = run("augment", scene, "--delta-x", "0", "--out", folder.join("same.json"))
		assert code == 0
		assert load_scene(folder.join("same.json")) == load_scene(scene)

def test_ambiguity_demo():
	with temp_folder() as folder:
		code, out, err = run("ambiguity-demo", "--variant", "pedestrian", "--embedding", "off", "--out", folder.path)
		assert code == 0, err
		assert "resolved=false" in out
		assert read_bytes(folder.join("ambiguity-pedestrian-off.txt")).decode("utf-8") == out
		svg = read_bytes(folder.join("ambiguity-pedestrian-off.svg"))
		assert b"<svg" in svg
		code, again, _ = run("ambiguity-demo", "--variant", "pedestrian", "--embedding", "off", "--threads", 4,
			"--out", folder.path)
		assert again == out
		assert read_bytes(folder.join("ambiguity-pedestrian-off.svg")) == svg
		code, out, _ = run("ambiguity-demo", "--embedding", "on", "--embedding-seed", 2)
		assert code == 0 and "embedding_enabled=true" in out

def test_evaluate_formats():
	with temp_folder() as folder:
		scene = load_scene(make_scene(folder))
		gts = detections_from_scene(scene, "0")
		dets = DetectionSet()
		for k, gt in enumerate(gts.frame("0")):
			center = gt.box.center + (0.3 * (k % 3), 0.0, 0.0)
			dets.add("0", Detection(gt.box.replace(center=center), 0.9 - 0.1 * k))
		save_detections(dets, folder.join("dets.json"))
		save_detections(gts, folder.join("gts.json"))
		texts = {}
		for fmt in ("text", "table", "json"):
			code, out, err = run("evaluate", folder.join("dets.json"), folder.join("gts.json"), "--format", fmt)
			assert code == 0, err
			texts[fmt] = out
		assert texts["text"].startswith("mAP=")
		assert "NDS" in texts["table"]
		assert 0.0 <= json.loads(texts["json"])["NDS"] <= 1.0
		code, _, err = run("evaluate", folder.join("dets.json"), folder.join("gts.json"), "--thresholds", "0,1")
		assert code == 2
		with open(folder.join("broken.json"), "w") as f: f.write("{\"frames\": [")
		code, _, err = run("evaluate", folder.join("dets.json"), folder.join("broken.json"))
		assert code == 4 and "kind=ParseError" in err and "line=1" in err

def test_render_styles():
	with temp_folder() as folder:
		scene = make_scene(folder)
		bmap, _ = make_mapping(folder, scene)
		code, _, err = run("render", bmap, "--style", "hits", "--scale", 2, "--circle-spacing", 20,
			"--out", folder.join("hits.ppm"))
		assert code == 0, err
		assert read_bytes(folder.join("hits.ppm")).startswith(b"P6")

		bevf = folder.join("scene.bevf")
		assert run("aggregate", scene, bmap, "--synth-features", 1, "--channels", 4, "--out", bevf)[0] == 0
		code, _, err = run("render", bevf, "--style", "feature-norm", "--mapping", bmap, "--out", folder.join("norm.ppm"))
		assert code == 0, err

		svgs = []
		for name in ("a.svg", "b.svg"):
			code, _, err = run("render", scene, "--style", "scene", "--out", folder.join(name))
			assert code == 0, err
			svgs.append(read_bytes(folder.join(name)))
		assert svgs[0] == svgs[1] and b"<svg" in svgs[0]

		save_detections(detections_from_scene(load_scene(scene), "0"), folder.join("gts.json"))
		code, _, err = run("render", folder.join("gts.json"), "--style", "detections", "--out", folder.join("d.svg"))
		assert code == 2
		code, _, err = run("render", folder.join("gts.json"), "--style", "detections",
			"--ground-truth", folder.join("gts.json"), "--out", folder.join("d.svg"))
		assert code == 0, err
		assert run("render", bmap, "--style", "hits", "--cmap", "nonexistent", "--out", folder.join("x.ppm"))[0] == 5

def test_log_file():
	with temp_folder() as folder:
		log = folder.join("run.log")
		code, _, err = run("gen-scene", "--log-level", "info", "--log-file", log, *SCENE_FLAGS)
		assert code == 0
		assert "scene generated" in err
		text = read_bytes(log).decode("utf-8")
		assert "command started" in text and "stage timing" in text

if __name__ == "__main__":
	sys.exit(run_tests(globals()))
