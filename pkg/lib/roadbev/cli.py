"""Command line tool.

Every command reads and writes files only, so batch experiments are
reproducible: with the same flags and inputs the outputs are byte-identical
for any ``--threads``.  Failures print a single ``error kind=... exit=...``
line on stderr and exit with the error's code (2 usage, 3 generation,
4 validation, 5 I/O).
"""
import sys
import json
import re
import argparse
from roadbev import version
from roadbev.ambiguity import Variant, run_ambiguity_experiment
from roadbev.augmentation import (
	BevAugmentation, AugmentationRanges, PsiMode, apply_augmentation, sample_augmentation, coverage_balance)
from roadbev.debugging import Clocker
from roadbev.errors import RoadBevError, UsageError, ValidationError, ExitCode
from roadbev.features import (
	AggregateOptions, RotationEmbeddingTable, aggregate, synthesize_feature_maps,
	load_feature_map, save_bev_feature, load_bev_feature)
from roadbev.fsio import FileSystemUtils
from roadbev.grid import (
	BevGridSpec, CamMask, RoiMask, DEFAULT_Z_SAMPLES, build_mapping, coverage_stats, save_mapping, load_mapping)
from roadbev.logging import loggers, ConsoleLogger, FileLogger, MessageLevel
from roadbev.metrics import MetricsConfig, compute_metrics, load_detections
from roadbev.render.figure import SceneFigure, DetectionsFigure, AmbiguityFigure
from roadbev.render.raster import (
	Images, hits_raster, feature_norm_raster, trained_count_raster, draw_range_circles, save_ppm)
from roadbev.scene import Layout, SyntheticSceneSpec, generate_synthetic_scene, load_scene, save_scene, dumps_scene
from roadbev.workers import resolve_threads

__all__ = ["RunConfig", "build_parser", "main"]

class RunConfig:
	"""Global settings of one command line run.

	:ivar seed: Random seed, an integer in [0, 2^64).
	:ivar threads: Worker count, 0 for one per CPU.
	:ivar out: Output path, or None for stdout where the command allows it.
	:ivar log_level: Console log level name.
	:ivar log_file: Log file path, or None.
	:ivar max_cameras: Maximal camera count of loaded scenes.
	"""
	def __init__(self, seed=0, threads=1, out=None, log_level="warning", log_file=None, max_cameras=12):
		#config
		self.seed = int(seed)
		self.threads = int(threads)
		self.out = out
		self.log_level = log_level
		self.log_file = log_file
		self.max_cameras = int(max_cameras)

		#validate
		if not 0 <= self.seed < 2 ** 64: raise UsageError("seed must be in [0, 2^64)", flag="--seed")
		if self.threads < 0: raise UsageError("thread count must not be negative", flag="--threads")
		if self.max_cameras < 1: raise UsageError("maximal camera count must be positive", flag="--max-cameras")
		resolve_threads(self.threads)

	@classmethod
	def from_args(cls, args):
		return cls(args.seed, args.threads, args.out, args.log_level, args.log_file, args.max_cameras)

	def setup_logging(self):
		console = ConsoleLogger()
		console.enabled_level = MessageLevel.from_name(self.log_level)
		loggers.register_logger(console)
		if self.log_file:
			logger = FileLogger(self.log_file)
			logger.enabled_level = MessageLevel.DEBUG
			loggers.register_logger(logger)

	def require_out(self, what):
		if not self.out: raise UsageError("--out is required to write the {}".format(what), flag="--out")
		return self.out

	def emit_text(self, text):
		"""Write text to ``--out`` or stdout."""
		if self.out:
			FileSystemUtils.save_text(self.out, text)
		else:
			sys.stdout.write(text)

class _Parser(argparse.ArgumentParser):
	#usage errors become RoadBevError so they print as one machine-parsable line
	def error(self, message):
		raise UsageError(message)

def _range(text):
	"""Parse ``a:b``."""
	try:
		a, b = text.split(":")
		return (float(a), float(b))
	except ValueError:
		raise argparse.ArgumentTypeError("expected a:b, got {!r}".format(text))

def _floats(text):
	try:
		return tuple(float(t) for t in text.split(","))
	except ValueError:
		raise argparse.ArgumentTypeError("expected comma separated numbers, got {!r}".format(text))

def _ints(text):
	try:
		return tuple(int(t) for t in text.split(","))
	except ValueError:
		raise argparse.ArgumentTypeError("expected comma separated integers, got {!r}".format(text))

def _size(text):
	try:
		w, h = text.lower().split("x")
		return (int(w), int(h))
	except ValueError:
		raise argparse.ArgumentTypeError("expected WIDTHxHEIGHT, got {!r}".format(text))

_RANGE_VALUE = re.compile(r"^-?[0-9.]+(e-?[0-9]+)?:-?[0-9.]+(e-?[0-9]+)?$")

def _join_range_values(argv):
	#"--x-range -160:160" would read -160:160 as a flag
	joined = []
	for token in argv:
		if joined and joined[-1].startswith("--") and "=" not in joined[-1] and _RANGE_VALUE.match(token):
			joined[-1] = joined[-1] + "=" + token
		else:
			joined.append(token)
	return joined

def _on_off(text):
	if text not in ("on", "off"): raise argparse.ArgumentTypeError("expected on or off, got {!r}".format(text))
	return text == "on"

def _common_flags():
	parser = _Parser(add_help=False)
	group = parser.add_argument_group("global flags")
	group.add_argument("--seed", type=int, default=0, help="random seed, integer in [0, 2^64) (default: 0)")
	group.add_argument("--threads", type=int, default=1,
		help="worker threads, 0 for one per CPU; outputs do not depend on it (default: 1)")
	group.add_argument("--out", default=None, help="output path (file, or folder for ambiguity-demo)")
	group.add_argument("--log-level", default="warning", choices=sorted(MessageLevel.NAMES.keys()),
		help="console log level, logs go to stderr (default: warning)")
	group.add_argument("--log-file", default=None, help="append debug logs to this file")
	group.add_argument("--max-cameras", type=int, default=12, help="maximal cameras per scene, count (default: 12)")
	return parser

def _grid_flags():
	parser = _Parser(add_help=False)
	group = parser.add_argument_group("grid flags")
	group.add_argument("--grid-preset", choices=("roscenes", "urban"), default="roscenes",
		help="base grid: roscenes 500x500 cells over X [-160, 160] m, Y [-20, 800] m; "
			"urban 300x300 cells over X [-170, 130] m, Y [-80, 220] m (default: roscenes)")
	group.add_argument("--nx", type=int, help="cells along X, count (overrides the preset)")
	group.add_argument("--ny", type=int, help="cells along Y, count (overrides the preset)")
	group.add_argument("--x-range", type=_range, help="X extent xmin:xmax in meters (overrides the preset)")
	group.add_argument("--y-range", type=_range, help="Y extent ymin:ymax in meters (overrides the preset)")
	group.add_argument("--z-samples", type=_floats, default=DEFAULT_Z_SAMPLES,
		help="pillar sample heights in meters above ground, comma separated (default: 0,1,2,3)")
	return parser

def _grid_from_args(args):
	base = BevGridSpec.urban() if args.grid_preset == "urban" else BevGridSpec.roscenes()
	try:
		return BevGridSpec(
			args.nx if args.nx is not None else base.nx,
			args.ny if args.ny is not None else base.ny,
			args.x_range if args.x_range is not None else base.x_range,
			args.y_range if args.y_range is not None else base.y_range,
			args.z_samples)
	except ValidationError as e:
		raise UsageError("invalid grid: {}".format(e.message), **e.context)

def _ranges_from_args(args, grid=None):
	if args.max_translation is not None:
		max_translation = args.max_translation
	elif grid is not None:
		max_translation = AugmentationRanges.for_grid(grid).max_translation
	else:
		max_translation = 0.0
	try:
		return AugmentationRanges(max_translation, args.psi_mode, args.right_angles)
	except ValidationError as e:
		raise UsageError(e.message, **e.context)

def _load_scene(config, filepath):
	return load_scene(filepath, config.max_cameras)

def _pairs_text(pairs):
	lines = []
	for key, value in pairs.items():
		if isinstance(value, float): value = repr(value)
		elif isinstance(value, bool): value = "true" if value else "false"
		lines.append("{}={}".format(key, value))
	return "\n".join(lines) + "\n"

def cmd_gen_scene(config, args, clocker):
	try:
		spec = SyntheticSceneSpec(
			seed=config.seed, num_cameras=args.cameras, layout=args.layout, num_objects=args.objects,
			pole_height_range=args.pole_height, pitch_range=args.pitch, image_size=args.image_size,
			focal=args.focal, max_cameras=config.max_cameras, scene_id=args.scene_id)
	except ValidationError as e:
		raise UsageError(e.message, **e.context)
	scene = generate_synthetic_scene(spec)
	clocker.record("generate")
	config.emit_text(dumps_scene(scene))
	clocker.record("write")

def cmd_build_mapping(config, args, clocker):
	out = config.require_out("mapping table")
	grid = _grid_from_args(args)
	scene = _load_scene(config, args.scene)
	cam_mask = CamMask.from_bits(args.cam_mask) if args.cam_mask is not None else None
	roi_mask = RoiMask.from_scene(scene, args.scene, args.roi_dir)
	clocker.record("load")
	table = build_mapping(scene, grid, cam_mask, roi_mask, config.threads)
	clocker.record("build-mapping")
	save_mapping(table, out)
	stats = coverage_stats(table)
	sys.stdout.write(_pairs_text({
		"cells": grid.num_cells,
		"hits": table.num_hits,
		"cells_with_hits": stats.cells_with_hits,
		"hits_per_camera": ",".join(str(n) for n in stats.hits_per_camera),
		"empty_cell_fraction": stats.empty_cell_fraction}))
	clocker.record("write")

def cmd_augment(config, args, clocker):
	out = config.require_out("augmented scene")
	scene = _load_scene(config, args.scene)
	fixed = (args.delta_x, args.delta_y, args.delta_psi)
	if any(v is not None for v in fixed):
		aug = BevAugmentation((args.delta_x or 0.0, args.delta_y or 0.0), args.delta_psi or 0.0)
	else:
		aug = sample_augmentation(config.seed, _ranges_from_args(args))
	augmented = apply_augmentation(scene, aug)
	if args.scene_id: augmented = augmented.replace(scene_id=args.scene_id)
	clocker.record("augment")
	save_scene(augmented, out)
	record = json.dumps({"source_scene": scene.scene_id, "augmentation": aug.to_dict()}, indent=2) + "\n"
	if args.record: FileSystemUtils.save_text(args.record, record)
	sys.stdout.write(record)
	clocker.record("write")

def cmd_aggregate(config, args, clocker):
	out = config.require_out("BEV feature")
	scene = _load_scene(config, args.scene)
	table = load_mapping(args.mapping)
	if args.features:
		maps = [load_feature_map(filepath) for filepath in args.features]
	elif args.synth_features is not None:
		maps = synthesize_feature_maps(scene, args.channels, args.stride, args.synth_features)
	else:
		raise UsageError("give feature files or --synth-features", flag="--features")
	clocker.record("load")
	channels = maps[0].channels if maps else args.channels
	embedding_seed = args.embedding_seed if args.embedding_seed is not None else config.seed
	options = AggregateOptions(
		use_rotation_embedding=args.embedding,
		use_position_encoding=args.position_encoding,
		embedding_table=RotationEmbeddingTable.from_seed(embedding_seed, channels) if args.embedding else None,
		threads=config.threads)
	feature = aggregate(maps, table, scene, options)
	clocker.record("aggregate")
	save_bev_feature(feature, out)
	clocker.record("write")

def cmd_ambiguity_demo(config, args, clocker):
	embedding_seed = args.embedding_seed if args.embedding_seed is not None else config.seed
	run = run_ambiguity_experiment(args.variant, args.embedding, embedding_seed, args.channels, args.stride,
		feature_seed=config.seed, threads=config.threads, detailed=True)
	clocker.record("experiment")
	text = run.report.to_text()
	sys.stdout.write(text)
	if config.out:
		name = "ambiguity-{}-{}".format(args.variant, "on" if args.embedding else "off")
		FileSystemUtils.create_folder(config.out)
		FileSystemUtils.save_text("{}/{}.txt".format(config.out.rstrip("/"), name), text)
		figure = AmbiguityFigure()
		figure.data_binding = run
		figure.filepath = "{}/{}.svg".format(config.out.rstrip("/"), name)
		figure.paint()
	clocker.record("write")

def cmd_evaluate(config, args, clocker):
	try:
		metrics_config = MetricsConfig(args.thresholds, args.tp_threshold, args.min_recall, args.min_precision,
			args.group_categories)
	except ValidationError as e:
		raise UsageError(e.message, **e.context)
	dets = load_detections(args.detections)
	gts = load_detections(args.ground_truth)
	clocker.record("load")
	report = compute_metrics(dets, gts, metrics_config)
	clocker.record("evaluate")
	if args.format == "json":
		text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
	elif args.format == "table":
		text = report.to_table_text()
	else:
		text = report.to_text()
	config.emit_text(text)
	clocker.record("write")

def cmd_render(config, args, clocker):
	out = config.require_out("render")
	if args.style == "hits":
		table = load_mapping(args.input)
		image = hits_raster(table, args.cmap, args.scale)
		draw_range_circles(image, table.grid, args.circle_spacing, args.scale)
		save_ppm(image, out)
	elif args.style == "feature-norm":
		feature = load_bev_feature(args.input)
		image = feature_norm_raster(feature, args.cmap, args.scale)
		if args.mapping:
			table = load_mapping(args.mapping)
			if (table.grid.ny, table.grid.nx) != feature.hit_count.shape:
				raise ValidationError("mapping grid does not match the BEV feature", field="--mapping")
			images = Images()
			images.append(draw_range_circles(image, table.grid, args.circle_spacing, args.scale))
			images.append(hits_raster(table, args.cmap, args.scale))
			image = images.stitch(vertical=False)
		save_ppm(image, out)
	elif args.style == "detections":
		if not args.ground_truth: raise UsageError("detections style needs --ground-truth", flag="--ground-truth")
		dets = load_detections(args.input)
		gts = load_detections(args.ground_truth)
		frame_ids = gts.frame_ids + [f for f in dets.frame_ids if f not in gts.frame_ids]
		frame_id = args.frame_id if args.frame_id is not None else (frame_ids[0] if frame_ids else "0")
		figure = DetectionsFigure()
		figure.data_binding = (dets, gts, frame_id)
		figure.circle_spacing = args.circle_spacing
		figure.filepath = out
		figure.paint()
	else:
		figure = SceneFigure()
		figure.data_binding = _load_scene(config, args.input)
		figure.circle_spacing = args.circle_spacing
		figure.filepath = out
		figure.paint()
	clocker.record("render")

def cmd_balance(config, args, clocker):
	grid = _grid_from_args(args)
	scene = _load_scene(config, args.scene)
	if args.samples < 1: raise UsageError("sample count must be positive", flag="--samples")
	ranges = _ranges_from_args(args, grid)
	clocker.record("load")
	report = coverage_balance(scene, grid, ranges, args.samples, config.seed, config.threads)
	clocker.record("balance")
	sys.stdout.write(_pairs_text(report.to_dict()))
	if config.out:
		image = trained_count_raster(report.trained_counts, scale=args.scale)
		save_ppm(draw_range_circles(image, grid, args.circle_spacing, args.scale), config.out)
	clocker.record("write")

def _augmentation_flags(parser):
	parser.add_argument("--max-translation", type=float, default=None,
		help="radius of the translation disk in meters (default: 0 for augment, 25%% of the smaller grid extent "
			"for balance)")
	parser.add_argument("--psi-mode", choices=PsiMode.ALL, default=PsiMode.UNIFORM,
		help="rotation sampling: uniform over (-pi, pi] radians or right angles (default: uniform)")
	parser.add_argument("--right-angles", type=_ints, default=(0, 1, 2, 3),
		help="quarter turns allowed in right-angles mode, comma separated subset of 0,1,2,3 (default: 0,1,2,3)")

def build_parser():
	"""Build the argument parser of the ``roadbev`` tool."""
	common = _common_flags()
	grid = _grid_flags()
	parser = _Parser(prog="roadbev", description="Roadside multi-camera BEV mapping experiments.")
	parser.add_argument("--version", action="version", version="roadbev " + version())
	commands = parser.add_subparsers(dest="command", metavar="COMMAND")
	commands.required = True

	p = commands.add_parser("gen-scene", parents=[common], help="generate a synthetic roadside scene (JSON)")
	p.add_argument("--cameras", type=int, default=4, help="camera count, 1 to --max-cameras (default: 4)")
	p.add_argument("--layout", choices=Layout.ALL, default=Layout.CORRIDOR, help="pole layout (default: corridor)")
	p.add_argument("--objects", type=int, default=10, help="object count (default: 10)")
	p.add_argument("--pole-height", type=_range, default=(6.0, 15.0),
		help="camera mounting height range min:max in meters (default: 6:15)")
	p.add_argument("--pitch", type=_range, default=(15.0, 45.0),
		help="downward camera pitch range min:max in degrees, within 15:60 (default: 15:45)")
	p.add_argument("--image-size", type=_size, default=(960, 544),
		help="camera image size WIDTHxHEIGHT in pixels (default: 960x544)")
	p.add_argument("--focal", type=float, default=1000.0, help="focal length in pixels (default: 1000)")
	p.add_argument("--scene-id", default=None, help="scene id (default: synthetic-<layout>-<seed>)")
	p.set_defaults(handler=cmd_gen_scene)

	p = commands.add_parser("build-mapping", parents=[common, grid],
		help="build the BEV cell to pixel mapping table (BMAP)")
	p.add_argument("scene", help="scene JSON file")
	p.add_argument("--cam-mask", default=None,
		help="active cameras as a bit string, one 0/1 per camera in scene order (default: all active)")
	p.add_argument("--roi-dir", default=None,
		help="folder of per-camera ROI bitmaps <camera_id>.pgm (0 outside, 255 inside, image pixels)")
	p.set_defaults(handler=cmd_build_mapping)

	p = commands.add_parser("augment", parents=[common], help="move the BEV frame of a scene")
	p.add_argument("scene", help="scene JSON file")
	_augmentation_flags(p)
	p.add_argument("--delta-x", type=float, default=None, help="fixed frame translation along X in meters")
	p.add_argument("--delta-y", type=float, default=None, help="fixed frame translation along Y in meters")
	p.add_argument("--delta-psi", type=float, default=None, help="fixed frame rotation in radians")
	p.add_argument("--record", default=None, help="also write the applied augmentation (JSON) here")
	p.add_argument("--scene-id", default=None, help="scene id of the augmented scene (default: unchanged)")
	p.set_defaults(handler=cmd_augment)

	p = commands.add_parser("aggregate", parents=[common], help="aggregate camera features into a BEV feature (BEVF)")
	p.add_argument("scene", help="scene JSON file")
	p.add_argument("mapping", help="mapping table (BMAP) built for the scene")
	p.add_argument("--features", nargs="+", default=None, help="camera feature maps (FMAP), any order")
	p.add_argument("--synth-features", type=int, default=None, metavar="SEED",
		help="synthesize camera feature maps from this seed instead of reading files")
	p.add_argument("--channels", type=int, default=16, help="channels of synthesized features, a multiple of 4 (default: 16)")
	p.add_argument("--stride", type=int, default=8, help="stride of synthesized features in pixels (default: 8)")
	p.add_argument("--embedding", type=_on_off, default=False, help="camera rotation embedding, on|off (default: off)")
	p.add_argument("--embedding-seed", type=int, default=None, help="seed of the embedding table (default: --seed)")
	p.add_argument("--position-encoding", type=_on_off, default=True,
		help="cell position encoding, on|off (default: on)")
	p.set_defaults(handler=cmd_aggregate)

	p = commands.add_parser("ambiguity-demo", parents=[common],
		help="show the orientation ambiguity of single-cell objects across two BEV frames")
	p.add_argument("--variant", choices=Variant.ALL, default=Variant.PEDESTRIAN,
		help="obstacle covering one cell (pedestrian) or several (vehicle) (default: pedestrian)")
	p.add_argument("--embedding", type=_on_off, default=False, help="camera rotation embedding, on|off (default: off)")
	p.add_argument("--embedding-seed", type=int, default=None, help="seed of the embedding table (default: --seed)")
	p.add_argument("--channels", type=int, default=16, help="feature channels, a multiple of 4 (default: 16)")
	p.add_argument("--stride", type=int, default=8, help="feature stride in pixels (default: 8)")
	p.set_defaults(handler=cmd_ambiguity_demo)

	p = commands.add_parser("evaluate", parents=[common], help="compute mAP, mATE, mASE, mAOE and NDS")
	p.add_argument("detections", help="detections JSON file")
	p.add_argument("ground_truth", help="ground truth JSON file")
	p.add_argument("--thresholds", type=_floats, default=(0.5, 1.0, 2.0, 4.0),
		help="center distance thresholds for AP in meters, comma separated (default: 0.5,1,2,4)")
	p.add_argument("--tp-threshold", type=float, default=2.0,
		help="center distance threshold for true positive errors in meters (default: 2)")
	p.add_argument("--min-recall", type=float, default=0.1, help="recall ignored below this, ratio (default: 0.1)")
	p.add_argument("--min-precision", type=float, default=0.1,
		help="precision ignored below this, ratio (default: 0.1)")
	p.add_argument("--group-categories", action="store_true",
		help="evaluate the vehicle, cyclist and pedestrian groups")
	p.add_argument("--format", choices=("text", "table", "json"), default="text",
		help="report format (default: text)")
	p.set_defaults(handler=cmd_evaluate)

	p = commands.add_parser("render", parents=[common], help="render a static picture (PPM raster or SVG diagram)")
	p.add_argument("input", help="mapping (hits), BEV feature (feature-norm), detections or scene file")
	p.add_argument("--style", choices=("hits", "feature-norm", "detections", "scene"), default="hits",
		help="hits and feature-norm write PPM, detections and scene write SVG (default: hits)")
	p.add_argument("--circle-spacing", type=float, default=100.0,
		help="radial spacing of the range circles in meters, 0 for none (default: 100)")
	p.add_argument("--scale", type=int, default=1, help="raster pixels per grid cell (default: 1)")
	p.add_argument("--cmap", default="viridis", help="matplotlib colormap of rasters (default: viridis)")
	p.add_argument("--mapping", default=None, help="feature-norm: mapping table for range circles and a hits panel")
	p.add_argument("--ground-truth", default=None, help="detections: ground truth JSON file")
	p.add_argument("--frame-id", default=None, help="detections: frame to draw (default: the first)")
	p.set_defaults(handler=cmd_render)

	p = commands.add_parser("balance", parents=[common, grid],
		help="measure grid training coverage with and without BEV frame augmentation")
	p.add_argument("scene", help="scene JSON file")
	_augmentation_flags(p)
	p.add_argument("--samples", type=int, default=16, help="augmentations sampled, count (default: 16)")
	p.add_argument("--scale", type=int, default=1, help="raster pixels per grid cell (default: 1)")
	p.add_argument("--circle-spacing", type=float, default=100.0,
		help="radial spacing of the range circles in meters, 0 for none (default: 100)")
	p.set_defaults(handler=cmd_balance)
	return parser

def main(argv=None):
	"""Run the command line tool.

	:param argv: Arguments without the program name, sys.argv[1:] if None.

	:returns: Exit code.
	"""
	try:
		argv = sys.argv[1:] if argv is None else list(argv)
		args = build_parser().parse_args(_join_range_values(argv))
		config = RunConfig.from_args(args)
	except RoadBevError as e:
		print(e.to_line(), file=sys.stderr)
		return e.exit_code

	config.setup_logging()
	try:
		with Clocker() as clocker:
			loggers.debug("command started", command=args.command, seed=config.seed, threads=config.threads)
			args.handler(config, args, clocker)
		clocker.log_results(loggers)
		return ExitCode.OK
	except RoadBevError as e:
		loggers.debug("command failed", command=args.command, kind=e.kind)
		print(e.to_line(), file=sys.stderr)
		return e.exit_code
	except ValueError as e:
		#bad values reaching library code through flags
		error = UsageError(str(e), command=args.command)
		print(error.to_line(), file=sys.stderr)
		return error.exit_code
	finally:
		loggers.close()

if __name__ == "__main__":
	sys.exit(main())
