"""3D detection metrics: mAP, mATE, mASE, mAOE and a detection score.

Detections are matched to ground truth by planar center distance, greedy
in descending score.  AP is the normalized area under the interpolated
precision/recall curve, ignoring recall below ``min_recall`` and precision
below ``min_precision``.  True positive errors are taken at
``tp_threshold``.  The detection score combines them::

	NDS = (5 * mAP + sum(1 - min(1, err) for err in (mATE, mASE, mAOE))) / 8

Detection and ground truth files are JSON documents with
``{"frames": [{"frame_id": ..., "objects": [...]}]}``; objects follow the
scene file object schema plus a ``score`` in [0, 1].
"""
import json
import math
import numpy as np
import pandas as pd
from roadbev.errors import ValidationError, NonFinite, NoGroundTruth, ParseError
from roadbev.fsio import FileSystemUtils
from roadbev.geometry import Category, transform_points, wrap_angle, yaw_in_frame
from roadbev.logging import loggers
from roadbev.scene import SceneObject, loads_json, object_from_dict, object_to_dict

__all__ = [
	"Detection", "DetectionSet", "MetricsConfig", "MatchResult", "MetricsReport",
	"match", "compute_metrics", "average_precision",
	"translation_error", "scale_error", "orientation_error",
	"load_detections", "save_detections", "detections_from_scene"]

class Detection:
	"""A scored box.

	:ivar box: ``Box3D`` in the BEV frame.
	:ivar score: Confidence in [0, 1].
	:ivar object_id: Identifier, may be empty.
	"""
	def __init__(self, box, score=1.0, object_id=""):
		self.box = box
		self.score = float(score)
		self.object_id = str(object_id)
		if not math.isfinite(self.score):
			raise NonFinite("score must be finite", object_id=self.object_id)
		if not 0.0 <= self.score <= 1.0:
			raise ValidationError("score must lie in [0, 1]", object_id=self.object_id, score=self.score)

	@property
	def category(self):
		return self.box.category

	def __repr__(self):
		return "Detection({!r}, score={})".format(self.box, self.score)

class DetectionSet:
	"""Detections (or ground truth) per frame.

	:ivar frames: Dict of frame id to list of ``Detection``, in insertion order.
	"""
	def __init__(self, frames=None):
		self.frames = {}
		if frames:
			for frame_id, detections in frames.items():
				for detection in detections: self.add(frame_id, detection)

	def add(self, frame_id, detection):
		self.frames.setdefault(str(frame_id), []).append(detection)

	def frame(self, frame_id):
		return self.frames.get(str(frame_id), [])

	@property
	def frame_ids(self):
		return list(self.frames.keys())

	def __len__(self):
		return sum(len(d) for d in self.frames.values())

	def transformed(self, transform):
		"""Apply a rigid motion about the vertical axis to every box.

		:param transform: ``RigidTransform`` whose rotation is about the vertical axis.
		"""
		result = DetectionSet()
		for frame_id, detections in self.frames.items():
			result.frames[frame_id] = []
			for d in detections:
				box = d.box.replace(center=transform_points(transform, d.box.center), yaw=yaw_in_frame(d.box.yaw, transform))
				result.frames[frame_id].append(Detection(box, d.score, d.object_id))
		return result

	def to_dict(self):
		frames = []
		for frame_id, detections in self.frames.items():
			frames.append({
				"frame_id": frame_id,
				"objects": [object_to_dict(SceneObject(d.object_id or "det{:04d}".format(i), d.box), d.score)
					for i, d in enumerate(detections)]
			})
		return {"frames": frames}

	@classmethod
	def from_dict(cls, data):
		if not isinstance(data, dict) or not isinstance(data.get("frames"), list):
			raise ParseError("expected a list of frames", field="frames")
		result = cls()
		for i, frame in enumerate(data["frames"]):
			path = "frames[{}]".format(i)
			if not isinstance(frame, dict) or "frame_id" not in frame or not isinstance(frame.get("objects"), list):
				raise ParseError("frame needs frame_id and objects", field=path)
			result.frames.setdefault(str(frame["frame_id"]), [])
			for j, item in enumerate(frame["objects"]):
				opath = "{}.objects[{}]".format(path, j)
				obj = object_from_dict(item, opath)
				score = item.get("score", 1.0)
				if isinstance(score, bool) or not isinstance(score, (int, float)):
					raise ParseError("expected a number", field=opath + ".score")
				try:
					detection = Detection(obj.box, score, obj.object_id)
				except ValidationError as e:
					e.context["field"] = opath + ".score"
					raise
				result.add(frame["frame_id"], detection)
		return result

def detections_from_scene(scene, frame_id=None):
	"""Ground truth of a scene, as a one-frame ``DetectionSet``."""
	result = DetectionSet()
	frame_id = scene.scene_id if frame_id is None else frame_id
	result.frames[frame_id] = [Detection(obj.box, 1.0, obj.object_id) for obj in scene.objects]
	return result

def load_detections(filepath):
	try:
		return DetectionSet.from_dict(loads_json(FileSystemUtils.load_text(filepath)))
	except ValidationError as e:
		e.context.setdefault("path", filepath)
		raise

def save_detections(detections, filepath):
	FileSystemUtils.save_text(filepath, json.dumps(detections.to_dict(), indent=2) + "\n")

class MetricsConfig:
	"""Evaluation settings.

	:ivar thresholds: Matching distance thresholds for AP, in meters.
	:ivar tp_threshold: Matching distance for true positive errors, in meters.
	:ivar min_recall: Recall below it is ignored in AP.
	:ivar min_precision: Precision below it is ignored in AP.
	:ivar group_categories: Whether to evaluate the vehicle/cyclist/pedestrian groups
		instead of the fine categories.
	"""
	def __init__(self, thresholds=(0.5, 1.0, 2.0, 4.0), tp_threshold=2.0, min_recall=0.1, min_precision=0.1,
			group_categories=False):
		#config
		self.thresholds = tuple(float(t) for t in thresholds)
		self.tp_threshold = float(tp_threshold)
		self.min_recall = float(min_recall)
		self.min_precision = float(min_precision)
		self.group_categories = bool(group_categories)

		#validate
		if not self.thresholds or any(not (math.isfinite(t) and t > 0) for t in self.thresholds):
			raise ValidationError("distance thresholds must be positive", field="thresholds")
		if not (math.isfinite(self.tp_threshold) and self.tp_threshold > 0):
			raise ValidationError("true positive threshold must be positive", field="tp_threshold")
		if not (0 <= self.min_recall < 1 and 0 <= self.min_precision < 1):
			raise ValidationError("minimal recall and precision must lie in [0, 1)", field="min_recall/min_precision")

class MatchResult:
	"""Result of ``match()``.

	:ivar pairs: List of (detection index, ground truth index).
	:ivar unmatched_detections: Indices of unmatched detections.
	:ivar unmatched_ground_truths: Indices of unmatched ground truths.
	"""
	def __init__(self, pairs, unmatched_detections, unmatched_ground_truths):
		self.pairs = pairs
		self.unmatched_detections = unmatched_detections
		self.unmatched_ground_truths = unmatched_ground_truths

def _planar_distance(a, b):
	return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])

def _score_order(detections):
	#stable: equal scores keep input order
	return sorted(range(len(detections)), key=lambda i: -detections[i].score)

def match(dets, gts, threshold):
	"""Greedy one-to-one matching of one frame and category.

	Detections are taken by descending score; each matches the nearest
	unmatched ground truth within ``threshold`` meters (planar center
	distance).

	:param dets: List of ``Detection``.
	:param gts: List of ``Detection`` (ground truth).

	:returns: ``MatchResult``.
	"""
	taken = [False] * len(gts)
	pairs = []
	unmatched = []
	for i in _score_order(dets):
		best, best_distance = None, math.inf
		for j, gt in enumerate(gts):
			if taken[j]: continue
			distance = _planar_distance(dets[i].box, gt.box)
			if distance < best_distance:
				best, best_distance = j, distance
		if best is not None and best_distance <= threshold:
			taken[best] = True
			pairs.append((i, best))
		else:
			unmatched.append(i)
	return MatchResult(pairs, unmatched, [j for j in range(len(gts)) if not taken[j]])

def translation_error(det, gt):
	return _planar_distance(det.box, gt.box)

def scale_error(det, gt):
	"""1 - IoU of the two boxes after aligning centers and yaw."""
	a, b = det.box.dims, gt.box.dims
	intersection = float(np.prod(np.minimum(a, b)))
	volume_a, volume_b = float(np.prod(a)), float(np.prod(b))
	return 1.0 - intersection / (volume_a + volume_b - intersection)

def orientation_error(det, gt):
	"""Smallest absolute yaw difference, in [0, pi]."""
	return abs(wrap_angle(det.box.yaw - gt.box.yaw))

def average_precision(precision, min_recall, min_precision):
	"""Normalized AP from precision sampled at 101 equally spaced recalls."""
	p = np.asarray(precision)[int(round(100 * min_recall)) + 1:]
	return (float(np.mean(np.maximum(p, min_precision))) - min_precision) / (1.0 - min_precision)

class _CategoryData:
	def __init__(self):
		self.dets = []		#(score, frame_id, detection)
		self.gts = {}		#frame_id -> list of ground truth
		self.gt_count = 0

def _collect(dets, gts, config):
	def category_of(d):
		return Category.group_of(d.category) if config.group_categories else d.category

	data = {}
	for frame_id, frame_gts in gts.frames.items():
		for gt in frame_gts:
			entry = data.setdefault(category_of(gt), _CategoryData())
			entry.gts.setdefault(frame_id, []).append(gt)
			entry.gt_count += 1
	ignored = 0
	for frame_id, frame_dets in dets.frames.items():
		for d in frame_dets:
			entry = data.get(category_of(d))
			if entry is None:
				ignored += 1
				continue
			entry.dets.append((frame_id, d))
	if ignored: loggers.warning("detections without ground truth category ignored", count=ignored)
	return data

def _accumulate(entry, threshold):
	#global greedy matching by descending score, per frame
	order = sorted(range(len(entry.dets)), key=lambda i: -entry.dets[i][1].score)
	taken = {frame_id: [False] * len(g) for frame_id, g in entry.gts.items()}
	tp = np.zeros(len(order))
	matches = []
	for k, i in enumerate(order):
		frame_id, det = entry.dets[i]
		frame_gts = entry.gts.get(frame_id, [])
		best, best_distance = None, math.inf
		for j, gt in enumerate(frame_gts):
			if taken[frame_id][j]: continue
			distance = _planar_distance(det.box, gt.box)
			if distance < best_distance:
				best, best_distance = j, distance
		if best is not None and best_distance <= threshold:
			taken[frame_id][best] = True
			tp[k] = 1.0
			matches.append((det, frame_gts[best]))
	return tp, matches

def _precision_curve(tp, gt_count):
	if len(tp) == 0: return np.zeros(101)
	tps = np.cumsum(tp)
	fps = np.cumsum(1.0 - tp)
	precision = tps / (tps + fps)
	recall = tps / gt_count
	return np.interp(np.linspace(0.0, 1.0, 101), recall, precision, right=0.0)

class MetricsReport:
	"""Evaluation results.

	:ivar categories: Evaluated categories (those with ground truth), sorted.
	:ivar ap: Dict of category to dict of threshold to AP.
	:ivar ate: Dict of category to mean translation error (meters).
	:ivar ase: Dict of category to mean scale error.
	:ivar aoe: Dict of category to mean orientation error (radians).
	:ivar tp_count: Dict of category to true positives at the TP threshold.
	:ivar gt_count: Dict of category to ground truth count.
	:ivar mAP, mATE, mASE, mAOE, NDS: Composites.
	"""
	def __init__(self, thresholds, categories, ap, ate, ase, aoe, tp_count, gt_count):
		self.thresholds = thresholds
		self.categories = categories
		self.ap = ap
		self.ate = ate
		self.ase = ase
		self.aoe = aoe
		self.tp_count = tp_count
		self.gt_count = gt_count

		n = len(categories)
		self.mAP = sum(sum(ap[c].values()) / len(thresholds) for c in categories) / n
		self.mATE = sum(ate[c] for c in categories) / n
		self.mASE = sum(ase[c] for c in categories) / n
		self.mAOE = sum(aoe[c] for c in categories) / n
		errors = (self.mATE, self.mASE, self.mAOE)
		self.NDS = (5.0 * self.mAP + sum(1.0 - min(1.0, e) for e in errors)) / 8.0

	def category_ap(self, category):
		"""AP of a category averaged over the thresholds."""
		return sum(self.ap[category].values()) / len(self.thresholds)

	def to_dict(self):
		return {
			"mAP": self.mAP, "mATE": self.mATE, "mASE": self.mASE, "mAOE": self.mAOE, "NDS": self.NDS,
			"categories": {
				c: {
					"ap": {"{:g}".format(t): self.ap[c][t] for t in self.thresholds},
					"ate": self.ate[c], "ase": self.ase[c], "aoe": self.aoe[c],
					"tp_count": self.tp_count[c], "gt_count": self.gt_count[c]
				} for c in self.categories
			}
		}

	def to_table(self):
		"""Per-category results and the mean row as a ``pandas.DataFrame``."""
		rows = []
		for c in self.categories:
			row = {"category": c}
			for t in self.thresholds: row["AP@{:g}".format(t)] = self.ap[c][t]
			row.update({"AP": self.category_ap(c), "ATE": self.ate[c], "ASE": self.ase[c], "AOE": self.aoe[c],
				"TP": self.tp_count[c], "GT": self.gt_count[c]})
			rows.append(row)
		mean = {"category": "mean"}
		for t in self.thresholds:
			mean["AP@{:g}".format(t)] = sum(self.ap[c][t] for c in self.categories) / len(self.categories)
		mean.update({"AP": self.mAP, "ATE": self.mATE, "ASE": self.mASE, "AOE": self.mAOE,
			"TP": sum(self.tp_count.values()), "GT": sum(self.gt_count.values())})
		rows.append(mean)
		return pd.DataFrame(rows).set_index("category")

	def to_table_text(self):
		"""Aligned-column text of ``to_table()`` plus the NDS line."""
		text = self.to_table().to_string(float_format=lambda x: "{:.4f}".format(x))
		return text + "\nNDS {:.4f}\n".format(self.NDS)

	def to_text(self):
		"""Structured ``key=value`` lines."""
		lines = ["{}={!r}".format(k, getattr(self, k)) for k in ("mAP", "mATE", "mASE", "mAOE", "NDS")]
		for c in self.categories:
			for t in self.thresholds: lines.append("{}.ap@{:g}={!r}".format(c, t, self.ap[c][t]))
			lines.append("{}.ate={!r}".format(c, self.ate[c]))
			lines.append("{}.ase={!r}".format(c, self.ase[c]))
			lines.append("{}.aoe={!r}".format(c, self.aoe[c]))
			lines.append("{}.tp_count={}".format(c, self.tp_count[c]))
			lines.append("{}.gt_count={}".format(c, self.gt_count[c]))
		return "\n".join(lines) + "\n"

def compute_metrics(dets, gts, config=None):
	"""Evaluate detections against ground truth.

	Categories without ground truth are left out of the means.  A category
	with ground truth but no true positive gets errors of 1.

	:param dets: ``DetectionSet``.
	:param gts: ``DetectionSet`` of ground truth.
	:param config: ``MetricsConfig``.

	:returns: ``MetricsReport``.
	"""
	if config is None: config = MetricsConfig()
	data = _collect(dets, gts, config)
	if not data: raise NoGroundTruth("no category has ground truth")

	categories = sorted(data.keys())
	ap, ate, ase, aoe, tp_count, gt_count = {}, {}, {}, {}, {}, {}
	for c in categories:
		entry = data[c]
		gt_count[c] = entry.gt_count
		ap[c] = {}
		for t in config.thresholds:
			tp, _ = _accumulate(entry, t)
			ap[c][t] = average_precision(_precision_curve(tp, entry.gt_count), config.min_recall, config.min_precision)
		_, matches = _accumulate(entry, config.tp_threshold)
		tp_count[c] = len(matches)
		if matches:
			ate[c] = sum(translation_error(d, g) for d, g in matches) / len(matches)
			ase[c] = sum(scale_error(d, g) for d, g in matches) / len(matches)
			aoe[c] = sum(orientation_error(d, g) for d, g in matches) / len(matches)
		else:
			ate[c] = ase[c] = aoe[c] = 1.0
	report = MetricsReport(config.thresholds, categories, ap, ate, ase, aoe, tp_count, gt_count)
	loggers.info("metrics computed", categories=len(categories), mAP=report.mAP, NDS=report.NDS)
	return report
