import io
import math
import matplotlib
from matplotlib.figure import Figure as _MplFigure
from matplotlib.patches import Circle, Polygon
from roadbev.ambiguity import AMBIGUITY_GRID
from roadbev.errors import RenderError
from roadbev.fsio import FileSystemUtils
from roadbev.geometry import camera_yaw_in_frame, to_display_angle, transform_points

__all__ = ["Figure", "BevFigure", "SceneFigure", "DetectionsFigure", "AmbiguityFigure"]

class Figure:
	"""Base class of figure classes.

	A figure is a canvas with one or more charts on it.  Deriving classes
	override ``on_paint()`` and call ``add_chart()`` in it to get an ``ax``
	object to draw with matplotlib.  ``paint()`` runs the workflow: create
	the figure, paint it and save it as SVG.

	SVG output is deterministic: element ids come from a fixed hash salt and
	no date is written, so painting the same data twice gives the same bytes.

	:ivar figsize: Size of the figure in inches, (width, height).
	:ivar layout: Layout of the charts as (rows, cols).
	:ivar filepath: File path.  If it is None, the SVG is only kept in ``svg``.
	:ivar save_dpi: DPI for file saving.
	:ivar save_facecolor: Face color of figure when it is saved.
	:ivar data_binding: Source data of the chart(s).
	:ivar svg: SVG bytes of the last ``paint()``.
	"""
	HASH_SALT = "roadbev"

	def __init__(self):
		#config
		self.figsize = (10, 10)
		self.layout = (1, 1)
		self.filepath = None
		self.save_dpi = 72
		self.save_facecolor = "white"
		self.data_binding = None

		#control
		self._f = None
		self.svg = None

	def _get_chart_rect(self, pos=None):
		if pos is None:
			return (0.0, 0.0, 1.0, 1.0)
		elif type(pos) is tuple:
			rows, cols = self.layout
			row, col = pos
			if row >= 0 and row < rows and col >= 0 and col < cols:
				return (col / cols, row / rows, (col + 1) / cols, (row + 1) / rows)
		else:
			rows, cols = self.layout
			return self._get_chart_rect((int((pos - 1) / cols), (pos - 1) % cols))
		return None

	def add_chart(self, title=None, pos=None, padding=(0.10, 0.08, 0.05, 0.08)):
		"""Add a chart.

		:param title: Chart title.
		:param pos: Position of the chart.  None for the full figure, an index
			(starting from 1, left to right and up to down) or (row, col).
		:param padding: Padding of the chart area as (left, top, right, bottom)
			fractions of the cell.

		:returns: The matplotlib axes.
		"""
		rect = self._get_chart_rect(pos)
		if rect is None: raise RenderError("chart position outside the layout", pos=pos)
		l, t, r, b = rect
		w = r - l
		h = b - t
		ax = self._f.add_axes([
			l + w * padding[0],
			1 - (b - h * padding[3]),
			w * (1.0 - padding[0] - padding[2]),
			h * (1.0 - padding[1] - padding[3])])
		if title: ax.set_title(title)
		return ax

	def on_create_figure(self):
		"""Event handler called when a figure is being created."""
		self._f = _MplFigure(figsize=self.figsize)

	def on_paint(self):
		"""Event handler called when a figure is created and needs to be painted."""
		pass

	def on_save_figure(self):
		"""Event handler called when a figure is being saved after painted."""
		buffer = io.BytesIO()
		self._f.savefig(buffer, format="svg", dpi=self.save_dpi, facecolor=self.save_facecolor,
			metadata={"Date": None})
		self.svg = buffer.getvalue()
		if self.filepath: FileSystemUtils.save_bytes(self.filepath, self.svg)

	def paint(self):
		"""Paint figure.

		:returns: SVG bytes.
		"""
		try:
			with matplotlib.rc_context({"svg.hashsalt": self.HASH_SALT, "svg.fonttype": "path"}):
				self.on_create_figure()
				self.on_paint()
				self.on_save_figure()
		except RenderError:
			raise
		except (ValueError, TypeError, RuntimeError) as e:
			raise RenderError("cannot paint figure: {}".format(e), figure=type(self).__name__)
		finally:
			self._f = None
		return self.svg

class BevFigure(Figure):
	"""Base class of BEV diagrams.

	It draws in BEV frame coordinates, +X to the right and +Y up, with
	equidistant range circles around the frame origin.

	:ivar circle_spacing: Radial spacing of the range circles in meters.
		0 disables them.
	:ivar extent: (xmin, xmax, ymin, ymax) of the view in meters, or None to fit the content.
	"""
	def __init__(self):
		Figure.__init__(self)
		self.circle_spacing = 100.0
		self.extent = None

	def draw_range_circles(self, ax, extent):
		if self.circle_spacing <= 0: return
		xmin, xmax, ymin, ymax = extent
		reach = max(math.hypot(x, y) for x in (xmin, xmax) for y in (ymin, ymax))
		count = int(reach // self.circle_spacing)
		for i in range(1, count + 1):
			ax.add_patch(Circle((0.0, 0.0), i * self.circle_spacing, fill=False, color="0.75", linewidth=0.6))

	def draw_frame_axes(self, ax, length):
		ax.annotate("", xy=(length, 0), xytext=(0, 0), arrowprops={"arrowstyle": "->", "color": "red"})
		ax.annotate("", xy=(0, length), xytext=(0, 0), arrowprops={"arrowstyle": "->", "color": "green"})
		ax.text(length, 0, "X", color="red")
		ax.text(0, length, "Y", color="green")

	def draw_box(self, ax, box, color, label=None):
		footprint = box.footprint()
		ax.add_patch(Polygon(footprint, closed=True, fill=False, edgecolor=color, linewidth=1.0))
		front = 0.5 * (footprint[0] + footprint[1])
		ax.plot([box.center[0], front[0]], [box.center[1], front[1]], color=color, linewidth=1.0)
		if label: ax.text(box.center[0], box.center[1], label, fontsize=7, color=color)

	def draw_cameras(self, ax, scene, length):
		for cam in scene.cameras:
			center = transform_points(scene.bev_frame, cam.center)
			theta = camera_yaw_in_frame(cam, scene.bev_frame)
			ax.plot([center[0]], [center[1]], marker="^", color="blue")
			ax.annotate("", xy=(center[0] + length * math.cos(theta), center[1] + length * math.sin(theta)),
				xytext=(center[0], center[1]), arrowprops={"arrowstyle": "->", "color": "blue"})
			ax.text(center[0], center[1], " " + cam.camera_id, fontsize=7, color="blue")

	def fit_extent(self, points, margin=10.0):
		if self.extent is not None: return self.extent
		xs = [p[0] for p in points] + [0.0]
		ys = [p[1] for p in points] + [0.0]
		return (min(xs) - margin, max(xs) + margin, min(ys) - margin, max(ys) + margin)

	def finish_axes(self, ax, extent):
		ax.set_xlim(extent[0], extent[1])
		ax.set_ylim(extent[2], extent[3])
		ax.set_aspect("equal")
		ax.set_xlabel("x (m)")
		ax.set_ylabel("y (m)")

class SceneFigure(BevFigure):
	"""Scene diagram: cameras, BEV frame axes, object boxes and range circles.

	``data_binding`` is the ``SceneConfig``.
	"""
	def on_paint(self):
		scene = self.data_binding
		ax = self.add_chart(scene.scene_id)
		points = [transform_points(scene.bev_frame, cam.center) for cam in scene.cameras]
		points += [obj.box.center for obj in scene.objects]
		extent = self.fit_extent(points)
		self.draw_range_circles(ax, extent)
		self.draw_frame_axes(ax, 5.0)
		self.draw_cameras(ax, scene, 8.0)
		for obj in scene.objects:
			self.draw_box(ax, obj.box, "black", obj.object_id)
		self.finish_axes(ax, extent)

class DetectionsFigure(BevFigure):
	"""Detections (red) against ground truth (green) of one frame.

	``data_binding`` is ``(detections, ground_truths, frame_id)``, the first
	two being ``DetectionSet``.
	"""
	def on_paint(self):
		dets, gts, frame_id = self.data_binding
		ax = self.add_chart("frame {}".format(frame_id))
		frame_dets = dets.frame(frame_id)
		frame_gts = gts.frame(frame_id)
		extent = self.fit_extent([d.box.center for d in frame_dets + frame_gts])
		self.draw_range_circles(ax, extent)
		for gt in frame_gts:
			self.draw_box(ax, gt.box, "green")
		for d in frame_dets:
			self.draw_box(ax, d.box, "red", "{:.2f}".format(d.score))
		self.finish_axes(ax, extent)

class AmbiguityFigure(BevFigure):
	"""Two panels, the ambiguity scene in frame A and in frame B.

	``data_binding`` is an ``AmbiguityRun``.
	"""
	def __init__(self):
		BevFigure.__init__(self)
		self.figsize = (16, 8)
		self.layout = (1, 2)
		self.circle_spacing = 10.0

	def on_paint(self):
		run = self.data_binding
		report = run.report
		cells = (report.cells_a, report.cells_b)
		for index, (scene, name) in enumerate(zip(run.scenes, ("A", "B"))):
			box = scene.objects[0].box
			title = "frame {}: yaw {:.4f} rad (display {:.4f})".format(name, box.yaw, to_display_angle(box.yaw))
			ax = self.add_chart(title, index + 1)
			grid = AMBIGUITY_GRID
			extent = (grid.x_range[0], grid.x_range[1], grid.y_range[0], grid.y_range[1])
			self.draw_range_circles(ax, extent)
			for (ix, iy) in cells[index]:
				x0 = grid.x_range[0] + ix * grid.dx
				y0 = grid.y_range[0] + iy * grid.dy
				ax.add_patch(Polygon([(x0, y0), (x0 + grid.dx, y0), (x0 + grid.dx, y0 + grid.dy), (x0, y0 + grid.dy)],
					closed=True, color="orange", alpha=0.5))
			self.draw_frame_axes(ax, 4.0)
			self.draw_cameras(ax, scene, 4.0)
			self.draw_box(ax, box, "black", scene.objects[0].object_id)
			self.finish_axes(ax, extent)
			ax.set_xticks([grid.x_range[0] + i * grid.dx for i in range(0, grid.nx + 1, 5)])
			ax.set_yticks([grid.y_range[0] + i * grid.dy for i in range(0, grid.ny + 1, 5)])
			ax.grid(True, linewidth=0.3)
		self._f.suptitle("{}: feature distance {:.3g}, embedding {}, resolved {}".format(
			report.variant, report.feature_distance, "on" if report.embedding_enabled else "off",
			"yes" if report.resolved else "no"))

