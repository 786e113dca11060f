"""Raster images of BEV grids.

Rows run from +Y at the top to -Y at the bottom, columns from -X to +X, so
the picture reads like the vector diagrams.  Files are binary PPM (P6).
"""
import io
import numpy as np
from matplotlib import colormaps
from PIL import Image, ImageDraw
from roadbev.errors import RenderError
from roadbev.fsio import FileSystemUtils

__all__ = [
	"Images", "colorize", "hits_raster", "feature_norm_raster", "trained_count_raster",
	"draw_range_circles", "encode_ppm", "save_ppm"]

class Images:
	"""Image list.

	:ivar images: List of ``PIL.Image`` objects.
	"""
	def __init__(self):
		self.images = []

	def clear(self):
		self.images.clear()

	def append(self, image):
		self.images.append(image)

	def stitch(self, vertical=True, auto_crop=True):
		"""Stitch images into one image.

		:param vertical: If it's True, images go up to down, otherwise left to right.
		:param auto_crop: Whether to crop images to the smallest width (vertical)
			or height (horizontal).  If it's False, the sizes must already agree.

		:returns: Stitched image.
		"""
		if not self.images: raise RenderError("nothing to stitch")
		widths = [image.size[0] for image in self.images]
		heights = [image.size[1] for image in self.images]
		bitmaps = []
		if vertical:
			if (not auto_crop) and min(widths) != max(widths):
				raise RenderError("image widths differ", widths=widths)
			for image in self.images:
				bitmaps.append(np.array(image.crop((0, 0, min(widths), image.size[1]))))
		else:
			if (not auto_crop) and min(heights) != max(heights):
				raise RenderError("image heights differ", heights=heights)
			for image in self.images:
				bitmaps.append(np.array(image.crop((0, 0, image.size[0], min(heights)))))
		return Image.fromarray(np.concatenate(tuple(bitmaps), axis=0 if vertical else 1))

def colorize(values, cmap="viridis", vmin=None, vmax=None, scale=1):
	"""Map a (ny, nx) array in grid order to an RGB image.

	:param values: Array indexed [iy, ix].
	:param cmap: Matplotlib colormap name.
	:param vmin: Value mapped to the low end, the minimum if None.
	:param vmax: Value mapped to the high end, the maximum if None.
	:param scale: Pixels per cell.

	:returns: ``PIL.Image`` in RGB mode.
	"""
	values = np.asarray(values, dtype=np.float64)
	if values.ndim != 2: raise RenderError("raster values must be 2D", shape=values.shape)
	if scale < 1: raise RenderError("raster scale must be at least 1", scale=scale)
	try:
		colormap = colormaps[cmap]
	except KeyError:
		raise RenderError("unknown colormap: {}".format(cmap))
	low = float(values.min()) if vmin is None else vmin
	high = float(values.max()) if vmax is None else vmax
	span = high - low if high > low else 1.0
	normalized = np.clip((values - low) / span, 0.0, 1.0)
	rgb = (colormap(normalized[::-1, :])[:, :, :3] * 255.0 + 0.5).astype(np.uint8)
	if scale > 1: rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
	return Image.fromarray(rgb)

def hits_raster(table, cmap="viridis", scale=1):
	"""Hit count per cell of a mapping table."""
	grid = table.grid
	return colorize(table.counts.reshape(grid.ny, grid.nx), cmap, vmin=0, scale=scale)

def feature_norm_raster(feature, cmap="magma", scale=1):
	"""L2 norm per cell of a ``BevFeature``."""
	return colorize(np.sqrt(np.sum(feature.data * feature.data, axis=0)), cmap, vmin=0, scale=scale)

def trained_count_raster(counts, cmap="viridis", scale=1):
	"""Per cell count of augmented frames with hits, as in ``BalanceReport``."""
	return colorize(counts, cmap, vmin=0, scale=scale)

def draw_range_circles(image, grid, spacing, scale=1, color=(255, 255, 255)):
	"""Draw equidistant range circles around the BEV origin on a grid raster.

	:param spacing: Radial spacing in meters.
	"""
	if spacing <= 0: return image
	draw = ImageDraw.Draw(image)
	px = scale / grid.dx
	py = scale / grid.dy
	col0 = (0.0 - grid.x_range[0]) * px
	row0 = (grid.y_range[1] - 0.0) * py
	corners = [(x, y) for x in grid.x_range for y in grid.y_range]
	reach = max((x * x + y * y) ** 0.5 for (x, y) in corners)
	radius = spacing
	while radius <= reach:
		draw.ellipse((col0 - radius * px, row0 - radius * py, col0 + radius * px, row0 + radius * py), outline=color)
		radius += spacing
	return image

def encode_ppm(image):
	"""Encode an image as binary PPM bytes."""
	buffer = io.BytesIO()
	image.convert("RGB").save(buffer, format="PPM")
	return buffer.getvalue()

def save_ppm(image, filepath):
	FileSystemUtils.save_bytes(filepath, encode_ppm(image))
