from roadbev.render.figure import *
from roadbev.render.raster import *
