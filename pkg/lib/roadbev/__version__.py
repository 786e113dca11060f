__NAME__ = "roadbev"
__DESC__ = "roadside multi-camera BEV geometry and pipeline engine"
__VERSION__ = "0.1.0"
__LICENSE__= "MIT License"
__AUTHOR__ = "Wooloo Studio"
__AUTHOR_EMAIL__ = "max.wu@wooloostudio.com"
__URL__ = ""
__PROJECT_URLS__ = {}
__BUILD__ = 1