"""Joint image + segmentation mask generation."""

try:
    from cosimgen._cosimgen import *  # wheel layout
except ImportError:
    from _cosimgen import *  # build-tree layout (PYTHONPATH=<build>/python)
