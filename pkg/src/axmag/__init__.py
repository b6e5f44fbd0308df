"""Axial video motion magnification toolkit.

Magnifies subtle motions in video along a user-chosen direction, with an
independent factor for the orthogonal direction. Ships classical magnifiers
(linear Eulerian and complex-steerable-pyramid phase manipulation, including
a two-orientation axial variant), a small learned magnifier trained on
synthetically composited scenes, the data generator for it, and an
evaluation harness (SSIM sweeps, KLT trajectory comparison, physical
displacement calculator).
"""

__version__ = "0.1.0"
