"""worldlab: a desk-scale interactive video world model.

A deterministic ray-cast gridworld supplies trajectories; a small
spatiotemporal diffusion transformer learns to predict frames under
diffusion-forcing noise; generation can condition on frames retrieved from a
global-state-keyed memory buffer. Everything runs on CPU on top of a
from-scratch reverse-mode autodiff layer.
"""

__version__ = "0.1.0"
