"""Voxel-wise linear encoding toolkit.

Fits ridge models from stimulus feature matrices to fMRI voxel
responses, evaluates them with pairwise 2v2 accuracy, Pearson
correlation and MAE, and orchestrates cross-validated, cross-subset
and layer-sweep experiments from a dataset manifest.
"""

__version__ = "0.1.0"
