"""Kernel backend selection.

The compiled extension is used when it imports; set ``SLBLAB_PURE=1`` to
force the pure-Python kernels.
"""
import os

from . import _pyballs, _pydslab

_ckernels = None
if os.environ.get("SLBLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover - depends on the build
        _ckernels = None

COMPILED = _ckernels is not None
NAME = "compiled" if COMPILED else "python"


def ds_core(fields, lo, hi, x_ref, quad_tol, root_tol, *, force_python=False):
    """Build a coupled-system core; ``fields`` are three ScalarField objects."""
    f, d, h = fields
    if COMPILED and not force_python and all(fl.affine is not None for fl in fields):
        return _ckernels.AffineCore(f.affine, d.affine, h.affine, lo, hi, x_ref,
                                    quad_tol, root_tol)
    return _pydslab.PyDsCore(f.eval, d.eval, h.eval, lo, hi, x_ref, quad_tol, root_tol)


def simulate_two_balls(*args, force_python=False):
    if COMPILED and not force_python:
        return _ckernels.simulate_two_balls(*args)
    return _pyballs.simulate_two_balls(*args)


def resolve_pair(*args, force_python=False):
    if COMPILED and not force_python:
        return _ckernels.resolve_pair(*args)
    return _pyballs.resolve_pair(*args)
