"""Helpers for comparing kernel backends."""
from . import _kernels


def run_on_backends(fn, backends=None):
    """``{backend: fn()}`` for every available (or requested) backend."""
    backends = _kernels.available_backends() if backends is None else backends
    previous = _kernels.get_backend()
    out = {}
    try:
        for name in backends:
            _kernels.set_backend(name)
            out[name] = fn()
    finally:
        _kernels.set_backend(previous)
    return out
