"""Entropy-distribution fingerprinting of key-exchange traffic."""

try:
    from ._kexfp import *  # noqa: F401,F403  (installed wheel layout)
except ImportError:  # in-tree build: extension sits on PYTHONPATH
    from _kexfp import *  # noqa: F401,F403
