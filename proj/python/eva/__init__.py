"""Agentic video-understanding loop over a synthetic environment.

Thin wrapper around the compiled `_core` module. Supports both the installed
layout (eva/_core.so) and the build-tree layout (_core.so on PYTHONPATH).
"""

try:
    from eva._core import *  # noqa: F401,F403
    from eva import _core as core  # noqa: F401
except ImportError:  # build tree: module next to the sources
    from _core import *  # noqa: F401,F403
    import _core as core  # noqa: F401

__version__ = "0.1.0"
