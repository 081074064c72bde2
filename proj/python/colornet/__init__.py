"""Color-space CNN branches with late fusion, plus evaluation analytics."""

from ._colornet import *  # noqa: F401,F403
from ._colornet import __version__  # noqa: F401
