"""Speaker identification with GMM supervectors and SVMs."""

from ._core import *  # noqa: F401,F403
from ._core import SvidError  # noqa: F401
