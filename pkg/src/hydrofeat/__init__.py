"""Scale-independent features and unsupervised typing for monthly series."""

__version__ = "0.1.0"

from .series import TimeSeries  # noqa: F401
