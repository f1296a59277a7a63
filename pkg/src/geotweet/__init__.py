"""Character-level tweet geolocation classifier with learned binary hashing."""

__version__ = "0.1.0"
