"""History covert channels: codec, trace simulation, analysis and detection."""

__version__ = "0.1.0"
