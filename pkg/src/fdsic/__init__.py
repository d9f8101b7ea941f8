"""Full-duplex mm-wave UE link budget and baseband verification simulator."""

__version__ = "0.1.0"
