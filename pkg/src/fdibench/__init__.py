"""False-data-injection attack simulation and detection benchmark."""

__version__ = "0.1.0"
