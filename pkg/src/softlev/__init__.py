"""Design and analysis of passive magnetic levitation in slit superconducting disks."""

__version__ = "0.1.0"
