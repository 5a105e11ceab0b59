"""Random-phase-modulated Michelson interferometer: sequences, simulation, correlation."""

__version__ = "0.1.0"
