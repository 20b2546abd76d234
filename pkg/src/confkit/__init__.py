"""confkit: conformer ensembles by sampling, clustering and COV/MAT evaluation."""

__version__ = "0.1.0"
