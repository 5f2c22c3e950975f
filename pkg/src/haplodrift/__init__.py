"""Y-STR haplotype sharing distributions, match probabilities and mixture
deconvolution behind a library, an HTTP service and a CLI."""

__version__ = "0.1.0"
