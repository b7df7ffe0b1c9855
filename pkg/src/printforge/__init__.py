"""Fingerprint synthesis and evaluation toolkit.

The package is organised as a numpy/scipy library with five capability
areas plus a thin pipeline driver:

``printforge.autodiff``
    A small reverse-mode differentiation engine over explicit graphs.
    Its backward pass emits graph nodes, so gradients can themselves be
    differentiated (needed for gradient-penalty training).
``printforge.synthesis``
    Generator/critic ladders, reconstruction and identity losses, and
    the training loops that tie them together.
``printforge.masterprint``
    Model-based fingerprint rendering: orientation fields from
    singularity layouts, iterative Gabor ridge growth, impression
    simulation, and corpus generation.
``printforge.fingerlab``
    Minutiae extraction and the eight-indicator realism protocol with
    Kolmogorov-Smirnov aggregation.
``printforge.gallery``
    Sharded embedding stores and exact top-k search with evaluation
    curves (CMC, fold confidence intervals, imposter statistics).
``printforge.pipeline``
    Config, manifests, stage orchestration, and the ``printforge`` CLI.
"""

__version__ = "0.1.0"
