"""Feature-space open-world evaluation.

Open-set scoring over frozen embeddings (MSP, energy, Mahalanobis, kNN),
threshold-sweep metrics (AUROC, AUPR, FPR@95, OSCR), and a few-shot
class-incremental protocol with prototype-based methods. The ``ohz``
command line drives the full pipeline over OHFS feature files.
"""

__version__ = "0.1.0"
