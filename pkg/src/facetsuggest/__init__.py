"""Dynamic facet suggestion engine.

Curates a faceted keyword taxonomy, trains a shared-weight text encoder for
quota-constrained retrieval, ranks candidates by a parametric Yes-probability
scorer, and serves refinement suggestions behind a small wire API with a
prefix-cache-aware cost model.
"""

__version__ = "0.1.0"
