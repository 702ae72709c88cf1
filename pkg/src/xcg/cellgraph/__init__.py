"""Cell tables, KNN cell graphs and patient bags."""

from .labels import StageGroup, SurvivalClass
from .graph import (Cell, CellGraph, PatientBag, SchemaError,
                    assemble_bags, build_graphs, build_knn_graph, directed_knn_edges,
                    survival_class)
from .io import Dataset, load_dataset, read_tables, write_tables
from .synth import phenotype_names, synth_generate, synth_planted_cohort

__all__ = [
    "Cell", "CellGraph", "PatientBag", "SchemaError", "StageGroup", "SurvivalClass",
    "assemble_bags", "build_graphs", "build_knn_graph", "directed_knn_edges", "survival_class",
    "Dataset", "load_dataset", "read_tables", "write_tables",
    "phenotype_names", "synth_generate", "synth_planted_cohort",
]
