"""
Datasets: directory ingestion, synthetic generator and CSV export.
"""

from src.data.bundle import DatasetBundle, HiddenLabelStore, stack_inputs
from src.data.directory import SchemaError, SplitSpec, load_directory_dataset
from src.data.export import bundle_to_frame, export_csv
from src.data.synthetic import ShiftKind, SyntheticSpec, generate_synthetic

__all__ = [
    "DatasetBundle",
    "HiddenLabelStore",
    "stack_inputs",
    "SchemaError",
    "SplitSpec",
    "load_directory_dataset",
    "bundle_to_frame",
    "export_csv",
    "ShiftKind",
    "SyntheticSpec",
    "generate_synthetic",
]
