"""
Columnar CSV export of a DatasetBundle for external inspection.

One row per sample: sample_id, domain, domain_id, role, class_label (empty
for unlabeled domains), then one column per flattened input coordinate.
"""

from pathlib import Path
from typing import Union

import pandas as pd

from src.data.bundle import DatasetBundle


def bundle_to_frame(bundle: DatasetBundle) -> pd.DataFrame:
    roles = {bundle.labeled_domain: "labeled", **{name: "unlabeled" for name in bundle.unlabeled_domains}}
    if bundle.target_domain is not None:
        roles[bundle.target_domain] = "target"

    rows = []
    for name, role in roles.items():
        for sample in bundle.domains[name]:
            row = {
                "sample_id": sample.sample_id,
                "domain": name,
                "domain_id": sample.domain_id,
                "role": role,
                "class_label": sample.class_label,
            }
            for index, value in enumerate(sample.input.reshape(-1)):
                row[f"x{index}"] = float(value)
            rows.append(row)

    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame["class_label"] = frame["class_label"].astype("Int64")
    return frame


def export_csv(bundle: DatasetBundle, path: Union[str, Path]) -> Path:
    """Write the bundle as CSV with a header row. Returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bundle_to_frame(bundle).to_csv(path, index=False)
    return path
