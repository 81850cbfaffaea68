"""Plot-ready CSV exports (no plotting library involved).

File names are ``<stem>_<part>.csv`` so repeated runs overwrite the same
files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .chain import HarnackChain
from .group import BoxSpec, corner_array
from .io import write_csv
from .verification import HarnackReport

__all__ = ["AttainableCone", "emit_plot_data", "box_rows"]


@dataclass
class AttainableCone:
    """Attainable set of the origin in the unit box (n = 1), with optional
    decided sample points ``(v, x, t, status)``."""

    samples: list | None = None

    def polygon(self):
        # |x| <= |t| inside -1 < t < 0, as an (x, t) triangle
        return [(0.0, 0.0), (-1.0, -1.0), (1.0, -1.0), (0.0, 0.0)]


def box_rows(box: BoxSpec, label, extra=()):
    rows = []
    for k, c in enumerate(corner_array(box)):
        rows.append([str(label), box.kind.value, str(k)] + list(c) + list(extra))
    return rows


def _box_header(n, extra=()):
    return (["box", "kind", "vertex"] + [f"v{j}" for j in range(n)]
            + [f"x{j}" for j in range(n)] + ["t"] + list(extra))


def emit_plot_data(report, outdir, stem: str | None = None) -> list[str]:
    """Write CSV files describing ``report`` and return their paths.

    Supports :class:`HarnackChain` (curve polyline and step boxes),
    :class:`HarnackReport` (the two boxes with sup/inf) and
    :class:`AttainableCone`.
    """
    os.makedirs(outdir, exist_ok=True)
    files = []
    if isinstance(report, HarnackChain):
        stem = stem or "chain"
        n = (report.node_array.shape[1] - 1) // 2
        if report.curve is not None:
            c = report.curve
            files.append(write_csv(os.path.join(outdir, f"{stem}_curve.csv"),
                                   c.csv_header(), c.rows()))
        files.append(write_csv(
            os.path.join(outdir, f"{stem}_nodes.csv"),
            ["j", "s"] + [f"v{j}" for j in range(n)] + [f"x{j}" for j in range(n)] + ["t", "r"],
            [[j, s] + list(p) + [r] for j, (s, p, r) in
             enumerate(zip(report.params, report.node_array, list(report.radii) + [np.nan]))]))
        rows = []
        for j, b in enumerate(report.step_boxes):
            rows.extend(box_rows(b, j))
        files.append(write_csv(os.path.join(outdir, f"{stem}_boxes.csv"), _box_header(n), rows))
    elif isinstance(report, HarnackReport):
        stem = stem or "harnack"
        n = report.box_plus.n
        rows = box_rows(report.box_minus, "Q_minus", ["sup", report.sup_minus])
        rows += box_rows(report.box_plus, "Q_plus", ["inf", report.inf_plus])
        files.append(write_csv(os.path.join(outdir, f"{stem}_boxes.csv"),
                               _box_header(n, ["stat", "value"]), rows))
    elif isinstance(report, AttainableCone):
        stem = stem or "attainable"
        files.append(write_csv(os.path.join(outdir, f"{stem}_cone.csv"), ["x", "t"],
                               report.polygon()))
        if report.samples:
            files.append(write_csv(os.path.join(outdir, f"{stem}_samples.csv"),
                                   ["v", "x", "t", "status"], report.samples))
    else:
        raise TypeError(f"no plot export for {type(report).__name__}")
    return files
