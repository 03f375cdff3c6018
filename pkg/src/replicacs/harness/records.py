"""Result records and their tabular writers.

Records are flat key -> value maps.  CSV columns follow a fixed, documented
stem order (numbered per-terminal fields expand in place); keys outside the
dictionary are appended alphabetically.  Writes are atomic (temp file plus
rename) and bit-stable for identical records.
"""

from __future__ import annotations

import json
import os
import re

_STEM_ORDER = [
    "mode", "point", "status", "reason",
    "J", "ensemble", "rho", "lambda", "sigma2",
    "mu_c", "mu_0", "mu",
    "reg_kind", "reg_weight", "reg_p", "reg_q", "reg_phi", "reg_alpha",
    "reg_box",
    "snr_db", "threshold",
    "D_rs", "D_mc", "D_se", "D_star",
    "q", "chi", "tau", "xi2",
    "iterations", "converged", "residual",
    "lambda_star", "weight_star", "phi_star", "alpha_star", "box_star",
    "in_region", "on_frontier",
    "n", "trials", "trials_failed",
    "eig_index", "eigenvalue", "cdf_empirical", "cdf_law",
    "mean_empirical", "mean_law", "m2_empirical", "m2_law", "ks_distance",
    "seed", "config_hash", "version",
]
_NUMBERED = re.compile(r"^(.*?)_(\d+)$")


def _sort_key(key: str):
    m = _NUMBERED.match(key)
    stem, idx = (m.group(1), int(m.group(2))) if m else (key, 0)
    if key in _STEM_ORDER:          # exact names win over numbered stems
        return (0, _STEM_ORDER.index(key), 0, key)
    if m and stem in _STEM_ORDER:
        return (0, _STEM_ORDER.index(stem), idx, key)
    return (1, 0, 0, key)


def column_order(keys) -> list[str]:
    """Deterministic column order for a set of record keys."""
    return sorted(set(keys), key=_sort_key)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(records, path: str, fmt: str = "csv") -> None:
    """Write records as CSV (fixed header order) or JSON lines, atomically."""
    records = list(records)
    tmp = f"{path}.tmp.{os.getpid()}"
    if fmt == "csv":
        cols = column_order(k for r in records for k in r)
        lines = [",".join(cols)]
        for r in records:
            lines.append(",".join(_format(r.get(c)) for c in cols))
        payload = "\n".join(lines) + "\n"
    elif fmt == "json":
        rows = []
        for r in records:
            ordered = {k: r[k] for k in column_order(r) if r[k] is not None}
            rows.append(json.dumps(ordered, allow_nan=True))
        payload = "\n".join(rows) + "\n"
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    with open(tmp, "w") as fh:
        fh.write(payload)
    os.replace(tmp, path)
