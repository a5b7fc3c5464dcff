"""CSV output: header row, comma separated, LF endings, 12 significant digits."""

import csv

import numpy as np

__all__ = ["fmt", "write_csv"]


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if not np.isfinite(v):
        return str(v)
    return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="-")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
