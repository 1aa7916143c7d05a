"""
Machine-readable result emission.

Reports are JSON envelopes ``{"command", "status", "result", "error",
"metadata"}``. Everything except ``metadata`` is a pure function of the
config and seed; ``metadata`` carries the wall-clock timestamp and version.
"""
import json
import logging
import math
from dataclasses import fields, is_dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from shinzettl import __version__
from shinzettl.exceptions import ValidationError
from shinzettl.potential import Potential, potential_to_dict

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "both")


def _float(x):
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def to_jsonable(obj):
    """
    Convert results to plain JSON values.

    Complex numbers become ``[re, im]``, arrays become nested lists,
    dataclasses become dicts (callable fields are dropped) and non-finite
    floats become the strings "inf", "-inf" or "nan".
    """
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, int):
        return obj
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, complex):
        return [_float(obj.real), _float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, pd.DataFrame):
        return [to_jsonable(row) for row in obj.to_dict(orient="records")]
    if isinstance(obj, Potential):
        return to_jsonable(potential_to_dict(obj))
    if hasattr(obj, "to_dict") and callable(obj.to_dict):
        return to_jsonable(obj.to_dict())
    if is_dataclass(obj):
        out = {}
        for f in fields(obj):
            value = getattr(obj, f.name)
            if callable(value) and not is_dataclass(value):
                continue
            out[f.name] = to_jsonable(value)
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    raise TypeError(f"Cannot serialize {type(obj).__name__} to JSON.")


def make_report(command, status, result=None, error=None):
    return {
        "command": command,
        "status": status,
        "result": to_jsonable(result),
        "error": error,
        "metadata": {"timestamp": datetime.now(timezone.utc).isoformat(), "version": __version__},
    }


def comparison_view(report):
    """The report without ``metadata``: identical config and seed give identical views."""
    return {k: v for k, v in report.items() if k != "metadata"}


def dumps(report):
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report, out_dir, name, fmt="json", frame=None):
    """
    Write ``<name>.json`` and, for csv/both, ``<name>.csv`` from ``frame``.

    Returns the list of written paths.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"Unsupported output format '{fmt}'. Must be one of {list(FORMATS)}.")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = out / f"{name}.json"
        path.write_text(dumps(report))
        written.append(path)
    if fmt in ("csv", "both") and frame is not None:
        path = out / f"{name}.csv"
        frame.to_csv(path, index=False, float_format="%.17g")
        written.append(path)
    for path in written:
        logger.info("Wrote %s", path)
    return written
