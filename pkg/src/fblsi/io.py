"""JSON instance files and CSV/JSON output helpers.

Distributions are written either as nested lists or as
``{"dims": [...], "probs": [...]}`` with the flat array in row-major order
(channels use ``"rows"`` in place of ``"probs"``).  Unknown keys are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .instances import ChannelInstance, GpInstance, WakInstance, WzInstance
from .prob import Channel, JointPmf, Pmf


class ConfigError(ValueError):
    """Malformed configuration or instance file."""


_FIELDS = {
    "wak": ({"kind", "p_xy", "test_channels"}, {"time_share"}),
    "wz": ({"kind", "p_xy", "test_channels", "reproduction", "distortion", "level_d"}, {"time_share"}),
    "gp": ({"kind", "p_s", "channel_w", "encoder_channels", "cost"}, {"time_share", "budget_gamma"}),
    "channel": ({"kind", "channel", "p_x"}, set()),
}


def _array(obj, key: str, what: str) -> np.ndarray:
    if isinstance(obj, dict):
        _check_keys(obj, {"dims", key}, {"labels"} if key == "probs" else set(), what)
        dims = obj["dims"]
        flat = np.asarray(obj[key], dtype=float)
        if flat.ndim != 1 or flat.size != int(np.prod(dims)):
            raise ConfigError(f"{what}: {flat.size} values do not fill dims {dims}")
        return flat.reshape(dims)
    try:
        return np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: not a numeric array") from exc


def _check_keys(obj: dict, required: set, optional: set, what: str) -> None:
    keys = set(obj)
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise ConfigError(f"{what}: missing keys {sorted(missing)}")


def _pmf(obj, what) -> Pmf:
    return Pmf(_array(obj, "probs", what))


def _joint(obj, what) -> JointPmf:
    labels = tuple(obj["labels"]) if isinstance(obj, dict) and "labels" in obj else None
    return JointPmf(_array(obj, "probs", what), labels)


def _channels(objs, what) -> tuple[Channel, ...]:
    if not isinstance(objs, list) or not objs:
        raise ConfigError(f"{what}: expected a nonempty list of channels")
    return tuple(Channel(_array(o, "rows", f"{what}[{i}]")) for i, o in enumerate(objs))


def _budget(v) -> float:
    if v is None or v == "inf":
        return math.inf
    return float(v)


def instance_from_dict(data: dict):
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("instance must be an object with a 'kind' field")
    kind = data["kind"]
    if kind not in _FIELDS:
        raise ConfigError(f"unknown instance kind {kind!r}")
    required, optional = _FIELDS[kind]
    _check_keys(data, required, optional, f"{kind} instance")
    ts = _pmf(data["time_share"], "time_share") if "time_share" in data else Pmf(np.ones(1))
    try:
        if kind == "wak":
            return WakInstance(_joint(data["p_xy"], "p_xy"), ts, _channels(data["test_channels"], "test_channels"))
        if kind == "wz":
            return WzInstance(_joint(data["p_xy"], "p_xy"), ts,
                              _channels(data["test_channels"], "test_channels"),
                              _channels(data["reproduction"], "reproduction"),
                              _array(data["distortion"], "rows", "distortion"), float(data["level_d"]))
        if kind == "gp":
            return GpInstance(_pmf(data["p_s"], "p_s"), Channel(_array(data["channel_w"], "rows", "channel_w")), ts,
                              _channels(data["encoder_channels"], "encoder_channels"),
                              _array(data["cost"], "probs", "cost"), _budget(data.get("budget_gamma")))
        return ChannelInstance(Channel(_array(data["channel"], "rows", "channel")), _pmf(data["p_x"], "p_x"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{kind} instance: {exc}") from exc


def load_instance(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(data)


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(columns, rows, meta: dict) -> str:
    """``# meta:`` comment lines, a header row, then data rows (floats in repr form)."""
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# meta: {k}={json.dumps(meta[k], sort_keys=True)}\n")
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(columns)
    out.writerows([_fmt(v) for v in row] for row in rows)
    return buf.getvalue()


def read_csv(text: str) -> tuple[dict, list[str], np.ndarray]:
    meta, lines = {}, []
    for line in text.splitlines():
        if line.startswith("# meta: "):
            k, _, v = line[len("# meta: "):].partition("=")
            meta[k] = json.loads(v)
        elif line.strip():
            lines.append(line)
    header, *rows = csv.reader(lines)
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return meta, header, data


def to_json(obj) -> str:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o).__name__)

    return json.dumps(obj, indent=2, sort_keys=True, default=conv) + "\n"


def gnuplot_script(csv_path: str, columns, title: str) -> str:
    lines = [
        "set datafile separator ','",
        "set key top right",
        f"set xlabel '{columns[0]}'",
        f"set ylabel '{columns[1]}'",
        f"set title '{title}'",
    ]
    # '#' lines are comments to gnuplot; the header row is read as column titles
    plots = [f"'{csv_path}' using 1:{i + 1} with lines title columnheader({i + 1})"
             for i in range(1, len(columns))]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"
