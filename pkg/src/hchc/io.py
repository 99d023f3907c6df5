"""CSV ingestion, ``key = value`` configuration and run artifacts on disk."""

from dataclasses import asdict, dataclass, fields
import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, HCHCError, InvalidInputError, ParseError
from .gldc import TrainingConfig
from .layout import EXACT_CYCLE_MAX, CircularLayout, CycleOrder

FLOAT_FMT = "{:.12g}"


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray = None
    label_names: list = None

    def __post_init__(self):
        n = self.features.shape[0]
        if n < 2:
            raise InvalidInputError(f"dataset needs at least 2 rows, got {n}")
        if self.labels is not None and len(self.labels) != n:
            raise InvalidInputError("labels and features have different lengths")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


@dataclass
class LayoutConfig:
    gamma_exponent: float = 1.0
    radius: float = 1.0
    exact_cycle_max: int = EXACT_CYCLE_MAX
    outlier_threshold: float = 0.5

    def __post_init__(self):
        if self.gamma_exponent < 0:
            raise ConfigError("gamma_exponent", "must be >= 0")
        if not self.radius > 0:
            raise ConfigError("radius", "must be > 0")
        if self.exact_cycle_max < 3:
            raise ConfigError("exact_cycle_max", "must be >= 3")
        if not 0 < self.outlier_threshold < 1:
            raise ConfigError("outlier_threshold", "must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class RunArtifacts:
    probabilities: np.ndarray
    layout: CircularLayout
    labels: np.ndarray
    metrics: dict = None
    config_echo: dict = None

    def __post_init__(self):
        n, c = self.probabilities.shape
        if self.layout.sample_coords.shape[0] != n or len(self.labels) != n:
            raise InvalidInputError("probabilities, layout and labels disagree on n")
        if len(self.layout.cycle) != c:
            raise InvalidInputError("probabilities and cycle disagree on the cluster count")


def _read_rows(path):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [
                (lineno, [cell.strip() for cell in row])
                for lineno, row in enumerate(csv.reader(fh), start=1)
                if row and any(cell.strip() for cell in row)
            ]
    except FileNotFoundError as exc:
        raise ParseError("file not found", path=path) from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), path=path) from exc
    if not rows:
        raise ParseError("file is empty", path=path)
    return rows


def _dense_ids(values):
    """Map arbitrary labels to 0..k-1 in order of first appearance."""
    ids = {}
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        out[i] = ids.setdefault(v, len(ids))
    return out, list(ids)


def load_csv(path, has_header=False, label_column=None):
    """Read a numeric table, optionally splitting off a label column.

    ``label_column`` is a header name (needs ``has_header``) or a column
    index (negative counts from the end).  Labels are mapped to dense ids in
    order of first appearance.
    """
    rows = _read_rows(path)
    header = None
    if has_header:
        header = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise ParseError("no data rows", path=path)
    width = len(rows[0][1])
    for lineno, cells in rows:
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", row=lineno, path=path)

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None:
                raise ParseError(f"label column {label_column!r} given by name but file has no header", path=path)
            if label_column not in header:
                raise ParseError(f"label column {label_column!r} not in header {header}", path=path)
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if not -width <= label_idx < width:
                raise ParseError(f"label column index {label_idx} out of range for {width} columns", path=path)
            label_idx %= width

    feature_cols = [j for j in range(width) if j != label_idx]
    if not feature_cols:
        raise ParseError("no feature columns", path=path)
    features = np.empty((len(rows), len(feature_cols)))
    for i, (lineno, cells) in enumerate(rows):
        for out_j, j in enumerate(feature_cols):
            try:
                features[i, out_j] = float(cells[j])
            except ValueError:
                col = header[j] if header else j + 1
                raise ParseError(f"non-numeric value {cells[j]!r}", row=lineno, column=col, path=path) from None
            if not np.isfinite(features[i, out_j]):
                col = header[j] if header else j + 1
                raise ParseError(f"non-finite value {cells[j]!r}", row=lineno, column=col, path=path)

    labels = names = None
    if label_idx is not None:
        labels, names = _dense_ids([cells[label_idx] for _, cells in rows])
    return Dataset(features, labels, names)


def read_labels(path, column=None):
    """Read one label per row; a header row is detected and skipped.

    With several columns the one named ``column`` (default
    ``assigned_cluster`` then ``label``) is used.  Returns dense ids.
    """
    rows = _read_rows(path)
    first = rows[0][1]
    header = None
    if column is not None or any(not _is_number(c) for c in first):
        header = first
        rows = rows[1:]
    width = len(first)
    if width == 1:
        idx = 0
    else:
        if header is None:
            raise ParseError("several columns but no header to pick the label column", path=path)
        for name in ([column] if column else ["assigned_cluster", "label"]):
            if name in header:
                idx = header.index(name)
                break
        else:
            raise ParseError(f"no label column in header {header}", path=path)
    values = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", row=lineno, path=path)
        values.append(cells[idx])
    return _dense_ids(values)[0]


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_probabilities(path, renormalize_tol=1e-6):
    """Read an ``n x c`` probability table (header row optional).

    Rows within ``renormalize_tol`` of summing to one are renormalised;
    anything else is a ParseError naming the row.
    """
    rows = _read_rows(path)
    if any(not _is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ParseError("no data rows", path=path)
    width = len(rows[0][1])
    P = np.empty((len(rows), width))
    for i, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", row=lineno, path=path)
        try:
            P[i] = [float(c) for c in cells]
        except ValueError:
            raise ParseError("non-numeric probability", row=lineno, path=path) from None
        if not np.all(np.isfinite(P[i])) or np.any(P[i] < 0):
            raise ParseError("probabilities must be finite and nonnegative", row=lineno, path=path)
        total = P[i].sum()
        if abs(total - 1.0) > renormalize_tol:
            raise ParseError(f"row sums to {total!r}, not 1", row=lineno, path=path)
        P[i] /= total
    return P


_CONFIG_TYPES = {f.name: f for f in fields(TrainingConfig)}
_CONFIG_TYPES.update({f.name: f for f in fields(LayoutConfig)})


def _parse_value(key, raw):
    default = _CONFIG_TYPES[key].default
    try:
        if key == "clusters":
            return None if raw.lower() in ("", "auto", "none") else int(raw)
        if key == "hidden_dims":
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if isinstance(default, bool):
            raise ValueError("boolean keys are not supported")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines into ``(TrainingConfig, LayoutConfig)``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "given twice")
        values[key] = _parse_value(key, raw)
    train_keys = {f.name for f in fields(TrainingConfig)}
    training = TrainingConfig(**{k: v for k, v in values.items() if k in train_keys})
    layout = LayoutConfig(**{k: v for k, v in values.items() if k not in train_keys})
    return training, layout


def parse_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    return parse_config_text(text)


def write_probabilities(P, path):
    c = P.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(f"p{j}" for j in range(c)) + "\n")
        for row in P:
            fh.write(",".join(FLOAT_FMT.format(v) for v in row) + "\n")


def write_labels(labels, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label\n")
        fh.writelines(f"{int(l)}\n" for l in labels)


def write_layout_csv(layout, labels, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,x,y,assigned_cluster,outlier\n")
        for i, ((x, y), lab, out) in enumerate(zip(layout.sample_coords, labels, layout.outlier_flags)):
            fh.write(f"{i},{FLOAT_FMT.format(x)},{FLOAT_FMT.format(y)},{int(lab)},{int(bool(out))}\n")


def cycle_record(layout):
    return {
        "order": list(layout.cycle.order),
        "angles": [float(a) for a in layout.anchor_angles],
        "anchors": [[float(x), float(y)] for x, y in layout.anchor_coords],
        "radius": float(layout.radius),
        "cost": float(layout.cycle.total_cost),
        "S_sam": float(layout.similarity_score),
        "solver": layout.cycle.solver,
    }


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError("file not found", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=path) from exc


def read_layout(layout_csv, cycle_json):
    """Rebuild a :class:`CircularLayout` and labels from written artifacts."""
    rec = read_json(cycle_json)
    rows = _read_rows(layout_csv)[1:]
    coords = np.array([[float(r[1]), float(r[2])] for _, r in rows]).reshape(-1, 2)
    labels = np.array([int(r[3]) for _, r in rows], dtype=np.int64)
    flags = np.array([r[4] == "1" for _, r in rows], dtype=bool)
    cycle = CycleOrder(tuple(rec["order"]), rec["cost"], rec["solver"])
    layout = CircularLayout(
        radius=rec["radius"],
        cycle=cycle,
        anchor_angles=np.array(rec["angles"]),
        anchor_coords=np.array(rec["anchors"]).reshape(-1, 2),
        sample_coords=coords,
        outlier_flags=flags,
        similarity_score=rec["S_sam"],
    )
    return layout, labels


def write_outputs(artifacts, out_dir):
    """Write the run's files into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "probabilities.csv", out / "layout.csv", out / "cycle.json"]
        write_probabilities(artifacts.probabilities, written[0])
        write_layout_csv(artifacts.layout, artifacts.labels, written[1])
        write_json(cycle_record(artifacts.layout), written[2])
        if artifacts.metrics is not None:
            written.append(out / "metrics.json")
            write_json(artifacts.metrics, written[-1])
        if artifacts.config_echo is not None:
            written.append(out / "config_echo.json")
            write_json(artifacts.config_echo, written[-1])
    except OSError as exc:
        raise HCHCError(f"cannot write outputs to {out}: {exc}") from exc
    return written
