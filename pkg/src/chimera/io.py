"""On-disk formats: datasets, model checkpoints, label files and key=value configs.

A dataset is a directory with ``manifest.json`` plus one tab-separated
triplet file per snapshot for edges (``src dst weight``) and content
(``node term weight``), and optionally ``node label`` files. Indices are
0-based. Undirected datasets may list each edge once.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct
import tempfile
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .factorization import FactorModel, FitResult, Hyperparameters
from .network import TemporalNetwork

DATASET_FORMAT = "chimera-dataset"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"CHIMERA-CKPT\n"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    """A file does not parse or violates its format's invariants."""


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float, precision: int = 6) -> str:
    return f"{x:.{precision}g}"


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    network: TemporalNetwork
    labels: Optional[np.ndarray] = None  # (T, n)
    node_names: Optional[list] = None
    term_names: Optional[list] = None


def _parse_triplets(path: Path, n_rows: int, n_cols: int, what: str):
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}: {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: malformed index in {line!r}") from None
            try:
                w = float(parts[2])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: malformed weight {parts[2]!r}") from None
            if not 0 <= i < n_rows:
                raise FormatError(f"{path}:{lineno}: {what} row index {i} out of range [0, {n_rows})")
            if not 0 <= j < n_cols:
                raise FormatError(f"{path}:{lineno}: {what} column index {j} out of range [0, {n_cols})")
            if not np.isfinite(w) or w < 0:
                raise FormatError(f"{path}:{lineno}: weight {parts[2]!r} must be finite and non-negative")
            rows.append(i)
            cols.append(j)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_cols), dtype=np.float64)


def _parse_labels(path: Path, n: int) -> np.ndarray:
    labels = np.full(n, -1, dtype=np.int64)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                node, label = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: expected 'node<TAB>label', got {line!r}") from None
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
            if not 0 <= node < n:
                raise FormatError(f"{path}:{lineno}: node index {node} out of range [0, {n})")
            if label < 0:
                raise FormatError(f"{path}:{lineno}: label {label} must be non-negative")
            labels[node] = label
    if (labels < 0).any():
        raise FormatError(f"{path}: no label for node {int(np.flatnonzero(labels < 0)[0])}")
    return labels


def _read_names(path: Path, count: int, what: str) -> list:
    names = path.read_text().splitlines()
    if len(names) != count:
        raise FormatError(f"{path}: {len(names)} {what} names for {count} {what}s")
    return names


def load_dataset(path) -> Dataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"{root}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{manifest_path}: {err}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{manifest_path}: not a {DATASET_FORMAT} manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise FormatError(
            f"{manifest_path}: dataset version {manifest.get('version')} is not supported (expected {DATASET_VERSION})"
        )
    try:
        n, d, T = int(manifest["nodes"]), int(manifest["terms"]), int(manifest["timestamps"])
        directed = bool(manifest["directed"])
        snapshots = manifest["snapshots"]
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f"{manifest_path}: missing or invalid field {err}") from None
    if len(snapshots) != T:
        raise FormatError(f"{manifest_path}: {len(snapshots)} snapshots listed for {T} timestamps")
    has_labels = bool(manifest.get("labels", False))

    adjacency, content, labels = [], [], []
    for t, snap in enumerate(snapshots):
        for key in ("edges", "content") + (("labels",) if has_labels else ()):
            if key not in snap or not (root / snap[key]).is_file():
                raise FormatError(f"{manifest_path}: snapshot {t} {key} file missing")
        a = _parse_triplets(root / snap["edges"], n, n, "edge")
        if not directed:
            a = a.maximum(a.T).tocsr()
        adjacency.append(a)
        content.append(_parse_triplets(root / snap["content"], n, d, "content"))
        if has_labels:
            labels.append(_parse_labels(root / snap["labels"], n))

    node_names = term_names = None
    if manifest.get("node_names"):
        node_names = _read_names(root / manifest["node_names"], n, "node")
    if manifest.get("term_names"):
        term_names = _read_names(root / manifest["term_names"], d, "term")
    try:
        network = TemporalNetwork(adjacency, content, directed=directed)
    except ValueError as err:
        raise FormatError(f"{root}: {err}") from None
    return Dataset(network, np.array(labels) if has_labels else None, node_names, term_names)


def _triplet_lines(matrix, upper_only: bool) -> str:
    coo = sp.triu(matrix).tocoo() if upper_only else matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return "".join(f"{coo.row[i]}\t{coo.col[i]}\t{float(coo.data[i])!r}\n" for i in order)


def write_dataset(path, network: TemporalNetwork, labels=None, node_names=None, term_names=None) -> None:
    """Write a dataset directory; undirected edges are stored once (``src <= dst``)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    snapshots = []
    for t in range(network.T):
        snap = {"edges": f"edges_{t}.tsv", "content": f"content_{t}.tsv"}
        atomic_write(root / snap["edges"], _triplet_lines(network.adjacency[t], not network.directed))
        atomic_write(root / snap["content"], _triplet_lines(network.content[t], False))
        if labels is not None:
            snap["labels"] = f"labels_{t}.tsv"
            atomic_write(root / snap["labels"], "".join(f"{i}\t{int(l)}\n" for i, l in enumerate(labels[t])))
        snapshots.append(snap)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "nodes": network.n,
        "terms": network.d,
        "timestamps": network.T,
        "directed": network.directed,
        "labels": labels is not None,
        "snapshots": snapshots,
    }
    if node_names is not None:
        manifest["node_names"] = "nodes.txt"
        atomic_write(root / "nodes.txt", "".join(f"{x}\n" for x in node_names))
    if term_names is not None:
        manifest["term_names"] = "terms.txt"
        atomic_write(root / "terms.txt", "".join(f"{x}\n" for x in term_names))
    atomic_write(root / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# checkpoints


@dataclass(frozen=True, eq=False)
class ModelCheckpoint:
    model: FactorModel
    hyperparameters: Hyperparameters
    objective: float
    iterations: int
    mask_seed: int
    mask_ratio: float
    halvings: int = 0
    converged: bool = False
    format_version: int = CHECKPOINT_VERSION

    @property
    def gradient_mode(self) -> str:
        return self.hyperparameters.gradient_mode

    @classmethod
    def from_fit(cls, result: FitResult) -> "ModelCheckpoint":
        return cls(
            model=result.model,
            hyperparameters=result.hyperparameters,
            objective=result.objective,
            iterations=result.iterations,
            mask_seed=result.masks.seed,
            mask_ratio=result.masks.ratio,
            halvings=result.halvings,
            converged=result.converged,
        )


def checkpoint_bytes(ckpt: ModelCheckpoint) -> bytes:
    m = ckpt.model
    payload = b"".join(np.ascontiguousarray(x, dtype="<f8").tobytes() for x in (m.U, m.V, m.W))
    header = {
        "format_version": CHECKPOINT_VERSION,
        "hyperparameters": ckpt.hyperparameters.to_dict(),
        "gradient_mode": ckpt.gradient_mode,
        "mask_seed": ckpt.mask_seed,
        "mask_ratio": ckpt.mask_ratio,
        "objective": ckpt.objective,
        "iterations": ckpt.iterations,
        "halvings": ckpt.halvings,
        "converged": ckpt.converged,
        "shapes": {"U": list(m.U.shape), "V": list(m.V.shape), "W": list(m.W.shape)},
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(head)) + head + payload


def save_model(path, ckpt: ModelCheckpoint) -> None:
    atomic_write(path, checkpoint_bytes(ckpt))


def load_model(path) -> ModelCheckpoint:
    blob = Path(path).read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{path}: not a model checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    if len(blob) < offset + 8:
        raise FormatError(f"{path}: truncated checkpoint header")
    (head_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    if len(blob) < offset + head_len:
        raise FormatError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(blob[offset : offset + head_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise FormatError(f"{path}: corrupt checkpoint header ({err})") from None
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: checkpoint format version {version} is not supported by this reader (version {CHECKPOINT_VERSION})"
        )
    payload = blob[offset + head_len :]
    if len(payload) != header["payload_bytes"]:
        raise FormatError(f"{path}: truncated checkpoint payload ({len(payload)} of {header['payload_bytes']} bytes)")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise FormatError(f"{path}: checkpoint payload checksum mismatch")

    arrays, pos = [], 0
    for name in ("U", "V", "W"):
        shape = tuple(header["shapes"][name])
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, dtype="<f8", count=count, offset=pos).reshape(shape))
        pos += 8 * count
    if pos != len(payload):
        raise FormatError(f"{path}: shape metadata does not match the payload size")
    try:
        model = FactorModel(*arrays)
        hp = Hyperparameters(**header["hyperparameters"])
    except (TypeError, ValueError) as err:
        raise FormatError(f"{path}: invalid checkpoint contents ({err})") from None
    return ModelCheckpoint(
        model=model,
        hyperparameters=hp,
        objective=header["objective"],
        iterations=header["iterations"],
        mask_seed=header["mask_seed"],
        mask_ratio=header["mask_ratio"],
        halvings=header["halvings"],
        converged=header["converged"],
        format_version=version,
    )


# --------------------------------------------------------------------------
# label files: "timestamp<TAB>node<TAB>label", 0-based


def write_labels(path, labels, timestamps) -> None:
    labels = np.atleast_2d(labels)
    lines = [
        f"{t}\t{i}\t{int(l)}\n" for t, row in zip(timestamps, labels) for i, l in enumerate(row)
    ]
    atomic_write(path, "".join(lines))


def read_labels(path) -> dict:
    """Map timestamp -> label array (nodes 0..n-1 must all be present)."""
    rows = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                t, node, label = (int(x) for x in parts)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: expected 'timestamp<TAB>node<TAB>label', got {line!r}") from None
            if node < 0:
                raise FormatError(f"{path}:{lineno}: negative node index {node}")
            rows.setdefault(t, {})[node] = label
    out = {}
    for t, mapping in sorted(rows.items()):
        n = max(mapping) + 1
        if len(mapping) != n:
            raise FormatError(f"{path}: timestamp {t} does not label every node 0..{n - 1}")
        out[t] = np.array([mapping[i] for i in range(n)])
    return out


def write_matrix(path, matrix, precision: int = 6) -> None:
    atomic_write(path, "".join("\t".join(fmt(x, precision) for x in row) + "\n" for row in np.atleast_2d(matrix)))


# --------------------------------------------------------------------------
# key=value configs


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def _convert(value: str, annotation):
    origin = typing.get_origin(annotation)
    args = [a for a in typing.get_args(annotation) if a is not type(None)]
    if origin is typing.Union:
        if value.lower() in ("none", ""):
            return None
        return _convert(value, args[0])
    if annotation is bool:
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if annotation is tuple:
        return tuple(_scalar(v) for v in value.split(",") if v.strip())
    return annotation(value) if annotation in (int, float, str) else value


def _scalar(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def dataclass_from_config(cls, values: dict, **overrides):
    """Build dataclass ``cls`` from string values, converting by field type."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(values) - names
    if unknown:
        raise FormatError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in values.items():
        try:
            kwargs[key] = _convert(value, hints[key])
        except ValueError as err:
            raise FormatError(f"{cls.__name__}.{key}: {err}") from None
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kwargs)


def write_config(path, obj) -> None:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v.item() if hasattr(v, "item") else v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name}={value}\n")
    atomic_write(path, "".join(lines))
