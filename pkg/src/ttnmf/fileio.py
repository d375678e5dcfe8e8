"""CSV matrix files, flat config files and the binary model archive."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ShapeError, ValidationError
from .factors import FactorModel, LagSet, RegularizationWeights
from .network import RoutingMatrix

ARCHIVE_MAGIC = "TTNMF-MODEL"
ARCHIVE_VERSION = 1

_KINDS = ("routing", "traffic", "link", "mask")


def format_float(v) -> str:
    """17 significant digits: round-trips float64 exactly."""
    return "%.17g" % v


def load_matrix_csv(path, expected_kind: str) -> np.ndarray:
    """Load a headerless numeric CSV ('#' comments allowed) and validate it.

    kind "routing"/"mask" requires {0,1} entries; "traffic"/"link" requires
    nonnegative entries.  Cell coordinates in errors are 1-based over data
    rows (comment and blank lines do not count).
    """
    if expected_kind not in _KINDS:
        raise ConfigError(f"unknown matrix kind {expected_kind!r}")
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            r = len(rows) + 1
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(
                    f"{path}: ragged row {r}: expected {width} cells, got "
                    f"{len(cells)}")
            parsed = []
            for c, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: parse error at row {r} col {c}: "
                        f"{cell.strip()!r}") from None
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    if not np.isfinite(arr).all():
        i, j = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(
            f"{path}: non-finite value at cell ({i + 1},{j + 1})")
    if expected_kind in ("routing", "mask"):
        bad = np.argwhere((arr != 0.0) & (arr != 1.0))
        if len(bad):
            cells = ", ".join(f"({i + 1},{j + 1})" for i, j in bad[:10])
            raise ValidationError(
                f"{path}: {expected_kind} entries must be 0 or 1; offending "
                f"cells: {cells}")
    else:
        bad = np.argwhere(arr < 0)
        if len(bad):
            cells = ", ".join(f"({i + 1},{j + 1})" for i, j in bad[:10])
            raise ValidationError(
                f"{path}: {expected_kind} entries must be >= 0; offending "
                f"cells: {cells}")
    return arr


def write_matrix_csv(path, matrix) -> None:
    """Row-major CSV, 17 significant digits, no header, \\n endings."""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2:
        raise ShapeError("can only write 2-D matrices")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in arr:
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")


def parse_config_file(path) -> dict:
    """Flat key=value file; '#' comments and blank lines ignored."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class ModelArchive:
    """Everything needed to run estimation, plus training provenance."""

    model: FactorModel
    weights: RegularizationWeights
    routing: RoutingMatrix
    provenance: dict = field(default_factory=dict)
    version: int = ARCHIVE_VERSION


def save_model(path, archive: ModelArchive) -> None:
    """Line-oriented text header + length-prefixed little-endian float64 blocks."""
    m = archive.model
    lags = ",".join(str(v) for v in m.lag_set.lags) or "-"
    header = [
        f"{ARCHIVE_MAGIC} {archive.version}",
        f"dims {m.n_flows} {m.rank} {m.n_timestamps} "
        f"{archive.routing.n_links}",
        f"lags {lags}",
        f"lambda_temporal {format_float(archive.weights.lambda_temporal)}",
        f"lambda_ortho {format_float(archive.weights.lambda_ortho)}",
        f"beta_temporal {format_float(archive.weights.beta_temporal)}",
        f"beta_ortho {format_float(archive.weights.beta_ortho)}",
    ]
    for key in sorted(archive.provenance):
        header.append(f"prov {key} {archive.provenance[key]}")
    matrices = [
        ("spatial", m.spatial),
        ("latent", m.latent),
        ("ar_weights", m.ar_weights),
        ("routing", archive.routing.entries),
    ]
    header.append(f"matrices {len(matrices)}")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for name, arr in matrices:
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(f"matrix {name} {arr.shape[0]} {arr.shape[1]}\n"
                     .encode("ascii"))
            raw = arr.tobytes(order="C")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)


def _read_line(fh) -> str:
    chunk = bytearray()
    while True:
        b = fh.read(1)
        if not b or b == b"\n":
            break
        chunk += b
    return chunk.decode("ascii")


def load_model(path) -> ModelArchive:
    """Inverse of save_model; matrices round-trip bit-exactly."""
    with open(path, "rb") as fh:
        magic = _read_line(fh).split()
        if len(magic) != 2 or magic[0] != ARCHIVE_MAGIC:
            raise ParseError(f"{path}: not a model archive")
        version = int(magic[1])
        if version != ARCHIVE_VERSION:
            raise ParseError(f"{path}: unsupported archive version {version}")
        fields = {}
        provenance = {}
        n_matrices = None
        while True:
            line = _read_line(fh)
            if not line:
                raise ParseError(f"{path}: truncated header")
            parts = line.split()
            if parts[0] == "matrices":
                n_matrices = int(parts[1])
                break
            if parts[0] == "prov":
                provenance[parts[1]] = " ".join(parts[2:])
            else:
                fields[parts[0]] = parts[1:]
        matrices = {}
        for _ in range(n_matrices):
            head = _read_line(fh).split()
            if len(head) != 4 or head[0] != "matrix":
                raise ParseError(f"{path}: bad matrix header {head!r}")
            name, rows, cols = head[1], int(head[2]), int(head[3])
            prefix = fh.read(8)
            if len(prefix) != 8:
                raise ParseError(f"{path}: truncated length prefix for {name}")
            (nbytes,) = struct.unpack("<Q", prefix)
            if nbytes != rows * cols * 8:
                raise ParseError(
                    f"{path}: matrix {name}: {nbytes} bytes for "
                    f"{rows}x{cols} float64")
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise ParseError(f"{path}: truncated matrix {name}")
            matrices[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols)

    for required in ("spatial", "latent", "ar_weights", "routing"):
        if required not in matrices:
            raise ParseError(f"{path}: missing matrix {required!r}")
    lag_text = fields.get("lags", ["-"])[0]
    lag_set = LagSet(()) if lag_text == "-" else \
        LagSet(tuple(int(v) for v in lag_text.split(",")))
    weights = RegularizationWeights(
        lambda_temporal=float(fields["lambda_temporal"][0]),
        lambda_ortho=float(fields["lambda_ortho"][0]),
        beta_temporal=float(fields["beta_temporal"][0]),
        beta_ortho=float(fields["beta_ortho"][0]),
    )
    routing = RoutingMatrix(matrices["routing"])
    model = FactorModel.from_factors(matrices["spatial"], matrices["latent"],
                                     matrices["ar_weights"], lag_set, routing)
    return ModelArchive(model=model, weights=weights, routing=routing,
                        provenance=provenance)
