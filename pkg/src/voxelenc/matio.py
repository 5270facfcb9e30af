"""Bit-exact matrix file I/O and dataset manifests.

Matrices travel as VEMF, a little-endian binary layout fixed so that the
fitting engine and external feature extractors interoperate byte for
byte:

    offset 0   magic  b"VEMF"
    offset 4   u32    format version (1)
    offset 8   u8     dtype code (0 = float32, 1 = float64)
    offset 9   3 zero padding bytes
    offset 12  u64    rows
    offset 20  u64    cols
    offset 28  payload, row-major, little-endian

Header-less CSV is accepted on read for small hand-written fixtures.
Matrices are plain 2-D numpy arrays everywhere in this package.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoError, ManifestError, MatrixFormatError, ValidationError

log = logging.getLogger(__name__)

MAGIC = b"VEMF"
VERSION = 1
HEADER_SIZE = 28
_HEADER = struct.Struct("<4sIB3xQQ")

_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_KIND_TO_CODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return `a` as a 2-D float matrix (no copy if possible)."""
    m = np.asarray(a)
    if m.dtype not in _KIND_TO_CODE:
        m = m.astype(np.float64)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"{name} must have at least one row and column, got {m.shape}")
    return np.ascontiguousarray(m)


def write_matrix(m: np.ndarray, path, strict: bool = True) -> None:
    """Write `m` to `path` in VEMF format.

    In strict mode (default) non-finite values are rejected; re-reading
    the file yields a bitwise-identical matrix.
    """
    m = as_matrix(m)
    if strict and not np.isfinite(m).all():
        bad = int(np.size(m) - np.count_nonzero(np.isfinite(m)))
        raise ValidationError(f"refusing to write {bad} non-finite value(s); pass strict=False to override")
    rows, cols = m.shape
    header = _HEADER.pack(MAGIC, VERSION, _KIND_TO_CODE[m.dtype.newbyteorder("=")], rows, cols)
    payload = np.ascontiguousarray(m, dtype=m.dtype.newbyteorder("<"))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _parse_header(raw: bytes, path) -> tuple[np.dtype, int, int]:
    if len(raw) < HEADER_SIZE:
        raise MatrixFormatError(f"{path}: truncated header, expected {HEADER_SIZE} bytes, got {len(raw)}")
    magic, version, code, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported format version {version}")
    if code not in _CODE_TO_DTYPE:
        raise MatrixFormatError(f"{path}: unsupported dtype code {code}")
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"{path}: invalid shape {rows}x{cols}")
    return _CODE_TO_DTYPE[code], rows, cols


def read_matrix_header(path) -> tuple[int, int, str]:
    """Read only the VEMF header: (rows, cols, dtype name).

    CSV files are fully parsed since they carry no header.
    """
    p = Path(path)
    if p.suffix.lower() == ".csv":
        m = _read_csv(p)
        return m.shape[0], m.shape[1], str(m.dtype)
    try:
        with open(p, "rb") as fh:
            raw = fh.read(HEADER_SIZE)
    except OSError as exc:
        raise IoError(f"cannot read {p}: {exc}") from exc
    dtype, rows, cols = _parse_header(raw, p)
    return rows, cols, dtype.newbyteorder("=").name


def read_matrix(path, permissive: bool = False) -> np.ndarray:
    """Read a VEMF or CSV matrix from `path`.

    Non-finite values are an error; with `permissive=True` they are
    replaced by 0 and the count is logged.
    """
    p = Path(path)
    if p.suffix.lower() == ".csv":
        m = _read_csv(p)
    else:
        m = _read_vemf(p)
    bad = int(np.size(m) - np.count_nonzero(np.isfinite(m)))
    if bad:
        if not permissive:
            raise MatrixFormatError(f"{p}: {bad} non-finite value(s); pass permissive=True to zero them")
        log.warning("%s: replaced %d non-finite value(s) with 0", p, bad)
        m = np.where(np.isfinite(m), m, 0.0).astype(m.dtype, copy=False)
    return m


def _read_vemf(p: Path) -> np.ndarray:
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {p}: {exc}") from exc
    dtype, rows, cols = _parse_header(raw, p)
    expected = HEADER_SIZE + rows * cols * dtype.itemsize
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "trailing data in"
        raise MatrixFormatError(f"{p}: {kind} matrix file, expected {expected} bytes, got {len(raw)}")
    m = np.frombuffer(raw, dtype=dtype, count=rows * cols, offset=HEADER_SIZE)
    return m.reshape(rows, cols).astype(dtype.newbyteorder("="))


def _read_csv(p: Path) -> np.ndarray:
    try:
        text = p.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {p}: {exc}") from exc
    rows: list[list[float]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise MatrixFormatError(f"{p}:{lineno}: unparseable CSV value ({exc})") from exc
        if rows and len(values) != len(rows[0]):
            raise MatrixFormatError(
                f"{p}: ragged CSV, row {lineno} has {len(values)} values, expected {len(rows[0])}"
            )
        rows.append(values)
    if not rows:
        raise MatrixFormatError(f"{p}: empty CSV")
    return np.asarray(rows, dtype=np.float64)


# --------------------------------------------------------------------------
# dataset manifests


@dataclass(frozen=True)
class RoiSpec:
    """Named contiguous voxel range [start, start+count) in the response matrix."""

    name: str
    start: int
    count: int

    @property
    def stop(self) -> int:
        return self.start + self.count


@dataclass(frozen=True)
class SubDataset:
    """Named stimulus subset, stored as explicit row indices."""

    name: str
    indices: np.ndarray


@dataclass(frozen=True)
class FeatureEntry:
    """One feature matrix: a (model, layer) pair and where it lives."""

    model: str
    layer: str
    path: Path
    param_count: int | None = None


@dataclass
class SubjectEntry:
    name: str
    n_stimuli: int
    response_path: Path
    rois: list[RoiSpec]
    features: list[FeatureEntry]
    sub_datasets: list[SubDataset] = field(default_factory=list)
    groups: list[str] | None = None  # per-stimulus group label (e.g. concept id)
    n_voxels: int = 0  # response matrix column count, filled during validation

    def roi(self, name: str) -> RoiSpec:
        for r in self.rois:
            if r.name == name:
                return r
        raise ValidationError(f"subject {self.name}: unknown ROI {name!r}")

    def sub_dataset(self, name: str) -> SubDataset:
        for s in self.sub_datasets:
            if s.name == name:
                return s
        raise ValidationError(f"subject {self.name}: unknown sub-dataset {name!r}")

    def feature(self, model: str | None, layer: str | None) -> FeatureEntry:
        """Resolve one feature entry; unambiguous defaults are allowed."""
        hits = [
            f
            for f in self.features
            if (model is None or f.model == model) and (layer is None or f.layer == layer)
        ]
        if len(hits) == 1:
            return hits[0]
        what = f"model={model!r} layer={layer!r}"
        if not hits:
            raise ValidationError(f"subject {self.name}: no feature entry matches {what}")
        raise ValidationError(f"subject {self.name}: {len(hits)} feature entries match {what}; specify layer")


@dataclass
class DatasetManifest:
    path: Path
    subjects: list[SubjectEntry]

    def subject(self, name: str) -> SubjectEntry:
        for s in self.subjects:
            if s.name == name:
                return s
        raise ValidationError(f"unknown subject {name!r}")

    def summary(self) -> str:
        lines = []
        for s in self.subjects:
            lines.append(f"subject {s.name}: {s.n_stimuli} stimuli, {s.n_voxels} voxels")
            for sd in s.sub_datasets:
                lines.append(f"  sub-dataset {sd.name}: {len(sd.indices)} stimuli")
            for r in s.rois:
                lines.append(f"  roi {r.name}: {r.count} voxels [{r.start}:{r.stop})")
            for f in s.features:
                extra = f", {f.param_count} params" if f.param_count is not None else ""
                lines.append(f"  features {f.model}/{f.layer}: {f.path}{extra}")
        return "\n".join(lines)


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _require(cond: bool, msg: str):
    if not cond:
        raise ManifestError(msg)


def read_manifest(path) -> DatasetManifest:
    """Load and eagerly validate a dataset manifest (JSON).

    All referenced matrix files must exist with row counts matching the
    declared stimulus count, and ROI ranges must be disjoint and inside
    the response matrix. A manifest that passes here never produces
    shape errors downstream.
    """
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise IoError(f"cannot read manifest {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{p}: invalid JSON ({exc})") from exc
    base = p.parent

    _require(isinstance(doc, dict) and isinstance(doc.get("subjects"), list), f"{p}: expected top-level 'subjects' array")
    _require(len(doc["subjects"]) > 0, f"{p}: 'subjects' is empty")

    subjects = []
    for sub in doc["subjects"]:
        name = sub.get("name")
        _require(isinstance(name, str) and name, f"{p}: subject without a name")
        n_stimuli = sub.get("n_stimuli")
        _require(isinstance(n_stimuli, int) and n_stimuli >= 1, f"{name}: n_stimuli must be a positive integer")

        response_path = _resolve(base, sub.get("response_path", ""))
        _require(response_path.is_file(), f"{name}: response matrix missing: {response_path}")
        resp_rows, resp_cols, _ = read_matrix_header(response_path)
        _require(
            resp_rows == n_stimuli,
            f"{name}: response matrix has {resp_rows} rows, expected n_stimuli={n_stimuli}",
        )

        rois = []
        for r in sub.get("rois", []):
            roi = RoiSpec(str(r["name"]), int(r["start"]), int(r["count"]))
            _require(roi.count >= 1 and roi.start >= 0, f"{name}/{roi.name}: invalid voxel range")
            _require(
                roi.stop <= resp_cols,
                f"{name}/{roi.name}: voxel range [{roi.start}:{roi.stop}) exceeds response columns ({resp_cols})",
            )
            rois.append(roi)
        _require(len(rois) >= 1, f"{name}: at least one ROI required")
        _require(len({r.name for r in rois}) == len(rois), f"{name}: duplicate ROI names")
        for a, b in zip(sorted(rois, key=lambda r: r.start), sorted(rois, key=lambda r: r.start)[1:]):
            _require(a.stop <= b.start, f"{name}: overlapping ROI ranges {a.name} and {b.name}")

        sub_datasets = []
        for sd in sub.get("sub_datasets", []):
            sd_name = str(sd["name"])
            if "indices_path" in sd:
                ip = _resolve(base, sd["indices_path"])
                _require(ip.is_file(), f"{name}/{sd_name}: indices file missing: {ip}")
                try:
                    idx_doc = json.loads(ip.read_text())
                except json.JSONDecodeError as exc:
                    raise ManifestError(f"{ip}: invalid JSON ({exc})") from exc
                indices = np.asarray(idx_doc, dtype=np.int64)
            else:
                start, count = int(sd["start"]), int(sd["count"])
                _require(count >= 1 and start >= 0, f"{name}/{sd_name}: invalid range")
                indices = np.arange(start, start + count, dtype=np.int64)
            _require(indices.ndim == 1 and indices.size >= 1, f"{name}/{sd_name}: empty index list")
            _require(
                int(indices.min()) >= 0 and int(indices.max()) < n_stimuli,
                f"{name}/{sd_name}: stimulus indices out of range [0, {n_stimuli})",
            )
            _require(np.unique(indices).size == indices.size, f"{name}/{sd_name}: duplicate stimulus indices")
            sub_datasets.append(SubDataset(sd_name, indices))
        _require(
            len({s.name for s in sub_datasets}) == len(sub_datasets),
            f"{name}: duplicate sub-dataset names",
        )

        features = []
        for f in sub.get("features", []):
            entry = FeatureEntry(
                model=str(f["model"]),
                layer=str(f.get("layer", "last")),
                path=_resolve(base, f["path"]),
                param_count=int(f["param_count"]) if f.get("param_count") is not None else None,
            )
            _require(entry.path.is_file(), f"{name}: feature matrix missing: {entry.path}")
            feat_rows, _, _ = read_matrix_header(entry.path)
            _require(
                feat_rows == n_stimuli,
                f"{name}/{entry.model}/{entry.layer}: {feat_rows} rows, expected n_stimuli={n_stimuli}",
            )
            features.append(entry)
        _require(len(features) >= 1, f"{name}: at least one feature entry required")
        _require(
            len({(f.model, f.layer) for f in features}) == len(features),
            f"{name}: duplicate (model, layer) feature entries",
        )

        groups = None
        if sub.get("groups_path"):
            gp = _resolve(base, sub["groups_path"])
            _require(gp.is_file(), f"{name}: groups file missing: {gp}")
            try:
                raw_groups = json.loads(gp.read_text())
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{gp}: invalid JSON ({exc})") from exc
            _require(
                isinstance(raw_groups, list) and len(raw_groups) == n_stimuli,
                f"{name}: groups list must have exactly n_stimuli={n_stimuli} entries",
            )
            groups = [str(g) for g in raw_groups]

        subjects.append(
            SubjectEntry(
                name=name,
                n_stimuli=n_stimuli,
                response_path=response_path,
                rois=rois,
                features=features,
                sub_datasets=sub_datasets,
                groups=groups,
                n_voxels=resp_cols,
            )
        )

    _require(len({s.name for s in subjects}) == len(subjects), f"{p}: duplicate subject names")
    return DatasetManifest(path=p, subjects=subjects)
