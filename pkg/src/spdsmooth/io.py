"""CSV and JSON serialization for fields, masks, signals, and reports.

All CSV files start with ``# key=value`` comment lines carrying the
metadata needed for exact round-trips (dims, spacing, model parameters)
plus whatever the caller adds (config hash, master seed). Floats are
written with ``%.17g`` so reading them back reproduces the exact doubles;
voxel coordinates are integer grid indices in canonical order (x fastest,
then y, then z).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .field import REGION_LABELS, DwiVolume, RegionMasks, TensorField
from .validation import DomainError

FLOAT_FMT = "%.17g"

FIELD_HEADER = "x,y,z,dxx,dyy,dzz,dxy,dxz,dyz"
MASK_HEADER = "x,y,z,label"
DWI_HEADER = "x,y,z,dir_index,repeat,signal"
GRADIENT_HEADER = "bx,by,bz"
DIAGNOSTIC_HEADER = "x,y,z,method,converged,iterations,residual,spd,clamped_signals"
PROFILE_HEADER = "h,size,n99,min,median,max,entropy"
REPORT_HEADER = "region,method,metric,scheme,h,median,mad,count,swelling_fraction"
PLOT_HEADER = "region,series,h,median"
PERTURBATION_HEADER = "proposition,case,base,style,t,residual,ratio_vs_half_t,pass"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def _write_lines(path, metadata: dict | None, header: str, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key, value in (metadata or {}).items():
        lines.append("# %s=%s" % (key, _fmt(value)))
    lines.append(header)
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n")


def read_metadata(path) -> dict:
    """The ``# key=value`` comment block at the top of a CSV file."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
    return meta


def _read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    meta = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None:
        raise DomainError("no header row in %s" % path)
    return meta, header, rows


def _coord_rows(dims):
    nx, ny, nz = dims
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                yield x, y, z


def _parse_triple(text: str, cast):
    parts = [p for p in text.split(",") if p != ""]
    if len(parts) != 3:
        raise DomainError("expected three comma-separated values, got %r" % text)
    return tuple(cast(p) for p in parts)


def write_field(path, field: TensorField, metadata: dict | None = None) -> None:
    """Tensor field as x,y,z,dxx,dyy,dzz,dxy,dxz,dyz rows in canonical order."""
    meta = {
        "format": "tensor-field",
        "dims": "%d,%d,%d" % field.dims,
        "spacing": ",".join(FLOAT_FMT % s for s in field.spacing),
    }
    meta.update(metadata or {})
    flat = field.flat()
    rows = (
        "%d,%d,%d," % (x, y, z) + ",".join(FLOAT_FMT % v for v in flat[i])
        for i, (x, y, z) in enumerate(_coord_rows(field.dims))
    )
    _write_lines(path, meta, FIELD_HEADER, rows)


def read_field(path) -> tuple[TensorField, dict]:
    meta, header, rows = _read_table(path)
    if header != FIELD_HEADER.split(","):
        raise DomainError("unexpected field header in %s" % path)
    dims = _parse_triple(meta.get("dims", ""), int)
    spacing = _parse_triple(meta.get("spacing", ""), float)
    nvox = dims[0] * dims[1] * dims[2]
    if len(rows) != nvox:
        raise DomainError("expected %d rows, found %d" % (nvox, len(rows)))
    flat = np.array([[float(v) for v in row[3:9]] for row in rows])
    field = TensorField.from_flat(flat, dims, spacing=spacing)
    return field, meta


def write_masks(path, masks: RegionMasks, metadata: dict | None = None) -> None:
    """Region labels as x,y,z,label rows."""
    meta = {"format": "region-masks", "dims": "%d,%d,%d" % masks.labels.shape}
    meta.update(metadata or {})
    flat = masks.labels.transpose(2, 1, 0).reshape(-1)
    rows = (
        "%d,%d,%d,%s" % (x, y, z, REGION_LABELS[flat[i]])
        for i, (x, y, z) in enumerate(_coord_rows(masks.labels.shape))
    )
    _write_lines(path, meta, MASK_HEADER, rows)


def read_masks(path) -> tuple[RegionMasks, dict]:
    meta, header, rows = _read_table(path)
    if header != MASK_HEADER.split(","):
        raise DomainError("unexpected mask header in %s" % path)
    dims = _parse_triple(meta.get("dims", ""), int)
    index = {name: i for i, name in enumerate(REGION_LABELS)}
    flat = np.array([index[row[3]] for row in rows], dtype=np.int8)
    labels = flat.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0)
    return RegionMasks(labels=labels), meta


def write_dwi(path, dwi: DwiVolume, metadata: dict | None = None) -> None:
    """Signals as x,y,z,dir_index,repeat,signal rows, measurements inner."""
    meta = {
        "format": "dwi-signals",
        "dims": "%d,%d,%d" % dwi.dims,
        "spacing": ",".join(FLOAT_FMT % s for s in dwi.spacing),
        "s0": FLOAT_FMT % dwi.s0,
        "repeats": str(dwi.repeats),
    }
    meta.update(metadata or {})
    flat = dwi.flat()
    repeats = dwi.repeats

    def rows():
        for i, (x, y, z) in enumerate(_coord_rows(dwi.dims)):
            for m in range(flat.shape[1]):
                yield "%d,%d,%d,%d,%d,%s" % (
                    x, y, z, m // repeats, m % repeats, FLOAT_FMT % flat[i, m]
                )

    _write_lines(path, meta, DWI_HEADER, rows())


def read_dwi(path, directions: np.ndarray) -> tuple[DwiVolume, dict]:
    """Read signals; gradient directions come from their own file."""
    meta, header, rows = _read_table(path)
    if header != DWI_HEADER.split(","):
        raise DomainError("unexpected dwi header in %s" % path)
    dims = _parse_triple(meta.get("dims", ""), int)
    spacing = _parse_triple(meta.get("spacing", ""), float)
    s0 = float(meta["s0"])
    repeats = int(meta["repeats"])
    m = len(directions) * repeats
    nvox = dims[0] * dims[1] * dims[2]
    if len(rows) != nvox * m:
        raise DomainError("expected %d rows, found %d" % (nvox * m, len(rows)))
    flat = np.empty((nvox, m))
    for i, row in enumerate(rows):
        meas = int(row[3]) * repeats + int(row[4])
        flat[i // m, meas] = float(row[5])
    signals = flat.reshape(dims[2], dims[1], dims[0], m).transpose(2, 1, 0, 3)
    dwi = DwiVolume(
        signals=signals, directions=np.asarray(directions, dtype=float),
        repeats=repeats, s0=s0, spacing=spacing,
    )
    return dwi, meta


def write_gradients(path, directions: np.ndarray, metadata: dict | None = None) -> None:
    """Unit gradient directions as bx,by,bz rows."""
    meta = {"format": "gradients"}
    meta.update(metadata or {})
    rows = (",".join(FLOAT_FMT % c for c in row) for row in np.asarray(directions))
    _write_lines(path, meta, GRADIENT_HEADER, rows)


def read_gradients(path) -> tuple[np.ndarray, dict]:
    meta, header, rows = _read_table(path)
    if header != GRADIENT_HEADER.split(","):
        raise DomainError("unexpected gradient header in %s" % path)
    return np.array([[float(v) for v in row] for row in rows]), meta


def write_diagnostics(path, result, dims, metadata: dict | None = None) -> None:
    """Per-voxel fit diagnostics in canonical order."""
    meta = {"format": "fit-diagnostics", "dims": "%d,%d,%d" % tuple(dims)}
    meta.update(metadata or {})
    rows = (
        "%d,%d,%d,%s,%d,%d,%s,%d,%d" % (
            x, y, z, result.method,
            int(result.converged[i]), int(result.iterations[i]),
            FLOAT_FMT % result.residual[i], int(result.spd[i]),
            int(result.clamped[i]),
        )
        for i, (x, y, z) in enumerate(_coord_rows(dims))
    )
    _write_lines(path, meta, DIAGNOSTIC_HEADER, rows)


def write_weight_profiles(path, entries, metadata: dict | None = None) -> None:
    """Rows of (h, WeightProfile) as h,size,n99,min,median,max,entropy."""
    rows = (
        "%s,%d,%d,%s,%s,%s,%s" % (
            FLOAT_FMT % h, p.size, p.n99,
            FLOAT_FMT % p.wmin, FLOAT_FMT % p.median,
            FLOAT_FMT % p.wmax, FLOAT_FMT % p.entropy,
        )
        for h, p in entries
    )
    meta = {"format": "weight-profiles"}
    meta.update(metadata or {})
    _write_lines(path, meta, PROFILE_HEADER, rows)


def write_report_csv(path, rows: list[dict], metadata: dict | None = None) -> None:
    """Flat summary rows keyed by the REPORT_HEADER columns."""
    cols = REPORT_HEADER.split(",")
    meta = {"format": "region-report"}
    meta.update(metadata or {})
    lines = (",".join(_fmt(row[c]) for c in cols) for row in rows)
    _write_lines(path, meta, REPORT_HEADER, lines)


def write_plot_csv(path, rows: list[dict], metadata: dict | None = None) -> None:
    """Bandwidth-versus-median series rows for plotting."""
    cols = PLOT_HEADER.split(",")
    meta = {"format": "plot-data"}
    meta.update(metadata or {})
    lines = (",".join(_fmt(row[c]) for c in cols) for row in rows)
    _write_lines(path, meta, PLOT_HEADER, lines)


def write_perturbation_csv(path, rows: list[dict], metadata: dict | None = None) -> None:
    """Expansion-order verification rows."""
    cols = PERTURBATION_HEADER.split(",")
    meta = {"format": "perturbation-report"}
    meta.update(metadata or {})
    lines = (",".join(_fmt(row[c]) for c in cols) for row in rows)
    _write_lines(path, meta, PERTURBATION_HEADER, lines)


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError("cannot serialize %r" % type(value))


def write_json_report(path, payload: dict) -> None:
    """Nested JSON report; keys sorted for stable bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n")
