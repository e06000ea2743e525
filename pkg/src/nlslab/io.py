"""Plain-text and binary serialization of fields, spectra, ladders and reports.

CSV files carry a header row and full-precision ``repr`` floats so that two
runs of the same configuration produce identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .grid import Field, Grid, make_grid, norm

__all__ = [
    "field_to_csv",
    "field_from_csv",
    "field_to_binary",
    "field_from_binary",
    "spectrum_to_csv",
    "jost_table_to_csv",
    "export_ladder",
    "profile_manifest_to_csv",
    "rows_to_csv",
    "write_json",
    "sha256_file",
]

_HEADER = struct.Struct("<qd")  # n, L


def _fmt(v) -> str:
    return repr(float(v))


def rows_to_csv(path, columns, rows) -> None:
    """Write dict rows (or sequences) under a fixed column order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            vals = [r.get(c, np.nan) for c in columns] if isinstance(r, dict) else list(r)
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in vals])


def field_to_csv(f: Field, path) -> None:
    rows = zip(f.grid.x, f.values.real, f.values.imag)
    rows_to_csv(path, ["x", "re", "im"], rows)


def field_from_csv(path, grid: Grid | None = None) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x, re, im = data[:, 0], data[:, 1], data[:, 2]
    if grid is None:
        n = x.size
        grid = make_grid(-float(x[0]), n)
    elif grid.n != x.size or not np.allclose(grid.x, x, rtol=0, atol=1e-12 * grid.L):
        from .grid import GridMismatchError

        raise GridMismatchError(f"{path} was written on a different grid")
    return Field(grid, re + 1j * im)


def field_to_binary(f: Field, path) -> None:
    payload = np.empty(2 * f.grid.n, dtype="<f8")
    payload[0::2] = f.values.real
    payload[1::2] = f.values.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(f.grid.n, f.grid.L))
        fh.write(payload.tobytes())


def field_from_binary(path, grid: Grid | None = None) -> Field:
    raw = Path(path).read_bytes()
    n, L = _HEADER.unpack_from(raw)
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if payload.size != 2 * n:
        raise ValueError(f"{path}: expected {2 * n} doubles, found {payload.size}")
    if grid is None:
        grid = make_grid(L, n)
    elif grid.n != n or grid.L != L:
        from .grid import GridMismatchError

        raise GridMismatchError(f"{path} was written on a different grid")
    return Field(grid, payload[0::2] + 1j * payload[1::2])


def spectrum_to_csv(spec, path) -> None:
    rows = [(j + 1, w, r) for j, (w, r) in enumerate(zip(spec.omegas, spec.residuals))]
    rows_to_csv(path, ["j", "omega", "residual"], rows)


def jost_table_to_csv(op, ks, path) -> None:
    """Transmission and reflection coefficients over a list of k > 0."""
    from .spectral import jost

    rows = []
    for k in np.atleast_1d(ks):
        d = jost(op, float(k))
        rows.append((k, d.T.real, d.T.imag, d.R.real, d.R.imag, abs(d.T) ** 2 + abs(d.R) ** 2))
    rows_to_csv(path, ["k", "re_T", "im_T", "re_R", "im_R", "unitarity"], rows)


def export_ladder(ladder, outdir) -> list[Path]:
    """One CSV per rung (x, V_k, psi_k) plus ``ladder.json``; returns written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    x = ladder.grid.x
    paths = []
    for k, V in enumerate(ladder.potentials, start=1):
        p = outdir / f"rung_{k}.csv"
        if k <= ladder.N:
            rows_to_csv(p, ["x", "V", "psi"], zip(x, V, ladder.ground_states[k - 1].real))
        else:
            rows_to_csv(p, ["x", "V"], zip(x, V))
        paths.append(p)
    manifest = {
        "N": ladder.N,
        "removed_omegas": [float(w) for w in ladder.removed_omegas],
        "rungs": [
            {
                "index": k + 1,
                "file": f"rung_{k + 1}.csv",
                "omegas": [float(w) for w in spec.omegas],
                "residuals": [float(r) for r in spec.residuals],
            }
            for k, spec in enumerate(ladder.spectra)
        ],
    }
    p = outdir / "ladder.json"
    write_json(p, manifest)
    paths.append(p)
    return paths


def _index_label(m) -> str:
    return "(" + " ".join(str(int(c)) for c in m) + ")"


def profile_manifest_to_csv(profile, fgr, path) -> None:
    """Long-format table: kind, index, component, value."""
    rows = []
    for m in sorted(profile.G):
        rows.append(("G_norm", _index_label(m), "", norm(profile.G[m])))
    for m in sorted(profile.tilde_phi):
        rows.append(("tilde_phi_norm", _index_label(m), "", norm(profile.tilde_phi[m])))
    if fgr is not None:
        for i, m in enumerate(fgr.indices):
            lab = _index_label(m)
            rows.append(("lambda", lab, "", fgr.lambdas[i]))
            rows.append(("Gamma", lab, "", fgr.Gamma[i]))
            if fgr.Gamma_top is not None:
                rows.append(("Gamma_top", lab, "", fgr.Gamma_top[i]))
            for j in range(fgr.g.shape[1]):
                rows.append(("g", lab, str(j + 1), fgr.g[i, j]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", "component", "value"])
        for kind, lab, comp, val in rows:
            w.writerow([kind, lab, comp, _fmt(val)])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
