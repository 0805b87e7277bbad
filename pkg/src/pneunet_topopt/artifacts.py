"""On-disk artifacts of a run: CSV tables, PGM images, legacy VTK and a summary.

Every file is written to a temporary sibling first and renamed into place,
so a reader never sees a half-written artifact.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .fields import REALIZATIONS
from .model import MeshGrid
from .sensitivity import discreteness, volume_fraction

# history.csv carries only reproducible quantities; wall-clock time goes to timing.csv
HISTORY_EXCLUDE = ("wall_ms",)


def atomic_write(path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def history_columns(record_type) -> list[str]:
    return [c for c in record_type.columns() if c not in HISTORY_EXCLUDE]


def history_csv(history) -> str:
    from .optimizer import IterationRecord

    cols = history_columns(IterationRecord)
    return csv_text(cols, ([asdict(r)[c] for c in cols] for r in history))


def timing_csv(history) -> str:
    return csv_text(["iteration", "wall_ms"], ((r.iteration, r.wall_ms) for r in history))


def checks_csv(checks) -> str:
    cols = ["iteration", "reciprocity_error", "pressure_violation", "p_min", "p_max",
            "subproblem_residual"]
    return csv_text(cols, ([asdict(c)[k] for k in cols] for c in checks))


def read_history(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows).reshape(len(rows), len(header))


# -- design fields -----------------------------------------------------------

DESIGN_HEADER = ["element", "rho", "rho_tilde", "rho_bar"]


def design_csv(mesh: MeshGrid, rho, rho_tilde, rho_bar) -> str:
    """One row per element; a comment line records the grid so the file is self-contained."""
    meta = f"# nex={mesh.nex} ney={mesh.ney} lx={mesh.lx!r} ly={mesh.ly!r}\n"
    rows = zip(range(mesh.n_elements), map(float, rho), map(float, rho_tilde), map(float, rho_bar))
    return meta + csv_text(DESIGN_HEADER, rows)


def read_design(path) -> dict:
    """Parse a design CSV; returns grid metadata and the three columns."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise FileNotFoundError(f"design file not found: {path}") from None
    if not lines or not lines[0].startswith("#"):
        raise ValidationError(f"{path}: missing '# nex=.. ney=.. lx=.. ly=..' header line")
    meta = {}
    for token in lines[0][1:].split():
        key, _, value = token.partition("=")
        meta[key] = value
    try:
        nex, ney = int(meta["nex"]), int(meta["ney"])
        lx, ly = float(meta["lx"]), float(meta["ly"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed grid header {lines[0]!r}") from exc
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header != DESIGN_HEADER:
        raise ValidationError(f"{path}: expected columns {DESIGN_HEADER}, got {header}")
    try:
        data = np.array([[float(v) for v in row] for row in reader if row])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from exc
    if data.shape != (nex * ney, 4) or not np.array_equal(data[:, 0], np.arange(nex * ney)):
        raise ValidationError(f"{path}: expected {nex * ney} rows indexed 0..{nex * ney - 1}")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: contains NaN or inf")
    return dict(nex=nex, ney=ney, lx=lx, ly=ly, rho=data[:, 1], rho_tilde=data[:, 2],
                rho_bar=data[:, 3])


def quantize(rho_bar) -> np.ndarray:
    """8-bit gray levels: 0 for void, 255 for solid."""
    return np.rint(255.0 * np.clip(np.asarray(rho_bar, dtype=float), 0.0, 1.0)).astype(np.uint8)


def pgm_bytes(rho_bar, nex: int, ney: int) -> bytes:
    """Binary PGM, one pixel per element, first image row = top of the domain."""
    img = quantize(rho_bar).reshape(ney, nex)[::-1]
    return f"P5\n{nex} {ney}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValidationError(f"{path}: expected maxval 255, got {maxval}")
    pixels = np.frombuffer(data[len(data) - w * h:], dtype=np.uint8)
    return pixels.reshape(h, w)


# -- legacy VTK ----------------------------------------------------------------

def _vtk_header(mesh: MeshGrid, title: str) -> list[str]:
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {mesh.nex + 1} {mesh.ney + 1} 1", f"POINTS {mesh.n_nodes} double"]
    lines += [f"{x:.10e} {y:.10e} 0" for x, y in mesh.coords]
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    return lines


def vtk_scalars(mesh: MeshGrid, values, name: str, title: str) -> str:
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise ValidationError(f"expected {mesh.n_nodes} nodal values, got {values.shape}")
    lines = _vtk_header(mesh, title) + [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.10e}" for v in values]
    return "\n".join(lines) + "\n"


def vtk_vectors(mesh: MeshGrid, u, name: str, title: str) -> str:
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    if u.shape[0] != mesh.n_nodes:
        raise ValidationError(f"expected {mesh.n_nodes} nodal vectors, got {u.shape[0]}")
    lines = _vtk_header(mesh, title) + [f"VECTORS {name} double"]
    lines += [f"{a:.10e} {b:.10e} 0" for a, b in u]
    return "\n".join(lines) + "\n"


# -- run output -----------------------------------------------------------------

def summary_text(result) -> str:
    vol, mnd, disp = result.volumes, result.discreteness, result.output_displacement
    lines = [
        f"iterations = {result.iterations}",
        f"objective_worst = {result.objective!r}",
        f"output_displacement_mm = {disp['intermediate'] * 1e3!r}",
    ]
    lines += [f"output_displacement_mm.{n} = {disp[n] * 1e3!r}" for n in REALIZATIONS]
    lines += [f"volume_fraction.{n} = {vol[n]!r}" for n in REALIZATIONS]
    lines += [f"discreteness_percent.{n} = {mnd[n]!r}" for n in REALIZATIONS]
    lines += [f"objective.{n} = {result.report.f0[n]!r}" for n in REALIZATIONS]
    lines.append(f"volume_target_dilated = {result.volume_target_dilated!r}")
    if result.checks:
        lines.append(f"max_reciprocity_error = {max(c.reciprocity_error for c in result.checks)!r}")
        lines.append(f"max_pressure_violation_pa = {max(c.pressure_violation for c in result.checks)!r}")
    return "\n".join(lines) + "\n"


def read_summary(path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        out[key.strip()] = float(value)
    return out


def write_history(outdir, history, checks) -> list[Path]:
    outdir = Path(outdir)
    return [atomic_write(outdir / "history.csv", history_csv(history)),
            atomic_write(outdir / "timing.csv", timing_csv(history)),
            atomic_write(outdir / "checks.csv", checks_csv(checks))]


def write_results(outdir, model, result) -> list[Path]:
    """Write every artifact of a finished run; returns the paths written."""
    outdir = Path(outdir)
    mesh = model.mesh
    written = write_history(outdir, result.history, result.checks)
    t = result.triplet
    for name in REALIZATIONS:
        field = t.field(name)
        written.append(atomic_write(outdir / f"design_{name}.csv",
                                    design_csv(mesh, t.rho, t.rho_tilde, field)))
        written.append(atomic_write(outdir / f"design_{name}.pgm", pgm_bytes(field, mesh.nex, mesh.ney)))
    inter = result.report.realizations["intermediate"]
    written.append(atomic_write(outdir / "pressure_intermediate.vtk",
                                vtk_scalars(mesh, inter.pressure.p, "pressure", "pressure (Pa), intermediate design")))
    written.append(atomic_write(outdir / "displacement_intermediate.vtk",
                                vtk_vectors(mesh, inter.elastic.u, "displacement", "displacement (m), intermediate design")))
    written.append(atomic_write(outdir / "summary.txt", summary_text(result)))
    return written


def design_metrics(path) -> tuple[float, float]:
    """Volume fraction and discreteness of the projected field stored in a design CSV."""
    d = read_design(path)
    return volume_fraction(d["rho_bar"]), discreteness(d["rho_bar"])
