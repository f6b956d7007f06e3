"""
Parameter-space sweeps of the separability statistic and their export.

Both ions share the exchange axis, which always carries 2J_ex.  The second
axis is the tunneling splitting 2E for Tb and the axial hyperfine A_par for
Cu.  Tb points sit on the 95 GHz resonance surface Hz = f(J_ex), Cu points
at a fixed field.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .labeling import FIDELITY_FLOOR, separability
from .spectrum import NoResonanceError, resonance_field, single_ion_levels
from .spinsys import SystemParams

MAX_FAIL_FRACTION = 0.10
MAP_FORMAT = "molqec-fidelity-map"


class SweepAborted(RuntimeError):
    def __init__(self, message: str, partial: "FidelityMap"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class FieldMode:
    mode: str = "fixed"  # "fixed" | "resonance"
    hz: Optional[float] = None
    target_ghz: float = 95.0

    def __post_init__(self):
        if self.mode not in ("fixed", "resonance"):
            raise ValueError(f"field mode must be 'fixed' or 'resonance', got {self.mode!r}")

    def to_json_dict(self) -> dict:
        if self.mode == "resonance":
            return {"mode": "resonance", "target_GHz": self.target_ghz}
        d = {"mode": "fixed"}
        if self.hz is not None:
            d["Hz_T"] = self.hz
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "FieldMode":
        mode = d.get("mode", "fixed")
        hz = d.get("Hz_T")
        return cls(mode, None if hz is None else float(hz), float(d.get("target_GHz", 95.0)))


def _axis(lo: float, hi: float, steps: int) -> tuple[float, ...]:
    if steps < 1:
        raise ValueError(f"axis needs at least one step, got {steps}")
    return tuple(float(x) for x in np.linspace(lo, hi, steps))


@dataclass(frozen=True)
class SweepGrid:
    ion: str
    j_axis: tuple[float, ...]  # 2J_ex, cm^-1
    y_axis: tuple[float, ...]  # 2E (Tb) or A_par (Cu), cm^-1
    field: Optional[FieldMode] = None  # default: resonance for Tb, 2.25 T for Cu
    base: Optional[SystemParams] = None

    def __post_init__(self):
        if self.ion not in ("Tb", "Cu"):
            raise ValueError(f"sweeps are defined for 'Tb' and 'Cu', got {self.ion!r}")
        object.__setattr__(self, "j_axis", tuple(float(x) for x in self.j_axis))
        object.__setattr__(self, "y_axis", tuple(float(x) for x in self.y_axis))
        for name, ax in (("j_axis", self.j_axis), ("y_axis", self.y_axis)):
            if not ax:
                raise ValueError(f"{name} is empty")
            d = np.diff(ax)
            if len(d) and not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError(f"{name} must be strictly monotone")
        if self.base is not None and self.base.ion != self.ion:
            raise ValueError(f"base parameters are for {self.base.ion!r}, grid is {self.ion!r}")
        if self.base is None:
            object.__setattr__(self, "base", SystemParams.preset(self.ion))
        if self.field is None:
            fld = FieldMode("resonance", target_ghz=95.0) if self.ion == "Tb" else FieldMode("fixed", hz=2.25)
            object.__setattr__(self, "field", fld)

    @property
    def y_name(self) -> str:
        return "2E" if self.ion == "Tb" else "A_par"

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.j_axis), len(self.y_axis)

    @classmethod
    def default(cls, ion: str, steps: int = 10) -> "SweepGrid":
        if ion == "Tb":
            return cls("Tb", _axis(-1.0, -0.2, steps), _axis(0.0, 1.0, steps))
        if ion == "Cu":
            return cls("Cu", _axis(-20.0, -2.0, steps), _axis(0.005, 0.030, steps))
        raise ValueError(f"no default grid for {ion!r}")

    def params_at(self, j2: float, y: float, hz: float) -> SystemParams:
        if self.ion == "Tb":
            return self.base.replace(J_ex=j2 / 2, E=y / 2, Hz=hz)
        return self.base.replace(J_ex=j2 / 2, A_par=y, Hz=hz)

    def to_json_dict(self) -> dict:
        d = {
            "ion": self.ion,
            "j2_axis": list(self.j_axis),
            ("e2_axis" if self.ion == "Tb" else "a_par_axis"): list(self.y_axis),
            "field": self.field.to_json_dict(),
        }
        if self.base != SystemParams.preset(self.ion):
            d["params"] = self.base.to_json_dict()
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SweepGrid":
        """Accepts explicit ``*_axis`` lists or ``*_range`` + ``*_steps`` pairs."""
        ion = d.get("ion")
        if ion not in ("Tb", "Cu"):
            raise ValueError(f"grid 'ion' must be 'Tb' or 'Cu', got {ion!r}")
        dflt = cls.default(ion)
        ykey = "e2" if ion == "Tb" else "a_par"

        def read(key, fallback):
            if f"{key}_axis" in d:
                return tuple(float(x) for x in d[f"{key}_axis"])
            if f"{key}_range" in d:
                lo, hi = d[f"{key}_range"]
                return _axis(float(lo), float(hi), int(d.get(f"{key}_steps", 10)))
            return fallback

        base = SystemParams.from_json_dict({**d["params"], "ion": ion}) if "params" in d else None
        fld = FieldMode.from_json_dict(d["field"]) if "field" in d else dflt.field
        return cls(ion, read("j2", dflt.j_axis), read(ykey, dflt.y_axis), fld, base)

    @classmethod
    def load(cls, path) -> "SweepGrid":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PointResult:
    one_minus_f_128: float
    hz: float
    delta: float
    omega: float
    wall_time: float = field(default=0.0, compare=False)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _failed(reason: str, hz: float = math.nan) -> PointResult:
    return PointResult(math.nan, hz, math.nan, math.nan, 0.0, reason)


@dataclass
class FidelityMap:
    grid: SweepGrid
    values: list  # row-major over (j, y); PointResult or None when not computed

    def __post_init__(self):
        n = len(self.grid.j_axis) * len(self.grid.y_axis)
        if len(self.values) != n:
            raise ValueError(f"map has {len(self.values)} values for {n} grid points")

    def at(self, a: int, b: int) -> Optional[PointResult]:
        return self.values[a * len(self.grid.y_axis) + b]

    @property
    def one_minus_f_128(self) -> np.ndarray:
        out = np.array([v.one_minus_f_128 if v is not None else math.nan for v in self.values])
        return out.reshape(self.grid.shape)

    @property
    def hz(self) -> np.ndarray:
        return np.array([v.hz if v is not None else math.nan for v in self.values]).reshape(self.grid.shape)

    @property
    def failures(self) -> list[tuple[int, str]]:
        return [(k, v.error if v is not None else "not computed")
                for k, v in enumerate(self.values) if v is None or not v.ok]

    @property
    def complete(self) -> bool:
        return not self.failures

    def fraction_below(self, threshold: float) -> float:
        vals = self.one_minus_f_128
        return float(np.mean(np.nan_to_num(vals, nan=np.inf) < threshold))

    def same_values(self, other: "FidelityMap") -> bool:
        """Bitwise equality of every exported quantity (NaN equals NaN)."""
        return map_to_json_dict(self) == map_to_json_dict(other)


# -- evaluation ---------------------------------------------------------------------------


def evaluate_point(p: SystemParams) -> PointResult:
    t0 = time.perf_counter()
    report = separability(p)
    levels = single_ion_levels(p)
    if p.electron_spin == 0.5:
        delta, omega = 0.0, math.inf
    else:
        delta, omega = float(levels[1] - levels[0]), float(levels[2] - levels[1])
    return PointResult(report.one_minus_f_128, p.Hz, delta, omega, time.perf_counter() - t0)


def _row_field(task):
    base, j2, field_mode = task
    if field_mode.mode == "fixed":
        return (field_mode.hz if field_mode.hz is not None else base.Hz), None
    p = base.replace(J_ex=j2 / 2, E=0.0)
    try:
        return resonance_field(p, field_mode.target_ghz), None
    except NoResonanceError as exc:
        return math.nan, f"resonance: {exc}"


def _point_task(task):
    grid, a, b, hz = task
    p = grid.params_at(grid.j_axis[a], grid.y_axis[b], hz)
    try:
        return evaluate_point(p)
    except Exception as exc:  # recorded per point; the sweep carries on
        return _failed(f"{type(exc).__name__}: {exc}", hz)


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield fn(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, tasks)


def resolve_workers(workers: Optional[int] = None) -> int:
    env = os.environ.get("MOLQEC_WORKERS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise ValueError(f"MOLQEC_WORKERS must be an integer, got {env!r}") from None
    return max(1, int(workers or 1))


def resonance_surface(grid: SweepGrid, workers: int = 1) -> tuple[np.ndarray, list]:
    """Per-point Hz (constant along the second axis) and per-row failure reasons.

    In resonance mode the field is solved once per exchange value with E = 0,
    so the surface depends on J_ex only.
    """
    rows = list(_map(_row_field, [(grid.base, j2, grid.field) for j2 in grid.j_axis], workers))
    hz = np.array([h for h, _ in rows], dtype=float)
    return np.repeat(hz[:, None], len(grid.y_axis), axis=1), [r for _, r in rows]


def run_sweep(grid: SweepGrid, workers: int = 1, resume: Optional[FidelityMap] = None,
              max_fail_fraction: float = MAX_FAIL_FRACTION, log=None) -> FidelityMap:
    """Evaluate every grid point; results are merged by grid index.

    With ``resume`` only points that failed (or were never computed) are
    recomputed.  More than ``max_fail_fraction`` failed points abort the
    sweep with :class:`SweepAborted`, which carries the partial map.
    """
    nj, ny = grid.shape
    n = nj * ny
    if resume is not None and resume.grid != grid:
        raise ValueError("resume map was produced for a different grid")
    values: list = list(resume.values) if resume is not None else [None] * n
    todo = [k for k, v in enumerate(values) if v is None or not v.ok]
    if not todo:
        return FidelityMap(grid, values)
    t0 = time.perf_counter()
    hz, row_err = resonance_surface(grid, workers)
    tasks, limit, fails = [], max_fail_fraction * n, 0
    for k in todo:
        a, b = divmod(k, ny)
        if row_err[a] is not None:
            values[k] = _failed(row_err[a])
            fails += 1
        else:
            tasks.append((grid, a, b, float(hz[a, b])))
    if fails > limit:
        raise SweepAborted(f"{fails} of {n} points failed before evaluation", FidelityMap(grid, values))
    for task, res in zip(tasks, _map(_point_task, tasks, workers)):
        k = task[1] * ny + task[2]
        values[k] = res
        if log is not None:
            log(f"point j2={grid.j_axis[task[1]]:+.4f} {grid.y_name}={grid.y_axis[task[2]]:.4f} "
                f"Hz={res.hz:.5f} 1-f128={res.one_minus_f_128:.3e} "
                f"{'ok' if res.ok else 'FAILED: ' + res.error} ({res.wall_time:.2f} s)")
        if not res.ok:
            fails += 1
            if fails > limit:
                raise SweepAborted(f"more than {max_fail_fraction:.0%} of points failed "
                                   f"(latest: {res.error})", FidelityMap(grid, values))
    if log is not None:
        log(f"sweep finished: {n - fails}/{n} points ok in {time.perf_counter() - t0:.1f} s")
    return FidelityMap(grid, values)


# -- export ------------------------------------------------------------------------------------


def _num(x: float):
    return x if math.isfinite(x) else repr(float(x))


def _unnum(x) -> float:
    return float(x)


def map_to_json_dict(m: FidelityMap) -> dict:
    nj, ny = m.grid.shape
    points = []
    for k, v in enumerate(m.values):
        a, b = divmod(k, ny)
        d = {"i": a, "k": b, "j2": m.grid.j_axis[a], "y": m.grid.y_axis[b]}
        if v is None:
            d["error"] = "not computed"
        else:
            d.update(one_minus_f128=_num(v.one_minus_f_128), Hz_T=_num(v.hz),
                     delta=_num(v.delta), omega=_num(v.omega), error=v.error)
        points.append(d)
    return {
        "format": MAP_FORMAT,
        "version": __version__,
        "grid": m.grid.to_json_dict(),
        "params": m.grid.base.to_json_dict(),
        "fidelity_floor": FIDELITY_FLOOR,
        "points": points,
    }


def map_from_json_dict(d: dict) -> FidelityMap:
    if d.get("format") != MAP_FORMAT:
        raise ValueError(f"not a fidelity map document (format {d.get('format')!r})")
    g = dict(d["grid"])
    g.setdefault("params", d.get("params"))
    if g["params"] is None:
        del g["params"]
    grid = SweepGrid.from_json_dict(g)
    values: list = [None] * (len(grid.j_axis) * len(grid.y_axis))
    ny = len(grid.y_axis)
    for p in d["points"]:
        if p.get("error") == "not computed" and "one_minus_f128" not in p:
            continue
        values[p["i"] * ny + p["k"]] = PointResult(
            _unnum(p["one_minus_f128"]), _unnum(p["Hz_T"]), _unnum(p["delta"]),
            _unnum(p["omega"]), 0.0, p.get("error"))
    return FidelityMap(grid, values)


def load_map(path) -> FidelityMap:
    return map_from_json_dict(json.loads(Path(path).read_text()))


def _write_csv(m: FidelityMap, path: Path) -> None:
    ny = len(m.grid.y_axis)
    lines = ["j,e_or_A,Hz_T,one_minus_f128,delta,omega"]
    for k, v in enumerate(m.values):
        a, b = divmod(k, ny)
        row = [m.grid.j_axis[a], m.grid.y_axis[b]]
        row += [math.nan] * 4 if v is None else [v.hz, v.one_minus_f_128, v.delta, v.omega]
        lines.append(",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")


# monotone-luminance ramp (viridis anchors), low -> high
_RAMP = [(68, 1, 84), (72, 40, 120), (62, 73, 137), (49, 104, 142), (38, 130, 142),
         (31, 158, 137), (53, 183, 121), (110, 206, 88), (181, 222, 43), (253, 231, 37)]
LOG_MIN, LOG_MAX = -6.0, 0.0


def ramp_color(value: float) -> str:
    """Hex colour of log10 value clamped to [-6, 0]."""
    t = (min(LOG_MAX, max(LOG_MIN, value)) - LOG_MIN) / (LOG_MAX - LOG_MIN)
    x = t * (len(_RAMP) - 1)
    i = min(int(x), len(_RAMP) - 2)
    f = x - i
    c = [round(_RAMP[i][k] + f * (_RAMP[i + 1][k] - _RAMP[i][k])) for k in range(3)]
    return "#{:02x}{:02x}{:02x}".format(*c)


def map_log_values(m: FidelityMap) -> np.ndarray:
    """log10(max(1 - f_128, floor)); NaN where the point failed."""
    v = m.one_minus_f_128
    with np.errstate(invalid="ignore"):
        return np.where(np.isnan(v), np.nan, np.log10(np.maximum(v, FIDELITY_FLOOR)))


def render_svg(m: FidelityMap) -> str:
    nj, ny = m.grid.shape
    cell, left, top = 36, 90, 40
    width = left + ny * cell + 140
    height = top + nj * cell + 70
    logs = map_log_values(m)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{left}" y="20" font-size="13">log10(1 - F_128), {m.grid.ion}</text>']
    for a in range(nj):
        for b in range(ny):
            x, y = left + b * cell, top + a * cell
            val = logs[a, b]
            if np.isnan(val):
                out.append(f'<rect class="cell failed" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                           f'fill="#bbbbbb" stroke="#ff0000"/>')
            else:
                out.append(f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                           f'fill="{ramp_color(val)}"><title>{val:.3f}</title></rect>')
    for a, j2 in enumerate(m.grid.j_axis):
        out.append(f'<text x="{left - 6}" y="{top + a * cell + cell / 2 + 4}" '
                   f'text-anchor="end">{j2:.3g}</text>')
    for b, yv in enumerate(m.grid.y_axis):
        out.append(f'<text x="{left + b * cell + cell / 2}" y="{top + nj * cell + 14}" '
                   f'text-anchor="middle">{yv:.3g}</text>')
    unit = "cm-1"
    out.append(f'<text x="{left + ny * cell / 2}" y="{top + nj * cell + 34}" text-anchor="middle">'
               f'{m.grid.y_name} ({unit})</text>')
    out.append(f'<text x="16" y="{top + nj * cell / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + nj * cell / 2})">2J_ex ({unit})</text>')
    lx, lh = left + ny * cell + 30, nj * cell
    for s in range(60):
        v = LOG_MAX - (LOG_MAX - LOG_MIN) * (s + 0.5) / 60
        out.append(f'<rect class="legend" x="{lx}" y="{top + s * lh / 60:.2f}" width="18" '
                   f'height="{lh / 60 + 0.5:.2f}" fill="{ramp_color(v)}"/>')
    for t in range(int(LOG_MIN), int(LOG_MAX) + 1):
        ty = top + (LOG_MAX - t) / (LOG_MAX - LOG_MIN) * lh
        out.append(f'<text class="tick" x="{lx + 24}" y="{ty + 4:.2f}">{t}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_map(m: FidelityMap, fmt: str, path) -> Path:
    path = Path(path)
    try:
        if fmt == "csv":
            _write_csv(m, path)
        elif fmt == "json":
            path.write_text(json.dumps(map_to_json_dict(m), indent=1))
        elif fmt == "svg":
            path.write_text(render_svg(m))
        else:
            raise ValueError(f"unknown export format {fmt!r}; use csv, json or svg")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def export_all(m: FidelityMap, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [export_map(m, fmt, out / f"map.{fmt}") for fmt in ("csv", "json", "svg")]


def resonance_table(grid: SweepGrid, hz_rows: Sequence[float], lo: float = 0.09,
                    hi: float = 0.22) -> str:
    """Plain-text comparison of the computed surface against a reference interval."""
    lines = [f"{'2J_ex (cm-1)':>14} {'Hz (T)':>10}  in [{lo}, {hi}]"]
    for j2, h in zip(grid.j_axis, hz_rows):
        lines.append(f"{j2:>14.4f} {h:>10.5f}  {'yes' if lo <= h <= hi else 'no'}")
    return "\n".join(lines)
