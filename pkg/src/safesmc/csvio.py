"""Trajectory CSV format.

One header line followed by one row per logged sample::

    t,x1..xn,z,s1..sp,usmc1..usmcp,us,u1..up,h,h_upsilon,V_smc,V_z,V_total,mode,reset

Floats are written with ``repr`` so that reading a file back yields the exact
same doubles. ``mode`` is the integer value of :class:`Mode` (0 PRE,
1 ACTIVE, 2 DONE) and ``reset`` is 0 or 1.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import TextIO, Union

import numpy as np

from .errors import EmptyTrajectory
from .sim import Trajectory

PathOrFile = Union[str, Path, TextIO]


def header(n: int, p: int) -> list[str]:
    cols = ["t"] + [f"x{i}" for i in range(1, n + 1)] + ["z"]
    cols += [f"s{i}" for i in range(1, p + 1)] + [f"usmc{i}" for i in range(1, p + 1)]
    cols += ["us"] + [f"u{i}" for i in range(1, p + 1)]
    cols += ["h", "h_upsilon", "V_smc", "V_z", "V_total", "mode", "reset"]
    return cols


def _float_block(traj: Trajectory) -> np.ndarray:
    k = len(traj)
    return np.column_stack([
        traj.t[:k], traj.x[:k], traj.z[:k], traj.s[:k], traj.u_smc[:k], traj.u_s[:k], traj.u[:k],
        traj.h[:k], traj.h_upsilon[:k], traj.V_smc[:k], traj.V_z[:k], traj.V_total[:k],
    ])


def dumps(traj: Trajectory) -> str:
    """Render a trajectory as CSV text."""
    buf = io.StringIO()
    buf.write(",".join(header(traj.n, traj.p)) + "\n")
    block = _float_block(traj).tolist()
    modes = traj.mode[: len(traj)].tolist()
    resets = traj.reset[: len(traj)].tolist()
    buf.writelines(
        ",".join(map(repr, row)) + f",{m},{int(r)}\n" for row, m, r in zip(block, modes, resets)
    )
    return buf.getvalue()


def write_csv(traj: Trajectory, dest: PathOrFile) -> None:
    text = dumps(traj)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def _shape_from_header(cols: list[str]) -> tuple[int, int]:
    n = sum(1 for c in cols if c[:1] == "x" and c[1:].isdigit())
    p = sum(1 for c in cols if c.startswith("usmc"))
    if cols != header(n, p):
        raise ValueError(f"unexpected CSV header: {','.join(cols)}")
    return n, p


def loads(text: str) -> Trajectory:
    """Parse CSV text produced by :func:`dumps`; raises ValueError on malformed input."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty CSV input")
    n, p = _shape_from_header(lines[0].strip().split(","))
    width = len(header(n, p))
    rows = [ln for ln in lines[1:] if ln.strip()]
    if not rows:
        raise EmptyTrajectory("CSV file has a header but no samples")
    data = np.empty((len(rows), width - 2))
    modes = np.empty(len(rows), dtype=np.int8)
    resets = np.empty(len(rows), dtype=bool)
    for k, ln in enumerate(rows):
        fields = ln.split(",")
        if len(fields) != width:
            raise ValueError(f"row {k + 2}: expected {width} fields, got {len(fields)}")
        try:
            data[k] = [float(f) for f in fields[:-2]]
            modes[k] = int(fields[-2])
            resets[k] = bool(int(fields[-1]))
        except ValueError as exc:
            raise ValueError(f"row {k + 2}: {exc}") from exc
    if not set(np.unique(modes).tolist()) <= {0, 1, 2}:
        raise ValueError("mode column must contain only 0, 1 or 2")

    i = 0

    def take(w: int) -> np.ndarray:
        nonlocal i
        out = data[:, i:i + w]
        i += w
        return out

    t = take(1)[:, 0]
    x = take(n)
    z = take(1)[:, 0]
    s = take(p)
    u_smc = take(p)
    u_s = take(1)[:, 0]
    u = take(p)
    h, h_ups, v_smc, v_z, v_total = (take(1)[:, 0] for _ in range(5))
    return Trajectory.from_columns(
        t=t, x=x, z=z, s=s, u_smc=u_smc, u_s=u_s, u=u, h=h, h_upsilon=h_ups,
        V_smc=v_smc, V_z=v_z, V_total=v_total, mode=modes, reset=resets,
    )


def read_csv(src: PathOrFile) -> Trajectory:
    if isinstance(src, (str, Path)):
        text = Path(src).read_text(encoding="utf-8")
    else:
        text = src.read()
    return loads(text)
