"""Chain driver: run a kernel for many steps and record observables.

``run_chain`` advances one of the five kernel kinds (MRW, LazyMRW,
RestrictedMRW, PT, ST) for a fixed number of steps, recording named
observables every ``thin`` steps into a :class:`Trace`.  Two drivers
produce bit-identical traces: a pure-Python loop (always available) and
a compiled loop for the builtin potentials; both consume the same
uniform-draw sequence documented in :mod:`tempergap.kernels.steps`.

Traces serialize to a CSV of observable columns plus a JSON manifest
holding the kernel descriptor, seed, counters, and wall time.  The CSV
is written with 17 significant digits, so a rerun with the same seed
reproduces it byte-for-byte (the manifest differs only in wall time).
"""

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from ..torus import RngStream
from .backend import select_backend
from .steps import (
    TemperatureLadder,
    _ball,
    _basin_label_1d,
    _met_accept,
    _resample_level,
    _scalar_u,
)

__all__ = ["KernelDescriptor", "Trace", "run_chain", "observable_names"]

_KINDS = ("MRW", "LazyMRW", "RestrictedMRW", "PT", "ST")

_COUNTER_NAMES = (
    "met_proposals",
    "met_accepts",
    "met_holds",
    "swap_attempts",
    "swap_accepts",
    "swap_holds",
    "temp_resamples",
    "temp_holds",
    "restricted_rejections",
)

# Observable name -> compiled-driver opcode (shared with the extension).
_OBS_CODES = {
    "x": 0,
    "U": 1,
    "basin": 2,
    "level": 3,
    "cold_x": 4,
    "cold_U": 5,
    "cold_basin": 6,
    "levels_x": 7,
    "levels_U": 8,
}

_OBS_BY_KIND = {
    "MRW": ("x", "U", "basin"),
    "LazyMRW": ("x", "U", "basin"),
    "RestrictedMRW": ("x", "U", "basin"),
    "PT": ("cold_x", "cold_U", "cold_basin", "levels_x", "levels_U"),
    "ST": ("x", "U", "level", "basin"),
}

_DEFAULT_OBS = {
    "MRW": ("x", "U"),
    "LazyMRW": ("x", "U"),
    "RestrictedMRW": ("x", "U"),
    "PT": ("cold_x", "cold_U"),
    "ST": ("x", "U", "level"),
}

_BASIN_OBS = ("basin", "cold_basin")

# Observables that jointly reconstruct the full state of each kind
# (used by the store-states flag; traces otherwise hold values only).
_STATE_OBS = {
    "MRW": ("x",),
    "LazyMRW": ("x",),
    "RestrictedMRW": ("x",),
    "PT": ("levels_x",),
    "ST": ("x", "level"),
}


@dataclass(frozen=True, eq=False)
class KernelDescriptor:
    """Immutable specification of a single-chain kernel.

    Parameters
    ----------
    kind : str
        One of ``MRW``, ``LazyMRW``, ``RestrictedMRW``, ``PT``, ``ST``.
    pot : Potential
        Energy landscape.
    eps, h : float, optional
        Temperature and step size (MRW family only).
    ladder : TemperatureLadder, optional
        Temperature ladder (PT and ST only).
    basin_label : int, optional
        Basin index for the restricted walk.
    geom : BasinGeometry, optional
        Basin geometry; required for the restricted walk and for the
        ``basin`` / ``cold_basin`` observables.
    x0 : array, optional
        Initial position (used for every replica under PT).  Defaults to
        the global minimum (restricted walk: the minimum of its basin).
    level0 : int
        Initial temperature level for ST (default 0, the hottest).
    """

    kind: str
    pot: object
    eps: float | None = None
    h: float | None = None
    ladder: TemperatureLadder | None = None
    basin_label: int | None = None
    geom: object | None = None
    x0: np.ndarray | None = None
    level0: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError("unknown kernel kind %r (have %s)" % (self.kind, _KINDS))
        if self.kind in ("MRW", "LazyMRW", "RestrictedMRW"):
            if self.eps is None or self.h is None:
                raise ValueError("%s needs eps and h" % self.kind)
            if self.eps <= 0 or not (0.0 < self.h <= 1.0):
                raise ValueError("need eps > 0 and 0 < h <= 1")
            if self.kind == "RestrictedMRW":
                if self.geom is None or self.basin_label is None:
                    raise ValueError("RestrictedMRW needs geom and basin_label")
                if self.basin_label not in (1, 2):
                    raise ValueError("basin_label must be 1 or 2")
        else:
            if self.ladder is None:
                raise ValueError("%s needs a ladder" % self.kind)
            if not (0 <= self.level0 < self.ladder.n_levels):
                raise ValueError("level0 out of range")
        if self.x0 is not None:
            x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
            if x0.shape != (self.pot.dim,):
                raise ValueError("x0 must have shape (%d,)" % self.pot.dim)
            object.__setattr__(self, "x0", x0)

    def initial_position(self) -> np.ndarray:
        if self.x0 is not None:
            return self.x0.copy()
        if self.kind == "RestrictedMRW":
            return np.asarray(self.geom.minima[self.basin_label - 1], float).copy()
        if self.pot.minima is None:
            raise ValueError("potential has no known minima; pass x0 explicitly")
        return np.asarray(self.pot.minima[0], float).copy()

    def summary(self) -> dict:
        """JSON-serializable echo of the descriptor (manifest payload)."""
        out = {
            "kind": self.kind,
            "potential": self.pot.name,
            "potential_params": {k: float(v) for k, v in self.pot.params.items()},
            "dim": self.pot.dim,
        }
        if self.eps is not None:
            out["eps"] = float(self.eps)
        if self.h is not None:
            out["h"] = float(self.h)
        if self.ladder is not None:
            out["ladder"] = {
                "eps": [float(v) for v in self.ladder.eps],
                "h": [float(v) for v in self.ladder.h],
                "nu_bar": self.ladder.nu_bar,
                "eta": self.ladder.eta,
            }
        if self.basin_label is not None:
            out["basin_label"] = int(self.basin_label)
        if self.kind == "ST":
            out["level0"] = int(self.level0)
        out["x0"] = [float(v) for v in self.initial_position()]
        return out


def observable_names(kind: str) -> tuple:
    """Valid observable names for a kernel kind."""
    if kind not in _KINDS:
        raise ValueError("unknown kernel kind %r" % (kind,))
    return _OBS_BY_KIND[kind]


def _obs_width(name: str, desc: KernelDescriptor) -> int:
    d = desc.pot.dim
    n_lev = desc.ladder.n_levels if desc.ladder is not None else 0
    return {
        "x": d,
        "U": 1,
        "basin": 1,
        "level": 1,
        "cold_x": d,
        "cold_U": 1,
        "cold_basin": 1,
        "levels_x": n_lev * d,
        "levels_U": n_lev,
    }[name]


@dataclass
class Trace:
    """Recorded output of one chain run.

    ``data`` maps each observable name to a float64 array of shape
    ``(n_records, width)``; row r was recorded after step ``(r+1)*thin``.
    ``counters`` holds integer event counts (proposals, accepts, holds,
    swap attempts/accepts, temperature resamples, restriction reverts).
    """

    descriptor: dict
    seed: int
    stream_id: int
    steps: int
    thin: int
    observables: tuple
    backend: str
    data: dict
    counters: dict
    wall_time_s: float
    version: str = ""
    states: np.ndarray | None = None

    @property
    def n_records(self) -> int:
        return self.steps // self.thin

    def __len__(self) -> int:
        return self.n_records

    def record_steps(self) -> np.ndarray:
        return np.arange(1, self.n_records + 1, dtype=np.int64) * self.thin

    def column(self, name: str) -> np.ndarray:
        """Observable values as (n_records,) if scalar else (n_records, w)."""
        a = self.data[name]
        return a[:, 0] if a.shape[1] == 1 else a

    def _csv_header(self) -> list:
        cols = ["step"]
        for name in self.observables:
            w = self.data[name].shape[1]
            if w == 1:
                cols.append(name)
            else:
                cols.extend("%s_%d" % (name, i) for i in range(w))
        return cols

    def write_csv(self, path):
        """Write the trace as CSV with 17-significant-digit floats."""
        steps = self.record_steps()
        blocks = [self.data[name] for name in self.observables]
        with open(path, "w") as f:
            f.write(",".join(self._csv_header()) + "\n")
            for r in range(self.n_records):
                row = [str(int(steps[r]))]
                for b in blocks:
                    row.extend("%.17g" % v for v in b[r])
                f.write(",".join(row) + "\n")

    def manifest(self) -> dict:
        return {
            "descriptor": self.descriptor,
            "seed": self.seed,
            "stream_id": self.stream_id,
            "steps": self.steps,
            "thin": self.thin,
            "observables": list(self.observables),
            "backend": self.backend,
            "counters": dict(self.counters),
            "wall_time_s": self.wall_time_s,
            "version": self.version,
            "store_states": self.states is not None,
        }

    def write_manifest(self, path):
        with open(path, "w") as f:
            json.dump(self.manifest(), f, indent=2, sort_keys=True)
            f.write("\n")

    def write(self, base):
        """Write ``<base>.csv`` and ``<base>.json``."""
        self.write_csv(str(base) + ".csv")
        self.write_manifest(str(base) + ".json")


def _label_closure(geom):
    """Scalar basin classifier: exact arcs for d=1, cached flow for d=2."""
    if geom.dim == 1:
        pts_a, labels_a = geom.arc_table()
        pts = [float(p) for p in pts_a]
        labels = [int(v) for v in labels_a]
        return lambda xs: _basin_label_1d(xs[0], pts, labels)
    cache = geom.cache()
    return lambda xs: cache.lookup(np.array(xs, dtype=np.float64))


def run_chain(descriptor: KernelDescriptor, steps: int, observables=None,
              thin: int = 1, rng: RngStream | None = None,
              store_states: bool = False) -> Trace:
    """Advance the kernel ``steps`` times, recording every ``thin`` steps.

    Parameters
    ----------
    descriptor : KernelDescriptor
        Kernel specification (kind, potential, temperatures, geometry).
    steps : int
        Number of steps, at least 1.
    observables : sequence of str, optional
        Names from :func:`observable_names`; defaults per kind to the
        position/energy set.
    thin : int
        Record stride (record after steps thin, 2*thin, ...).
    rng : RngStream
        Draw source; identical ``(seed, stream_id)`` give bit-identical
        traces regardless of backend.
    store_states : bool
        Also keep the full state at each record in ``Trace.states``
        (traces otherwise store observable values only).

    Raises
    ------
    ValueError
        Bad arguments, unknown observable, or a restricted start outside
        its basin.
    RuntimeError
        An observable evaluation failed (message carries the step index).
    """
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be an integer >= 1")
    if int(thin) != thin or thin < 1:
        raise ValueError("thin must be an integer >= 1")
    steps, thin = int(steps), int(thin)
    if rng is None:
        rng = RngStream(0, 0)
    if observables is None:
        observables = _DEFAULT_OBS[descriptor.kind]
    observables = tuple(observables)
    valid = _OBS_BY_KIND[descriptor.kind]
    for name in observables:
        if name not in valid:
            raise ValueError(
                "observable %r is not defined for %s (have %s)"
                % (name, descriptor.kind, valid)
            )
    if len(set(observables)) != len(observables):
        raise ValueError("duplicate observable names")
    if any(name in _BASIN_OBS for name in observables) and descriptor.geom is None:
        raise ValueError("basin observables need descriptor.geom")

    recorded = observables
    if store_states:
        extra = tuple(
            n for n in _STATE_OBS[descriptor.kind] if n not in observables
        )
        recorded = observables + extra

    n_rec = steps // thin
    widths = [_obs_width(name, descriptor) for name in recorded]
    buffers = {
        name: np.empty((n_rec, w), dtype=np.float64)
        for name, w in zip(recorded, widths)
    }
    counters = dict.fromkeys(_COUNTER_NAMES, 0)

    backend = select_backend(descriptor, recorded)
    t0 = time.perf_counter()
    if backend == "compiled":
        from . import _core

        _run_compiled(_core, descriptor, steps, recorded, thin, rng,
                      buffers, counters)
    else:
        _run_python(descriptor, steps, recorded, thin, rng, buffers, counters)
    wall = time.perf_counter() - t0

    states = None
    if store_states:
        states = np.hstack([buffers[n] for n in _STATE_OBS[descriptor.kind]])

    from .. import __version__

    return Trace(
        descriptor=descriptor.summary(),
        seed=rng.seed,
        stream_id=rng.stream_id,
        steps=steps,
        thin=thin,
        observables=observables,
        backend=backend,
        data={n: buffers[n] for n in observables},
        counters=counters,
        wall_time_s=wall,
        version=__version__,
        states=states,
    )


# ---------------------------------------------------------------------
# Pure-Python driver
# ---------------------------------------------------------------------

def _run_python(desc, steps, observables, thin, rng, buffers, counters):
    if desc.kind in ("MRW", "LazyMRW", "RestrictedMRW"):
        _py_mrw(desc, steps, observables, thin, rng, buffers, counters)
    elif desc.kind == "PT":
        _py_pt(desc, steps, observables, thin, rng, buffers, counters)
    else:
        _py_st(desc, steps, observables, thin, rng, buffers, counters)


def _record(buffers, observables, rec, values):
    for name in observables:
        buffers[name][rec] = values[name]()


def _py_mrw(desc, steps, observables, thin, rng, buffers, counters):
    pot = desc.pot
    d = pot.dim
    u = _scalar_u(pot)
    uniform = rng.uniform
    eps, h = float(desc.eps), float(desc.h)
    lazy = desc.kind == "LazyMRW"
    restricted = desc.kind == "RestrictedMRW"

    xs = list(desc.initial_position())
    ux = u(xs)

    label = None
    if restricted or "basin" in observables:
        label = _label_closure(desc.geom)
    if restricted:
        home = desc.basin_label
        if label(xs) != home:
            raise ValueError(
                "restricted chain started outside basin %d at %s" % (home, xs)
            )

    values = {
        "x": lambda: xs,
        "U": lambda: ux,
        "basin": (lambda: home) if restricted else (lambda: label(xs)),
    }

    met_p = met_a = met_h = res_r = 0
    rec = 0
    for step in range(1, steps + 1):
        if lazy and uniform() < 0.5:
            met_h += 1
        else:
            y = _ball(xs, h, uniform, d)
            uy = u(y)
            met_p += 1
            if _met_accept(ux, uy, eps, uniform):
                if restricted and label(y) != home:
                    res_r += 1
                else:
                    xs, ux = y, uy
                    met_a += 1
        if step % thin == 0:
            try:
                _record(buffers, observables, rec, values)
            except Exception as exc:
                raise RuntimeError(
                    "observable evaluation failed at step %d" % step
                ) from exc
            rec += 1

    counters["met_proposals"] = met_p
    counters["met_accepts"] = met_a
    counters["met_holds"] = met_h
    counters["restricted_rejections"] = res_r


def _py_pt(desc, steps, observables, thin, rng, buffers, counters):
    pot = desc.pot
    d = pot.dim
    u = _scalar_u(pot)
    uniform = rng.uniform
    exp = math.exp
    lad = desc.ladder
    n_lev = lad.n_levels
    n_pairs = lad.n_pairs
    betas = [float(b) for b in lad.betas]
    eps = [float(v) for v in lad.eps]
    hs = [float(v) for v in lad.h]

    x0 = list(desc.initial_position())
    xrep = [list(x0) for _ in range(n_lev)]
    urep = [u(x) for x in xrep]

    label = _label_closure(desc.geom) if "cold_basin" in observables else None
    values = {
        "cold_x": lambda: xrep[-1],
        "cold_U": lambda: urep[-1],
        "cold_basin": lambda: label(xrep[-1]),
        "levels_x": lambda: [c for x in xrep for c in x],
        "levels_U": lambda: urep,
    }

    met_p = met_a = met_h = sw_at = sw_ac = sw_h = 0
    rec = 0
    for step in range(1, steps + 1):
        # phases: swap sweep, single-replica update, swap sweep
        for phase in (0, 1, 2):
            if phase != 1:
                if n_pairs == 0:
                    continue
                if uniform() < 0.5:
                    sw_h += 1
                    continue
                uu = uniform()
                i = int(uu * n_pairs)
                if i >= n_pairs:
                    i = n_pairs - 1
                draw = uniform()
                log_a = (betas[i + 1] - betas[i]) * (urep[i + 1] - urep[i])
                sw_at += 1
                if log_a >= 0.0 or draw < exp(log_a):
                    xrep[i], xrep[i + 1] = xrep[i + 1], xrep[i]
                    urep[i], urep[i + 1] = urep[i + 1], urep[i]
                    sw_ac += 1
            else:
                if uniform() < 0.5:
                    met_h += 1
                    continue
                uu = uniform()
                j = int(uu * n_lev)
                if j >= n_lev:
                    j = n_lev - 1
                y = _ball(xrep[j], hs[j], uniform, d)
                uy = u(y)
                met_p += 1
                if _met_accept(urep[j], uy, eps[j], uniform):
                    xrep[j], urep[j] = y, uy
                    met_a += 1
        if step % thin == 0:
            try:
                _record(buffers, observables, rec, values)
            except Exception as exc:
                raise RuntimeError(
                    "observable evaluation failed at step %d" % step
                ) from exc
            rec += 1

    counters["met_proposals"] = met_p
    counters["met_accepts"] = met_a
    counters["met_holds"] = met_h
    counters["swap_attempts"] = sw_at
    counters["swap_accepts"] = sw_ac
    counters["swap_holds"] = sw_h


def _py_st(desc, steps, observables, thin, rng, buffers, counters):
    pot = desc.pot
    d = pot.dim
    u = _scalar_u(pot)
    uniform = rng.uniform
    lad = desc.ladder
    betas = [float(b) for b in lad.betas]
    eps = [float(v) for v in lad.eps]
    hs = [float(v) for v in lad.h]

    xs = list(desc.initial_position())
    ux = u(xs)
    lev = int(desc.level0)

    label = _label_closure(desc.geom) if "basin" in observables else None
    values = {
        "x": lambda: xs,
        "U": lambda: ux,
        "level": lambda: lev,
        "basin": lambda: label(xs),
    }

    met_p = met_a = met_h = t_res = t_hold = 0
    rec = 0
    for step in range(1, steps + 1):
        for phase in (0, 1, 2):
            if phase != 1:
                if uniform() < 0.5:
                    t_hold += 1
                else:
                    lev = _resample_level(ux, betas, uniform)
                    t_res += 1
            else:
                if uniform() < 0.5:
                    met_h += 1
                    continue
                y = _ball(xs, hs[lev], uniform, d)
                uy = u(y)
                met_p += 1
                if _met_accept(ux, uy, eps[lev], uniform):
                    xs, ux = y, uy
                    met_a += 1
        if step % thin == 0:
            try:
                _record(buffers, observables, rec, values)
            except Exception as exc:
                raise RuntimeError(
                    "observable evaluation failed at step %d" % step
                ) from exc
            rec += 1

    counters["met_proposals"] = met_p
    counters["met_accepts"] = met_a
    counters["met_holds"] = met_h
    counters["temp_resamples"] = t_res
    counters["temp_holds"] = t_hold


# ---------------------------------------------------------------------
# Compiled driver marshalling
# ---------------------------------------------------------------------

def _arc_arrays(desc):
    """Flattened d=1 arc table (empty when basin data is not needed)."""
    needs = desc.kind == "RestrictedMRW" or desc.geom is not None
    if not needs or desc.geom is None or desc.geom.dim != 1:
        return np.empty(0), np.empty(0, dtype=np.int64)
    pts, labels = desc.geom.arc_table()
    return np.asarray(pts, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def _run_compiled(core, desc, steps, observables, thin, rng, buffers, counters):
    pot = desc.pot
    kind_name, params = pot.builtin
    pot_id = 1 if kind_name == "DW1" else 2
    p0, p1 = float(params[0]), float(params[1])
    offset = float(pot.offset)

    widths = [buffers[name].shape[1] for name in observables]
    col_off = np.zeros(len(observables) + 1, dtype=np.int64)
    np.cumsum(widths, out=col_off[1:])
    total = int(col_off[-1])
    n_rec = steps // thin
    out = np.empty((max(n_rec, 1), total), dtype=np.float64)
    codes = np.array([_OBS_CODES[name] for name in observables], dtype=np.int64)
    cnt = np.zeros(len(_COUNTER_NAMES), dtype=np.int64)
    arc_pts, arc_labels = _arc_arrays(desc)

    if desc.kind == "RestrictedMRW":
        xs = list(desc.initial_position())
        start = _basin_label_1d(
            xs[0], [float(p) for p in arc_pts], [int(v) for v in arc_labels]
        )
        if start != desc.basin_label:
            raise ValueError(
                "restricted chain started outside basin %d at %s"
                % (desc.basin_label, xs)
            )

    if desc.kind in ("MRW", "LazyMRW", "RestrictedMRW"):
        core.run_mrw(
            rng.capsule,
            pot_id,
            p0,
            p1,
            offset,
            float(desc.eps),
            float(desc.h),
            1 if desc.kind == "LazyMRW" else 0,
            int(desc.basin_label or 0),
            arc_pts,
            arc_labels,
            desc.initial_position(),
            steps,
            thin,
            codes,
            col_off,
            out,
            cnt,
        )
    elif desc.kind == "PT":
        lad = desc.ladder
        x0 = np.tile(desc.initial_position(), (lad.n_levels, 1))
        core.run_pt(
            rng.capsule,
            pot_id,
            p0,
            p1,
            offset,
            np.ascontiguousarray(lad.betas),
            np.ascontiguousarray(lad.eps),
            np.ascontiguousarray(lad.h),
            arc_pts,
            arc_labels,
            np.ascontiguousarray(x0),
            steps,
            thin,
            codes,
            col_off,
            out,
            cnt,
        )
    else:
        lad = desc.ladder
        core.run_st(
            rng.capsule,
            pot_id,
            p0,
            p1,
            offset,
            np.ascontiguousarray(lad.betas),
            np.ascontiguousarray(lad.eps),
            np.ascontiguousarray(lad.h),
            arc_pts,
            arc_labels,
            desc.initial_position(),
            int(desc.level0),
            steps,
            thin,
            codes,
            col_off,
            out,
            cnt,
        )

    for k, name in enumerate(observables):
        buffers[name][:] = out[:n_rec, col_off[k]:col_off[k + 1]]
    for k, name in enumerate(_COUNTER_NAMES):
        counters[name] = int(cnt[k])
