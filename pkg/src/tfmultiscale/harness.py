"""Experiment drivers: permeability/forcing generators, error metrics
against the fine reference, and the end-to-end experiment pipeline with
CSV and raster outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field, asdict
from importlib import resources

import numpy as np

from . import assembly, spaces, stability
from .assembly import PermeabilityField, read_raster, write_raster
from .fractional import make_kernel
from .grid import build_grids
from .schemes import (ReducedSystem, Trajectory, fine_reference,
                      project_initial, reduce, run_scheme)

ALL_SCHEMES = ("fine", "cem", "tildeU", "scem")


@dataclass
class ExperimentConfig:
    alpha: float = 0.9
    T: float = 0.01
    dt: float = 2e-5
    dt_fine: float = 4e-6
    coarse_n: int = 10
    refine: int = 10
    layers: int = spaces.DEFAULT_LAYERS
    L: int = spaces.DEFAULT_NBASIS
    J: int = spaces.DEFAULT_NBASIS
    field: dict = dc_field(default_factory=lambda: {"kind": "channels", "contrast": 1e5})
    forcing: dict = dc_field(default_factory=lambda: {"kind": "smooth"})
    schemes: tuple = ALL_SCHEMES
    out_dir: str = "out"

    def __post_init__(self):
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(n, 1):
            raise ValueError("dt must divide T")
        m = self.dt / self.dt_fine
        if abs(m - round(m)) > 1e-9 * max(m, 1):
            raise ValueError("dt_fine must divide dt")
        for name in ("coarse_n", "refine", "layers", "L", "J"):
            if getattr(self, name) < 0 or getattr(self, name) != int(getattr(self, name)):
                raise ValueError(f"{name} must be a nonnegative integer")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def stride(self) -> int:
        return round(self.dt / self.dt_fine)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        data["schemes"] = tuple(data.get("schemes", ALL_SCHEMES))
        return cls(**data)

    def to_json(self, path) -> None:
        data = asdict(self)
        data["schemes"] = list(self.schemes)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")


def gen_field(kind: str, nx: int = 100, ny: int = 100, contrast: float = 1e5,
              seed: int = 0, path=None, n_channels: int = 4,
              n_inclusions: int = 12) -> PermeabilityField:
    """Binary permeability fields: background 1, features at ``contrast``."""
    if kind == "file":
        fx, fy, vals = read_raster(path)
        return PermeabilityField(values=vals)
    if kind == "channels":
        mask = channel_geometry(nx, ny, seed=seed, n_channels=n_channels,
                                n_inclusions=n_inclusions)
    elif kind == "inclusions":
        rng = np.random.default_rng(seed)
        mask = np.zeros((ny, nx), dtype=bool)
        for _ in range(n_inclusions):
            w = rng.integers(max(nx // 20, 2), max(nx // 5, 3))
            hgt = rng.integers(max(ny // 20, 2), max(ny // 5, 3))
            x0 = rng.integers(1, max(nx - w, 2))
            y0 = rng.integers(1, max(ny - hgt, 2))
            mask[y0:y0 + hgt, x0:x0 + w] = True
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    values = np.where(mask.ravel(), float(contrast), 1.0)
    return PermeabilityField(values=values)


def channel_geometry(nx: int, ny: int, seed: int = 0, n_channels: int = 4,
                     n_inclusions: int = 12) -> np.ndarray:
    """Deterministic high-contrast geometry: long channels plus inclusions."""
    rng = np.random.default_rng(seed)
    mask = np.zeros((ny, nx), dtype=bool)
    for c in range(n_channels):
        y = int((c + 1) * ny / (n_channels + 1)) + int(rng.integers(-ny // 20 - 1, ny // 20 + 1))
        y = min(max(y, 1), ny - 2)
        x0 = int(rng.integers(0, nx // 10 + 1))
        x1 = int(rng.integers(9 * nx // 10, nx))
        mask[y:y + max(ny // 50, 1), x0:x1] = True
    for c in range(max(n_channels // 2, 1)):
        x = int((c + 1) * nx / (max(n_channels // 2, 1) + 1)) + int(rng.integers(-nx // 20 - 1, nx // 20 + 1))
        x = min(max(x, 1), nx - 2)
        y0 = int(rng.integers(0, ny // 6 + 1))
        y1 = int(rng.integers(2 * ny // 3, ny))
        mask[y0:y1, x:x + max(nx // 50, 1)] = True
    for _ in range(n_inclusions):
        w = int(rng.integers(max(nx // 25, 2), max(nx // 10, 3)))
        hgt = int(rng.integers(max(ny // 25, 2), max(ny // 10, 3)))
        x0 = int(rng.integers(1, max(nx - w - 1, 2)))
        y0 = int(rng.integers(1, max(ny - hgt - 1, 2)))
        mask[y0:y0 + hgt, x0:x0 + w] = True
    return mask


def gen_forcing(kind: str, values=None, square=(0.3, 0.7), levels=(0.0, 1.0)):
    """Space-time forcing callables f(x, y, t).

    smooth: 2 pi^2 sin(pi x) sin(pi y), time-independent.
    discontinuous: two-level indicator on an axis-aligned square.
    custom: a user raster of nodal values, time-independent.
    """
    if kind == "smooth":
        def f(x, y, t):
            return 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)
        return f
    if kind == "discontinuous":
        lo, hi = square

        def f(x, y, t):
            inside = (x >= lo) & (x <= hi) & (y >= lo) & (y <= hi)
            return np.where(inside, levels[1], levels[0])
        return f
    if kind == "custom":
        raster = np.asarray(values, dtype=float)
        side = int(np.sqrt(raster.size))
        if side * side != raster.size:
            raise ValueError("custom forcing raster must be square")
        grid_vals = raster.reshape(side, side)

        def f(x, y, t):
            ix = np.clip((np.asarray(x) * (side - 1)).round().astype(int), 0, side - 1)
            iy = np.clip((np.asarray(y) * (side - 1)).round().astype(int), 0, side - 1)
            return grid_vals[iy, ix]
        return f
    raise ValueError(f"unknown forcing kind {kind!r}")


@dataclass
class ErrorSeries:
    """Relative L2 / energy errors of one scheme vs the fine reference."""

    err_l2: np.ndarray
    err_energy: np.ndarray
    absolute: np.ndarray  # True where the reference vanished at that time


def error_series(traj: Trajectory, basis, reference: Trajectory,
                 A_fine, M_fine) -> ErrorSeries:
    """Lift a coarse trajectory to the fine space and compare at shared times."""
    stride_f = reference.n_steps / traj.n_steps if traj.n_steps else 1
    stride = round(stride_f)
    if traj.n_steps == 0 or abs(stride_f - stride) > 1e-9:
        raise ValueError("reference and trajectory time grids are incompatible")
    n = traj.states.shape[0]
    err_l2 = np.zeros(n)
    err_en = np.zeros(n)
    absolute = np.zeros(n, dtype=bool)
    R = basis.R if basis is not None else None
    for k in range(n):
        uf = R @ traj.states[k] if R is not None else traj.states[k]
        ref = reference.states[k * stride]
        d = uf - ref
        dl2 = np.sqrt(max(d @ (M_fine @ d), 0.0))
        den = np.sqrt(max(ref @ (M_fine @ ref), 0.0))
        dan = np.sqrt(max(d @ (A_fine @ d), 0.0))
        dena = np.sqrt(max(ref @ (A_fine @ ref), 0.0))
        if den == 0.0 or dena == 0.0:
            absolute[k] = True
            err_l2[k] = dl2
            err_en[k] = dan
        else:
            err_l2[k] = dl2 / den
            err_en[k] = dan / dena
    return ErrorSeries(err_l2=err_l2, err_energy=err_en, absolute=absolute)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: stability.StabilityReport
    trajectories: dict
    errors: dict
    out_dir: str


def _field_from_config(cfg: ExperimentConfig) -> PermeabilityField:
    spec = dict(cfg.field)
    kind = spec.pop("kind", "channels")
    if kind == "file":
        return gen_field("file", path=spec["path"])
    if kind == "bundled":
        name = spec.get("name", "kappa_test1.txt")
        with resources.as_file(resources.files("tfmultiscale.data") / name) as p:
            return gen_field("file", path=str(p))
    nf = cfg.coarse_n * cfg.refine
    spec.setdefault("nx", nf)
    spec.setdefault("ny", nf)
    return gen_field(kind, **spec)


def _forcing_from_config(cfg: ExperimentConfig):
    spec = dict(cfg.forcing)
    kind = spec.pop("kind", "smooth")
    return gen_forcing(kind, **spec)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every configured scheme, write CSV/raster artifacts, return results.

    Outputs in cfg.out_dir: per-scheme trajectory dumps and final-time
    rasters, an error CSV over coarse time levels, the stability report, and
    the permeability raster.  Instability is recorded as data, not a failure.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    grid = build_grids(cfg.coarse_n, cfg.refine)
    field_ = _field_from_config(cfg)
    forcing = _forcing_from_config(cfg)
    nf = grid.n_fine
    write_raster(os.path.join(cfg.out_dir, "kappa.txt"), nf, nf, field_.values)

    A = assembly.assemble(grid, field_, "stiffness")
    M = assembly.assemble(grid, None, "mass")

    pou = assembly.msfem_partition(grid, field_)
    kt = assembly.kappa_tilde(field_, pou)
    aux1 = spaces.aux_spectral(grid, field_, kt, cfg.L)
    basis1 = spaces.cem_basis(grid, field_, aux1, cfg.layers)
    aux2 = spaces.v2_aux_spectral(grid, field_, aux1, cfg.J)
    basis2 = spaces.v2_basis(grid, field_, aux1, aux2, cfg.layers)
    both = spaces.combine(basis1, basis2)

    report = stability.build_report(grid, field_, cfg.alpha,
                                    basis1=basis1, basis2=basis2)
    report.save(os.path.join(cfg.out_dir, "stability_report.txt"))

    N = cfg.n_steps
    trajectories = {}
    if "fine" in cfg.schemes:
        trajectories["fine"] = fine_reference(
            grid, field_, cfg.alpha, cfg.dt_fine, forcing, None,
            N * cfg.stride)

    kernel = make_kernel(cfg.alpha, cfg.dt, N)

    def reduced_loads(basis):
        F = np.empty((N, basis.R.shape[1]))
        for k in range(N):
            F[k] = basis.R.T @ assembly.load_vector(grid, forcing, (k + 1) * cfg.dt)
        return F

    runs = {
        "cem": ("implicit", basis1),
        "tildeU": ("implicit", both),
        "scem": ("partial", both),
    }
    bases = {}
    for name, (scheme, basis) in runs.items():
        if name not in cfg.schemes:
            continue
        sys_r = reduce(A, M, basis)
        u0 = np.zeros(basis.R.shape[1])
        traj = run_scheme(scheme, sys_r, kernel, u0, reduced_loads(basis),
                          space=name)
        trajectories[name] = traj
        bases[name] = basis

    errors = {}
    ref = trajectories.get("fine")
    for name, traj in trajectories.items():
        path = os.path.join(cfg.out_dir, f"trajectory_{name}.txt")
        traj.save(path)
        if name == "fine" or ref is None or traj.diverged:
            continue
        errors[name] = error_series(traj, bases[name], ref, A, M)
        final = bases[name].R @ traj.states[-1]
        _write_solution_raster(grid, final,
                               os.path.join(cfg.out_dir, f"final_{name}.txt"))
    if ref is not None:
        _write_solution_raster(grid, ref.states[-1],
                               os.path.join(cfg.out_dir, "final_fine.txt"))
        _write_error_csv(cfg, errors, os.path.join(cfg.out_dir, "errors.csv"))

    return ExperimentResult(config=cfg, report=report,
                            trajectories=trajectories, errors=errors,
                            out_dir=cfg.out_dir)


def _write_solution_raster(grid, dof_values, path) -> None:
    nn = grid.n_nodes_side
    full = np.zeros(grid.n_nodes)
    full[grid.interior_nodes()] = dof_values
    write_raster(path, nn, nn, full)


def _write_error_csv(cfg: ExperimentConfig, errors: dict, path) -> None:
    cols = ["step", "time", "err_L2_cem", "err_en_cem", "err_L2_tildeU",
            "err_en_tildeU", "err_L2_scem", "err_en_scem"]
    N = cfg.n_steps
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(N + 1):
            row = [str(k), f"{k * cfg.dt:.12g}"]
            for name in ("cem", "tildeU", "scem"):
                es = errors.get(name)
                if es is None or k >= len(es.err_l2):
                    row.extend(["nan", "nan"])
                else:
                    row.extend([f"{es.err_l2[k]:.12g}", f"{es.err_energy[k]:.12g}"])
            fh.write(",".join(row) + "\n")


def experiment_config(number: int, alpha: float = 0.9,
                      out_dir: str = "out") -> ExperimentConfig:
    """The two bundled experiment setups (smooth / discontinuous forcing).

    Both use J=1 second-space functions per element: with the bundled thin
    channel geometries this keeps the reported partial-scheme bound above
    the experiment's time step at alpha=0.9 while every alpha <= 0.5 run is
    predicted (and observed) unstable.  Four oversampling layers are needed
    at contrast 1e5 for the localized basis to reach its accuracy plateau.
    """
    if number == 1:
        return ExperimentConfig(alpha=alpha, out_dir=out_dir, J=1, layers=4,
                                field={"kind": "bundled", "name": "kappa_test1.txt"},
                                forcing={"kind": "smooth"})
    if number == 2:
        return ExperimentConfig(alpha=alpha, out_dir=out_dir, J=1, layers=4,
                                field={"kind": "bundled", "name": "kappa_test2.txt"},
                                forcing={"kind": "discontinuous"})
    raise ValueError("experiment number must be 1 or 2")
