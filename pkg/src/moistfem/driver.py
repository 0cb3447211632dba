"""Simulation driver: time loop, diagnostics, outputs, restarts and the
spatial convergence suite."""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cases import INITIALIZERS, init_slotted_cylinder
from .config import CaseConfig, dump_config
from .dynamics import HybridizedOperator, SemiImplicitConfig, SemiImplicitStepper
from .errors import BlowUp, ConfigError
from .hybrid import volume_values
from .output import (
    DiagnosticsWriter,
    cell_means,
    load_checkpoint,
    save_checkpoint,
    truncate_diagnostics,
    write_vtk,
)
from .physics import Physics, theta_e
from .spaces import Field, Quadrature
from .state import MOISTURE, PROGNOSTIC, ReferenceProfiles, State
from .transport import ADVECTIVE, ModelTransport, ScalarTransport, Wind

log = logging.getLogger("moistfem")

DIAGNOSTICS_FILE = "diagnostics.csv"


# ---------------------------------------------------------------------------
# diagnostics


def _integral(values: np.ndarray, mesh, quad: Quadrature) -> float:
    w = quad.weights2d.ravel() * mesh.dx * mesh.dz
    return float((values * w).sum())


def dry_mass(state: State) -> float:
    S = state.spaces
    rc = S.density.components[0]
    return _integral(volume_values(rc, state.rho.dat, S.quad), S.mesh, S.quad)


def total_water(state: State) -> float:
    """Integral of dry density times total water mixing ratio."""
    S = state.spaces
    rho = volume_values(S.density.components[0], state.rho.dat, S.quad)
    rt = volume_values(S.temperature.components[0], state.total_water, S.quad)
    return _integral(rho * rt, S.mesh, S.quad)


def courant_number(v: Field, dt: float) -> float:
    m = v.space.mesh
    u, w = v.component(0), v.component(1)
    cu = np.max(np.abs(u), initial=0.0) * dt / m.dx
    cw = np.max(np.abs(w), initial=0.0) * dt / m.dz
    return float(max(cu, cw))


def model_diagnostics(state: State, step: int, dt: float, max_supersaturation=None,
                      rain_columns: bool = False) -> dict:
    row = {
        "time": state.time,
        "step": step,
        "dry_mass": dry_mass(state),
        "total_water": total_water(state),
    }
    named = {"u": state.v.component(0), "w": state.v.component(1)}
    named.update({n: getattr(state, n).dat for n in PROGNOSTIC if n != "v"})
    for name, vals in named.items():
        row[f"{name}_min"] = float(vals.min())
        row[f"{name}_max"] = float(vals.max())
    row["max_w"] = float(np.max(np.abs(named["w"])))
    row["cfl"] = courant_number(state.v, dt)
    rain = state.surface_rain if state.surface_rain is not None else np.zeros(state.spaces.mesh.nx)
    row["surface_rain"] = float(rain.sum())
    row["max_supersaturation"] = math.nan if max_supersaturation is None else max_supersaturation
    if rain_columns:
        for i, r in enumerate(rain):
            row[f"surface_rain_{i:04d}"] = float(r)
    return row


# ---------------------------------------------------------------------------
# simulations


@dataclass
class RunResult:
    steps: int
    time: float
    output_dir: Path
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0


class _Runner:
    """Shared time loop with snapshot cadence, checkpoints and diagnostics."""

    def __init__(self, cfg: CaseConfig, output_dir=None, write_output: bool = True):
        self.cfg = cfg
        self.output_dir = Path(output_dir if output_dir is not None else cfg.output_dir)
        self.write_output = write_output
        self.step_index = 0
        self.history: list[dict] = []

    # subclasses provide these
    def advance(self):
        raise NotImplementedError

    def diagnostics(self) -> dict:
        raise NotImplementedError

    def snapshot_groups(self) -> dict[str, dict[str, np.ndarray]]:
        raise NotImplementedError

    def checkpoint_arrays(self) -> tuple[dict, dict]:
        raise NotImplementedError

    def restore(self, arrays: dict, meta: dict) -> None:
        raise NotImplementedError

    @property
    def mesh(self):
        return self.spaces.mesh

    # ------------------------------------------------------------------
    def _snapshot(self):
        if not self.write_output:
            return
        for group, data in self.snapshot_groups().items():
            path = self.output_dir / f"{self.cfg.case}_{group}_{self.step_index:06d}.vtk"
            write_vtk(path, self.mesh, data, f"{self.cfg.case} {group} t={self.time:.6g}")
        arrays, meta = self.checkpoint_arrays()
        save_checkpoint(self.output_dir / f"checkpoint_{self.step_index:06d}.npz",
                        self.step_index, arrays, meta)

    def _record(self):
        row = self.diagnostics()
        self.history.append(row)
        if self.write_output:
            self._writer.write(row)

    def run(self, max_steps: int | None = None, restart=None) -> RunResult:
        cfg = self.cfg
        appending = False
        if restart is not None:
            step, arrays, meta = load_checkpoint(restart)
            self.restore(arrays, meta)
            self.step_index = step
            appending = True
            log.info("restarted from %s at step=%d time=%.6g", restart, step, self.time)
        if self.write_output:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            (self.output_dir / "config.toml").write_text(dump_config(cfg))
            diag = self.output_dir / DIAGNOSTICS_FILE
            if appending:
                truncate_diagnostics(diag, self.step_index)
            self._writer = DiagnosticsWriter(diag, append=appending)
        n_total = cfg.n_steps
        last = n_total if max_steps is None else min(n_total, self.step_index + max_steps)
        start = _time.perf_counter()
        if not appending:
            self._record()
            self._snapshot()
        while self.step_index < last:
            self.advance()
            self.step_index += 1
            if self.step_index % cfg.diagnostics_every == 0 or self.step_index == last:
                self._record()
            tick = cfg.output_every and self.step_index % cfg.output_every == 0
            if tick or self.step_index == last:
                self._snapshot()
            if self.step_index % 100 == 0:
                log.info("step=%d time=%.6g cfl=%.3g", self.step_index, self.time,
                         self.history[-1].get("cfl", math.nan) if self.history else math.nan)
        wall = _time.perf_counter() - start
        log.info("finished steps=%d time=%.6g wall=%.1fs", self.step_index, self.time, wall)
        return RunResult(self.step_index, self.time, self.output_dir, self.history, wall)


class Simulation(_Runner):
    """A moist vertical-slice case advanced by the semi-implicit stepper."""

    def __init__(self, cfg: CaseConfig, output_dir=None, write_output: bool = True, setup=None):
        super().__init__(cfg, output_dir, write_output)
        if cfg.case not in INITIALIZERS:
            raise ConfigError(f"case {cfg.case!r} is not a moist dynamics case")
        setup = setup or INITIALIZERS[cfg.case](cfg)
        self.state = setup.state
        self.reference = setup.reference
        self.spaces = self.state.spaces
        self.transport = ModelTransport(self.spaces, limiter=cfg.limiter)
        self.physics = Physics(self.spaces, setup.physics, self.transport)
        self.physics_active = setup.physics.active
        self.stepper = SemiImplicitStepper(
            self.spaces,
            self.reference,
            SemiImplicitConfig(cfg.dt, cfg.n_outer, cfg.n_inner, cfg.coriolis),
            self.transport,
            self.physics.apply if self.physics_active else None,
        )
        self.max_supersaturation: float | None = None

    @property
    def time(self) -> float:
        return self.state.time

    def advance(self):
        self.state = self.stepper.step(self.state)
        if self.physics_active:
            self.max_supersaturation = self.physics.last_max_supersaturation

    def diagnostics(self) -> dict:
        return model_diagnostics(self.state, self.step_index, self.cfg.dt,
                                 self.max_supersaturation, rain_columns=self.cfg.rain)

    def snapshot_groups(self):
        s = self.state
        vel = np.stack([cell_means(s.v, 0), cell_means(s.v, 1)], axis=-1)
        dyn = {"velocity": vel, "rho": cell_means(s.rho), "theta": cell_means(s.theta)}
        moist = {n: cell_means(getattr(s, n)) for n in MOISTURE}
        try:
            moist["theta_e"] = cell_means(theta_e(s))
        except Exception:  # noqa: BLE001 - diagnostic only, may fail on invalid states
            pass
        return {"dynamics": dyn, "moisture": moist}

    def checkpoint_arrays(self):
        s = self.state
        arrays = {n: getattr(s, n).dat for n in PROGNOSTIC}
        arrays["surface_rain"] = s.surface_rain if s.surface_rain is not None else np.zeros(self.mesh.nx)
        arrays["ref_rho"] = self.reference.rho.dat
        arrays["ref_theta"] = self.reference.theta.dat
        op = self.stepper._op
        if op is not None:
            arrays["operator_r_t"] = op.r_t
        meta = {"time": s.time, "builds": self.stepper.diagnostics.operator_builds}
        if self.max_supersaturation is not None:
            meta["max_supersaturation"] = self.max_supersaturation
        return arrays, meta

    def restore(self, arrays, meta):
        s = self.state
        for n in PROGNOSTIC:
            if arrays[n].shape != getattr(s, n).dat.shape:
                raise ConfigError("checkpoint does not match the configured mesh")
            getattr(s, n).dat = arrays[n].copy()
        s.surface_rain = arrays["surface_rain"].copy()
        s.time = float(meta["time"])
        self.reference = ReferenceProfiles(Field(self.spaces.density, arrays["ref_rho"].copy()),
                                           Field(self.spaces.temperature, arrays["ref_theta"].copy()))
        self.stepper.ref = self.reference
        if "operator_r_t" in arrays:
            # the cached operator is part of the solver state
            self.stepper._op = HybridizedOperator(self.spaces, self.reference,
                                                  arrays["operator_r_t"], self.cfg.dt)
        if "max_supersaturation" in meta:
            self.max_supersaturation = float(meta["max_supersaturation"])


class TracerSimulation(_Runner):
    """Pure transport of a scalar by a steady wind (slotted-cylinder case)."""

    def __init__(self, cfg: CaseConfig, output_dir=None, write_output: bool = True):
        super().__init__(cfg, output_dir, write_output)
        self.spaces, self.q, self.ubar = init_slotted_cylinder(cfg)
        scheme = "recovered" if cfg.k == 0 else "embedded"
        self.transport = ScalarTransport(self.spaces, self.spaces.temperature, scheme,
                                         ADVECTIVE, cfg.limiter)
        self.wind = Wind.from_velocity(self.ubar, self.spaces.quad)
        self._time = 0.0

    @property
    def time(self) -> float:
        return self._time

    def advance(self):
        q = self.transport(self.q, self.wind, self.cfg.dt)
        if not np.all(np.isfinite(q.dat)):
            raise BlowUp(f"non-finite tracer at t={self._time + self.cfg.dt:g}")
        self.q = q
        self._time = self.step_index * self.cfg.dt + self.cfg.dt

    def diagnostics(self) -> dict:
        S = self.spaces
        tc = S.temperature.components[0]
        mass = _integral(volume_values(tc, self.q.dat, S.quad), S.mesh, S.quad)
        return {
            "time": self._time,
            "step": self.step_index,
            "tracer_mass": mass,
            "q_min": float(self.q.dat.min()),
            "q_max": float(self.q.dat.max()),
            "cfl": courant_number(self.ubar, self.cfg.dt),
        }

    def snapshot_groups(self):
        vel = np.stack([cell_means(self.ubar, 0), cell_means(self.ubar, 1)], axis=-1)
        return {"tracer": {"q": cell_means(self.q), "velocity": vel}}

    def checkpoint_arrays(self):
        return {"q": self.q.dat}, {"time": self._time}

    def restore(self, arrays, meta):
        if arrays["q"].shape != self.q.dat.shape:
            raise ConfigError("checkpoint does not match the configured mesh")
        self.q = Field(self.q.space, arrays["q"].copy())
        self._time = float(meta["time"])


def make_simulation(cfg: CaseConfig, output_dir=None, write_output: bool = True) -> _Runner:
    if cfg.case == "slotted_cylinder":
        return TracerSimulation(cfg, output_dir, write_output)
    return Simulation(cfg, output_dir, write_output)


def run(cfg: CaseConfig, output_dir=None, max_steps=None, restart=None) -> RunResult:
    return make_simulation(cfg, output_dir).run(max_steps=max_steps, restart=restart)


# ---------------------------------------------------------------------------
# convergence


def _theta_e_grid(state: State):
    """theta_e DoFs of a k=0 temperature space as an ``(nx, nz+1)`` grid."""
    comp = state.spaces.temperature.components[0]
    return theta_e(state).dat.reshape(comp.shape)


def interpolate_theta_e(coarse: State, fine_spaces) -> np.ndarray:
    """Coarse theta_e at the fine temperature-space nodes.

    For k=0 the field is treated as point values at cell-centre columns and
    interpolated linearly in x (periodic) and z; for k=1 the finite element
    function itself is evaluated.
    """
    fcomp = fine_spaces.temperature.components[0]
    X, Z = fcomp.coords
    m = coarse.spaces.mesh
    if coarse.spaces.k == 0:
        G = _theta_e_grid(coarse)
        s = X / m.dx - 0.5
        i0 = np.floor(s).astype(int)
        fx = s - i0
        t = np.clip(Z / m.dz, 0.0, m.nz)
        j0 = np.minimum(np.floor(t).astype(int), m.nz - 1)
        fz = t - j0
        i0m, i1m = i0 % m.nx, (i0 + 1) % m.nx
        lower = (1 - fx) * G[i0m, j0] + fx * G[i1m, j0]
        upper = (1 - fx) * G[i0m, j0 + 1] + fx * G[i1m, j0 + 1]
        return (1 - fz) * lower + fz * upper
    return evaluate_at(theta_e(coarse), X, Z)


def evaluate_at(f: Field, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Point values of a scalar field at physical coordinates."""
    comp = f.space.components[0]
    m = comp.mesh
    ex, ez = comp.elements
    i = np.clip(np.floor(X / m.dx).astype(int), 0, m.nx - 1)
    k = np.clip(np.floor(Z / m.dz).astype(int), 0, m.nz - 1)
    xi = X / m.dx - i
    zeta = Z / m.dz - k
    local = comp.gather(f.dat)[i, k]  # (npts, Px, Pz)
    tx = np.stack([ex.tabulate([x])[:, 0] for x in xi])
    tz = np.stack([ez.tabulate([z])[:, 0] for z in zeta])
    return np.einsum("nab,na,nb->n", local, tx, tz)


def l2_norm(f: Field) -> float:
    S = f.space.family
    vals = volume_values(f.space.components[0], f.dat, S.quad)
    return math.sqrt(_integral(vals * vals, S.mesh, S.quad))


@dataclass
class ConvergenceResult:
    dx: list
    errors: list
    slope: float
    reference_dx: float

    def rows(self):
        return list(zip(self.dx, self.errors))


def fitted_slope(dx, errors) -> float:
    """Least-squares slope of log(error) against log(dx); NaN if any error is zero."""
    if np.any(np.asarray(errors, float) <= 0.0):
        return math.nan
    return float(np.polyfit(np.log(np.asarray(dx, float)), np.log(np.asarray(errors, float)), 1)[0])


def resolution_config(base: CaseConfig, dx: float) -> CaseConfig:
    nx = int(round(base.Lx / dx))
    nz = int(round(base.H / dx))
    if nx < 1 or nz < 3 or not math.isclose(nx * dx, base.Lx) or not math.isclose(nz * dx, base.H):
        raise ConfigError(f"resolution {dx:g} m does not divide the {base.Lx:g} x {base.H:g} m domain")
    return base.replace(nx=nx, nz=nz)


def final_state(cfg: CaseConfig, max_steps=None) -> State:
    sim = Simulation(cfg, write_output=False)
    sim.run(max_steps=max_steps)
    return sim.state


def convergence_suite(base: CaseConfig, resolutions, reference_dx: float | None = None,
                      max_steps=None, runner=final_state) -> ConvergenceResult:
    """Errors of theta_e at the final time against a finer reference run.

    ``runner(cfg, max_steps)`` produces the final state; the default runs the
    model without writing output.
    """
    if base.case != "moist_gravity_wave":
        raise ConfigError("the convergence suite uses the moist_gravity_wave case")
    resolutions = sorted((float(r) for r in resolutions), reverse=True)
    if len(resolutions) < 2:
        raise ConfigError("the convergence suite needs at least two resolutions")
    reference_dx = float(reference_dx) if reference_dx else 0.5 * resolutions[-1]
    ref_cfg = resolution_config(base, reference_dx)
    log.info("convergence reference dx=%g (%dx%d)", reference_dx, ref_cfg.nx, ref_cfg.nz)
    ref = runner(ref_cfg, max_steps)
    ref_vals = theta_e(ref).dat
    errors = []
    for dx in resolutions:
        cfg = resolution_config(base, dx)
        log.info("convergence run dx=%g (%dx%d)", dx, cfg.nx, cfg.nz)
        coarse = runner(cfg, max_steps)
        diff = interpolate_theta_e(coarse, ref.spaces) - ref_vals
        errors.append(l2_norm(Field(ref.spaces.temperature, diff)))
        log.info("dx=%g l2_error=%.6e", dx, errors[-1])
    slope = fitted_slope(resolutions, errors)
    return ConvergenceResult(resolutions, errors, slope, reference_dx)
