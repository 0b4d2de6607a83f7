"""Stiff-aware time stepping with step control and blow-up detection.

Default scheme is ETD-RK4 (Cox-Matthews) with the diagonal stiff symbol
treated exactly; the phi-function weights are evaluated by averaging over a
complex contour so small symbol values do not cancel.  An IMEX scheme
(ARS(2,2,2)) and classical explicit RK4 are retained for cross checks.

Adaptive stepping quantizes dt to cfg.dt / 2^j so the per-dt ETD weights are
reused; the last step is shortened to land exactly on t_end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import KernelSpec
from .dynamics import make_dynamics
from .states import ModelParams, PositivityError, PrimitiveState, SigmaState

__all__ = [
    "StepConfig",
    "BlowupEvent",
    "BlowupError",
    "TrajectorySummary",
    "step",
    "adaptive_dt",
    "run",
]

SCHEMES = ("etdrk4", "imex", "rk4")


@dataclass(frozen=True)
class StepConfig:
    scheme: str = "etdrk4"
    dt: float = 1e-2
    cfl_safety: float = 0.4
    t_end: float = 1.0
    max_steps: int = 1_000_000
    grad_u_max: float = 1e4
    sigma_holder_max: float = 1e4
    rho_min_floor: float = 1e-6
    adaptive: bool = True
    form: str = "sigma"
    linear_only: bool = False
    disable_alignment: bool = False
    cadence: int = 10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if min(self.grad_u_max, self.sigma_holder_max, self.rho_min_floor) <= 0:
            raise ValueError("blow-up thresholds must be positive")
        if self.form not in ("sigma", "conservative"):
            raise ValueError(f"form must be 'sigma' or 'conservative', got {self.form!r}")


@dataclass(frozen=True)
class BlowupEvent:
    t: float
    step: int
    monitor: str
    value: float
    threshold: float
    last_state: object


class BlowupError(RuntimeError):
    def __init__(self, event: BlowupEvent):
        super().__init__(
            f"blow-up at t={event.t:.6g}: monitor {event.monitor} = "
            f"{event.value:.3e} crossed {event.threshold:.3e}"
        )
        self.event = event


@dataclass
class TrajectorySummary:
    status: str  # "completed" | "blowup" | "max_steps"
    final_state: object
    steps: int
    t: float
    event: BlowupEvent | None = None


class _EtdWeights:
    """Cox-Matthews ETD-RK4 weights for one diagonal symbol and step size."""

    def __init__(self, symbol: np.ndarray, dt: float, n_contour: int = 32):
        L = symbol.astype(float)
        self.E = np.exp(dt * L)
        self.E2 = np.exp(0.5 * dt * L)
        r = np.exp(1j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
        lr = dt * L[..., None] + r
        elr = np.exp(lr)
        self.f0 = dt * ((np.exp(lr / 2.0) - 1.0) / lr).mean(-1).real
        self.f1 = dt * ((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr**2)) / lr**3).mean(-1).real
        self.f2 = dt * ((2.0 + lr + elr * (lr - 2.0)) / lr**3).mean(-1).real
        self.f3 = dt * ((-4.0 - 3.0 * lr - lr**2 + elr * (4.0 - lr)) / lr**3).mean(-1).real


def _step_etdrk4(z, dt, w: _EtdWeights, nonlinear):
    n0 = nonlinear(z)
    a = w.E2 * z + w.f0 * n0
    n1 = nonlinear(a)
    b = w.E2 * z + w.f0 * n1
    n2 = nonlinear(b)
    c = w.E2 * a + w.f0 * (2.0 * n2 - n0)
    n3 = nonlinear(c)
    return w.E * z + w.f1 * n0 + 2.0 * w.f2 * (n1 + n2) + w.f3 * n3


def _step_rk4(z, dt, stiff, nonlinear):
    def rhs(y):
        return stiff * y + nonlinear(y)

    k1 = rhs(z)
    k2 = rhs(z + 0.5 * dt * k1)
    k3 = rhs(z + 0.5 * dt * k2)
    k4 = rhs(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_ARS_GAMMA = 1.0 - np.sqrt(0.5)
_ARS_DELTA = 1.0 - 1.0 / (2.0 * _ARS_GAMMA)


def _step_imex(z, dt, stiff, nonlinear):
    # ARS(2,2,2): SDIRK implicit part solved by diagonal division
    g, d = _ARS_GAMMA, _ARS_DELTA
    denom = 1.0 - dt * g * stiff
    n0 = nonlinear(z)
    z1 = (z + dt * g * n0) / denom
    n1 = nonlinear(z1)
    lz1 = stiff * z1
    z2 = (z + dt * (d * n0 + (1.0 - d) * n1) + dt * (1.0 - g) * lz1) / denom
    return z2


class _Stepper:
    """Advances a packed spectral state; caches per-dt ETD weights."""

    def __init__(self, engine, cfg: StepConfig):
        self.engine = engine
        self.cfg = cfg
        self._etd_cache: dict[float, _EtdWeights] = {}

    def advance(self, z: np.ndarray, dt: float) -> np.ndarray:
        scheme = self.cfg.scheme
        if scheme == "etdrk4":
            w = self._etd_cache.get(dt)
            if w is None:
                w = _EtdWeights(self.engine.stiff, dt)
                self._etd_cache[dt] = w
                if len(self._etd_cache) > 64:
                    self._etd_cache.pop(next(iter(self._etd_cache)))
            return _step_etdrk4(z, dt, w, self.engine.nonlinear)
        if scheme == "rk4":
            return _step_rk4(z, dt, self.engine.stiff, self.engine.nonlinear)
        return _step_imex(z, dt, self.engine.stiff, self.engine.nonlinear)


def _state_bounds(state, gamma: float) -> tuple[float, float]:
    """(sup|u|, sup|sigma|) for either state flavor."""
    if isinstance(state, SigmaState):
        return state.u.sup_norm(), float(np.abs(state.sigma.values).max())
    if isinstance(state, PrimitiveState):
        from .states import sigma_of_rho

        sig = sigma_of_rho(state.rho, gamma)
        return state.u.sup_norm(), float(np.abs(sig.values).max())
    raise TypeError(f"unsupported state type {type(state)!r}")


def adaptive_dt(state, params: ModelParams, cfg: StepConfig) -> float:
    """CFL bound: advective, acoustic, and (explicit schemes) dissipative."""
    grid = state.grid
    h = grid.h
    u_sup, sig_sup = _state_bounds(state, params.gamma)
    acoustic_speed = np.sqrt(params.gamma) + 0.5 * (params.gamma - 1.0) * sig_sup
    bounds = [h / acoustic_speed]
    if u_sup > 0.0:
        bounds.append(h / u_sup)
    if cfg.scheme == "rk4" and not cfg.disable_alignment:
        bounds.append(h ** (2.0 * params.alpha.alpha))
    return min(cfg.dt, cfg.cfl_safety * min(bounds))


def _gamma_sigma_sup(engine, z) -> float:
    g = engine.grid
    return float(np.abs(g.values_of(z[0])).max())


def _dt_bound_packed(engine, z, params, cfg) -> float:
    g = engine.grid
    h = g.h
    if engine.form == "sigma":
        sig_sup = _gamma_sigma_sup(engine, z)
        u_sup = max(
            float(np.abs(g.values_of(z[1 + j])).max()) for j in range(g.dim)
        )
    else:
        rho = g.values_of(z[0])
        rho_min = rho.min()
        if rho_min <= 0:
            return cfg.dt * 2.0 ** -40
        u_sup = max(
            float(np.abs(g.values_of(z[1 + j]) / rho).max()) for j in range(g.dim)
        )
        sig_sup = float(np.abs(np.log(np.maximum(rho, 1e-300))).max())
    acoustic = np.sqrt(params.gamma) + 0.5 * (params.gamma - 1.0) * sig_sup
    bounds = [h / acoustic]
    if u_sup > 0:
        bounds.append(h / u_sup)
    if cfg.scheme == "rk4" and not cfg.disable_alignment:
        bounds.append(h ** (2.0 * params.alpha.alpha))
    return cfg.cfl_safety * min(bounds)


def step(state, params: ModelParams, cfg: StepConfig, kernel: KernelSpec | None = None):
    """Advance one step of size cfg.dt; raises BlowupError on failure."""
    engine = make_dynamics(
        state.grid,
        params,
        form=cfg.form,
        kernel=kernel,
        disable_alignment=cfg.disable_alignment,
        linear_only=cfg.linear_only,
    )
    stepper = _Stepper(engine, cfg)
    z = engine.pack(state)
    z_new = stepper.advance(z, cfg.dt)
    mon = _check_monitors(engine, z_new, state, state.t + cfg.dt, 1, cfg)
    if mon is not None:
        raise BlowupError(mon)
    return engine.unpack(z_new, state.t + cfg.dt)


def _check_monitors(engine, z, last_state, t, step_idx, cfg) -> BlowupEvent | None:
    try:
        mon = engine.monitors(z)
    except PositivityError:
        mon = {"finite": True, "rho_min": 0.0, "grad_u_inf": np.inf,
               "sigma_holder": np.inf}
    if not mon.get("finite", False):
        return BlowupEvent(t, step_idx, "non_finite", np.nan, np.nan, last_state)
    if mon["rho_min"] < cfg.rho_min_floor:
        return BlowupEvent(
            t, step_idx, "rho_min", mon["rho_min"], cfg.rho_min_floor, last_state
        )
    if mon["grad_u_inf"] > cfg.grad_u_max:
        return BlowupEvent(
            t, step_idx, "grad_u", mon["grad_u_inf"], cfg.grad_u_max, last_state
        )
    if mon["sigma_holder"] > cfg.sigma_holder_max:
        return BlowupEvent(
            t, step_idx, "sigma_holder", mon["sigma_holder"],
            cfg.sigma_holder_max, last_state,
        )
    return None


def run(
    ic,
    params: ModelParams,
    cfg: StepConfig,
    hooks=(),
    kernel: KernelSpec | None = None,
) -> TrajectorySummary:
    """Integrate to cfg.t_end, invoking hooks at the configured cadence.

    Hooks are callables (state, step_index); they see the initial state, every
    cadence-th state, and the final state.  Returns a structured summary; a
    blow-up is reported in the summary, not raised.
    """
    engine = make_dynamics(
        ic.grid,
        params,
        form=cfg.form,
        kernel=kernel,
        disable_alignment=cfg.disable_alignment,
        linear_only=cfg.linear_only,
    )
    stepper = _Stepper(engine, cfg)
    z = engine.pack(ic)
    t = float(ic.t)
    t_end = float(cfg.t_end)
    step_idx = 0
    level = 0  # dt = cfg.dt / 2^level

    for hook in hooks:
        hook(engine.unpack(z, t), step_idx)

    if t >= t_end:
        return TrajectorySummary("completed", engine.unpack(z, t), 0, t)

    eps = 1e-12 * max(1.0, abs(t_end))
    while step_idx < cfg.max_steps:
        if cfg.adaptive:
            bound = _dt_bound_packed(engine, z, params, cfg)
            while cfg.dt * 2.0**-level > bound and level < 40:
                level += 1
            while level > 0 and cfg.dt * 2.0 ** -(level - 1) <= 0.8 * bound:
                level -= 1
            if level >= 40:
                ev = BlowupEvent(t, step_idx, "dt_collapse",
                                 cfg.dt * 2.0**-level, cfg.dt, engine.unpack(z, t))
                return TrajectorySummary("blowup", engine.unpack(z, t), step_idx, t,
                                         event=ev)
        dt = cfg.dt * 2.0**-level
        last_step = t + dt >= t_end - eps
        if last_step:
            dt = t_end - t

        z_new = stepper.advance(z, dt)
        t_new = t_end if last_step else t + dt
        ev = _check_monitors(engine, z_new, engine.unpack(z, t), t_new,
                             step_idx + 1, cfg)
        if ev is not None:
            for hook in hooks:
                hook(ev.last_state, step_idx)
            return TrajectorySummary("blowup", ev.last_state, step_idx, t, event=ev)

        z = z_new
        t = t_new
        step_idx += 1
        final = last_step
        if final or (cfg.cadence > 0 and step_idx % cfg.cadence == 0):
            for hook in hooks:
                hook(engine.unpack(z, t), step_idx)
        if final:
            return TrajectorySummary("completed", engine.unpack(z, t), step_idx, t)

    return TrajectorySummary("max_steps", engine.unpack(z, t), step_idx, t)
