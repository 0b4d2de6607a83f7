"""Discrete functionals: conserved quantities, energy law, monitors, decay fits.

Per-snapshot quantities are collected into DiagnosticsRecord rows.  The
alignment dissipation and the cross-energy terms involve O(n^2) double sums
over the kernel table and are computed at the record cadence, by direct
summation (no spectral shortcut is valid with the rho weighting).

Quantities that vanish at the uniform state (rho - 1, h(rho)) are evaluated
from the density deviation with series fallbacks, so exponential decay can be
followed down to the bottom of double precision without cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .alignment import KernelTable, _fd_gradient, _half_offsets, _roll
from .spectral import (
    Field,
    Grid,
    VectorField,
    gradient,
    holder_proxy,
    sobolev_norm,
    spectral_power,
    sup_norm,
)
from .states import (
    ModelParams,
    PrimitiveState,
    SigmaState,
    rho_dev_of_sigma,
    sigma_of_rho,
)

__all__ = [
    "DiagnosticsRecord",
    "StreamFunction",
    "h_of_rho",
    "stream_function",
    "v_epsilon",
    "w_epsilon",
    "compute_record",
    "DiagnosticsCollector",
    "energy_law_residual",
    "fit_decay_rate",
    "smallness_monitor",
    "SmallnessReport",
]


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    momentum: tuple
    kinetic: float
    internal: float
    dissipation_damping: float
    dissipation_alignment: float
    l2_rho_dev: float
    hs_sigma: float
    hs_u: float
    grad_u_inf: float
    sigma_holder: float
    bkm_integrand: float
    cross_low: float
    cross_high: float
    y_functional: float
    v_eps: float
    w_eps: float
    rho_min: float

    @property
    def energy(self) -> float:
        return self.kinetic + self.internal


RECORD_FIELDS = [f.name for f in fields(DiagnosticsRecord)]


@dataclass(frozen=True)
class StreamFunction:
    psi: Field


def _h_of_dev(dev: np.ndarray, gamma: float) -> np.ndarray:
    """h(1 + d) with series evaluation for small d (no cancellation)."""
    d = np.asarray(dev, dtype=float)
    out = np.empty_like(d)
    small = np.abs(d) < 1e-4
    ds = d[small]
    if gamma == 1.0:
        out[small] = ds**2 * (0.5 + ds * (-1.0 / 6.0 + ds * (1.0 / 12.0 - ds / 20.0)))
        rho = 1.0 + d[~small]
        out[~small] = rho * np.log(rho) - rho + 1.0
    else:
        g = gamma
        c2 = g / 2.0
        c3 = g * (g - 2.0) / 6.0
        c4 = g * (g - 2.0) * (g - 3.0) / 24.0
        c5 = g * (g - 2.0) * (g - 3.0) * (g - 4.0) / 120.0
        out[small] = ds**2 * (c2 + ds * (c3 + ds * (c4 + ds * c5)))
        rho = 1.0 + d[~small]
        out[~small] = (rho**g - g * rho + g - 1.0) / (g - 1.0)
    return out


def h_of_rho(rho: Field, gamma: float) -> Field:
    """Relative pressure potential with h(1) = h'(1) = 0, h >= 0.

    gamma == 1: rho*log(rho) - rho + 1;
    gamma > 1:  rho^gamma/(gamma-1) - gamma*rho/(gamma-1) + 1.
    """
    if rho.values.min() <= 0.0:
        raise ValueError("h(rho) requires positive density")
    return Field(rho.grid, _h_of_dev(rho.values - 1.0, gamma))


def stream_function(rho: Field) -> StreamFunction:
    """Zero-mean solution of -Laplace(psi) = rho - 1."""
    dev = Field(rho.grid, rho.values - 1.0)
    return _stream_from_dev(dev)


def _stream_from_dev(dev: Field) -> StreamFunction:
    g = dev.grid
    if abs(dev.values.mean()) > 1e-12:
        raise ValueError(
            f"rho - 1 must have zero mean, got {dev.values.mean():.3e}"
        )
    spec = dev.spectrum.copy()
    nz = g.kmag2 > 0
    spec[nz] /= g.kmag2[nz]
    spec[~nz] = 0.0
    return StreamFunction(Field.from_spectrum(g, spec))


def _pair_double_sums(rho, us, grad_psi, table: KernelTable):
    """Kernel-weighted double sums in one pass over symmetric offset pairs.

    Returns (D, L6c) with
      D   = 1/2 * iint phi_P (u(x)-u(y))^2 rho(x) rho(y)
      L6c = iint grad_psi(x) . phi_P (u(x)-u(y)) rho(x) rho(y)

    When the kernel spec carries the near-field correction, D includes the
    matching omitted-cell dissipation (1/2) m2 int rho^2 |grad u|^2, so the
    recorded dissipation stays consistent with the corrected force.
    """
    g = table.grid
    hN2 = g.h ** (2 * g.dim)
    paired, selfp = _half_offsets(g)
    D = 0.0
    L6 = 0.0

    def accumulate(off, both_directions):
        nonlocal D, L6
        w = table.values[off]
        rp = _roll(rho, off, +1)
        du = [us[j] - _roll(us[j], off, +1) for j in range(len(us))]
        sq = sum(d * d for d in du)
        D += (2.0 if both_directions else 1.0) * w * float((rho * rp * sq).sum())
        if grad_psi is not None:
            dot = sum(grad_psi[j] * du[j] for j in range(len(us)))
            L6 += w * float((rho * rp * dot).sum())
            if both_directions:
                rm = _roll(rho, off, -1)
                dum = [us[j] - _roll(us[j], off, -1) for j in range(len(us))]
                dotm = sum(grad_psi[j] * dum[j] for j in range(len(us)))
                L6 += w * float((rho * rm * dotm).sum())

    for off in paired:
        accumulate(off, True)
    for off in selfp:
        accumulate(off, False)
    D_total = 0.5 * hN2 * D
    if table.spec.near_field_correction:
        cell = 0.0
        for uj in us:
            gu = _fd_gradient(uj, g.h)
            cell += float(np.mean(rho**2 * sum(c**2 for c in gu)))
        D_total += 0.5 * table.cell_moment * cell
    return D_total, hN2 * L6


def _as_both(state, gamma: float):
    """(sigma, u, rho_dev) fields regardless of the incoming state flavor."""
    if isinstance(state, SigmaState):
        sigma = state.sigma
        dev = rho_dev_of_sigma(sigma, gamma)
        return sigma, state.u, dev
    if isinstance(state, PrimitiveState):
        dev = Field(state.grid, state.rho.values - 1.0)
        return sigma_of_rho(state.rho, gamma), state.u, dev
    raise TypeError(f"unsupported state type {type(state)!r}")


def v_epsilon(state, params: ModelParams, eps: float) -> float:
    """Cross energy V_eps = int(rho|u|^2/2 + h(rho) + eps rho u . grad psi)."""
    sigma, u, dev = _as_both(state, params.gamma)
    rho = 1.0 + dev.values
    u2 = sum(c.values**2 for c in u)
    psi = _stream_from_dev(Field(dev.grid, dev.values - dev.values.mean()))
    gp = gradient(psi.psi)
    cross = sum(rho * u[j].values * gp[j].values for j in range(dev.grid.dim))
    h_vals = _h_of_dev(dev.values, params.gamma)
    return float(np.mean(0.5 * rho * u2 + h_vals + eps * cross))


def w_epsilon(state, params: ModelParams, eps: float, table: KernelTable):
    """Dissipation functional paired with V_eps, assembled term by term.

    Returns (total, terms) where terms maps 'L1'..'L6' to the six
    contributions: damping, alignment dissipation, pressure-stream coupling,
    convective-stream coupling, stream time derivative, and the kernel cross
    term.
    """
    g = state.grid
    sigma, u, dev = _as_both(state, params.gamma)
    rho = 1.0 + dev.values
    us = [c.values for c in u]
    u2 = sum(c**2 for c in us)

    psi = _stream_from_dev(Field(g, dev.values - dev.values.mean()))
    gp = gradient(psi.psi)
    gp_vals = [c.values for c in gp.components]

    L1 = params.beta * float(np.mean(rho * u2))
    D, L6c = _pair_double_sums(rho, us, gp_vals, table)
    L2 = D

    # L3 = eps int grad(psi) . grad(p)
    p_field = Field(g, rho**params.gamma)
    gp_p = gradient(p_field)
    L3 = eps * float(
        np.mean(sum(gp_vals[a] * gp_p[a].values for a in range(g.dim)))
    )

    # L4 = eps int grad(psi) . div(rho u x u)
    L4 = 0.0
    for j in range(g.dim):
        div_j = np.zeros(g.shape)
        for a in range(g.dim):
            flux = Field(g, rho * us[j] * us[a])
            div_j += gradient(flux)[a].values
        L4 += float(np.mean(gp_vals[j] * div_j))
    L4 *= eps

    # L5 = -eps int rho u . grad(psi_t), -Laplace(psi_t) = -div(rho u)
    m_spec = [Field(g, rho * us[a]).spectrum for a in range(g.dim)]
    div_m = sum(g.ikd_axes[a] * m_spec[a] for a in range(g.dim))
    psi_t_spec = np.zeros(g.shape, dtype=complex)
    nz = g.kmag2 > 0
    psi_t_spec[nz] = -div_m[nz] / g.kmag2[nz]
    L5 = 0.0
    for a in range(g.dim):
        dpsi_t = Field.from_spectrum(g, g.ikd_axes[a] * psi_t_spec)
        L5 += float(np.mean(rho * us[a] * dpsi_t.values))
    L5 *= -eps

    L6 = eps * L6c
    terms = {"L1": L1, "L2": L2, "L3": L3, "L4": L4, "L5": L5, "L6": L6}
    return sum(terms.values()), terms


def compute_record(
    state,
    params: ModelParams,
    table: KernelTable | None = None,
    eps_v: float = 0.05,
    eps_y: float = 0.01,
    heavy: bool = True,
) -> DiagnosticsRecord:
    """Evaluate every tracked functional at one snapshot."""
    g = state.grid
    gamma = params.gamma
    s = params.regularity_index(g.dim)
    sigma, u, dev = _as_both(state, gamma)
    rho = 1.0 + dev.values
    us = [c.values for c in u]
    u2 = sum(c**2 for c in us)

    mass = 1.0 + float(dev.values.mean())
    momentum = tuple(float(np.mean(rho * c)) for c in us)
    kinetic = 0.5 * float(np.mean(rho * u2))
    internal = float(np.mean(_h_of_dev(dev.values, gamma)))
    diss_damp = params.beta * float(np.mean(rho * u2))
    l2_dev = float(np.mean(dev.values**2))

    hs_sigma = sobolev_norm(sigma, s)
    hs_u = float(np.sqrt(sum(sobolev_norm(c, s) ** 2 for c in u)))
    grad_u_inf = max(
        sup_norm(gradient(c)[a]) for c in u for a in range(g.dim)
    )
    sigma_holder = holder_proxy(sigma, max(1.0, 2.0 * params.alpha.alpha))
    bkm = grad_u_inf + sigma_holder

    grad_sigma = gradient(sigma)
    cross_low = float(
        np.mean(sum(us[a] * grad_sigma[a].values for a in range(g.dim)))
    )
    ls_sigma = spectral_power(sigma, s - 1.0)
    grad_ls_sigma = gradient(ls_sigma)
    cross_high = 0.0
    for a in range(g.dim):
        ls_u = spectral_power(u[a], s - 1.0)
        cross_high += float(np.mean(ls_u.values * grad_ls_sigma[a].values))
    y_val = hs_sigma**2 + hs_u**2 + eps_y * (cross_low + cross_high)

    if heavy and table is not None:
        v_eps = v_epsilon(state, params, eps_v)
        w_eps, terms = w_epsilon(state, params, eps_v, table)
        diss_align = terms["L2"]
    else:
        diss_align = float("nan")
        v_eps = float("nan")
        w_eps = float("nan")

    return DiagnosticsRecord(
        t=float(state.t),
        mass=mass,
        momentum=momentum,
        kinetic=kinetic,
        internal=internal,
        dissipation_damping=diss_damp,
        dissipation_alignment=diss_align,
        l2_rho_dev=l2_dev,
        hs_sigma=float(hs_sigma),
        hs_u=hs_u,
        grad_u_inf=float(grad_u_inf),
        sigma_holder=float(sigma_holder),
        bkm_integrand=float(bkm),
        cross_low=cross_low,
        cross_high=cross_high,
        y_functional=float(y_val),
        v_eps=v_eps,
        w_eps=w_eps,
        rho_min=float(rho.min()),
    )


class DiagnosticsCollector:
    """run() hook accumulating one DiagnosticsRecord per invocation."""

    def __init__(self, params, table=None, eps_v=0.05, eps_y=0.01, heavy=True):
        self.params = params
        self.table = table
        self.eps_v = eps_v
        self.eps_y = eps_y
        self.heavy = heavy
        self.records: list[DiagnosticsRecord] = []

    def __call__(self, state, step_idx):
        self.records.append(
            compute_record(
                state,
                self.params,
                self.table,
                eps_v=self.eps_v,
                eps_y=self.eps_y,
                heavy=self.heavy,
            )
        )


def energy_law_residual(records) -> float:
    """Normalized residual of dE/dt + damping + alignment dissipation = 0.

    Uses a centered difference for dE/dt (fourth-order five-point stencil
    when the window allows, three-point otherwise) and returns the maximum
    pointwise residual normalized by max(dissipation, |dE/dt|, floor).
    """
    if len(records) < 3:
        raise ValueError("energy_law_residual needs at least 3 records")
    t = np.array([r.t for r in records])
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-8, atol=1e-14):
        raise ValueError("records must be uniformly spaced in time")
    step = dt[0]
    E = np.array([r.kinetic + r.internal for r in records])
    D = np.array(
        [r.dissipation_damping + r.dissipation_alignment for r in records]
    )
    if np.any(np.isnan(D)):
        raise ValueError("records lack alignment dissipation (heavy=False?)")

    if len(records) >= 7:
        dE = (-E[4:] + 8.0 * E[3:-1] - 8.0 * E[1:-3] + E[:-4]) / (12.0 * step)
        Dm = D[2:-2]
    else:
        dE = (E[2:] - E[:-2]) / (2.0 * step)
        Dm = D[1:-1]
    resid = np.abs(dE + Dm)
    scale = np.maximum(Dm, np.abs(dE))
    floor = max(1e-14 * scale.max(), 1e-300) if scale.size else 1e-300
    return float(np.max(resid / np.maximum(scale, floor)))


def fit_decay_rate(series, t_start: float):
    """Least-squares exponential rate on [t_start, end]: returns (mu, r2).

    ``series`` is a sequence of (t, value) pairs; values in the window must
    be positive.  mu is minus the slope of log(value) vs t; a constant
    series fits exactly with mu = 0 and r2 = 1.
    """
    arr = np.asarray(list(series), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a list of (t, value) pairs")
    t, v = arr[:, 0], arr[:, 1]
    if t_start < t.min() or t_start > t.max():
        raise ValueError("t_start must lie inside the series")
    mask = t >= t_start
    if mask.sum() < 2:
        raise ValueError("need at least two points past t_start")
    t, v = t[mask], v[mask]
    if np.any(v <= 0.0):
        raise ValueError("decay fit undefined: nonpositive values in window")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return float(-slope), float(r2)


@dataclass(frozen=True)
class SmallnessReport:
    initial: float
    supremum: float
    ratio: float | None
    preserved_exactly: bool
    y_initial: float
    y_max_increment: float
    y_nonincreasing: bool


def smallness_monitor(records, rel_slack: float = 1e-6) -> SmallnessReport:
    """Propagation report: sup_t norm ratio and monotonicity of Y."""
    if not records:
        raise ValueError("no records")
    norms = np.array([r.hs_sigma**2 + r.hs_u**2 for r in records])
    y = np.array([r.y_functional for r in records])
    initial = float(norms[0])
    supremum = float(norms.max())
    if initial == 0.0:
        ratio = None
        preserved = supremum == 0.0
    else:
        ratio = supremum / initial
        preserved = False
    incs = np.diff(y)
    max_inc = float(incs.max()) if incs.size else 0.0
    tol = rel_slack * max(abs(y[0]), 1e-300)
    return SmallnessReport(
        initial=initial,
        supremum=supremum,
        ratio=ratio,
        preserved_exactly=preserved,
        y_initial=float(y[0]),
        y_max_increment=max_inc,
        y_nonincreasing=bool(max_inc <= tol),
    )
