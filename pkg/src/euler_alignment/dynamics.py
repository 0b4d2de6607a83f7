"""Right-hand-side assembly for both formulations of the alignment system.

The production path integrates the symmetrized variables (sigma, u), whose
stiff linear part -(beta + |k|^(2*alpha)) acting on u is diagonal in Fourier
space.  The conservative path integrates (rho, rho*u) with the pair-sum
convolution force and is used for conservation-exact diagnostics runs.

Internally each formulation is an engine exposing a packed spectral state,
its stiff symbol, and the explicitly-treated remainder; the integrator and
the public one-shot RHS functions share these engines.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .alignment import (
    KernelSpec,
    alignment_force_commutator,
    alignment_force_convolution,
    periodized_kernel,
)
from .spectral import Field, Grid, VectorField, dealiased_apply
from .states import (
    ModelParams,
    PositivityError,
    PrimitiveState,
    SigmaState,
    _rho_dev_values,
    sigma_of_rho,
)

__all__ = [
    "RhsEvaluation",
    "rhs_sigma_form",
    "rhs_conservative_form",
    "cross_formulation_check",
    "CrossFormReport",
    "SigmaDynamics",
    "ConservativeDynamics",
    "make_dynamics",
]


@dataclass(frozen=True)
class RhsEvaluation:
    """Full RHS split into fields plus the exact stiff symbol on u."""

    form: str
    d_scalar: Field
    d_vector: VectorField
    stiff_symbol: np.ndarray
    stiff_applied: tuple

    @property
    def d_sigma(self) -> Field:
        if self.form != "sigma":
            raise AttributeError("d_sigma only defined for the sigma form")
        return self.d_scalar

    @property
    def d_rho(self) -> Field:
        if self.form != "conservative":
            raise AttributeError("d_rho only defined for the conservative form")
        return self.d_scalar

    @property
    def d_u(self) -> VectorField:
        if self.form != "sigma":
            raise AttributeError("d_u only defined for the sigma form")
        return self.d_vector

    @property
    def d_momentum(self) -> VectorField:
        if self.form != "conservative":
            raise AttributeError("d_momentum only defined for the conservative form")
        return self.d_vector


class SigmaDynamics:
    """Spectral engine for the (sigma, u) system."""

    form = "sigma"

    def __init__(
        self,
        grid: Grid,
        params: ModelParams,
        disable_alignment: bool = False,
        linear_only: bool = False,
    ):
        self.grid = grid
        self.params = params
        self.disable_alignment = disable_alignment
        self.linear_only = linear_only
        self.nvar = 1 + grid.dim
        a = params.alpha.alpha
        self.m2a = grid.multiplier(2.0 * a)
        self.holder_lam = max(1.0, 2.0 * a)
        u_sym = -(params.beta + (0.0 if disable_alignment else 1.0) * self.m2a)
        self.stiff = np.stack(
            [np.zeros(grid.shape)] + [u_sym] * grid.dim
        )
        self.sqrt_g = np.sqrt(params.gamma)

    def pack(self, state: SigmaState) -> np.ndarray:
        return np.stack(
            [state.sigma.spectrum] + [c.spectrum for c in state.u]
        )

    def unpack(self, z: np.ndarray, t: float) -> SigmaState:
        g = self.grid
        sigma = Field.from_spectrum(g, z[0])
        u = VectorField([Field.from_spectrum(g, z[1 + j]) for j in range(g.dim)])
        return SigmaState(sigma, u, t)

    def nonlinear(self, z: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.zeros_like(z)
        if self.linear_only:
            return out
        gamma = self.params.gamma
        dim = g.dim
        sig_hat = z[0]
        u_hat = z[1:]

        sig_p = g.padded_values(sig_hat)
        u_p = [g.padded_values(u_hat[j]) for j in range(dim)]
        dsig_p = [g.padded_values(g.ikd_axes[a] * sig_hat) for a in range(dim)]
        div_hat = sum(g.ikd_axes[a] * u_hat[a] for a in range(dim))
        div_p = g.padded_values(div_hat)
        du_p = [
            [g.padded_values(g.ikd_axes[a] * u_hat[j]) for a in range(dim)]
            for j in range(dim)
        ]

        coef_p = 0.5 * (gamma - 1.0) * sig_p + self.sqrt_g

        adv_sig = sum(u_p[a] * dsig_p[a] for a in range(dim))
        out[0] = -g.spectrum_from_padded(adv_sig + coef_p * div_p)

        if not self.disable_alignment:
            rho_dev_p = _rho_dev_values(sig_p, gamma)
            rho_dev_hat = g.spectrum_from_padded(rho_dev_p)
            lap_dev_p = g.padded_values(self.m2a * rho_dev_hat)

        for j in range(dim):
            adv = sum(u_p[a] * du_p[j][a] for a in range(dim))
            nl = g.spectrum_from_padded(adv + coef_p * dsig_p[j])
            out[1 + j] = -nl
            if not self.disable_alignment:
                out[1 + j] -= self.m2a * g.spectrum_from_padded(rho_dev_p * u_p[j])
                out[1 + j] += g.spectrum_from_padded(u_p[j] * lap_dev_p)
        return out

    def monitors(self, z: np.ndarray) -> dict:
        g = self.grid
        sig_vals = g.values_of(z[0])
        finite = np.all(np.isfinite(z))
        if not finite:
            return {"finite": False}
        try:
            rho_min = 1.0 + _rho_dev_values(sig_vals, self.params.gamma).min()
        except PositivityError:
            rho_min = 0.0
        grad_u = 0.0
        for j in range(g.dim):
            for a in range(g.dim):
                grad_u = max(grad_u, np.abs(g.values_of(g.ikd_axes[a] * z[1 + j])).max())
        lam = self.holder_lam if self.holder_lam != 1.0 else 1.0 + 1e-3
        holder = np.abs(sig_vals).max() + np.abs(
            g.values_of(g.multiplier(lam) * z[0])
        ).max()
        return {
            "finite": True,
            "rho_min": float(rho_min),
            "grad_u_inf": float(grad_u),
            "sigma_holder": float(holder),
        }


class ConservativeDynamics:
    """Spectral engine for the conservative (rho, momentum) system."""

    form = "conservative"

    def __init__(
        self,
        grid: Grid,
        params: ModelParams,
        kernel: KernelSpec | None = None,
        alignment: str = "quadrature",
        disable_alignment: bool = False,
    ):
        if alignment not in ("quadrature", "spectral", "off"):
            raise ValueError(f"unknown alignment mode {alignment!r}")
        if disable_alignment:
            alignment = "off"
        self.grid = grid
        self.params = params
        self.alignment = alignment
        self.nvar = 1 + grid.dim
        a = params.alpha.alpha
        self.m2a = grid.multiplier(2.0 * a)
        self.holder_lam = max(1.0, 2.0 * a)
        if alignment == "quadrature":
            spec = kernel or KernelSpec(alpha=params.alpha, dim=grid.dim)
            self.kernel_spec = spec
            self.kernel_table = periodized_kernel(spec, grid)
        else:
            self.kernel_spec = kernel
            self.kernel_table = None
        u_sym = -(params.beta + (0.0 if alignment == "off" else 1.0) * self.m2a)
        self.stiff = np.stack([np.zeros(grid.shape)] + [u_sym] * grid.dim)

    def pack(self, state: PrimitiveState) -> np.ndarray:
        g = self.grid
        m = [
            Field(g, state.rho.values * c.values).spectrum for c in state.u
        ]
        return np.stack([state.rho.spectrum] + m)

    def unpack(self, z: np.ndarray, t: float) -> PrimitiveState:
        g = self.grid
        rho_vals = g.values_of(z[0])
        if rho_vals.min() <= 0.0:
            loc = tuple(np.argwhere(rho_vals <= 0.0)[0])
            raise PositivityError(
                f"nonpositive density at grid index {loc}", location=loc
            )
        rho = Field(g, rho_vals)
        u = VectorField(
            [Field(g, g.values_of(z[1 + j]) / rho_vals) for j in range(g.dim)]
        )
        return PrimitiveState(rho, u, t)

    def full_rhs(self, z: np.ndarray) -> np.ndarray:
        g = self.grid
        dim = g.dim
        gamma = self.params.gamma
        out = np.zeros_like(z)
        rho_hat = z[0]
        m_hat = z[1:]

        out[0] = -sum(g.ikd_axes[a] * m_hat[a] for a in range(dim))

        rho_p = g.padded_values(rho_hat)
        if rho_p.min() <= 0.0:
            raise PositivityError("density interpolant lost positivity")
        m_p = [g.padded_values(m_hat[j]) for j in range(dim)]
        u_p = [m_p[j] / rho_p for j in range(dim)]

        for j in range(dim):
            flux = sum(
                g.ikd_axes[a] * g.spectrum_from_padded(m_p[j] * u_p[a])
                for a in range(dim)
            )
            out[1 + j] = -flux - self.params.beta * m_hat[j]
        if gamma == 1.0:
            p_hat = rho_hat
        else:
            p_hat = g.spectrum_from_padded(rho_p**gamma)
        for j in range(dim):
            out[1 + j] -= g.ikd_axes[j] * p_hat

        if self.alignment != "off":
            state = self.unpack(z, 0.0)
            if self.alignment == "quadrature":
                force = alignment_force_convolution(
                    state, self.kernel_spec, self.kernel_table
                )
            else:
                force = alignment_force_commutator(state, self.params.alpha)
            for j in range(dim):
                # pointwise product keeps the pair-sum momentum neutrality exact
                out[1 + j] += g.spectrum_of(state.rho.values * force[j].values)
        return out

    def nonlinear(self, z: np.ndarray) -> np.ndarray:
        return self.full_rhs(z) - self.stiff * z

    def monitors(self, z: np.ndarray) -> dict:
        g = self.grid
        if not np.all(np.isfinite(z)):
            return {"finite": False}
        rho_vals = g.values_of(z[0])
        rho_min = float(rho_vals.min())
        if rho_min <= 0.0:
            return {"finite": True, "rho_min": rho_min, "grad_u_inf": np.inf,
                    "sigma_holder": np.inf}
        grad_u = 0.0
        for j in range(g.dim):
            u_hat = g.spectrum_of(g.values_of(z[1 + j]) / rho_vals)
            for a in range(g.dim):
                grad_u = max(grad_u, np.abs(g.values_of(g.ikd_axes[a] * u_hat)).max())
        sig = sigma_of_rho(Field(g, rho_vals), self.params.gamma)
        lam = self.holder_lam if self.holder_lam != 1.0 else 1.0 + 1e-3
        holder = np.abs(sig.values).max() + np.abs(
            g.values_of(g.multiplier(lam) * sig.spectrum)
        ).max()
        return {
            "finite": True,
            "rho_min": rho_min,
            "grad_u_inf": float(grad_u),
            "sigma_holder": float(holder),
        }


@functools.lru_cache(maxsize=16)
def _sigma_engine(dim, n, params, disable_alignment, linear_only):
    return SigmaDynamics(Grid(dim, n), params, disable_alignment, linear_only)


@functools.lru_cache(maxsize=16)
def _conservative_engine(dim, n, params, kernel, alignment, disable_alignment):
    return ConservativeDynamics(
        Grid(dim, n), params, kernel, alignment, disable_alignment
    )


def make_dynamics(
    grid: Grid,
    params: ModelParams,
    form: str = "sigma",
    kernel: KernelSpec | None = None,
    alignment: str = "quadrature",
    disable_alignment: bool = False,
    linear_only: bool = False,
):
    if form == "sigma":
        return _sigma_engine(grid.dim, grid.n, params, disable_alignment, linear_only)
    if form == "conservative":
        return _conservative_engine(
            grid.dim, grid.n, params, kernel, alignment, disable_alignment
        )
    raise ValueError(f"unknown formulation {form!r}")


def _evaluation(engine, z) -> RhsEvaluation:
    g = engine.grid
    total = engine.nonlinear(z) + engine.stiff * z
    d_scalar = Field.from_spectrum(g, total[0])
    d_vector = VectorField(
        [Field.from_spectrum(g, total[1 + j]) for j in range(g.dim)]
    )
    symbol = engine.stiff[1]
    applied = tuple(symbol * z[1 + j] for j in range(g.dim))
    return RhsEvaluation(
        form=engine.form,
        d_scalar=d_scalar,
        d_vector=d_vector,
        stiff_symbol=symbol,
        stiff_applied=applied,
    )


def rhs_sigma_form(
    state: SigmaState,
    params: ModelParams,
    disable_alignment: bool = False,
    linear_only: bool = False,
) -> RhsEvaluation:
    """RHS of the symmetrized system with dealiased products."""
    engine = _sigma_engine(
        state.grid.dim, state.grid.n, params, disable_alignment, linear_only
    )
    return _evaluation(engine, engine.pack(state))


def rhs_conservative_form(
    state: PrimitiveState,
    params: ModelParams,
    kernel: KernelSpec | None = None,
    alignment: str = "quadrature",
) -> RhsEvaluation:
    """RHS of the conservative system; default alignment is the pair sum."""
    engine = _conservative_engine(
        state.grid.dim, state.grid.n, params, kernel, alignment, False
    )
    return _evaluation(engine, engine.pack(state))


@dataclass(frozen=True)
class CrossFormReport:
    residual_sigma: float
    residual_u: float

    @property
    def max_relative(self) -> float:
        return max(self.residual_sigma, self.residual_u)


def cross_formulation_check(
    state: PrimitiveState,
    params: ModelParams,
    kernel: KernelSpec | None = None,
    alignment: str = "spectral",
) -> CrossFormReport:
    """Compare both formulations through the chain rule at one state.

    The conservative tangent (d_rho, d_m) is mapped to (d_sigma, d_u) via
    d_sigma = sigma'(rho) d_rho and d_u = (d_m - u d_rho)/rho, then compared
    against the sigma-form RHS.  With spectral alignment on both sides the
    discrepancy is pure product/composition aliasing.
    """
    gamma = params.gamma
    sig_state = SigmaState(sigma_of_rho(state.rho, gamma), state.u, state.t)
    ev_s = rhs_sigma_form(sig_state, params)
    ev_c = rhs_conservative_form(state, params, kernel, alignment=alignment)

    d_rho = ev_c.d_rho
    d_sigma_c = dealiased_apply(
        lambda r, dr: np.sqrt(gamma) * r ** ((gamma - 3.0) / 2.0) * dr,
        state.rho,
        d_rho,
    )
    rel_floor = 1e-300

    def rel(a: Field, b: Field) -> float:
        num = np.sqrt(np.mean((a.values - b.values) ** 2))
        den = max(np.sqrt(np.mean(b.values**2)), rel_floor)
        return float(num / den)

    res_sigma = rel(d_sigma_c, ev_s.d_sigma)
    res_u = 0.0
    for j in range(state.grid.dim):
        d_u_c = dealiased_apply(
            lambda dm, uu, dr, r: (dm - uu * dr) / r,
            ev_c.d_momentum[j],
            state.u[j],
            d_rho,
            state.rho,
        )
        res_u = max(res_u, rel(d_u_c, ev_s.d_u[j]))
    return CrossFormReport(residual_sigma=res_sigma, residual_u=res_u)
