"""Sum-of-squares formulation of the footprint safety filter.

For a fixed state, the input-dependent safety expression

    p(y; u) = dE(x,y)/dx (f + g u) + a1(E(x,y)) + a2(h(y))

is a polynomial in y with coefficients affine in u. The filter requires
p(y; u) - s(y) h(y) to be a sum of squares for some SOS multiplier s, which
(with Gram parameterizations p - s h = z'Qz, s = zs'S zs, Q, S PSD) becomes a
semidefinite program. The quadratic objective |u - k|^2 enters through a
Schur-complement epigraph block, and the input magnitude bound through a
second small block. Every returned input carries a re-validated certificate:
reconstructed coefficients must match and the Gram blocks must clear an
eigenvalue floor, independent of the solver's own convergence report.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sdp
from .dynamics import ControlAffineSystem
from .filters import LinearK
from .geometry import ExtentFunction, SafeFunction
from .polynomials import GramBasis, MultiPoly


class ContractViolation(ValueError):
    pass


class SosError(RuntimeError):
    pass


@dataclass(frozen=True)
class AffinePolyInU:
    """Polynomial in y whose coefficients are affine in the input channels."""

    const: MultiPoly
    channels: tuple  # one MultiPoly per input channel

    @property
    def degree(self) -> int:
        return max([self.const.degree] + [ch.degree for ch in self.channels])

    def at_input(self, u) -> MultiPoly:
        p = self.const
        for ui, ch in zip(np.asarray(u, dtype=float), self.channels):
            p = p + ch.scale(float(ui))
        return p


def build_constraint_poly(E: ExtentFunction, h: SafeFunction, alpha1, alpha2,
                          sys: ControlAffineSystem, x) -> AffinePolyInU:
    """Assemble p(y; u) for the current state; requires polynomial E(x,.) and h.

    Only linear class-K functions are admitted here: composing a polynomial
    with a nonlinear class-K would raise the degree and blow up the Gram
    blocks.
    """
    if not isinstance(alpha1, LinearK) or not isinstance(alpha2, LinearK):
        raise ContractViolation("the SOS path requires linear class-K functions")
    x = np.asarray(x, dtype=float)
    E_poly = E.poly_in_y(x)
    grad_polys = E.gradx_polys_in_y(x)
    h_poly = h.as_poly()
    f = sys.drift(x)
    g = sys.actuation(x)

    const = E_poly.scale(alpha1.gain) + h_poly.scale(alpha2.gain)
    for j in range(sys.n):
        if f[j] != 0.0:
            const = const + grad_polys[j].scale(float(f[j]))
    channels = []
    for i in range(sys.m):
        ch = MultiPoly.zero(E_poly.nvars)
        for j in range(sys.n):
            if g[j, i] != 0.0:
                ch = ch + grad_polys[j].scale(float(g[j, i]))
        channels.append(ch)
    return AffinePolyInU(const=const, channels=tuple(channels))


@dataclass(frozen=True)
class SosProgram:
    """Assembled SDP plus the decision layout needed to read the answer back."""

    problem: sdp.SdpProblem
    m: int                      # input channels
    u_slice: slice
    delta_index: int
    q_slice: slice
    s_slice: slice
    basis_main: GramBasis
    basis_mult: GramBasis
    constraint: AffinePolyInU
    h_poly: MultiPoly
    k_input: np.ndarray
    input_bound: float


def _vech_indices(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _gram_block(dim: int, offset: int, basis: GramBasis) -> sdp.PsdBlock:
    """PSD block reading a symmetric matrix out of vech-ordered decision vars."""
    n = basis.size
    Fs = np.zeros((dim, n, n))
    for idx, (i, j) in enumerate(_vech_indices(n)):
        Fs[offset + idx, i, j] = 1.0
        Fs[offset + idx, j, i] = 1.0
    return sdp.PsdBlock(F0=np.zeros((n, n)), Fs=Fs)


def _gram_coefficient_columns(basis: GramBasis, multiplier: MultiPoly | None = None):
    """Map each vech entry to its contribution per monomial of z'Gz (times multiplier)."""
    cols = {}
    for idx, (i, j) in enumerate(_vech_indices(basis.size)):
        weight = 1.0 if i == j else 2.0
        mono = tuple(a + b for a, b in zip(basis.monomials[i], basis.monomials[j]))
        base = MultiPoly(basis.nvars, {mono: weight})
        contrib = base if multiplier is None else base * multiplier
        cols[idx] = contrib.terms
    return cols


def assemble_sos_program(cpoly: AffinePolyInU, h_poly: MultiPoly, deg_s: int,
                         k_input, input_bound: float) -> SosProgram:
    """Turn the SOS membership condition into an explicit SdpProblem.

    Decision layout: [u (m), delta (1), vech(Q), vech(S)]. Objective: minimize
    delta. Blocks: main Gram Q, multiplier Gram S, the (m+1)x(m+1) epigraph
    block [[I, u], [u', delta + 2k'u - k'k]], and the input-ball block
    [[M I, u], [u', M]]. Equalities match every monomial of
    p(y; u) - s(y) h(y) - z'Qz to zero.
    """
    k_input = np.asarray(k_input, dtype=float)
    m = k_input.size
    nvars = cpoly.const.nvars
    deg_p = cpoly.degree
    if deg_s < 0 or deg_s % 2 != 0:
        raise ContractViolation("multiplier degree must be even and nonnegative")
    total_deg = max(deg_p, deg_s + h_poly.degree)
    if total_deg % 2 != 0:
        raise ContractViolation(
            f"matched degree {total_deg} is odd; adjust deg_s or the shapes")
    basis_main = GramBasis.build(nvars, total_deg // 2)
    basis_mult = GramBasis.build(nvars, deg_s // 2)

    nq = len(_vech_indices(basis_main.size))
    ns = len(_vech_indices(basis_mult.size))
    dim = m + 1 + nq + ns
    u_slice = slice(0, m)
    delta_index = m
    q_slice = slice(m + 1, m + 1 + nq)
    s_slice = slice(m + 1 + nq, dim)

    c = np.zeros(dim)
    c[delta_index] = 1.0

    # equality rows: one per monomial up to total_deg
    from .polynomials import monomials_up_to

    monos = monomials_up_to(nvars, total_deg)
    row_of = {mu: r for r, mu in enumerate(monos)}
    A = np.zeros((len(monos), dim))
    b = np.zeros(len(monos))
    for mu, coeff in cpoly.const.terms.items():
        b[row_of[mu]] = -coeff
    for i, ch in enumerate(cpoly.channels):
        for mu, coeff in ch.terms.items():
            A[row_of[mu], i] = coeff
    q_cols = _gram_coefficient_columns(basis_main)
    for idx, terms in q_cols.items():
        for mu, w in terms.items():
            A[row_of[mu], q_slice.start + idx] = -w
    s_cols = _gram_coefficient_columns(basis_mult, multiplier=h_poly)
    for idx, terms in s_cols.items():
        for mu, w in terms.items():
            A[row_of[mu], s_slice.start + idx] += -w

    blocks = [_gram_block(dim, q_slice.start, basis_main),
              _gram_block(dim, s_slice.start, basis_mult)]

    # epigraph block [[I, u], [u', delta + 2 k'u - k'k]]
    size = m + 1
    F0 = np.zeros((size, size))
    F0[:m, :m] = np.eye(m)
    F0[m, m] = -float(k_input @ k_input)
    Fs = np.zeros((dim, size, size))
    for i in range(m):
        Fs[i, i, m] = 1.0
        Fs[i, m, i] = 1.0
        Fs[i, m, m] = 2.0 * k_input[i]
    Fs[delta_index, m, m] = 1.0
    blocks.append(sdp.PsdBlock(F0=F0, Fs=Fs))

    # input-ball block [[M I, u], [u', M]] encodes |u| <= M
    M = float(input_bound)
    if M <= 0:
        raise ContractViolation("input bound must be positive")
    F0b = np.zeros((size, size))
    F0b[:m, :m] = M * np.eye(m)
    F0b[m, m] = M
    Fsb = np.zeros((dim, size, size))
    for i in range(m):
        Fsb[i, i, m] = 1.0
        Fsb[i, m, i] = 1.0
    blocks.append(sdp.PsdBlock(F0=F0b, Fs=Fsb))

    problem = sdp.SdpProblem.build(c, A, b, blocks)
    return SosProgram(problem=problem, m=m, u_slice=u_slice, delta_index=delta_index,
                      q_slice=q_slice, s_slice=s_slice, basis_main=basis_main,
                      basis_mult=basis_mult, constraint=cpoly, h_poly=h_poly,
                      k_input=k_input, input_bound=M)


def default_multiplier_degree(cpoly: AffinePolyInU, h_poly: MultiPoly) -> int:
    """deg(p) - deg(h), rounded down to even; the minimal degree-matching choice."""
    d = max(0, cpoly.degree - h_poly.degree)
    return d - (d % 2)


def vech_to_matrix(vals: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    for idx, (i, j) in enumerate(_vech_indices(n)):
        out[i, j] = vals[idx]
        out[j, i] = vals[idx]
    return out


@dataclass
class CertificateReport:
    ok: bool
    max_coeff_error: float
    min_eig_main: float
    min_eig_mult: float


def validate_certificate(program: SosProgram, v: np.ndarray,
                         coeff_tol: float = 1e-6, eig_floor_tol: float = -1e-7,
                         ) -> CertificateReport:
    """Re-validate the solver's answer: coefficients must match, Grams must be PSD."""
    u = v[program.u_slice]
    Q = vech_to_matrix(v[program.q_slice], program.basis_main.size)
    S = vech_to_matrix(v[program.s_slice], program.basis_mult.size)
    target = program.constraint.at_input(u) - program.basis_mult.gram_to_poly(S) * program.h_poly
    recon = program.basis_main.gram_to_poly(Q)
    diff = target - recon
    max_err = max((abs(cc) for cc in diff.terms.values()), default=0.0)
    eig_q = sdp.eig_floor(Q)
    eig_s = sdp.eig_floor(S)
    ok = max_err <= coeff_tol and eig_q >= eig_floor_tol and eig_s >= eig_floor_tol
    return CertificateReport(ok=ok, max_coeff_error=max_err,
                             min_eig_main=eig_q, min_eig_mult=eig_s)


@dataclass
class SosResult:
    status: str
    u: np.ndarray
    delta: float
    certificate: CertificateReport | None
    sdp_iterations: int
    program: SosProgram


def sos_filter_input(E: ExtentFunction, h: SafeFunction, alpha1: LinearK,
                     alpha2: LinearK, sys: ControlAffineSystem, x, k_input,
                     deg_s: int | None = None, input_bound: float | None = None,
                     max_iter: int = 200) -> SosResult:
    """Minimally invasive SOS filter at one state; certificate re-validated."""
    k_input = np.asarray(k_input, dtype=float)
    M = float(input_bound if input_bound is not None else sys.input_bound)
    cpoly = build_constraint_poly(E, h, alpha1, alpha2, sys, x)
    h_poly = h.as_poly()
    if deg_s is None:
        deg_s = default_multiplier_degree(cpoly, h_poly)
    program = assemble_sos_program(cpoly, h_poly, deg_s, k_input, M)

    v0 = np.zeros(program.problem.dim)
    v0[program.delta_index] = float(k_input @ k_input) + 1.0
    sol = sdp.solve_sdp(program.problem, max_iter=max_iter, v0=v0)
    u = sol.v[program.u_slice].copy()
    delta = float(sol.v[program.delta_index])
    if sol.status != sdp.OPTIMAL:
        return SosResult(status=sol.status, u=u, delta=delta, certificate=None,
                         sdp_iterations=sol.iterations, program=program)
    report = validate_certificate(program, sol.v)
    status = sol.status if report.ok else "certificate_rejected"
    return SosResult(status=status, u=u, delta=delta, certificate=report,
                     sdp_iterations=sol.iterations, program=program)
