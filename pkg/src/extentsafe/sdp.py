"""Small dense semidefinite programming.

Problem form: minimize c'v subject to A v = b and, per block,
F0 + sum_i v_i F_i positive semidefinite. The equality system is eliminated
up front by a rank-revealing row reduction plus a null-space
parameterization (inconsistent systems are reported infeasible outright, and
fully pinned problems collapse to an eigenvalue check). The reduced
LMI-only problem is solved by an infeasible-start primal-dual
path-following method with Nesterov-Todd scaling and Mehrotra
predictor-corrector steps; the Newton system is reduced to a dense
positive definite system and factored by Cholesky. Built for desk-scale
problems (block sizes up to ~32, a few dozen decisions), which is all the
sum-of-squares filter ever produces.

A plain-text problem dump/load round-trip is provided so assembled programs
can be cross-checked against external solvers out-of-band; the schema is
documented on ``dump_problem``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular


class ContractViolation(ValueError):
    pass


OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class PsdBlock:
    """Affine map v -> F0 + sum_i v_i Fs[i] into symmetric matrices."""

    F0: np.ndarray               # (s, s)
    Fs: np.ndarray               # (dim, s, s)

    @property
    def size(self) -> int:
        return self.F0.shape[0]


@dataclass(frozen=True)
class SdpProblem:
    dim: int
    c: np.ndarray
    A: np.ndarray                # (p, dim)
    b: np.ndarray                # (p,)
    blocks: tuple

    @classmethod
    def build(cls, c, A, b, blocks) -> "SdpProblem":
        c = np.asarray(c, dtype=float)
        dim = c.size
        A = np.asarray(A, dtype=float).reshape(-1, dim) if np.size(A) else np.zeros((0, dim))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ContractViolation("equality system shape mismatch")
        blks = []
        for blk in blocks:
            F0 = np.asarray(blk.F0, dtype=float)
            Fs = np.asarray(blk.Fs, dtype=float)
            s = F0.shape[0]
            if F0.shape != (s, s) or Fs.shape != (dim, s, s):
                raise ContractViolation("block shape mismatch")
            if not np.allclose(F0, F0.T, atol=1e-12):
                raise ContractViolation("F0 must be symmetric")
            if not np.allclose(Fs, np.transpose(Fs, (0, 2, 1)), atol=1e-12):
                raise ContractViolation("all Fi must be symmetric")
            if s > 32:
                raise ContractViolation("block sizes above 32 are out of scope")
            blks.append(PsdBlock(F0=0.5 * (F0 + F0.T), Fs=0.5 * (Fs + np.transpose(Fs, (0, 2, 1)))))
        return cls(dim=dim, c=c, A=A, b=b, blocks=tuple(blks))


@dataclass
class SdpSolution:
    status: str
    v: np.ndarray
    objective: float
    gap: float
    min_eigs: list
    iterations: int
    history: list = field(default_factory=list)  # (primal, dual, gap, pinf, dinf)


def independent_rows(A: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Select a maximal independent subset of equality rows by row elimination.

    Returns (A', b', consistent); consistent is False when a dependent row
    contradicts the rows it depends on (0 = nonzero), i.e. the system is
    infeasible outright.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return A, b, True
    work = np.hstack([A, b[:, None]]).astype(float)
    scale = max(1.0, float(np.abs(work).max()))
    kept = []
    basis: list = []
    for i in range(work.shape[0]):
        row = work[i].copy()
        for piv_col, piv_row in basis:
            row = row - piv_row * row[piv_col]
        lead = np.argmax(np.abs(row[:-1]))
        if abs(row[lead]) > tol * scale:
            kept.append(i)
            basis.append((lead, row / row[lead]))
        elif abs(row[-1]) > tol * scale:
            return A[kept], b[kept], False
    return A[kept], b[kept], True


def _nt_scaling_inv(Lx: np.ndarray, Lz: np.ndarray) -> np.ndarray:
    """Inverse of the Nesterov-Todd scaling point (W Z W = X) from Cholesky factors."""
    _, s, Vt = np.linalg.svd(Lz.T @ Lx)
    inv_core = solve_triangular(Lx, Vt.T, trans="T", lower=True)
    Winv = (inv_core * s) @ inv_core.T
    return 0.5 * (Winv + Winv.T)


def _chol_with_jitter(H: np.ndarray) -> np.ndarray:
    """Cholesky with escalating diagonal jitter; raises only if all attempts fail."""
    scale = max(1.0, float(np.diag(H).max(initial=0.0)))
    for eps in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            return np.linalg.cholesky(H + eps * scale * np.eye(H.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("Schur complement is numerically indefinite")


def _backtrack_into_cone(mats: list, dirs: list, alpha: float):
    """Shrink alpha until every updated block admits a Cholesky factorization.

    The fraction-to-boundary rule can overshoot by rounding error at extreme
    conditioning; a short geometric backtrack restores strict definiteness.
    """
    for _ in range(40):
        ok = True
        for Ml, Dl in zip(mats, dirs):
            try:
                np.linalg.cholesky(_sym(Ml + alpha * Dl))
            except np.linalg.LinAlgError:
                ok = False
                break
        if ok:
            return alpha
        alpha *= 0.7
        if alpha < 1e-16:
            return None
    return None


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with X + alpha D still PSD, given X's Cholesky factor L."""
    Y = solve_triangular(L, solve_triangular(L, D, lower=True).T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (Y + Y.T)).min()
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _affine_value(blk: PsdBlock, vv: np.ndarray) -> np.ndarray:
    return blk.F0 + np.einsum("i,ijk->jk", vv, blk.Fs)


def _finish(problem: SdpProblem, status: str, v: np.ndarray, gap: float,
            iterations: int, history: list) -> SdpSolution:
    min_eigs = [float(np.linalg.eigvalsh(_affine_value(blk, v)).min())
                for blk in problem.blocks]
    return SdpSolution(status=status, v=v, objective=float(problem.c @ v), gap=gap,
                       min_eigs=min_eigs, iterations=iterations, history=history)


def solve_sdp(problem: SdpProblem, tol_feas: float = 1e-8, tol_gap: float = 1e-8,
              max_iter: int = 200, v0=None) -> SdpSolution:
    """Interior-point solve after equality elimination; see the module docstring."""
    q = problem.dim
    if not problem.blocks:
        raise ContractViolation("problem has no PSD blocks")
    A, b, consistent = independent_rows(problem.A, problem.b)
    if not consistent:
        return SdpSolution(INFEASIBLE, np.zeros(q), math.inf, math.inf,
                           [float("nan")] * len(problem.blocks), 0)

    # null-space parameterization v = v_part + N w
    if A.shape[0]:
        v_part, *_ = np.linalg.lstsq(A, b, rcond=None)
        _, svals, Vt = np.linalg.svd(A)
        rank = int(np.sum(svals > 1e-12 * max(1.0, svals[0])))
        N = Vt[rank:].T
    else:
        v_part = np.zeros(q)
        N = np.eye(q)

    if N.shape[1] == 0:
        # every decision is pinned by the equalities: feasibility is an eigenvalue check
        eigs = [float(np.linalg.eigvalsh(_affine_value(blk, v_part)).min())
                for blk in problem.blocks]
        status = OPTIMAL if min(eigs) >= -1e-9 else INFEASIBLE
        return _finish(problem, status, v_part, 0.0, 0, [])

    red_c = N.T @ problem.c
    red_blocks = [PsdBlock(F0=_affine_value(blk, v_part),
                           Fs=np.einsum("ji,jkl->ikl", N, blk.Fs))
                  for blk in problem.blocks]
    obj_offset = float(problem.c @ v_part)

    # normalize the objective so termination behaves identically under scaling
    obj_scale = float(np.abs(red_c).max(initial=0.0))
    if obj_scale <= 1e-300:
        obj_scale = 1.0

    w0 = None
    if v0 is not None:
        v0 = np.asarray(v0, dtype=float)
        if v0.shape != (q,):
            raise ContractViolation("v0 has the wrong shape")
        w0 = N.T @ (v0 - v_part)

    w, gap, status, iters, history = _solve_lmi(red_c / obj_scale, red_blocks,
                                                obj_offset / obj_scale,
                                                tol_feas, tol_gap, max_iter, w0)
    history = [(p * obj_scale, d * obj_scale, g * obj_scale, pi, di)
               for (p, d, g, pi, di) in history]
    return _finish(problem, status, v_part + N @ w, gap * obj_scale, iters, history)


def _solve_lmi(c: np.ndarray, blocks: list, obj_offset: float, tol_feas: float,
               tol_gap: float, max_iter: int, w0=None):
    """Path-following on min c'w s.t. G0 + sum w_i G_i >= 0 per block.

    Primal slack X tracks the affine map exactly once its residual is
    absorbed; the dual matrices Z certify optimality through the gap <X, Z>
    and infeasibility through a diverging Farkas-type ray.

    Termination is two-tier. The strict tier targets the requested
    tolerances (primal feasibility and relative gap at tol_feas/tol_gap,
    dual stationarity at max(tol_feas, 1e-7)). Problems whose optimal face
    is degenerate hit a conditioning floor before that; when progress
    stalls, the best iterate is accepted if it meets the accuracy the
    solution contract promises: primal feasibility at tol_feas, relative
    gap at 1e-6, dual stationarity at 1e-4. The best iterate by
    worst-residual merit is the one returned either way.
    """
    q = c.size
    nb = len(blocks)
    total_dim = sum(blk.size for blk in blocks)
    scale_c = 1.0 + float(np.abs(c).max(initial=0.0))
    scale_f = 1.0 + max(float(np.abs(blk.F0).max(initial=0.0)) for blk in blocks)
    tol_dual = max(tol_feas, 1e-7)

    w = np.zeros(q) if w0 is None else np.asarray(w0, dtype=float).copy()
    X, Z = [], []
    for blk in blocks:
        Fw = _affine_value(blk, w)
        lam = float(np.linalg.eigvalsh(Fw).min())
        shift = 0.0 if lam > 1e-3 * scale_f else (0.1 * scale_f - 1.5 * min(lam, 0.0))
        X.append(Fw + shift * np.eye(blk.size))
        Z.append(scale_c * np.eye(blk.size))

    # Gram matrix of the adjoint, used to re-project dual directions so the
    # dual equation holds exactly regardless of scaling conditioning
    P = np.zeros((q, q))
    for l in range(nb):
        P += np.einsum("iab,jab->ij", blocks[l].Fs, blocks[l].Fs)
    try:
        P_chol = _chol_with_jitter(P)
    except np.linalg.LinAlgError:
        P_chol = None

    def adjoint(Zs) -> np.ndarray:
        out = np.zeros(q)
        for l in range(nb):
            out += np.einsum("ijk,jk->i", blocks[l].Fs, Zs[l])
        return out

    def restore_dual(Zs, resid):
        """Project Z onto the dual-feasibility manifold when the nudge is small
        and keeps every block positive definite; otherwise leave Z alone."""
        if P_chol is None:
            return Zs
        lam = np.linalg.solve(P_chol.T, np.linalg.solve(P_chol, resid))
        fixed = [_sym(Zs[l] + np.einsum("i,ijk->jk", lam, blocks[l].Fs))
                 for l in range(nb)]
        for Fl in fixed:
            try:
                np.linalg.cholesky(Fl)
            except np.linalg.LinAlgError:
                return Zs
        return fixed

    history = []
    status = MAX_ITERATIONS
    best = None          # (strict merit, w, gap)
    best_inv = None      # (invariant-tier merit, w, gap)
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        r_x = [_affine_value(blk, w) - X[l] for l, blk in enumerate(blocks)]
        r_d = c - adjoint(Z)
        gap = sum(float(np.tensordot(X[l], Z[l])) for l in range(nb))
        mu = gap / total_dim
        primal_obj = obj_offset + float(c @ w)
        dual_obj = obj_offset - sum(float(np.tensordot(blocks[l].F0, Z[l]))
                                    for l in range(nb))
        pinf = max(float(np.abs(rx).max(initial=0.0)) for rx in r_x)
        dinf = float(np.abs(r_d).max(initial=0.0))
        history.append((primal_obj, dual_obj, gap, pinf, dinf))

        merit = max(pinf / (tol_feas * scale_f), dinf / (tol_dual * scale_c),
                    gap / (tol_gap * (1.0 + abs(primal_obj))))
        if best is None or merit < 0.99 * best[0]:
            best = (merit, w.copy(), gap)
            stall = 0
        else:
            stall += 1
        # the degenerate-face tier: the accuracy the solution contract promises
        merit_inv = max(pinf / (tol_feas * scale_f), dinf / (1e-4 * scale_c),
                        gap / (1e-6 * (1.0 + abs(primal_obj))))
        if best_inv is None or merit_inv < best_inv[0]:
            best_inv = (merit_inv, w.copy(), gap)

        if merit <= 1.0:
            status = OPTIMAL
            break
        # conditioning floor reached; the best iterates decide below
        if stall >= 15 or (stall >= 5 and best_inv is not None and best_inv[0] <= 1.0):
            break
        # Farkas-type ray: Z blowing up while it keeps the adjoint bounded and
        # pushes the F0 pairing negative certifies primal infeasibility
        znorm = sum(float(np.linalg.norm(Zl)) for Zl in Z)
        if znorm > 1.0 / tol_gap and (dual_obj - obj_offset) / znorm > 1e-9 \
                and dinf <= 1e-4 * scale_c * znorm:
            status = INFEASIBLE
            break
        if primal_obj < -1.0 / tol_gap and pinf <= 1e-4 * scale_f:
            status = UNBOUNDED
            break

        try:
            Lxs = [np.linalg.cholesky(X[l]) for l in range(nb)]
            Lzs = [np.linalg.cholesky(Z[l]) for l in range(nb)]
            Winvs, Xinvs, scaled_Fs = [], [], []
            for l in range(nb):
                Winvs.append(_nt_scaling_inv(Lxs[l], Lzs[l]))
                inv_l = solve_triangular(Lxs[l], np.eye(X[l].shape[0]), lower=True)
                Xinvs.append(inv_l.T @ inv_l)

            H = np.zeros((q, q))
            for l in range(nb):
                G = np.einsum("ab,ibc,cd->iad", Winvs[l], blocks[l].Fs, Winvs[l])
                scaled_Fs.append(G)
                H += np.einsum("iab,jab->ij", blocks[l].Fs, G)
            H_chol = _chol_with_jitter(H)

            def h_solve_refined(rhs):
                dw = np.linalg.solve(H_chol.T, np.linalg.solve(H_chol, rhs))
                for _ in range(2):
                    resid = rhs - H @ dw
                    dw = dw + np.linalg.solve(H_chol.T, np.linalg.solve(H_chol, resid))
                return dw

            def newton(sigma_mu):
                # Winv (sigma*mu*Zinv - X) Winv == sigma*mu*Xinv - Z exactly;
                # computing it that way avoids the cancellation that otherwise
                # floors the dual residual at high conditioning
                Ts = [sigma_mu * Xinvs[l] - Z[l] - Winvs[l] @ r_x[l] @ Winvs[l]
                      for l in range(nb)]
                rhs = -r_d.copy()
                for l in range(nb):
                    rhs += np.einsum("ijk,jk->i", blocks[l].Fs, Ts[l])
                dw = h_solve_refined(rhs)
                dX = [np.einsum("i,ijk->jk", dw, blocks[l].Fs) + r_x[l]
                      for l in range(nb)]
                dZ = [_sym(Ts[l] - np.einsum("i,ijk->jk", dw, scaled_Fs[l]))
                      for l in range(nb)]
                return dw, dX, dZ

            dw_a, dX_a, dZ_a = newton(0.0)
            ap = min(1.0, *[_max_step(X[l], dX_a[l]) for l in range(nb)])
            ad = min(1.0, *[_max_step(Z[l], dZ_a[l]) for l in range(nb)])
            gap_aff = sum(float(np.tensordot(X[l] + ap * dX_a[l], Z[l] + ad * dZ_a[l]))
                          for l in range(nb))
            sigma = min(0.999, max(1e-8, (max(gap_aff, 0.0) / gap) ** 3))
            # keep centering pressure while the primal iterate is still inconsistent
            if pinf > max(tol_feas * scale_f, 1e-3 * mu):
                sigma = max(sigma, 0.5)

            dw, dX, dZ = newton(sigma * mu)
        except np.linalg.LinAlgError:
            status = MAX_ITERATIONS
            break

        ap = min(1.0, *[0.98 * _max_step(X[l], dX[l]) for l in range(nb)])
        ad = min(1.0, *[0.98 * _max_step(Z[l], dZ[l]) for l in range(nb)])
        ap = _backtrack_into_cone(X, dX, ap)
        ad = _backtrack_into_cone(Z, dZ, ad)
        if ap is None or ad is None:
            break  # cannot move without leaving the cone; best iterate decides
        w = w + ap * dw
        for l in range(nb):
            X[l] = _sym(X[l] + ap * dX[l])
            Z[l] = _sym(Z[l] + ad * dZ[l])
        resid = c - adjoint(Z)
        if 1e-12 * scale_c < float(np.abs(resid).max(initial=0.0)) <= 1e-5 * scale_c:
            Z = restore_dual(Z, resid)
        if not np.all(np.isfinite(w)):
            status = MAX_ITERATIONS
            break

    if status == OPTIMAL or (best is not None and best[0] <= 1.0):
        return best[1], best[2], OPTIMAL, it, history
    if best_inv is not None and best_inv[0] <= 1.0:
        return best_inv[1], best_inv[2], OPTIMAL, it, history
    gap = sum(float(np.tensordot(X[l], Z[l])) for l in range(nb))
    return w, gap, status, it, history


# ---------------------------------------------------------------------------
# symmetric eigenvalues by cyclic Jacobi (used for certificate validation)
# ---------------------------------------------------------------------------


def jacobi_eigenvalues(M: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ContractViolation("matrix must be square")
    if not np.allclose(M, M.T, atol=1e-10 * max(1.0, float(np.abs(M).max()))):
        raise ContractViolation("matrix must be symmetric")
    A = 0.5 * (M + M.T)
    if n == 1:
        return A[0].copy()
    scale = max(1.0, float(np.abs(A).max()))
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, (A * A).sum() - (np.diag(A) ** 2).sum()))
        if off <= tol * scale:
            break
        for pidx in range(n - 1):
            for qidx in range(pidx + 1, n):
                apq = A[pidx, qidx]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[qidx, qidx] - A[pidx, pidx]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cth = 1.0 / math.sqrt(t * t + 1.0)
                sth = t * cth
                rot = np.eye(n)
                rot[pidx, pidx] = cth
                rot[qidx, qidx] = cth
                rot[pidx, qidx] = sth
                rot[qidx, pidx] = -sth
                A = rot.T @ A @ rot
                A = 0.5 * (A + A.T)
    return np.sort(np.diag(A))


def eig_floor(M: np.ndarray, tol: float = 1e-12) -> float:
    """Minimum eigenvalue of a symmetric matrix (cyclic Jacobi)."""
    return float(jacobi_eigenvalues(M, tol=tol)[0])


# ---------------------------------------------------------------------------
# plain-text problem exchange
# ---------------------------------------------------------------------------

_DUMP_MAGIC = "extentsafe-sdp 1"


def dump_problem(problem: SdpProblem) -> str:
    """Serialize a problem to a plain-text format.

    Schema (all floats printed with 17 significant digits):

        extentsafe-sdp 1
        dim <q>
        c <q floats>
        equalities <p>
        <p lines:  b_i nnz  col:val ...>
        blocks <L>
        <per block: "block <size> <nterms>" then nterms lines "i r c val",
         where i = -1 addresses F0, 0 <= r <= c < size, symmetric completion
         implied>
    """
    out = [_DUMP_MAGIC, f"dim {problem.dim}",
           "c " + " ".join(f"{x:.17g}" for x in problem.c),
           f"equalities {problem.A.shape[0]}"]
    for i in range(problem.A.shape[0]):
        nz = np.nonzero(problem.A[i])[0]
        entries = " ".join(f"{j}:{problem.A[i, j]:.17g}" for j in nz)
        out.append(f"{problem.b[i]:.17g} {len(nz)} {entries}".rstrip())
    out.append(f"blocks {len(problem.blocks)}")
    for blk in problem.blocks:
        lines = []
        for idx in range(-1, problem.dim):
            F = blk.F0 if idx < 0 else blk.Fs[idx]
            for r in range(blk.size):
                for cc in range(r, blk.size):
                    if F[r, cc] != 0.0:
                        lines.append(f"{idx} {r} {cc} {F[r, cc]:.17g}")
        out.append(f"block {blk.size} {len(lines)}")
        out.extend(lines)
    return "\n".join(out) + "\n"


def load_problem(text: str) -> SdpProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _DUMP_MAGIC:
        raise ContractViolation("not an extentsafe SDP dump")
    pos = 1

    def take():
        nonlocal pos
        ln = lines[pos]
        pos += 1
        return ln

    dim = int(take().split()[1])
    c = np.array([float(t) for t in take().split()[1:]])
    if c.size != dim:
        raise ContractViolation("objective length mismatch")
    n_eq = int(take().split()[1])
    A = np.zeros((n_eq, dim))
    b = np.zeros(n_eq)
    for i in range(n_eq):
        parts = take().split()
        b[i] = float(parts[0])
        for ent in parts[2:]:
            j, val = ent.split(":")
            A[i, int(j)] = float(val)
    n_blocks = int(take().split()[1])
    blocks = []
    for _ in range(n_blocks):
        header = take().split()
        size, nterms = int(header[1]), int(header[2])
        F0 = np.zeros((size, size))
        Fs = np.zeros((dim, size, size))
        for _ in range(nterms):
            idx_s, r_s, c_s, val_s = take().split()
            idx, r, cc, val = int(idx_s), int(r_s), int(c_s), float(val_s)
            tgt = F0 if idx < 0 else Fs[idx]
            tgt[r, cc] = val
            tgt[cc, r] = val
        blocks.append(PsdBlock(F0=F0, Fs=Fs))
    return SdpProblem.build(c, A, b, blocks)
