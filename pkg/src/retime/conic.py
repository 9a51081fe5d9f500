"""Primal-dual interior-point solver for second-order cone programs.

Solves problems in the standard conic form

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K,

where K is a product of a nonnegative orthant of dimension ``nonneg``
followed by second-order (Lorentz) cones ``soc`` with
SOC(q) = {(u0, u1) : u0 >= ||u1||_2}. Rotated cones
{(x, y, z) : 2xy >= z^2, x >= 0, y >= 0} are handled by callers through
the linear map (x, y, z) -> ((x+y)/sqrt(2), (x-y)/sqrt(2), z).

The algorithm is a Mehrotra predictor-corrector path following method on
the homogeneous self-dual embedding with Nesterov-Todd scaling, so it
detects primal and dual infeasibility through certificates instead of
heuristics. Each Newton step factors the reduced symmetric system

    [ G' inv(W'W) G   A' ] [dx]   [ r1 ]
    [ A               0  ] [dy] = [ r2 ]

with sparse LU plus static regularization and iterative refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


@dataclass(frozen=True)
class ConeDims:
    """Cone composition: leading nonnegative rows, then SOC blocks."""

    nonneg: int
    soc: tuple[int, ...] = ()

    def __post_init__(self):
        if self.nonneg < 0 or any(q < 2 for q in self.soc):
            raise ValueError("invalid cone dimensions")
        object.__setattr__(self, "soc", tuple(int(q) for q in self.soc))

    @property
    def total(self) -> int:
        return self.nonneg + sum(self.soc)

    @property
    def degree(self) -> int:
        return self.nonneg + len(self.soc)


@dataclass
class ConeResult:
    status: str  # optimal | primal_infeasible | dual_infeasible | max_iter | numerical
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    s: np.ndarray | None = None
    pcost: float = np.nan
    dcost: float = np.nan
    gap: float = np.nan
    relgap: float = np.nan
    pres: float = np.nan
    dres: float = np.nan
    iterations: int = 0
    message: str = ""


class _BlockVec:
    """Views into a cone-ordered vector: LP head plus equal-size SOC body.

    All SOC blocks produced by this package have dimension 3, which lets
    every cone operation run vectorized over an (nsoc, 3) array. Mixed
    sizes fall back to a Python loop per block.
    """

    def __init__(self, dims: ConeDims):
        self.dims = dims
        self.l = dims.nonneg
        self.qs = dims.soc
        self.uniform = len(set(dims.soc)) <= 1
        self.q = dims.soc[0] if dims.soc else 0
        starts = np.cumsum([self.l] + list(self.qs))
        self.starts = starts[:-1]
        self.total = dims.total

    def lp(self, v: np.ndarray) -> np.ndarray:
        return v[: self.l]

    def soc(self, v: np.ndarray) -> np.ndarray:
        if not self.qs:
            return v[self.l :].reshape(0, 0)
        if not self.uniform:
            raise NotImplementedError("mixed SOC sizes not supported")
        return v[self.l :].reshape(len(self.qs), self.q)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.total)
        e[: self.l] = 1.0
        if self.qs:
            es = self.soc(e)
            es[:, 0] = 1.0
        return e


def _soc_residual(blocks: np.ndarray) -> np.ndarray:
    """u0 - ||u1|| per block; positive inside the cone."""
    return blocks[:, 0] - np.linalg.norm(blocks[:, 1:], axis=1)


def _max_step(bv: _BlockVec, p: np.ndarray, d: np.ndarray) -> float:
    """Largest step a with p + a*d staying in the cone (p interior)."""
    amax = np.inf
    lp_p, lp_d = bv.lp(p), bv.lp(d)
    neg = lp_d < 0
    if np.any(neg):
        amax = float(np.min(-lp_p[neg] / lp_d[neg]))
    if bv.qs:
        P, D = bv.soc(p), bv.soc(d)
        a2 = D[:, 0] ** 2 - np.einsum("ij,ij->i", D[:, 1:], D[:, 1:])
        a1 = 2.0 * (P[:, 0] * D[:, 0] - np.einsum("ij,ij->i", P[:, 1:], D[:, 1:]))
        a0 = P[:, 0] ** 2 - np.einsum("ij,ij->i", P[:, 1:], P[:, 1:])
        a0 = np.maximum(a0, 0.0)
        for k in range(len(P)):
            amax = min(amax, _quad_first_pos_root(a2[k], a1[k], a0[k]))
            if D[k, 0] < 0:
                amax = min(amax, -P[k, 0] / D[k, 0])
    return amax


def _quad_first_pos_root(a: float, b: float, c: float) -> float:
    """Smallest positive root of a*t^2 + b*t + c with c >= 0; inf if none."""
    if abs(a) < 1e-300:
        if b < 0:
            return -c / b
        return np.inf
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return np.inf if a > 0 else 0.0
    sq = np.sqrt(disc)
    r1 = (-b - sq) / (2.0 * a)
    r2 = (-b + sq) / (2.0 * a)
    roots = [r for r in (min(r1, r2), max(r1, r2)) if r > 1e-300]
    if not roots:
        return np.inf
    return roots[0]


class _Scaling:
    """Nesterov-Todd scaling W with lambda = W z = inv(W) s."""

    def __init__(self, bv: _BlockVec, s: np.ndarray, z: np.ndarray):
        self.bv = bv
        self.w_lp = np.sqrt(bv.lp(s) / bv.lp(z))
        self.lam_lp = np.sqrt(bv.lp(s) * bv.lp(z))
        if bv.qs:
            S, Z = bv.soc(s), bv.soc(z)
            srho = np.sqrt(S[:, 0] ** 2 - np.einsum("ij,ij->i", S[:, 1:], S[:, 1:]))
            zrho = np.sqrt(Z[:, 0] ** 2 - np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:]))
            sb = S / srho[:, None]
            zb = Z / zrho[:, None]
            dot = sb[:, 0] * zb[:, 0] - np.einsum("ij,ij->i", sb[:, 1:], zb[:, 1:])
            gamma = np.sqrt(0.5 * (1.0 + dot))
            wb = np.empty_like(sb)
            wb[:, 0] = (sb[:, 0] + zb[:, 0]) / (2.0 * gamma)
            wb[:, 1:] = (sb[:, 1:] - zb[:, 1:]) / (2.0 * gamma[:, None])
            self.wb = wb
            self.eta = np.sqrt(srho / zrho)
            lam = self.apply(z)
            self.lam_soc = bv.soc(lam)
        else:
            self.wb = np.zeros((0, 0))
            self.eta = np.zeros(0)
            self.lam_soc = np.zeros((0, 0))

    def lam(self) -> np.ndarray:
        out = np.empty(self.bv.total)
        self.bv.lp(out)[:] = self.lam_lp
        if self.bv.qs:
            self.bv.soc(out)[:] = self.lam_soc
        return out

    def _apply_soc(self, U: np.ndarray, inverse: bool) -> np.ndarray:
        wb, eta = self.wb, self.eta
        w1 = -wb[:, 1:] if inverse else wb[:, 1:]
        dot = np.einsum("ij,ij->i", w1, U[:, 1:])
        out = np.empty_like(U)
        out[:, 0] = wb[:, 0] * U[:, 0] + dot
        coef = U[:, 0] + dot / (1.0 + wb[:, 0])
        out[:, 1:] = U[:, 1:] + coef[:, None] * w1
        scale = 1.0 / eta if inverse else eta
        return out * scale[:, None]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """W u."""
        out = np.empty(self.bv.total)
        self.bv.lp(out)[:] = self.w_lp * self.bv.lp(u)
        if self.bv.qs:
            self.bv.soc(out)[:] = self._apply_soc(self.bv.soc(u), inverse=False)
        return out

    def apply_inv(self, u: np.ndarray) -> np.ndarray:
        """inv(W) u (W is symmetric, so this is also inv(W') u)."""
        out = np.empty(self.bv.total)
        self.bv.lp(out)[:] = self.bv.lp(u) / self.w_lp
        if self.bv.qs:
            self.bv.soc(out)[:] = self._apply_soc(self.bv.soc(u), inverse=True)
        return out

    def wtw_inv_matrix(self) -> sp.spmatrix:
        """inv(W'W) as a sparse block-diagonal matrix."""
        bv = self.bv
        rows, cols, vals = [], [], []
        if bv.l:
            idx = np.arange(bv.l)
            rows.append(idx)
            cols.append(idx)
            vals.append(1.0 / self.w_lp**2)
        if bv.qs:
            q = bv.q
            wb, eta = self.wb, self.eta
            nsoc = len(wb)
            # inv(W'W) = eta^-2 * (2 J wb wb' J - J)
            jwb = wb.copy()
            jwb[:, 1:] *= -1.0
            blocks = 2.0 * np.einsum("ni,nj->nij", jwb, jwb)
            blocks[:, 0, 0] -= 1.0
            blocks[:, np.arange(1, q), np.arange(1, q)] += 1.0
            blocks /= (eta**2)[:, None, None]
            base = bv.l + q * np.arange(nsoc)
            r = (base[:, None, None] + np.arange(q)[:, None]).ravel()
            c = (base[:, None, None] + np.arange(q)[None, :]).ravel()
            rows.append(np.broadcast_to(r, blocks.size).ravel()[: blocks.size])
            cols.append(c)
            vals.append(blocks.ravel())
        rows = np.concatenate([np.asarray(r).ravel() for r in rows])
        cols = np.concatenate([np.asarray(c).ravel() for c in cols])
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (rows, cols)), shape=(bv.total, bv.total))


def _jordan_prod(bv: _BlockVec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty(bv.total)
    bv.lp(out)[:] = bv.lp(u) * bv.lp(v)
    if bv.qs:
        U, V = bv.soc(u), bv.soc(v)
        O = bv.soc(out)
        O[:, 0] = np.einsum("ij,ij->i", U, V)
        O[:, 1:] = U[:, 0][:, None] * V[:, 1:] + V[:, 0][:, None] * U[:, 1:]
    return out


def _jordan_solve(bv: _BlockVec, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve lam o u = v for u."""
    out = np.empty(bv.total)
    bv.lp(out)[:] = bv.lp(v) / bv.lp(lam)
    if bv.qs:
        L, V = bv.soc(lam), bv.soc(v)
        O = bv.soc(out)
        det = L[:, 0] ** 2 - np.einsum("ij,ij->i", L[:, 1:], L[:, 1:])
        u0 = (L[:, 0] * V[:, 0] - np.einsum("ij,ij->i", L[:, 1:], V[:, 1:])) / det
        O[:, 0] = u0
        O[:, 1:] = (V[:, 1:] - u0[:, None] * L[:, 1:]) / L[:, 0][:, None]
    return out


def _cone_violation(bv: _BlockVec, v: np.ndarray) -> float:
    """How far v is from K (0 when inside)."""
    worst = 0.0
    if bv.l:
        worst = max(worst, float(-np.min(bv.lp(v))) if bv.l else 0.0)
    if bv.qs:
        res = _soc_residual(bv.soc(v))
        worst = max(worst, float(-np.min(res)))
    return max(worst, 0.0)


class _KKT:
    """Factored reduced KKT system for one NT scaling."""

    def __init__(self, G, A, scaling: _Scaling, reg: float):
        self.G = G
        self.A = A
        self.n = G.shape[1]
        self.p = A.shape[0] if A is not None else 0
        hinv = scaling.wtw_inv_matrix()
        self.hinv = hinv
        hg = hinv @ G
        self.hg = hg
        Q = (G.T @ hg).tocsc()
        if self.p:
            M = sp.bmat([[Q, A.T], [A, None]], format="csc")
        else:
            M = Q
        d = np.concatenate([np.full(self.n, reg), np.full(self.p, -reg)])
        self.M = M
        self.lu = splu(M + sp.diags(d), permc_spec="COLAMD")

    def solve(self, a1: np.ndarray, a2: np.ndarray, a3: np.ndarray, refine: int = 1):
        """Solve the 3x3 KKT system
        [0 A' G'; A 0 0; G 0 -W'W] [dx dy dz] = [a1 a2 a3].
        """
        rhs = np.concatenate([a1 + self.G.T @ (self.hinv @ a3), a2])
        sol = self.lu.solve(rhs)
        for _ in range(refine):
            r = rhs - self.M @ sol
            sol = sol + self.lu.solve(r)
        dx = sol[: self.n]
        dy = sol[self.n :]
        dz = self.hinv @ (self.G @ dx - a3)
        return dx, dy, dz


def solve_cone_program(
    c,
    G,
    h,
    dims: ConeDims,
    A=None,
    b=None,
    *,
    max_iter: int = 100,
    feastol: float = 1e-8,
    abstol: float = 1e-8,
    reltol: float = 1e-8,
    reg: float = 1e-10,
) -> ConeResult:
    """Solve the conic program; see module docstring for the form."""
    c = np.asarray(c, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float).reshape(-1)
    n = len(c)
    m = len(h)
    if dims.total != m:
        raise ValueError(f"cone dims total {dims.total} != rows of G {m}")
    G = sp.csr_matrix(G, shape=(m, n), dtype=float)
    if A is not None:
        A = sp.csr_matrix(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape != (len(b), n):
            raise ValueError("A/b shape mismatch")
    else:
        b = np.zeros(0)

    bv = _BlockVec(dims)
    e = bv.identity()
    nu = dims.degree + 1

    norm_b = 1.0 + np.linalg.norm(b)
    norm_h = 1.0 + np.linalg.norm(h)
    norm_c = 1.0 + np.linalg.norm(c)

    def kkt_with_identity():
        ident = _Scaling(bv, e.copy(), e.copy())
        return _KKT(G, A, ident, reg)

    # initial point: least-norm primal/dual guesses pushed into the cone
    try:
        kkt0 = kkt_with_identity()
        x, _, zh = kkt0.solve(np.zeros(n), b, h, refine=1)
        s = -zh
        viol = _cone_violation(bv, s)
        if viol > 0 or s @ e == 0:
            s = s + (1.0 + viol) * e
        _, y, z = kkt0.solve(-c, np.zeros(len(b)), np.zeros(m), refine=1)
        viol = _cone_violation(bv, z)
        if viol > 0 or z @ e == 0:
            z = z + (1.0 + viol) * e
    except Exception:
        x = np.zeros(n)
        y = np.zeros(len(b))
        s = e.copy()
        z = e.copy()
    tau, kappa = 1.0, 1.0

    best = ConeResult(status="numerical", message="no iterations")
    step_fail = 0

    for it in range(max_iter):
        # residuals of the self-dual embedding
        rx = G.T @ z + c * tau + (A.T @ y if A is not None else 0.0)
        ry = (A @ x if A is not None else np.zeros(0)) - b * tau
        rz = G @ x + s - h * tau
        rt = float(c @ x + b @ y + h @ z + kappa)

        pcost = float(c @ x) / tau
        dcost = -float(b @ y + h @ z) / tau
        gap = float(s @ z) / tau**2
        relgap = gap / max(1.0, abs(pcost))
        pres = max(
            np.linalg.norm(ry) / norm_b if len(b) else 0.0,
            np.linalg.norm(rz) / norm_h,
        ) / tau
        dres = np.linalg.norm(rx) / norm_c / tau

        best = ConeResult(
            status="max_iter",
            x=x / tau,
            y=y / tau,
            z=z / tau,
            s=s / tau,
            pcost=pcost,
            dcost=dcost,
            gap=gap,
            relgap=relgap,
            pres=pres,
            dres=dres,
            iterations=it,
        )

        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            best.status = "optimal"
            return best

        # infeasibility certificates on the normalized iterate
        by_hz = float(b @ y + h @ z)
        if by_hz < 0:
            scale = -1.0 / by_hz
            res = np.linalg.norm(G.T @ (z * scale) + (A.T @ (y * scale) if A is not None else 0.0))
            if res <= feastol * norm_c and _cone_violation(bv, z * scale) <= feastol:
                best.status = "primal_infeasible"
                best.y = y * scale
                best.z = z * scale
                best.message = "primal infeasibility certificate found"
                return best
        cx = float(c @ x)
        if cx < 0:
            scale = -1.0 / cx
            xc = x * scale
            res_eq = np.linalg.norm(A @ xc) if A is not None else 0.0
            sc = -(G @ xc)
            if res_eq <= feastol * norm_b and _cone_violation(bv, sc) <= feastol * norm_h:
                best.status = "dual_infeasible"
                best.x = xc
                best.message = "dual infeasibility certificate found"
                return best

        scaling = _Scaling(bv, s, z)
        lam = scaling.lam()
        mu = (float(s @ z) + tau * kappa) / nu
        try:
            kkt = _KKT(G, A, scaling, reg)
            vx, vy, vz = kkt.solve(-c, b, h)
        except Exception as exc:  # factorization breakdown
            best.status = "numerical"
            best.message = f"KKT factorization failed: {exc}"
            return best
        cv = float(c @ vx + b @ vy + h @ vz)

        def direction(ds_rhs: np.ndarray, dk_rhs: float, sigma: float):
            dpi = _jordan_solve(bv, lam, ds_rhs)
            a1 = -(1.0 - sigma) * rx
            a2 = -(1.0 - sigma) * ry
            a3 = -(1.0 - sigma) * rz - scaling.apply(dpi)
            ux, uy, uz = kkt.solve(a1, a2, a3)
            num = -(1.0 - sigma) * rt - dk_rhs / tau - float(c @ ux + b @ uy + h @ uz)
            den = cv - kappa / tau
            if abs(den) < 1e-300:
                raise FloatingPointError("degenerate tau direction")
            dtau = num / den
            dx = ux + dtau * vx
            dy = uy + dtau * vy
            dz = uz + dtau * vz
            ds = scaling.apply(dpi) - scaling.apply(scaling.apply(dz))
            dk = (dk_rhs - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dk

        try:
            # predictor
            ds_rhs = -_jordan_prod(bv, lam, lam)
            dxa, dya, dza, dsa, dta, dka = direction(ds_rhs, -tau * kappa, 0.0)
            alpha_a = _step_length(bv, s, z, tau, kappa, dsa, dza, dta, dka)
            sigma = (1.0 - min(alpha_a, 1.0)) ** 3
            # corrector
            corr = _jordan_prod(bv, scaling.apply_inv(dsa), scaling.apply(dza))
            ds_rhs = -_jordan_prod(bv, lam, lam) - corr + sigma * mu * e
            dk_rhs = -tau * kappa - dta * dka + sigma * mu
            dx, dy, dz, ds, dt, dk = direction(ds_rhs, dk_rhs, sigma)
        except FloatingPointError as exc:
            best.status = "numerical"
            best.message = str(exc)
            return best

        alpha = 0.99 * _step_length(bv, s, z, tau, kappa, ds, dz, dt, dk)
        alpha = min(alpha, 1.0)
        if alpha <= 1e-13:
            step_fail += 1
            if step_fail >= 2:
                best.status = "numerical"
                best.message = "step length collapsed"
                return best
        else:
            step_fail = 0
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dt
        kappa += alpha * dk

    best.message = "iteration limit reached"
    return best


def _step_length(bv, s, z, tau, kappa, ds, dz, dt, dk) -> float:
    alpha = min(_max_step(bv, s, ds), _max_step(bv, z, dz))
    if dt < 0:
        alpha = min(alpha, -tau / dt)
    if dk < 0:
        alpha = min(alpha, -kappa / dk)
    return alpha


ROT2SOC = np.array(
    [
        [1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0), 0.0],
        [1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0), 0.0],
        [0.0, 0.0, 1.0],
    ]
)
"""Linear map sending a rotated-cone triple (x, y, z) into SOC coordinates."""
