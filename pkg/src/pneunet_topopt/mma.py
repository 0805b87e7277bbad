"""Method of Moving Asymptotes.

Solves problems of the form

    minimize    f0(x) + a0 z + sum_i (c_i y_i + d_i y_i^2 / 2)
    subject to  f_i(x) - a_i z - y_i <= 0,   i = 1..m
                xmin <= x <= xmax,  y >= 0,  z >= 0

by a sequence of convex separable approximations.  Each subproblem is solved
by a primal-dual interior-point Newton method on its KKT conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import NumericalError

ASY_INIT = 0.5
ASY_INCR = 1.2
ASY_DECR = 0.7
ALBEFA = 0.1
RAA0 = 1e-5
ASY_MIN = 1e-4  # closest an asymptote may get to x, as a fraction of the box


@dataclass
class MmaState:
    low: np.ndarray
    upp: np.ndarray
    xold1: np.ndarray
    xold2: np.ndarray
    iteration: int = 0
    # multipliers of the last subproblem, kept for KKT reporting
    y: np.ndarray | None = field(default=None, repr=False)
    z: float = 0.0
    lam: np.ndarray | None = field(default=None, repr=False)
    xsi: np.ndarray | None = field(default=None, repr=False)
    eta: np.ndarray | None = field(default=None, repr=False)
    mu: np.ndarray | None = field(default=None, repr=False)
    zet: float = 0.0
    s: np.ndarray | None = field(default=None, repr=False)
    subproblem_residual: float = np.inf


class MMA:
    """Stateful MMA optimizer over ``n`` variables and ``m`` constraints.

    ``move`` is the external move limit as a fraction of ``xmax - xmin``.
    """

    def __init__(self, n: int, m: int, xmin=0.0, xmax=1.0, move: float = 0.1, a0: float = 1.0,
                 a=None, c=None, d=None, epsimin: float = 1e-9):
        self.n, self.m = int(n), int(m)
        self.xmin = np.broadcast_to(np.asarray(xmin, dtype=float), (self.n,)).copy()
        self.xmax = np.broadcast_to(np.asarray(xmax, dtype=float), (self.n,)).copy()
        self.move = float(move)
        self.a0 = float(a0)
        mm = max(self.m, 1)
        self.a = np.zeros(mm) if a is None else np.asarray(a, dtype=float)
        self.c = np.full(mm, 1000.0) if c is None else np.asarray(c, dtype=float)
        self.d = np.ones(mm) if d is None else np.asarray(d, dtype=float)
        self.epsimin = epsimin
        self.state: MmaState | None = None

    def update(self, x, f0val: float, df0dx, fval=None, dfdx=None) -> np.ndarray:
        """One outer iteration; returns the new design."""
        x = np.asarray(x, dtype=float)
        df0dx = np.asarray(df0dx, dtype=float)
        if self.m == 0:
            # an always-inactive constraint keeps the dual system non-empty
            fval = np.array([-1.0])
            dfdx = np.zeros((1, self.n))
        else:
            fval = np.atleast_1d(np.asarray(fval, dtype=float))
            dfdx = np.atleast_2d(np.asarray(dfdx, dtype=float))
        if not (np.all(np.isfinite(df0dx)) and np.all(np.isfinite(fval)) and np.all(np.isfinite(dfdx))):
            raise NumericalError("MMA received non-finite function values or gradients")
        if self.state is None:
            self.state = MmaState(low=self.xmin.copy(), upp=self.xmax.copy(),
                                  xold1=x.copy(), xold2=x.copy())
        st = self.state
        st.iteration += 1
        low, upp = self._asymptotes(x, st)
        span = self.xmax - self.xmin
        alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - self.move * span, self.xmin])
        beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + self.move * span, self.xmax])

        xmami = np.maximum(span, 1e-5)
        ux1, xl1 = upp - x, x - low
        ux2, xl2 = ux1 * ux1, xl1 * xl1
        p0 = np.maximum(df0dx, 0.0)
        q0 = np.maximum(-df0dx, 0.0)
        pq0 = 0.001 * (p0 + q0) + RAA0 / xmami
        p0 = (p0 + pq0) * ux2
        q0 = (q0 + pq0) * xl2
        P = np.maximum(dfdx, 0.0)
        Q = np.maximum(-dfdx, 0.0)
        PQ = 0.001 * (P + Q) + RAA0 / xmami[None, :]
        P = (P + PQ) * ux2[None, :]
        Q = (Q + PQ) * xl2[None, :]
        b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

        sol = subsolve(low, upp, alfa, beta, p0, q0, P, Q, self.a0, self.a, b, self.c, self.d,
                       self.epsimin)
        xnew = sol["x"]
        st.xold2, st.xold1 = st.xold1, x.copy()
        st.low, st.upp = low, upp
        for key in ("y", "z", "lam", "xsi", "eta", "mu", "zet", "s"):
            setattr(st, key, sol[key])
        st.subproblem_residual = sol["residual"]
        return xnew

    def _asymptotes(self, x, st: MmaState):
        span = self.xmax - self.xmin
        if st.iteration <= 2:
            return x - ASY_INIT * span, x + ASY_INIT * span
        sign = (x - st.xold1) * (st.xold1 - st.xold2)
        factor = np.ones(self.n)
        factor[sign > 0] = ASY_INCR
        factor[sign < 0] = ASY_DECR
        low = x - factor * (st.xold1 - st.low)
        upp = x + factor * (st.upp - st.xold1)
        low = np.clip(low, x - 10.0 * span, x - ASY_MIN * span)
        upp = np.clip(upp, x + ASY_MIN * span, x + 10.0 * span)
        return low, upp

    def kkt_residual(self, x, df0dx, fval, dfdx) -> float:
        """KKT residual norm of the original problem at ``x`` using the last multipliers."""
        st = self.state
        if st is None:
            raise NumericalError("kkt_residual called before any update")
        if self.m == 0:
            fval, dfdx = np.array([-1.0]), np.zeros((1, self.n))
        return kkt_residual(x, st.y, st.z, st.lam, st.xsi, st.eta, st.mu, st.zet, st.s,
                            self.xmin, self.xmax, np.asarray(df0dx, float), np.atleast_1d(fval),
                            np.atleast_2d(dfdx), self.a0, self.a, self.c, self.d)


def _residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi, low, upp, alfa, beta, p0, q0, P, Q,
              a0, a, b, c, d):
    ux1, xl1 = upp - x, x - low
    plam = p0 + P.T @ lam
    qlam = q0 + Q.T @ lam
    gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
    dpsidx = plam / ux1 ** 2 - qlam / xl1 ** 2
    return np.concatenate([
        dpsidx - xsi + eta,
        c + d * y - mu - lam,
        [a0 - zet - a @ lam],
        gvec - a * z - y + s - b,
        xsi * (x - alfa) - epsi,
        eta * (beta - x) - epsi,
        mu * y - epsi,
        [zet * z - epsi],
        lam * s - epsi,
    ])


def subsolve(low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d, epsimin=1e-9, max_newton=200):
    """Primal-dual Newton solution of one MMA subproblem.

    Returns a dict with the primal point ``x, y, z``, the multipliers and the
    final KKT residual (max norm, at barrier parameter ``epsimin``).
    """
    m, n = P.shape
    x = 0.5 * (alfa + beta)
    y = np.ones(m)
    z = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0 / (x - alfa), 1.0)
    eta = np.maximum(1.0 / (beta - x), 1.0)
    mu = np.maximum(1.0, 0.5 * c)
    zet = 1.0
    s = np.ones(m)
    epsi = 1.0
    args = (low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d)

    while epsi > 0.99 * epsimin:
        res = _residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi, *args)
        resnorm = np.linalg.norm(res)
        resmax = np.abs(res).max()
        it = 0
        while resmax > 0.9 * epsi and it < max_newton:
            it += 1
            ux1, xl1 = upp - x, x - low
            ux2, xl2 = ux1 * ux1, xl1 * xl1
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
            GG = P / ux2[None, :] - Q / xl2[None, :]
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2.0 * (plam / (ux2 * ux1) + qlam / (xl2 * xl1)) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy

            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA = np.block([[alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]])
                sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam, dz = sol[:m], sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                axx = np.diag(diagx) + GG.T @ (GG / diaglamyi[:, None])
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                AA = np.block([[axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx, dz = sol[:n], sol[n]
                dlam = GG @ dx / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi

            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - xsi * dx / (x - alfa)
            deta = -eta + epsi / (beta - x) + eta * dx / (beta - x)
            dmu = -mu + epsi / y - mu * dy / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - s * dlam / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stm = max(np.max(-1.01 * dxx / xx), np.max(-1.01 * dx / (x - alfa)),
                      np.max(1.01 * dx / (beta - x)), 1.0)
            step = 1.0 / stm

            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            newnorm = 2.0 * resnorm
            tries = 0
            while newnorm > resnorm and tries < 50:
                tries += 1
                x = old[0] + step * dx
                y = old[1] + step * dy
                z = old[2] + step * dz
                lam = old[3] + step * dlam
                xsi = old[4] + step * dxsi
                eta = old[5] + step * deta
                mu = old[6] + step * dmu
                zet = old[7] + step * dzet
                s = old[8] + step * ds
                res = _residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi, *args)
                newnorm = np.linalg.norm(res)
                step *= 0.5
            resnorm = newnorm
            resmax = np.abs(res).max()
        if not np.all(np.isfinite(x)):
            raise NumericalError("MMA subproblem diverged")
        epsi *= 0.1

    residual = float(np.abs(_residual(x, y, z, lam, xsi, eta, mu, zet, s, 0.0, *args)).max())
    return dict(x=x, y=y, z=float(z), lam=lam, xsi=xsi, eta=eta, mu=mu, zet=float(zet), s=s,
                residual=residual)


def kkt_residual(x, y, z, lam, xsi, eta, mu, zet, s, xmin, xmax, df0dx, fval, dfdx, a0, a, c, d) -> float:
    """Euclidean norm of the KKT residual of the original (non-approximated) problem."""
    rex = df0dx + dfdx.T @ lam - xsi + eta
    rey = c + d * y - mu - lam
    rez = a0 - zet - a @ lam
    relam = fval - a * z - y + s
    return float(np.linalg.norm(np.concatenate([
        rex, rey, [rez], relam, xsi * (x - xmin), eta * (xmax - x), mu * y, [zet * z], lam * s,
    ])))
