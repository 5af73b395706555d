"""Small dense QP: project a desired command onto halfplane constraints.

    minimize   ||u - u_d||^2
    subject to a_i^T u >= b_i   (filter rows + the input box)

The decision variable is always the 2-D command (v, omega), so a dedicated
dual active-set iteration is used and verified exhaustively against a KKT
enumeration oracle. Infeasibility is a result, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Input, InputBounds

FEAS_TOL = 1e-9
_ZERO_TOL = 1e-14


@dataclass(frozen=True)
class QProblem:
    target: Input
    ineqs: object  # list of (a: (2,) array, b: float), or a stacked (G, b) pair
    box: InputBounds

    def all_rows(self):
        """Constraint matrix/offsets with the box appended as four rows."""
        if isinstance(self.ineqs, tuple):
            Gi, bi_ = self.ineqs
            m = len(bi_)
        else:
            m = len(self.ineqs)
            Gi = np.zeros((m, 2))
            bi_ = np.zeros(m)
            for i, (a, bi) in enumerate(self.ineqs):
                Gi[i] = a
                bi_[i] = bi
        G = np.empty((m + 4, 2))
        b = np.empty(m + 4)
        G[:m] = Gi
        b[:m] = bi_
        G[m] = (1.0, 0.0)
        b[m] = -self.box.v_max
        G[m + 1] = (-1.0, 0.0)
        b[m + 1] = -self.box.v_max
        G[m + 2] = (0.0, 1.0)
        b[m + 2] = -self.box.omega_max
        G[m + 3] = (0.0, -1.0)
        b[m + 3] = -self.box.omega_max
        return G, b


@dataclass(frozen=True)
class QSolution:
    u_star: Optional[Input]
    feasible: bool
    active_set: tuple = field(default=())
    objective: float = 0.0


def _finish(p: QProblem, u: np.ndarray, active) -> QSolution:
    # box bounds are hard: snap exactly (moves u by at most solver roundoff)
    v = min(max(u[0], -p.box.v_max), p.box.v_max)
    w = min(max(u[1], -p.box.omega_max), p.box.omega_max)
    d = np.array([v, w]) - p.target.as_array()
    return QSolution(Input(v, w), True, tuple(sorted(active)), float(d @ d))


def solve(p: QProblem) -> QSolution:
    """Dual active-set projection of the target onto the feasible region."""
    G, b = p.all_rows()
    ud = p.target.as_array()
    u = ud.copy()
    active: list[int] = []
    lam: list[float] = []
    m = len(b)

    for _ in range(10 * m + 50):
        s = G @ u - b
        viol = [i for i in range(m) if i not in active and s[i] < -FEAS_TOL]
        if not viol:
            if not active:
                # target already satisfies everything: return it bitwise
                return QSolution(p.target, True, (), 0.0)
            return _finish(p, u, active)
        pidx = min(viol, key=lambda i: s[i])
        npv = G[pidx]
        lam_p = 0.0

        while True:
            if not active:
                r = np.zeros(0)
                z = npv.copy()
            elif len(active) == 1:
                n0 = G[active[0]]
                r = np.array([(n0 @ npv) / (n0 @ n0)])
                z = npv - r[0] * n0
            else:
                N = G[active].T  # (2, |A|)
                NtN = N.T @ N
                rhs = N.T @ npv
                if len(active) == 2:
                    det = NtN[0, 0] * NtN[1, 1] - NtN[0, 1] * NtN[1, 0]
                else:
                    det = 0.0
                if abs(det) > _ZERO_TOL:
                    r = np.array(
                        [
                            (NtN[1, 1] * rhs[0] - NtN[0, 1] * rhs[1]) / det,
                            (NtN[0, 0] * rhs[1] - NtN[1, 0] * rhs[0]) / det,
                        ]
                    )
                else:
                    r, *_ = np.linalg.lstsq(NtN, rhs, rcond=None)
                z = npv - N @ r

            zz = float(z @ z)
            sp = float(npv @ u - b[pidx])
            t1 = -sp / zz if zz > _ZERO_TOL else np.inf
            t2 = np.inf
            kblock = -1
            for k, rk in enumerate(r):
                if rk > _ZERO_TOL and lam[k] / rk < t2:
                    t2 = lam[k] / rk
                    kblock = k
            t = min(t1, t2)
            if not np.isfinite(t):
                return QSolution(None, False)

            if zz > _ZERO_TOL:
                u = u + t * z
            for k in range(len(lam)):
                lam[k] -= t * r[k]
            lam_p += t

            if t2 < t1:
                # active multiplier hit zero: drop it and retry constraint p
                active.pop(kblock)
                lam.pop(kblock)
                continue
            active.append(pidx)
            lam.append(lam_p)
            break
    raise RuntimeError("active-set iteration failed to converge")


def kkt_enumeration_oracle(p: QProblem) -> QSolution:
    """Brute-force reference: try every active subset of size <= 2.

    The projection onto a nonempty 2-D polyhedron has at most two active
    constraints, so enumerating all singletons and pairs (plus the
    unconstrained target) is exhaustive. Ties break toward the lowest
    lexicographic active set, matching the solver's determinism contract.
    """
    G, b = p.all_rows()
    ud = p.target.as_array()
    m = len(b)

    def feasible_point(u):
        return bool(np.all(G @ u - b >= -FEAS_TOL))

    best = None
    best_active: tuple = ()

    def consider(u, active):
        nonlocal best, best_active
        if not feasible_point(u):
            return
        obj = float((u - ud) @ (u - ud))
        if best is None or obj < best[1] - 1e-12:
            best = (u, obj)
            best_active = active

    consider(ud, ())
    for i in range(m):
        a = G[i]
        u = ud + ((b[i] - a @ ud) / (a @ a)) * a
        consider(u, (i,))
    for i in range(m):
        for j in range(i + 1, m):
            A = np.array([G[i], G[j]])
            if abs(np.linalg.det(A)) < _ZERO_TOL:
                continue
            u = np.linalg.solve(A, np.array([b[i], b[j]]))
            consider(u, (i, j))

    if best is None:
        return QSolution(None, False)
    u, obj = best
    if obj == 0.0 and not best_active:
        return QSolution(p.target, True, (), 0.0)
    return _finish(p, u, best_active)
