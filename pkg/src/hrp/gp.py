"""A small geometric-programming engine.

Monomials and posynomials over named positive variables, the logarithmic
change of variables ``x = exp(y)`` that turns a GP into a convex program
(every posynomial becomes a log-sum-exp of affine functions), and a
log-barrier interior-point solver with a phase-1 feasibility search.

Coefficients are stored in log form, so products over many users (e.g. the
inverse of a product of SNRs) never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.optimize import nnls

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"


class GpError(ValueError):
    pass


class Monomial:
    """``coefficient * prod(x_j ** a_j)`` with a positive coefficient."""

    __slots__ = ("log_coefficient", "exponents")

    def __init__(self, coefficient: float = 1.0, exponents: Optional[Mapping[str, float]] = None):
        if not (coefficient > 0 and math.isfinite(coefficient)):
            raise GpError(f"monomial coefficient must be positive and finite, got {coefficient!r}")
        self.log_coefficient = math.log(coefficient)
        self.exponents = {k: float(v) for k, v in (exponents or {}).items() if v != 0}

    @classmethod
    def from_log(cls, log_coefficient: float, exponents: Optional[Mapping[str, float]] = None):
        m = cls.__new__(cls)
        m.log_coefficient = float(log_coefficient)
        m.exponents = {k: float(v) for k, v in (exponents or {}).items() if v != 0}
        return m

    @classmethod
    def var(cls, name: str) -> "Monomial":
        return cls(1.0, {name: 1.0})

    @property
    def coefficient(self) -> float:
        return math.exp(self.log_coefficient)

    @property
    def variables(self) -> set:
        return set(self.exponents)

    def __mul__(self, other):
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for k, v in other.exponents.items():
                exps[k] = exps.get(k, 0.0) + v
            return Monomial.from_log(self.log_coefficient + other.log_coefficient, exps)
        if isinstance(other, Posynomial):
            return other * self
        return Monomial.from_log(self.log_coefficient + math.log(other), self.exponents)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1
        return Monomial.from_log(self.log_coefficient - math.log(other), self.exponents)

    def __rtruediv__(self, other):
        return Monomial.from_log(math.log(other), {}) * self ** -1

    def __pow__(self, a: float):
        return Monomial.from_log(a * self.log_coefficient, {k: a * v for k, v in self.exponents.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def log_value(self, values: Mapping[str, float]) -> float:
        return self.log_coefficient + sum(a * math.log(values[k]) for k, a in self.exponents.items())

    def __call__(self, values: Mapping[str, float]) -> float:
        return math.exp(self.log_value(values))

    def __repr__(self):
        body = " * ".join(f"{k}^{v:g}" for k, v in sorted(self.exponents.items()))
        return f"{self.coefficient:.6g}" + (f" * {body}" if body else "")


class Posynomial:
    """A non-empty sum of monomials."""

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Monomial]):
        self.terms = tuple(terms)
        if not self.terms:
            raise GpError("posynomial needs at least one term")

    @property
    def variables(self) -> set:
        out = set()
        for t in self.terms:
            out |= t.variables
        return out

    def __add__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        return Posynomial(self.terms + (Monomial(other),))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial(a * b for a in self.terms for b in other.terms)
        return Posynomial(t * other for t in self.terms)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Posynomial):
            raise GpError("division by a posynomial is not a posynomial")
        return Posynomial(t / other for t in self.terms)

    def log_value(self, values: Mapping[str, float]) -> float:
        logs = np.array([t.log_value(values) for t in self.terms])
        top = logs.max()
        return float(top + math.log(np.exp(logs - top).sum()))

    def __call__(self, values: Mapping[str, float]) -> float:
        return math.exp(self.log_value(values))

    def __repr__(self):
        return " + ".join(repr(t) for t in self.terms)


def posynomial(expr) -> Posynomial:
    if isinstance(expr, Posynomial):
        return expr
    if isinstance(expr, Monomial):
        return Posynomial([expr])
    raise GpError(f"not a posynomial: {expr!r}")


@dataclass
class GpProgram:
    """minimize ``objective`` s.t. every constraint ``<= 1`` and bounds hold."""

    objective: Posynomial
    inequality_constraints: list
    variable_bounds: dict
    variables: list = field(default_factory=list)
    constraint_names: list = field(default_factory=list)

    def __post_init__(self):
        self.objective = posynomial(self.objective)
        self.inequality_constraints = [posynomial(c) for c in self.inequality_constraints]
        if not self.variables:
            self.variables = sorted(self.variable_bounds)
        if not self.constraint_names:
            self.constraint_names = [f"c{i}" for i in range(len(self.inequality_constraints))]
        self.validate()

    def validate(self) -> None:
        declared = set(self.variables)
        if len(declared) != len(self.variables):
            raise GpError("duplicate variable names")
        used = self.objective.variables
        for c in self.inequality_constraints:
            used |= c.variables
        missing = used - declared
        if missing:
            raise GpError(f"undeclared variables: {sorted(missing)}")
        for v in self.variables:
            if v not in self.variable_bounds:
                raise GpError(f"variable {v!r} has no bounds")
            lo, hi = self.variable_bounds[v]
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise GpError(f"bounds of {v!r} must satisfy 0 < lower <= upper < inf")
        if len(self.constraint_names) != len(self.inequality_constraints):
            raise GpError("constraint_names length mismatch")

    def constraint_values(self, values: Mapping[str, float]) -> np.ndarray:
        return np.array([c(values) for c in self.inequality_constraints])


@dataclass
class GpSolution:
    values: dict
    objective_value: float
    status: str
    iterations: int
    kkt_residual: float
    log_objective: float = float("nan")
    duality_gap: float = float("nan")
    newton_steps: int = 0
    most_violated: Optional[int] = None
    duals: Optional[np.ndarray] = None

    def summary(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "newton_steps": self.newton_steps,
            "kkt_residual": self.kkt_residual,
            "duality_gap": self.duality_gap,
            "objective_value": self.objective_value,
            "most_violated": self.most_violated,
        }


# --- log-domain convex form ----------------------------------------------------

@dataclass
class LseFunction:
    """``log(sum(exp(A @ y + b)))``; a single row is affine."""

    A: np.ndarray
    b: np.ndarray

    @property
    def affine(self) -> bool:
        return self.A.shape[0] == 1

    def value(self, y):
        z = self.A @ y + self.b
        top = z.max()
        return float(top + math.log(np.exp(z - top).sum()))

    def grad(self, y):
        z = self.A @ y + self.b
        w = np.exp(z - z.max())
        w /= w.sum()
        return self.A.T @ w

    def value_grad_hess(self, y):
        z = self.A @ y + self.b
        top = z.max()
        e = np.exp(z - top)
        s = e.sum()
        w = e / s
        g = self.A.T @ w
        aw = self.A * w[:, None]
        h = self.A.T @ aw - np.outer(g, g)
        return float(top + math.log(s)), g, h


@dataclass
class LogConvexProgram:
    variables: list
    objective: LseFunction
    constraints: list          # LseFunction each, <= 0
    lower: np.ndarray          # log bounds
    upper: np.ndarray

    def describe(self) -> str:
        lines = [f"variables ({len(self.variables)}): y = log(x)"]
        for j, v in enumerate(self.variables):
            lines.append(f"  y[{j}] = log {v}   in [{self.lower[j]:.9g}, {self.upper[j]:.9g}]")
        lines.append("objective: minimize " + _describe_lse(self.objective, self.variables))
        lines.append(f"constraints ({len(self.constraints)}), each <= 0:")
        for i, c in enumerate(self.constraints):
            lines.append(f"  [{i}] " + _describe_lse(c, self.variables))
        return "\n".join(lines) + "\n"


def _describe_lse(f: LseFunction, names) -> str:
    terms = []
    for row, b in zip(f.A, f.b):
        parts = [f"{b:+.9g}"] + [f"{a:+.9g}*y[{names[j]}]" for j, a in enumerate(row) if a != 0]
        terms.append(" ".join(parts))
    if f.affine:
        return f"affine: {terms[0]}"
    return "log-sum-exp of " + str(len(terms)) + " terms: " + " | ".join(terms)


def _lse_of(p: Posynomial, index: Mapping[str, int]) -> LseFunction:
    A = np.zeros((len(p.terms), len(index)))
    b = np.empty(len(p.terms))
    for i, t in enumerate(p.terms):
        b[i] = t.log_coefficient
        for k, a in t.exponents.items():
            A[i, index[k]] = a
    return LseFunction(A, b)


def to_log_convex(p: GpProgram) -> LogConvexProgram:
    """Substitute ``x = exp(y)``: posynomial ``sum c_i prod x^a_i`` becomes
    ``log(sum exp(a_i . y + log c_i))`` which is convex in ``y``."""
    index = {v: j for j, v in enumerate(p.variables)}
    lower = np.array([math.log(p.variable_bounds[v][0]) for v in p.variables])
    upper = np.array([math.log(p.variable_bounds[v][1]) for v in p.variables])
    return LogConvexProgram(
        variables=list(p.variables),
        objective=_lse_of(p.objective, index),
        constraints=[_lse_of(c, index) for c in p.inequality_constraints],
        lower=lower,
        upper=upper,
    )


# --- barrier method ------------------------------------------------------------

MU = 20.0
ALPHA = 0.01
BETA = 0.5
NEWTON_TOL = 1e-12
MAX_NEWTON = 80
NOISE_DECREMENT = 1e-6


class _Barrier:
    """Barrier machinery on the free coordinates of a log-convex program."""

    def __init__(self, objective: LseFunction, constraints: list, lower, upper):
        self.obj = objective
        aff = [c for c in constraints if c.affine]
        self.aff_idx = [i for i, c in enumerate(constraints) if c.affine]
        self.lse_idx = [i for i, c in enumerate(constraints) if not c.affine]
        self.lse = [constraints[i] for i in self.lse_idx]
        n = len(lower)
        self.Aa = np.vstack([c.A for c in aff]) if aff else np.zeros((0, n))
        self.ba = np.concatenate([c.b for c in aff]) if aff else np.zeros(0)
        self.lower = lower
        self.upper = upper
        self.m = len(constraints) + 2 * n

    def cons_values(self, y):
        out = np.empty(len(self.aff_idx) + len(self.lse_idx))
        out[self.aff_idx] = self.Aa @ y + self.ba
        for i, c in zip(self.lse_idx, self.lse):
            out[i] = c.value(y)
        return out

    def strictly_feasible(self, y) -> bool:
        if np.any(y <= self.lower) or np.any(y >= self.upper):
            return False
        if len(self.ba) and np.any(self.Aa @ y + self.ba >= 0):
            return False
        return all(c.value(y) < 0 for c in self.lse)

    def phi(self, y, t) -> float:
        val = t * self.obj.value(y)
        if len(self.ba):
            val -= np.log(-(self.Aa @ y + self.ba)).sum()
        for c in self.lse:
            val -= math.log(-c.value(y))
        val -= np.log(self.upper - y).sum() + np.log(y - self.lower).sum()
        return float(val)

    def grad_hess(self, y, t):
        f0, g0, h0 = self.obj.value_grad_hess(y)
        g = t * g0
        h = t * h0
        if len(self.ba):
            r = -(self.Aa @ y + self.ba)
            g = g + self.Aa.T @ (1.0 / r)
            h = h + (self.Aa / r[:, None] ** 2).T @ self.Aa
        for c in self.lse:
            v, gc, hc = c.value_grad_hess(y)
            g = g + gc / -v
            h = h + np.outer(gc, gc) / v ** 2 + hc / -v
        du = self.upper - y
        dl = y - self.lower
        g = g + 1.0 / du - 1.0 / dl
        h = h + np.diag(1.0 / du ** 2 + 1.0 / dl ** 2)
        return g, h, g0

    def constraint_gradients(self, y):
        """Rows: gradients of the posynomial constraints, then upper and lower bounds."""
        n = len(y)
        rows = np.empty((len(self.aff_idx) + len(self.lse_idx), n))
        rows[self.aff_idx] = self.Aa
        for i, c in zip(self.lse_idx, self.lse):
            rows[i] = c.grad(y)
        return np.vstack([rows, np.eye(n), -np.eye(n)])

    def slacks(self, y):
        return np.concatenate([-self.cons_values(y), self.upper - y, y - self.lower])

    def kkt_certificate(self, y, active_tols=(1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)):
        """Relative stationarity and complementarity with multipliers fitted by
        nonnegative least squares over the near-active constraints.

        Barrier duals ``1/(t*slack)`` are dominated by rounding once slacks
        reach ~1e-10; the constraint gradients are not, so the fitted
        multipliers give a clean certificate.  Several activity thresholds
        are tried and the smallest residual is kept; complementarity
        penalises treating a genuinely slack constraint as active.
        """
        g0 = self.obj.grad(y)
        scale = max(1.0, float(np.max(np.abs(g0)))) if len(g0) else 1.0
        slack = self.slacks(y)
        grads = self.constraint_gradients(y)
        best = (float(np.max(np.abs(g0))) / scale if len(g0) else 0.0, np.zeros(len(slack)))
        for tol in active_tols:
            active = slack <= tol
            if not active.any():
                continue
            J = grads[active]
            lam_a, _ = nnls(J.T, -g0)
            lam = np.zeros(len(slack))
            lam[active] = lam_a
            r = g0 + J.T @ lam_a
            stationarity = float(np.max(np.abs(r))) / scale
            complementarity = float(lam @ slack) / scale
            res = max(stationarity, complementarity)
            if res < best[0]:
                best = (res, lam)
        return best

    def centre(self, y, t):
        steps = 0
        for steps in range(1, MAX_NEWTON + 1):
            g, h, _ = self.grad_hess(y, t)
            try:
                dy = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                dy = -np.linalg.lstsq(h, g, rcond=None)[0]
            dec2 = float(-g @ dy)
            if dec2 / 2.0 <= NEWTON_TOL:
                return y, steps, True
            s = 1.0
            phi0 = self.phi(y, t)
            while True:
                cand = y + s * dy
                if self.strictly_feasible(cand) and self.phi(cand, t) <= phi0 - ALPHA * s * dec2:
                    break
                s *= BETA
                if s < 1e-12:
                    # no measurable decrease left: barrier values are at rounding level
                    return y, steps, dec2 / 2.0 <= NOISE_DECREMENT
            y = cand
        return y, steps, False


def _run_barrier(bar: _Barrier, y, gap_tol, max_outer, stop=None):
    t = 1.0
    outer = 0
    newton = 0
    converged = False
    for outer in range(1, max_outer + 1):
        y, steps, _ = bar.centre(y, t)
        newton += steps
        if stop is not None and stop(y):
            return y, t, outer, newton, True
        if bar.m / t < gap_tol:
            converged = True
            break
        t *= MU
    return y, t, outer, newton, converged


def gp_solve(p: GpProgram, gap_tol: float = 1e-8, kkt_tol: float = 1e-6,
             max_outer: int = 500) -> GpSolution:
    """Solve a GP with a log-barrier interior-point method.

    The start point is the log-midpoint of the variable bounds.  If it
    violates a posynomial constraint, a phase-1 problem (minimize the
    largest log-constraint value ``s``) first looks for a strictly feasible
    point; a phase-1 optimum with ``s >= 0`` means the program is
    infeasible, and the constraint most violated there is reported.
    """
    lcp = to_log_convex(p)
    n = len(lcp.variables)
    fixed = lcp.lower >= lcp.upper
    free = ~fixed
    y_full = 0.5 * (lcp.lower + lcp.upper)

    def restrict(f: LseFunction) -> LseFunction:
        return LseFunction(f.A[:, free], f.b + f.A[:, fixed] @ y_full[fixed])

    obj = restrict(lcp.objective)
    cons = [restrict(c) for c in lcp.constraints]
    lo, hi = lcp.lower[free], lcp.upper[free]
    y0 = y_full[free].copy()
    total_iters = 0
    total_newton = 0

    def pack(y):
        out = y_full.copy()
        out[free] = y
        return out

    def values_of(y):
        return {v: float(math.exp(yy)) for v, yy in zip(lcp.variables, pack(y))}

    c0 = np.array([c.value(y0) for c in cons]) if cons else np.zeros(0)
    if len(c0) and np.max(c0) >= 0:
        # phase 1 over (y, s): minimize s s.t. lse_i(y) - s <= 0, s >= -1
        s0 = float(np.max(c0)) + 1.0
        aug = [LseFunction(np.hstack([c.A, -np.ones((c.A.shape[0], 1))]), c.b) for c in cons]
        nf = int(free.sum())
        ph_obj = LseFunction(np.eye(1, nf + 1, nf), np.zeros(1))
        bar1 = _Barrier(ph_obj, aug, np.append(lo, -1.0), np.append(hi, s0 + 1.0))
        start = np.append(y0, s0)
        z, t1, it1, nw1, _ = _run_barrier(bar1, start, gap_tol, max_outer,
                                          stop=lambda z: z[-1] < 0 and np.max(
                                              [c.value(z[:-1]) for c in cons]) < 0)
        total_iters += it1
        total_newton += nw1
        y0 = z[:-1]
        viol = np.array([c.value(y0) for c in cons])
        if np.max(viol) >= 0:
            return GpSolution(
                values=values_of(y0),
                objective_value=float("nan"),
                status=INFEASIBLE,
                iterations=total_iters,
                kkt_residual=float("nan"),
                newton_steps=total_newton,
                most_violated=int(np.argmax(viol)),
            )

    if free.sum() == 0:
        f = obj.value(np.zeros(0))
        return GpSolution(values_of(y0), math.exp(f), OPTIMAL, 0, 0.0, f, 0.0, 0)

    bar = _Barrier(obj, cons, lo, hi)
    y, t, it, nw, converged = _run_barrier(bar, y0, gap_tol, max_outer)
    total_iters += it
    total_newton += nw
    gap = bar.m / t
    kkt, lam = bar.kkt_certificate(y)
    kkt = max(kkt, gap)
    status = OPTIMAL if converged and kkt <= kkt_tol else MAX_ITER
    f = obj.value(y)
    return GpSolution(
        values=values_of(y),
        objective_value=math.exp(f),
        status=status,
        iterations=total_iters,
        kkt_residual=kkt,
        log_objective=f,
        duality_gap=gap,
        newton_steps=total_newton,
        duals=lam,
    )


def dump_program(p: GpProgram) -> str:
    """Human-readable audit of the GP and its log-domain convex form."""
    lines = ["# geometric program", f"minimize  {p.objective!r}", "subject to"]
    for name, c in zip(p.constraint_names, p.inequality_constraints):
        lines.append(f"  {name}: {c!r} <= 1")
    lines.append("bounds")
    for v in p.variables:
        lo, hi = p.variable_bounds[v]
        lines.append(f"  {lo:.9g} <= {v} <= {hi:.9g}")
    lines.append("")
    lines.append("# log-domain convex program")
    return "\n".join(lines) + "\n" + to_log_convex(p).describe()
