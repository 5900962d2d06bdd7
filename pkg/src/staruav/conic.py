"""Typed conic backend: geometric, semidefinite, and concave-log programs.

Three problem shapes cover every optimization step in the package:

* GeometricProgram  -- positive variables, posynomial <= 1 constraints,
  posynomial objective. Lowered through y = log x so monomials become
  affine and posynomial constraints become log-sum-exp cones.
* SdpProblem        -- Hermitian PSD matrix variables plus positive scalar
  slacks, trace-affine expressions, reciprocal (1/e <= expr) constraints.
* ConvexLogProgram  -- nonnegative scalar variables, objective and
  constraints built from  sum_i c_i * log2(affine_i) + linear,  c_i >= 0.

Monomial coefficients are carried in log form: products of many tiny
coefficients (the trajectory objective multiplies per-slot terms across the
whole mission) would underflow a raw double.

Solvers are tried in order (CLARABEL, then SCS); statuses collapse to
{optimal, inaccurate, infeasible, failed}.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

_LN2 = math.log(2.0)

SOLVER_ORDER = ("CLARABEL", "SCS")

_STATUS_MAP = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "inaccurate",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED: "failed",
    cp.UNBOUNDED_INACCURATE: "failed",
}


class BackendError(RuntimeError):
    """Every configured solver failed on a problem."""


@dataclass
class SolveResult:
    status: str                  # optimal | inaccurate | infeasible | failed
    objective: Optional[float]
    values: dict
    solver: str
    log_objective: Optional[float] = None  # geometric programs only

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "inaccurate")


# bounded effort so a fallback solve cannot stall a whole sweep
_SOLVER_KWARGS = {"SCS": {"max_iters": 1200}}


def _solve_with_fallback(problem: cp.Problem, solver_order: Sequence[str]) -> Tuple[str, str]:
    """Try solvers in order; return (mapped status, solver name)."""
    last_status = "failed"
    last_solver = solver_order[0] if solver_order else "none"
    for name in solver_order:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=name, **_SOLVER_KWARGS.get(name, {}))
        except (cp.SolverError, Exception):
            continue
        status = _STATUS_MAP.get(problem.status, "failed")
        if status in ("optimal", "inaccurate", "infeasible"):
            return status, name
        last_status, last_solver = status, name
    return last_status, last_solver


# ---------------------------------------------------------------------------
# geometric programs
# ---------------------------------------------------------------------------


class Monomial:
    """c * prod_v x_v^{a_v} with c > 0, stored as (log c, exponent map)."""

    __slots__ = ("log_coeff", "exponents")

    def __init__(self, log_coeff: float, exponents: Optional[Dict[str, float]] = None):
        if not math.isfinite(log_coeff):
            raise ValueError(f"monomial coefficient must be finite and positive (log={log_coeff})")
        self.log_coeff = float(log_coeff)
        self.exponents = dict(exponents or {})

    @classmethod
    def from_coeff(cls, coeff: float, exponents: Optional[Dict[str, float]] = None) -> "Monomial":
        if coeff <= 0:
            raise ValueError(f"monomial coefficient must be positive, got {coeff}")
        return cls(math.log(coeff), exponents)

    @property
    def coeff(self) -> float:
        return math.exp(self.log_coeff)

    def __mul__(self, other: "Monomial") -> "Monomial":
        exps = dict(self.exponents)
        for v, a in other.exponents.items():
            exps[v] = exps.get(v, 0.0) + a
        return Monomial(self.log_coeff + other.log_coeff, exps)

    def __pow__(self, p: float) -> "Monomial":
        return Monomial(self.log_coeff * p, {v: a * p for v, a in self.exponents.items()})

    def log_evaluate(self, values: Dict[str, float]) -> float:
        out = self.log_coeff
        for v, a in self.exponents.items():
            out += a * math.log(values[v])
        return out

    def evaluate(self, values: Dict[str, float]) -> float:
        return math.exp(self.log_evaluate(values))

    def __repr__(self):
        return f"Monomial(log_coeff={self.log_coeff:.6g}, exponents={self.exponents})"


def mono(coeff: float, **exponents: float) -> Monomial:
    return Monomial.from_coeff(coeff, exponents)


@dataclass
class Posynomial:
    """Sum of monomials; used both as objective and as `<= 1` constraint body."""

    terms: Tuple[Monomial, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("posynomial needs at least one term")
        self.terms = tuple(self.terms)

    def evaluate(self, values: Dict[str, float]) -> float:
        logs = [t.log_evaluate(values) for t in self.terms]
        peak = max(logs)
        return math.exp(peak) * sum(math.exp(x - peak) for x in logs)

    def variables(self) -> set:
        out = set()
        for t in self.terms:
            out.update(t.exponents)
        return out


@dataclass
class GeometricProgram:
    """minimize `objective` subject to each posynomial in `constraints` <= 1."""

    objective: Posynomial
    constraints: List[Posynomial] = field(default_factory=list)

    def variables(self) -> list:
        out = set(self.objective.variables())
        for c in self.constraints:
            out |= c.variables()
        return sorted(out)


def _affine_of(m: Monomial, y: cp.Variable, index: Dict[str, int]):
    expr = m.log_coeff
    for v, a in m.exponents.items():
        expr = expr + a * y[index[v]]
    return expr


def lower_gp(gp: GeometricProgram) -> Tuple[cp.Problem, cp.Variable, Dict[str, int]]:
    """Log-variable lowering: monomials to affine, posynomials to log-sum-exp."""
    names = gp.variables()
    index = {v: i for i, v in enumerate(names)}
    y = cp.Variable(len(names)) if names else cp.Variable(1)
    cons = []
    for posy in gp.constraints:
        rows = [_affine_of(t, y, index) for t in posy.terms]
        if len(rows) == 1:
            cons.append(rows[0] <= 0)
        else:
            cons.append(cp.log_sum_exp(cp.hstack(rows)) <= 0)
    rows = [_affine_of(t, y, index) for t in gp.objective.terms]
    obj = rows[0] if len(rows) == 1 else cp.log_sum_exp(cp.hstack(rows))
    return cp.Problem(cp.Minimize(obj), cons), y, index


def _gp_result(problem: cp.Problem, y: cp.Variable, index: Dict[str, int], status: str, solver: str) -> SolveResult:
    if status in ("infeasible", "failed") or y.value is None:
        return SolveResult(status=status, objective=None, values={}, solver=solver)
    # slack variables a solution leaves loose can sit at huge logs; cap them
    vals = {v: float(math.exp(min(y.value[i], 700.0))) for v, i in index.items()}
    log_obj = float(problem.value)
    # problem.value is log of the true posynomial objective
    obj = math.exp(log_obj) if log_obj < 700 else math.inf
    return SolveResult(status=status, objective=obj, values=vals, solver=solver, log_objective=log_obj)


def solve_gp(gp: GeometricProgram, solver_order: Sequence[str] = SOLVER_ORDER) -> SolveResult:
    problem, y, index = lower_gp(gp)
    status, solver = _solve_with_fallback(problem, solver_order)
    return _gp_result(problem, y, index, status, solver)


# ---------------------------------------------------------------------------
# semidefinite programs
# ---------------------------------------------------------------------------


@dataclass
class TraceExpr:
    """const + sum_j c_j * Tr(H_j @ Phi_{name_j}) + sum_v lin_v * scalar_v."""

    const: float = 0.0
    traces: List[Tuple[str, np.ndarray, float]] = field(default_factory=list)
    lin: Dict[str, float] = field(default_factory=dict)

    def add_trace(self, name: str, h: np.ndarray, coeff: float = 1.0) -> "TraceExpr":
        self.traces.append((name, np.asarray(h, dtype=complex), float(coeff)))
        return self

    def evaluate(self, matrices: Dict[str, np.ndarray], scalars: Dict[str, float]) -> float:
        out = self.const
        for name, h, c in self.traces:
            out += c * float(np.real(np.trace(h @ matrices[name])))
        for v, c in self.lin.items():
            out += c * scalars[v]
        return out


@dataclass
class SdpProblem:
    """maximize `objective` over Hermitian PSD matrices and positive scalars.

    Constraint kinds:
      ("ge0", TraceExpr)                    expr >= 0
      ("invpos", scalar, TraceExpr)         1/scalar <= expr
      ("diag_sum_eq", name_a, name_b, val)  diag(A) + diag(B) == val
    """

    matrix_dims: Dict[str, int]
    scalar_names: List[str]
    objective: TraceExpr
    constraints: List[tuple] = field(default_factory=list)


def solve_sdp(problem: SdpProblem, solver_order: Sequence[str] = SOLVER_ORDER) -> SolveResult:
    mats = {name: cp.Variable((m, m), hermitian=True) for name, m in problem.matrix_dims.items()}
    scals = {name: cp.Variable(pos=True) for name in problem.scalar_names}

    def build(expr: TraceExpr):
        out = expr.const
        for name, h, c in expr.traces:
            out = out + c * cp.real(cp.trace(h @ mats[name]))
        for v, c in expr.lin.items():
            out = out + c * scals[v]
        return out

    cons = [m >> 0 for m in mats.values()]
    for entry in problem.constraints:
        kind = entry[0]
        if kind == "ge0":
            cons.append(build(entry[1]) >= 0)
        elif kind == "invpos":
            cons.append(cp.inv_pos(scals[entry[1]]) <= build(entry[2]))
        elif kind == "diag_sum_eq":
            _, a, b, val = entry
            cons.append(cp.real(cp.diag(mats[a])) + cp.real(cp.diag(mats[b])) == val)
        else:
            raise ValueError(f"unknown SDP constraint kind {kind!r}")
    prob = cp.Problem(cp.Maximize(build(problem.objective)), cons)
    status, solver = _solve_with_fallback(prob, solver_order)
    if status in ("infeasible", "failed") or prob.value is None:
        return SolveResult(status=status, objective=None, values={}, solver=solver)
    values = {name: np.asarray(v.value) for name, v in mats.items()}
    values.update({name: float(v.value) for name, v in scals.items()})
    return SolveResult(status=status, objective=float(prob.value), values=values, solver=solver)


# ---------------------------------------------------------------------------
# concave log programs
# ---------------------------------------------------------------------------


@dataclass
class LogTerm:
    """coeff * log2(const + lin . p), coeff >= 0 so the term stays concave."""

    coeff: float
    const: float
    lin: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.coeff < 0:
            raise ValueError("log term coefficient must be nonnegative")

    def argument(self, values: Dict[str, float]) -> float:
        return self.const + sum(c * values[v] for v, c in self.lin.items())

    def evaluate(self, values: Dict[str, float]) -> float:
        return self.coeff * math.log2(self.argument(values))


@dataclass
class ConcaveExpr:
    """const + lin . p + sum of LogTerms."""

    const: float = 0.0
    lin: Dict[str, float] = field(default_factory=dict)
    logs: List[LogTerm] = field(default_factory=list)

    def evaluate(self, values: Dict[str, float]) -> float:
        out = self.const + sum(c * values[v] for v, c in self.lin.items())
        return out + sum(t.evaluate(values) for t in self.logs)


@dataclass
class ConvexLogProgram:
    """maximize `objective` over nonnegative scalars.

    `lower_bounds` entries are (expr, b) meaning expr >= b;
    `linear_upper` entries are (lin, b) meaning lin . p <= b.
    """

    var_names: List[str]
    objective: ConcaveExpr
    lower_bounds: List[Tuple[ConcaveExpr, float]] = field(default_factory=list)
    linear_upper: List[Tuple[Dict[str, float], float]] = field(default_factory=list)


def solve_clp(problem: ConvexLogProgram, solver_order: Sequence[str] = SOLVER_ORDER) -> SolveResult:
    var = {name: cp.Variable(nonneg=True) for name in problem.var_names}

    def build(expr: ConcaveExpr):
        out = expr.const
        for v, c in expr.lin.items():
            out = out + c * var[v]
        for t in expr.logs:
            arg = t.const
            for v, c in t.lin.items():
                arg = arg + c * var[v]
            out = out + (t.coeff / _LN2) * cp.log(arg)
        return out

    cons = []
    for expr, b in problem.lower_bounds:
        cons.append(build(expr) >= b)
    for lin, b in problem.linear_upper:
        cons.append(sum(c * var[v] for v, c in lin.items()) <= b)
    prob = cp.Problem(cp.Maximize(build(problem.objective)), cons)
    status, solver = _solve_with_fallback(prob, solver_order)
    if status in ("infeasible", "failed") or prob.value is None:
        return SolveResult(status=status, objective=None, values={}, solver=solver)
    values = {name: float(v.value) for name, v in var.items()}
    return SolveResult(status=status, objective=float(prob.value), values=values, solver=solver)
