"""Stability machinery for the momentum variants.

The four trajectory norms ``V_k = (||x_k - x*||, ||x_k - x_{k-1}||,
||u_k - Ku_k||, ||s_k - Ks_k||)`` obey ``V_{k+1} <= M V_k`` for a nonnegative
4x4 matrix ``M`` (``P`` for heavy ball, ``Q`` for Nesterov, ``R`` its
simplified majorant used for explicit parameter bounds). Everything here
is a pure function of the step size, momentum, smoothness constants and
the mixing contraction ``rho``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .engine import Trace
from .problem import SmoothnessConstants

MARGINAL_BAND = 1e-12
COEFF_AGREEMENT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ConvergenceMatrix:
    kind: str                 # "P" | "Q" | "R"
    entries: np.ndarray
    alpha: float
    momentum: float
    constants: SmoothnessConstants
    rho: float

    def __matmul__(self, v):
        return self.entries @ v


def _check_inputs(alpha, momentum, c: SmoothnessConstants, rho):
    if alpha < 0 or momentum < 0:
        raise ValueError("alpha and momentum must be nonnegative")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho} outside [0, 1)")


def build_matrix(kind: str, alpha: float, momentum: float, constants: SmoothnessConstants,
                 rho: float, tracking_row4: bool = False) -> ConvergenceMatrix:
    """Entries of ``P`` (heavy ball), ``Q`` (Nesterov) or ``R`` (simplified Nesterov).

    ``P`` is built with the reference fourth row. Its ``(4,1)`` and ``(4,3)``
    entries carry ``L3`` where the underlying s-tracking bound has ``L2``;
    ``tracking_row4=True`` builds that bound's version instead.
    """
    _check_inputs(alpha, momentum, constants, rho)
    m, L1, L2, L3 = constants.m, constants.L1, constants.L2, constants.L3
    a = alpha
    kind = kind.upper()
    if kind == "P":
        b = momentum
        k4 = L2 if tracking_row4 else L3
        M = [[1 - m * a, b, a * L1, a * L3],
             [a * L1 * (1 + L3), b, a * L1, a * L3],
             [a * L1 * L3 * (1 + L3), b * L3, rho + a * L1 * L3, a * L3 ** 2],
             [a * L1 * k4 * (1 + L3) ** 2, b * L2 * (1 + L3),
              a * L1 * k4 * (1 + L3) + 2 * L2, rho + a * L2 * L3 * (1 + L3)]]
    elif kind == "Q":
        g = momentum
        w = (1 + g) * (1 + a * L1 + a * L1 * L3) + 1
        M = [[1 - m * a, (1 - m * a) * g, a * L1, a * L3],
             [a * L1 * (1 + L3), g * (1 + a * L1 + a * L1 * L3), a * L1, a * L3],
             [a * L1 * L3 * (1 + L3) * (g + 1), g * L3 * w, rho + a * L1 * L3 * (g + 1),
              a * L3 ** 2 * (g + 1)],
             [a * L1 * L2 * (1 + L3) ** 2 * (g + 1), g * L2 * (L3 + 1) * w,
              a * L1 * L2 * (1 + L3) * (g + 1) + 2 * L2, rho + a * L2 * L3 * (1 + L3) * (1 + g)]]
    elif kind == "R":
        g = momentum
        if a > 1 / L1 * (1 + 1e-12) or g > min(1 / L2, 1 / L3) * (1 + 1e-12):
            raise ValueError("R requires alpha <= 1/L1 and gamma <= min(1/L2, 1/L3)")
        M = [[1 - m * a, (1 - m * a) * g, a * L1, a * L3],
             [a * L1 * (1 + L3), g * (2 + L3), a * L1, a * L3],
             [a * L1 * L3 * (2 + L3), g * (L3 ** 2 + 4 * L3 + 2), rho + a * L1 * (L3 + 1),
              a * L3 * (L3 + 1)],
             [a * L1 * (1 + L2) * (1 + L3) ** 2, g * (L3 + 1) * (L2 * L3 + 2 * L2 + L3 + 1),
              a * L1 * (L2 + 1) * (1 + L3) + 2 * L2, rho + a * L2 * (1 + L3) ** 2]]
    else:
        raise ValueError(f"unknown matrix kind {kind!r}")
    return ConvergenceMatrix(kind, np.array(M, dtype=float), alpha, momentum, constants, rho)


@dataclass(frozen=True)
class Quartic:
    """Monic quartic ``a0 + a1 l + a2 l^2 + a3 l^3 + l^4``."""

    coeffs: tuple[float, float, float, float]

    @property
    def ascending(self) -> list[float]:
        return list(self.coeffs) + [1.0]

    def __call__(self, lam):
        a0, a1, a2, a3 = self.coeffs
        return a0 + lam * (a1 + lam * (a2 + lam * (a3 + lam)))

    def roots(self) -> np.ndarray:
        """Eigenvalues of the companion matrix."""
        return np.linalg.eigvals(companion(self.ascending))


def companion(ascending: Sequence[float]) -> np.ndarray:
    c = np.asarray(ascending, dtype=float)
    n = c.size - 1
    C = np.zeros((n, n))
    C[1:, :-1] = np.eye(n - 1)
    C[:, -1] = -c[:-1] / c[-1]
    return C


def char_poly(M) -> list[float]:
    """Ascending coefficients of ``det(lambda I - M)`` by Faddeev-LeVerrier."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    coeffs = [0.0] * (n + 1)
    coeffs[n] = 1.0
    Mk = np.zeros_like(M)
    eye = np.eye(n)
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[n - k + 1] * eye
        coeffs[n - k] = -float(np.trace(M @ Mk)) / k
    return coeffs


def char_quartic(M: ConvergenceMatrix | np.ndarray) -> Quartic:
    entries = M.entries if isinstance(M, ConvergenceMatrix) else np.asarray(M, dtype=float)
    if entries.shape != (4, 4):
        raise ValueError("quartic needs a 4x4 matrix")
    return Quartic(tuple(char_poly(entries)[:4]))


def closed_form_quartic(kind: str, alpha: float, momentum: float, constants: SmoothnessConstants,
                        rho: float) -> Quartic:
    """Reference closed-form coefficients of ``det(lambda I - P)`` / ``det(lambda I - Q)``.

    Kept literally (a stray ``r`` in the Q expression for ``a1`` is read as
    the momentum). They are compared against :func:`char_quartic`, never
    trusted over it.
    """
    m, L1, L2, L3 = constants.m, constants.L1, constants.L2, constants.L3
    a = alpha
    kind = kind.upper()
    if kind == "P":
        b = momentum
        d1 = 1 - m * a - a * L1 * (1 + L3)
        d2 = L3 * (1 + L3) * (L2 - L3)
        d3 = -2 * a * L2 + rho * (1 + L3)
        a0 = b * d1 * rho * (rho + 2 * a * d2)
        a1 = (b * (-d1 * rho + (d1 + rho) * (-rho + 2 * a * d2))
              + (m * a - 1) * rho * (rho + a * d2)
              - a * L3 * d1 * (a * L1 * (rho + a * L3 * d2) + a * L3 * d3))
        a2 = (b * (d1 + 2 * rho + a * d2) + (1 - m * a) * (2 * rho + a * d2) + rho * (rho + a * d2)
              + a * L3 * d1 * (L1 + L3 * (1 + L3)) + L3 * (a * L1 * (rho + a * d2) + a * L3 * d3))
        a3 = -b + (m - 2) * a - 1 - a * L3 * (L2 * (1 + L3) + L1)
    elif kind == "Q":
        g = momentum
        e1 = a * (m + L1 * (1 + L3))
        e2 = a * L2 * (rho * (1 + L3) - 2 * L3)
        e3 = g * (1 + a * L1 + a * L1 * L3)
        e4 = a * L2 * L3 * (1 + L3)
        a0 = (e1 - 1) * (a * L3 * (rho * a * L1 - e2) + rho ** 2 * e3) + rho ** 2 * a * g * e1 * L1 * (1 + L3)
        a1 = ((e1 - 1) * (L3 * e2 * (1 + g) - e4 * g + rho * (2 * e3 + rho - a * L3 ** 2))
              + g * L3 * (e2 + a * L3 * (e1 + rho * e1 - 1 - 2 * rho))
              - rho ** 2 * e3 - a * L1 * (1 + L3) * rho * (2 * g * e1 + rho))
        a2 = ((1 + g) * L3 * e2 + (e1 - 1) * ((1 + g) * e4 + 2 * rho + e3)
              + a * L1 * ((1 + L3) * (2 * rho + g * e1) + L3 * g + L3 * (1 + g) * (e1 - 1 - rho))
              - g * e4 + rho * (2 * e3 + rho))
        a3 = e1 - e2 - 1 - 2 * rho - (1 + g) * e4 - a * L1 * (L3 * (2 + g) + 1)
    else:
        raise ValueError(f"no closed-form quartic for kind {kind!r}")
    return Quartic((a0, a1, a2, a3))


@dataclass
class JuryCondition:
    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def satisfied(self) -> bool:
        return self.margin > MARGINAL_BAND

    @property
    def marginal(self) -> bool:
        return abs(self.margin) <= MARGINAL_BAND


@dataclass
class JuryVerdict:
    stable: bool
    marginal: bool
    conditions: list[JuryCondition]
    tableau: list[list[float]]

    def flags(self) -> str:
        return "".join("1" if c.satisfied else "0" for c in self.conditions)


def jury_stable(poly: Quartic | Sequence[float]) -> JuryVerdict:
    """Jury test: are all roots strictly inside the unit circle?

    ``poly`` is a :class:`Quartic` or ascending coefficients ``a0..an`` with
    ``an > 0`` and ``n >= 2``. Conditions, in order: ``H(1) > 0``,
    ``(-1)^n H(-1) > 0``, ``|a0| < an``, then ``|first| > |last|`` for every
    reduced tableau row down to three entries. Any condition within
    ``MARGINAL_BAND`` of equality makes the verdict unstable and marginal.
    """
    a = [float(v) for v in (poly.ascending if isinstance(poly, Quartic) else poly)]
    n = len(a) - 1
    if n < 2:
        raise ValueError("Jury test needs degree >= 2")
    if not a[-1] > 0:
        raise ValueError("leading coefficient must be positive")
    h1 = sum(a)
    hm1 = sum(c * (-1) ** k for k, c in enumerate(a))
    conds = [JuryCondition("H(1)>0", h1, 0.0),
             JuryCondition("(-1)^n H(-1)>0", (-1) ** n * hm1, 0.0),
             JuryCondition("|a0|<an", a[-1], abs(a[0]))]
    row = a
    tableau = [row]
    names = iter("bcdefghijklmnopqrstuvwxyz")
    while len(row) > 3:
        last = len(row) - 1
        row = [row[0] * row[i] - row[last] * row[last - i] for i in range(last)]
        tableau.append(row)
        letter = next(names)
        conds.append(JuryCondition(f"|{letter}0|>|{letter}{len(row) - 1}|", abs(row[0]), abs(row[-1])))
    stable = all(c.satisfied for c in conds)
    return JuryVerdict(stable, any(c.marginal for c in conds), conds, tableau)


def spectral_radius(M) -> float:
    entries = M.entries if isinstance(M, ConvergenceMatrix) else np.asarray(M, dtype=float)
    if entries.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(entries))))


def _set_conditions(q: Quartic, alpha: float, momentum: float) -> dict[str, bool]:
    a0, a1, a2, a3 = q.coeffs
    j = jury_stable(q)
    by_name = {c.name: c for c in j.conditions}
    return {
        "S1": by_name["H(1)>0"].satisfied,           # a0+a1+a2+a3+1 > 0
        "S2": by_name["(-1)^n H(-1)>0"].satisfied,   # a0-a1+a2-a3+1 > 0
        "S3": by_name["|a0|<an"].satisfied,
        "S4": by_name["|b0|>|b3|"].satisfied,
        "S5": by_name["|c0|>|c2|"].satisfied,
        "S6": alpha > 0 and momentum > 0,
    }


@dataclass
class StabilityReport:
    kind: str
    alpha: float
    momentum: float
    constants: SmoothnessConstants
    rho: float
    numeric: Quartic
    closed_form: Quartic
    coefficient_discrepancy: float
    jury: JuryVerdict
    sets: dict[str, bool]
    closed_form_sets: dict[str, bool]
    spectral_radius: float
    member: bool

    @property
    def closed_form_agrees(self) -> bool:
        return self.coefficient_discrepancy <= COEFF_AGREEMENT_TOL

    @property
    def consistent(self) -> bool:
        """The Jury verdict and ``spectral radius < 1`` agree (marginal cases excepted)."""
        return self.jury.stable == (self.spectral_radius < 1.0) or self.jury.marginal

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "alpha": self.alpha, "momentum": self.momentum,
            "constants": asdict(self.constants), "rho": self.rho,
            "numeric_quartic": list(self.numeric.coeffs),
            "closed_form_quartic": list(self.closed_form.coeffs),
            "coefficient_discrepancy": self.coefficient_discrepancy,
            "closed_form_agrees": self.closed_form_agrees,
            "jury": {c.name: {"lhs": c.lhs, "rhs": c.rhs, "satisfied": c.satisfied}
                     for c in self.jury.conditions},
            "jury_marginal": self.jury.marginal,
            "sets": self.sets, "closed_form_sets": self.closed_form_sets,
            "spectral_radius": self.spectral_radius, "member": self.member,
            "consistent": self.consistent,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_KIND = {"HB": "P", "NES": "Q"}


def region_member(kind: str, alpha: float, momentum: float, constants: SmoothnessConstants,
                  rho: float) -> StabilityReport:
    """Is ``(alpha, momentum)`` inside the Jury region of ``P`` (HB) or ``Q`` (NES)?

    Membership is decided on the characteristic polynomial expanded from the
    built matrix. The reference closed-form coefficients are evaluated
    alongside and their disagreement recorded.
    """
    mkind = _KIND[kind.upper()]
    M = build_matrix(mkind, alpha, momentum, constants, rho)
    num = char_quartic(M)
    cf = closed_form_quartic(mkind, alpha, momentum, constants, rho)
    sets = _set_conditions(num, alpha, momentum)
    return StabilityReport(
        kind=kind.upper(), alpha=alpha, momentum=momentum, constants=constants, rho=rho,
        numeric=num, closed_form=cf,
        coefficient_discrepancy=float(np.max(np.abs(np.subtract(num.coeffs, cf.coeffs)))),
        jury=jury_stable(num), sets=sets,
        closed_form_sets=_set_conditions(cf, alpha, momentum),
        spectral_radius=spectral_radius(M), member=all(sets.values()),
    )


@dataclass
class ConservativeBounds:
    """Explicit sufficient region from ``M z < z`` with a positive test vector ``z``.

    The momentum bound depends on the step size (its first term grows with
    ``alpha``, the others shrink), so it is exposed as :meth:`momentum_bound`.
    ``momentum_bar`` is its value at ``alpha_bar / 2``.
    """

    kind: str
    constants: SmoothnessConstants
    rho: float
    z: np.ndarray
    alpha_terms: dict[str, float]
    alpha_bar: float
    momentum_bar: float = field(init=False)

    def __post_init__(self):
        self.momentum_bar = self.momentum_bound(self.alpha_bar / 2) if not self.empty else 0.0

    @property
    def empty(self) -> bool:
        return not self.alpha_bar > 0

    def momentum_terms(self, alpha: float) -> dict[str, float]:
        m, L1, L2, L3 = (self.constants.m, self.constants.L1, self.constants.L2, self.constants.L3)
        z1, z2, z3, z4 = self.z
        a, rho = alpha, self.rho
        if self.kind == "HB":
            return {
                "M1": a * (m * z1 - L1 * z3 - L3 * z4) / z2,
                "M2": (z2 - a * L1 * (1 + L3) * z1 - a * L1 * z3 - a * L3 * z4) / z2,
                "M3": ((1 - rho - a * L1 * L3) * z3 - a * L1 * L3 * (1 + L3) * z1 - a * L3 ** 2 * z4)
                      / (L3 * z2),
                "M4": ((1 - rho - a * L2 * L3 * (1 + L3)) * z4 - a * L1 * L2 * (1 + L3) ** 2 * z1
                       - (a * L1 * L2 * (1 + L3) + 2 * L2) * z3) / (L2 * (1 + L3) * z2),
            }
        # row 4 of R: the momentum coefficient is (L3+1)(L2 L3 + 2 L2 + L3 + 1) t2
        c42 = (L3 + 1) * (L2 * L3 + 2 * L2 + L3 + 1)
        return {
            "Gamma1": a * (m * z1 - L1 * z3 - L3 * z4) / ((1 - m * a) * z2),
            "Gamma2": (z2 - a * L1 * (1 + L3) * z1 - a * L1 * z3 - a * L3 * z4) / ((2 + L3) * z2),
            "Gamma3": ((1 - rho - a * L1 * (L3 + 1)) * z3 - a * L1 * L3 * (2 + L3) * z1
                       - a * L3 * (L3 + 1) * z4) / ((L3 ** 2 + 4 * L3 + 2) * z2),
            "Gamma4": ((1 - rho - a * L2 * (1 + L3) ** 2) * z4 - a * L1 * (L2 + 1) * (1 + L3) ** 2 * z1
                       - (a * L1 * (L2 + 1) * (1 + L3) + 2 * L2) * z3) / (c42 * z2),
            "1/L2": 1 / L2,
            "1/L3": 1 / L3,
        }

    def momentum_bound(self, alpha: float) -> float:
        return float(min(self.momentum_terms(alpha).values()))

    def matrix(self, alpha: float, momentum: float) -> ConvergenceMatrix:
        return build_matrix("P" if self.kind == "HB" else "R", alpha, momentum, self.constants, self.rho)

    def inside(self, alpha: float, momentum: float) -> bool:
        return 0 < alpha < self.alpha_bar and 0 < momentum < self.momentum_bound(alpha)


def conservative_bounds(kind: str, constants: SmoothnessConstants, rho: float,
                        z2: float = 1.0, z3: float = 1.0, margin: float = 1.01) -> ConservativeBounds:
    """Step-size bound and test vector for the heavy-ball (``P``) or Nesterov (``R``) case.

    ``z4`` and ``z1`` are placed ``margin`` times above their strict lower
    bounds; ``z2``, ``z3`` are free.
    """
    if z2 <= 0 or z3 <= 0:
        raise ValueError("z2 and z3 must be positive")
    if not 0 <= rho < 1:
        raise ValueError(f"rho={rho} outside [0, 1)")
    kind = kind.upper()
    m, L1, L2, L3 = constants.m, constants.L1, constants.L2, constants.L3
    z4 = margin * 2 * L2 * z3 / (1 - rho)
    z1 = margin * (L1 * z3 + L3 * z4) / m
    if kind == "HB":
        terms = {
            "J1": z2 / (L1 * (1 + L3) * z1 + L1 * z3 + L3 * z4),
            "J2": (1 - rho) / (L1 * L3),
            "J2'": (1 - rho) * z3 / (L1 * L3 * (1 + L3) * z1 + L1 * L3 * z3 + L3 ** 2 * z4),
            "J3": (1 - rho) / (L2 * L3 * (1 + L3)),
            "J4": ((1 - rho) * z4 - 2 * L2 * z3)
                  / (L2 * (1 + L3) * (L1 * (1 + L3) * z1 + L1 * z3 + L3 * z4)),
            "1/L1": 1 / L1,
        }
    elif kind == "NES":
        terms = {
            "Theta1": z2 / (L1 * (1 + L3) * z1 + L1 * z3 + L3 * z4),
            "Theta2": (1 - rho) / (L1 * (L3 + 1)),
            "Theta3": (1 - rho) * z3 / (L1 * L3 * (2 + L3) * z1 + L1 * (L3 + 1) * z3 + (L3 ** 2 + L3) * z4),
            "Theta4": (1 - rho) / (L2 * L3 * (1 + L3)),
            "Theta5": ((1 - rho) * z4 - 2 * L2 * z3)
                      / (L1 * (L2 + 1) * (1 + L3) * ((1 + L3) * z1 + z3) + L2 * (1 + L3) ** 2 * z4),
            "1/L1": 1 / L1,
        }
    else:
        raise ValueError(f"unknown kind {kind!r}; expected HB or NES")
    return ConservativeBounds(kind, constants, rho, np.array([z1, z2, z3, z4]), terms,
                              min(terms.values()))


@dataclass
class RateFit:
    rate: float
    r_squared: float
    slope: float
    intercept: float
    n_points: int

    @property
    def converging(self) -> bool:
        return self.rate < 1.0


def estimate_rate(errors: Trace | Sequence[float], burn_in: int = 0) -> RateFit:
    """Least-squares fit of ``log err_k`` against ``k`` after ``burn_in`` rows.

    ``errors`` is a trace (its ``state_err`` column is used) or a plain
    sequence. An exact zero truncates the series before it.
    """
    if isinstance(errors, Trace):
        ks = np.array([r.k for r in errors.rows], dtype=float)
        err = errors.column("state_err")
    else:
        err = np.asarray(errors, dtype=float)
        ks = np.arange(err.size, dtype=float)
    zeros = np.nonzero(err <= 0.0)[0]
    if zeros.size:
        ks, err = ks[:zeros[0]], err[:zeros[0]]
    ks, err = ks[burn_in:], err[burn_in:]
    if err.size < 10:
        raise ValueError(f"need at least burn_in + 10 positive errors, have {err.size} after burn-in")
    logs = np.log(err)
    slope, intercept = np.polyfit(ks, logs, 1)
    resid = logs - (slope * ks + intercept)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(math.exp(slope), r2, float(slope), float(intercept), int(err.size))


def lyapunov_vectors(trace: Trace) -> np.ndarray:
    V = np.array([r.lyapunov() for r in trace.rows])
    if np.isnan(V).any():
        raise ValueError("trace lacks state errors; run it with an oracle optimum")
    return V


def check_lyapunov(trace: Trace, M: ConvergenceMatrix | np.ndarray) -> float:
    """``max_k max_c (V_{k+1} - M V_k)_c``; nonpositive when the bound holds."""
    entries = M.entries if isinstance(M, ConvergenceMatrix) else np.asarray(M, dtype=float)
    V = lyapunov_vectors(trace)
    if len(V) < 2:
        return -math.inf
    return float(np.max(V[1:] - V[:-1] @ entries.T))


@dataclass
class SweepRow:
    alpha: float
    momentum: float
    member: bool
    spectral_radius: float
    jury_flags: str


def sweep(kind: str, alphas: Sequence[float], momenta: Sequence[float],
          constants: SmoothnessConstants, rho: float) -> list[SweepRow]:
    rows = []
    for a in alphas:
        for b in momenta:
            rep = region_member(kind, float(a), float(b), constants, rho)
            rows.append(SweepRow(float(a), float(b), rep.member, rep.spectral_radius, rep.jury.flags()))
    return rows


def random_quartics(n: int, seed: int, gap: float = 1e-6, max_modulus: float = 2.0) -> list[Quartic]:
    """Real monic quartics built from placed roots whose moduli avoid ``[1-gap, 1+gap]``.

    Each draws zero, one or two complex-conjugate pairs; the remaining roots
    are real with random sign.
    """
    rng = np.random.default_rng(seed)

    def modulus():
        while True:
            r = rng.uniform(0.0, max_modulus)
            if abs(r - 1.0) > gap:
                return r

    out = []
    for _ in range(n):
        pairs = int(rng.integers(0, 3))
        roots = []
        for _ in range(pairs):
            z = modulus() * np.exp(1j * rng.uniform(0.0, np.pi))
            roots += [z, np.conj(z)]
        roots += [modulus() * rng.choice([-1.0, 1.0]) for _ in range(4 - 2 * pairs)]
        desc = np.real(np.poly(roots))
        out.append(Quartic(tuple(float(c) for c in desc[::-1][:4])))
    return out
