"""
Convergence Bound Evaluation

Plug constants into the W2 error bounds of LS-SGLD for log-concave (convex) and
dissipative (nonconvex) targets, and sweep them over the smoothing strength.
The formulas are evaluated exactly as displayed; nothing here estimates the
unknown constants (log-Sobolev constant, f(0), normalizer).
"""

import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, Iterable, List, Optional

from errors import InvalidBoundInputError
from smoothing_operator import LaplacianOperator, build, gamma2, inverse_trace_mean, spectral_norm


@dataclass(frozen=True)
class BoundInputs:
    K: int
    eta: float
    beta: float
    d: int
    omega: float
    B: int
    lambda_sobolev: float
    c0: float
    gamma1: float
    gamma2: float
    f0_beta_logLambda: float
    b_dissip: Optional[float] = None
    M: Optional[float] = None

    def validate(self, nonconvex: bool = False) -> List[str]:
        errors = []
        for name in ('K', 'eta', 'beta', 'd', 'B', 'lambda_sobolev'):
            if not getattr(self, name) > 0:
                errors.append(f"{name}: must be > 0, got {getattr(self, name)}")
        for name in ('c0', 'gamma1', 'gamma2'):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                errors.append(f"{name}: must be in (0, 1], got {value}")
        if self.omega < 0:
            errors.append(f"omega: must be >= 0, got {self.omega}")
        if self.f0_beta_logLambda < 0:
            errors.append(f"f0_beta_logLambda: must be >= 0, got {self.f0_beta_logLambda}")
        if nonconvex:
            if self.b_dissip is None or self.b_dissip < 0:
                errors.append(f"b_dissip: required and >= 0, got {self.b_dissip}")
            if self.M is None or self.M < 0:
                errors.append(f"M: required and >= 0, got {self.M}")
        return errors


@dataclass(frozen=True)
class BoundBreakdown:
    stochastic_term: float
    discretization_term: float
    ergodicity_term: float

    @property
    def total(self) -> float:
        return self.stochastic_term + self.discretization_term + self.ergodicity_term

    @property
    def sampling_term(self) -> float:
        """Everything except the ergodicity term."""
        return self.stochastic_term + self.discretization_term

    def to_dict(self) -> Dict[str, float]:
        row = asdict(self)
        row['total'] = self.total
        return row


def _check(inp: BoundInputs, nonconvex: bool = False) -> None:
    errors = inp.validate(nonconvex)
    if errors:
        raise InvalidBoundInputError("; ".join(errors))


def ergodicity_term(inp: BoundInputs) -> float:
    """[2 lambda (beta f(0) + log Lambda)]^(1/2) * exp(-c0 K eta / (2 beta lambda))."""
    decay = math.exp(-inp.c0 * inp.K * inp.eta / (2.0 * inp.beta * inp.lambda_sobolev))
    return math.sqrt(2.0 * inp.lambda_sobolev * inp.f0_beta_logLambda) * decay


def convex_bound(inp: BoundInputs) -> BoundBreakdown:
    """
    Log-concave bound:

        (2 g1 K eta^2 beta d w^2 / B)^(1/2) + [8 g2 K eta^2 (K+1) beta d eta]^(1/2) + ergodicity
    """
    _check(inp)
    K, eta = inp.K, inp.eta
    stochastic = math.sqrt(2.0 * inp.gamma1 * K * eta ** 2 * inp.beta * inp.d * inp.omega ** 2 / inp.B)
    discretization = math.sqrt(8.0 * inp.gamma2 * K * eta ** 2 * (K + 1) * inp.beta * inp.d * eta)
    return BoundBreakdown(stochastic, discretization, ergodicity_term(inp))


def sgld_convex_bound(inp: BoundInputs) -> BoundBreakdown:
    """
    Plain SGLD bound, c0 = g1 = g2 = 1 with beta dropped from the first term
    and inverted in the second:

        (2 K eta^2 d w^2 / B)^(1/2) + [8 K eta^2 (K+1) d eta / beta]^(1/2) + ergodicity

    The smoothing constants stored in inp are ignored.
    """
    plain = replace(inp, c0=1.0, gamma1=1.0, gamma2=1.0)
    _check(plain)
    K, eta = inp.K, inp.eta
    stochastic = math.sqrt(2.0 * K * eta ** 2 * inp.d * inp.omega ** 2 / inp.B)
    discretization = math.sqrt(8.0 * K * eta ** 2 * (K + 1) * inp.d * eta / inp.beta)
    return BoundBreakdown(stochastic, discretization, ergodicity_term(plain))


def gamma_bar(inp: BoundInputs) -> float:
    """(3/2 + 2 (b + d / beta))^(1/2)."""
    return math.sqrt(1.5 + 2.0 * (inp.b_dissip + inp.d / inp.beta))


def nonconvex_bound(inp: BoundInputs) -> BoundBreakdown:
    """
    Dissipative-target bound:

        G (K eta)^(1/2) [q^(1/2) + q^(1/4)] + ergodicity,
        q = g1 beta d w^2 K eta / B + 2 g2 M^2 d K eta^2

    Stochastic noise and discretization are mixed inside q, so the whole bracket
    is reported as discretization_term and stochastic_term is 0.
    """
    _check(inp, nonconvex=True)
    K, eta = inp.K, inp.eta
    inner = (inp.gamma1 * inp.beta * inp.d * inp.omega ** 2 * K * eta / inp.B
             + 2.0 * inp.gamma2 * inp.M ** 2 * inp.d * K * eta ** 2)
    bracket = gamma_bar(inp) * math.sqrt(K * eta) * (inner ** 0.5 + inner ** 0.25)
    return BoundBreakdown(0.0, bracket, ergodicity_term(inp))


def conservative_inputs(op: LaplacianOperator, use_inverse_trace: bool = False, **values) -> BoundInputs:
    """
    BoundInputs with the smoothing constants taken from the operator.

    c0 = 1/|A|, gamma1 = 1/|A|^2 (the conservative ends of their ranges), and gamma2 from
    the spectrum: mean(lambda^-2) by default, mean(lambda^-1) with use_inverse_trace.
    The remaining fields come from values; d defaults to op.d.
    """
    norm = spectral_norm(op)
    values.setdefault('d', op.d)
    values['c0'] = 1.0 / norm
    values['gamma1'] = 1.0 / norm ** 2
    values['gamma2'] = inverse_trace_mean(op) if use_inverse_trace else gamma2(op)
    return BoundInputs(**values)


def gamma2_definition(use_inverse_trace: bool = False) -> str:
    """Name of the spectral average used for gamma2, recorded next to each bound row."""
    return 'mean_inverse' if use_inverse_trace else 'mean_inverse_square'


BOUND_FUNCTIONS = {
    'convex': convex_bound,
    'nonconvex': nonconvex_bound,
}


def bounds_sweep(sigmas: Iterable[float], base: Dict[str, float], theorem: str = 'convex',
                 use_inverse_trace: bool = False) -> List[Dict[str, float]]:
    """
    Evaluate one bound over several smoothing strengths with operator-derived constants.

    Args:
        sigmas: Smoothing strengths to evaluate
        base: Every BoundInputs field except c0, gamma1, gamma2
        theorem: 'convex' or 'nonconvex'

    Returns:
        One row per sigma with the constants, the three terms and the total
    """
    if theorem not in BOUND_FUNCTIONS:
        raise InvalidBoundInputError(f"theorem: expected one of {', '.join(BOUND_FUNCTIONS)}, got {theorem!r}")
    bound = BOUND_FUNCTIONS[theorem]
    d = int(base['d'])
    rows = []
    for sigma in sigmas:
        inp = conservative_inputs(build(d, float(sigma)), use_inverse_trace, **base)
        row = {'theorem': theorem, 'sigma': float(sigma), 'c0': inp.c0,
               'gamma1': inp.gamma1, 'gamma2': inp.gamma2,
               'gamma2_definition': gamma2_definition(use_inverse_trace)}
        row.update(bound(inp).to_dict())
        rows.append(row)
    return rows
