"""
Tight bounds and identification formulas for the probabilities of causation.

Notation: x is treatment (X=1), x' is no treatment (X=0), y is the outcome
(Y=1), y' its absence. P(y_x) is the experimental probability of y under
do(X=1); P(x, y) is an observational joint cell.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

from django.core.exceptions import ValidationError
from django.db import models

from core.exceptions import UndefinedQuantityError

logger = logging.getLogger(__name__)

FLAG_TOLERANCE = 1e-9
NORMALIZATION_TOLERANCE = 1e-9
RANGE_TOLERANCE = 1e-12
DENOMINATOR_GUARD = 1e-12


class Quantity(models.TextChoices):
    PNS = "PNS", "Probability of necessity and sufficiency"
    PN = "PN", "Probability of necessity"
    PS = "PS", "Probability of sufficiency"


@dataclass(frozen=True)
class DistributionPair:
    """
    Experimental and observational distributions of one (sub)population.

    ``obs_joint`` is indexed [x][y]: obs_joint[1][1] = P(x, y),
    obs_joint[1][0] = P(x, y'), obs_joint[0][1] = P(x', y),
    obs_joint[0][0] = P(x', y').
    """

    exp_y_given_do_x1: float
    exp_y_given_do_x0: float
    obs_joint: Sequence[Sequence[float]]

    def __post_init__(self):
        joint = tuple(tuple(float(p) for p in row) for row in self.obs_joint)
        object.__setattr__(self, "obs_joint", joint)
        object.__setattr__(self, "exp_y_given_do_x1", float(self.exp_y_given_do_x1))
        object.__setattr__(self, "exp_y_given_do_x0", float(self.exp_y_given_do_x0))
        self.validate()

    @classmethod
    def from_cells(cls, p_y_do_x1, p_y_do_x0, p_x1y1, p_x1y0, p_x0y1, p_x0y0):
        return cls(
            exp_y_given_do_x1=p_y_do_x1,
            exp_y_given_do_x0=p_y_do_x0,
            obs_joint=((p_x0y0, p_x0y1), (p_x1y0, p_x1y1)),
        )

    def validate(self):
        if len(self.obs_joint) != 2 or any(len(row) != 2 for row in self.obs_joint):
            raise ValidationError("obs_joint must be a 2x2 table.")
        values = [self.exp_y_given_do_x1, self.exp_y_given_do_x0] + [
            p for row in self.obs_joint for p in row
        ]
        for value in values:
            if not (-RANGE_TOLERANCE <= value <= 1.0 + RANGE_TOLERANCE):
                raise ValidationError(f"Probability out of range: {value}")
        total = sum(values[2:])
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValidationError(f"obs_joint must sum to 1, got {total}")

    # Experimental quantities
    @property
    def p_y_x(self) -> float:
        return self.exp_y_given_do_x1

    @property
    def p_y_xprime(self) -> float:
        return self.exp_y_given_do_x0

    @property
    def p_yprime_x(self) -> float:
        return 1.0 - self.exp_y_given_do_x1

    @property
    def p_yprime_xprime(self) -> float:
        return 1.0 - self.exp_y_given_do_x0

    # Observational quantities
    @property
    def p_x_y(self) -> float:
        return self.obs_joint[1][1]

    @property
    def p_x_yprime(self) -> float:
        return self.obs_joint[1][0]

    @property
    def p_xprime_y(self) -> float:
        return self.obs_joint[0][1]

    @property
    def p_xprime_yprime(self) -> float:
        return self.obs_joint[0][0]

    @property
    def p_y(self) -> float:
        return self.p_x_y + self.p_xprime_y

    @property
    def p_yprime(self) -> float:
        return 1.0 - self.p_y


@dataclass(frozen=True)
class CausationBounds:
    quantity: str
    lb: float
    ub: float
    consistent: bool = True

    @property
    def width(self) -> float:
        return self.ub - self.lb


def _bounds(quantity: str, lb: float, ub: float) -> CausationBounds:
    consistent = lb <= ub + FLAG_TOLERANCE
    if not consistent:
        logger.debug(f"Inconsistent {quantity} bounds: lb={lb!r} > ub={ub!r}")
    return CausationBounds(quantity=quantity, lb=lb, ub=ub, consistent=consistent)


def pns_bounds(dp: DistributionPair) -> CausationBounds:
    """Tight PNS bounds from combined experimental and observational data."""
    lb = max(
        0.0,
        dp.p_y_x - dp.p_y_xprime,
        dp.p_y - dp.p_y_xprime,
        dp.p_y_x - dp.p_y,
    )
    ub = min(
        dp.p_y_x,
        dp.p_yprime_xprime,
        dp.p_x_y + dp.p_xprime_yprime,
        dp.p_y_x - dp.p_y_xprime + dp.p_x_yprime + dp.p_xprime_y,
    )
    return _bounds(Quantity.PNS, lb, ub)


def _guard(denominator: float, quantity: str, event: str):
    if denominator <= DENOMINATOR_GUARD:
        raise UndefinedQuantityError(
            f"{quantity} is undefined: it conditions on {event}, which has "
            f"probability {denominator!r}."
        )


def pn_bounds(dp: DistributionPair) -> CausationBounds:
    """Tight PN bounds; PN conditions on (x, y)."""
    _guard(dp.p_x_y, Quantity.PN, "(x, y)")
    lb = max(0.0, (dp.p_y - dp.p_y_xprime) / dp.p_x_y)
    ub = min(1.0, (dp.p_yprime_xprime - dp.p_xprime_yprime) / dp.p_x_y)
    return _bounds(Quantity.PN, lb, ub)


def ps_bounds(dp: DistributionPair) -> CausationBounds:
    """Tight PS bounds; PS conditions on (x', y')."""
    _guard(dp.p_xprime_yprime, Quantity.PS, "(x', y')")
    lb = max(0.0, (dp.p_yprime - dp.p_yprime_x) / dp.p_xprime_yprime)
    ub = min(1.0, (dp.p_y_x - dp.p_x_y) / dp.p_xprime_yprime)
    return _bounds(Quantity.PS, lb, ub)


BOUND_FUNCTIONS = {
    Quantity.PNS: pns_bounds,
    Quantity.PN: pn_bounds,
    Quantity.PS: ps_bounds,
}


def bounds_for(quantity: str, dp: DistributionPair) -> CausationBounds:
    try:
        function = BOUND_FUNCTIONS[Quantity(quantity.upper())]
    except ValueError as exc:
        raise ValidationError(f"Unknown quantity: {quantity}") from exc
    return function(dp)


@dataclass(frozen=True)
class PointEstimates:
    pns: float
    pn: float
    ps: float


def identifiable_point_estimates(dp: DistributionPair) -> PointEstimates:
    """
    Point values of PNS, PN and PS. Valid only when the caller knows the
    mechanism is monotonic (treatment never prevents the outcome).

    PN and PS are NaN when the event they condition on has probability zero;
    PNS is always defined.
    """
    pn = ps = math.nan
    if dp.p_x_y > DENOMINATOR_GUARD:
        pn = (dp.p_y - dp.p_y_xprime) / dp.p_x_y
    if dp.p_xprime_yprime > DENOMINATOR_GUARD:
        ps = (dp.p_y_x - dp.p_y) / dp.p_xprime_yprime
    return PointEstimates(pns=dp.p_y_x - dp.p_y_xprime, pn=pn, ps=ps)


@dataclass(frozen=True)
class Violation:
    inequality: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        """rhs - lhs; negative for a violated inequality."""
        return self.rhs - self.lhs


@dataclass
class ConsistencyReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_consistency(dp: DistributionPair) -> ConsistencyReport:
    """
    Flag experimental/observational incompatibilities:
    P(x,y) <= P(y_x) <= 1 - P(x,y') and P(x',y) <= P(y_x') <= 1 - P(x',y').
    """
    checks = [
        ("P(x,y) <= P(y_x)", dp.p_x_y, dp.p_y_x),
        ("P(y_x) <= 1 - P(x,y')", dp.p_y_x, 1.0 - dp.p_x_yprime),
        ("P(x',y) <= P(y_x')", dp.p_xprime_y, dp.p_y_xprime),
        ("P(y_x') <= 1 - P(x',y')", dp.p_y_xprime, 1.0 - dp.p_xprime_yprime),
    ]
    report = ConsistencyReport()
    for inequality, lhs, rhs in checks:
        if lhs > rhs + FLAG_TOLERANCE:
            report.violations.append(Violation(inequality, lhs, rhs))
    return report
