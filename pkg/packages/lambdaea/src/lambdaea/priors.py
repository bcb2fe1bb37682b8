"""Class-prior bookkeeping for positive-unlabeled training."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from lambdaea.exceptions import ValidationError

_TOL = 1e-9


@dataclass(frozen=True)
class ClassPriors:
    """Priors of the matchable (positive) class.

    Attributes:
        pi_p: Matchable fraction over all entities
        pi_n: Dangling fraction over all entities, ``1 - pi_p``
        pi_p_tr: Labeled-positive (anchor) fraction over all entities
        pi_p_u: Matchable fraction among unlabeled entities
        pi_n_u: ``1 - pi_p_u``
        alpha: ``pi_n_u / pi_n``; infinite when ``pi_n`` is 0
    """

    pi_p: float
    pi_n: float
    pi_p_tr: float
    pi_p_u: float
    pi_n_u: float
    alpha: float

    def __post_init__(self) -> None:
        for name in ("pi_p", "pi_n", "pi_p_tr", "pi_p_u", "pi_n_u"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name}={value} outside [0, 1]")
        if not math.isclose(self.pi_n, 1.0 - self.pi_p, abs_tol=_TOL):
            raise ValidationError("pi_n must equal 1 - pi_p")
        if not math.isclose(self.pi_n_u, 1.0 - self.pi_p_u, abs_tol=_TOL):
            raise ValidationError("pi_n_u must equal 1 - pi_p_u")
        if self.pi_n > 0 and not math.isclose(self.alpha, self.pi_n_u / self.pi_n, rel_tol=_TOL):
            raise ValidationError("alpha must equal pi_n_u / pi_n")

    @classmethod
    def from_estimates(cls, pi_p: float, pi_p_u: float, pi_p_tr: float) -> ClassPriors:
        pi_n = 1.0 - pi_p
        pi_n_u = 1.0 - pi_p_u
        alpha = pi_n_u / pi_n if pi_n > 0 else math.inf
        return cls(pi_p=pi_p, pi_n=pi_n, pi_p_tr=pi_p_tr, pi_p_u=pi_p_u, pi_n_u=pi_n_u, alpha=alpha)

    @classmethod
    def from_transductive(cls, pi_p: float, pi_p_tr: float) -> ClassPriors:
        """Priors where the unlabeled prior follows from the overall one.

        ``pi_p_u = (pi_p - pi_p_tr) / (1 - pi_p_tr)`` for ``pi_p >= pi_p_tr``.
        """
        if pi_p < pi_p_tr:
            raise ValidationError(f"pi_p={pi_p} is below the labeled ratio {pi_p_tr}")
        if pi_p_tr >= 1.0:
            raise ValidationError("labeled ratio must be below 1")
        pi_p_u = (pi_p - pi_p_tr) / (1.0 - pi_p_tr)
        return cls.from_estimates(pi_p, min(max(pi_p_u, 0.0), 1.0), pi_p_tr)

    def satisfies_transductive_identity(self, tol: float = 1e-9) -> bool:
        if self.pi_p < self.pi_p_tr or self.pi_p_tr >= 1.0:
            return False
        expected = (self.pi_p - self.pi_p_tr) / (1.0 - self.pi_p_tr)
        return math.isclose(self.pi_p_u, expected, abs_tol=tol)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)
