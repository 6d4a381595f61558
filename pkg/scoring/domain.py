"""
domain.py

Value types shared by the scoring functions, the regression heads and the
calibration diagnostics: the phi-family index, the composite score
specification and the composite triplet (lower ES, quantile, upper ES), both
as a single prediction and as a batch of predictions.
"""

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .exceptions import DomainError
from .phi import scaled_phi

# Relative slack for the ordering checks; closed-form truths are computed
# through different special functions and may touch within rounding.
ORDER_RTOL = 1e-12


def check_probability(tau, name="tau"):
    """Raise DomainError unless 0 < tau < 1."""
    if not (isinstance(tau, (int, float, np.floating)) and 0.0 < float(tau) < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {tau!r}")
    return float(tau)


class ScoreForm(str, enum.Enum):
    """Choice of the convex function Phi in the composite score."""

    ADDITIVE = "additive"
    REVELATION_PLUS = "revelation_plus"
    REVELATION_MINUS = "revelation_minus"


# c = 2 gives phi_b unit weight, so Bregman losses are Tweedie deviances.
DEFAULT_PHI_SCALE = 2.0


@dataclass(frozen=True)
class PhiIndex:
    """
    Member (c/2) * phi_b of the Tweedie phi family.

    Attributes:
        b (float): Family index; the Bregman divergence is the Tweedie
            deviance with power p = 2 - b.
        c (float): Positive scale.
    """

    b: float
    c: float = DEFAULT_PHI_SCALE

    def __post_init__(self):
        if not math.isfinite(self.b):
            raise DomainError(f"phi index b must be finite, got {self.b!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise DomainError(f"phi scale c must be positive, got {self.c!r}")


@dataclass(frozen=True)
class ScoreSpec:
    """
    Full description of a composite-triplet scoring function.

    Attributes:
        form (ScoreForm): Which Phi is used.
        tau (float): Probability level of the triplet.
        phi (PhiIndex | None): phi of the mean component (revelation forms).
        phi_minus (PhiIndex | None): phi for the lower ES, requires b > 1.
        phi_plus (PhiIndex | None): phi for the upper ES, requires b < 1.
        g_scale (float): c_tau in g(y) = c_tau * y; 0 means g is constant.

    Raises:
        DomainError: if a required phi is missing, a sign constraint is
            violated, or G_{e-,e+} fails the increasing spot check.
    """

    form: ScoreForm
    tau: float
    phi: Optional[PhiIndex] = None
    phi_minus: Optional[PhiIndex] = None
    phi_plus: Optional[PhiIndex] = None
    g_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "form", ScoreForm(self.form))
        check_probability(self.tau)
        if not (math.isfinite(self.g_scale) and self.g_scale >= 0):
            raise DomainError(f"g_scale must be nonnegative, got {self.g_scale!r}")

        required = {
            ScoreForm.ADDITIVE: ("phi_minus", "phi_plus"),
            ScoreForm.REVELATION_PLUS: ("phi", "phi_plus"),
            ScoreForm.REVELATION_MINUS: ("phi", "phi_minus"),
        }[self.form]
        for name in required:
            if getattr(self, name) is None:
                raise DomainError(f"{self.form.value} score requires {name}")
        for name in ("phi", "phi_minus", "phi_plus"):
            if name not in required and getattr(self, name) is not None:
                raise DomainError(f"{self.form.value} score does not use {name}")

        if self.phi_minus is not None and not self.phi_minus.b > 1:
            raise DomainError(f"phi_minus requires b > 1, got b = {self.phi_minus.b}")
        if self.phi_plus is not None and not self.phi_plus.b < 1:
            raise DomainError(f"phi_plus requires b < 1, got b = {self.phi_plus.b}")

        grid = np.array([1e-3, 0.5, 1.0, 10.0, 1e3])
        e_minus, e_plus = np.meshgrid(grid, grid)
        if not np.all(self.increasing_slope(e_minus, e_plus) > 0):
            raise DomainError("G_{e-,e+} is not strictly increasing for this spec")

    def increasing_slope(self, e_minus, e_plus):
        """Slope in v of G_{e-,e+}(v) = g(v) + d1Phi v / tau - d2Phi v / (1 - tau)."""
        slope = np.full(np.broadcast(np.asarray(e_minus), np.asarray(e_plus)).shape, self.g_scale)
        if self.form in (ScoreForm.ADDITIVE, ScoreForm.REVELATION_MINUS):
            slope = slope + scaled_phi(self.phi_minus, e_minus, 1) / self.tau
        if self.form in (ScoreForm.ADDITIVE, ScoreForm.REVELATION_PLUS):
            slope = slope - scaled_phi(self.phi_plus, e_plus, 1) / (1 - self.tau)
        return slope

    def describe(self):
        """Return a flat dict of the spec, used by reports and model files."""
        out = {"form": self.form.value, "tau": self.tau, "g_scale": self.g_scale}
        for name in ("phi", "phi_minus", "phi_plus"):
            index = getattr(self, name)
            out[f"{name}_b"] = None if index is None else index.b
            out[f"{name}_c"] = None if index is None else index.c
        return out


@dataclass(frozen=True)
class CompositeTriplet:
    """A single (lower ES, tau-quantile, upper ES) prediction with e_minus <= v <= e_plus."""

    e_minus: float
    v: float
    e_plus: float

    def __post_init__(self):
        values = (self.e_minus, self.v, self.e_plus)
        if not all(math.isfinite(x) and x > 0 for x in values):
            raise DomainError(f"triplet components must be positive and finite, got {values}")
        if self.e_minus > self.v * (1 + ORDER_RTOL) or self.v > self.e_plus * (1 + ORDER_RTOL):
            raise DomainError(f"triplet must satisfy e_minus <= v <= e_plus, got {values}")

    def as_tuple(self):
        return (self.e_minus, self.v, self.e_plus)


class TripletBatch:
    """
    Column-wise storage of many composite triplets.

    Attributes:
        e_minus, v, e_plus (np.ndarray): Equal-length 1-D float arrays.
    """

    __slots__ = ("e_minus", "v", "e_plus")

    def __init__(self, e_minus, v, e_plus, validate=True):
        self.e_minus = np.asarray(e_minus, dtype=float).reshape(-1)
        self.v = np.asarray(v, dtype=float).reshape(-1)
        self.e_plus = np.asarray(e_plus, dtype=float).reshape(-1)
        if not (len(self.e_minus) == len(self.v) == len(self.e_plus)):
            raise DomainError("triplet columns must have equal length")
        if validate:
            self.validate()

    def validate(self):
        stacked = np.stack([self.e_minus, self.v, self.e_plus])
        if not np.all(np.isfinite(stacked)) or not np.all(stacked > 0):
            raise DomainError("triplet components must be positive and finite")
        bad = (self.e_minus > self.v * (1 + ORDER_RTOL)) | (self.v > self.e_plus * (1 + ORDER_RTOL))
        if np.any(bad):
            first = int(np.flatnonzero(bad)[0])
            raise DomainError(f"triplet {first} violates e_minus <= v <= e_plus")

    @classmethod
    def from_triplets(cls, triplets: Iterable[CompositeTriplet]):
        rows = [t.as_tuple() for t in triplets]
        if not rows:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        return cls(*np.array(rows, dtype=float).T)

    def as_matrix(self):
        return np.column_stack([self.e_minus, self.v, self.e_plus])

    def mean_recombination(self, tau):
        """Implied conditional means tau * e_minus + (1 - tau) * e_plus."""
        return tau * self.e_minus + (1 - tau) * self.e_plus

    def subset(self, indices):
        return TripletBatch(self.e_minus[indices], self.v[indices], self.e_plus[indices], validate=False)

    def __len__(self):
        return len(self.v)

    def __iter__(self) -> Iterator[CompositeTriplet]:
        for row in zip(self.e_minus, self.v, self.e_plus):
            yield CompositeTriplet(*map(float, row))

    def __getitem__(self, i):
        return CompositeTriplet(float(self.e_minus[i]), float(self.v[i]), float(self.e_plus[i]))


def as_triplet_batch(predictions):
    """Accept a TripletBatch or any iterable of CompositeTriplet."""
    if isinstance(predictions, TripletBatch):
        return predictions
    return TripletBatch.from_triplets(predictions)
