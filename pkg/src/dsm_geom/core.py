"""Abstract data set model: charts, data sets, divergences, model maps.

A data set model couples a space of data sets, a parametrised model
manifold, a model map and a divergence function.  Data sets enter every
computation only through finitely many expectation values, so the data
side of the contract is an expectation provider: given a statistic id
(and, for parameter-dependent integrands, the evaluation point) it
returns one real number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .errors import DomainError, MissingStatistic, NumericalFailure, Unsupported

_LOG_2PI = math.log(2.0 * math.pi)
EULER_GAMMA = float(np.euler_gamma)


def as_coords(theta) -> np.ndarray:
    """Coerce a ParameterPoint / sequence into a float vector."""
    if isinstance(theta, ParameterPoint):
        return theta.coords
    arr = np.asarray(theta, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"parameter point must be a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ParameterPoint:
    """Coordinates of one model point in a named chart."""

    coords: np.ndarray
    chart_id: str = "default"

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=float)
        if arr.ndim != 1 or arr.size < 1 or not np.all(np.isfinite(arr)):
            raise DomainError("parameter point needs >= 1 finite coordinates")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        return self.coords.size


@dataclass(frozen=True)
class ChartSpec:
    """Open coordinate box of a chart plus a finite box used for sampling.

    ``domain`` bounds are open (exclusive); infinities are allowed.
    ``sample_box`` is a finite sub-box used for random sampling and
    default grids, so boundary-sensitive stencils stay well inside the
    chart (e.g. the sphere chart keeps 0.05 away from the poles).
    """

    dim: int
    domain: tuple
    names: tuple
    sample_box: tuple
    chart_id: str = "default"

    def __post_init__(self):
        if self.dim < 1 or len(self.domain) != self.dim or len(self.names) != self.dim:
            raise DomainError("inconsistent chart specification")
        for (lo, hi), (slo, shi) in zip(self.domain, self.sample_box):
            if not (lo < hi and slo < shi and lo <= slo and shi <= hi):
                raise DomainError("sample box must sit inside the open domain")

    def contains(self, theta, margin: float = 0.0) -> bool:
        coords = as_coords(theta)
        if coords.size != self.dim:
            return False
        for value, (lo, hi) in zip(coords, self.domain):
            if not (lo + margin < value < hi - margin):
                return False
        return True

    def require(self, theta) -> np.ndarray:
        coords = as_coords(theta)
        if not self.contains(coords):
            raise DomainError(
                f"point {coords.tolist()} outside chart domain {self.domain}"
            )
        return coords

    def clip_inside(self, coords: np.ndarray, margin: float = 1e-9) -> np.ndarray:
        """Project a vector onto the open box, ``margin`` inside each bound."""
        out = np.array(coords, dtype=float)
        for i, (lo, hi) in enumerate(self.domain):
            if np.isfinite(lo):
                out[i] = max(out[i], lo + margin)
            if np.isfinite(hi):
                out[i] = min(out[i], hi - margin)
        return out

    def random_points(self, rng: np.random.Generator, count: int) -> list:
        """Uniform draws from the sample box."""
        lows = np.array([lo for lo, _ in self.sample_box])
        highs = np.array([hi for _, hi in self.sample_box])
        return [lows + rng.random(self.dim) * (highs - lows) for _ in range(count)]

    def central_grid(self, per_axis: int, fraction: float = 0.6) -> list:
        """Regular grid over the central ``fraction`` of the sample box."""
        axes = []
        for lo, hi in self.sample_box:
            pad = 0.5 * (1.0 - fraction) * (hi - lo)
            axes.append(np.linspace(lo + pad, hi - pad, per_axis))
        mesh = np.meshgrid(*axes, indexing="ij")
        return [np.array(pt) for pt in zip(*(m.ravel() for m in mesh))]


@dataclass(frozen=True)
class StatisticQuery:
    """One expectation request: statistic id plus optional chart point."""

    statistic_id: str
    theta: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# Expectation providers (the data sets)
# ---------------------------------------------------------------------------


class DataSet:
    """Expectation provider.  Subclasses answer statistic queries.

    ``provider_kind`` is one of AnalyticDistribution, MomentSpecified,
    EmpiricalSample, RegressionSample.  Queries are deterministic for a
    fixed payload.
    """

    provider_kind = "AnalyticDistribution"
    label = "dataset"

    def statistic(self, statistic_id: str, theta=None) -> float:
        raise MissingStatistic(
            f"{self.label} cannot answer statistic '{statistic_id}'"
        )

    def expectation(self, query: StatisticQuery) -> float:
        return self.statistic(query.statistic_id, query.theta)


class GaussianData(DataSet):
    """Normal distribution with known mean and standard deviation."""

    def __init__(self, mean: float, std: float):
        if std <= 0:
            raise DomainError("gaussian data needs std > 0")
        self.mean = float(mean)
        self.std = float(std)
        self.label = f"gaussian({mean},{std})"

    def statistic(self, statistic_id, theta=None):
        if statistic_id == "mean_x":
            return self.mean
        if statistic_id == "mean_x2":
            return self.std**2 + self.mean**2
        if statistic_id == "entropy":
            return 0.5 * (1.0 + _LOG_2PI) + math.log(self.std)
        return super().statistic(statistic_id, theta)


class UniformData(DataSet):
    """Uniform distribution on (lo, hi)."""

    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise DomainError("uniform data needs hi > lo")
        self.lo = float(lo)
        self.hi = float(hi)
        self.label = f"uniform({lo},{hi})"

    def statistic(self, statistic_id, theta=None):
        if statistic_id == "mean_x":
            return 0.5 * (self.lo + self.hi)
        if statistic_id == "mean_x2":
            m = 0.5 * (self.lo + self.hi)
            return (self.hi - self.lo) ** 2 / 12.0 + m**2
        if statistic_id == "entropy":
            return math.log(self.hi - self.lo)
        return super().statistic(statistic_id, theta)


class TwoPointData(DataSet):
    """Symmetric two-point measure on {center - h, center + h}.

    Its differential entropy is -inf; the entropy offset instead uses the
    maximum-entropy (matching-variance Gaussian) value so divergences stay
    non-negative.  The offset is theta-independent, so derivatives and all
    induced geometry are unaffected.
    """

    def __init__(self, center: float, half_spread: float):
        if half_spread <= 0:
            raise DomainError("two-point data needs half_spread > 0")
        self.center = float(center)
        self.half_spread = float(half_spread)
        self.label = f"twopoint({center},{half_spread})"

    def statistic(self, statistic_id, theta=None):
        if statistic_id == "mean_x":
            return self.center
        if statistic_id == "mean_x2":
            return self.half_spread**2 + self.center**2
        if statistic_id == "entropy":
            return 0.5 * (1.0 + _LOG_2PI) + math.log(self.half_spread)
        return super().statistic(statistic_id, theta)


class ExponentialData(DataSet):
    """Exponential distribution with rate lambda on x >= 0.

    Answers the shifted-exponential statistics the Gumbel divergence
    reads, in closed form.
    """

    def __init__(self, rate: float):
        if rate <= 0:
            raise DomainError("exponential data needs rate > 0")
        self.rate = float(rate)
        self.label = f"exponential({rate})"

    def statistic(self, statistic_id, theta=None):
        lam = self.rate
        if statistic_id == "mean_x":
            return 1.0 / lam
        if statistic_id == "mean_x2":
            return 2.0 / lam**2
        if statistic_id == "entropy":
            return 1.0 - math.log(lam)
        if statistic_id in ("exp_shift", "lin_exp_shift", "sq_exp_shift"):
            alpha, mu = _require_theta(statistic_id, theta)
            if lam + alpha <= 0:
                raise MissingStatistic("exp_shift diverges for alpha <= -rate")
            s = lam + alpha
            front = lam * math.exp(alpha * mu)
            if statistic_id == "exp_shift":
                return front / s
            if statistic_id == "lin_exp_shift":
                return front * (1.0 / s**2 - mu / s)
            return front * (2.0 / s**3 - 2.0 * mu / s**2 + mu**2 / s)
        return super().statistic(statistic_id, theta)


class GumbelData(DataSet):
    """Gumbel distribution with shape alpha0 > 0 and mode mu0.

    Closed forms come from the Gamma-integral identities
    E[exp(-s u)] = Gamma(1+s), E[u exp(-s u)] = -Gamma'(1+s), etc., for a
    standard Gumbel variable u.
    """

    def __init__(self, alpha: float, mode: float):
        if alpha <= 0:
            raise DomainError("gumbel data needs alpha > 0")
        self.alpha = float(alpha)
        self.mode = float(mode)
        self.label = f"gumbel({alpha},{mode})"

    def statistic(self, statistic_id, theta=None):
        a0, m0 = self.alpha, self.mode
        if statistic_id == "mean_x":
            return m0 + EULER_GAMMA / a0
        if statistic_id == "entropy":
            return 1.0 + EULER_GAMMA - math.log(a0)
        if statistic_id in ("exp_shift", "lin_exp_shift", "sq_exp_shift"):
            alpha, mu = _require_theta(statistic_id, theta)
            s = alpha / a0
            if 1.0 + s <= 0:
                raise MissingStatistic("exp_shift diverges for alpha <= -alpha0")
            shift = m0 - mu
            front = math.exp(-alpha * shift) * special.gamma(1.0 + s)
            psi = special.digamma(1.0 + s)
            if statistic_id == "exp_shift":
                return front
            if statistic_id == "lin_exp_shift":
                return front * (shift - psi / a0)
            psi1 = special.polygamma(1, 1.0 + s)
            return front * (
                shift**2 - 2.0 * shift * psi / a0 + (psi**2 + psi1) / a0**2
            )
        return super().statistic(statistic_id, theta)


class VonMisesFisherData(DataSet):
    """von Mises-Fisher distribution on the unit 2-sphere.

    Mean resultant length A(kappa) = coth(kappa) - 1/kappa.
    """

    def __init__(self, kappa: float, direction: Sequence[float]):
        if kappa <= 0:
            raise DomainError("vMF data needs kappa > 0")
        direction = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(direction))
        if not norm > 0:
            raise DomainError("vMF direction must be nonzero")
        self.kappa = float(kappa)
        self.direction = direction / norm
        self.label = f"vmf({kappa})"

    def statistic(self, statistic_id, theta=None):
        kappa = self.kappa
        resultant = 1.0 / math.tanh(kappa) - 1.0 / kappa
        if statistic_id in ("mean_e1", "mean_e2", "mean_e3"):
            idx = int(statistic_id[-1]) - 1
            return resultant * self.direction[idx]
        if statistic_id == "entropy":
            log_norm = math.log(4.0 * math.pi * math.sinh(kappa) / kappa)
            return log_norm - kappa * resultant
        return super().statistic(statistic_id, theta)


class MomentData(DataSet):
    """Directly injected moment values (the usual off-fibre probe payload).

    ``entropy`` defaults to the matching-variance Gaussian value when the
    payload carries first and second moments, else to 0.
    """

    provider_kind = "MomentSpecified"

    def __init__(self, moments: dict, label: str = "moments"):
        self.moments = dict(moments)
        self.label = label
        if "entropy" not in self.moments and {"mean_x", "mean_x2"} <= set(
            self.moments
        ):
            var = self.moments["mean_x2"] - self.moments["mean_x"] ** 2
            if var <= 0:
                raise DomainError("moment payload implies non-positive variance")
            self.moments["entropy"] = 0.5 * (1.0 + _LOG_2PI + math.log(var))

    def statistic(self, statistic_id, theta=None):
        try:
            return self.moments[statistic_id]
        except KeyError:
            return super().statistic(statistic_id, theta)


class WeightedSampleData(DataSet):
    """Weighted empirical sample over the real line.

    Entropy offset is 0 by convention; divergences built on it are shifted
    by a data-dependent constant, which no derivative or geometry sees.
    """

    provider_kind = "EmpiricalSample"

    def __init__(self, points: Sequence[float], weights: Optional[Sequence[float]] = None):
        self.points = np.asarray(points, dtype=float)
        if weights is None:
            weights = np.full(self.points.size, 1.0 / self.points.size)
        self.weights = np.asarray(weights, dtype=float)
        if self.points.shape != self.weights.shape or self.points.size == 0:
            raise DomainError("sample points and weights must match and be nonempty")
        total = self.weights.sum()
        if not total > 0:
            raise DomainError("sample weights must have positive total")
        self.weights = self.weights / total
        self.label = f"sample(n={self.points.size})"

    def statistic(self, statistic_id, theta=None):
        x, w = self.points, self.weights
        if statistic_id == "mean_x":
            return float(w @ x)
        if statistic_id == "mean_x2":
            return float(w @ x**2)
        if statistic_id == "entropy":
            return 0.0
        if statistic_id in ("exp_shift", "lin_exp_shift", "sq_exp_shift"):
            alpha, mu = _require_theta(statistic_id, theta)
            e = np.exp(-alpha * (x - mu))
            if statistic_id == "exp_shift":
                return float(w @ e)
            if statistic_id == "lin_exp_shift":
                return float(w @ ((x - mu) * e))
            return float(w @ ((x - mu) ** 2 * e))
        return super().statistic(statistic_id, theta)


class OccupationData(DataSet):
    """Measured occupation numbers of a finite energy spectrum."""

    provider_kind = "EmpiricalSample"

    def __init__(self, occupations: Sequence[float], levels: Sequence[float]):
        self.occupations = np.asarray(occupations, dtype=float)
        self.levels = np.asarray(levels, dtype=float)
        if self.occupations.shape != self.levels.shape or self.occupations.size == 0:
            raise DomainError("occupations and levels must match and be nonempty")
        if np.any(self.occupations < 0):
            raise DomainError("occupations must be >= 0")
        self.label = f"occupations(J={self.levels.size})"

    def statistic(self, statistic_id, theta=None):
        if statistic_id == "total_count":
            return float(self.occupations.sum())
        if statistic_id == "total_energy":
            return float(self.occupations @ self.levels)
        return super().statistic(statistic_id, theta)


class RegressionData(DataSet):
    """A set of (x_j, y_j) couples for functional-relation fitting.

    Couples must satisfy N * sum(x^2) - (sum x)^2 != 0.
    """

    provider_kind = "RegressionSample"

    def __init__(self, couples: Sequence[Sequence[float]]):
        arr = np.asarray(couples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise DomainError("regression data needs >= 2 (x, y) couples")
        self.x = arr[:, 0].copy()
        self.y = arr[:, 1].copy()
        n = arr.shape[0]
        if abs(n * np.sum(self.x**2) - np.sum(self.x) ** 2) < 1e-12:
            raise DomainError("regression abscissae are degenerate")
        self.label = f"regression(n={n})"

    def statistic(self, statistic_id, theta=None):
        x, y = self.x, self.y
        table = {
            "n_points": float(x.size),
            "sum_x": float(x.sum()),
            "sum_y": float(y.sum()),
            "sum_xx": float(x @ x),
            "sum_xy": float(x @ y),
            "sum_yy": float(y @ y),
        }
        if statistic_id in table:
            return table[statistic_id]
        return super().statistic(statistic_id, theta)


class RegressionMomentData(DataSet):
    """Regression sums injected directly (off-fibre probes)."""

    provider_kind = "MomentSpecified"

    def __init__(self, sums: dict, label: str = "regression-moments"):
        needed = {"n_points", "sum_x", "sum_y", "sum_xx", "sum_xy", "sum_yy"}
        if not needed <= set(sums):
            raise DomainError("regression moment payload incomplete")
        self.sums = dict(sums)
        self.label = label

    def statistic(self, statistic_id, theta=None):
        try:
            return self.sums[statistic_id]
        except KeyError:
            return super().statistic(statistic_id, theta)


def _require_theta(statistic_id, theta):
    if theta is None:
        raise MissingStatistic(
            f"statistic '{statistic_id}' is parameter-dependent and needs theta"
        )
    coords = as_coords(theta)
    return float(coords[0]), float(coords[1])


# ---------------------------------------------------------------------------
# Model definition and the divergence operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatisticSpec:
    """One entry of a model's statistic schema."""

    statistic_id: str
    parameter_dependent: bool = False


@dataclass(frozen=True)
class ProbePair:
    """Antithetic off-fibre probe pair for one probe direction.

    The pair realises a centered step along a curve through the fibre, so
    the curve-derivative definition of the connection is evaluated to
    second order in the probe offset.
    """

    plus: DataSet
    minus: DataSet


@dataclass
class ClosedFormOracle:
    """Closed forms a catalogue model knows about itself, for testing and
    oracle-backed fields.  All callables take chart coordinate vectors."""

    metric: Optional[Callable] = None
    connection: Optional[Callable] = None
    affine_map: Optional[Callable] = None
    affine_inverse: Optional[Callable] = None
    massieu_chart: Optional[Callable] = None
    massieu_affine: Optional[Callable] = None
    chart_map: Optional[Callable] = None
    chart_map_inverse: Optional[Callable] = None
    connection_domain: Optional[tuple] = None
    geodesic: Optional[Callable] = None
    covariant_field: Optional[Callable] = None
    constants: dict = field(default_factory=dict)


@dataclass
class ModelDefinition:
    """One data set model: chart, divergence, samplers and probes."""

    name: str
    chart: ChartSpec
    statistic_schema: tuple
    divergence_fn: Callable
    gradient_fn: Optional[Callable] = None
    hessian_fn: Optional[Callable] = None
    fibre_sampler_fn: Optional[Callable] = None
    fibre_capacity: int = 3
    probe_pairs_fn: Optional[Callable] = None
    closed_form_fit_fn: Optional[Callable] = None
    oracle: Optional[ClosedFormOracle] = None
    divergence_tag: str = "other"
    expected_condition4_fail: bool = False
    classify_points_fn: Optional[Callable] = None
    condition4_evidence_fn: Optional[Callable] = None

    def fibre_sampler(self, theta, k: int) -> list:
        """Return up to ``k`` distinct data sets in the fibre of m_theta."""
        if self.fibre_sampler_fn is None:
            raise Unsupported(f"model {self.name} has no fibre sampler")
        coords = self.chart.require(theta)
        return self.fibre_sampler_fn(coords, k)

    @property
    def has_probes(self) -> bool:
        if self.probe_pairs_fn is not None:
            return True
        if self.fibre_sampler_fn is None:
            return False
        independent = [
            spec
            for spec in self.statistic_schema
            if not spec.parameter_dependent and spec.statistic_id != "entropy"
        ]
        return len(independent) >= self.chart.dim

    def probe_pairs(self, theta, delta: float, family: int = 0) -> list:
        """Off-fibre probe pairs; two families (0, 1) are available.

        Models normally supply probes that perturb exactly one fibre
        condition each; the generic fallback perturbs each declared
        parameter-independent statistic of a fibre member instead.
        """
        coords = self.chart.require(theta)
        if self.probe_pairs_fn is not None:
            return self.probe_pairs_fn(coords, delta, family)
        return self._generic_probe_pairs(coords, delta, family)

    def _generic_probe_pairs(self, coords, delta, family):
        ids = [
            spec.statistic_id
            for spec in self.statistic_schema
            if not spec.parameter_dependent and spec.statistic_id != "entropy"
        ]
        if not ids:
            raise Unsupported(
                f"model {self.name} has no probe constructor and no "
                "parameter-independent statistics to perturb"
            )
        member = self.fibre_sampler(coords, 1)[0]
        base = {sid: member.statistic(sid) for sid in ids}
        base["entropy"] = 0.0
        if family == 1:
            delta = 0.5 * delta
        pairs = []
        for index, sid in enumerate(ids):
            scale = max(abs(base[sid]), 1.0)
            plus, minus = dict(base), dict(base)
            plus[sid] += delta * scale
            minus[sid] -= delta * scale
            if family == 1:  # mix in a second direction
                other = ids[(index + 1) % len(ids)]
                other_scale = max(abs(base[other]), 1.0)
                plus[other] += delta * other_scale / 3.0
                minus[other] -= delta * other_scale / 3.0
            pairs.append(
                ProbePair(
                    MomentData(plus, label=f"probe({sid})+"),
                    MomentData(minus, label=f"probe({sid})-"),
                )
            )
        return pairs

    def closed_form_fit(self, x: DataSet) -> np.ndarray:
        if self.closed_form_fit_fn is None:
            raise Unsupported(f"model {self.name} has no closed-form fit")
        result = self.closed_form_fit_fn(x)
        if result is None:
            raise Unsupported(
                f"model {self.name} has no closed-form fit for {x.label}"
            )
        return np.asarray(result, dtype=float)


def evaluate_divergence(model: ModelDefinition, x: DataSet, theta) -> float:
    """D(x || m_theta): finite, >= 0 inside the chart."""
    coords = model.chart.require(theta)
    value = float(model.divergence_fn(x, coords))
    if not math.isfinite(value):
        raise NumericalFailure(
            f"divergence of {model.name} non-finite ({value}) at {coords.tolist()}"
        )
    return value


def divergence_gradient(model: ModelDefinition, x: DataSet, theta, source: str = "auto") -> np.ndarray:
    """First parameter derivatives of D(x || m_theta).

    ``source``: "analytic" demands model derivatives, "fd" forces finite
    differences, "auto" prefers analytic.
    """
    coords = model.chart.require(theta)
    use_analytic = model.gradient_fn is not None and source in ("auto", "analytic")
    if source == "analytic" and model.gradient_fn is None:
        raise Unsupported(f"model {model.name} has no analytic gradient")
    if use_analytic:
        return np.asarray(model.gradient_fn(x, coords), dtype=float)
    from . import numdiff

    cfg = numdiff.DiffConfig.for_chart(model.chart)
    return numdiff.fd_gradient(lambda t: model.divergence_fn(x, t), coords, cfg)


def divergence_hessian(model: ModelDefinition, x: DataSet, theta, source: str = "auto") -> np.ndarray:
    """Plain (non-covariant) second-derivative matrix of D(x || m_theta)."""
    coords = model.chart.require(theta)
    use_analytic = model.hessian_fn is not None and source in ("auto", "analytic")
    if source == "analytic" and model.hessian_fn is None:
        raise Unsupported(f"model {model.name} has no analytic hessian")
    if use_analytic:
        hess = np.asarray(model.hessian_fn(x, coords), dtype=float)
        return 0.5 * (hess + hess.T)
    from . import numdiff

    cfg = numdiff.DiffConfig.for_chart(model.chart)
    return numdiff.fd_hessian(lambda t: model.divergence_fn(x, t), coords, cfg)
