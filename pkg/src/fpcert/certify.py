"""Sampled verification and estimation of operator-class properties.

A certificate produced here is sampled evidence, never a proof: a PASS means
the property survived every sampled pair, a FAIL carries a concrete witness
that refutes the property up to the recorded tolerance.

Slack evaluation over the sample list is embarrassingly parallel.  The list
is generated up front in seed order and aggregated by a first-occurrence
minimum, so the outcome does not depend on evaluation order or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metrics import L2, NormSpec, norm

__all__ = [
    "SamplingPlan",
    "Certificate",
    "RegionGrid",
    "sample_pairs",
    "sample_points",
    "gan_slack",
    "certify",
    "estimate_mu",
    "estimate_min_gamma",
    "estimate_fp_ratio",
    "psi",
    "mu_hat",
    "composition_mu",
    "range_region",
    "EstimateError",
    "PROPERTIES",
    "DEFAULT_TOL",
    "DENOMINATOR_CUTOFF",
]

PROPERTIES = ("gan", "nonexpansive", "contractive", "fp_contractive", "holder_regular")

# Absolute slack tolerance separating PASS from FAIL; double precision leaves
# roughly 1e-12 noise in the gamma-powered norm combinations at unit scale.
DEFAULT_TOL = 1e-10

# Pairs the operator fixes carry no information about mu; their quotient is 0/0.
DENOMINATOR_CUTOFF = 1e-14

SAMPLED_EVIDENCE_NOTE = "sampled evidence: PASS reports failure to refute, not a proof"


@dataclass(frozen=True)
class SamplingPlan:
    """How to draw sample pairs: Gaussian clouds at several radius scales.

    The default scales reach 1e3 because some properties only fail far from
    the origin; plans used to probe asymptotics should extend them.  When the
    operator carries a fixed-point hint, extra pairs straddling the hint are
    added at every scale.
    """

    n_pairs: int = 250
    radius_scales: tuple = (0.1, 1.0, 10.0, 1e3)
    seed: int = 0
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be at least 1")
        if len(self.radius_scales) == 0 or any(r <= 0 for r in self.radius_scales):
            raise ValueError("radius_scales must be nonempty and positive")
        if self.center is not None:
            object.__setattr__(
                self, "center", np.asarray(self.center, dtype=float).reshape(-1)
            )


def _plan_center(plan, dim, hint):
    if plan.center is not None:
        if plan.center.shape != (dim,):
            raise ValueError("sampling plan center has the wrong dimension")
        return plan.center
    if hint is not None:
        return hint
    return np.zeros(dim)


def _straddle_count(plan):
    return max(1, plan.n_pairs // 10)


def sample_pairs(plan, dim, hint=None):
    """Seed-ordered list of sample pairs as two stacked arrays.

    At every radius scale, ``n_pairs`` Gaussian pairs are drawn around the
    plan center; when a hint is available, pairs placed on opposite sides of
    the hint are appended so that behavior at the fixed point is probed.
    """
    rng = np.random.default_rng(plan.seed)
    center = _plan_center(plan, dim, hint)
    xs, ys = [], []
    for scale in plan.radius_scales:
        xs.append(center + scale * rng.standard_normal((plan.n_pairs, dim)))
        ys.append(center + scale * rng.standard_normal((plan.n_pairs, dim)))
    if hint is not None:
        k = _straddle_count(plan)
        for scale in plan.radius_scales:
            u = rng.standard_normal((k, dim))
            v = rng.standard_normal((k, dim))
            xs.append(hint + scale * u)
            ys.append(hint - scale * v)
    return np.vstack(xs), np.vstack(ys)


def sample_points(plan, dim, hint=None):
    """Seed-ordered single points, for properties measured against a fixed point."""
    rng = np.random.default_rng(plan.seed)
    center = _plan_center(plan, dim, hint)
    blocks = [
        center + scale * rng.standard_normal((plan.n_pairs, dim))
        for scale in plan.radius_scales
    ]
    return np.vstack(blocks)


@dataclass(eq=False)
class Certificate:
    """Outcome of a sampled verification run.

    The witness pair attains ``min_slack`` and can be re-evaluated through
    :meth:`recompute_slack`; for the point-based properties the second
    witness slot holds the fixed-point hint.
    """

    property_name: str
    verdict: str
    min_slack: float
    witness_x: np.ndarray
    witness_y: np.ndarray
    n_checked: int
    n_skipped: int
    tol: float
    norm_spec: NormSpec
    gamma: Optional[float] = None
    mu: Optional[float] = None
    rho: Optional[float] = None
    seed: int = 0
    notes: tuple = (SAMPLED_EVIDENCE_NOTE,)

    @property
    def passed(self):
        return self.verdict == "PASS"

    def recompute_slack(self, op):
        """Re-evaluate the witness slack; certificates must reproduce it."""
        return _pointwise_slack(
            op,
            self.witness_x,
            self.witness_y,
            self.property_name,
            self.norm_spec,
            gamma=self.gamma,
            mu=self.mu,
            rho=self.rho,
        )

    def to_dict(self):
        payload = {
            "property": self.property_name,
            "verdict": self.verdict,
            "min_slack": self.min_slack,
            "witness_x": [float(v) for v in self.witness_x],
            "witness_y": [float(v) for v in self.witness_y],
            "n_checked": self.n_checked,
            "n_skipped": self.n_skipped,
            "tol": self.tol,
            "norm": self.norm_spec.kind,
            "gamma": self.gamma,
            "mu": self.mu,
            "rho": self.rho,
            "seed": self.seed,
            "evidence": "sampled",
            "notes": list(self.notes),
        }
        if self.norm_spec.kind == "weighted":
            payload["norm_weight"] = [
                [float(v) for v in row] for row in self.norm_spec.weight
            ]
        return payload


class EstimateError(ValueError):
    """Raised when every sampled pair is uninformative for the estimate."""


def _normalize_property(name):
    key = name.strip().lower().replace("-", "_")
    aliases = {
        "gan": "gan",
        "nonexpansive": "nonexpansive",
        "contractive": "contractive",
        "fpcontractive": "fp_contractive",
        "fp_contractive": "fp_contractive",
        "holderregular": "holder_regular",
        "holder_regular": "holder_regular",
        "holder": "holder_regular",
    }
    if key not in aliases:
        raise ValueError(f"unknown property {name!r}; expected one of {PROPERTIES}")
    return aliases[key]


def gan_slack(op, x, y, gamma, mu, norm_spec=L2):
    """Pointwise slack of the generalized-averaged-nonexpansive inequality.

    Returns ``|x-y|^g - |Tx-Ty|^g - mu * |(I-T)x-(I-T)y|^g``; the inequality
    holds at this pair exactly when the slack is nonnegative.
    """
    if gamma <= 0 or mu <= 0:
        raise ValueError("gamma and mu must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tx, ty = op(x), op(y)
    d = norm(x - y, norm_spec)
    a = norm(tx - ty, norm_spec)
    b = norm((x - tx) - (y - ty), norm_spec)
    return d**gamma - a**gamma - mu * b**gamma


def _pointwise_slack(op, x, y, prop, norm_spec, gamma=None, mu=None, rho=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if prop == "gan":
        return gan_slack(op, x, y, gamma, mu, norm_spec)
    if prop == "nonexpansive":
        return norm(x - y, norm_spec) - norm(op(x) - op(y), norm_spec)
    if prop == "contractive":
        return rho * norm(x - y, norm_spec) - norm(op(x) - op(y), norm_spec)
    if prop == "fp_contractive":
        # y is the fixed point here
        return rho * norm(x - y, norm_spec) - norm(op(x) - y, norm_spec)
    if prop == "holder_regular":
        return mu * norm(x - op(x), norm_spec) ** gamma - norm(x - y, norm_spec)
    raise ValueError(f"unknown property {prop!r}")


def _pair_statistics(op, xs, ys, norm_spec):
    """Norm triples (|x-y|, |Tx-Ty|, |(I-T)x-(I-T)y|) for all sampled pairs."""
    n = xs.shape[0]
    d = np.empty(n)
    a = np.empty(n)
    b = np.empty(n)
    for i in range(n):
        x, y = xs[i], ys[i]
        tx, ty = op(x), op(y)
        d[i] = norm(x - y, norm_spec)
        a[i] = norm(tx - ty, norm_spec)
        b[i] = norm((x - tx) - (y - ty), norm_spec)
    return d, a, b


def certify(op, prop, params, norm_spec=L2, plan=None, tol=DEFAULT_TOL):
    """Probe an operator-class inequality on sampled pairs.

    Parameters
    ----------
    op : Operator
        The map under test.  Properties measured against the fixed-point set
        ('fp_contractive', 'holder_regular') require ``op.fixed_point_hint``;
        the distance to the fixed-point set is taken to the hint.
    prop : str
        One of 'gan', 'nonexpansive', 'contractive', 'fp_contractive',
        'holder_regular'.
    params : dict
        Property parameters: gamma/mu for 'gan' and 'holder_regular', rho
        for the contractive classes.
    norm_spec : NormSpec
        Norm in which all distances are measured.
    plan : SamplingPlan
        Sampling layout; defaults to ``SamplingPlan()``.
    tol : float
        Absolute slack tolerance; verdict is PASS iff min slack >= -tol.

    Returns
    -------
    Certificate
        Worst-case slack, the witness attaining it, and bookkeeping.
    """
    prop = _normalize_property(prop)
    plan = plan or SamplingPlan()
    params = dict(params or {})
    gamma = params.get("gamma")
    mu = params.get("mu")
    rho = params.get("rho")
    if prop in ("gan", "holder_regular"):
        if gamma is None or gamma <= 0:
            raise ValueError(f"property {prop!r} needs a positive gamma")
        if mu is None or mu <= 0:
            raise ValueError(f"property {prop!r} needs a positive mu")
    if prop in ("contractive", "fp_contractive"):
        if rho is None or rho <= 0:
            raise ValueError(f"property {prop!r} needs a positive rho")
    hint = op.fixed_point_hint

    skipped = 0
    if prop in ("fp_contractive", "holder_regular"):
        if hint is None:
            raise ValueError(f"property {prop!r} requires a fixed_point_hint")
        points = sample_points(plan, op.dim, hint)
        slacks = []
        kept = []
        for point in points:
            if norm(point - hint, norm_spec) <= DENOMINATOR_CUTOFF:
                skipped += 1
                continue
            slacks.append(
                _pointwise_slack(
                    op, point, hint, prop, norm_spec, gamma=gamma, mu=mu, rho=rho
                )
            )
            kept.append(point)
        if not slacks:
            raise EstimateError("every sampled point coincided with the fixed point")
        slacks = np.asarray(slacks)
        worst = int(np.argmin(slacks))
        witness_x, witness_y = np.asarray(kept[worst]), hint
    else:
        xs, ys = sample_pairs(plan, op.dim, hint)
        slacks = np.empty(xs.shape[0])
        for i in range(xs.shape[0]):
            slacks[i] = _pointwise_slack(
                op, xs[i], ys[i], prop, norm_spec, gamma=gamma, mu=mu, rho=rho
            )
        worst = int(np.argmin(slacks))
        witness_x, witness_y = xs[worst], ys[worst]

    min_slack = float(slacks[worst])
    verdict = "PASS" if min_slack >= -tol else "FAIL"
    return Certificate(
        property_name=prop,
        verdict=verdict,
        min_slack=min_slack,
        witness_x=witness_x.copy(),
        witness_y=witness_y.copy(),
        n_checked=int(slacks.size),
        n_skipped=skipped,
        tol=tol,
        norm_spec=norm_spec,
        gamma=gamma,
        mu=mu,
        rho=rho,
        seed=plan.seed,
    )


def estimate_mu(op, gamma, norm_spec=L2, plan=None):
    """Empirical upper bound on the admissible mu at a given exponent.

    Evaluates ``(|x-y|^g - |Tx-Ty|^g) / |(I-T)x-(I-T)y|^g`` over the plan and
    returns the infimum.  Pairs whose denominator is at most 1e-14 are
    skipped (they are fixed by the displacement map and carry no
    information); if every pair is skipped an EstimateError is raised.  Any
    nonpositive quotient collapses the estimate to 0.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    plan = plan or SamplingPlan()
    xs, ys = sample_pairs(plan, op.dim, op.fixed_point_hint)
    d, a, b = _pair_statistics(op, xs, ys, norm_spec)
    denom = b**gamma
    eligible = denom > DENOMINATOR_CUTOFF
    if not np.any(eligible):
        raise EstimateError(
            "operator is indistinguishable from the identity on all sampled pairs"
        )
    quotients = (d[eligible] ** gamma - a[eligible] ** gamma) / denom[eligible]
    low = float(np.min(quotients))
    return 0.0 if low <= 0.0 else low


def estimate_min_gamma(op, mu, norm_spec=L2, plan=None, bracket=(0.1, 2.0),
                       width=1e-3, return_certificate=False):
    """Bisect for the smallest exponent the sampled certificate accepts.

    Requires a valid bracket: certification must pass at ``bracket[1]`` and
    fail at ``bracket[0]``.  Validity is monotone in the exponent when
    mu >= 1; below that it is a sampling heuristic, which is noted on the
    certificate returned with ``return_certificate=True``.  The resolved
    exponent has width ``width`` and can only refute exponents whose
    violations are visible at the plan's radius scales.
    """
    plan = plan or SamplingPlan()
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")

    def run(gamma):
        return certify(op, "gan", {"gamma": gamma, "mu": mu}, norm_spec, plan)

    if not run(hi).passed:
        raise ValueError(f"bracket precondition violated: gamma={hi} does not pass")
    if run(lo).passed:
        raise ValueError(f"bracket precondition violated: gamma={lo} passes")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if run(mid).passed:
            hi = mid
        else:
            lo = mid
    if not return_certificate:
        return hi
    cert = run(hi)
    if mu < 1:
        cert.notes = cert.notes + (
            "mu < 1: monotone validity in the exponent assumed as a sampling heuristic",
        )
    return hi, cert


def estimate_fp_ratio(op, norm_spec=L2, plan=None):
    """Largest sampled ratio |Tx - xhat| / |x - xhat| against the hint.

    This is the empirical contraction factor toward the fixed-point set; no
    closed form is available in general, so the maximum ratio itself is
    reported.
    """
    plan = plan or SamplingPlan()
    hint = op.fixed_point_hint
    if hint is None:
        raise ValueError("estimate_fp_ratio requires a fixed_point_hint")
    points = sample_points(plan, op.dim, hint)
    best = None
    for point in points:
        dist = norm(point - hint, norm_spec)
        if dist <= DENOMINATOR_CUTOFF:
            continue
        ratio = norm(op(point) - hint, norm_spec) / dist
        if best is None or ratio > best:
            best = ratio
    if best is None:
        raise EstimateError("every sampled point coincided with the fixed point")
    return float(best)


def psi(alpha, gamma):
    """The ratio (1 - alpha^g) / (1 - alpha)^g on [0, 1)."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return (1.0 - alpha**gamma) / (1.0 - alpha) ** gamma


def mu_hat(rho, gamma):
    """Admissible mu for a rho-contraction: (1 - rho^g) / (1 + rho)^g."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return (1.0 - rho**gamma) / (1.0 + rho) ** gamma


def composition_mu(mu1, mu2, gamma):
    """Constant surviving composition: 2^(1-g) * min(mu1, mu2), for g >= 1."""
    if mu1 <= 0 or mu2 <= 0:
        raise ValueError("mu1 and mu2 must be positive")
    if gamma < 1:
        raise ValueError("composition constant requires gamma >= 1")
    return 2.0 ** (1.0 - gamma) * min(mu1, mu2)


@dataclass(eq=False)
class RegionGrid:
    """Boolean membership grid for the admissible range of T at a point.

    ``mask[i, j]`` is the cell whose center offsets from the fixed point are
    ``(offsets1[j], offsets2[i])``: rows scan the second coordinate from low
    to high, columns the first.  Offsets are stored relative to ``xhat``.
    """

    mask: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    gamma: float
    mu: float
    bounds: tuple
    resolution: int
    offsets1: np.ndarray = field(repr=False, default=None)
    offsets2: np.ndarray = field(repr=False, default=None)


def _symmetric_offsets(radius, resolution):
    # Cell centers over [-radius, radius]; antisymmetrized so that reflected
    # indices hold exactly negated coordinates in floating point.
    raw = (np.arange(resolution) + 0.5) * (2.0 * radius / resolution) - radius
    return 0.5 * (raw - raw[::-1])


def range_region(x, xhat, gamma, mu, resolution=201):
    """Membership grid of { y : |y-xhat|^g + mu*|y-x|^g <= |x-xhat|^g }.

    The grid covers the square circumscribing the ball around ``xhat`` whose
    radius is the distance to ``x``, with ``resolution`` cells per axis; a
    cell is marked true when its center satisfies the inequality (boundary
    included).  Distances are Euclidean.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    xhat = np.asarray(xhat, dtype=float).reshape(-1)
    if x.shape != (2,) or xhat.shape != (2,):
        raise ValueError("range_region is defined for 2-vectors")
    if gamma <= 0 or mu <= 0:
        raise ValueError("gamma and mu must be positive")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    d = x - xhat
    radius = float(np.linalg.norm(d))
    if radius == 0.0:
        raise ValueError("x and xhat must differ")

    offs1 = _symmetric_offsets(radius, resolution)
    offs2 = _symmetric_offsets(radius, resolution)
    o1, o2 = np.meshgrid(offs1, offs2)  # rows scan the second coordinate
    half = 0.5 * gamma
    lhs = (o1**2 + o2**2) ** half + mu * ((o1 - d[0]) ** 2 + (o2 - d[1]) ** 2) ** half
    rhs = (d[0] ** 2 + d[1] ** 2) ** half
    mask = lhs <= rhs
    bounds = (
        float(xhat[0] - radius),
        float(xhat[0] + radius),
        float(xhat[1] - radius),
        float(xhat[1] + radius),
    )
    return RegionGrid(
        mask=mask,
        x=x,
        xhat=xhat,
        gamma=float(gamma),
        mu=float(mu),
        bounds=bounds,
        resolution=int(resolution),
        offsets1=offs1,
        offsets2=offs2,
    )
