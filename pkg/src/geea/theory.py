"""Numerical checks of the generative view of entity alignment.

Three claims are verified at float64:

* the closed-form KL divergence between diagonal Gaussians (against Monte Carlo);
* the difference identity behind mutual distribution matching: with
  ``z* = N(0, I)``, ``KL(zx, z*) + KL(zy, z*) - KL(zx, zy)`` has a closed form,
  and driving both anchor KLs to zero drives ``KL(zx, zy)`` to zero;
* the ELBO decomposition ``log p(x) = reconstruction - distribution match +
  prediction match`` on enumerable categorical toy models, and the fact that
  ascending the ELBO shrinks the prediction-matching KL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax


@dataclass(frozen=True)
class GaussianStats:
    """Mean plus either a diagonal standard deviation or a full covariance."""

    mu: np.ndarray
    sigma: np.ndarray | None = None
    cov: np.ndarray | None = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "mu", mu)
        if (self.sigma is None) == (self.cov is None):
            raise ValueError("give exactly one of sigma (diagonal) or cov (full)")
        if self.sigma is not None:
            sigma = np.broadcast_to(np.asarray(self.sigma, dtype=np.float64), mu.shape).copy()
            if not (sigma > 0).all():
                raise ValueError("sigma must be strictly positive")
            object.__setattr__(self, "sigma", sigma)
        else:
            cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
            if cov.shape != (mu.size, mu.size):
                raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mu.size}")
            if np.linalg.eigvalsh((cov + cov.T) / 2).min() < -1e-12:
                raise ValueError("covariance must be positive semi-definite")
            object.__setattr__(self, "cov", cov)

    @property
    def diagonal(self) -> bool:
        return self.sigma is not None

    @classmethod
    def standard(cls, dim: int) -> GaussianStats:
        return cls(np.zeros(dim), np.ones(dim))


def gaussian_kl(p: GaussianStats, q: GaussianStats) -> float:
    """``KL(p || q)`` for diagonal Gaussians, summed over dimensions.

    Per dimension: ``log(s2 / s1) + (s1^2 + (m1 - m2)^2) / (2 s2^2) - 1/2``.
    """
    if not (p.diagonal and q.diagonal):
        raise ValueError("gaussian_kl takes diagonal Gaussians")
    if p.mu.shape != q.mu.shape:
        raise ValueError("dimension mismatch")
    s1, s2 = p.sigma, q.sigma
    terms = np.log(s2 / s1) + (s1 ** 2 + (p.mu - q.mu) ** 2) / (2.0 * s2 ** 2) - 0.5
    return float(terms.sum())


def monte_carlo_kl(p: GaussianStats, q: GaussianStats, samples: int = 100_000,
                   rng: np.random.Generator | None = None) -> float:
    """Sample estimate of ``E_p[log p(z) - log q(z)]``."""
    rng = rng if rng is not None else np.random.default_rng()
    z = p.mu + p.sigma * rng.standard_normal((samples, p.mu.size))

    def logpdf(g: GaussianStats) -> np.ndarray:
        u = (z - g.mu) / g.sigma
        return (-0.5 * u ** 2 - np.log(g.sigma) - 0.5 * math.log(2 * math.pi)).sum(axis=1)

    return float(np.mean(logpdf(p) - logpdf(q)))


# ----------------------------------------------------------- mutual matching

def anchor_difference(mu_x, sigma_x, mu_y, sigma_y) -> np.ndarray:
    """Closed form of ``KL(zx, z*) + KL(zy, z*) - KL(zx, zy)`` with ``z* = N(0, 1)``.

    Elementwise (one value per dimension)::

        -2 log sy - 1/2 + ((mx^2 + my^2 + sx^2)(sy^2 - 1) + sy^4 + 2 mx my) / (2 sy^2)
    """
    mx, sx, my, sy = (np.asarray(a, dtype=np.float64) for a in (mu_x, sigma_x, mu_y, sigma_y))
    num = (mx ** 2 + my ** 2 + sx ** 2) * (sy ** 2 - 1.0) + sy ** 4 + 2.0 * mx * my
    return -2.0 * np.log(sy) - 0.5 + num / (2.0 * sy ** 2)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "tolerance": self.tolerance, **self.detail}


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def table(self) -> str:
        rows = [("check", "result", "value", "tolerance")]
        rows += [(c.name, "pass" if c.passed else "FAIL", f"{c.value:.3e}", f"{c.tolerance:.1e}")
                 for c in self.checks]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)) for r in rows)


def _random_gaussian(rng: np.random.Generator, dim: int) -> GaussianStats:
    return GaussianStats(rng.normal(0.0, 1.5, dim), np.exp(rng.uniform(-1.0, 1.0, dim)))


def verify_proposition2(trials: int = 1000, rng: np.random.Generator | None = None,
                        dim: int = 4, path_steps: int = 10, tolerance: float = 1e-9,
                        limit: float = 1e-6) -> VerificationReport:
    """Check the anchor-difference identity and the limit claim.

    The identity is compared per trial against the three KLs evaluated
    directly. For the limit, ``(mu, log sigma)`` of both latents move linearly
    to the standard normal in ``path_steps`` steps; ``KL(zx, zy)`` must never
    increase along the path and must end below ``limit``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    star = GaussianStats.standard(dim)
    worst = 0.0
    for _ in range(trials):
        x, y = _random_gaussian(rng, dim), _random_gaussian(rng, dim)
        direct = gaussian_kl(x, star) + gaussian_kl(y, star) - gaussian_kl(x, y)
        closed = float(anchor_difference(x.mu, x.sigma, y.mu, y.sigma).sum())
        worst = max(worst, abs(direct - closed) / max(1.0, abs(direct)))
    identity = CheckResult("anchor-difference identity", worst < tolerance, worst, tolerance,
                           {"trials": trials})

    x, y = _random_gaussian(rng, dim), _random_gaussian(rng, dim)
    trace, anchors = [], []
    for t in np.linspace(0.0, 1.0, path_steps + 1):
        xt = GaussianStats((1 - t) * x.mu, np.exp((1 - t) * np.log(x.sigma)))
        yt = GaussianStats((1 - t) * y.mu, np.exp((1 - t) * np.log(y.sigma)))
        trace.append(gaussian_kl(xt, yt))
        anchors.append(gaussian_kl(xt, star) + gaussian_kl(yt, star))
    monotone = all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))
    path = CheckResult("mutual KL limit", monotone and trace[-1] < limit, trace[-1], limit,
                       {"monotone": monotone, "kl_trace": trace, "anchor_trace": anchors})
    return VerificationReport([identity, path])


# --------------------------------------------------------- ELBO decomposition

@dataclass
class CategoricalToy:
    """A joint ``p(x, y)`` over small state spaces and a softmax predictor ``q(y|x)``.

    ``p(x|y)`` plays the reconstruction model; it is the true conditional, the
    case in which the decomposition is an identity.
    """

    joint: np.ndarray
    logits: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, nx: int = 6, ny: int = 5,
               concentration: float = 1.0) -> CategoricalToy:
        if max(nx, ny) > 8 or min(nx, ny) < 2:
            raise ValueError("toy models use between 2 and 8 states per side")
        joint = rng.dirichlet(np.full(nx * ny, concentration)).reshape(nx, ny)
        joint = np.maximum(joint, 1e-6)
        return cls(joint / joint.sum(), rng.normal(size=(nx, ny)))

    def q(self) -> np.ndarray:
        return softmax(self.logits, axis=1)

    def terms(self) -> dict[str, np.ndarray]:
        """Per-state ``log p(x)`` and the three terms, by exhaustive summation."""
        p = self.joint
        px, py = p.sum(axis=1), p.sum(axis=0)
        log_x_given_y = np.log(p) - np.log(py)[None, :]
        log_y_given_x = np.log(p) - np.log(px)[:, None]
        log_q = log_softmax(self.logits, axis=1)
        q = np.exp(log_q)
        return {
            "log_px": np.log(px),
            "reconstruction": (q * log_x_given_y).sum(axis=1),
            "distribution_match": (q * (log_q - np.log(py)[None, :])).sum(axis=1),
            "prediction_match": (q * (log_q - log_y_given_x)).sum(axis=1),
        }

    def elbo(self) -> float:
        t = self.terms()
        return float(np.sum(t["reconstruction"] - t["distribution_match"]))

    def prediction_kl(self) -> float:
        return float(np.sum(self.terms()["prediction_match"]))

    def elbo_gradient(self) -> np.ndarray:
        """d ELBO / d logits. Per row the ELBO is ``sum_y q(y) f(y) - sum_y q log q``
        with ``f = log p(x, y)``, so the gradient is ``q * (g - E_q[g])`` with
        ``g = f - log q``."""
        log_q = log_softmax(self.logits, axis=1)
        q = np.exp(log_q)
        g = np.log(self.joint) - log_q
        return q * (g - (q * g).sum(axis=1, keepdims=True))


def verify_elbo_decomposition(rng: np.random.Generator | None = None, models: int = 20,
                              steps: int = 100, learning_rate: float = 0.1,
                              tolerance: float = 1e-9) -> VerificationReport:
    """Identity residual over random toy models, then an ascent trace on one of them."""
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(models):
        toy = CategoricalToy.random(rng, int(rng.integers(2, 9)), int(rng.integers(2, 9)))
        t = toy.terms()
        rhs = t["reconstruction"] - t["distribution_match"] + t["prediction_match"]
        worst = max(worst, float(np.abs(t["log_px"] - rhs).max()))
    identity = CheckResult("ELBO decomposition identity", worst < tolerance, worst, tolerance,
                           {"models": models})

    toy = CategoricalToy.random(rng)
    elbos, kls = [toy.elbo()], [toy.prediction_kl()]
    for _ in range(steps):
        toy.logits = toy.logits + learning_rate * toy.elbo_gradient()
        elbos.append(toy.elbo())
        kls.append(toy.prediction_kl())
    rises = [b - a for a, b in zip(kls, kls[1:])]
    monotone = max(rises) <= 0.0
    trend = CheckResult("prediction KL under ELBO ascent", monotone and kls[-1] < kls[0],
                        max(rises), 0.0,
                        {"steps": steps, "kl_start": kls[0], "kl_end": kls[-1],
                         "elbo_start": elbos[0], "elbo_end": elbos[-1]})
    return VerificationReport([identity, trend])


def verify_gaussian_kl(pairs: int = 20, samples: int = 100_000, dim: int = 3,
                       rng: np.random.Generator | None = None,
                       tolerance: float = 0.02) -> VerificationReport:
    """Closed-form KL against a Monte-Carlo estimate, relative error per pair."""
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(pairs):
        p, q = _random_gaussian(rng, dim), _random_gaussian(rng, dim)
        exact = gaussian_kl(p, q)
        estimate = monte_carlo_kl(p, q, samples, rng)
        worst = max(worst, abs(estimate - exact) / exact)
    return VerificationReport([CheckResult("Gaussian KL vs Monte Carlo", worst < tolerance,
                                           worst, tolerance, {"pairs": pairs})])


def verify_all(trials: int = 1000, seed: int = 0) -> VerificationReport:
    rng = np.random.default_rng(seed)
    checks = []
    for report in (verify_gaussian_kl(rng=rng), verify_proposition2(trials, rng),
                   verify_elbo_decomposition(rng)):
        checks.extend(report.checks)
    return VerificationReport(checks)


__all__ = [
    "CategoricalToy", "CheckResult", "GaussianStats", "VerificationReport", "anchor_difference",
    "gaussian_kl", "monte_carlo_kl", "verify_all", "verify_elbo_decomposition",
    "verify_gaussian_kl", "verify_proposition2",
]
