"""Constraint evaluation, monotone root solve and hypothesis checks."""
import logging
from typing import Dict, Tuple

import numpy as np

from potentials.config.settings import settings
from potentials.families.base import ConstraintFamily
from potentials.models.constraint import DerivativeReport, SampleExtremum
from potentials.utils.errors import ConfigValidationError, OutsideDualDomain, ValidityError
from potentials.utils.helpers import richardson_derivative, richardson_gradient

logger = logging.getLogger(__name__)

FIRST_ORDER = ("phi_s", "phi_x", "phi_y")
SECOND_ORDER = ("phi_xx", "phi_xy", "phi_xs")


def _relative_error(analytic: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-sample max over components of |a - fd| / max(1, |fd|)."""
    error = np.abs(analytic - reference) / np.maximum(1.0, np.abs(reference))
    return error.reshape(error.shape[0], -1).max(axis=1)


def _location(x: np.ndarray, y: np.ndarray, s: np.ndarray, k: int) -> Dict[str, list]:
    return {"x": x[k].tolist(), "y": y[k].tolist(), "s": [float(s[k])]}


class ConstraintService:
    """Service for evaluating constraint families and validating their hypotheses."""

    def evaluate(self, family: ConstraintFamily, x, y, s) -> Dict[str, np.ndarray]:
        """phi and its first derivatives at a valid (x, y, s)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        valid = family.valid(x, y, s)
        if not np.all(valid):
            raise ValidityError(
                f"{family.identifier}: (x, y, s) outside the validity region",
                {"x": x.tolist(), "y": y.tolist(), "s": s.tolist()}
            )
        return {
            "phi": family.phi(x, y, s),
            "phi_s": family.phi_s(x, y, s),
            "phi_x": family.phi_x(x, y, s),
            "phi_y": family.phi_y(x, y, s),
        }

    def solve_s(self, family: ConstraintFamily, x, y, t, saturate: bool = False) -> np.ndarray:
        """Root s of t + phi(x, y, s) = 0, vectorized over broadcast (x, y, t).

        With saturate=True, points where t + phi stays negative up to the top of
        the s-range return that upper end (+inf when unbounded) instead of failing;
        such a point does not restrict the sup in the v-transform.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], t.shape)
        X = np.broadcast_to(x, shape + x.shape[-1:]).reshape(-1, x.shape[-1])
        Y = np.broadcast_to(y, shape + y.shape[-1:]).reshape(-1, y.shape[-1])
        T = np.broadcast_to(t, shape).ravel().copy()

        def g(index: np.ndarray, s: np.ndarray) -> np.ndarray:
            with np.errstate(all="ignore"):
                return T[index] + family.phi(X[index], Y[index], s)

        everything = np.arange(T.size)
        with np.errstate(all="ignore"):
            bound_lo, bound_hi = family.s_bounds(X, Y)
            lo, hi = family.s_hint(X, Y)
        lo = np.array(lo, dtype=float)
        hi = np.array(hi, dtype=float)
        g_lo = g(everything, lo)
        g_hi = g(everything, hi)
        growth = np.maximum(hi - lo, 1.0)

        for _ in range(settings.bracket_max_expansions):
            down = g_lo > 0.0
            up = g_hi < 0.0
            if not (np.any(down) or np.any(up)):
                break
            if np.any(down):
                k = np.nonzero(down)[0]
                hi[k], g_hi[k] = lo[k], g_lo[k]
                finite = np.isfinite(bound_lo[k])
                lo[k] = np.where(finite, bound_lo[k] + 0.5 * (lo[k] - bound_lo[k]), lo[k] - growth[k])
                g_lo[k] = g(k, lo[k])
            if np.any(up):
                k = np.nonzero(up)[0]
                lo[k], g_lo[k] = hi[k], g_hi[k]
                finite = np.isfinite(bound_hi[k])
                hi[k] = np.where(finite, bound_hi[k] - 0.5 * (bound_hi[k] - hi[k]), hi[k] + growth[k])
                g_hi[k] = g(k, hi[k])
            growth = 2.0 * growth

        saturated = np.zeros(T.size, dtype=bool)
        if saturate:
            saturated = (g_lo <= 0.0) & (g_hi < 0.0)
            g_hi = np.where(saturated, 0.0, g_hi)
            hi = np.where(saturated, bound_hi, hi)
        failed = ~((g_lo <= 0.0) & (g_hi >= 0.0))
        if np.any(failed):
            k = int(np.nonzero(failed)[0][0])
            location = {
                "index": int(k), "x": X[k].tolist(), "y": Y[k].tolist(), "t": float(T[k]),
                "failures": int(np.sum(failed))
            }
            raise OutsideDualDomain(
                f"outside dual domain: no root of t + phi in the s-range of {family.identifier}", location
            )

        s = np.where(g_lo == 0.0, lo, np.where(g_hi == 0.0, hi, 0.5 * (lo + hi)))
        gs = g(everything, s)
        gs[saturated] = 0.0
        tolerance = settings.root_tolerance * (1.0 + np.abs(T))
        halved = np.ones(T.size, dtype=bool)
        active = (np.abs(gs) > tolerance) & ~saturated

        for iteration in range(settings.root_max_iter):
            if not np.any(active):
                break
            k = np.nonzero(active)[0]
            sk, gk = s[k], gs[k]
            lo[k] = np.where(gk < 0.0, sk, lo[k])
            hi[k] = np.where(gk > 0.0, sk, hi[k])
            with np.errstate(all="ignore"):
                slope = family.phi_s(X[k], Y[k], sk)
                newton = sk - gk / slope
            use_newton = halved[k] & np.isfinite(newton) & (newton > lo[k]) & (newton < hi[k])
            s_new = np.where(use_newton, newton, 0.5 * (lo[k] + hi[k]))
            g_new = g(k, s_new)
            halved[k] = np.abs(g_new) <= 0.5 * np.abs(gk)
            s[k], gs[k] = s_new, g_new
            collapsed = (hi - lo) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(s))
            active = (np.abs(gs) > tolerance) & ~collapsed
        else:
            if np.any(active):
                logger.warning(f"solve_s hit the {settings.root_max_iter}-iteration cap at {int(np.sum(active))} points")

        return s.reshape(shape)

    def _reference(self, family: ConstraintFamily, x, y, s) -> Dict[str, np.ndarray]:
        step = settings.derivative_step
        return {
            "phi_s": richardson_derivative(lambda v: family.phi(x, y, v), s, step),
            "phi_x": richardson_gradient(lambda p: family.phi(p, y, s), x, step),
            "phi_y": richardson_gradient(lambda q: family.phi(x, q, s), y, step),
            "phi_xx": richardson_gradient(lambda p: family.phi_x(p, y, s), x, step),
            "phi_xy": richardson_gradient(lambda q: family.phi_x(x, q, s), y, step),
            "phi_xs": richardson_derivative(lambda v: family.phi_x(x, y, v), s, step),
        }

    def _samples(self, family: ConstraintFamily, sample_count: int, seed: int) -> Tuple[np.ndarray, ...]:
        if sample_count < 1:
            raise ConfigValidationError(f"sample_count must be at least 1, got {sample_count}")
        rng = np.random.default_rng(seed)
        return family.sample(rng, sample_count)

    def check_derivatives(self, family: ConstraintFamily, sample_count: int, seed: int = 0) -> DerivativeReport:
        """Compare derivative evaluators with central differences on random valid samples."""
        x, y, s = self._samples(family, sample_count, seed)
        reference = self._reference(family, x, y, s)
        errors: Dict[str, float] = {}
        worst_name, worst_value, worst_index = None, -1.0, 0
        for name in FIRST_ORDER + SECOND_ORDER:
            per_sample = _relative_error(getattr(family, name)(x, y, s), reference[name])
            errors[name] = float(np.max(per_sample))
            if errors[name] > worst_value:
                worst_name, worst_value, worst_index = name, errors[name], int(np.argmax(per_sample))

        first = max(errors[name] for name in FIRST_ORDER)
        second = max(errors[name] for name in SECOND_ORDER)
        passed = first <= settings.derivative_tol and second <= settings.second_derivative_tol
        if not passed:
            logger.warning(f"{family.identifier}: derivative check failed, worst {worst_name} = {worst_value:.3e}")
        logger.info(f"{family.identifier}: derivative check on {sample_count} samples, first-order max {first:.3e}")
        return DerivativeReport(
            family=family.identifier,
            errors=errors,
            first_order_max=first,
            second_order_max=second,
            sample_count=sample_count,
            seed=seed,
            worst_derivative=worst_name,
            worst_location=_location(x, y, s, worst_index),
            passed=passed
        )

    def h2_determinants(self, family: ConstraintFamily, x, y, s) -> np.ndarray:
        """det of (phi_xy - phi_xs (x) phi_y / phi_s) restricted to the target tangent space."""
        matrix = family.phi_xy(x, y, s) - (
            family.phi_xs(x, y, s)[..., :, None] * family.phi_y(x, y, s)[..., None, :]
        ) / family.phi_s(x, y, s)[..., None, None]
        restricted = matrix @ family.target_tangent(y)
        return np.linalg.det(restricted)

    def check_H2(self, family: ConstraintFamily, sample_count: int, seed: int = 0) -> SampleExtremum:
        """Sampled minimum of the (H2) determinant magnitude."""
        x, y, s = self._samples(family, sample_count, seed)
        values = np.abs(self.h2_determinants(family, x, y, s))
        k = int(np.argmin(values))
        logger.info(f"{family.identifier}: min |det| over {sample_count} samples = {values[k]:.4e}")
        return SampleExtremum(
            family=family.identifier,
            value=float(values[k]),
            sample_count=sample_count,
            seed=seed,
            location=_location(x, y, s, k)
        )

    def check_monotonicity(self, family: ConstraintFamily, sample_count: int, seed: int = 0) -> SampleExtremum:
        """Sampled minimum of phi_s, compared with the declared theta0."""
        x, y, s = self._samples(family, sample_count, seed)
        values = family.phi_s(x, y, s)
        k = int(np.argmin(values))
        satisfied = bool(values[k] >= family.theta0)
        if not satisfied:
            logger.warning(f"{family.identifier}: min phi_s {values[k]:.4e} below theta0 {family.theta0:.4e}")
        return SampleExtremum(
            family=family.identifier,
            value=float(values[k]),
            sample_count=sample_count,
            seed=seed,
            location=_location(x, y, s, k),
            bound=family.theta0,
            satisfied=satisfied
        )

    def check_dual_derivative(self, family: ConstraintFamily, sample_count: int, seed: int = 0) -> SampleExtremum:
        """Max error between d(solve_s)/dt and -1/phi_s at the root."""
        x, y, s = self._samples(family, sample_count, seed)
        t = -family.phi(x, y, s)
        step = settings.dual_derivative_step
        numeric = (self.solve_s(family, x, y, t + step) - self.solve_s(family, x, y, t - step)) / (2.0 * step)
        exact = -1.0 / family.phi_s(x, y, s)
        errors = np.abs(numeric - exact) / np.maximum(1.0, np.abs(exact))
        k = int(np.argmax(errors))
        return SampleExtremum(
            family=family.identifier,
            value=float(errors[k]),
            sample_count=sample_count,
            seed=seed,
            location=_location(x, y, s, k),
            bound=1e-6,
            satisfied=bool(errors[k] <= 1e-6)
        )
