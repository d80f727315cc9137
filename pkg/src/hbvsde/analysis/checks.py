"""Mechanized checks of the stability and ergodicity conditions.

Both checkers report every intermediate quantity; a verdict that does not
conclude is data, never an exception.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ModelParams, NoiseParams, StateVec, validate_params
from ..hbv import default_gamma, operative_equilibrium, reproduction_number

STABLE = "Stable"
NOT_CONCLUDED = "NotConcluded"
ERGODIC = "ErgodicConditionsHold"

ERGODIC_STATEMENT_NOTE = (
    "The stated conditions read sigma1^2 >= mu1 - mu*, "
    "sigma2^2 >= mu2 - mu* + (1-epsilon)p/2 and mu3 >= mu3 - (1-epsilon)p/2; "
    "the Lyapunov argument behind them needs k1, k2, k3 > 0, which is the "
    "opposite inequality for the noise terms (and the third printed condition "
    "is vacuous). This report uses k1, k2, k3 > 0."
)

OMEGA_NOTE = (
    "omega follows the printed bound sigma1^2*xbar + sigma2^2*ybar + sigma3^2*zbar^2. "
    "The inequality x^2 <= 2(x-a)^2 + 2a^2 used to reach it yields squared "
    "equilibrium values in all three terms; omega_squared reports that variant."
)


@dataclass(frozen=True)
class StabilityReport:
    cond_a_value: float
    cond_b_lhs: float
    cond_b_rhs: float
    gamma_used: float
    gamma_source: str
    matrix: tuple[tuple[float, float], tuple[float, float]]
    sym_eigenvalues: tuple[float, float]
    lambda_max: float
    verdict: str
    notes: tuple[str, ...] = ()

    @property
    def cond_a_holds(self) -> bool:
        return self.cond_a_value < 0

    @property
    def cond_b_holds(self) -> bool:
        return self.cond_b_lhs <= self.cond_b_rhs

    @property
    def negative_definite(self) -> bool:
        return all(e < 0 for e in self.sym_eigenvalues)

    @property
    def decay_bound(self) -> float:
        """Upper bound ``-|lambda_max|/2`` on the growth rate of ln(y + z)."""
        return -0.5 * abs(self.lambda_max)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            cond_a_holds=self.cond_a_holds,
            cond_b_holds=self.cond_b_holds,
            negative_definite=self.negative_definite,
            decay_bound=self.decay_bound,
            matrix=[list(r) for r in self.matrix],
            sym_eigenvalues=list(self.sym_eigenvalues),
            notes=list(self.notes),
        )
        return d


@dataclass(frozen=True)
class ErgodicityReport:
    k1: float
    k2: float
    k3: float
    mu_star: float
    omega: float
    omega_squared: float
    equilibrium: StateVec
    equilibrium_kind: str
    r0: float
    verdict: str
    statement_discrepancy_note: str = ERGODIC_STATEMENT_NOTE
    notes: tuple[str, ...] = field(default=())

    @property
    def k(self) -> tuple[float, float, float]:
        return (self.k1, self.k2, self.k3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["equilibrium"] = [self.equilibrium.x, self.equilibrium.y, self.equilibrium.z]
        d["notes"] = list(self.notes)
        return d


def stability_matrix(params: ModelParams, noise: NoiseParams, gamma: float) -> np.ndarray:
    a = (1.0 - params.epsilon) * params.p - params.q - params.mu2
    c = (1.0 - params.eta) * params.beta * gamma - params.mu3
    return np.array(
        [
            [a + 0.5 * noise.sigma2 ** 2, c],
            [a, c + 0.5 * noise.sigma3 ** 2],
        ]
    )


def stability_verdict(cond_a: float, lhs: float, rhs: float, sym_eigenvalues) -> str:
    """``Stable`` iff condition a, condition b and negative definiteness all hold.

    For any admissible rates and noise the symmetric part has determinant
    ``(a + s2/2)(c + s3/2) - ((a + c)/2)**2 <= a*c - ((a + c)/2)**2 <= 0``
    whenever both diagonal entries are negative, so the last requirement is
    never met and this rule cannot return ``Stable`` for a real parameter set.
    """
    ok = cond_a < 0 and lhs <= rhs and all(e < 0 for e in sym_eigenvalues)
    return STABLE if ok else NOT_CONCLUDED


def check_stability(
    params: ModelParams,
    noise: NoiseParams,
    gamma: float | None = None,
    trajectory=None,
) -> StabilityReport:
    """Evaluate the almost-sure exponential stability conditions for (y, z).

    ``gamma`` bounds x from above.  Precedence: explicit value, then the
    running maximum of x over ``trajectory``, then ``lam / mu1``.
    """
    validate_params(params, noise)
    if gamma is not None:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        source = "user"
    elif trajectory is not None:
        gamma = float(np.max(trajectory.states[..., 0]))
        source = "trajectory_max"
    else:
        gamma = default_gamma(params)
        source = "default_lam_over_mu1"

    a = (1.0 - params.epsilon) * params.p - params.q - params.mu2
    c = (1.0 - params.eta) * params.beta * gamma - params.mu3
    cond_a = a + 0.5 * noise.sigma2 ** 2
    lhs = c * a
    rhs = cond_a * (c + 0.5 * noise.sigma3 ** 2)

    m = stability_matrix(params, noise, gamma)
    sym = 0.5 * (m + m.T)
    eig = np.linalg.eigvalsh(sym)
    lam_max = float(eig[-1])

    notes = []
    if noise.sigma2 == 0.0 and noise.sigma3 == 0.0:
        notes.append(
            "deterministic-degenerate: sigma2 = sigma3 = 0, so both conditions reduce "
            "to sign checks on the noise-free rates"
        )
    if not lhs <= rhs:
        notes.append("condition b fails as printed (lhs > rhs)")
    if eig[-1] >= 0:
        notes.append("symmetric part is not negative definite (lambda_max >= 0)")
    return StabilityReport(
        cond_a_value=float(cond_a),
        cond_b_lhs=float(lhs),
        cond_b_rhs=float(rhs),
        gamma_used=float(gamma),
        gamma_source=source,
        matrix=(tuple(map(float, m[0])), tuple(map(float, m[1]))),
        sym_eigenvalues=(float(eig[0]), float(eig[1])),
        lambda_max=lam_max,
        verdict=stability_verdict(cond_a, lhs, rhs, eig),
        notes=tuple(notes),
    )


def check_ergodicity(
    params: ModelParams,
    noise: NoiseParams,
    equilibrium: StateVec | None = None,
) -> ErgodicityReport:
    validate_params(params, noise)
    if equilibrium is None:
        equilibrium, kind = operative_equilibrium(params)
    else:
        kind = "supplied"
    mu_star = min(params.mu1, params.mu2)
    half_prod = 0.5 * (1.0 - params.epsilon) * params.p
    s1, s2, s3 = noise.sigma1 ** 2, noise.sigma2 ** 2, noise.sigma3 ** 2
    k1 = params.mu1 - mu_star - s1
    k2 = params.mu2 - mu_star + half_prod - s2
    k3 = params.mu3 - half_prod - s3
    xb, yb, zb = equilibrium.x, equilibrium.y, equilibrium.z
    omega = s1 * xb + s2 * yb + s3 * zb ** 2
    omega_sq = s1 * xb ** 2 + s2 * yb ** 2 + s3 * zb ** 2
    r0 = reproduction_number(params)

    notes = [OMEGA_NOTE]
    if r0 <= 1.0:
        notes.append(
            f"derived r0 = {r0:.6g} <= 1: the ergodicity result assumes r0 > 1; the "
            "infection-free equilibrium was used for omega"
            if kind == "infection_free" else f"derived r0 = {r0:.6g} <= 1"
        )
    if noise.is_zero:
        notes.append("deterministic-degenerate: all sigma are zero, omega = 0")
    verdict = ERGODIC if (k1 > 0 and k2 > 0 and k3 > 0) else NOT_CONCLUDED
    return ErgodicityReport(
        k1=float(k1),
        k2=float(k2),
        k3=float(k3),
        mu_star=float(mu_star),
        omega=float(omega),
        omega_squared=float(omega_sq),
        equilibrium=equilibrium,
        equilibrium_kind=kind,
        r0=float(r0),
        verdict=verdict,
        notes=tuple(notes),
    )
