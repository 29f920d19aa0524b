"""Power-law income ensemble with a conserved log-income total.

Multiplicative income growth with zero-mean rates conserves
Y = sum_i ln(I_i), and the canonical ensemble over incomes above a floor
J carries the Boltzmann weight (t_max/I)^(t_max/T) per agent. The
partition integral converges only for T < t_max, where incomes follow
the Pareto density p(I) ~ I^(-a) with exponent a = t_max/T; entropy and
its temperature response diverge as T -> t_max, signalling the breakdown
of equilibrium.

Two mean-log-income notions coexist for this weight (its exponent scales
like t_max/T rather than 1/T): the Legendre combination F + T·S equals
T^2 dlnZ/dT (``pareto_mean_logincome``), while the ensemble average of
ln I per agent is ln J + T/(t_max - T) (``pareto_mean_logincome_sampling``);
Monte Carlo estimates converge to the latter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .ensembles import ModelValidationError


class ParetoError(ValueError):
    """Invalid parameters for the power-law income ensemble."""


@dataclass(frozen=True)
class ParetoSpec:
    """Income population: floor J, divergence temperature t_max, volume V."""

    n_agents: int
    floor_j: float
    t_max: float
    volume: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.n_agents, int) or self.n_agents < 1:
            raise ParetoError(f"n_agents must be a positive integer, got {self.n_agents}")
        if not self.floor_j > 0:
            raise ParetoError(f"income floor must be positive, got {self.floor_j}")
        if not self.t_max > 0:
            raise ParetoError(f"t_max must be positive, got {self.t_max}")
        if not self.volume > 0:
            raise ParetoError(f"volume must be positive, got {self.volume}")


def _check_window(spec: ParetoSpec, temperature: float) -> float:
    if not 0.0 < temperature < spec.t_max:
        raise ParetoError(
            f"equilibrium requires 0 < T < t_max ({spec.t_max}); got T={temperature}"
        )
    return spec.t_max / temperature  # exponent a > 1


def pareto_log_partition(spec: ParetoSpec, temperature: float) -> float:
    """ln Z = N [a ln t_max - (a-1) ln J - ln(a-1) + ln V] - ln N!, a = t_max/T."""
    a = _check_window(spec, temperature)
    per_agent = (
        a * math.log(spec.t_max)
        - (a - 1.0) * math.log(spec.floor_j)
        - math.log(a - 1.0)
        + math.log(spec.volume)
    )
    return spec.n_agents * per_agent - float(gammaln(spec.n_agents + 1))


def pareto_entropy(spec: ParetoSpec, temperature: float) -> float:
    """S(T) = N ln(J V T) + N - N ln(t_max - T) + N T/(t_max - T).

    This is the per-agent partition's lnZ + T dlnZ/dT; the permutation
    factor kept in :func:`pareto_log_partition` only shifts it by the
    T-independent constant -ln N!.
    """
    _check_window(spec, temperature)
    n, t, t_max = spec.n_agents, temperature, spec.t_max
    return (
        n * math.log(spec.floor_j * spec.volume * t)
        + n
        - n * math.log(t_max - t)
        + n * t / (t_max - t)
    )


def pareto_free_energy(spec: ParetoSpec, temperature: float) -> float:
    return -temperature * pareto_log_partition(spec, temperature)


def pareto_mean_logincome(spec: ParetoSpec, temperature: float) -> float:
    """Per-agent Legendre mean: Y/N = T + t_max ln(J/t_max) + T^2/(t_max - T)."""
    _check_window(spec, temperature)
    t, t_max = temperature, spec.t_max
    return t + t_max * math.log(spec.floor_j / t_max) + t * t / (t_max - t)


def pareto_mean_logincome_sampling(spec: ParetoSpec, temperature: float) -> float:
    """Per-agent ensemble average of ln I: ln J + T/(t_max - T)."""
    _check_window(spec, temperature)
    return math.log(spec.floor_j) + temperature / (spec.t_max - temperature)


def temperature_from_log_excess(spec: ParetoSpec, mean_log_excess: float) -> float:
    """T with canonical <ln(I/J)> equal to the given value theta.

    Inverts theta = T/(t_max - T): T = t_max * theta / (1 + theta).
    """
    if not mean_log_excess > 0:
        raise ParetoError(f"mean log excess must be positive, got {mean_log_excess}")
    return spec.t_max * mean_log_excess / (1.0 + mean_log_excess)


def pareto_direct_sample(
    spec: ParetoSpec, temperature: float, n_samples: int, seed: int = 0
) -> np.ndarray:
    """Inverse-CDF draws from p(I) ~ I^(-a) on [J, inf), a = t_max/T."""
    a = _check_window(spec, temperature)
    if n_samples < 1:
        raise ParetoError(f"n_samples must be positive, got {n_samples}")
    rng = np.random.default_rng(seed)
    u = rng.random(n_samples)
    return spec.floor_j * (1.0 - u) ** (-1.0 / (a - 1.0))


def pareto_quantile(spec: ParetoSpec, temperature: float, u) -> np.ndarray:
    """Quantile function I(u) = J (1-u)^(-1/(a-1)) of the income law."""
    a = _check_window(spec, temperature)
    return spec.floor_j * (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / (a - 1.0))


# ---------------------------------------------------------------------------
# Conserved-Y pairwise dynamics
# ---------------------------------------------------------------------------


def multiplicative_exchange(
    income_j: float, income_k: float, growth: float
) -> tuple[float, float]:
    """One zero-sum multiplicative event: (I_j * g, I_k / g); product conserved."""
    if growth <= 0:
        raise ParetoError(f"growth factor must be positive, got {growth}")
    return income_j * growth, income_k / growth


def init_incomes(spec: ParetoSpec, mean_log_excess: float) -> np.ndarray:
    """Every agent at I = J e^theta, so Y starts at N (ln J + theta)."""
    if mean_log_excess < 0:
        raise ParetoError("mean log excess cannot be negative (incomes sit above J)")
    return np.full(spec.n_agents, spec.floor_j * math.exp(mean_log_excess))


def pareto_pair_step(incomes: np.ndarray, floor_j: float, rng: np.random.Generator) -> EventTuple:
    """Uniform reshuffle of one pair's log-excess; conserves the income product.

    In z = ln(I/J) >= 0 the move splits z_j + z_k uniformly, which keeps
    the shell measure of the conserved-Y ensemble invariant; incomes never
    fall below the floor, so nothing is ever rejected.
    """
    n = incomes.size
    if n < 2:
        raise ParetoError("pair exchange needs at least 2 agents")
    j, k = (int(i) for i in rng.choice(n, size=2, replace=False))
    z_total = math.log(incomes[j] / floor_j) + math.log(incomes[k] / floor_j)
    z_j = rng.random() * z_total
    incomes[j] = floor_j * math.exp(z_j)
    incomes[k] = floor_j * math.exp(z_total - z_j)
    return (j, k)


EventTuple = tuple[int, int]


def run_income_chain(
    spec: ParetoSpec,
    mean_log_excess: float,
    steps: int,
    burn_in: int | None = None,
    thin: int | None = None,
    seed: int = 0,
) -> "IncomeSampleSet":
    """Conserved-Y chain of pairwise log reshuffles; returns thinned incomes."""
    n = spec.n_agents
    if n < 2:
        raise ParetoError("need at least 2 agents")
    if burn_in is None:
        burn_in = 100 * n
    if thin is None:
        thin = n
    if burn_in < 0 or steps <= burn_in:
        raise ParetoError(f"need steps > burn_in >= 0, got steps={steps}, burn_in={burn_in}")
    if thin < 1:
        raise ParetoError(f"thin must be >= 1, got {thin}")
    rng = np.random.default_rng(seed)
    z = np.full(n, float(mean_log_excess))
    if mean_log_excess < 0:
        raise ParetoError("mean log excess cannot be negative")
    y_initial = math.fsum(z) + n * math.log(spec.floor_j)

    n_records = (steps - burn_in) // thin
    records = np.empty((n_records, n))
    next_record = 0
    events = 0
    pairs = n // 2
    max_drift = 0.0
    while events < steps or next_record < n_records:
        perm = rng.permutation(n)
        j, k = perm[:pairs], perm[pairs : 2 * pairs]
        s = z[j] + z[k]
        first = rng.random(pairs) * s
        z[j] = first
        z[k] = s - first
        events += pairs
        while next_record < n_records and burn_in + (next_record + 1) * thin <= events:
            records[next_record] = spec.floor_j * np.exp(z)
            next_record += 1
    y_final = math.fsum(z) + n * math.log(spec.floor_j)
    max_drift = abs(y_final - y_initial) / max(abs(y_initial), 1.0)
    return IncomeSampleSet(
        incomes=records,
        conserved_y=y_initial,
        y_drift=max_drift,
        seed=seed,
        steps=steps,
        burn_in=burn_in,
        thin=thin,
        spec=spec,
    )


@dataclass
class IncomeSampleSet:
    incomes: np.ndarray
    conserved_y: float
    y_drift: float
    seed: int
    steps: int
    burn_in: int
    thin: int
    spec: ParetoSpec

    def pooled(self) -> np.ndarray:
        return self.incomes.ravel()

    def csv_bytes(self) -> bytes:
        """Long-format CSV matching the exchange-chain sample layout."""
        lines = ["step,agent,coord_name,value"]
        for r in range(self.incomes.shape[0]):
            step_index = self.burn_in + (r + 1) * self.thin
            row = self.incomes[r]
            lines.extend(
                f"{step_index},{agent},income,{value!r}" for agent, value in enumerate(row)
            )
        return ("\n".join(lines) + "\n").encode()


def transition_scan(spec: ParetoSpec, t_grid) -> list[tuple[float, float, float]]:
    """Table of (T, S, T dS/dT) over the grid; the response diverges at t_max.

    T dS/dT = N [1 + T/(t_max - T) + T t_max/(t_max - T)^2], strictly
    increasing in T, so its blow-up flags the equilibrium breakdown.
    """
    rows = []
    n, t_max = spec.n_agents, spec.t_max
    for t in t_grid:
        _check_window(spec, t)
        response = n * (1.0 + t / (t_max - t) + t * t_max / (t_max - t) ** 2)
        rows.append((float(t), pareto_entropy(spec, t), response))
    return rows
