"""Conservative pairwise-exchange Monte Carlo kernels.

Every model is simulated on the constraint set picked out by its conserved
money-function total (plus the per-agent floors). In shifted coordinates
each agent contributes one or more nonnegative "slots", and an event makes
the selected slots jointly uniform given their sum: a uniform split for a
pair of slots, a Dirichlet(1, ..., 1) draw for more. Such moves leave the
uniform measure on the constrained simplex invariant, so the stationary
per-slot marginal is the exponential law with the model's closed-form
temperature; infeasible proposals (overdraft caps, cash shortfalls) are
rejected, never clamped.

The credit market additionally keeps every per-agent net position
M_i = x_i + assets_i - liabilities_i fixed: credit moves carry a
compensating cash leg, and lending/repayment enter the equilibrium chain
as a matched pair ("turnover") so total credit stays on its conserved
shell while the composition mixes.

``run_chain`` advances whole sweeps of disjoint events drawn from a random
pairing, which is statistically identical to repeated single events and
fast enough for 1e7-event runs; ``step`` applies exactly one event.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ensembles import ModelKind, ModelSpec, ModelValidationError

AUDIT_INTERVAL = 100_000
CONSERVATION_RTOL = 1e-9


class DynamicsError(ValueError):
    """Invalid dynamics request (infeasible totals, bad window parameters)."""


class ConservationError(RuntimeError):
    """A conservation audit found drift beyond tolerance."""


@dataclass(frozen=True)
class EventRecord:
    kind: str
    agents: tuple[int, ...]
    accepted: bool


@dataclass
class Population:
    """Mutable per-agent coordinates of one model realization."""

    spec: ModelSpec
    conserved_total: float
    cash: np.ndarray | None = None
    accounts: np.ndarray | None = None
    assets: np.ndarray | None = None
    liabilities: np.ndarray | None = None
    initial_net_positions: np.ndarray | None = None
    events_applied: int = 0
    rejected_events: int = 0

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    def net_positions(self) -> np.ndarray:
        if self.spec.kind is not ModelKind.CREDIT_MARKET:
            raise DynamicsError("net positions are defined for the credit-market model")
        return self.cash + self.assets - self.liabilities

    def conserved_value(self) -> float:
        """Compensated re-summation of the model's conserved money function."""
        kind = self.spec.kind
        if kind is ModelKind.CASH_ONLY:
            return math.fsum(self.cash)
        if kind is ModelKind.OVERDRAFT:
            return math.fsum(self.accounts)
        if kind in (ModelKind.COMBINED, ModelKind.RESTRICTED):
            return math.fsum(self.cash) + math.fsum(self.accounts)
        if kind is ModelKind.CREDIT_MARKET:
            return math.fsum(self.assets)
        if kind is ModelKind.MULTI_ASSET:
            return math.fsum(self.accounts.ravel())
        raise DynamicsError(f"no exchange dynamics for model kind {kind.value}")

    def coordinate_scale(self) -> float:
        """Magnitude reference for relative drift when the total is near zero."""
        parts = [np.abs(a).sum() for a in (self.cash, self.accounts, self.assets) if a is not None]
        return max(abs(self.conserved_total), float(sum(parts)), 1.0)

    def check_invariants(self) -> None:
        spec = self.spec
        kind = spec.kind
        if self.cash is not None and self.cash.min() < 0:
            raise ConservationError(f"negative cash: {self.cash.min()}")
        if kind in (ModelKind.OVERDRAFT, ModelKind.COMBINED, ModelKind.RESTRICTED):
            if self.accounts.min() < -spec.overdraft:
                raise ConservationError(
                    f"account below the overdraft floor: {self.accounts.min()} < {-spec.overdraft}"
                )
        if kind is ModelKind.RESTRICTED and self.accounts.max() > 0:
            raise ConservationError(f"positive account in the no-credit model: {self.accounts.max()}")
        if kind is ModelKind.MULTI_ASSET and self.accounts.min() < 0:
            raise ConservationError(f"negative asset holding: {self.accounts.min()}")
        if kind is ModelKind.CREDIT_MARKET:
            for name, arr in (("assets", self.assets), ("liabilities", self.liabilities)):
                if arr.min() < 0:
                    raise ConservationError(f"negative {name}: {arr.min()}")
        drift = abs(self.conserved_value() - self.conserved_total)
        if drift > CONSERVATION_RTOL * self.coordinate_scale():
            raise ConservationError(
                f"conserved total drifted by {drift} (tolerance "
                f"{CONSERVATION_RTOL * self.coordinate_scale()})"
            )
        if kind is ModelKind.CREDIT_MARKET:
            base = spec.volume_x
            cash_total = math.fsum(self.cash)
            if abs(cash_total - base) > CONSERVATION_RTOL * max(base, 1.0):
                raise ConservationError(f"monetary base drifted: {cash_total} != {base}")
            net = math.fsum(self.assets) - math.fsum(self.liabilities)
            if abs(net) > CONSERVATION_RTOL * max(math.fsum(self.assets), 1.0):
                raise ConservationError(f"aggregate credit/debt mismatch: {net}")
            shift = np.abs(self.net_positions() - self.initial_net_positions)
            scale = max(1.0, float(np.abs(self.initial_net_positions).max()))
            if shift.max() > CONSERVATION_RTOL * scale:
                raise ConservationError(f"per-agent net position drifted by {shift.max()}")

    def copy(self) -> "Population":
        return Population(
            spec=self.spec,
            conserved_total=self.conserved_total,
            cash=None if self.cash is None else self.cash.copy(),
            accounts=None if self.accounts is None else self.accounts.copy(),
            assets=None if self.assets is None else self.assets.copy(),
            liabilities=None if self.liabilities is None else self.liabilities.copy(),
            initial_net_positions=(
                None if self.initial_net_positions is None else self.initial_net_positions.copy()
            ),
            events_applied=self.events_applied,
            rejected_events=self.rejected_events,
        )


def _simplex_sample(rng: np.random.Generator, size: int, total: float) -> np.ndarray:
    """Uniform point on the simplex of ``size`` nonnegative slots summing to total."""
    if size == 1:
        return np.array([total], dtype=float)
    spacings = rng.standard_exponential(size)
    return spacings * (total / spacings.sum())


def init_population(
    spec: ModelSpec, policy: str, total: float, seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> Population:
    """Build a valid starting configuration carrying the conserved total.

    ``policy`` is "equal" (every agent at the same point) or
    "uniform-random" (a random point of the constraint set). For the
    credit market ``total`` is the total credit; the monetary base comes
    from the model spec and is split equally as cash.
    """
    if policy not in ("equal", "uniform-random"):
        raise DynamicsError(f"unknown init policy {policy!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    n = spec.n_agents
    d = spec.overdraft
    kind = spec.kind
    pop = Population(spec=spec, conserved_total=float(total))
    if kind is ModelKind.CASH_ONLY:
        if total < 0:
            raise DynamicsError(f"infeasible total {total}: cash cannot be negative")
        pop.cash = np.full(n, total / n) if policy == "equal" else _simplex_sample(rng, n, total)
    elif kind is ModelKind.OVERDRAFT:
        if total < -n * d:
            raise DynamicsError(f"infeasible total {total}: floor is {-n * d}")
        if policy == "equal":
            pop.accounts = np.full(n, total / n)
        else:
            pop.accounts = _simplex_sample(rng, n, total + n * d) - d
    elif kind in (ModelKind.COMBINED, ModelKind.RESTRICTED):
        if total < -n * d or (kind is ModelKind.RESTRICTED and total <= -n * d):
            raise DynamicsError(f"infeasible total {total}: floor is {-n * d}")
        if policy == "equal":
            per_agent = total / n
            if per_agent >= 0:
                pop.cash = np.full(n, per_agent)
                pop.accounts = np.zeros(n)
            else:
                pop.cash = np.zeros(n)
                pop.accounts = np.full(n, per_agent)
        elif kind is ModelKind.COMBINED:
            slots = _simplex_sample(rng, 2 * n, total + n * d)
            pop.cash = slots[:n]
            pop.accounts = slots[n:] - d
        else:
            pop.accounts = -d * rng.random(n)
            cash_total = total - math.fsum(pop.accounts)
            if cash_total < 0:
                raise DynamicsError(f"infeasible total {total} for the drawn account balances")
            pop.cash = _simplex_sample(rng, n, cash_total)
    elif kind is ModelKind.CREDIT_MARKET:
        if total < 0:
            raise DynamicsError(f"infeasible credit total {total}")
        base = spec.volume_x
        if policy == "equal":
            pop.cash = np.full(n, base / n)
            pop.assets = np.full(n, total / n)
            pop.liabilities = np.full(n, total / n)
        else:
            pop.cash = _simplex_sample(rng, n, base)
            pop.assets = _simplex_sample(rng, n, total)
            pop.liabilities = _simplex_sample(rng, n, total)
        pop.initial_net_positions = pop.net_positions().copy()
    elif kind is ModelKind.MULTI_ASSET:
        if total < 0:
            raise DynamicsError(f"infeasible total {total}")
        classes = spec.asset_classes
        if policy == "equal":
            pop.accounts = np.full((n, classes), total / (n * classes))
        else:
            pop.accounts = _simplex_sample(rng, n * classes, total).reshape(n, classes)
    else:
        raise DynamicsError(f"no exchange dynamics for model kind {kind.value}")
    pop.check_invariants()
    return pop


# ---------------------------------------------------------------------------
# Event primitives
# ---------------------------------------------------------------------------


def pair_reshuffle(a: float, b: float, u: float) -> tuple[float, float]:
    """Uniform split of the pair total: (u*s, s - u*s) with s = a + b."""
    s = a + b
    first = u * s
    return first, s - first


def lend(pop: Population, lender: int, borrower: int, amount: float) -> None:
    """Credit-market lending event: cash moves against a new claim/debt pair."""
    if pop.spec.kind is not ModelKind.CREDIT_MARKET:
        raise DynamicsError("lend applies to the credit-market model")
    if amount < 0:
        raise DynamicsError(f"negative amount {amount}")
    if pop.cash[lender] < amount:
        raise DynamicsError(f"lender {lender} holds {pop.cash[lender]} < {amount}")
    pop.cash[lender] -= amount
    pop.assets[lender] += amount
    pop.cash[borrower] += amount
    pop.liabilities[borrower] += amount


def repay(pop: Population, lender: int, borrower: int, amount: float) -> None:
    """Reverse of :func:`lend`: the borrower redeems debt held by the lender."""
    if pop.spec.kind is not ModelKind.CREDIT_MARKET:
        raise DynamicsError("repay applies to the credit-market model")
    if amount < 0:
        raise DynamicsError(f"negative amount {amount}")
    if pop.assets[lender] < amount:
        raise DynamicsError(f"lender {lender} has claims {pop.assets[lender]} < {amount}")
    if pop.cash[borrower] < amount or pop.liabilities[borrower] < amount:
        raise DynamicsError(f"borrower {borrower} cannot repay {amount}")
    pop.cash[lender] += amount
    pop.assets[lender] -= amount
    pop.cash[borrower] -= amount
    pop.liabilities[borrower] -= amount


def _credit_transfer(
    holdings: np.ndarray, cash: np.ndarray, j: int, k: int, u: float, cash_sign: float
) -> bool:
    """Reshuffle holdings[j] + holdings[k] with a compensating cash leg.

    cash_sign=-1 for asset claims (buyer pays cash), +1 for liabilities
    (the agent taking on more debt receives cash). Returns acceptance.
    """
    s = holdings[j] + holdings[k]
    new_j = u * s
    delta = new_j - holdings[j]
    cash_j = cash[j] + cash_sign * delta
    cash_k = cash[k] - cash_sign * delta
    if cash_j < 0 or cash_k < 0:
        return False
    holdings[j] += delta
    holdings[k] -= delta
    cash[j] = cash_j
    cash[k] = cash_k
    return True


# ---------------------------------------------------------------------------
# Single-event step
# ---------------------------------------------------------------------------


def step(pop: Population, rng: np.random.Generator) -> EventRecord:
    """Apply exactly one exchange event in place and report it.

    Models with several sub-move types rotate them deterministically with
    the population's event counter so a step sequence matches the sweep
    dynamics in law.
    """
    n = pop.n_agents
    kind = pop.spec.kind
    d = pop.spec.overdraft
    phase = pop.events_applied
    pop.events_applied += 1
    if n < 2:
        raise DynamicsError("pair exchange needs at least 2 agents")

    def pick_pair() -> tuple[int, int]:
        j, k = rng.choice(n, size=2, replace=False)
        return int(j), int(k)

    if kind is ModelKind.CASH_ONLY:
        j, k = pick_pair()
        pop.cash[j], pop.cash[k] = pair_reshuffle(pop.cash[j], pop.cash[k], rng.random())
        return EventRecord("pair_reshuffle", (j, k), True)

    if kind is ModelKind.OVERDRAFT:
        j, k = pick_pair()
        zj, zk = pair_reshuffle(pop.accounts[j] + d, pop.accounts[k] + d, rng.random())
        pop.accounts[j], pop.accounts[k] = zj - d, zk - d
        return EventRecord("pair_reshuffle_shifted", (j, k), True)

    if kind in (ModelKind.COMBINED, ModelKind.RESTRICTED):
        capped = kind is ModelKind.RESTRICTED
        if phase % 2 == 0:
            j, k = pick_pair()
            s = (pop.cash[j] + pop.accounts[j] + d) + (pop.cash[k] + pop.accounts[k] + d)
            g = rng.standard_exponential(4)
            g *= s / g.sum()
            if capped and (g[1] > d or g[3] > d):
                pop.rejected_events += 1
                return EventRecord("pair_resample", (j, k), False)
            pop.cash[j], pop.accounts[j] = g[0], g[1] - d
            pop.cash[k], pop.accounts[k] = g[2], g[3] - d
            return EventRecord("pair_resample", (j, k), True)
        i = int(rng.integers(n))
        w = pop.cash[i] + pop.accounts[i] + d
        z_new = rng.random() * (min(d, w) if capped else w)
        pop.cash[i], pop.accounts[i] = w - z_new, z_new - d
        return EventRecord("resplit", (i,), True)

    if kind is ModelKind.CREDIT_MARKET:
        move = phase % 3
        if move == 2 and n < 4:
            move = 0
        if move == 0:
            j, k = pick_pair()
            ok = _credit_transfer(pop.assets, pop.cash, j, k, rng.random(), -1.0)
            if not ok:
                pop.rejected_events += 1
            return EventRecord("loan_sale", (j, k), ok)
        if move == 1:
            j, k = pick_pair()
            ok = _credit_transfer(pop.liabilities, pop.cash, j, k, rng.random(), +1.0)
            if not ok:
                pop.rejected_events += 1
            return EventRecord("debt_assumption", (j, k), ok)
        g0, g1, g2, g3 = (int(i) for i in rng.choice(n, size=4, replace=False))
        scale = 2.0 * pop.conserved_total / n
        amount = rng.random() * scale
        ok = (
            pop.cash[g0] >= amount
            and pop.assets[g2] >= amount
            and pop.cash[g3] >= amount
            and pop.liabilities[g3] >= amount
        )
        if ok:
            lend(pop, g0, g1, amount)
            repay(pop, g2, g3, amount)
        else:
            pop.rejected_events += 1
        return EventRecord("turnover", (g0, g1, g2, g3), ok)

    if kind is ModelKind.MULTI_ASSET:
        classes = pop.spec.asset_classes
        if phase % 2 == 0 or classes == 1:
            j, k = pick_pair()
            c = int(rng.integers(classes))
            pop.accounts[j, c], pop.accounts[k, c] = pair_reshuffle(
                pop.accounts[j, c], pop.accounts[k, c], rng.random()
            )
            return EventRecord("pair_reshuffle_class", (j, k), True)
        i = int(rng.integers(n))
        total = pop.accounts[i].sum()
        g = rng.standard_exponential(classes)
        pop.accounts[i] = g * (total / g.sum())
        return EventRecord("class_resplit", (i,), True)

    raise DynamicsError(f"no exchange dynamics for model kind {kind.value}")


# ---------------------------------------------------------------------------
# Vectorized sweeps
# ---------------------------------------------------------------------------


def _paired_indices(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    pairs = n // 2
    return perm[:pairs], perm[pairs : 2 * pairs]


def _sweep(pop: Population, rng: np.random.Generator, phase: int) -> int:
    """One sweep of disjoint events; returns the number of events applied."""
    n = pop.n_agents
    kind = pop.spec.kind
    d = pop.spec.overdraft

    if kind is ModelKind.CASH_ONLY:
        j, k = _paired_indices(rng, n)
        s = pop.cash[j] + pop.cash[k]
        first = rng.random(j.size) * s
        pop.cash[j] = first
        pop.cash[k] = s - first
        return j.size

    if kind is ModelKind.OVERDRAFT:
        j, k = _paired_indices(rng, n)
        s = (pop.accounts[j] + d) + (pop.accounts[k] + d)
        first = rng.random(j.size) * s
        pop.accounts[j] = first - d
        pop.accounts[k] = (s - first) - d
        return j.size

    if kind in (ModelKind.COMBINED, ModelKind.RESTRICTED):
        capped = kind is ModelKind.RESTRICTED
        if phase % 2 == 0:
            j, k = _paired_indices(rng, n)
            s = (pop.cash[j] + pop.accounts[j] + d) + (pop.cash[k] + pop.accounts[k] + d)
            g = rng.standard_exponential((j.size, 4))
            g *= (s / g.sum(axis=1))[:, None]
            accept = (g[:, 1] <= d) & (g[:, 3] <= d) if capped else np.ones(j.size, bool)
            ja, ka = j[accept], k[accept]
            ga = g[accept]
            pop.cash[ja] = ga[:, 0]
            pop.accounts[ja] = ga[:, 1] - d
            pop.cash[ka] = ga[:, 2]
            pop.accounts[ka] = ga[:, 3] - d
            pop.rejected_events += int(j.size - ja.size)
            return j.size
        w = pop.cash + pop.accounts + d
        z_new = rng.random(n) * (np.minimum(d, w) if capped else w)
        pop.cash = w - z_new
        pop.accounts = z_new - d
        return n

    if kind is ModelKind.CREDIT_MARKET:
        move = phase % 3
        if move == 2 and n < 4:
            move = 0
        if move in (0, 1):
            holdings = pop.assets if move == 0 else pop.liabilities
            sign = -1.0 if move == 0 else 1.0
            j, k = _paired_indices(rng, n)
            s = holdings[j] + holdings[k]
            delta = rng.random(j.size) * s - holdings[j]
            cash_j = pop.cash[j] + sign * delta
            cash_k = pop.cash[k] - sign * delta
            accept = (cash_j >= 0) & (cash_k >= 0)
            ja, ka, da = j[accept], k[accept], delta[accept]
            holdings[ja] += da
            holdings[ka] -= da
            pop.cash[ja] = cash_j[accept]
            pop.cash[ka] = cash_k[accept]
            pop.rejected_events += int(j.size - ja.size)
            return j.size
        groups = n // 4
        perm = rng.permutation(n)
        g0, g1 = perm[:groups], perm[groups : 2 * groups]
        g2, g3 = perm[2 * groups : 3 * groups], perm[3 * groups : 4 * groups]
        scale = 2.0 * pop.conserved_total / n
        amount = rng.random(groups) * scale
        accept = (
            (pop.cash[g0] >= amount)
            & (pop.assets[g2] >= amount)
            & (pop.cash[g3] >= amount)
            & (pop.liabilities[g3] >= amount)
        )
        a = amount[accept]
        i0, i1, i2, i3 = g0[accept], g1[accept], g2[accept], g3[accept]
        pop.cash[i0] -= a
        pop.assets[i0] += a
        pop.cash[i1] += a
        pop.liabilities[i1] += a
        pop.cash[i2] += a
        pop.assets[i2] -= a
        pop.cash[i3] -= a
        pop.liabilities[i3] -= a
        pop.rejected_events += int(groups - a.size)
        return groups

    if kind is ModelKind.MULTI_ASSET:
        classes = pop.spec.asset_classes
        if phase % 2 == 0 or classes == 1:
            j, k = _paired_indices(rng, n)
            c = rng.integers(classes, size=j.size)
            s = pop.accounts[j, c] + pop.accounts[k, c]
            first = rng.random(j.size) * s
            pop.accounts[j, c] = first
            pop.accounts[k, c] = s - first
            return j.size
        totals = pop.accounts.sum(axis=1)
        g = rng.standard_exponential((n, classes))
        pop.accounts = g * (totals / g.sum(axis=1))[:, None]
        return n

    raise DynamicsError(f"no exchange dynamics for model kind {kind.value}")


# ---------------------------------------------------------------------------
# Chains and recorded samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainMeta:
    seed: int
    kernel: str
    steps: int
    burn_in: int
    thin: int
    policy: str
    total: float
    spec: ModelSpec
    events_run: int
    rejected_events: int
    max_drift: float


@dataclass
class SampleSet:
    """Thinned equilibrium records: one array (n_records, N) per coordinate."""

    coords: dict[str, np.ndarray]
    record_steps: np.ndarray
    meta: ChainMeta

    @property
    def n_records(self) -> int:
        return int(self.record_steps.size)

    def pooled(self, names: list[str] | None = None) -> np.ndarray:
        picked = self.coords if names is None else {k: self.coords[k] for k in names}
        return np.concatenate([v.ravel() for v in picked.values()])

    def to_csv(self, path_or_file) -> None:
        """Long-format CSV: step, agent, coord_name, value."""
        close = False
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            handle = open(path_or_file, "w", newline="")
            close = True
        else:
            handle = path_or_file
        try:
            handle.write("step,agent,coord_name,value\n")
            names = sorted(self.coords)
            for r, step_index in enumerate(self.record_steps):
                for name in names:
                    row = self.coords[name][r]
                    handle.write(
                        "".join(
                            f"{int(step_index)},{agent},{name},{value!r}\n"
                            for agent, value in enumerate(row)
                        )
                    )
        finally:
            if close:
                handle.close()

    def csv_bytes(self) -> bytes:
        buffer = io.StringIO()
        self.to_csv(buffer)
        return buffer.getvalue().encode()


def default_burn_in(n_agents: int) -> int:
    return 100 * n_agents


def default_thin(n_agents: int) -> int:
    return n_agents


def recorded_coordinates(pop: Population) -> dict[str, np.ndarray]:
    """Model-relevant marginal coordinates, copied out of the population."""
    kind = pop.spec.kind
    if kind is ModelKind.CASH_ONLY:
        return {"x": pop.cash.copy()}
    if kind is ModelKind.OVERDRAFT:
        return {"z": pop.accounts + pop.spec.overdraft}
    if kind in (ModelKind.COMBINED, ModelKind.RESTRICTED):
        return {"x": pop.cash.copy(), "y": pop.accounts.copy()}
    if kind is ModelKind.CREDIT_MARKET:
        return {"assets": pop.assets.copy()}
    if kind is ModelKind.MULTI_ASSET:
        return {f"y_{c}": pop.accounts[:, c].copy() for c in range(pop.spec.asset_classes)}
    raise DynamicsError(f"no recorded coordinates for model kind {kind.value}")


def advance(
    pop: Population, rng: np.random.Generator, n_events: int, phase: int = 0
) -> tuple[int, int]:
    """Apply whole sweeps until at least ``n_events`` events ran.

    Returns (events applied, next phase) so callers can interleave their
    own audits or recording with further calls.
    """
    events = 0
    while events < n_events:
        events += _sweep(pop, rng, phase)
        phase += 1
    pop.events_applied += events
    return events, phase


def run_chain(
    spec: ModelSpec,
    policy: str,
    total: float,
    steps: int,
    burn_in: int | None = None,
    thin: int | None = None,
    seed: int = 0,
    audit_every: int = AUDIT_INTERVAL,
) -> SampleSet:
    """Run an exchange chain and return thinned equilibrium samples.

    Parameters
    ----------
    spec, policy, total : model, init policy and conserved total.
    steps : total number of exchange events.
    burn_in, thin : recording window in events; default to 100*N and N.
    seed : seeds one PCG64 stream driving init and every event.
    audit_every : events between compensated conservation audits.

    Records fire at event counts burn_in + k*thin (k >= 1, up to steps);
    identical arguments reproduce identical samples byte for byte.
    """
    n = spec.n_agents
    if burn_in is None:
        burn_in = default_burn_in(n)
    if thin is None:
        thin = default_thin(n)
    if burn_in < 0 or steps <= burn_in:
        raise DynamicsError(f"need steps > burn_in >= 0, got steps={steps}, burn_in={burn_in}")
    if thin < 1:
        raise DynamicsError(f"thin must be >= 1, got {thin}")
    rng = np.random.default_rng(seed)
    pop = init_population(spec, policy, total, rng=rng)

    n_records = (steps - burn_in) // thin
    snapshots: list[dict[str, np.ndarray]] = []
    record_steps = np.empty(n_records, dtype=np.int64)
    next_record = 0
    events = 0
    phase = 0
    next_audit = audit_every
    max_drift = 0.0
    scale = pop.coordinate_scale()
    while events < steps or next_record < n_records:
        events += _sweep(pop, rng, phase)
        phase += 1
        while next_record < n_records and burn_in + (next_record + 1) * thin <= events:
            record_steps[next_record] = burn_in + (next_record + 1) * thin
            snapshots.append(recorded_coordinates(pop))
            next_record += 1
        if events >= next_audit:
            pop.check_invariants()
            max_drift = max(max_drift, abs(pop.conserved_value() - pop.conserved_total) / scale)
            next_audit += audit_every
    pop.check_invariants()
    max_drift = max(max_drift, abs(pop.conserved_value() - pop.conserved_total) / scale)
    pop.events_applied = events

    coords = {
        name: np.stack([snap[name] for snap in snapshots]) if snapshots else np.empty((0, n))
        for name in (snapshots[0] if snapshots else recorded_coordinates(pop))
    }
    meta = ChainMeta(
        seed=seed,
        kernel=spec.kind.value,
        steps=steps,
        burn_in=burn_in,
        thin=thin,
        policy=policy,
        total=float(total),
        spec=spec,
        events_run=events,
        rejected_events=pop.rejected_events,
        max_drift=max_drift,
    )
    return SampleSet(coords=coords, record_steps=record_steps, meta=meta)


def free_expansion(pop: Population, volume_y_new: float) -> Population:
    """Instantaneous widening of the credit ceiling V_y at fixed coordinates.

    The cash configuration, the total and hence the temperature are all
    untouched; only the model volume grows. Entropy bookkeeping for the
    irreversible step lives in the transform module.
    """
    if pop.spec.kind is not ModelKind.CASH_ONLY:
        raise DynamicsError("free expansion is defined for the cash-only model")
    if volume_y_new < pop.spec.volume_y:
        raise DynamicsError(
            f"free expansion cannot shrink the volume: {volume_y_new} < {pop.spec.volume_y}"
        )
    expanded = pop.copy()
    expanded.spec = replace(pop.spec, volume_y=float(volume_y_new))
    return expanded
