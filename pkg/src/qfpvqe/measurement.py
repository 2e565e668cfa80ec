"""Simulated density-matrix reconstruction from beamsplitter flux differences.

The single-photon (equivalently coherent-comb) state is characterized by
per-bin powers for the diagonal of rho and, for each measured pair (k, l),
the output-power difference of a frequency beamsplitter applied to that
pair.  The difference is linear in rho_kl for fixed diagonals, so the
estimator inverts the simulated 2x2 gate block exactly; with a balanced
ideal gate this reduces to the familiar half-difference rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IncompleteMeasurementError, NormalizationError
from .modes import HADAMARD_IDEAL, calibrated_pair_block, hadamard_transform, hadamard_window

Pair = tuple[int, int]


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic model of the simulated instrument.

    systematic_fraction: relative scale error applied once per optimization
    run to every completed energy evaluation (drawn uniformly in +-s).
    statistical_sigma: additive Gaussian noise per simulated power reading.
    """

    systematic_fraction: float = 0.0
    statistical_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.systematic_fraction < 0 or self.statistical_sigma < 0:
            raise ValueError("noise magnitudes must be nonnegative")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


NOISELESS = NoiseModel()


@dataclass
class CombState:
    """Amplitude per computational bin plus the coherent reference scale."""

    amplitudes: np.ndarray
    reference_scale: complex = 1.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float) \
            if np.isrealobj(self.amplitudes) else np.asarray(self.amplitudes, dtype=complex)

    @property
    def dim(self) -> int:
        return len(self.amplitudes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class DensityMatrix:
    """Real-symmetric single-particle density matrix."""

    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise DimensionError("density matrix must be square")
        self.rho = r

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.rho))


@dataclass
class MeasurementPlan:
    """Rounds of disjoint bin pairs evaluated in parallel."""

    rounds: list[list[Pair]] = field(default_factory=list)
    max_parallel: int = 5

    def pairs(self) -> set[Pair]:
        return {p for rnd in self.rounds for p in rnd}

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)


def plan_measurements(pairs, max_parallel: int = 5) -> MeasurementPlan:
    """Greedy scheduling of bin pairs into rounds of disjoint beamsplitters.

    Each round touches every bin at most once and holds at most max_parallel
    pairs.  Deterministic for a fixed input order.
    """
    if max_parallel < 1:
        raise ValueError("max_parallel must be >= 1")
    normalized: list[Pair] = []
    seen = set()
    for k, l in pairs:
        if k == l:
            raise ValueError(f"pair ({k}, {l}) is degenerate")
        p = (min(k, l), max(k, l))
        if p not in seen:
            seen.add(p)
            normalized.append(p)
    rounds: list[list[Pair]] = []
    used: list[set[int]] = []
    for p in normalized:
        for rnd, bins in zip(rounds, used):
            if len(rnd) < max_parallel and p[0] not in bins and p[1] not in bins:
                rnd.append(p)
                bins.update(p)
                break
        else:
            rounds.append([p])
            used.append({p[0], p[1]})
    return MeasurementPlan(rounds=rounds, max_parallel=max_parallel)


def gate_block(gate_depth: float | None) -> np.ndarray:
    """Calibrated 2x2 beamsplitter block at the given modulation depth.

    None requests the ideal balanced gate.  The block is computed once for
    the canonical adjacent pair; all pairs share it because the construction
    is translation covariant in bin index.
    """
    if gate_depth is None:
        return HADAMARD_IDEAL.copy()
    pair = (0, 1)
    window = hadamard_window(pair)
    return calibrated_pair_block(hadamard_transform(gate_depth, window, pair), pair).real


def _difference_coefficients(block: np.ndarray) -> tuple[float, float, float]:
    """Coefficients of D = P_l - P_k = ckk rho_kk + cll rho_ll + ckl rho_kl."""
    w = block
    ckk = float(w[1, 0] ** 2 - w[0, 0] ** 2)
    cll = float(w[1, 1] ** 2 - w[0, 1] ** 2)
    ckl = float(2.0 * (w[1, 0] * w[1, 1] - w[0, 0] * w[0, 1]))
    return ckk, cll, ckl


def measure_rho(state: CombState, plan: MeasurementPlan,
                gate_depth: float | None = None,
                noise: NoiseModel = NOISELESS,
                rng: np.random.Generator | None = None,
                require: set[Pair] | None = None) -> DensityMatrix:
    """Reconstruct rho from per-bin powers and pairwise flux differences.

    Diagonals come from direct per-bin power readings; each planned pair is
    sent through the simulated beamsplitter and rho_kl recovered by exact
    inversion of the gate block, which subsumes the reflectivity /
    transmissivity imbalance correction.  Gaussian noise is injected per
    power reading.
    """
    if require is not None:
        missing = {(min(p), max(p)) for p in require} - plan.pairs()
        if missing:
            raise IncompleteMeasurementError(f"plan misses pairs {sorted(missing)}")
    norm = state.norm()
    if abs(norm - 1.0) > 1e-6:
        raise NormalizationError(f"state norm {norm:.8f} != 1")
    if rng is None:
        rng = noise.generator()
    a = state.amplitudes
    d = state.dim
    sigma = noise.statistical_sigma

    def read(power: float) -> float:
        return power + (rng.normal(0.0, sigma) if sigma > 0 else 0.0)

    rho = np.zeros((d, d))
    for k in range(d):
        rho[k, k] = read(abs(a[k]) ** 2)

    block = gate_block(gate_depth)
    ckk, cll, ckl = _difference_coefficients(block)
    for rnd in plan.rounds:
        for (k, l) in rnd:
            if not (0 <= k < d and 0 <= l < d):
                raise DimensionError(f"pair ({k}, {l}) outside state of dim {d}")
            out = block @ np.array([a[k], a[l]])
            diff = read(abs(out[1]) ** 2) - read(abs(out[0]) ** 2)
            value = (diff - ckk * rho[k, k] - cll * rho[l, l]) / ckl
            rho[k, l] = rho[l, k] = value
    return DensityMatrix(rho)


def comb_expectation(state: CombState, hamiltonian: np.ndarray) -> float:
    """Energy of the coherent-comb state: |alpha|^2 times the single-photon value."""
    h = np.asarray(hamiltonian, dtype=float)
    if h.shape != (state.dim, state.dim):
        raise DimensionError(f"operator shape {h.shape} vs state dim {state.dim}")
    a = state.amplitudes
    single = float(np.real(np.vdot(a, h @ a)))
    return abs(state.reference_scale) ** 2 * single
