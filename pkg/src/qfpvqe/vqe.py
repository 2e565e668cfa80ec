"""Variational loop: coupled-cluster ansatz, measured-gradient updates, bookkeeping.

The trial state is the (d-1)-parameter single-excitation unitary
coupled-cluster wavefunction

    a_ref = cos(phi),  a_k = -(sin(phi)/phi) * theta_k,  phi = ||theta||,

which sweeps the whole real unit sphere.  Parameter updates use the
gradient contracted from the measured single-particle density matrix (the
anti-Hermitian-generator direction), so one measured rho per iteration
drives both the energy estimate and the step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError
from .measurement import (
    NOISELESS,
    CombState,
    DensityMatrix,
    MeasurementPlan,
    NoiseModel,
    measure_rho,
    plan_measurements,
)

#: Modulation depth of the balanced beamsplitter used for simulated
#: measurements (the higher-fidelity, lower-success design).
DEFAULT_GATE_DEPTH = 0.8283


@dataclass
class HermitianOperator:
    """Real-symmetric operator with an explicit sparsity pattern."""

    matrix: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionError("operator must be a square matrix")
        if not np.array_equal(h, h.T):
            raise DimensionError("operator must be exactly symmetric")
        self.matrix = h

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def offdiagonal_pairs(self, tol: float = 0.0) -> list[tuple[int, int]]:
        """Upper-triangle (k, l) pairs with |h_kl| above tol."""
        h = self.matrix
        return [(k, l) for k in range(self.dim) for l in range(k + 1, self.dim)
                if abs(h[k, l]) > tol]


@dataclass(frozen=True)
class UccState:
    """Variational angles; the reference bin carries the cos(phi) amplitude."""

    theta: np.ndarray
    reference: int = 0

    @property
    def dim(self) -> int:
        return len(self.theta) + 1


def ucc_amplitudes(theta: np.ndarray, reference: int = 0) -> CombState:
    """Closed-form amplitudes of the single-excitation coupled-cluster state.

    The phi -> 0 limit is regular (a_ref = 1, a_k = -theta_k with the
    sin(phi)/phi factor expanded analytically via sinc).
    """
    th = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(th)):
        raise ValueError("angles must be finite")
    d = len(th) + 1
    if not 0 <= reference < d:
        raise DimensionError(f"reference {reference} outside dimension {d}")
    phi = float(np.linalg.norm(th))
    amps = np.empty(d)
    tail = -np.sinc(phi / np.pi) * th
    amps[:reference] = tail[:reference]
    amps[reference] = np.cos(phi)
    amps[reference + 1:] = tail[reference:]
    return CombState(amps)


def acse_gradient(rho: DensityMatrix, operator: HermitianOperator,
                  theta: np.ndarray | None = None,
                  reference: int = 0) -> np.ndarray:
    """Parameter-update direction contracted from the measured rho.

    g_k = 2 sum_m (rho[ref, m] h[m, k] - rho[k, m] h[m, ref]) for k != ref.
    This is the negated expectation of the commutator with the k-th
    single-excitation generator, so rotating the state by the generator sum
    with a small positive step lowers the energy to first order; at
    theta = 0 it reduces to 2 h[ref, k].
    """
    h = operator.matrix
    r = rho.rho
    if r.shape != h.shape:
        raise DimensionError(f"rho shape {r.shape} vs operator {h.shape}")
    full = 2.0 * (r[reference] @ h - h[reference] @ r.T)
    return np.delete(full, reference)


def rotate_by_generators(amplitudes: np.ndarray, delta: np.ndarray,
                         reference: int = 0) -> np.ndarray:
    """Apply exp(sum_k delta_k (|ref><k| - |k><ref|)) to a real state.

    The generator acts in the plane spanned by the reference axis and the
    normalized tail of delta, so the exponential is a plane rotation with
    angle |delta| (evaluated in closed form).
    """
    a = np.asarray(amplitudes, dtype=float)
    angle = float(np.linalg.norm(delta))
    if angle == 0.0:
        return a.copy()
    u = np.zeros_like(a)
    u[reference] = 1.0
    v = np.zeros_like(a)
    v[np.arange(len(a)) != reference] = delta / angle
    cu = float(u @ a)
    cv = float(v @ a)
    c, s = np.cos(angle), np.sin(angle)
    return a + (c - 1.0) * (cu * u + cv * v) + s * (cv * u - cu * v)


def ucc_parameters(amplitudes: np.ndarray, reference: int = 0) -> np.ndarray:
    """Invert the coupled-cluster closed form: unit state -> angles.

    phi = arccos(a_ref) and theta = -tail * phi / sin(phi); at the antipode
    (a_ref = -1) the direction is degenerate and the first tail axis is used.
    """
    a = np.asarray(amplitudes, dtype=float)
    c = float(np.clip(a[reference], -1.0, 1.0))
    phi = float(np.arccos(c))
    tail = np.delete(a, reference)
    s = np.sin(phi)
    if s < 1e-12:
        if c > 0:
            return -tail  # phi ~ 0, sinc -> 1
        theta = np.zeros_like(tail)
        theta[0] = phi  # antipode: any great circle works
        return theta
    return -tail * (phi / s)


def energy_from_rho(rho: DensityMatrix, operator: HermitianOperator) -> float:
    """tr(rho H) using the full symmetric matrices."""
    return float(np.sum(rho.rho * operator.matrix))


@dataclass
class EnergyRecord:
    """Measured energy with trailing-window statistical and systematic spread."""

    value: float
    stat_sigma: float = 0.0
    sys_sigma: float = 0.0

    def sigma(self) -> float:
        return float(np.hypot(self.stat_sigma, self.sys_sigma))

    def __repr__(self):
        return f"EnergyRecord({self.value:.6g} +- {self.stat_sigma:.2g} stat +- {self.sys_sigma:.2g} sys)"


def combine_difference(*terms: tuple[float, "EnergyRecord"]) -> EnergyRecord:
    """Linear combination sum(c * record) with independent-quadrature sigmas.

    Repeated use of one record should be expressed through its coefficient
    so the fully correlated error is propagated linearly for that term.
    """
    value = sum(c * r.value for c, r in terms)
    stat = np.sqrt(sum((c * r.stat_sigma) ** 2 for c, r in terms))
    sys = np.sqrt(sum((c * r.sys_sigma) ** 2 for c, r in terms))
    return EnergyRecord(value=float(value), stat_sigma=float(stat), sys_sigma=float(sys))


@dataclass
class VqeIteration:
    index: int
    theta: np.ndarray
    energy: float
    rho_pairs: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass
class VqeRun:
    iterations: list[VqeIteration]
    step_size: float
    max_iter: int
    converged: bool
    record: EnergyRecord
    reference: int
    plan: MeasurementPlan

    @property
    def energies(self) -> np.ndarray:
        return np.array([it.energy for it in self.iterations])

    @property
    def final_theta(self) -> np.ndarray:
        return self.iterations[-1].theta


def exact_ground(operator: HermitianOperator | np.ndarray) -> tuple[float, np.ndarray]:
    """Lowest eigenpair; eigenvector sign fixed by first nonzero component > 0."""
    h = operator.matrix if isinstance(operator, HermitianOperator) else np.asarray(operator, float)
    w, v = np.linalg.eigh(h)
    vec = v[:, 0]
    for x in vec:
        if abs(x) > 1e-12:
            if x < 0:
                vec = -vec
            break
    return float(w[0]), vec


@dataclass(frozen=True)
class VqeConfig:
    step_size: float | None = None  # None -> Gershgorin-scaled default
    max_iter: int = 50
    trailing_window: int = 10
    gate_depth: float | None = DEFAULT_GATE_DEPTH
    max_parallel: int = 5
    convergence_rtol: float = 1e-8
    convergence_runs: int = 3
    min_step_factor: float = 1e-6


def _default_step(h: np.ndarray) -> float:
    radius = float(np.max(np.sum(np.abs(h), axis=1)))
    return 1.0 / radius if radius > 0 else 1.0


def vqe_minimize(operator: HermitianOperator, noise: NoiseModel = NOISELESS,
                 config: VqeConfig = VqeConfig()) -> VqeRun:
    """Gradient-descent VQE over simulated frequency-bin measurements.

    Per iteration the density matrix is reconstructed on the operator's
    sparsity pattern (plus the reference row needed by the gradient), the
    energy recorded, and theta stepped along the measured gradient with
    backtracking halving whenever a trial step raises the energy.  The
    systematic scale error is drawn once per run; the reported record
    carries trailing-window statistics and |E| * systematic_fraction.
    """
    h = operator.matrix
    d = operator.dim
    rng = noise.generator()
    scale = 1.0 + (rng.uniform(-noise.systematic_fraction, noise.systematic_fraction)
                   if noise.systematic_fraction > 0 else 0.0)

    reference = int(np.argmin(np.diag(h)))
    if d == 1:
        rec = EnergyRecord(value=h[0, 0] * scale, stat_sigma=0.0,
                           sys_sigma=abs(h[0, 0]) * noise.systematic_fraction)
        it = VqeIteration(0, np.zeros(0), rec.value, {})
        return VqeRun([it], 0.0, config.max_iter, True, rec, 0, MeasurementPlan())

    # energy needs rho on the operator's sparsity pattern; the gradient
    # contraction additionally needs the reference row and every column
    # paired with a neighbor of the reference
    needed = set(operator.offdiagonal_pairs())
    ref_neighbors = [m for m in range(d)
                     if m != reference and h[reference, m] != 0.0]
    for k in range(d):
        if k != reference:
            needed.add((min(k, reference), max(k, reference)))
        for m in ref_neighbors:
            if k != m:
                needed.add((min(k, m), max(k, m)))
    plan = plan_measurements(sorted(needed), max_parallel=config.max_parallel)

    step0 = config.step_size if config.step_size is not None else _default_step(h)

    def evaluate(amps):
        rho = measure_rho(CombState(amps), plan, config.gate_depth, noise, rng=rng)
        energy = energy_from_rho(rho, operator) * scale
        if not np.isfinite(energy):
            raise DivergenceError("energy evaluation produced a non-finite value; "
                                  "reduce the step size")
        return rho, energy

    amps = ucc_amplitudes(np.zeros(d - 1), reference).amplitudes
    rho, energy = evaluate(amps)
    iterations = [VqeIteration(0, ucc_parameters(amps, reference), energy,
                               {p: rho.rho[p] for p in sorted(plan.pairs())})]
    stall = 0
    converged = False
    for it in range(1, config.max_iter + 1):
        grad = acse_gradient(rho, operator, reference=reference)
        step = step0
        while True:
            trial = rotate_by_generators(amps, step * grad, reference)
            rho_t, energy_t = evaluate(trial)
            if energy_t <= energy or step < step0 * config.min_step_factor:
                break
            step /= 2.0
        prev = energy
        amps, rho, energy = trial, rho_t, energy_t
        iterations.append(VqeIteration(it, ucc_parameters(amps, reference), energy,
                                       {p: rho.rho[p] for p in sorted(plan.pairs())}))
        denom = max(abs(energy), 1e-30)
        stall = stall + 1 if abs(energy - prev) / denom < config.convergence_rtol else 0
        if stall >= config.convergence_runs:
            converged = True
            break

    window = min(config.trailing_window, len(iterations))
    tail = np.array([x.energy for x in iterations[-window:]])
    value = float(tail.mean())
    record = EnergyRecord(value=value,
                          stat_sigma=float(tail.std(ddof=1)) if window > 1 else 0.0,
                          sys_sigma=abs(value) * noise.systematic_fraction)
    return VqeRun(iterations, step0, config.max_iter, converged, record, reference, plan)


def write_transcript(run: VqeRun, path) -> None:
    """One JSON record per iteration; full-precision floats, reproducible."""
    with open(path, "w") as fh:
        for it in run.iterations:
            rec = {
                "iteration": it.index,
                "theta": [float(x) for x in it.theta],
                "energy": it.energy,
                "rho": {f"{k},{l}": v for (k, l), v in it.rho_pairs.items()},
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_transcript(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
