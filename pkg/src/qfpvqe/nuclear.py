"""Nuclear-problem ingestion, contact-EFT scattering, model-space extrapolation.

Matrices for the few-nucleon ground-state problems are produced once by
external structure machinery and enter this package purely as files; the
contract starts at ingestion (format check, symmetry enforcement, metadata).

The two-nucleon interaction is a rank-2 separable contact potential in each
S-wave channel, V(p', p) = C_t + C (p'^2 + p^2) with a sharp relative-momentum
cutoff.  The scattering solution is the closed-form separable T-matrix; its
one free overall normalization (integration-measure convention) is calibrated
so the triplet channel binds at the physical two-nucleon energy, and is then
frozen for every other observable.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, least_squares

from .errors import ExtrapolationInvalidError, IngestError, OutOfRangeError
from .vqe import EnergyRecord, HermitianOperator

HBARC = 197.3269804  # MeV fm
M_NUCLEON = 938.91875434  # MeV, isospin-averaged
DEUTERON_ENERGY = -2.2246  # MeV, two-nucleon binding used for calibration


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

@dataclass
class NuclearProblem:
    label: str
    n_max: int
    extent_fm: float
    hbar_omega: float
    operator: HermitianOperator
    units: str = "MeV"

    @property
    def dim(self) -> int:
        return self.operator.dim


def _read_dense(lines) -> np.ndarray:
    header = lines[0].split()
    if len(header) != 2 or header[0] != "dense":
        raise IngestError("dense header must be 'dense d'")
    d = int(header[1])
    rows = []
    for line in lines[1:]:
        if line.strip() and not line.startswith("#"):
            rows.append([float(x) for x in line.split()])
    if len(rows) != d or any(len(r) != d for r in rows):
        raise IngestError(f"dense matrix body does not match dimension {d}")
    return np.array(rows)


def _read_sparse(lines) -> np.ndarray:
    header = lines[0].split()
    if len(header) != 2:
        raise IngestError("sparse header must be 'dim nnz'")
    d, nnz = int(header[0]), int(header[1])
    h = np.zeros((d, d))
    count = 0
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        r, c, v = line.split()
        r, c = int(r), int(c)
        if r > c:
            raise IngestError("sparse entries must satisfy row <= col")
        h[r, c] = h[c, r] = float(v)
        count += 1
    if count != nnz:
        raise IngestError(f"expected {nnz} entries, found {count}")
    return h


def load_problem(matrix_path, metadata_path=None, expected_sha256: str | None = None,
                 symmetry_tol: float = 1e-10) -> NuclearProblem:
    """Read a Hamiltonian matrix file plus its metadata sidecar.

    Accepts the dense format ('dense d' header) or the shared sparse format
    ('dim nnz' header).  Asymmetry within tolerance is symmetrized with a
    warning; beyond tolerance it is an ingestion error.
    """
    matrix_path = Path(matrix_path)
    raw = matrix_path.read_bytes()
    if expected_sha256 is not None:
        digest = hashlib.sha256(raw).hexdigest()
        if digest != expected_sha256:
            raise IngestError(f"checksum mismatch for {matrix_path.name}: {digest}")
    lines = raw.decode().splitlines()
    if not lines:
        raise IngestError(f"{matrix_path} is empty")
    try:
        if lines[0].startswith("dense"):
            h = _read_dense(lines)
        else:
            h = _read_sparse(lines)
    except (ValueError, IndexError) as exc:
        raise IngestError(f"malformed matrix file {matrix_path}: {exc}") from exc

    asym = float(np.abs(h - h.T).max())
    scale = max(float(np.abs(h).max()), 1.0)
    if asym > symmetry_tol * scale:
        raise IngestError(f"matrix asymmetry {asym:.3e} beyond tolerance")
    if asym > 0:
        warnings.warn(f"symmetrizing {matrix_path.name} (asymmetry {asym:.3e})")
        h = 0.5 * (h + h.T)

    if metadata_path is None:
        metadata_path = matrix_path.with_suffix(".json")
    metadata_path = Path(metadata_path)
    if not metadata_path.exists():
        raise IngestError(f"metadata sidecar {metadata_path} not found")
    meta = json.loads(metadata_path.read_text())
    for key in ("nucleus", "N_max", "L_fm", "hbar_omega"):
        if key not in meta:
            raise IngestError(f"metadata missing field {key!r}")
    return NuclearProblem(
        label=str(meta["nucleus"]),
        n_max=int(meta["N_max"]),
        extent_fm=float(meta["L_fm"]),
        hbar_omega=float(meta["hbar_omega"]),
        operator=HermitianOperator(h),
        units=str(meta.get("units", "MeV")),
    )


def write_dense(matrix: np.ndarray, path) -> None:
    h = np.asarray(matrix, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"dense {h.shape[0]}\n")
        for row in h:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# two-nucleon scattering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelCouplings:
    """Contact couplings of one S-wave channel (MeV-based units)."""

    c_tilde: float  # MeV^-2
    c_momentum: float  # MeV^-4
    channel: str = "1S0"
    cutoff: float = 337.0  # MeV
    hbar_omega: float = 22.0  # MeV (informational)
    c_three_body: float = 0.01929  # dimensionless, three-body strength (informational)


SINGLET = ChannelCouplings(c_tilde=-0.7617, c_momentum=2.9098, channel="1S0")
TRIPLET = ChannelCouplings(c_tilde=-1.2014, c_momentum=3.3984, channel="3S1")


def _principal_moment(power: int, energy: float, cutoff: float, mu: float) -> float:
    """P.V. of integral_0^cutoff dq q^power / (energy - q^2 / (2 mu))."""

    def plain(q):
        return q ** power / (energy - q * q / (2.0 * mu))

    if energy <= 0:
        value, _ = quad(plain, 0.0, cutoff, limit=200)
        return value
    q0 = np.sqrt(2.0 * mu * energy)
    if q0 >= cutoff:
        raise OutOfRangeError("on-shell momentum at or beyond the cutoff")

    def regular(q):
        # (-2 mu) q^power / (q^2 - q0^2) with the pole term subtracted
        f0 = q0 ** power / (2.0 * q0)
        if q == q0:
            deriv = q0 ** (power - 2) * (2.0 * power - 1.0) / 4.0
            return -2.0 * mu * deriv
        f = q ** power / (q + q0)
        return -2.0 * mu * (f - f0) / (q - q0)

    value, _ = quad(regular, 0.0, cutoff, limit=200, points=[q0])
    f0 = q0 ** power / (2.0 * q0)
    value += -2.0 * mu * f0 * np.log((cutoff - q0) / q0)
    return value


def _moment_matrix(energy: float, cutoff: float, mu: float) -> np.ndarray:
    s00 = _principal_moment(2, energy, cutoff, mu)
    s01 = _principal_moment(4, energy, cutoff, mu)
    s11 = _principal_moment(6, energy, cutoff, mu)
    return np.array([[s00, s01], [s01, s11]])


def _coupling_matrix(c: ChannelCouplings) -> np.ndarray:
    return np.array([[c.c_tilde, c.c_momentum], [c.c_momentum, 0.0]])


def _det_inverse_propagator(c: ChannelCouplings, energy: float, zeta: float,
                            mu: float) -> float:
    a = _coupling_matrix(c) @ _moment_matrix(energy, c.cutoff, mu)
    return float(np.linalg.det(np.eye(2) - zeta * a))


def calibrate_normalization(couplings: ChannelCouplings = TRIPLET,
                            binding: float = DEUTERON_ENERGY,
                            mu: float = M_NUCLEON / 2.0) -> float:
    """Solve the one free measure normalization from the bound-state condition.

    det(1 - zeta * lambda Sigma(-B)) is quadratic in zeta; the smaller
    positive root is the physical (weak-measure) branch and is used for all
    channels thereafter.
    """
    a = _coupling_matrix(couplings) @ _moment_matrix(binding, couplings.cutoff, mu)
    tr = float(np.trace(a))
    det = float(np.linalg.det(a))
    if abs(det) < 1e-30:
        if abs(tr) < 1e-30:
            raise ValueError("degenerate calibration condition")
        roots = [1.0 / tr]
    else:
        disc = tr * tr - 4.0 * det
        if disc < 0:
            raise ValueError("no real normalization satisfies the binding condition")
        roots = [(tr - np.sqrt(disc)) / (2.0 * det), (tr + np.sqrt(disc)) / (2.0 * det)]
    positive = sorted(r for r in roots if r > 0)
    if not positive:
        raise ValueError("no positive normalization root")
    return float(positive[0])


_NORMALIZATION_CACHE: dict[tuple, float] = {}


def measure_normalization() -> float:
    """Calibrated integration-measure normalization (computed once, frozen)."""
    key = (TRIPLET.c_tilde, TRIPLET.c_momentum, TRIPLET.cutoff)
    if key not in _NORMALIZATION_CACHE:
        _NORMALIZATION_CACHE[key] = calibrate_normalization()
    return _NORMALIZATION_CACHE[key]


def bound_state_poles(couplings: ChannelCouplings, zeta: float | None = None,
                      search: tuple[float, float] = (-60.0, -1e-3),
                      mu: float = M_NUCLEON / 2.0) -> list[float]:
    """Real below-threshold zeros of the inverse propagator determinant."""
    if zeta is None:
        zeta = measure_normalization()
    grid = np.linspace(search[0], search[1], 400)
    vals = [_det_inverse_propagator(couplings, e, zeta, mu) for e in grid]
    poles = []
    for i in range(len(grid) - 1):
        if vals[i] * vals[i + 1] < 0:
            poles.append(float(brentq(
                lambda e: _det_inverse_propagator(couplings, e, zeta, mu),
                grid[i], grid[i + 1], xtol=1e-10)))
    return poles


def _on_shell_t(couplings: ChannelCouplings, p: float, zeta: float,
                mu: float) -> complex:
    energy = p * p / (2.0 * mu)
    lam = _coupling_matrix(couplings)
    g = np.array([1.0, p * p])
    # principal-value moments plus the on-shell residue -i pi mu p g_i g_j
    sig = _moment_matrix(energy, couplings.cutoff, mu).astype(complex) \
        - 1j * np.pi * (mu * p) * np.outer(g, g)
    tau = np.linalg.inv(np.eye(2) - zeta * lam @ sig) @ lam
    return complex(g @ tau @ g)


def nn_phase_shift(couplings: ChannelCouplings, momenta,
                   zeta: float | None = None) -> np.ndarray:
    """S-wave phase shift (degrees) at relative momentum p < cutoff.

    Uses the separable T-matrix with the calibrated measure; the branch is
    continuous from threshold and starts at 180 degrees per bound state
    (Levinson counting).
    """
    if zeta is None:
        zeta = measure_normalization()
    mu = M_NUCLEON / 2.0
    p_arr = np.atleast_1d(np.asarray(momenta, dtype=float))
    if np.any(p_arr <= 0) or np.any(p_arr >= couplings.cutoff):
        raise OutOfRangeError("momenta must satisfy 0 < p < cutoff")
    n_bound = len(bound_state_poles(couplings, zeta))

    # evaluate on a threshold-anchored grid so the branch can be unwrapped
    grid = np.unique(np.concatenate([
        np.linspace(1.0, float(couplings.cutoff) * 0.999, 160), p_arr]))
    raw = np.empty(len(grid))
    for i, p in enumerate(grid):
        t = _on_shell_t(couplings, float(p), zeta, mu)
        s_matrix = 1.0 - 2j * np.pi * (mu * p) * zeta * t
        raw[i] = 0.5 * np.angle(s_matrix)
    unwrapped = np.unwrap(2.0 * raw) / 2.0
    # anchor the branch so delta(0+) = n_bound * pi (Levinson counting)
    shift = n_bound * np.pi - np.round(unwrapped[0] / np.pi) * np.pi
    unwrapped = unwrapped + shift
    out = np.degrees(np.interp(p_arr, grid, unwrapped))
    return out if np.ndim(momenta) else float(out[0])


def s_matrix_modulus(couplings: ChannelCouplings, p: float,
                     zeta: float | None = None) -> float:
    """|S| at one momentum; unitarity check helper."""
    if zeta is None:
        zeta = measure_normalization()
    mu = M_NUCLEON / 2.0
    t = _on_shell_t(couplings, p, zeta, mu)
    return float(abs(1.0 - 2j * np.pi * (mu * p) * zeta * t))


# ---------------------------------------------------------------------------
# infinite-model-space extrapolation
# ---------------------------------------------------------------------------

@dataclass
class ExtrapolationFit:
    e_infinity: float
    amplitude: float
    k_infinity: float  # fm^-1
    sigma: float
    band: list[tuple[float, float, float]]  # (L, lower, upper) envelope
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def record(self) -> EnergyRecord:
        return EnergyRecord(self.e_infinity, stat_sigma=0.0, sys_sigma=self.sigma)


AMPLITUDE_LIMIT = 1000.0  # MeV; fits are constrained to |a| below 1 GeV


def _k_infinity(e_inf: float, e_ref: float, mass: float) -> float:
    gap = e_ref - e_inf
    if gap <= 0:
        raise ExtrapolationInvalidError(
            f"extrapolated energy {e_inf} not below the breakup reference {e_ref}")
    return float(np.sqrt(2.0 * mass * gap) / HBARC)


def _fit_once(Ls, energies, weights, e_ref, mass):
    def resid(x):
        e_inf, amp = x
        gap = max(e_ref - e_inf, 1e-9)
        k = np.sqrt(2.0 * mass * gap) / HBARC
        r = e_inf + amp * np.exp(-2.0 * k * Ls) - energies
        return r / weights

    lo_e = float(min(energies.min(), e_ref) - 40.0)
    out = least_squares(resid, x0=[float(energies.min()) - 0.2, 30.0],
                        bounds=([lo_e, 0.0], [e_ref - 1e-9, AMPLITUDE_LIMIT]),
                        x_scale=[1.0, 30.0])
    return float(out.x[0]), float(out.x[1])


def extrapolate(points, e_ref: float, mass: float = M_NUCLEON,
                reduced: bool = True, mass_number: int | None = None,
                n_replicas: int = 10_000, seed: int = 0,
                band_ls: np.ndarray | None = None) -> ExtrapolationFit:
    """Fit E(L) = E_inf + a exp(-2 k_inf L) with k_inf tied to the separation.

    points: iterable of (L_fm, EnergyRecord); the record's systematic spread
    defines the uniform sampling band of the Monte Carlo (statistical spread,
    when present, is sampled normally).  k_inf is eliminated through the
    separation energy E_inf - e_ref using the reduced mass of the one-nucleon
    breakup when reduced=True (requires mass_number).
    """
    pts = sorted(points, key=lambda t: t[0])
    if len(pts) < 3:
        raise ExtrapolationInvalidError("need at least three model-space points")
    Ls = np.array([p[0] for p in pts])
    recs = [p[1] for p in pts]
    energies = np.array([r.value for r in recs])
    if reduced:
        if mass_number is None:
            raise ValueError("reduced-mass momentum needs the mass number")
        mu = mass * (mass_number - 1) / mass_number
    else:
        mu = mass
    weights = np.array([max(r.sigma(), 1e-12) for r in recs])

    e_central, a_central = _fit_once(Ls, energies, weights, e_ref, mu)
    rng = np.random.default_rng(seed)
    samples = np.empty((n_replicas, 2))
    for i in range(n_replicas):
        draw = energies.copy()
        for j, rec in enumerate(recs):
            if rec.sys_sigma > 0:
                draw[j] += rng.uniform(-rec.sys_sigma, rec.sys_sigma)
            if rec.stat_sigma > 0:
                draw[j] += rng.normal(0.0, rec.stat_sigma)
        samples[i] = _fit_once(Ls, draw, weights, e_ref, mu)
    sigma = float(samples[:, 0].std())

    if band_ls is None:
        band_ls = np.linspace(float(Ls[0]) * 0.9, float(Ls[-1]) * 1.6, 25)
    band = []
    for L in band_ls:
        curve = samples[:, 0] + samples[:, 1] * np.exp(
            -2.0 * np.sqrt(2.0 * mu * np.maximum(e_ref - samples[:, 0], 1e-9))
            / HBARC * L)
        lo, hi = np.percentile(curve, [16.0, 84.0])
        band.append((float(L), float(lo), float(hi)))

    return ExtrapolationFit(
        e_infinity=e_central,
        amplitude=a_central,
        k_infinity=_k_infinity(e_central, e_ref, mu),
        sigma=sigma,
        band=band,
        samples=samples,
    )
