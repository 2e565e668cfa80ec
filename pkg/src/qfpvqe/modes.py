"""Frequency-bin mode transforms: phase modulators, pulse shapers, gate metrics.

A processor state lives on a window of discrete frequency bins.  An
electro-optic phase modulator (EOM) driven sinusoidally couples bin n to
bin m with a Bessel-function weight; a pulse shaper applies an independent
complex coefficient per bin.  All physics is index-based; the absolute bin
spacing is carried only as metadata.

Sideband phase convention used throughout (single place, see eom_transform):

    V[m, n] = J_{m-n}(theta) * exp(i (m-n) (phi + pi/2))

Only squared magnitudes of matrix elements are ever compared against
measured splitting ratios, which makes the results independent of this
choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

from .errors import DimensionError, InvalidMaskError, TruncationWindowError

#: Balanced-beamsplitter target used for gate fidelity, in the calibrated
#: (all-real) phase frame.
HADAMARD_IDEAL = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)

#: Default number of guard sidebands kept on each side of the computational
#: pair.  Truncation error at theta ~ 0.83 is far below 1e-6 at this width.
DEFAULT_GUARD = 32


@dataclass(frozen=True)
class ModeWindow:
    """Inclusive bin-index range [n_lo, n_hi] kept in the simulation."""

    n_lo: int
    n_hi: int
    spacing: float = 1.0  # informational, angular-frequency units

    def __post_init__(self):
        if self.n_lo >= self.n_hi:
            raise DimensionError(f"window [{self.n_lo}, {self.n_hi}] is empty")

    @property
    def size(self) -> int:
        return self.n_hi - self.n_lo + 1

    def bins(self) -> np.ndarray:
        return np.arange(self.n_lo, self.n_hi + 1)

    def index(self, n: int) -> int:
        if not self.n_lo <= n <= self.n_hi:
            raise DimensionError(f"bin {n} outside window [{self.n_lo}, {self.n_hi}]")
        return n - self.n_lo


@dataclass(frozen=True)
class EomDrive:
    """Single-tone sinusoidal phase-modulator drive.

    depth is the modulation index (radians); phase the drive phase offset;
    harmonic the drive frequency in units of the bin spacing.
    """

    depth: float
    phase: float = 0.0
    harmonic: int = 1

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("modulation depth must be nonnegative")
        if self.harmonic < 1:
            raise ValueError("harmonic must be a positive integer")


@dataclass
class ShaperMask:
    """Per-bin complex coefficients with |c| <= 1 (default 1 everywhere)."""

    coefficients: dict[int, complex] = field(default_factory=dict)

    def coefficient(self, n: int) -> complex:
        return self.coefficients.get(n, 1.0 + 0.0j)

    def validate(self):
        for n, c in self.coefficients.items():
            if abs(c) > 1.0 + 1e-12:
                raise InvalidMaskError(f"mask amplitude {abs(c):.6f} > 1 at bin {n}")

    @classmethod
    def pi_step(cls, first_negative_bin: int, window: ModeWindow) -> "ShaperMask":
        """Step mask: +1 below first_negative_bin, -1 at and above it."""
        coeff = {int(n): (-1.0 + 0.0j if n >= first_negative_bin else 1.0 + 0.0j)
                 for n in window.bins()}
        return cls(coeff)


@dataclass
class ModeTransform:
    """Window-restricted linear bin-to-bin transform (sub-unitary allowed)."""

    window: ModeWindow
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.window.size, self.window.size):
            raise DimensionError(
                f"matrix shape {m.shape} does not match window size {self.window.size}")
        self.matrix = m

    def block(self, bins: tuple[int, ...]) -> np.ndarray:
        idx = [self.window.index(n) for n in bins]
        return self.matrix[np.ix_(idx, idx)]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=0)


@dataclass(frozen=True)
class GateMetrics:
    """Figures of merit for one frequency-beamsplitter pair."""

    fidelity: float
    success_probability: float
    reflectivity: float
    transmissivity: float
    leakage: float


def eom_transform(drive: EomDrive, window: ModeWindow) -> ModeTransform:
    """Mode transform of a sinusoidally driven phase modulator.

    Temporal phase modulation exp(i theta sin(h w t + phi)) couples bins
    separated by multiples of the drive harmonic with Bessel weights
    (Jacobi-Anger expansion); the matrix is unitary on an infinite window
    and sub-unitary once restricted.
    """
    n = window.bins()
    diff = n[:, None] - n[None, :]
    order = diff / drive.harmonic
    on_grid = (diff % drive.harmonic) == 0
    mat = np.where(
        on_grid,
        jv(np.where(on_grid, order, 0), drive.depth)
        * np.exp(1j * order * (drive.phase + np.pi / 2.0)),
        0.0,
    )
    return ModeTransform(window, mat)


def shaper_transform(mask: ShaperMask, window: ModeWindow) -> ModeTransform:
    """Diagonal transform of a Fourier-transform pulse shaper."""
    mask.validate()
    diag = np.array([mask.coefficient(int(n)) for n in window.bins()], dtype=complex)
    return ModeTransform(window, np.diag(diag))


def compose(sequence: list[ModeTransform]) -> ModeTransform:
    """Matrix product of a transform cascade; rightmost element acts first."""
    if not sequence:
        raise DimensionError("cannot compose an empty sequence")
    window = sequence[0].window
    for t in sequence:
        if (t.window.n_lo, t.window.n_hi) != (window.n_lo, window.n_hi):
            raise DimensionError("mismatched windows in composition")
    out = sequence[0].matrix
    for t in sequence[1:]:
        out = out @ t.matrix
    return ModeTransform(window, out)


def hadamard_transform(depth: float, window: ModeWindow,
                       pair: tuple[int, int]) -> ModeTransform:
    """EOM - pi-step shaper - EOM beamsplitter acting on a bin pair.

    The two modulators run with pi-shifted drive phases and equal depth; the
    shaper places the pi phase jump between the two computational bins.
    """
    k, l = min(pair), max(pair)
    first = eom_transform(EomDrive(depth, 0.0), window)
    step = shaper_transform(ShaperMask.pi_step(l, window), window)
    second = eom_transform(EomDrive(depth, np.pi), window)
    return compose([second, step, first])


def calibrated_pair_block(transform: ModeTransform,
                          pair: tuple[int, int]) -> np.ndarray:
    """2x2 computational block in the in-phase reference frame.

    Mirrors the experimental spectral-phase calibration: per-bin input and
    output phases are absorbed so the block becomes real with nonnegative
    diagonal/transmission entries; splitting magnitudes are unchanged.
    """
    k, l = min(pair), max(pair)
    blk = transform.block((k, l)).copy()
    if abs(blk[1, 0]) > 0:
        blk = np.diag([1.0, np.exp(-1j * np.angle(blk[1, 0]))]) @ blk
    if abs(blk[0, 1]) > 0:
        blk = blk @ np.diag([1.0, np.exp(-1j * np.angle(blk[0, 1]))])
    if abs(blk[0, 0]) > 0:
        blk = blk * np.exp(-1j * np.angle(blk[0, 0]))
    return blk


def hadamard_metrics(depth: float, window: ModeWindow,
                     pair: tuple[int, int]) -> GateMetrics:
    """Metrics of the EOM-shaper-EOM beamsplitter on the given pair.

    With W the calibrated 2x2 block: T = |W_kk|^2, R = |W_lk|^2,
    P = tr(W^dag W)/2, leakage = 1 - P, and the fidelity compares W with
    the balanced beamsplitter, F = |tr(W^dag H)|^2 / (2 tr(W^dag W)).
    """
    k, l = min(pair), max(pair)
    if k - window.n_lo < 2 or window.n_hi - l < 2:
        raise TruncationWindowError(
            f"pair {pair} needs >= 2 guard bins inside window "
            f"[{window.n_lo}, {window.n_hi}]")
    blk = calibrated_pair_block(hadamard_transform(depth, window, pair), (k, l))
    transmissivity = float(abs(blk[0, 0]) ** 2)
    reflectivity = float(abs(blk[1, 0]) ** 2)
    gram = float(np.trace(blk.conj().T @ blk).real)
    success = gram / 2.0
    if gram > 0:
        fidelity = float(abs(np.trace(blk.conj().T @ HADAMARD_IDEAL)) ** 2 / (2.0 * gram))
    else:
        fidelity = 0.0
    return GateMetrics(
        fidelity=fidelity,
        success_probability=success,
        reflectivity=reflectivity,
        transmissivity=transmissivity,
        leakage=max(0.0, 1.0 - success),
    )


def hadamard_window(pair: tuple[int, int], guard: int = DEFAULT_GUARD) -> ModeWindow:
    """Window holding the pair plus guard sidebands on each side."""
    return ModeWindow(min(pair) - guard, max(pair) + guard)
