"""Band-limited real curves stored as truncated Fourier coefficient sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-8
DEFAULT_GRID = 1024


def phase(freqs, shift, T):
    """``exp(-j 2 pi l shift / T)``, the frequency-domain shift operator."""
    return np.exp(-2j * np.pi * np.asarray(freqs) * shift / T)


@dataclass(frozen=True)
class SpectralCurve:
    """Real curve on ``[0, T)`` given by coefficients ``phi_l``, ``|l| <= ell0``.

    ``coefficients[l + ell0]`` is ``phi_l``. Negative frequencies are stored
    explicitly and conjugate symmetry is checked on construction.
    """

    coefficients: np.ndarray
    T: float

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        if c.size % 2 != 1:
            raise ValueError("coefficient sequence must have odd length 2*ell0 + 1")
        scale = max(1.0, float(np.abs(c).max(initial=0.0)))
        if np.abs(c - np.conj(c[::-1])).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise ValueError("coefficients are not conjugate symmetric")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def ell0(self) -> int:
        return (self.coefficients.size - 1) // 2

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(-self.ell0, self.ell0 + 1)

    @classmethod
    def zeros(cls, ell0: int, T: float) -> "SpectralCurve":
        return cls(np.zeros(2 * ell0 + 1, dtype=complex), T)

    @classmethod
    def from_positive(cls, dc: float, positive, T: float) -> "SpectralCurve":
        """Build from the DC term and coefficients for ``l = 1..ell0``."""
        positive = np.asarray(positive, dtype=complex)
        return cls(np.concatenate([np.conj(positive[::-1]), [dc], positive]), T)

    def __call__(self, t) -> np.ndarray:
        """Evaluate the curve at arbitrary times (periodic with period T)."""
        t = np.asarray(t, dtype=float)
        basis = np.exp(2j * np.pi * np.multiply.outer(t, self.freqs) / self.T)
        return (basis @ self.coefficients).real

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "coefficients": [
                {"l": int(l), "re": float(c.real), "im": float(c.imag)}
                for l, c in zip(self.freqs, self.coefficients)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SpectralCurve":
        entries = sorted(doc["coefficients"], key=lambda e: e["l"])
        return cls(np.array([e["re"] + 1j * e["im"] for e in entries]), float(doc["T"]))


def shift_phase(curve: SpectralCurve, v: float) -> SpectralCurve:
    """Coefficients of ``t -> curve(t - v)``."""
    return SpectralCurve(curve.coefficients * phase(curve.freqs, v, curve.T), curve.T)


def synthesize(curve: SpectralCurve, grid_size: int = DEFAULT_GRID) -> np.ndarray:
    """Samples of the curve on ``t_g = g T / grid_size``, ``g = 0..grid_size-1``."""
    if grid_size < 2 * curve.ell0 + 1:
        raise ValueError("grid_size must be at least 2*ell0 + 1")
    c = curve.coefficients
    if np.abs(c - np.conj(c[::-1])).max(initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(c).max()):
        raise ValueError("coefficients are not conjugate symmetric")
    spec = np.zeros(grid_size, dtype=complex)
    spec[curve.freqs % grid_size] = c
    values = np.fft.ifft(spec) * grid_size
    return values.real


def grid(T: float, grid_size: int = DEFAULT_GRID) -> np.ndarray:
    return np.arange(grid_size) * (T / grid_size)


def l2_inner(curve_a: SpectralCurve, curve_b: SpectralCurve) -> float:
    """``int_0^T f_a f_b dt`` via Parseval."""
    if curve_a.ell0 != curve_b.ell0 or curve_a.T != curve_b.T:
        raise ValueError("curves must share ell0 and T")
    return float(curve_a.T * np.real(np.vdot(curve_b.coefficients, curve_a.coefficients)))
