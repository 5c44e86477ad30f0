import math
from typing import Annotated, Any, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator
from scipy.signal import hilbert

from src.config.simulation_config import ACOUSTIC_DEFAULTS, HERMITIAN_RTOL
from src.models.types import FloatArray
from src.utils.validators import is_power_of_two, readonly


def _complex_array(value: Any) -> np.ndarray:
    return readonly(np.array(value, dtype=complex))


ComplexArray = Annotated[np.ndarray, BeforeValidator(_complex_array)]


class AcousticConfig(BaseModel):
    """Band, sampling and propagation constants of the echo simulator."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    f_lo: float = Field(ACOUSTIC_DEFAULTS["f_lo"], gt=0, description="Band lower edge (Hz)")
    f_hi: float = Field(ACOUSTIC_DEFAULTS["f_hi"], gt=0, description="Band upper edge (Hz)")
    speed_of_sound: float = Field(ACOUSTIC_DEFAULTS["speed_of_sound"], gt=0, description="v (m/s)")
    sample_rate: float = Field(ACOUSTIC_DEFAULTS["sample_rate"], gt=0, description="fs (Hz)")
    n_samples: int = Field(ACOUSTIC_DEFAULTS["n_samples"], description="Signal length n")
    sonar_amplitude: float = Field(ACOUSTIC_DEFAULTS["sonar_amplitude"], gt=0, description="A1")

    @model_validator(mode="after")
    def validate_band(self) -> "AcousticConfig":
        if not 0 < self.f_lo < self.f_hi < self.sample_rate / 2:
            raise ValueError(
                f"band must satisfy 0 < f_lo < f_hi < fs/2, got "
                f"[{self.f_lo}, {self.f_hi}] with fs = {self.sample_rate}"
            )
        if not is_power_of_two(self.n_samples):
            raise ValueError(f"n_samples must be a power of two, got {self.n_samples}")
        return self

    @property
    def frequency_step(self) -> float:
        return self.sample_rate / self.n_samples

    def band_indices(self) -> np.ndarray:
        """Positive-frequency bins with f_lo <= f_k <= f_hi (inclusive)."""
        k = np.arange(self.n_samples // 2 + 1)
        f = k * self.frequency_step
        return k[(f >= self.f_lo) & (f <= self.f_hi)]

    def band_frequencies(self) -> np.ndarray:
        return self.band_indices() * self.frequency_step

    @property
    def window_seconds(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def max_range(self) -> float:
        """Largest range whose round trip fits inside the signal window."""
        return self.speed_of_sound * self.window_seconds / 2


class SonarBeampatternParams(BaseModel):
    """Two-variable Gaussian main lobe over (az, el)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    a: float = Field(..., gt=0, description="rad^-2")
    b: float = Field(0.0, description="rad^-2")
    c: float = Field(..., gt=0, description="rad^-2")
    x0: float = Field(0.0, description="Lobe centre azimuth (rad)")
    y0: float = Field(0.0, description="Lobe centre elevation (rad)")
    amplitude: float = Field(1.0, gt=0, description="A1")

    @model_validator(mode="after")
    def validate_positive_definite(self) -> "SonarBeampatternParams":
        if self.a * self.c - self.b**2 <= 0:
            raise ValueError("quadratic form must be positive-definite (ac - b^2 > 0)")
        return self

    @classmethod
    def from_beamwidth(cls, beamwidth_deg: float, amplitude: float = 1.0) -> "SonarBeampatternParams":
        """Circular lobe with half power at beamwidth/2 off boresight."""
        if not 0 < beamwidth_deg < 180:
            raise ValueError(f"beamwidth must be in (0, 180) degrees, got {beamwidth_deg}")
        bw = math.radians(beamwidth_deg)
        coeff = 4.0 * math.log(2.0) / bw**2
        return cls(a=coeff, b=0.0, c=coeff, amplitude=amplitude)


class LeafBeampatternParams(BaseModel):
    """Cosine leaf lobe; A and B may be tabulated as functions of c = 2*pi*a*f/v."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    amplitude: float = Field(1.0, gt=0, description="A when no table is given")
    lobe_scale: float = Field(1.0, gt=0, description="B when no table is given")
    amplitude_table: Optional[List[Tuple[float, float]]] = Field(
        None, description="(c, A) pairs, linearly interpolated"
    )
    lobe_table: Optional[List[Tuple[float, float]]] = Field(
        None, description="(c, B) pairs, linearly interpolated"
    )

    @model_validator(mode="after")
    def validate_tables(self) -> "LeafBeampatternParams":
        for name in ("amplitude_table", "lobe_table"):
            table = getattr(self, name)
            if table is None:
                continue
            if len(table) < 2:
                raise ValueError(f"{name} needs at least two (c, value) pairs")
            cs = [c for c, _ in table]
            if any(b <= a for a, b in zip(cs, cs[1:])):
                raise ValueError(f"{name} c values must be strictly increasing")
            if any(value <= 0 for _, value in table):
                raise ValueError(f"{name} values must be positive")
        return self

    @staticmethod
    def _lookup(table: List[Tuple[float, float]], c: np.ndarray) -> np.ndarray:
        xs, ys = zip(*table)
        return np.interp(c, xs, ys)

    def amplitude_at(self, c: float | np.ndarray) -> np.ndarray:
        if self.amplitude_table is None:
            return np.full_like(np.asarray(c, dtype=float), self.amplitude)
        return self._lookup(self.amplitude_table, np.asarray(c, dtype=float))

    def lobe_scale_at(self, c: float | np.ndarray) -> np.ndarray:
        if self.lobe_table is None:
            return np.full_like(np.asarray(c, dtype=float), self.lobe_scale)
        return self._lookup(self.lobe_table, np.asarray(c, dtype=float))


class Spectrum(BaseModel):
    """Complex echo spectrum on the full FFT grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: ComplexArray
    sample_rate: float = Field(..., gt=0)

    @property
    def n(self) -> int:
        return int(self.coefficients.size)

    def frequencies(self) -> np.ndarray:
        return np.arange(self.n) * self.sample_rate / self.n

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        y = self.coefficients
        scale = max(float(np.abs(y).max(initial=0.0)), np.finfo(float).tiny)
        mirrored = np.conj(y[1:][::-1])
        mismatch = float(np.abs(y[1:] - mirrored).max(initial=0.0))
        return mismatch <= rtol * scale and abs(y[0].imag) <= rtol * scale

    def __add__(self, other: "Spectrum") -> "Spectrum":
        if other.n != self.n or other.sample_rate != self.sample_rate:
            raise ValueError("spectra must share the same grid")
        return Spectrum(
            coefficients=self.coefficients + other.coefficients, sample_rate=self.sample_rate
        )


class ImpulseResponse(BaseModel):
    """Real time-domain echo; sample 0 is the emission instant."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: FloatArray
    sample_rate: float = Field(..., gt=0)

    @model_validator(mode="after")
    def validate_samples(self) -> "ImpulseResponse":
        if self.samples.ndim != 1:
            raise ValueError("impulse samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("impulse samples must be finite")
        return self

    @property
    def n(self) -> int:
        return int(self.samples.size)

    def time_axis(self) -> np.ndarray:
        return np.arange(self.n) / self.sample_rate

    def envelope(self) -> np.ndarray:
        if not np.any(self.samples):
            return np.zeros(self.n)
        return np.abs(hilbert(self.samples))

    def peak_index(self) -> int:
        """Sample index of the envelope maximum."""
        return int(np.argmax(self.envelope()))

    def is_zero(self) -> bool:
        return not np.any(self.samples)

    def __add__(self, other: "ImpulseResponse") -> "ImpulseResponse":
        if other.n != self.n or other.sample_rate != self.sample_rate:
            raise ValueError("impulses must share length and sample rate")
        return ImpulseResponse(samples=self.samples + other.samples, sample_rate=self.sample_rate)
