import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.config.simulation_config import IMAG_RESIDUAL_RTOL
from src.models.acoustics import (
    AcousticConfig,
    ImpulseResponse,
    LeafBeampatternParams,
    SonarBeampatternParams,
    Spectrum,
)
from src.models.scene import FacetBatch, FacetObservation, Scene
from src.models.trajectory import SonarPose
from src.services.scene_builder import facet_batch_in_main_lobe
from src.utils.exceptions import RejectedInputError, SpectrumValidationError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# facets per vectorised block in spectrum assembly
_FACET_CHUNK = 256


def sonar_beampattern(az: ArrayLike, el: ArrayLike, params: SonarBeampatternParams) -> ArrayLike:
    """Gaussian main-lobe gain A1 * exp(-(a dx^2 + 2b dx dy + c dy^2))."""
    dx = np.asarray(az, dtype=float) - params.x0
    dy = np.asarray(el, dtype=float) - params.y0
    exponent = params.a * dx * dx + 2.0 * params.b * dx * dy + params.c * dy * dy
    gain = params.amplitude * np.exp(-exponent)
    return float(gain) if np.ndim(gain) == 0 else gain


def leaf_beampattern(
    beta: ArrayLike,
    a: ArrayLike,
    frequency: ArrayLike,
    params: LeafBeampatternParams,
    speed_of_sound: float,
) -> ArrayLike:
    """
    Disk reflection gain max(0, A c cos(B c beta)) with c = 2 pi a f / v.

    The cosine is cut at its first null so the gain never goes negative.
    """
    c = 2.0 * math.pi * np.asarray(a, dtype=float) * np.asarray(frequency, dtype=float) / speed_of_sound
    argument = params.lobe_scale_at(c) * c * np.asarray(beta, dtype=float)
    gain = np.where(
        argument >= math.pi / 2,
        0.0,
        np.maximum(0.0, params.amplitude_at(c) * c * np.cos(argument)),
    )
    return float(gain) if np.ndim(gain) == 0 else gain


def echo_amplitude(
    sonar_gain: ArrayLike,
    leaf_gain: ArrayLike,
    r: ArrayLike,
    frequency: ArrayLike,
    speed_of_sound: float,
) -> ArrayLike:
    """S * L * lambda / (2 pi r^2) with lambda = v / f."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise RejectedInputError("range must be positive", field="r")
    wavelength = speed_of_sound / np.asarray(frequency, dtype=float)
    amplitude = sonar_gain * leaf_gain * wavelength / (2.0 * math.pi * r * r)
    return float(amplitude) if np.ndim(amplitude) == 0 else amplitude


def facet_amplitude(
    obs: FacetObservation,
    frequency: float,
    cfg: AcousticConfig,
    sonar: SonarBeampatternParams,
    leaf: Optional[LeafBeampatternParams] = None,
) -> float:
    leaf = leaf or LeafBeampatternParams()
    s_gain = sonar_beampattern(obs.az, obs.el, sonar)
    l_gain = leaf_beampattern(obs.beta, obs.a, frequency, leaf, cfg.speed_of_sound)
    return echo_amplitude(s_gain, l_gain, obs.r, frequency, cfg.speed_of_sound)


def round_trip_phase(r: ArrayLike, frequency: ArrayLike, speed_of_sound: float) -> ArrayLike:
    """-2 pi f (2 r / v)."""
    return -2.0 * math.pi * np.asarray(frequency, dtype=float) * (2.0 * np.asarray(r, dtype=float) / speed_of_sound)


def facet_phase(obs: FacetObservation, frequency: float, cfg: AcousticConfig) -> float:
    return float(round_trip_phase(obs.r, frequency, cfg.speed_of_sound))


def _as_batch(facets: Union[FacetBatch, Sequence[FacetObservation]]) -> FacetBatch:
    if isinstance(facets, FacetBatch):
        return facets
    return FacetBatch.from_observations(list(facets))


def assemble_spectrum(
    facets: Union[FacetBatch, Sequence[FacetObservation]],
    cfg: AcousticConfig,
    sonar: SonarBeampatternParams,
    leaf: Optional[LeafBeampatternParams] = None,
) -> Spectrum:
    """
    Superpose facet echoes on the in-band FFT bins and mirror them so the
    spectrum is Hermitian. Bins outside [f_lo, f_hi] and its mirror stay zero.
    """
    leaf = leaf or LeafBeampatternParams()
    batch = _as_batch(facets)
    n = cfg.n_samples
    coefficients = np.zeros(n, dtype=complex)

    bins = cfg.band_indices()
    frequencies = cfg.band_frequencies()
    v = cfg.speed_of_sound

    band = np.zeros(bins.size, dtype=complex)
    for start in range(0, len(batch), _FACET_CHUNK):
        stop = start + _FACET_CHUNK
        r = batch.r[start:stop, None]
        s_gain = sonar_beampattern(batch.az[start:stop], batch.el[start:stop], sonar)
        l_gain = leaf_beampattern(
            batch.beta[start:stop, None], batch.a[start:stop, None], frequencies[None, :], leaf, v
        )
        amplitude = echo_amplitude(np.asarray(s_gain)[:, None], l_gain, r, frequencies[None, :], v)
        phase = round_trip_phase(r, frequencies[None, :], v)
        band += (amplitude * np.exp(1j * phase)).sum(axis=0)

    coefficients[bins] = band
    coefficients[n - bins] = np.conj(band)
    return Spectrum(coefficients=coefficients, sample_rate=cfg.sample_rate)


def synthesize_impulse(spectrum: Spectrum, cfg: AcousticConfig) -> ImpulseResponse:
    """Inverse FFT of a Hermitian spectrum; the real part is the echo signal."""
    if spectrum.n != cfg.n_samples:
        raise RejectedInputError(
            f"spectrum has {spectrum.n} bins, config expects {cfg.n_samples}", field="spectrum"
        )
    if not spectrum.is_hermitian():
        logger.error("spectrum_not_hermitian", n=spectrum.n)
        raise SpectrumValidationError("spectrum is not Hermitian-symmetric")

    signal = np.fft.ifft(spectrum.coefficients)
    samples = signal.real + 0.0
    peak = float(np.abs(samples).max(initial=0.0))
    residual = float(np.abs(signal.imag).max(initial=0.0))
    if peak > 0 and residual > IMAG_RESIDUAL_RTOL * peak:
        logger.warning("imaginary_residual_above_tolerance", residual=residual, peak=peak)
    return ImpulseResponse(samples=samples, sample_rate=cfg.sample_rate)


def simulate_pose(
    scene: Scene,
    pose: SonarPose,
    leaf: Optional[LeafBeampatternParams] = None,
) -> Tuple[FacetBatch, ImpulseResponse]:
    """Cone query, spectrum assembly and synthesis for a single pose."""
    cfg = pose.acoustic
    sonar = SonarBeampatternParams.from_beamwidth(pose.beamwidth_deg, cfg.sonar_amplitude)
    facets = facet_batch_in_main_lobe(scene, pose)
    if len(facets) and float(facets.r[-1]) > cfg.max_range:
        logger.warning(
            "facets_beyond_signal_window",
            count=int(np.count_nonzero(facets.r > cfg.max_range)),
            max_range=round(cfg.max_range, 3),
        )
    spectrum = assemble_spectrum(facets, cfg, sonar, leaf)
    return facets, synthesize_impulse(spectrum, cfg)
