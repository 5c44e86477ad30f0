import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.config.simulation_config import EVALUATED_BEAMWIDTHS_DEG
from src.models.acoustics import (
    AcousticConfig,
    ImpulseResponse,
    LeafBeampatternParams,
    SonarBeampatternParams,
    Spectrum,
)
from src.models.scene import FacetBatch, FacetObservation
from src.services.echo_simulator import (
    assemble_spectrum,
    echo_amplitude,
    facet_amplitude,
    facet_phase,
    leaf_beampattern,
    round_trip_phase,
    simulate_pose,
    sonar_beampattern,
    synthesize_impulse,
)
from src.tests.conftest import delay_index, make_leaf_scene, make_pose
from src.utils.exceptions import RejectedInputError, SpectrumValidationError

V = 343.0
F = 70_000.0


def _facet(r=1.0, az=0.0, el=0.0, beta=0.0, a=0.01, leaf_id=0):
    return FacetObservation(r=r, az=az, el=el, beta=beta, a=a, leaf_id=leaf_id)


@pytest.fixture
def sonar():
    return SonarBeampatternParams.from_beamwidth(20.0)


@pytest.mark.unit
class TestAcousticConfig:

    def test_defaults(self, acoustic_config):
        assert acoustic_config.frequency_step == pytest.approx(400_000.0 / 16_384)
        assert acoustic_config.max_range == pytest.approx(343.0 * 16_384 / 400_000.0 / 2)
        bins = acoustic_config.band_indices()
        assert bins[0] * acoustic_config.frequency_step >= 60_000.0
        assert bins[-1] * acoustic_config.frequency_step <= 80_000.0
        assert (bins[0] - 1) * acoustic_config.frequency_step < 60_000.0

    @pytest.mark.parametrize(
        "overrides",
        [
            {"f_lo": 80_000.0, "f_hi": 60_000.0},
            {"f_hi": 250_000.0},
            {"n_samples": 10_000},
        ],
    )
    def test_invalid_band_or_length(self, overrides):
        with pytest.raises(ValidationError):
            AcousticConfig(**overrides)


@pytest.mark.unit
class TestSonarBeampattern:

    def test_boresight_gain_is_amplitude(self):
        params = SonarBeampatternParams.from_beamwidth(20.0, amplitude=2.5)

        assert sonar_beampattern(0.0, 0.0, params) == pytest.approx(2.5)

    @pytest.mark.parametrize("beamwidth", EVALUATED_BEAMWIDTHS_DEG)
    def test_half_gain_at_half_beamwidth(self, beamwidth):
        params = SonarBeampatternParams.from_beamwidth(beamwidth)
        edge = math.radians(beamwidth) / 2

        assert sonar_beampattern(edge, 0.0, params) == pytest.approx(0.5)
        assert sonar_beampattern(0.0, -edge, params) == pytest.approx(0.5)

    def test_symmetric_in_both_angles(self, sonar):
        az = np.linspace(-0.2, 0.2, 9)
        el = np.linspace(0.15, -0.05, 9)

        np.testing.assert_allclose(sonar_beampattern(az, el, sonar), sonar_beampattern(-az, -el, sonar))
        np.testing.assert_allclose(sonar_beampattern(az, el, sonar), sonar_beampattern(el, az, sonar))

    def test_indefinite_form_is_rejected(self):
        with pytest.raises(ValidationError, match="positive-definite"):
            SonarBeampatternParams(a=1.0, b=2.0, c=1.0)


@pytest.mark.unit
class TestLeafBeampattern:

    def test_normal_incidence_gain_is_size_parameter(self):
        gain = leaf_beampattern(0.0, 0.03, F, LeafBeampatternParams(), V)

        assert gain == pytest.approx(2 * math.pi * 0.03 * F / V)
        assert gain == pytest.approx(38.48, abs=0.02)

    def test_gain_is_zero_past_the_first_null(self):
        params = LeafBeampatternParams()
        c = 2 * math.pi * 0.03 * F / V
        null = math.pi / (2 * c)

        assert leaf_beampattern(null * 0.99, 0.03, F, params, V) > 0
        assert leaf_beampattern(null * 1.01, 0.03, F, params, V) == 0.0
        assert leaf_beampattern(math.pi / 2, 0.03, F, params, V) == 0.0

    def test_tabulated_amplitude_is_interpolated(self):
        # Setup
        params = LeafBeampatternParams(amplitude_table=[(0.0, 1.0), (100.0, 3.0)])
        c = 2 * math.pi * 0.01 * F / V

        # Execute
        gain = leaf_beampattern(0.0, 0.01, F, params, V)

        # Verify
        assert gain == pytest.approx((1.0 + 2.0 * c / 100.0) * c)

    def test_decreasing_table_is_rejected(self):
        with pytest.raises(ValidationError):
            LeafBeampatternParams(lobe_table=[(2.0, 1.0), (1.0, 1.0)])


@pytest.mark.unit
class TestEchoAmplitudeAndPhase:

    def test_unit_gains_at_one_metre(self):
        assert echo_amplitude(1.0, 1.0, 1.0, F, V) == pytest.approx(7.80e-4, rel=1e-3)

    def test_inverse_square_in_range(self):
        near = echo_amplitude(1.0, 1.0, 1.0, F, V)
        far = echo_amplitude(1.0, 1.0, 2.0, F, V)

        assert far / near == pytest.approx(0.25, rel=1e-12)

    def test_non_positive_range_is_rejected(self):
        with pytest.raises(RejectedInputError):
            echo_amplitude(1.0, 1.0, 0.0, F, V)

    def test_round_trip_phase(self):
        assert round_trip_phase(V / (4 * F), F, V) == pytest.approx(-math.pi)
        assert round_trip_phase(1.0, F, V) == pytest.approx(-2 * math.pi * F * (2 * 1.0 / V), rel=1e-12)
        assert round_trip_phase(1.0, F, V) == pytest.approx(-2564.57, abs=0.01)

    def test_facet_helpers_combine_the_gains(self, acoustic_config, sonar):
        # Setup
        obs = _facet(r=1.5, az=0.05, el=-0.02, beta=0.1, a=0.01)
        leaf = LeafBeampatternParams()

        # Execute
        amplitude = facet_amplitude(obs, F, acoustic_config, sonar, leaf)

        # Verify
        expected = echo_amplitude(
            sonar_beampattern(0.05, -0.02, sonar),
            leaf_beampattern(0.1, 0.01, F, leaf, V),
            1.5,
            F,
            V,
        )
        assert amplitude == pytest.approx(expected)
        assert facet_phase(obs, F, acoustic_config) == pytest.approx(-2 * math.pi * F * 3.0 / V)


@pytest.mark.unit
class TestAssembleSpectrum:

    def test_no_facets_gives_zero_spectrum(self, acoustic_config, sonar):
        spectrum = assemble_spectrum([], acoustic_config, sonar)

        assert spectrum.n == acoustic_config.n_samples
        assert not np.any(spectrum.coefficients)

    def test_single_facet_magnitude_matches_amplitude(self, acoustic_config, sonar):
        # Setup
        obs = _facet(r=1.0, a=0.01)
        bins = acoustic_config.band_indices()

        # Execute
        spectrum = assemble_spectrum([obs], acoustic_config, sonar)

        # Verify
        for k in bins[[0, len(bins) // 2, -1]]:
            f = k * acoustic_config.frequency_step
            expected = facet_amplitude(obs, f, acoustic_config, sonar)
            assert abs(spectrum.coefficients[k]) == pytest.approx(expected, rel=1e-12)
            assert np.angle(spectrum.coefficients[k]) == pytest.approx(
                math.remainder(facet_phase(obs, f, acoustic_config), 2 * math.pi), abs=1e-9
            )

    def test_support_is_the_band_and_its_mirror(self, acoustic_config, sonar):
        # Setup
        n = acoustic_config.n_samples
        bins = acoustic_config.band_indices()

        # Execute
        spectrum = assemble_spectrum([_facet()], acoustic_config, sonar)

        # Verify
        support = np.zeros(n, dtype=bool)
        support[bins] = True
        support[n - bins] = True
        assert np.all(spectrum.coefficients[~support] == 0)
        assert np.all(spectrum.coefficients[support] != 0)
        assert spectrum.is_hermitian()

    def test_identical_facets_add(self, acoustic_config, sonar):
        one = assemble_spectrum([_facet()], acoustic_config, sonar)
        two = assemble_spectrum([_facet(), _facet(leaf_id=1)], acoustic_config, sonar)

        np.testing.assert_allclose(two.coefficients, 2 * one.coefficients, rtol=1e-12)

    def test_spectrum_of_two_facets_is_the_sum(self, acoustic_config, sonar):
        near = _facet(r=1.1, az=0.03, leaf_id=0)
        far = _facet(r=2.9, el=-0.06, beta=0.3, a=0.02, leaf_id=1)

        both = assemble_spectrum([near, far], acoustic_config, sonar)
        parts = assemble_spectrum([near], acoustic_config, sonar) + assemble_spectrum([far], acoustic_config, sonar)

        scale = np.abs(both.coefficients).max()
        np.testing.assert_allclose(both.coefficients, parts.coefficients, rtol=0, atol=1e-12 * scale)

    def test_batch_and_list_inputs_agree(self, acoustic_config, sonar):
        observations = [_facet(r=0.8 + 0.1 * i, az=0.01 * i, leaf_id=i) for i in range(300)]

        from_list = assemble_spectrum(observations, acoustic_config, sonar)
        from_batch = assemble_spectrum(FacetBatch.from_observations(observations), acoustic_config, sonar)

        np.testing.assert_allclose(from_batch.coefficients, from_list.coefficients, rtol=1e-12)


@pytest.mark.unit
class TestSynthesizeImpulse:

    def test_zero_spectrum_gives_silent_impulse(self, acoustic_config, sonar):
        impulse = synthesize_impulse(assemble_spectrum([], acoustic_config, sonar), acoustic_config)

        assert impulse.n == acoustic_config.n_samples
        assert impulse.is_zero()
        assert not np.any(np.signbit(impulse.samples))

    def test_non_hermitian_spectrum_is_rejected(self, acoustic_config):
        coefficients = np.zeros(acoustic_config.n_samples, dtype=complex)
        coefficients[3000] = 1.0 + 0.5j

        with pytest.raises(SpectrumValidationError):
            synthesize_impulse(
                Spectrum(coefficients=coefficients, sample_rate=acoustic_config.sample_rate),
                acoustic_config,
            )

    def test_length_mismatch_is_rejected(self, acoustic_config):
        spectrum = Spectrum(coefficients=np.zeros(1024, dtype=complex), sample_rate=400_000.0)

        with pytest.raises(RejectedInputError):
            synthesize_impulse(spectrum, acoustic_config)

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 4.0, 6.0])
    def test_envelope_peaks_at_round_trip_delay(self, acoustic_config, sonar, r):
        # Execute
        spectrum = assemble_spectrum([_facet(r=r, a=0.01)], acoustic_config, sonar)
        impulse = synthesize_impulse(spectrum, acoustic_config)

        # Verify
        assert abs(impulse.peak_index() - delay_index(r, acoustic_config)) <= 1

    def test_two_metre_delay_sample(self, acoustic_config):
        assert delay_index(2.0, acoustic_config) == 4665

    def test_impulses_superpose(self, acoustic_config, sonar):
        # Setup
        first = [_facet(r=1.2, leaf_id=0), _facet(r=2.7, az=0.05, beta=0.2, leaf_id=1)]
        second = [_facet(r=3.3, el=-0.04, a=0.02, leaf_id=2)]

        # Execute
        separate = synthesize_impulse(
            assemble_spectrum(first, acoustic_config, sonar), acoustic_config
        ) + synthesize_impulse(assemble_spectrum(second, acoustic_config, sonar), acoustic_config)
        together = synthesize_impulse(
            assemble_spectrum(first + second, acoustic_config, sonar), acoustic_config
        )

        # Verify
        peak = np.abs(together.samples).max()
        np.testing.assert_allclose(together.samples, separate.samples, atol=1e-9 * peak)


@pytest.mark.unit
class TestSimulatePose:

    def test_disk_ahead_echoes_at_its_range(self):
        # Setup
        scene = make_leaf_scene([[2.0, 0.0, 1.0]], [[-1.0, 0.0, 0.0]])
        pose = make_pose((0.0, 0.0, 1.0), (1.0, 0.0, 0.0))

        # Execute
        facets, impulse = simulate_pose(scene, pose)

        # Verify
        assert len(facets) == 1
        assert isinstance(impulse, ImpulseResponse)
        assert abs(impulse.peak_index() - delay_index(2.0, pose.acoustic)) <= 1

    def test_empty_lobe_is_silent(self):
        scene = make_leaf_scene([[2.0, 0.0, 1.0]], [[-1.0, 0.0, 0.0]])
        pose = make_pose((0.0, 0.0, 1.0), (-1.0, 0.0, 0.0))

        facets, impulse = simulate_pose(scene, pose)

        assert len(facets) == 0
        assert impulse.is_zero()
