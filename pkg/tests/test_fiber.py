import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from pydantic import ValidationError

from polnet import states
from polnet.fiber import (
    C_LIGHT,
    BETA_FS_1270,
    ClassicalChannel,
    FiberChannel,
    FiberLink,
    FiberSection,
    RamanCoefficientTable,
    SellmeierCoefficients,
    base_delay,
    cd_delay,
    db_per_km_to_per_m,
    default_raman_table,
    dgd,
    dispersion_param,
    effective_dispersion,
    group_index,
    raman_rates,
    sample_noise_arrivals,
    section_jones,
    sellmeier_index,
    total_jones,
    total_raman_rate,
)
from polnet.components import Sink
from polnet.kernel import Photon, PhotonKind, Timeline

SILICA = SellmeierCoefficients()


def analytic_index_and_slope(lam_nm):
    # oracle: closed-form Sellmeier and its derivative (lambda in um)
    lam = lam_nm * 1e-3
    b = np.array(SILICA.B)
    c = np.array(SILICA.C) * 1e6
    n2 = 1 + np.sum(b * lam**2 / (lam**2 - c**2))
    dn2 = np.sum(-2 * b * lam * c**2 / (lam**2 - c**2) ** 2)
    n = math.sqrt(n2)
    return n, dn2 / (2 * n) * 1e-3  # per nm


def link(*sections):
    return FiberLink(sections=list(sections))


class TestIndex:
    def test_silica_at_1550(self):
        # tabulated fused-silica value
        assert sellmeier_index(1550.0, 293.15, SILICA) == pytest.approx(1.44402, abs=2e-5)

    @given(st.floats(600, 1700))
    def test_matches_closed_form(self, lam):
        n, _ = analytic_index_and_slope(lam)
        assert sellmeier_index(lam, 293.15, SILICA) == pytest.approx(n, rel=1e-12)

    @given(st.floats(800, 1700))
    def test_group_index_matches_analytic_derivative(self, lam):
        n, dn = analytic_index_and_slope(lam)
        assert group_index(lam, 293.15, SILICA) == pytest.approx(n - lam * dn, rel=1e-8)

    def test_resonance_rejected(self):
        with pytest.raises(ValueError):
            sellmeier_index(SILICA.C[0] * 1e9, 293.15, SILICA)

    def test_temperature_shift(self):
        warm = SellmeierCoefficients(dB_dT=(1e-5, 0.0, 0.0))
        n0 = sellmeier_index(1550.0, 293.15, warm)
        n1 = sellmeier_index(1550.0, 303.15, warm)
        assert n1 > n0
        assert sellmeier_index(1550.0, 303.15, SILICA) == sellmeier_index(1550.0, 293.15, SILICA)


class TestDispersion:
    def test_direct_formula(self):
        expected = 0.092 / 4 * (1550.0 - 1310.0**4 / 1550.0**3)
        assert dispersion_param(1550.0, 1310.0, 0.092) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(17.4606, abs=1e-3)

    def test_zero_at_lambda0(self):
        assert dispersion_param(1310.0, 1310.0, 0.092) == pytest.approx(0.0, abs=1e-12)

    def test_effective_is_length_weighted(self):
        a = FiberSection(length=1000.0)
        b = FiberSection(length=3000.0, zero_dispersion_wavelength=1500.0)
        da = dispersion_param(1550.0, 1310.0, 0.092)
        db = dispersion_param(1550.0, 1500.0, 0.092)
        assert effective_dispersion(link(a, b)) == pytest.approx((da + 3 * db) / 4)

    @given(st.floats(1500, 1600), st.floats(0.1, 100))
    def test_cd_delay_linear(self, lam, km):
        ln = link(FiberSection(length=km * 1000))
        d = dispersion_param(1550.0, 1310.0, 0.092)
        assert float(cd_delay(lam, ln)) == pytest.approx(d * km * (lam - 1550.0), rel=1e-9, abs=1e-9)

    def test_base_delay(self):
        ln = link(FiberSection(length=2000.0))
        ng = group_index(1550.0, 293.15, SILICA)
        assert base_delay(ln) == pytest.approx(ng * 2000.0 / C_LIGHT * 1e12)

    def test_zero_length_section(self):
        ln = link(FiberSection(length=0.0))
        assert base_delay(ln) == 0.0
        assert float(cd_delay(1560.0, ln)) == 0.0
        np.testing.assert_allclose(total_jones(ln, 1550.0), np.eye(2), atol=1e-15)

    def test_negative_length_rejected(self):
        with pytest.raises(ValidationError) as err:
            FiberSection(length=-1.0)
        assert "length" in str(err.value)


class TestJones:
    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(1, 5000), st.floats(1200, 1700))
    def test_section_unitary(self, dbeta, twist, length, lam):
        s = FiberSection(length=length, delta_beta_ellip=dbeta, twist_rate=twist)
        assert states.is_unitary(section_jones(s, lam))

    def test_pure_twist_is_rotation(self):
        s = FiberSection(length=10.0, twist_rate=0.3)
        phi = 0.3 * 10.0 / 2
        rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        np.testing.assert_allclose(section_jones(s, 1550.0), rot, atol=1e-15)

    def test_pure_linear_is_diagonal(self):
        s = FiberSection(length=2.0, delta_beta_bend=0.5)
        np.testing.assert_allclose(section_jones(s, 1550.0), np.diag([np.exp(0.5j), np.exp(-0.5j)]))

    def test_section_order(self, rng):
        s1 = FiberSection(length=3.0, delta_beta_ellip=0.4, twist_rate=0.2)
        s2 = FiberSection(length=5.0, delta_beta_thermal=-0.3, twist_rate=0.7)
        expected = section_jones(s2, 1550.0) @ section_jones(s1, 1550.0)
        np.testing.assert_allclose(total_jones(link(s1, s2), 1550.0), expected)

    def test_broadcast_over_wavelength(self):
        s = FiberSection(length=100.0, birefringence_model="constant_delta_n", delta_n=1e-7)
        lams = np.array([1540.0, 1550.0, 1560.0])
        stack = total_jones(link(s), lams)
        for k, lam in enumerate(lams):
            np.testing.assert_allclose(stack[k], total_jones(link(s), lam))


class TestDgd:
    def test_constant_delta_n_oracle(self):
        ln = link(FiberSection(length=1000.0, birefringence_model="constant_delta_n", delta_n=1e-7))
        oracle = 1e-7 * 1000.0 / C_LIGHT
        assert oracle == pytest.approx(333.56e-15, rel=1e-4)
        assert dgd(ln, 1550.0) == pytest.approx(oracle, rel=5e-3)

    def test_constant_delta_beta_is_zero(self):
        ln = link(FiberSection(length=1000.0, delta_beta_ellip=0.5, twist_rate=0.1))
        assert dgd(ln, 1550.0) == 0.0

    def test_step_halving_converges(self):
        ln = link(FiberSection(length=1000.0, birefringence_model="constant_delta_n", delta_n=1e-7))
        full, half = dgd(ln, 1550.0, 0.1), dgd(ln, 1550.0, 0.05)
        assert abs(full - half) / full < 1e-3

    @given(st.floats(1e-8, 3e-7), st.floats(10, 2000))
    def test_scales_with_length_and_delta_n(self, dn, length):
        ln = link(FiberSection(length=length, birefringence_model="constant_delta_n", delta_n=dn))
        assert dgd(ln, 1550.0) == pytest.approx(dn * length / C_LIGHT, rel=5e-3)


class TestRaman:
    def _classical(self, **kw):
        return ClassicalChannel(wavelength=1270.0, launch_power=1e14,
                                attenuation=db_per_km_to_per_m(0.35), **kw)

    def test_rates_match_direct_formula(self):
        table = default_raman_table()
        cl = self._classical()
        a_s, a_n, L = cl.attenuation, table.noise_attenuation, 10_000.0
        scale = BETA_FS_1270 * 100e9 * 1e14
        fs = (math.exp(-a_n * L) - math.exp(-a_s * L)) / (a_s - a_n) * scale
        bs = (1 - math.exp(-(a_s + a_n) * L)) / (a_s + a_n) * scale
        got_fs, got_bs = raman_rates(L, cl, table)
        assert got_fs == pytest.approx(fs, rel=1e-12)
        assert got_bs == pytest.approx(bs, rel=1e-12)

    def test_fs_continuous_at_equal_attenuation(self):
        table = default_raman_table()
        near = ClassicalChannel(wavelength=1270.0, attenuation=table.noise_attenuation * (1 + 1e-9))
        equal = ClassicalChannel(wavelength=1270.0, attenuation=table.noise_attenuation)
        assert raman_rates(5000.0, near, table)[0] == pytest.approx(raman_rates(5000.0, equal, table)[0],
                                                                   rel=1e-7)

    @given(st.floats(1e12, 1e16))
    def test_linear_in_power(self, p):
        table = default_raman_table()
        r1 = total_raman_rate(link(FiberSection(length=5000.0)),
                              ClassicalChannel(wavelength=1270.0, launch_power=p), table)
        r2 = total_raman_rate(link(FiberSection(length=5000.0)),
                              ClassicalChannel(wavelength=1270.0, launch_power=2 * p), table)
        assert r2 == pytest.approx(2 * r1, rel=1e-12)

    def test_sections_sum_and_enable_mask(self):
        table = default_raman_table()
        cl = self._classical()
        s1, s2 = FiberSection(length=2000.0), FiberSection(length=3000.0)
        expected = sum(raman_rates(2000.0, cl, table)) + sum(raman_rates(3000.0, cl, table))
        assert total_raman_rate(link(s1, s2), cl, table) == pytest.approx(expected)
        only_second = self._classical(enabled_sections=[1])
        assert total_raman_rate(link(s1, s2), only_second, table) == pytest.approx(
            sum(raman_rates(3000.0, cl, table)))

    def test_shipped_ratio(self):
        table = default_raman_table()
        assert table.lookup(1490.0)[0] / table.lookup(1270.0)[0] == pytest.approx(64.0)
        assert table.lookup(1270.0)[0] == pytest.approx(0.058e-23)

    def test_table_roundtrip(self, tmp_path):
        table = RamanCoefficientTable({(1310.0, 1550.0): (1.5e-24, 2.5e-24)})
        path = tmp_path / "raman.csv"
        table.save(path)
        back = RamanCoefficientTable.load(path)
        assert back.entries == table.entries

    def test_table_load_whitespace_and_comments(self, tmp_path):
        path = tmp_path / "raman.txt"
        path.write_text("# coefficients\n1330 1550 1e-24 2e-24\n1270\t1550\t3e-25 4e-25  # note\n")
        table = RamanCoefficientTable.load(path)
        assert table.lookup(1330.0) == (1e-24, 2e-24)
        assert table.wavelengths() == [1270.0, 1330.0]

    def test_missing_wavelength(self):
        with pytest.raises(KeyError):
            default_raman_table().lookup(1310.0)

    def test_arrivals_poisson(self, rng):
        t = sample_noise_arrivals(2e5, (0, 10**11), rng)
        assert abs(t.size - 2e4) < 5 * math.sqrt(2e4)


class TestFiberChannel:
    def test_delay_and_rotation(self):
        tl = Timeline(1)
        sink = Sink()
        ln = link(FiberSection(length=1000.0, twist_rate=math.pi / 1000, attenuation=0.0))
        ch = FiberChannel(tl, "f", ln, sink)
        p = Photon(0, 1551.0, 0, PhotonKind.SIGNAL, polarization=states.H.copy())
        assert ch.transmit(p)
        tl.run()
        # rotation by pi/2 turns H into V
        assert states.same_state(sink.photons[0].polarization, states.V)
        expected = base_delay(ln) + float(cd_delay(1551.0, ln))
        assert tl.now + p.time_offset == pytest.approx(expected, abs=1e-6)

    def test_attenuation(self):
        tl = Timeline(2)
        sink = Sink()
        ln = link(FiberSection(length=15000.0))  # 3 dB
        ch = FiberChannel(tl, "f", ln, sink)
        n = 20000
        for k in range(n):
            ch.transmit(Photon(k, 1550.0, 0, PhotonKind.SIGNAL, polarization=states.H.copy()))
        tl.run()
        p = 10 ** -0.3
        assert abs(len(sink.photons) / n - p) < 4 * math.sqrt(p * (1 - p) / n)

    def test_noise_injection(self):
        tl = Timeline(3)
        sink = Sink()
        ln = link(FiberSection(length=10_000.0))
        ch = FiberChannel(tl, "f", ln, sink, classical=ClassicalChannel(wavelength=1490.0, launch_power=1e15,
                                                                          attenuation=db_per_km_to_per_m(0.21)))
        rate = ch.noise_rate()
        window = int(round(2e4 / rate * 1e12))
        ch.start(0, window)
        tl.run()
        assert abs(len(sink.photons) - 2e4) < 5 * math.sqrt(2e4)
        assert all(p.kind is PhotonKind.NOISE for p in sink.photons)
