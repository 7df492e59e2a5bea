"""Synthetic corpus generation: shape, semantics, determinism, noise."""

from __future__ import annotations

import numpy as np
import pytest

from decenergy.catalog import FeatureCategory, build_catalog
from decenergy.errors import ValidationError
from decenergy.estimator import fit_dataset
from decenergy.synth import (
    DEFAULT_TOOL_OFF_PLAN,
    NoiseModel,
    SynthConfig,
    generate,
    load_truth,
    perturb_energy,
    save_truth,
)


class TestNoiseModel:
    def test_parse(self):
        assert NoiseModel.parse("none") == NoiseModel()
        assert NoiseModel.parse("mult:0.02") == NoiseModel("multiplicative", 0.02)
        assert NoiseModel.parse("add:1.5") == NoiseModel("additive", 1.5)

    @pytest.mark.parametrize("text", ["mult", "gauss:0.1", "mult:abc", ""])
    def test_parse_rejects_malformed(self, text):
        with pytest.raises(ValidationError):
            NoiseModel.parse(text)

    def test_invalid_models_rejected(self):
        with pytest.raises(ValidationError):
            NoiseModel("multiplicative", -0.1)
        with pytest.raises(ValidationError):
            NoiseModel("none", 0.5)


class TestPerturbEnergy:
    def test_none_is_identity(self):
        rng = np.random.default_rng(0)
        assert perturb_energy(123.0, NoiseModel(), rng) == 123.0

    def test_zero_sigma_is_identity(self):
        rng = np.random.default_rng(0)
        assert perturb_energy(123.0, NoiseModel("multiplicative", 0.0), rng) == 123.0

    def test_multiplicative_sample_std(self):
        # 1e4 draws at sigma_rel = 0.02: sample std within 10% of nominal.
        rng = np.random.default_rng(5)
        nm = NoiseModel("multiplicative", 0.02)
        draws = np.array([perturb_energy(100.0, nm, rng) for _ in range(10_000)])
        sd = np.std(draws / 100.0 - 1.0, ddof=1)
        assert 0.018 <= sd <= 0.022

    def test_additive_sample_std(self):
        rng = np.random.default_rng(6)
        nm = NoiseModel("additive", 2.0)
        draws = np.array([perturb_energy(100.0, nm, rng) for _ in range(10_000)])
        assert np.std(draws - 100.0, ddof=1) == pytest.approx(2.0, rel=0.1)

    def test_always_positive_even_with_huge_sigma(self):
        rng = np.random.default_rng(7)
        nm = NoiseModel("multiplicative", 5.0)
        for _ in range(200):
            assert perturb_energy(1.0, nm, rng) > 0

    def test_nonpositive_clean_energy_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValidationError):
            perturb_energy(0.0, NoiseModel(), rng)


class TestSynthConfig:
    def test_default_counts(self):
        cfg = SynthConfig()
        assert cfg.base_record_count == 23 * 4 * 3 == 276
        assert cfg.tool_off_record_count == 6 * 92 + 2 * 104 == 760

    def test_default_plan_is_the_eight_tools(self):
        tools = [t for t, _, _ in DEFAULT_TOOL_OFF_PLAN]
        assert tools == ["ALF", "BDOF", "DMVR", "ISP", "LFNST", "MIP", "MTS", "TPM"]
        ra = [c for t, c, n in DEFAULT_TOOL_OFF_PLAN if c == "RA"]
        ai = [(t, n) for t, c, n in DEFAULT_TOOL_OFF_PLAN if c == "AI"]
        assert len(ra) == 6
        assert ai == [("ISP", 104), ("MIP", 104)]

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValidationError):
            SynthConfig(n_sequences=0)
        with pytest.raises(ValidationError):
            SynthConfig(qps=())
        with pytest.raises(ValidationError):
            SynthConfig(tool_off_plan=(("SAO", "RA", 92),))
        with pytest.raises(ValidationError):
            SynthConfig(e_true=np.ones(10))
        with pytest.raises(ValidationError):
            SynthConfig(e_true=-np.ones(230))


class TestGenerate:
    def test_default_corpus_sizes(self):
        ds, _ = generate(SynthConfig(seed=1))
        assert len(ds) == 1036
        assert sum(1 for r in ds.records if r.tool_off is None) == 276
        assert sum(1 for r in ds.records if r.tool_off is not None) == 760

    def test_noiseless_energy_is_exact_dot_product(self):
        ds, e_true = generate(SynthConfig(seed=2, n_sequences=4, tool_off_plan=()))
        for rec in ds.records:
            assert rec.energy_joules == float(rec.features @ e_true)

    def test_ai_records_have_zero_inter_columns(self):
        ds, _ = generate(SynthConfig(seed=3, n_sequences=4, tool_off_plan=()))
        fv = build_catalog("FV")
        inter = np.zeros(fv.column_count, dtype=bool)
        for spec in fv.specs:
            if spec.category is FeatureCategory.INTER:
                inter[fv.column_slice(spec.name)] = True
        ai_records = [r for r in ds.records if r.config == "AI"]
        assert ai_records
        for rec in ai_records:
            assert np.all(rec.features[inter] == 0)

    def test_tool_off_columns_zed_and_mass_transferred(self):
        ds, _ = generate(SynthConfig(seed=4))
        fv = build_catalog("FV")
        dmvr_rows = [r for r in ds.records if r.tool_off == "DMVR"]
        assert len(dmvr_rows) == 92
        for rec in dmvr_rows:
            assert np.all(rec.features[fv.column_slice("dmvr")] == 0)
        # DMVR rows keep inter mass: the sibling received the transfer.
        assert all(
            rec.features[fv.column_slice("inter_inter")].sum() > 0 for rec in dmvr_rows
        )
        alf_rows = [r for r in ds.records if r.tool_off == "ALF"]
        for rec in alf_rows[:5]:
            assert rec.features[fv.column_index("alf_luma")] == 0
            assert rec.features[fv.column_index("alf_chroma")] == 0

    def test_higher_qp_means_fewer_coefficients(self):
        ds, _ = generate(SynthConfig(seed=5, tool_off_plan=()))
        fv = build_catalog("FV")
        j = fv.column_index("coeff")
        by_qp = {qp: [] for qp in (22, 27, 32, 37)}
        for rec in ds.records:
            by_qp[rec.qp].append(rec.features[j])
        means = [np.mean(by_qp[qp]) for qp in (22, 27, 32, 37)]
        assert means[0] > means[1] > means[2] > means[3]

    def test_bit_deterministic_per_seed(self):
        a, ea = generate(SynthConfig(seed=11, n_sequences=3))
        b, eb = generate(SynthConfig(seed=11, n_sequences=3))
        np.testing.assert_array_equal(ea, eb)
        for x, y in zip(a.records, b.records):
            assert x.id == y.id
            assert x.energy_joules == y.energy_joules
            np.testing.assert_array_equal(x.features, y.features)

    def test_different_seeds_differ(self):
        a, _ = generate(SynthConfig(seed=1, n_sequences=2, tool_off_plan=()))
        b, _ = generate(SynthConfig(seed=2, n_sequences=2, tool_off_plan=()))
        assert a.records[0].energy_joules != b.records[0].energy_joules

    def test_supplied_e_true_used_verbatim(self):
        e = np.full(230, 1e-6)
        ds, e_out = generate(
            SynthConfig(seed=6, n_sequences=2, tool_off_plan=(), e_true=e)
        )
        np.testing.assert_array_equal(e_out, e)
        for rec in ds.records:
            assert rec.energy_joules == pytest.approx(rec.features.sum() * 1e-6)

    def test_fvs_generation(self):
        ds, e_true = generate(
            SynthConfig(catalog_kind="FVS", seed=7, n_sequences=3, tool_off_plan=())
        )
        assert ds.catalog_kind == "FVS"
        assert ds.records[0].features.shape == (66,)
        assert e_true.shape == (66,)
        for rec in ds.records:
            assert rec.energy_joules == float(rec.features @ e_true)

    def test_sequence_complexity_is_consistent(self):
        # The same sequence at different QPs shares its complexity draw;
        # eo is always 1 regardless.
        ds, _ = generate(SynthConfig(seed=8, n_sequences=2, tool_off_plan=()))
        fv = build_catalog("FV")
        eo = fv.column_index("eo")
        assert all(r.features[eo] == 1 for r in ds.records)

    def test_noiseless_recovery_on_well_conditioned_corpus(self):
        # N = 800 >= 3J noiseless records identify every coefficient.
        cfg = SynthConfig(n_sequences=200, configs=("RA",), tool_off_plan=(), seed=123)
        ds, e_true = generate(cfg)
        assert len(ds) == 800
        model = fit_dataset(ds)
        sup = [i for i in range(230) if i not in model.unsupported]
        rel = np.abs(model.coefficients[sup] - e_true[sup]) / e_true[sup]
        assert rel.max() < 1e-6


class TestTruthFile:
    def test_round_trip(self, tmp_path):
        _, e_true = generate(SynthConfig(seed=9, n_sequences=2, tool_off_plan=()))
        p = tmp_path / "e_true.json"
        save_truth(e_true, "FV", p)
        back, kind = load_truth(p)
        assert kind == "FV"
        np.testing.assert_array_equal(back, e_true)

    def test_version_stamp(self, tmp_path):
        import json

        from decenergy import __version__

        save_truth(np.ones(66), "FVS", tmp_path / "t.json")
        assert json.loads((tmp_path / "t.json").read_text())["version"] == __version__

    def test_wrong_length_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            save_truth(np.ones(10), "FV", tmp_path / "t.json")
