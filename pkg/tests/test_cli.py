import json
from pathlib import Path

import numpy as np
import pytest

from mpmcil.cli import main

TRACTABLE_RUN = """\
seed = 123
output_dir = "{out}"

[model]
kind = "tractable"
weights = [1.0]
means = [[1.5, -0.5]]
noise_cv = 0.25
box_lower = -15.0
box_upper = 15.0

[adaptive]
n_particles = 600
window_rule = "fixed"
t_w = 3
t_max = 40
d_max = {d_max}
eps_tot = 0.0

[output]
marginal_samples = 2000
"""

GK_SMALL = """\
seed = 77
output_dir = "{out}"

[model]
kind = "gk_abc"
n_obs = 5
h = 4.0
summary_mode = "identity"
true_params = [3.0, 1.0, 2.0, 0.5]

[adaptive]
n_particles = 800
window_rule = "fixed"
t_w = 3
t_max = 8
d_max = 6
eps_tot = 0.0

[oracle]
target_accepted = 400
max_proposals = 100000

[output]
marginal_samples = 3000
"""

GLMM_SYNTH = """\
seed = 9
output_dir = "{out}"

[model]
kind = "glmm"
inner_draws = 20
data_file = "{csv}"

[model.synth]
n = 537
T = 4
true_beta = [0.0, 0.0, 0.0]
true_tau2 = 1e-30

[adaptive]
n_particles = 100
window_rule = "fixed"
t_w = 2
"""


def write_config(tmp_path, text, **fmt):
    path = tmp_path / "exp.toml"
    path.write_text(text.format(**fmt))
    return path


class TestRun:
    def test_run_writes_all_outputs(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, TRACTABLE_RUN, out=out, d_max=1)
        assert main(["run", str(cfg), "--quiet"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["stop_reason"] == "D_max"
        assert summary["final_D"] == 1
        assert summary["T_tot"] <= 40
        assert set(summary) == {"T_tot", "final_D", "final_L", "stop_reason"}
        assert (out / "trace.jsonl").exists()
        assert (out / "final_mixture.json").exists()
        assert (out / "timing.json").exists()
        for j in range(2):
            lines = (out / f"marginal_{j}.csv").read_text().splitlines()
            assert lines[0] == "coordinate,value"
            assert len(lines) == 2001
        assert (out / "figures" / "objective.png").stat().st_size > 0
        assert (out / "figures" / "marginals.png").stat().st_size > 0

    def test_run_fits_single_gaussian(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, TRACTABLE_RUN, out=out, d_max=1)
        main(["run", str(cfg), "--quiet", "--no-figures"])
        mixture = json.loads((out / "final_mixture.json").read_text())
        assert np.allclose(mixture["means"][0], [1.5, -0.5], atol=0.2)

    def test_reruns_are_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg_a = write_config(tmp_path, TRACTABLE_RUN, out=out_a, d_max=2)
        main(["run", str(cfg_a), "--quiet", "--no-figures"])
        cfg_b = tmp_path / "exp_b.toml"
        cfg_b.write_text(TRACTABLE_RUN.format(out=out_b, d_max=2))
        main(["run", str(cfg_b), "--quiet", "--no-figures"])
        for name in ("trace.jsonl", "final_mixture.json", "summary.json",
                     "marginal_0.csv", "marginal_1.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_trace_is_valid_jsonl_with_header(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, TRACTABLE_RUN, out=out, d_max=1)
        main(["run", str(cfg), "--quiet", "--no-figures"])
        records = [json.loads(line) for line in
                   (out / "trace.jsonl").read_text().splitlines()]
        assert records[0]["type"] == "header"
        assert records[0]["config"]["n_particles"] == 600
        kinds = [r["type"] for r in records]
        assert "objective" in kinds and "snapshot" in kinds
        stops = [r for r in records if r.get("kind") == "global_stop"]
        assert len(stops) == 1
        snap = next(r for r in records if r["type"] == "snapshot")
        assert list(snap["mixture"].keys()) == ["D", "weights", "means", "covs"]

    def test_config_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("seed = 1\n")
        assert main(["run", str(bad), "--quiet"]) == 2

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.toml"), "--quiet"]) == 2

    def test_seed_override_changes_outputs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg_a = write_config(tmp_path, TRACTABLE_RUN, out=out_a, d_max=1)
        main(["run", str(cfg_a), "--quiet", "--no-figures"])
        cfg_b = tmp_path / "exp_b.toml"
        cfg_b.write_text(TRACTABLE_RUN.format(out=out_b, d_max=1))
        main(["run", str(cfg_b), "--quiet", "--no-figures", "--seed", "999"])
        assert (out_a / "trace.jsonl").read_bytes() != (out_b / "trace.jsonl").read_bytes()


class TestOracle:
    def test_oracle_outputs(self, tmp_path):
        out = tmp_path / "oracle"
        cfg = write_config(tmp_path, GK_SMALL, out=out)
        assert main(["oracle", str(cfg), "--quiet", "--no-figures"]) == 0
        summary = json.loads((out / "oracle_summary.json").read_text())
        rows = (out / "oracle.csv").read_text().splitlines()
        assert len(rows) - 1 == min(summary["accepted"], 400)
        assert 0.0 < summary["acceptance_rate"] <= 1.0

    def test_zero_budget_exit_3(self, tmp_path):
        out = tmp_path / "oracle"
        text = GK_SMALL.replace("max_proposals = 100000", "max_proposals = 0")
        cfg = tmp_path / "exp.toml"
        cfg.write_text(text.format(out=out))
        assert main(["oracle", str(cfg), "--quiet"]) == 3

    def test_requires_gk_model(self, tmp_path):
        out = tmp_path / "oracle"
        cfg = write_config(tmp_path, TRACTABLE_RUN, out=out, d_max=1)
        assert main(["oracle", str(cfg), "--quiet"]) == 2


class TestCompare:
    def run_and_compare(self, tmp_path, oracle_seed=77):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, GK_SMALL, out=out)
        assert main(["run", str(cfg), "--quiet", "--no-figures"]) == 0
        oracle_dir = tmp_path / "oracle"
        cfg2 = tmp_path / "oracle.toml"
        cfg2.write_text(GK_SMALL.format(out=oracle_dir))
        assert main(["oracle", str(cfg2), "--quiet", "--no-figures",
                     "--seed", str(oracle_seed)]) == 0
        return out, oracle_dir / "oracle.csv"

    def test_compare_schema(self, tmp_path):
        run_dir, oracle_csv = self.run_and_compare(tmp_path)
        assert main(["compare", str(run_dir), str(oracle_csv),
                     "--quiet", "--no-figures"]) == 0
        result = json.loads((run_dir / "compare.json").read_text())
        assert result["coordinates"] == 4
        assert len(result["ks"]) == 4
        assert len(result["mean_delta"]) == 4
        assert all(0.0 <= v <= 1.0 for v in result["ks"])

    def test_self_compare_below_noise_floor(self, tmp_path):
        # marginal draws from the same mixture under two seeds: the KS
        # distance must sit below the two-sample null quantile
        from mpmcil.diagnostics import ks_distance
        from mpmcil.mixture import MixtureParams
        from mpmcil.diagnostics import mixture_marginal_sample

        run_dir, _ = self.run_and_compare(tmp_path)
        mixture = MixtureParams.from_json_dict(
            json.loads((run_dir / "final_mixture.json").read_text()))
        m = 100_000
        for j in range(4):
            a = mixture_marginal_sample(mixture, j, m, np.random.default_rng(1))
            b = mixture_marginal_sample(mixture, j, m, np.random.default_rng(2))
            assert ks_distance(a, b) < 1.36 * np.sqrt(2.0 / m) * 1.5

    def test_empty_oracle_exit_2(self, tmp_path):
        run_dir, oracle_csv = self.run_and_compare(tmp_path)
        empty = tmp_path / "empty.csv"
        empty.write_text("theta_0,theta_1,theta_2,theta_3\n")
        assert main(["compare", str(run_dir), str(empty), "--quiet"]) == 2

    def test_dimension_mismatch_exit_2(self, tmp_path):
        run_dir, oracle_csv = self.run_and_compare(tmp_path)
        narrow = tmp_path / "narrow.csv"
        narrow.write_text("theta_0,theta_1\n0.1,0.2\n0.3,0.4\n")
        assert main(["compare", str(run_dir), str(narrow), "--quiet"]) == 2


class TestSynthGlmm:
    def test_row_count_and_determinism(self, tmp_path):
        csv_path = tmp_path / "panel.csv"
        cfg = tmp_path / "exp.toml"
        cfg.write_text(GLMM_SYNTH.format(out=tmp_path / "o", csv=csv_path))
        assert main(["synth-glmm", str(cfg), "--quiet"]) == 0
        rows = csv_path.read_text().splitlines()
        assert len(rows) - 1 == 537 * 4
        first = csv_path.read_bytes()
        assert main(["synth-glmm", str(cfg), "--quiet"]) == 0
        assert csv_path.read_bytes() == first

    def test_half_rate_at_zero_effects(self, tmp_path):
        csv_path = tmp_path / "panel.csv"
        cfg = tmp_path / "exp.toml"
        cfg.write_text(GLMM_SYNTH.format(out=tmp_path / "o", csv=csv_path))
        main(["synth-glmm", str(cfg), "--quiet"])
        wheeze = [int(line.split(",")[2]) for line in
                  csv_path.read_text().splitlines()[1:]]
        assert abs(np.mean(wheeze) - 0.5) < 0.02

    def test_requires_synth_block(self, tmp_path):
        text = GLMM_SYNTH.replace("[model.synth]\nn = 537\nT = 4\n"
                                  "true_beta = [0.0, 0.0, 0.0]\ntrue_tau2 = 1e-30\n", "")
        cfg = tmp_path / "exp.toml"
        cfg.write_text(text.format(out=tmp_path / "o", csv=tmp_path / "x.csv"))
        assert main(["synth-glmm", str(cfg), "--quiet"]) == 2
