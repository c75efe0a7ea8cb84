import numpy as np
import pytest

from mpmcil.config import (
    ConfigError,
    GkAbcModelSpec,
    GlmmModelSpec,
    TractableModelSpec,
    build_init,
    build_model,
    parse_config,
    parse_config_text,
    serialize_config,
)
from mpmcil.controller import AdaptiveWindow, FixedWindow
from mpmcil.models import GkAbcModel, GlmmModel, TractableMixtureTarget
from mpmcil.rng import StreamKey

GK_TEXT = """\
seed = 42
output_dir = "out"

[model]
kind = "gk_abc"
n_obs = 20
h = 12.34
summary_mode = "identity"
true_params = [3.0, 1.0, 2.0, 0.5]

[adaptive]
n_particles = 1000
window_rule = "fixed"
t_w = 20
eps_tot = 0.0
"""

TRACTABLE_TEXT = """\
seed = 7
output_dir = "out"

[model]
kind = "tractable"
weights = [0.5, 0.5]
means = [[-3.0, 0.0], [3.0, 0.0]]
noise_cv = 0.5
box_lower = -20.0
box_upper = 20.0

[adaptive]
n_particles = 500
window_rule = "adaptive"
s = 5
eps0 = 0.1
t_max = 40
d_max = 5

[init]
mean = [0.0, 0.0]
cov = "identity"
"""

GLMM_TEXT = """\
seed = 11
output_dir = "out"

[model]
kind = "glmm"
inner_draws = 50
data_file = "panel.csv"

[model.synth]
n = 30
T = 4
true_beta = [1.0, -0.5, 0.5]
true_tau2 = 1.0

[adaptive]
n_particles = 200
window_rule = "fixed"
t_w = 5
"""


class TestParsing:
    def test_gk_config(self):
        cfg = parse_config_text(GK_TEXT)
        assert cfg.seed == 42
        assert isinstance(cfg.model, GkAbcModelSpec)
        assert cfg.model.h == 12.34
        assert cfg.adaptive.window_rule == FixedWindow(20)
        assert cfg.adaptive.eps_tot == 0.0
        assert "adaptive.alpha_add" in cfg.defaulted_keys
        assert "adaptive.eps_tot" not in cfg.defaulted_keys

    def test_tractable_config(self):
        cfg = parse_config_text(TRACTABLE_TEXT)
        assert isinstance(cfg.model, TractableModelSpec)
        assert cfg.adaptive.window_rule == AdaptiveWindow(5, 0.1)
        assert cfg.init_mean == [0.0, 0.0]

    def test_glmm_config(self):
        cfg = parse_config_text(GLMM_TEXT)
        assert isinstance(cfg.model, GlmmModelSpec)
        assert cfg.model.synth.n == 30

    def test_invalid_adaptive_value_is_line_anchored(self):
        text = GK_TEXT.replace("t_w = 20", "t_w = 20\nalpha_add = 1.5")
        with pytest.raises(ConfigError) as exc:
            parse_config_text(text, source="exp.toml")
        assert "alpha_add" in str(exc.value)
        assert "exp.toml:" in str(exc.value)
        assert exc.value.line is not None

    def test_unknown_key_rejected(self):
        text = GK_TEXT.replace("t_w = 20", "t_w = 20\nbananas = 3")
        with pytest.raises(ConfigError, match="unknown key 'bananas'"):
            parse_config_text(text)

    def test_missing_model_choice(self):
        text = GK_TEXT.replace("true_params = [3.0, 1.0, 2.0, 0.5]\n", "")
        with pytest.raises(ConfigError, match="true_params or data_file"):
            parse_config_text(text)

    def test_syntax_error_reported(self):
        with pytest.raises(ConfigError, match="TOML syntax error"):
            parse_config_text("seed = = 3")

    def test_adaptive_rule_needs_s_and_eps0(self):
        text = TRACTABLE_TEXT.replace("s = 5\n", "")
        with pytest.raises(ConfigError, match="needs both s and eps0"):
            parse_config_text(text)


class TestRoundTrip:
    @pytest.mark.parametrize("text", [GK_TEXT, TRACTABLE_TEXT, GLMM_TEXT])
    def test_parse_serialize_parse_is_identity(self, text):
        cfg = parse_config_text(text)
        again = parse_config_text(serialize_config(cfg))
        assert again == cfg

    def test_serialized_defaults_are_explicit(self):
        cfg = parse_config_text(GK_TEXT)
        out = serialize_config(cfg)
        assert "alpha_add = 0.1" in out
        assert "d_max = 8" in out


class TestBuilders:
    def test_build_tractable(self):
        cfg = parse_config_text(TRACTABLE_TEXT)
        model = build_model(cfg, StreamKey(1))
        assert isinstance(model, TractableMixtureTarget)
        assert model.dim == 2
        init = build_init(cfg, model.dim)
        assert init.n_components == 1
        assert np.array_equal(init.covs[0].entries, np.eye(2))

    def test_build_gk_observations_deterministic(self):
        cfg = parse_config_text(GK_TEXT)
        m1 = build_model(cfg, StreamKey(2))
        m2 = build_model(cfg, StreamKey(2))
        assert isinstance(m1, GkAbcModel)
        assert np.array_equal(m1.y_obs, m2.y_obs)
        assert m1.n_obs == 20

    def test_build_glmm_prefers_data_file(self, tmp_path):
        from mpmcil.models.glmm import synthesize_glmm_data, write_glmm_csv

        data = synthesize_glmm_data(8, 4, [0.0, 0.0, 0.0], 1.0,
                                    np.random.default_rng(3))
        path = tmp_path / "panel.csv"
        write_glmm_csv(data, path)
        text = GLMM_TEXT.replace('data_file = "panel.csv"',
                                 f'data_file = "{path}"')
        model = build_model(parse_config_text(text), StreamKey(4))
        assert isinstance(model, GlmmModel)
        assert model.data.n_individuals == 8

    def test_build_glmm_synth_without_file(self):
        text = GLMM_TEXT.replace('data_file = "panel.csv"\n', "")
        model = build_model(parse_config_text(text), StreamKey(5))
        assert model.data.n_individuals == 30

    def test_init_dimension_checked(self):
        cfg = parse_config_text(TRACTABLE_TEXT)
        with pytest.raises(ConfigError, match="init mean"):
            build_init(cfg, 3)

    def test_parse_config_from_file(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(GK_TEXT)
        cfg = parse_config(path)
        assert cfg.seed == 42
