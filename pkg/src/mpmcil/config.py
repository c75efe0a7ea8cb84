"""Experiment configuration: TOML parsing with line-anchored errors, a
canonical serializer, and builders that turn a parsed config into model and
initial-mixture objects.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .controller import AdaptiveConfig, AdaptiveWindow, FixedWindow
from .linalg import cholesky_spd
from .mixture import MixtureParams, single_component
from .models import GkAbcModel, GlmmModel, TractableMixtureTarget, read_glmm_csv, synthesize_glmm_data
from .models.gk import gk_default_prior, gk_simulate
from .rng import StreamKey


class ConfigError(ValueError):
    """A configuration problem, anchored to a file line when possible."""

    def __init__(self, message: str, source: str = "", line: Optional[int] = None):
        loc = f"{source}:{line}: " if line is not None else (f"{source}: " if source else "")
        super().__init__(f"{loc}{message}")
        self.line = line


def _line_of(text: str, key: str) -> Optional[int]:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return i
    return None


@dataclass(frozen=True)
class TractableModelSpec:
    weights: list
    means: list
    covs: Union[str, list]
    noise_cv: float = 0.0
    box_lower: Union[float, list] = -20.0
    box_upper: Union[float, list] = 20.0


@dataclass(frozen=True)
class GkAbcModelSpec:
    n_obs: int
    h: float
    summary_mode: str = "identity"
    true_params: Optional[list] = None
    data_file: Optional[str] = None
    prior: Union[str, dict] = "default"


@dataclass(frozen=True)
class GlmmSynthSpec:
    n: int
    T: int
    true_beta: list
    true_tau2: float
    smoking_rate: float = 0.5


@dataclass(frozen=True)
class GlmmModelSpec:
    inner_draws: int
    data_file: Optional[str] = None
    synth: Optional[GlmmSynthSpec] = None
    dtype: str = "float32"


ModelSpec = Union[TractableModelSpec, GkAbcModelSpec, GlmmModelSpec]


@dataclass(frozen=True)
class OracleSpec:
    target_accepted: int = 10000
    max_proposals: int = 2_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: str
    model: ModelSpec
    adaptive: AdaptiveConfig
    init_mean: Optional[list] = None     # defaults to zeros
    init_cov: Union[str, float, list] = "identity"
    oracle: OracleSpec = OracleSpec()
    marginal_samples: int = 100_000
    defaulted_keys: tuple = field(default=(), compare=False)


_ADAPTIVE_DEFAULTS = {
    "n_add": None, "alpha_min": 0.02, "alpha_add": 0.1, "sigma_add_scale": 1.0,
    "t_max": 200, "d_max": 8, "eps_tot": 0.01, "smooth_window": 5,
}


def _require(table: dict, key: str, source: str, text: str, section: str):
    if key not in table:
        raise ConfigError(f"[{section}] is missing required key {key!r}", source,
                          _line_of(text, section.split(".")[-1]))
    return table[key]


def _check_known(table: dict, known: set, section: str, source: str, text: str):
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", source,
                              _line_of(text, key))


def _parse_model(table: dict, source: str, text: str) -> ModelSpec:
    kind = _require(table, "kind", source, text, "model")
    if kind == "tractable":
        _check_known(table, {"kind", "weights", "means", "covs", "noise_cv",
                             "box_lower", "box_upper"}, "model", source, text)
        return TractableModelSpec(
            weights=_require(table, "weights", source, text, "model"),
            means=_require(table, "means", source, text, "model"),
            covs=table.get("covs", "identity"),
            noise_cv=float(table.get("noise_cv", 0.0)),
            box_lower=table.get("box_lower", -20.0),
            box_upper=table.get("box_upper", 20.0),
        )
    if kind == "gk_abc":
        _check_known(table, {"kind", "n_obs", "h", "summary_mode", "true_params",
                             "data_file", "prior"}, "model", source, text)
        spec = GkAbcModelSpec(
            n_obs=int(_require(table, "n_obs", source, text, "model")),
            h=float(_require(table, "h", source, text, "model")),
            summary_mode=table.get("summary_mode", "identity"),
            true_params=table.get("true_params"),
            data_file=table.get("data_file"),
            prior=table.get("prior", "default"),
        )
        if spec.true_params is None and spec.data_file is None:
            raise ConfigError("[model] needs either true_params or data_file",
                              source, _line_of(text, "kind"))
        if spec.summary_mode not in ("identity", "octile"):
            raise ConfigError(f"unknown summary_mode {spec.summary_mode!r}",
                              source, _line_of(text, "summary_mode"))
        return spec
    if kind == "glmm":
        _check_known(table, {"kind", "inner_draws", "data_file", "synth", "dtype"},
                     "model", source, text)
        synth = None
        if "synth" in table:
            s = table["synth"]
            _check_known(s, {"n", "T", "true_beta", "true_tau2", "smoking_rate"},
                         "model.synth", source, text)
            synth = GlmmSynthSpec(
                n=int(_require(s, "n", source, text, "model.synth")),
                T=int(_require(s, "T", source, text, "model.synth")),
                true_beta=list(_require(s, "true_beta", source, text, "model.synth")),
                true_tau2=float(_require(s, "true_tau2", source, text, "model.synth")),
                smoking_rate=float(s.get("smoking_rate", 0.5)),
            )
        spec = GlmmModelSpec(
            inner_draws=int(_require(table, "inner_draws", source, text, "model")),
            data_file=table.get("data_file"),
            synth=synth,
            dtype=table.get("dtype", "float32"),
        )
        if spec.data_file is None and spec.synth is None:
            raise ConfigError("[model] needs either data_file or a synth block",
                              source, _line_of(text, "kind"))
        if spec.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {spec.dtype!r}",
                              source, _line_of(text, "dtype"))
        return spec
    raise ConfigError(f"unknown model kind {kind!r}", source, _line_of(text, "kind"))


def _parse_adaptive(table: dict, source: str, text: str):
    known = {"n_particles", "n_add", "window_rule", "t_w", "s", "eps0",
             "alpha_min", "alpha_add", "sigma_add_scale", "t_max", "d_max",
             "eps_tot", "smooth_window"}
    _check_known(table, known, "adaptive", source, text)
    rule_kind = table.get("window_rule", "fixed")
    if rule_kind == "fixed":
        rule = FixedWindow(t_w=int(table.get("t_w", 20)))
    elif rule_kind == "adaptive":
        if "s" not in table or "eps0" not in table:
            raise ConfigError("adaptive window rule needs both s and eps0",
                              source, _line_of(text, "window_rule"))
        rule = AdaptiveWindow(s=int(table["s"]), eps0=float(table["eps0"]))
    else:
        raise ConfigError(f"window_rule must be 'fixed' or 'adaptive', got {rule_kind!r}",
                          source, _line_of(text, "window_rule"))
    n_particles = int(_require(table, "n_particles", source, text, "adaptive"))
    kwargs = {"n_particles": n_particles, "window_rule": rule}
    defaulted = []
    for key, default in _ADAPTIVE_DEFAULTS.items():
        if key in table:
            kwargs[key] = int(table[key]) if default is None else type(default)(table[key])
        else:
            defaulted.append(f"adaptive.{key}")
    # store the draw count for the component search explicitly so that a
    # serialized config round-trips to an identical value
    kwargs.setdefault("n_add", n_particles)
    try:
        config = AdaptiveConfig(**kwargs)
    except ValueError as err:
        message = str(err)
        key = message.split()[0]
        raise ConfigError(message, source, _line_of(text, key)) from err
    return config, defaulted


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"TOML syntax error: {err}", source) from err

    _check_known(raw, {"seed", "output_dir", "model", "adaptive", "init",
                       "oracle", "output"}, "<top level>", source, text)
    for key in ("seed", "output_dir", "model", "adaptive"):
        if key not in raw:
            raise ConfigError(f"missing required entry {key!r}", source)
    model = _parse_model(raw["model"], source, text)
    adaptive, defaulted = _parse_adaptive(raw["adaptive"], source, text)

    init = raw.get("init", {})
    _check_known(init, {"mean", "cov"}, "init", source, text)
    oracle_table = raw.get("oracle", {})
    _check_known(oracle_table, {"target_accepted", "max_proposals"}, "oracle",
                 source, text)
    oracle = OracleSpec(
        target_accepted=int(oracle_table.get("target_accepted", 10000)),
        max_proposals=int(oracle_table.get("max_proposals", 2_000_000)),
    )
    output = raw.get("output", {})
    _check_known(output, {"marginal_samples"}, "output", source, text)

    return ExperimentConfig(
        seed=int(raw["seed"]),
        output_dir=str(raw["output_dir"]),
        model=model,
        adaptive=adaptive,
        init_mean=list(init["mean"]) if "mean" in init else None,
        init_cov=init.get("cov", "identity"),
        oracle=oracle,
        marginal_samples=int(output.get("marginal_samples", 100_000)),
        defaulted_keys=tuple(defaulted),
    )


def parse_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical TOML text; parsing it reproduces ``cfg`` exactly."""
    lines = [f"seed = {cfg.seed}", f"output_dir = {_toml_value(cfg.output_dir)}", ""]
    lines.append("[model]")
    m = cfg.model
    if isinstance(m, TractableModelSpec):
        lines.append('kind = "tractable"')
        for key in ("weights", "means", "covs", "noise_cv", "box_lower", "box_upper"):
            lines.append(f"{key} = {_toml_value(getattr(m, key))}")
    elif isinstance(m, GkAbcModelSpec):
        lines.append('kind = "gk_abc"')
        lines.append(f"n_obs = {m.n_obs}")
        lines.append(f"h = {_toml_value(m.h)}")
        lines.append(f"summary_mode = {_toml_value(m.summary_mode)}")
        if m.true_params is not None:
            lines.append(f"true_params = {_toml_value(m.true_params)}")
        if m.data_file is not None:
            lines.append(f"data_file = {_toml_value(m.data_file)}")
        if isinstance(m.prior, str):
            lines.append(f"prior = {_toml_value(m.prior)}")
        else:
            lines.append("[model.prior]")
            for key in ("weights", "means", "covs"):
                lines.append(f"{key} = {_toml_value(m.prior[key])}")
    else:
        lines.append('kind = "glmm"')
        lines.append(f"inner_draws = {m.inner_draws}")
        lines.append(f"dtype = {_toml_value(m.dtype)}")
        if m.data_file is not None:
            lines.append(f"data_file = {_toml_value(m.data_file)}")
        if m.synth is not None:
            lines.append("[model.synth]")
            lines.append(f"n = {m.synth.n}")
            lines.append(f"T = {m.synth.T}")
            lines.append(f"true_beta = {_toml_value(m.synth.true_beta)}")
            lines.append(f"true_tau2 = {_toml_value(m.synth.true_tau2)}")
            lines.append(f"smoking_rate = {_toml_value(m.synth.smoking_rate)}")
    lines.append("")
    lines.append("[adaptive]")
    a = cfg.adaptive
    lines.append(f"n_particles = {a.n_particles}")
    lines.append(f"n_add = {a.effective_n_add}")
    if isinstance(a.window_rule, FixedWindow):
        lines.append('window_rule = "fixed"')
        lines.append(f"t_w = {a.window_rule.t_w}")
    else:
        lines.append('window_rule = "adaptive"')
        lines.append(f"s = {a.window_rule.s}")
        lines.append(f"eps0 = {_toml_value(a.window_rule.eps0)}")
    for key in ("alpha_min", "alpha_add", "sigma_add_scale", "eps_tot"):
        lines.append(f"{key} = {_toml_value(getattr(a, key))}")
    lines.append(f"t_max = {a.t_max}")
    lines.append(f"d_max = {a.d_max}")
    lines.append(f"smooth_window = {a.smooth_window}")
    lines.append("")
    lines.append("[init]")
    if cfg.init_mean is not None:
        lines.append(f"mean = {_toml_value(cfg.init_mean)}")
    lines.append(f"cov = {_toml_value(cfg.init_cov)}")
    lines.append("")
    lines.append("[oracle]")
    lines.append(f"target_accepted = {cfg.oracle.target_accepted}")
    lines.append(f"max_proposals = {cfg.oracle.max_proposals}")
    lines.append("")
    lines.append("[output]")
    lines.append(f"marginal_samples = {cfg.marginal_samples}")
    return "\n".join(lines) + "\n"


def _mixture_from_lists(weights, means, covs) -> MixtureParams:
    means_arr = np.asarray(means, dtype=float)
    p = means_arr.shape[1]
    if covs == "identity" or covs is None:
        spd = cholesky_spd(np.eye(p))
        cov_tuple = tuple(spd for _ in range(means_arr.shape[0]))
    else:
        cov_tuple = tuple(cholesky_spd(np.asarray(c, dtype=float)) for c in covs)
    return MixtureParams(np.asarray(weights, dtype=float), means_arr, cov_tuple)


def build_model(cfg: ExperimentConfig, data_key: StreamKey):
    """Instantiate the target model, generating observations or synthetic
    data from the dedicated data stream where the config asks for it."""
    m = cfg.model
    if isinstance(m, TractableModelSpec):
        mixture = _mixture_from_lists(m.weights, m.means, m.covs)
        return TractableMixtureTarget(mixture, m.noise_cv, m.box_lower, m.box_upper)
    if isinstance(m, GkAbcModelSpec):
        prior = None
        if isinstance(m.prior, dict):
            prior = _mixture_from_lists(m.prior["weights"], m.prior["means"],
                                        m.prior.get("covs", "identity"))
        elif m.prior != "default":
            raise ConfigError(f"prior must be 'default' or a table, got {m.prior!r}")
        if m.data_file is not None:
            y_obs = np.loadtxt(m.data_file)
        else:
            A, B, g, k = (float(v) for v in m.true_params)
            y_obs = gk_simulate(m.n_obs, A, B, g, k, data_key.generator())
        return GkAbcModel(y_obs, m.h, summary_mode=m.summary_mode, prior=prior)
    if isinstance(m, GlmmModelSpec):
        if m.data_file is not None:
            data = read_glmm_csv(m.data_file)
        else:
            s = m.synth
            data = synthesize_glmm_data(s.n, s.T, s.true_beta, s.true_tau2,
                                        data_key.generator(), s.smoking_rate)
        return GlmmModel(data, inner_draws=m.inner_draws, dtype=np.dtype(m.dtype))
    raise ConfigError(f"unhandled model spec {type(m)}")


def build_init(cfg: ExperimentConfig, dim: int) -> MixtureParams:
    """The single-component starting mixture (standard normal by default)."""
    mean = np.zeros(dim) if cfg.init_mean is None else np.asarray(cfg.init_mean, dtype=float)
    if mean.shape != (dim,):
        raise ConfigError(f"init mean has length {mean.shape[0]}, model needs {dim}")
    cov = cfg.init_cov
    if cov == "identity":
        matrix = np.eye(dim)
    elif isinstance(cov, (int, float)):
        matrix = float(cov) * np.eye(dim)
    else:
        matrix = np.asarray(cov, dtype=float)
    return single_component(mean, matrix)
