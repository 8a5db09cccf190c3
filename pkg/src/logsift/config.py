"""Configuration dataclasses and the YAML run-configuration file.

SynthesisConfig holds every knob of the synthesis loop with defaults that
match the reference evaluation setup.  RunConfig wraps it together with
corpus handling, backend selection and the seed, and loads from a strict
key-value YAML document: unknown keys are rejected so typos fail fast.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration values."""


@dataclass
class SynthesisConfig:
    # Contrastive group width: windows sampled per side each epoch.
    w: int = 5
    # Tokens kept per line when building window features.
    k_line: int = 2
    # Window feature size as a fraction of the mean window length.
    alpha: float = 0.5
    # Cluster merge relaxation rounds.
    m: int = 4
    # Anchor similarity floor for same-side sampling, per phase.
    theta_anc_nor: float = 0.2
    theta_anc_abn: float = 0.2
    # Rule database caps per phase.
    d_nor: int = 200
    d_abn: int = 200
    # Stop a phase once this fraction of its windows is covered.
    coverage_stop_nor: float = 0.99
    coverage_stop_abn: float = 0.995
    # Independent synthesis rollouts per epoch.
    rollouts: int = 2
    # Generalizability floor: fraction of remaining same-kind windows a
    # candidate rule must cover.
    g_nor: float = 0.8
    g_abn: float = 0.8
    # Agent repair/refine budgets per rollout.
    max_repair_iters: int = 3
    max_refine_iters: int = 1
    # Hard ceiling on epochs per phase, against livelock.
    epoch_budget: int = 500
    # Candidate pairs sampled per clustering pass = factor * #clusters;
    # at or below the exhaustive limit all pairs are scanned instead.
    hac_pair_budget_factor: int = 4
    hac_exhaustive_limit: int = 50
    # Wall-time budget per window evaluation during local testing.
    eval_budget_s: float = 1.0
    # Consecutive epochs of pure transport failure before aborting.
    max_backend_failures: int = 3

    def __post_init__(self) -> None:
        positive_ints = (
            "w",
            "k_line",
            "m",
            "d_nor",
            "d_abn",
            "rollouts",
            "epoch_budget",
            "hac_pair_budget_factor",
            "max_backend_failures",
        )
        for name in positive_ints:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("max_repair_iters", "max_refine_iters", "hac_exhaustive_limit"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
        unit_interval = (
            "theta_anc_nor",
            "theta_anc_abn",
            "coverage_stop_nor",
            "coverage_stop_abn",
            "g_nor",
            "g_abn",
        )
        for name in unit_interval:
            value = getattr(self, name)
            if not 0.0 < float(value) <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {value!r}")
        if not 0.0 < float(self.alpha) <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if float(self.eval_budget_s) <= 0:
            raise ConfigError(f"eval_budget_s must be positive, got {self.eval_budget_s!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HttpBackendConfig:
    """Connection settings for an OpenAI-style chat-completions endpoint.

    The API key is read from the environment variable named by auth_env and
    never appears in configuration files.
    """

    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "gpt-4o"
    auth_env: str = "LOGSIFT_API_KEY"
    timeout_s: float = 120.0
    max_retries: int = 3
    backoff_base_s: float = 0.5
    supports_temperature: bool = True

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.timeout_s <= 0:
            raise ConfigError("timeout_s must be positive")


@dataclass
class CorpusConfig:
    label_format: str = "bgl_dash"
    window_size: int = 20
    stride: int | None = None  # defaults to window_size (tumbling)
    split_ratio: tuple[int, int, int] = (6, 1, 3)

    def __post_init__(self) -> None:
        if self.label_format not in ("bgl_dash", "two_column"):
            raise ConfigError(f"unknown label format {self.label_format!r}")
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be >= 1")
        ratio = tuple(self.split_ratio)
        if len(ratio) != 3 or any(not isinstance(r, int) or r < 0 for r in ratio):
            raise ConfigError(f"split_ratio must be three non-negative ints, got {ratio!r}")
        if sum(ratio) == 0:
            raise ConfigError("split_ratio must not sum to zero")
        self.split_ratio = ratio


@dataclass
class RunConfig:
    """Everything a run needs apart from file paths given on the command line."""

    backend: str = "mock"
    seed: int = 0
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    http: HttpBackendConfig = field(default_factory=HttpBackendConfig)

    def __post_init__(self) -> None:
        if self.backend not in ("mock", "http"):
            raise ConfigError(f"backend must be 'mock' or 'http', got {self.backend!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")


def _build_section(cls, data: Mapping[str, Any], section: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"section {section!r} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {section!r}: {', '.join(sorted(unknown))}"
        )
    kwargs = dict(data)
    if cls is CorpusConfig and isinstance(kwargs.get("split_ratio"), list):
        kwargs["split_ratio"] = tuple(kwargs["split_ratio"])
    return cls(**kwargs)


def load_run_config(path: str | Path | None) -> RunConfig:
    """Load and validate a YAML run configuration; None yields defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}")
    if data is None:
        return RunConfig()
    if not isinstance(data, Mapping):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    known = {"backend", "seed", "corpus", "synthesis", "http"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    return RunConfig(
        backend=data.get("backend", "mock"),
        seed=data.get("seed", 0),
        corpus=_build_section(CorpusConfig, data.get("corpus", {}), "corpus"),
        synthesis=_build_section(SynthesisConfig, data.get("synthesis", {}), "synthesis"),
        http=_build_section(HttpBackendConfig, data.get("http", {}), "http"),
    )


# A ready-to-edit configuration document with the shipped defaults.
SAMPLE_CONFIG = """\
# logsift run configuration.  Every key is optional; the values below are
# the shipped defaults, matching the reference evaluation setup.

backend: mock            # mock | http
seed: 0

corpus:
  label_format: bgl_dash # bgl_dash | two_column
  window_size: 20        # lines per window
  stride: null           # null = tumbling windows (stride = window_size)
  split_ratio: [6, 1, 3] # chronological train : validation : test

synthesis:
  w: 5                   # windows sampled per side of a contrastive group
  k_line: 2              # top tokens kept per line
  alpha: 0.5             # window feature size = int(alpha * mean lines/window)
  m: 4                   # cluster merge relaxation rounds
  theta_anc_nor: 0.2     # anchor similarity floor, normal phase
  theta_anc_abn: 0.2     # anchor similarity floor, abnormal phase
  d_nor: 200             # normal rule cap
  d_abn: 200             # abnormal rule cap
  coverage_stop_nor: 0.99
  coverage_stop_abn: 0.995
  rollouts: 2            # independent rollouts per epoch
  g_nor: 0.8             # generalizability floor, normal rules
  g_abn: 0.8             # generalizability floor, abnormal rules
  max_repair_iters: 3
  max_refine_iters: 1
  epoch_budget: 500      # hard ceiling on epochs per phase

http:
  endpoint: http://localhost:8000/v1/chat/completions
  model: gpt-4o
  auth_env: LOGSIFT_API_KEY   # API key env var; keys never live in files
  timeout_s: 120.0
  max_retries: 3
"""
