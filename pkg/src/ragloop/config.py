"""Strict run-configuration loading.

A run config is a YAML file with nested sections; unknown keys are rejected
so a typo cannot silently fall back to a default. Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .loop import DEFAULT_FEEDBACK_TEXT, LoopConfig
from .reasoner import ReasonerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DistillSettings:
    """Distillation knobs from the config file; output path comes from the CLI."""

    max_turns: int = 3
    retrieval_k: int = 3
    on_backend_error: str = "skip_pair"
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    corpus_path: Path | None
    qa_path: Path | None
    index_path: Path | None
    seed: int
    reasoner: ReasonerConfig
    answer_template_path: Path | None
    query_template_path: Path | None
    critic_spec: str
    loop: LoopConfig
    distill: DistillSettings

    def effective_dict(self) -> dict:
        return {
            "corpus_path": str(self.corpus_path) if self.corpus_path else None,
            "qa_path": str(self.qa_path) if self.qa_path else None,
            "index_path": str(self.index_path) if self.index_path else None,
            "seed": self.seed,
            "reasoner": {
                "backend": self.reasoner.backend,
                "endpoint": self.reasoner.endpoint,
                "model_name": self.reasoner.model_name,
                "temperature": self.reasoner.temperature,
                "max_output_tokens": self.reasoner.max_output_tokens,
                "retry_limit": self.reasoner.retry_limit,
                "script_path": self.reasoner.script_path,
                "answer_template_path": (
                    str(self.answer_template_path) if self.answer_template_path else None
                ),
                "query_template_path": (
                    str(self.query_template_path) if self.query_template_path else None
                ),
            },
            "critic": self.critic_spec,
            "loop": {
                "max_turns": self.loop.max_turns,
                "retrieval_k": self.loop.retrieval_k,
                "feedback_enabled": self.loop.feedback_enabled,
                "on_exhaustion": self.loop.on_exhaustion,
                "feedback_text": self.loop.feedback_text,
            },
            "distill": {
                "max_turns": self.distill.max_turns,
                "retrieval_k": self.distill.retrieval_k,
                "on_backend_error": self.distill.on_backend_error,
                "workers": self.distill.workers,
            },
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.effective_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_TOP_KEYS = {"corpus_path", "qa_path", "index_path", "seed", "reasoner", "critic", "loop", "distill"}
_REASONER_KEYS = {
    "backend",
    "endpoint",
    "model_name",
    "temperature",
    "max_output_tokens",
    "retry_limit",
    "script_path",
    "answer_template_path",
    "query_template_path",
}
_LOOP_KEYS = {"max_turns", "retrieval_k", "feedback_enabled", "on_exhaustion", "feedback_text"}
_DISTILL_KEYS = {"max_turns", "retrieval_k", "on_backend_error", "workers"}


def _check_keys(section: dict, allowed: set[str], prefix: str) -> None:
    for key in section:
        if key not in allowed:
            where = f"{prefix}.{key}" if prefix else str(key)
            raise ConfigError(f"unknown config key: {where}")


def _expect(value, types, where: str):
    # bool is an int subclass; reject it where a number is expected
    if isinstance(value, bool) and types in (int, float):
        raise ConfigError(f"invalid value for {where}: {value!r}")
    if not isinstance(value, types):
        raise ConfigError(f"invalid value for {where}: {value!r}")
    return value


def _opt_path(raw: dict, key: str, base: Path, prefix: str = "") -> Path | None:
    value = raw.get(key)
    if value is None:
        return None
    where = f"{prefix}.{key}" if prefix else key
    _expect(value, str, where)
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def parse_critic_spec(spec) -> str:
    """Normalize a critic spec to its string form.

    Accepts "oracle", "native:<path>", "remote:<url>", or a single-key
    mapping form ({oracle: true} / {native: path} / {remote: url}).
    """
    if isinstance(spec, dict):
        chosen = {k: v for k, v in spec.items() if v not in (None, False)}
        if len(chosen) != 1:
            raise ConfigError(
                f"critic spec must name exactly one variant, got {sorted(spec)!r}"
            )
        kind, value = next(iter(chosen.items()))
        if kind == "oracle":
            return "oracle"
        if kind in ("native", "remote"):
            if not isinstance(value, str) or not value:
                raise ConfigError(f"critic.{kind} needs a non-empty string value")
            return f"{kind}:{value}"
        raise ConfigError(f"unknown critic variant: {kind!r}")
    if isinstance(spec, str):
        if spec == "oracle":
            return spec
        for kind in ("native", "remote"):
            if spec.startswith(kind + ":") and len(spec) > len(kind) + 1:
                return spec
        raise ConfigError(f"invalid critic spec: {spec!r}")
    raise ConfigError(f"invalid critic spec: {spec!r}")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    base = path.parent

    _check_keys(raw, _TOP_KEYS, "")
    seed = _expect(raw.get("seed", 0), int, "seed")

    reasoner_raw = raw.get("reasoner", {}) or {}
    _expect(reasoner_raw, dict, "reasoner")
    _check_keys(reasoner_raw, _REASONER_KEYS, "reasoner")
    script_path = _opt_path(reasoner_raw, "script_path", base, "reasoner")
    try:
        reasoner = ReasonerConfig(
            backend=reasoner_raw.get("backend", "scripted"),
            endpoint=reasoner_raw.get("endpoint"),
            model_name=reasoner_raw.get("model_name", "scripted-fixture"),
            temperature=float(reasoner_raw.get("temperature", 0.0)),
            max_output_tokens=int(reasoner_raw.get("max_output_tokens", 256)),
            retry_limit=int(reasoner_raw.get("retry_limit", 2)),
            script_path=str(script_path) if script_path else None,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"reasoner: {exc}") from exc

    loop_raw = raw.get("loop", {}) or {}
    _expect(loop_raw, dict, "loop")
    _check_keys(loop_raw, _LOOP_KEYS, "loop")
    try:
        loop = LoopConfig(
            max_turns=int(loop_raw.get("max_turns", 3)),
            retrieval_k=int(loop_raw.get("retrieval_k", 3)),
            feedback_enabled=bool(loop_raw.get("feedback_enabled", True)),
            on_exhaustion=loop_raw.get("on_exhaustion", "abstain"),
            feedback_text=loop_raw.get("feedback_text", DEFAULT_FEEDBACK_TEXT),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"loop: {exc}") from exc

    distill_raw = raw.get("distill", {}) or {}
    _expect(distill_raw, dict, "distill")
    _check_keys(distill_raw, _DISTILL_KEYS, "distill")
    try:
        distill = DistillSettings(
            max_turns=int(distill_raw.get("max_turns", 3)),
            retrieval_k=int(distill_raw.get("retrieval_k", 3)),
            on_backend_error=distill_raw.get("on_backend_error", "skip_pair"),
            workers=int(distill_raw.get("workers", 1)),
        )
        if distill.max_turns < 1 or distill.retrieval_k < 1 or distill.workers < 1:
            raise ValueError("max_turns, retrieval_k, and workers must all be >= 1")
        if distill.on_backend_error not in ("skip_pair", "abort"):
            raise ValueError(f"unknown error policy: {distill.on_backend_error!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"distill: {exc}") from exc

    config = RunConfig(
        corpus_path=_opt_path(raw, "corpus_path", base),
        qa_path=_opt_path(raw, "qa_path", base),
        index_path=_opt_path(raw, "index_path", base),
        seed=seed,
        reasoner=reasoner,
        answer_template_path=_opt_path(reasoner_raw, "answer_template_path", base, "reasoner"),
        query_template_path=_opt_path(reasoner_raw, "query_template_path", base, "reasoner"),
        critic_spec=parse_critic_spec(raw.get("critic", "oracle")),
        loop=loop,
        distill=distill,
    )

    # Read-side paths must exist up front; index_path is exempt because the
    # index subcommand creates it.
    for label, p in (
        ("corpus_path", config.corpus_path),
        ("qa_path", config.qa_path),
        ("reasoner.script_path", Path(reasoner.script_path) if reasoner.script_path else None),
        ("reasoner.answer_template_path", config.answer_template_path),
        ("reasoner.query_template_path", config.query_template_path),
    ):
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{label} does not exist: {p}")
    return config
