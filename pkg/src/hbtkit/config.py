"""JSON pipeline configuration.

Example::

    {
      "schema_version": 1,
      "simulation": {"duration_s": 0.01, "seed": 1,
                     "coefficients": {"tau1": 0.83, "tau2": 42.2, "a": 0.16, "r12": 0.3}},
      "detector": {"eta": 1.0, "drf_width_ns": 0.354, "background_snr": 6.0},
      "correlation": {"bin_width_ns": 0.1, "tau_max_ns": 200.0},
      "fit": {"kinds": ["g2"], "snr": 6.0},
      "outputs": {"channel_a": "a.pstm", "channel_b": "b.pstm", "manifest": "manifest.json"}
    }

``simulation`` takes either ``rates`` (r12, r21, r23, r31 in 1/ns) or
``coefficients`` plus a pump rate.  ``detector`` takes either an absolute
``background_rate`` (counts/s per channel) or ``background_snr``, the
signal-to-background ratio per channel.  Relative output paths resolve
against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .correlate import CorrelationConfig
from .emitter import (
    DetectionChain,
    DeviceResponse,
    G2Coefficients,
    TransitionRates,
    mean_count_rate,
    rates_from_coefficients,
)
from .errors import ConfigError, HbtError
from .simulate import DetectorConfig, SimulationPlan

FIT_KINDS = ("g2", "saturation", "polarization", "spectrum")
_OUTPUT_KEYS = ("channel_a", "channel_b", "manifest", "histogram", "report")


@dataclass
class PipelineConfig:
    plan: SimulationPlan
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    fit_kinds: tuple = ("g2",)
    fit_snr: float | None = None
    outputs: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)


def _get(section, key, path, kind=float, default=None, required=True):
    if key not in section:
        if required and default is None:
            raise ConfigError("missing required entry", field=f"{path}.{key}")
        return default
    val = section[key]
    try:
        if kind is float and isinstance(val, bool):
            raise TypeError
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {val!r}", field=f"{path}.{key}") from None


def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError("missing section", field=name)
        return {}
    if not isinstance(sec, dict):
        raise ConfigError("must be an object", field=name)
    return sec


def _rates(sim):
    if "rates" in sim:
        r = sim["rates"]
        vals = [_get(r, k, "simulation.rates") for k in ("r12", "r21", "r23", "r31")]
        try:
            return TransitionRates(*vals)
        except HbtError as exc:
            raise ConfigError(str(exc), field="simulation.rates") from None
    if "coefficients" in sim:
        c = sim["coefficients"]
        path = "simulation.coefficients"
        try:
            coeffs = G2Coefficients(_get(c, "tau1", path), _get(c, "tau2", path), _get(c, "a", path))
            return rates_from_coefficients(coeffs, _get(c, "r12", path))
        except ConfigError:
            raise
        except HbtError as exc:
            raise ConfigError(str(exc), field=path) from None
    raise ConfigError("needs 'rates' or 'coefficients'", field="simulation")


def parse_config(doc, base_dir=".") -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    if isinstance(doc.get("config"), dict) and "simulation" not in doc:
        # a manifest written by `simulate` embeds the config it ran
        doc = doc["config"]
    version = doc.get("schema_version", 1)
    if version != 1:
        raise ConfigError(f"unsupported schema_version {version}", field="schema_version")

    sim = _section(doc, "simulation")
    rates = _rates(sim)
    duration = _get(sim, "duration_s", "simulation")
    seed = _get(sim, "seed", "simulation", kind=int, default=0, required=False)

    det = _section(doc, "detector")
    eta = _get(det, "eta", "detector", default=1.0, required=False)
    w = _get(det, "drf_width_ns", "detector", default=0.0, required=False)
    dead = _get(det, "dead_time_ns", "detector", default=0.0, required=False)
    if "background_rate" in det and "background_snr" in det:
        raise ConfigError("give background_rate or background_snr, not both", field="detector")
    bg = _get(det, "background_rate", "detector", default=0.0, required=False)
    if "background_snr" in det:
        snr = _get(det, "background_snr", "detector")
        if not snr > 0:
            raise ConfigError("must be positive", field="detector.background_snr")
        if eta > 0:
            signal = mean_count_rate(rates, DetectionChain(eta)) / 2
        else:
            signal = 0.0
        bg = signal / snr
    try:
        detector = DetectorConfig(eta=eta, jitter=DeviceResponse(w), background_rate=bg,
                                  dead_time=dead)
        plan = SimulationPlan(rates, detector, duration, seed)
    except HbtError as exc:
        raise ConfigError(str(exc), field="detector/simulation") from None

    corr = _section(doc, "correlation", required=False)
    try:
        correlation = CorrelationConfig(
            _get(corr, "bin_width_ns", "correlation", default=0.1, required=False),
            _get(corr, "tau_max_ns", "correlation", default=100.0, required=False),
        )
    except HbtError as exc:
        raise ConfigError(str(exc), field="correlation") from None

    fit = _section(doc, "fit", required=False)
    kinds = tuple(fit.get("kinds", ["g2"]))
    for k in kinds:
        if k != "g2":
            raise ConfigError(f"pipeline fits only support 'g2', got {k!r}", field="fit.kinds")
    fit_snr = _get(fit, "snr", "fit", required=False)
    if fit_snr is not None and not fit_snr > 0:
        raise ConfigError("must be positive", field="fit.snr")

    out = _section(doc, "outputs")
    outputs = {}
    for key in _OUTPUT_KEYS:
        if key in out:
            outputs[key] = str(Path(base_dir) / out[key])
    for key in ("channel_a", "channel_b", "manifest"):
        if key not in outputs:
            raise ConfigError("missing required entry", field=f"outputs.{key}")
    unknown = set(out) - set(_OUTPUT_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field="outputs")
    paths = [Path(p).resolve() for p in outputs.values()]
    if len(set(paths)) != len(paths):
        raise ConfigError("output paths must be distinct", field="outputs")

    return PipelineConfig(plan, correlation, kinds, fit_snr, outputs, doc)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    return parse_config(doc, base_dir=path.parent)
