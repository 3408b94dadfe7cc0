"""Model configuration files: a flat key-value format with sections.

Sections: [model], [delay], [kernel], [history], [solve], [lipschitz].
Unknown sections or keys are fatal (silent typos corrupt results);
missing optional keys take the documented defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DelaySpec,
    GammaKernel,
    InitialHistory,
    LipschitzData,
    LogisticMemoryModel,
    ModelSpec,
    TabulatedKernel,
    validate,
)
from .solver import SolveConfig


class ConfigError(ValueError):
    """Config file problem, with the offending line where known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationFailure(ValueError):
    """Model assumptions failed validation; carries the report."""

    def __init__(self, report):
        self.report = report
        names = ", ".join(c.name for c in report.failures())
        super().__init__(f"model validation failed: {names}")


_KNOWN_KEYS = {
    "model": {"r", "K_c", "alpha", "dimension"},
    "delay": {"form", "tau0", "c0", "c1", "tau_min", "tau_max", "L_tau"},
    "kernel": {"variant", "order", "rate", "horizon", "tail_tol", "samples"},
    "history": {"form", "value", "coeffs", "amplitude", "frequency", "phase",
                "offset", "samples", "extension"},
    "solve": {"h", "t_end", "memory_mode", "blowup_threshold"},
    "lipschitz": {"L_F", "L_x", "R"},
}


def _read_sections(path):
    sections = {}
    section = None
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in _KNOWN_KEYS:
                    raise ConfigError(f"unknown section [{section}]", lineno)
                sections.setdefault(section, {})
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
            if section is None:
                raise ConfigError("key outside any [section]", lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]", lineno)
            if key in sections[section]:
                raise ConfigError(f"duplicate key {key!r}", lineno)
            sections[section][key] = value
    return sections


def apply_overrides(sections, overrides):
    """Apply repeatable --set section.key=value pairs (keys must exist)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        if section not in _KNOWN_KEYS or key not in _KNOWN_KEYS[section]:
            raise ConfigError(f"override references unknown key {dotted!r}")
        sections.setdefault(section, {})[key] = value.strip()
    return sections


def _get_float(sec, key, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: {sec[key]!r} is not a number") from None


def _parse_pairs(text):
    pts = []
    for chunk in text.replace(";", " ").split():
        if ":" not in chunk:
            raise ConfigError(f"sample {chunk!r} must be 's:value'")
        a, b = chunk.split(":", 1)
        pts.append((float(a), float(b)))
    pts.sort()
    return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


@dataclass
class ParsedConfig:
    model: ModelSpec
    history: InitialHistory
    solve: SolveConfig
    report: object  # ValidationReport


def parse_config(path, overrides=(), check: bool = True,
                 seed: int = 0) -> ParsedConfig:
    """Read a model file into specs, optionally validating assumptions.

    Raises ConfigError for syntax or key problems and ValidationFailure
    when the assumption checks fail (skipped with check=False, which
    still attaches the report).
    """
    sections = apply_overrides(_read_sections(path), overrides)

    msec = sections.get("model", {})
    r = _get_float(msec, "r")
    K_c = _get_float(msec, "K_c")
    alpha = _get_float(msec, "alpha")
    dimension = int(_get_float(msec, "dimension", 1))
    if dimension != 1:
        raise ConfigError("config files support the scalar benchmark only")
    rhs = LogisticMemoryModel(r=r, K_c=K_c, alpha=alpha)

    dsec = sections.get("delay", {})
    form = dsec.get("form", "constant")
    if form == "constant":
        tau0 = _get_float(dsec, "tau0", 1.0)
        tau_min = _get_float(dsec, "tau_min", tau0)
        tau_max = _get_float(dsec, "tau_max", tau0)
        L_tau = _get_float(dsec, "L_tau", 0.0)
        delay = DelaySpec(tau_min=tau_min, tau_max=tau_max, L_tau=L_tau,
                          form="constant", tau0=tau0)
    elif form == "affine":
        tau_min = _get_float(dsec, "tau_min")
        tau_max = _get_float(dsec, "tau_max")
        c0 = _get_float(dsec, "c0")
        c1 = _get_float(dsec, "c1")
        L_tau = _get_float(dsec, "L_tau", abs(c1))
        delay = DelaySpec(tau_min=tau_min, tau_max=tau_max, L_tau=L_tau,
                          form="affine", c0=c0, c1=c1)
    else:
        raise ConfigError(f"unknown delay form {form!r}")

    ksec = sections.get("kernel", {})
    variant = ksec.get("variant", "gamma")
    if variant == "gamma":
        horizon = _get_float(ksec, "horizon", math.nan)
        kernel = GammaKernel(
            order=int(_get_float(ksec, "order", 2)),
            rate=_get_float(ksec, "rate", 1.0),
            tail_tol=_get_float(ksec, "tail_tol", 1e-10),
            horizon=None if math.isnan(horizon) else horizon)
    elif variant == "tabulated":
        if "samples" not in ksec:
            raise ConfigError("tabulated kernel needs 'samples'")
        s, v = _parse_pairs(ksec["samples"])
        kernel = TabulatedKernel(s=s, values=v)
    else:
        raise ConfigError(f"unknown kernel variant {variant!r}")

    lsec = sections.get("lipschitz")
    lipschitz = None
    if lsec:
        R = _get_float(lsec, "R", math.nan)
        lipschitz = LipschitzData(L_F=_get_float(lsec, "L_F"),
                                  L_x=_get_float(lsec, "L_x", 0.0),
                                  R=None if math.isnan(R) else R)

    model = ModelSpec(dimension=dimension, rhs=rhs, delay=delay,
                      kernel=kernel, lipschitz=lipschitz)

    hsec = sections.get("history", {})
    hform = hsec.get("form", "constant")
    extension = hsec.get("extension", "constant")
    if extension not in ("constant", "analytic"):
        raise ConfigError(f"unknown history extension {extension!r}")
    if hform == "constant":
        history = InitialHistory.constant(_get_float(hsec, "value", 0.5),
                                          delay.tau_max)
    elif hform == "polynomial":
        coeffs = [float(c) for c in hsec.get("coeffs", "0").split(",")]
        history = InitialHistory.polynomial(coeffs, delay.tau_max,
                                            extension=extension)
    elif hform == "sinusoid":
        history = InitialHistory.sinusoid(
            _get_float(hsec, "amplitude", 1.0),
            _get_float(hsec, "frequency", 1.0),
            _get_float(hsec, "phase", 0.0),
            _get_float(hsec, "offset", 0.0),
            delay.tau_max, extension=extension)
    elif hform == "tabulated":
        if "samples" not in hsec:
            raise ConfigError("tabulated history needs 'samples'")
        t, v = _parse_pairs(hsec["samples"])
        history = InitialHistory.tabulated(t, v, delay.tau_max)
    else:
        raise ConfigError(f"unknown history form {hform!r}")

    ssec = sections.get("solve", {})
    default_h = min(1e-3, delay.tau_min / 2.0) if delay.tau_min > 0 else 1e-3
    memory_default = "chain" if isinstance(kernel, GammaKernel) else "quadrature"
    solve = SolveConfig(
        h=_get_float(ssec, "h", default_h),
        t_end=_get_float(ssec, "t_end", 50.0),
        memory_mode=ssec.get("memory_mode", memory_default),
        blowup_threshold=_get_float(ssec, "blowup_threshold", 1e8),
    )

    report = validate(model, history, seed=seed)
    if check and not report.passed:
        raise ValidationFailure(report)
    return ParsedConfig(model=model, history=history, solve=solve, report=report)
