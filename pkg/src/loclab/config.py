"""Experiment configuration read from an INI file (``key = value`` under per-module sections).

Example::

    [experiment]
    lambdas = 0.15, 0.20, 0.25
    k_centers = 100, 200
    window_width = 10

    [spectrum]
    parity = odd
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, fields
from pathlib import Path

PAPER_LAMBDAS = (0.135, 0.14, 0.145, 0.15, 0.155, 0.16, 0.165, 0.17, 0.175,
                 0.18, 0.19, 0.20, 0.21, 0.22, 0.24)


class ConfigError(ValueError):
    pass


# section each field is read from; fields not listed live in [experiment]
_SECTIONS = {
    "n_collisions": "classical", "rho_samples": "classical", "rho_steps": "classical",
    "rho_threshold": "classical", "transport_ensemble": "classical",
    "transport_max_collisions": "classical",
    "parity": "spectrum", "min_levels": "spectrum", "step_fraction": "spectrum",
    "basis_factor": "spectrum",
    "n_husimi": "localization", "threshold": "localization", "corr_window": "localization",
    "a_max_lambda": "localization",
    "min_spacings": "fit",
    "fig1_lambda": "report", "n_bins": "report",
}


@dataclass(frozen=True)
class ExperimentConfig:
    lambdas: tuple = PAPER_LAMBDAS
    k_centers: tuple = (100.0, 200.0)
    window_width: float = 10.0
    rng_seed: int = 0
    cache_dir: str = "loclab-cache"
    jobs: int = 1
    # classical
    n_collisions: int = 10**8
    rho_samples: int = 20000
    rho_steps: int = 10**4
    rho_threshold: float = 0.5
    transport_ensemble: int = 10**4
    transport_max_collisions: int = 10**4
    # spectrum
    parity: str = "odd"
    min_levels: int = 300
    step_fraction: float = 0.125
    basis_factor: float = 1.0
    # localization
    n_husimi: int = 150
    threshold: float = 0.0
    corr_window: int = 20
    a_max_lambda: float = 0.25
    # fit
    min_spacings: int = 1000
    # report
    fig1_lambda: float = 0.15
    n_bins: int = 40

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.lambdas:
            raise ConfigError("lambdas must not be empty")
        for lam in self.all_lambdas:
            if not 0.0 <= lam < 0.5:
                raise ConfigError(f"lambda {lam} outside [0, 0.5)")
        if not self.k_centers or any(k <= 0 for k in self.k_centers):
            raise ConfigError("k_centers must be positive")
        if self.window_width <= 0 or any(k - self.window_width / 2 <= 0 for k in self.k_centers):
            raise ConfigError("window_width must be positive and smaller than 2 * min(k_centers)")
        if self.parity not in ("odd", "even"):
            raise ConfigError(f"parity must be odd or even, got {self.parity!r}")
        checks = [("n_collisions", 10**4), ("rho_samples", 1000), ("rho_steps", 10),
                  ("transport_ensemble", 10**4), ("transport_max_collisions", 10),
                  ("min_levels", 50), ("n_husimi", 2), ("corr_window", 2), ("jobs", 1),
                  ("n_bins", 2), ("min_spacings", 10)]
        for name, lo in checks:
            if getattr(self, name) < lo:
                raise ConfigError(f"{name} must be at least {lo}")
        if not 0.0 < self.step_fraction <= 0.5:
            raise ConfigError("step_fraction must lie in (0, 0.5]")
        if self.basis_factor < 1.0:
            raise ConfigError("basis_factor below 1 would undercut the minimum basis size")
        if not 0.0 < self.rho_threshold < 1.0:
            raise ConfigError("rho_threshold must lie in (0, 1)")
        if not -1.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [-1, 1]")

    @property
    def all_lambdas(self):
        """The lambda set plus the calibration billiard, sorted."""
        return tuple(sorted(set(self.lambdas) | {self.a_max_lambda}))

    @property
    def windows(self):
        h = 0.5 * self.window_width
        return tuple((k - h, k + h) for k in self.k_centers)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for f in fields(self):
            sec = _SECTIONS.get(f.name, "experiment")
            if not cp.has_section(sec):
                cp.add_section(sec)
            v = getattr(self, f.name)
            cp.set(sec, f.name, ", ".join(repr(x) for x in v) if isinstance(v, tuple) else str(v))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _convert(f, raw):
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if kind == "tuple":
            return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
        if kind == "int":
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{f.name}: cannot parse {raw!r}") from exc


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read an INI file (missing keys keep their defaults) and apply overrides."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cp = configparser.ConfigParser()
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        known = {f.name: f for f in fields(ExperimentConfig)}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in section [{sec}]")
                if _SECTIONS.get(key, "experiment") != sec:
                    raise ConfigError(f"key {key!r} belongs in section [{_SECTIONS.get(key, 'experiment')}]")
                values[key] = _convert(known[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
