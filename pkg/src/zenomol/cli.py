"""Experiment runner: config parsing, figure presets, comparisons, analytic curves.

Config files are flat ``key = value`` lines with ``#`` comments.  Times
carry an explicit unit suffix, ``s`` or ``TR`` (Rabi periods); collision
rates given as ``tau_inv`` default to units of ``1/TR`` and accept ``/s``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic
from .lindblad import GeneratorSpec, ReducedState, integrate_full, integrate_reduced
from .model import Case, Convention, ModelParams, ParameterError, build_level_scheme, scaling_parameter, validate_timescales
from .series import SeriesResult
from .trajectory import EnsembleSpec, run_ensemble

DEFAULT_PARTICLES = 5000
DEFAULT_SEED = 20240601
DEFAULT_SAMPLES = 121
ENGINES = ("monte-carlo", "reduced-master", "full-master")
ANALYTIC_CURVES = (
    "case-a", "case-a-stretched", "case-b", "case-b-tail", "case-c",
    "pendulum", "p1", "mu", "sigma", "short-time",
)
OBSERVABLES = ("p_left", "p_right", "mu_left", "sigma_left", "coherence")


class ConfigError(ValueError):
    """Config problem with a line/field diagnostic."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None) -> None:
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        prefix = (", ".join(where) + ": ") if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class GridMismatchError(ValueError):
    """Series live on different grids and resampling was not enabled."""


# --------------------------------------------------------------------------
# configuration


@dataclass
class CurveJob:
    """One curve of an experiment: an engine applied to a parameter set."""

    label: str
    engine: str
    params: ModelParams
    observable: str = "p_left"
    x: float | None = None
    shift: str = "printed"
    variant: str = "exact-ansatz"


@dataclass
class ExperimentConfig:
    params: ModelParams
    engine: str
    particles: int = DEFAULT_PARTICLES
    t_max: float = 3.0
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED
    output: str | None = None
    preset: str | None = None
    observable: str = "p_left"
    convention: Convention = Convention.SHIFTED_GROUND
    curves: list[CurveJob] = field(default_factory=list)

    @property
    def t_grid_tr(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.samples)

    def jobs(self) -> list[CurveJob]:
        if self.curves:
            return self.curves
        return [CurveJob(label=self.engine.replace(":", "-"), engine=self.engine, params=self.params,
                         observable=self.observable)]


_PARAM_KEYS = ("n_left", "n_right", "omega_left", "omega_right", "rabi", "alpha", "alpha_left", "alpha_right",
               "tau", "tau_inv")
_RUN_KEYS = ("engine", "particles", "t_max", "samples", "seed", "output", "preset", "observable", "convention",
             "x", "shift", "variant")
KNOWN_KEYS = _PARAM_KEYS + _RUN_KEYS
#: keys that may accompany a preset without breaking its parameter sweep
PRESET_OVERRIDES = ("engine", "particles", "t_max", "samples", "seed", "output")


def _split_unit(raw: str) -> tuple[float, str]:
    parts = raw.replace("/", " /").split()
    if not parts:
        raise ValueError("empty value")
    value = float(parts[0])
    unit = "".join(parts[1:])
    return value, unit


def _iter_pairs(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        pieces = [p.strip() for p in body.split(",")] if body.count("=") > 1 else [body]
        for piece in pieces:
            if "=" not in piece:
                raise ConfigError(f"expected 'key = value', got {piece!r}", lineno)
            key, value = (s.strip() for s in piece.split("=", 1))
            if not key or not value:
                raise ConfigError(f"expected 'key = value', got {piece!r}", lineno)
            yield lineno, key, value


def _number(value: str, lineno: int, key: str, kind=float):
    try:
        number = kind(value)
    except ValueError:
        raise ConfigError(f"cannot parse {value!r} as {kind.__name__}", lineno, key) from None
    if isinstance(number, float) and not math.isfinite(number):
        raise ConfigError(f"non-physical value {value!r}: must be finite", lineno, key)
    return number


def parse_config(text: str) -> ExperimentConfig:
    """Parse a key-value config into a fully resolved :class:`ExperimentConfig`."""
    entries: dict[str, tuple[int, str]] = {}
    for lineno, key, value in _iter_pairs(text):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key (known: {', '.join(KNOWN_KEYS)})", lineno, key)
        if key in entries:
            raise ConfigError(f"duplicate key (first on line {entries[key][0]})", lineno, key)
        entries[key] = (lineno, value)

    if "preset" in entries:
        lineno, name = entries["preset"]
        try:
            config = resolve_preset(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0]), lineno, "preset") from None
        for key, (line, _) in entries.items():
            if key != "preset" and key not in PRESET_OVERRIDES:
                raise ConfigError(f"cannot override the parameter sweep of preset {name!r}", line, key)
        _apply_run_keys(config, entries)
        return config

    params = _parse_params(entries)
    if "engine" not in entries:
        raise ConfigError("missing required key", None, "engine")
    if "t_max" not in entries:
        raise ConfigError("missing required key", None, "t_max")
    config = ExperimentConfig(params=params, engine="reduced-master")
    _apply_run_keys(config, entries)
    if config.engine.startswith("analytic:"):
        job = config.jobs()[0]
        if "x" in entries:
            job.x = _number(entries["x"][1], entries["x"][0], "x")
            if not job.x > 0:
                raise ConfigError("non-physical value: x must be > 0", entries["x"][0], "x")
        if "shift" in entries:
            job.shift = _choice(entries["shift"], "shift", [s.value for s in analytic.Shift])
        if "variant" in entries:
            job.variant = _choice(entries["variant"], "variant", ["exact-ansatz", "stretched"])
        config.curves = [job]
    return config


def _choice(entry: tuple[int, str], key: str, options) -> str:
    lineno, value = entry
    if value not in options:
        raise ConfigError(f"{value!r} is not one of {', '.join(options)}", lineno, key)
    return value


def _apply_run_keys(config: ExperimentConfig, entries: dict[str, tuple[int, str]]) -> None:
    if "engine" in entries:
        lineno, engine = entries["engine"]
        if engine not in ENGINES and not (
            engine.startswith("analytic:") and engine.split(":", 1)[1] in ANALYTIC_CURVES
        ):
            options = ", ".join(ENGINES + tuple(f"analytic:{c}" for c in ANALYTIC_CURVES))
            raise ConfigError(f"unknown engine {engine!r} (expected one of {options})", lineno, "engine")
        config.engine = engine
        for job in config.curves:
            if not job.engine.startswith("analytic:"):
                job.engine = engine
    if "particles" in entries:
        lineno, value = entries["particles"]
        config.particles = _number(value, lineno, "particles", int)
        if config.particles < 1:
            raise ConfigError("non-physical value: particles must be >= 1", lineno, "particles")
    if "samples" in entries:
        lineno, value = entries["samples"]
        config.samples = _number(value, lineno, "samples", int)
        if config.samples < 2:
            raise ConfigError("samples must be >= 2", lineno, "samples")
    if "seed" in entries:
        lineno, value = entries["seed"]
        config.seed = _number(value, lineno, "seed", int)
        if config.seed < 0:
            raise ConfigError("seed must be >= 0", lineno, "seed")
    if "output" in entries:
        config.output = entries["output"][1]
    if "observable" in entries:
        config.observable = _choice(entries["observable"], "observable", OBSERVABLES)
        for job in config.curves:
            job.observable = config.observable
    if "convention" in entries:
        config.convention = Convention(_choice(entries["convention"], "convention", [c.value for c in Convention]))
    if "t_max" in entries:
        lineno, raw = entries["t_max"]
        config.t_max = _time_in_tr(raw, lineno, "t_max", config.params)
        if not config.t_max > 0:
            raise ConfigError("non-physical value: t_max must be > 0", lineno, "t_max")


def _time_in_tr(raw: str, lineno: int, key: str, params: ModelParams) -> float:
    try:
        value, unit = _split_unit(raw)
    except ValueError:
        raise ConfigError(f"cannot parse time {raw!r}", lineno, key) from None
    if unit == "TR":
        return value
    if unit == "s":
        return value / params.rabi_period
    raise ConfigError(f"time needs an explicit unit suffix 's' or 'TR', got {raw!r}", lineno, key)


def _parse_params(entries: dict[str, tuple[int, str]]) -> ModelParams:
    kwargs: dict = {}
    for key in ("n_left", "n_right"):
        if key in entries:
            lineno, value = entries[key]
            kwargs[key] = _number(value, lineno, key, int)
            if kwargs[key] < 1:
                raise ConfigError("non-physical value: level count must be >= 1", lineno, key)
    for key in ("omega_left", "omega_right", "rabi", "alpha_left", "alpha_right"):
        if key in entries:
            lineno, value = entries[key]
            kwargs[key] = _number(value, lineno, key)
    if "alpha" in entries:
        lineno, value = entries["alpha"]
        if "alpha_left" in entries or "alpha_right" in entries:
            raise ConfigError("give either 'alpha' or 'alpha_left'/'alpha_right'", lineno, "alpha")
        kwargs["alpha_left"] = kwargs["alpha_right"] = _number(value, lineno, "alpha")
    for key in ("alpha_left", "alpha_right", "omega_left", "omega_right"):
        if key in kwargs and kwargs[key] < 0:
            raise ConfigError(f"non-physical value {kwargs[key]!r}: must be >= 0", entries.get(key, entries.get("alpha"))[0], key)
    if "rabi" in kwargs and not kwargs["rabi"] > 0:
        raise ConfigError(f"non-physical value {kwargs['rabi']!r}: Rabi frequency must be > 0", entries["rabi"][0], "rabi")
    rabi = kwargs.get("rabi", ModelParams.rabi)
    t_r = 2.0 * math.pi / rabi
    if "tau" in entries and "tau_inv" in entries:
        raise ConfigError("give either 'tau' or 'tau_inv'", entries["tau_inv"][0], "tau_inv")
    if "tau" in entries:
        lineno, raw = entries["tau"]
        try:
            value, unit = _split_unit(raw)
        except ValueError:
            raise ConfigError(f"cannot parse time {raw!r}", lineno, "tau") from None
        if unit not in ("s", "TR"):
            raise ConfigError(f"time needs an explicit unit suffix 's' or 'TR', got {raw!r}", lineno, "tau")
        if not value > 0 or not math.isfinite(value):
            raise ConfigError(f"non-physical value {raw!r}: tau must be > 0", lineno, "tau")
        kwargs["tau"] = value if unit == "s" else value * t_r
    if "tau_inv" in entries:
        lineno, raw = entries["tau_inv"]
        try:
            value, unit = _split_unit(raw)
        except ValueError:
            raise ConfigError(f"cannot parse rate {raw!r}", lineno, "tau_inv") from None
        if unit not in ("", "/TR", "/s"):
            raise ConfigError(f"rate unit must be '/TR' or '/s', got {raw!r}", lineno, "tau_inv")
        if not value > 0 or not math.isfinite(value):
            raise ConfigError(f"non-physical value {raw!r}: collision rate must be > 0", lineno, "tau_inv")
        kwargs["tau"] = 1.0 / value if unit == "/s" else t_r / value
    try:
        return ModelParams(**kwargs)
    except ParameterError as exc:
        raise ConfigError(f"non-physical value: {exc}") from None


# --------------------------------------------------------------------------
# presets


def _reference_params(tau_inv_tr: float, alpha_left: float, alpha_right: float) -> ModelParams:
    return ModelParams.from_rabi_units(tau_inv_tr=tau_inv_tr, alpha_left=alpha_left, alpha_right=alpha_right)


def _fmt(value: float) -> str:
    return f"{value:g}"


FIG8_RATES = tuple(float(r) for r in np.linspace(300.0, 800.0, 5))
FIG9_ALPHAS = (0.2, 0.25, 0.4)
FIG10_BUNDLES = {
    32.0: ((0.2, 800.0), (0.25, 512.0), (0.4, 200.0)),
    48.0: ((0.2, 1200.0), (0.25, 768.0), (0.4, 300.0)),
    56.0: ((0.2, 1400.0), (0.25, 896.0), (0.4, 350.0)),
}
SCALING_X = (32.0, 48.0, 56.0)
DESK_PARAMS = ModelParams(n_left=4, n_right=4, omega_left=1040.0, omega_right=776.0, rabi=2.0 * math.pi,
                          alpha_left=0.5, alpha_right=0.5, tau=1.0 / 8.0)
PRESETS = ("fig2", "fig3", "fig4-5", "fig6", "fig7", "fig8", "fig9", "fig10", "appendix-desk")


def resolve_preset(name: str) -> ExperimentConfig:
    """Complete configuration for a named figure preset."""
    mc = "monte-carlo"
    base = ModelParams()
    if name == "fig2":
        curves = [CurveJob(f"tau_inv={_fmt(r)}", mc, _reference_params(r, 0.2, 0.0)) for r in (500.0, 1000.0, 1500.0)]
        return ExperimentConfig(base, mc, t_max=2.0, preset=name, curves=curves)
    if name == "fig3":
        curves = [CurveJob(f"tau_inv={_fmt(r)}", mc, _reference_params(r, 0.0, 0.2)) for r in (500.0, 1000.0, 1500.0)]
        return ExperimentConfig(base, mc, t_max=2.0, preset=name, curves=curves)
    if name == "fig4-5":
        curves = []
        for x in SCALING_X:
            p = _reference_params(x / 0.04, 0.2, 0.2)
            curves.append(CurveJob(f"x={_fmt(x)}", mc, p))
        curves.append(CurveJob("x=48-stretched", "analytic:case-a-stretched", _reference_params(1200.0, 0.2, 0.2),
                               x=48.0))
        return ExperimentConfig(base, mc, t_max=3.0, preset=name, curves=curves)
    if name in ("fig6", "fig7"):
        obs = "mu_left" if name == "fig6" else "sigma_left"
        curves = [CurveJob(f"x={_fmt(x)}", mc, _reference_params(x / 0.04, 0.2, 0.2), observable=obs) for x in SCALING_X]
        return ExperimentConfig(base, mc, t_max=1.0, preset=name, observable=obs, curves=curves)
    if name == "fig8":
        curves = [CurveJob(f"tau_inv={_fmt(r)}", mc, _reference_params(r, 0.2, 0.2)) for r in FIG8_RATES]
        return ExperimentConfig(_reference_params(800.0, 0.2, 0.2), mc, t_max=3.0, preset=name, curves=curves)
    if name == "fig9":
        curves = [CurveJob(f"alpha={_fmt(a)}", mc, _reference_params(800.0, a, a)) for a in FIG9_ALPHAS]
        return ExperimentConfig(base, mc, t_max=3.0, preset=name, curves=curves)
    if name == "fig10":
        curves = []
        for x, bundle in FIG10_BUNDLES.items():
            for alpha, rate in bundle:
                curves.append(CurveJob(f"x={_fmt(x)}-alpha={_fmt(alpha)}", mc, _reference_params(rate, alpha, alpha)))
        return ExperimentConfig(base, mc, t_max=3.0, preset=name, curves=curves)
    if name == "appendix-desk":
        curves = [
            CurveJob("full", "full-master", DESK_PARAMS),
            CurveJob("reduced", "reduced-master", DESK_PARAMS),
        ]
        return ExperimentConfig(DESK_PARAMS, "full-master", t_max=2.0, samples=201, preset=name, curves=curves)
    raise KeyError(f"unknown preset {name!r} (known: {', '.join(PRESETS)})")


# --------------------------------------------------------------------------
# execution


def analytic_curve(name: str, t_tr: np.ndarray, params: ModelParams, *, x: float | None = None,
                   shift: str = "printed", variant: str = "exact-ansatz") -> SeriesResult:
    """Evaluate a named closed-form curve on a grid in Rabi periods."""
    t_tr = np.asarray(t_tr, dtype=float)
    one_sided = params.alpha_left == 0 or params.alpha_right == 0
    if x is None:
        case = Case.SYMMETRIC
        if one_sided and params.alpha_left > 0:
            case = Case.LEFT_ONLY
        elif one_sided and params.alpha_right > 0:
            case = Case.RIGHT_ONLY
        x = scaling_parameter(params, case)
    meta = {"x": x}
    mu = sigma = None
    if name == "case-a":
        values = analytic.case_a_pl(t_tr, x, variant)
    elif name == "case-a-stretched":
        values = analytic.case_a_pl(t_tr, x, "stretched")
    elif name == "case-b":
        values = analytic.case_b_pl(t_tr, x, shift)
    elif name == "case-b-tail":
        with np.errstate(divide="ignore"):
            values = analytic.case_b_tail(t_tr, x)
    elif name == "case-c":
        values = analytic.case_c_pl(t_tr, x, shift)
    elif name == "pendulum":
        values = analytic.pendulum_solve(analytic.CaseSpec.from_params(params), t_tr)
    elif name in ("p1", "mu", "sigma"):
        dt = x * t_tr
        if name == "p1":
            values = np.array([analytic.p1_exact(v) for v in dt])
        else:
            mom = np.array([analytic.moments(v) for v in dt])
            mu, sigma = mom[:, 0], np.sqrt(mom[:, 1])
            values = mu if name == "mu" else sigma
    elif name == "short-time":
        values = analytic.short_time_pl(t_tr * params.rabi_period, params.rabi)
    else:
        raise KeyError(f"unknown analytic curve {name!r} (known: {', '.join(ANALYTIC_CURVES)})")
    return SeriesResult(t_tr=t_tr, p_left=np.asarray(values, dtype=float), mu_left=mu, sigma_left=sigma,
                        label=f"analytic:{name}", meta=meta)


def compute_series(job: CurveJob, t_grid_tr: np.ndarray, *, particles: int, seed: int,
                   convention: Convention = Convention.SHIFTED_GROUND) -> SeriesResult:
    params = job.params
    t_s = np.asarray(t_grid_tr, dtype=float) * params.rabi_period
    if job.engine == "monte-carlo":
        return run_ensemble(EnsembleSpec(params, particles, t_s, seed), build_level_scheme(params, convention))
    if job.engine == "reduced-master":
        spec = GeneratorSpec("reduced", params)
        return integrate_reduced(ReducedState.ground_left(params.n_left, params.n_right), spec, t_s)
    if job.engine == "full-master":
        spec = GeneratorSpec("full", params, build_level_scheme(params, convention))
        rho0 = np.zeros((params.dim, params.dim), dtype=complex)
        rho0[0, 0] = 1.0
        series = integrate_full(rho0, spec, t_s)
        out = series.to_series()
        out.meta.update(trace_error=series.trace_error, min_eigenvalue=series.min_eigenvalue)
        return out
    if job.engine.startswith("analytic:"):
        return analytic_curve(job.engine.split(":", 1)[1], t_grid_tr, params, x=job.x, shift=job.shift,
                              variant=job.variant)
    raise KeyError(f"unknown engine {job.engine!r}")


def build_id() -> str:
    """Version string in the style of ``git describe``; falls back to the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def atomic_write(path: Path, data: str) -> None:
    """Write ``data`` to ``path`` through a temp file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def series_to_csv(series: SeriesResult, observable: str = "p_left") -> str:
    values, err = series.observable(observable)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t_TR", "value", "stderr"])
    for i, (t, v) in enumerate(zip(series.t_tr, values)):
        writer.writerow([repr(float(t)), repr(float(v)), "" if err is None else repr(float(err[i]))])
    return buf.getvalue()


def series_to_json(series: SeriesResult, observable: str = "p_left") -> str:
    values, err = series.observable(observable)
    doc = {
        "label": series.label,
        "observable": observable,
        "t_TR": [float(t) for t in series.t_tr],
        "value": [float(v) for v in values],
        "stderr": None if err is None else [float(e) for e in err],
    }
    return json.dumps(doc, indent=1) + "\n"


def read_series(path: str | Path) -> SeriesResult:
    """Load a series written by :func:`series_to_csv` or :func:`series_to_json`."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        err = None if doc.get("stderr") is None else np.asarray(doc["stderr"], dtype=float)
        return SeriesResult(t_tr=doc["t_TR"], p_left=doc["value"], p_left_err=err, label=doc.get("label", path.stem))
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or "t_TR" not in rows[0] or "value" not in rows[0]:
        raise ValueError(f"{path}: expected columns t_TR,value[,stderr]")
    t = np.array([float(r["t_TR"]) for r in rows])
    v = np.array([float(r["value"]) for r in rows])
    errs = [r.get("stderr") or "" for r in rows]
    err = np.array([float(e) for e in errs]) if all(errs) else None
    return SeriesResult(t_tr=t, p_left=v, p_left_err=err, label=path.stem)


@dataclass
class RunRecord:
    label: str
    engine: str
    file: str
    observable: str
    params: dict
    meta: dict


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def run_config(config: ExperimentConfig, out_dir: str | Path, fmt: str = "csv") -> Path:
    """Run every curve of ``config``; write one file per curve plus ``manifest.json``."""
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    out_dir = Path(out_dir)
    if config.output:
        out_dir = out_dir / config.output
    name = config.preset or "config"
    start = time.perf_counter()
    records = []
    t_grid = config.t_grid_tr
    for job in config.jobs():
        series = compute_series(job, t_grid, particles=config.particles, seed=config.seed,
                                convention=config.convention)
        fname = f"{name}_{job.label}.{fmt}".replace("/", "_")
        body = series_to_csv(series, job.observable) if fmt == "csv" else series_to_json(series, job.observable)
        atomic_write(out_dir / fname, body)
        records.append(RunRecord(job.label, job.engine, fname, job.observable, asdict(job.params),
                                 _jsonable(series.meta)))
    manifest = {
        "preset": config.preset,
        "engine": config.engine,
        "particles": config.particles,
        "seed": config.seed,
        "t_max_TR": config.t_max,
        "samples": config.samples,
        "convention": config.convention.value,
        "build": build_id(),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "curves": [asdict(r) for r in records],
    }
    manifest_path = out_dir / f"{name}_manifest.json"
    atomic_write(manifest_path, json.dumps(_jsonable(manifest), indent=1) + "\n")
    return manifest_path


# --------------------------------------------------------------------------
# comparison


@dataclass
class Tolerance:
    abs: float | None = None
    rel: float | None = None
    z: float | None = None

    @classmethod
    def parse(cls, spec: str | None) -> "Tolerance":
        tol = cls()
        if not spec:
            return tol
        for item in spec.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in ("abs", "rel", "z") or not value:
                raise ValueError(f"bad tolerance item {item!r}; use abs=..,rel=..,z=..")
            setattr(tol, key, float(value))
        return tol


@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    t_tr: np.ndarray
    max_abs: float
    max_rel: float
    z_scores: np.ndarray | None
    exponent_a: float | None = None
    exponent_b: float | None = None
    t_relax_a: float | None = None
    t_relax_b: float | None = None
    checks: dict = field(default_factory=dict)

    @property
    def max_z(self) -> float | None:
        if self.z_scores is None:
            return None
        return float(np.max(np.abs(self.z_scores))) if self.z_scores.size else 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        return _jsonable({
            "a": self.label_a,
            "b": self.label_b,
            "samples": int(self.t_tr.size),
            "max_abs": self.max_abs,
            "max_rel": self.max_rel,
            "max_z": self.max_z,
            "exponent_a": self.exponent_a,
            "exponent_b": self.exponent_b,
            "t_relax_a": self.t_relax_a,
            "t_relax_b": self.t_relax_b,
            "checks": self.checks,
            "passed": self.passed,
        })


def _align(a: SeriesResult, b: SeriesResult, resample: bool):
    if a.t_tr.shape == b.t_tr.shape and np.allclose(a.t_tr, b.t_tr, rtol=1e-12, atol=1e-12):
        return a.t_tr, a.p_left, a.p_left_err, b.p_left, b.p_left_err
    if not resample:
        raise GridMismatchError("series are on different time grids; enable resampling to interpolate")
    lo, hi = max(a.t_tr[0], b.t_tr[0]), min(a.t_tr[-1], b.t_tr[-1])
    if not hi > lo:
        raise GridMismatchError("series time ranges do not overlap")
    mask = (a.t_tr >= lo) & (a.t_tr <= hi)
    t = a.t_tr[mask]
    vb = np.interp(t, b.t_tr, b.p_left)
    eb = None if b.p_left_err is None else np.interp(t, b.t_tr, b.p_left_err)
    ea = None if a.p_left_err is None else a.p_left_err[mask]
    return t, a.p_left[mask], ea, vb, eb


def compare(a: SeriesResult, b: SeriesResult, tolerance: Tolerance | str | None = None, *,
            resample: bool = False, p_inf: float | None = None) -> ComparisonReport:
    """Deviation metrics between two series on a shared grid.

    With ``p_inf`` set, a stretched-exponential time exponent and an e^-1
    relaxation time are estimated for both series.
    """
    tol = tolerance if isinstance(tolerance, Tolerance) else Tolerance.parse(tolerance)
    t, va, ea, vb, eb = _align(a, b, resample)
    diff = va - vb
    max_abs = float(np.max(np.abs(diff))) if diff.size else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diff == 0, 0.0, np.abs(diff) / np.abs(vb))
    max_rel = float(np.max(rel)) if rel.size else 0.0
    z = None
    if ea is not None or eb is not None:
        var = (0.0 if ea is None else ea**2) + (0.0 if eb is None else eb**2)
        var = np.asarray(var, dtype=float) * np.ones_like(diff)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(diff == 0, 0.0, diff / np.sqrt(var))
    report = ComparisonReport(a.label, b.label, t, max_abs, max_rel, z)
    if p_inf is not None:
        for side, values in (("a", va), ("b", vb)):
            try:
                beta, _ = analytic.fit_stretched_exponent(t, values, p_inf)
            except ValueError:
                beta = None
            setattr(report, f"exponent_{side}", beta)
            setattr(report, f"t_relax_{side}", analytic.relaxation_time(t, values, p_inf))
    if tol.abs is not None:
        report.checks["abs"] = max_abs <= tol.abs
    if tol.rel is not None:
        report.checks["rel"] = max_rel <= tol.rel
    if tol.z is not None:
        if z is None:
            raise ValueError("z-score tolerance requires error bars on at least one series")
        report.checks["z"] = bool(np.all(np.abs(z) <= tol.z))
    return report


def collapse_deviation(series: list[SeriesResult], xs: list[float], u_max: float | None = None) -> float:
    """Largest pairwise gap between curves replotted against ``t / x^3``.

    Pairs are compared on the overlap of their rescaled ranges (optionally
    capped at ``u_max``) after linear interpolation.
    """
    rescaled = [(s.t_tr / x**3, s.p_left) for s, x in zip(series, xs)]
    worst = 0.0
    for i in range(len(rescaled)):
        for j in range(i + 1, len(rescaled)):
            (ui, pi), (uj, pj) = rescaled[i], rescaled[j]
            hi = min(ui[-1], uj[-1]) if u_max is None else min(ui[-1], uj[-1], u_max)
            grid = ui[ui <= hi]
            worst = max(worst, float(np.max(np.abs(pi[: grid.size] - np.interp(grid, uj, pj)))))
    return worst


# --------------------------------------------------------------------------
# command line


def _load_config(target: str) -> ExperimentConfig:
    if target in PRESETS:
        return resolve_preset(target)
    path = Path(target)
    if not path.exists():
        raise ConfigError(f"{target!r} is neither a preset ({', '.join(PRESETS)}) nor a config file")
    return parse_config(path.read_text(encoding="utf-8"))


def _cmd_run(args) -> int:
    config = _load_config(args.target)
    if args.seed is not None:
        config.seed = args.seed
    if args.particles is not None:
        config.particles = args.particles
    manifest = run_config(config, args.out_dir, args.format)
    print(manifest)
    return 0


def _cmd_compare(args) -> int:
    a, b = read_series(args.a), read_series(args.b)
    report = compare(a, b, args.tol, resample=args.resample, p_inf=args.p_inf)
    print(json.dumps(report.summary(), indent=1))
    return 0 if report.passed else 1


def _cmd_validate(args) -> int:
    config = _load_config(args.target)
    ok = True
    for job in config.jobs():
        scheme = build_level_scheme(job.params, config.convention)
        report = validate_timescales(job.params, scheme, threshold=args.threshold)
        ok &= report.ok
        print(json.dumps({"curve": job.label, **_jsonable(report.as_dict())}))
    return 0 if ok else 1


def _cmd_curves(args) -> int:
    t = np.linspace(0.0, args.t_max, args.samples)
    params = ModelParams(rabi=args.rabi)
    out_dir = Path(args.out_dir)
    for x in args.x:
        series = analytic_curve(args.name, t, params, x=x, shift=args.shift, variant=args.variant)
        obs = {"mu": "mu_left", "sigma": "sigma_left"}.get(args.name, "p_left")
        body = series_to_csv(series, obs) if args.format == "csv" else series_to_json(series, obs)
        path = out_dir / f"{args.name}_x={_fmt(x)}.{args.format}"
        atomic_write(path, body)
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zenomol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or a config file")
    run.add_argument("target", help=f"preset ({', '.join(PRESETS)}) or config path")
    run.add_argument("--seed", type=int)
    run.add_argument("--particles", type=int)
    run.add_argument("--out-dir", default="out")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="compare two series files")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--tol", default=None, help="e.g. 'abs=0.01,rel=0.1,z=3'")
    cmp_.add_argument("--resample", action="store_true", help="interpolate b onto the grid of a")
    cmp_.add_argument("--p-inf", type=float, default=None, help="asymptote for exponent and T_relax fits")
    cmp_.set_defaults(func=_cmd_compare)

    val = sub.add_parser("validate", help="timescale report for a preset or config")
    val.add_argument("target")
    val.add_argument("--threshold", type=float, default=100.0)
    val.set_defaults(func=_cmd_validate)

    cur = sub.add_parser("curves", help="write analytic curves")
    cur.add_argument("name", choices=ANALYTIC_CURVES)
    cur.add_argument("--x", type=float, nargs="+", required=True)
    cur.add_argument("--t-max", type=float, default=3.0, help="in Rabi periods")
    cur.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    cur.add_argument("--shift", choices=[s.value for s in analytic.Shift], default="printed")
    cur.add_argument("--variant", choices=("exact-ansatz", "stretched"), default="exact-ansatz")
    cur.add_argument("--rabi", type=float, default=ModelParams.rabi)
    cur.add_argument("--out-dir", default="out")
    cur.add_argument("--format", choices=("csv", "json"), default="csv")
    cur.set_defaults(func=_cmd_curves)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GridMismatchError, KeyError, ValueError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"zenomol: error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
