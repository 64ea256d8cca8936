"""Run configuration: a flat, sectioned key-value file.

Sections: [model], [delay], [penalty], [simulation], [bounds], [output].
Vectors are whitespace-separated per-state values; the generator matrix
lists rows separated by ';'.  Units live in comments.  Loading applies
defaults, re-validates every cross-field constraint owned by the model
modules, and can echo a resolved file that round-trips to the same run.
"""

import configparser
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .chain import ChainModel
from .errors import ConfigError, SurplusGameError
from .game import ControlBounds, QuadraticPenalty
from .grid import Grid
from .market import EXPONENTIAL, LOGNORMAL, POINT_MASS, JumpSizeLaw, RegimeModel
from .surplus import DelayParams

OUTPUT_DIR_ENV = "SURPLUSGAME_OUT"

_DELAY_DEFAULTS = {
    "rho": "0.0",
    "zeta": "0.0",
    "kappa": "0.0",
    "theta_flow": "0.0",
    "xi": "0.0",
    "literal_xi_sign": "false",
}
_BOUNDS_DEFAULTS = {
    "pi_lo": "-2.0",
    "pi_hi": "2.0",
    "theta_lo": "-2.0",
    "theta_hi": "2.0",
    "grid_n": "201",
}


@dataclass
class RunConfig:
    """Validated run parameters plus the resolved raw values for echoing."""

    model: RegimeModel
    delay: DelayParams
    penalty: QuadraticPenalty
    horizon: float
    dt: float
    paths: int
    seed: int
    x0: float
    s0: float
    r0: float
    bounds: ControlBounds
    grid_n: int
    out_dir: str
    resolved: dict


def _get(section, sec_name, key, default=None):
    if key in section:
        value = section[key].strip()
        if value:
            return value
    if default is not None:
        return default
    raise ConfigError(f"[{sec_name}] is missing required key '{key}'")


def _floats(value: str, sec: str, key: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in value.replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: cannot parse '{value}' as numbers") from exc


def _float(value: str, sec: str, key: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: cannot parse '{value}' as a number") from exc


def _int(value: str, sec: str, key: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: cannot parse '{value}' as an integer") from exc


def _bool(value: str, sec: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{sec}] {key}: cannot parse '{value}' as a boolean")


def _matrix(value: str, sec: str, key: str) -> np.ndarray:
    rows = [r for r in value.split(";") if r.strip()]
    return np.vstack([_floats(r, sec, key) for r in rows])


def _laws(kind: str, p1: np.ndarray, p2: np.ndarray | None, d: int, sec: str, prefix: str):
    if p1.size != d:
        raise ConfigError(f"[{sec}] {prefix}_param1 needs one value per state")
    out = []
    for j in range(d):
        if kind == POINT_MASS:
            out.append(JumpSizeLaw.point_mass(p1[j]))
        elif kind == EXPONENTIAL:
            out.append(JumpSizeLaw.exponential(p1[j]))
        elif kind == LOGNORMAL:
            if p2 is None or p2.size != d:
                raise ConfigError(f"[{sec}] {prefix}_param2 needed per state for lognormal")
            out.append(JumpSizeLaw.lognormal(p1[j], p2[j]))
        else:
            raise ConfigError(
                f"[{sec}] {prefix}_kind must be point_mass, exponential, or lognormal"
            )
    return out


def _fmt_vec(vec) -> str:
    return " ".join(str(float(v)) for v in np.atleast_1d(vec))


def load_config(path: str) -> RunConfig:
    """Parse and validate a run configuration file.

    Raises :class:`ConfigError` with the offending section and key for
    both parse failures and invariant violations.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as handle:
            parser.read_file(handle, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from exc

    for sec in ("model", "penalty", "simulation"):
        if not parser.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]")

    m = parser["model"]
    d = _int(_get(m, "model", "states"), "model", "states")
    try:
        chain = ChainModel(
            num_states=d,
            generator=_matrix(_get(m, "model", "generator"), "model", "generator"),
            initial_distribution=_floats(_get(m, "model", "q0"), "model", "q0"),
        )
        asset_kind = _get(m, "model", "asset_jump_kind", POINT_MASS)
        claim_kind = _get(m, "model", "claim_kind", POINT_MASS)
        asset_p2 = m.get("asset_jump_param2", "").strip()
        claim_p2 = m.get("claim_param2", "").strip()
        model = RegimeModel(
            chain=chain,
            r=_floats(_get(m, "model", "r"), "model", "r"),
            alpha=_floats(_get(m, "model", "alpha"), "model", "alpha"),
            beta=_float(_get(m, "model", "beta"), "model", "beta"),
            asset_intensity=_floats(_get(m, "model", "asset_intensity"), "model", "asset_intensity"),
            asset_law=_laws(
                asset_kind,
                _floats(_get(m, "model", "asset_jump_param1", "1.0"), "model", "asset_jump_param1"),
                _floats(asset_p2, "model", "asset_jump_param2") if asset_p2 else None,
                d, "model", "asset_jump",
            ),
            claim_intensity=_floats(_get(m, "model", "claim_intensity"), "model", "claim_intensity"),
            claim_law=_laws(
                claim_kind,
                _floats(_get(m, "model", "claim_param1", "1.0"), "model", "claim_param1"),
                _floats(claim_p2, "model", "claim_param2") if claim_p2 else None,
                d, "model", "claim",
            ),
            premium=_float(_get(m, "model", "premium"), "model", "premium"),
        )
    except ConfigError:
        raise
    except SurplusGameError as exc:
        raise ConfigError(f"[model] invalid: {exc}") from exc

    dl = parser["delay"] if parser.has_section("delay") else {}
    delay_vals = {k: _get(dl, "delay", k, v) if hasattr(dl, "keys") else v
                  for k, v in _DELAY_DEFAULTS.items()}
    try:
        delay = DelayParams(
            rho=_float(delay_vals["rho"], "delay", "rho"),
            zeta=_float(delay_vals["zeta"], "delay", "zeta"),
            kappa=_float(delay_vals["kappa"], "delay", "kappa"),
            theta_flow=_float(delay_vals["theta_flow"], "delay", "theta_flow"),
            xi=_float(delay_vals["xi"], "delay", "xi"),
            literal_xi_sign=_bool(delay_vals["literal_xi_sign"], "delay", "literal_xi_sign"),
        )
    except SurplusGameError as exc:
        raise ConfigError(f"[delay] invalid: {exc}") from exc

    p = parser["penalty"]
    try:
        penalty = QuadraticPenalty(delta=_float(_get(p, "penalty", "delta"), "penalty", "delta"))
    except SurplusGameError as exc:
        raise ConfigError(f"[penalty] invalid: {exc}") from exc

    s = parser["simulation"]
    horizon = _float(_get(s, "simulation", "horizon"), "simulation", "horizon")
    dt = _float(_get(s, "simulation", "dt"), "simulation", "dt")
    paths = _int(_get(s, "simulation", "paths"), "simulation", "paths")
    seed = _int(_get(s, "simulation", "seed"), "simulation", "seed")
    x0 = _float(_get(s, "simulation", "x0"), "simulation", "x0")
    s0 = _float(_get(s, "simulation", "s0", "1.0"), "simulation", "s0")
    r0 = _float(_get(s, "simulation", "r0", str(x0)), "simulation", "r0")
    try:
        grid = Grid.from_horizon(horizon, dt)
        grid.steps_of(delay.rho, "rho")
    except SurplusGameError as exc:
        raise ConfigError(f"[simulation]/[delay] grid mismatch: {exc}") from exc
    if paths < 1:
        raise ConfigError("[simulation] paths must be at least 1")

    b = parser["bounds"] if parser.has_section("bounds") else {}
    bounds_vals = {k: _get(b, "bounds", k, v) if hasattr(b, "keys") else v
                   for k, v in _BOUNDS_DEFAULTS.items()}
    lo = _float(bounds_vals["theta_lo"], "bounds", "theta_lo")
    hi = _float(bounds_vals["theta_hi"], "bounds", "theta_hi")
    try:
        bounds = ControlBounds(
            pi=(_float(bounds_vals["pi_lo"], "bounds", "pi_lo"),
                _float(bounds_vals["pi_hi"], "bounds", "pi_hi")),
            theta0=(lo, hi),
            theta1=(lo, hi),
            theta2_slope=(lo, hi),
        )
    except SurplusGameError as exc:
        raise ConfigError(f"[bounds] invalid: {exc}") from exc
    grid_n = _int(bounds_vals["grid_n"], "bounds", "grid_n")
    if grid_n < 3:
        raise ConfigError("[bounds] grid_n must be at least 3")

    o = parser["output"] if parser.has_section("output") else {}
    default_out = os.environ.get(OUTPUT_DIR_ENV, "out")
    out_dir = _get(o, "output", "directory", default_out) if hasattr(o, "keys") else default_out

    resolved = {
        "model": {
            "states": str(d),
            "generator": "; ".join(_fmt_vec(row) for row in chain.generator),
            "q0": _fmt_vec(chain.initial_distribution),
            "r": _fmt_vec(model.r),
            "alpha": _fmt_vec(model.alpha),
            "beta": str(float(model.beta)),
            "premium": str(float(model.premium)),
            "asset_jump_kind": asset_kind,
            "asset_jump_param1": _fmt_vec([law.params[0] for law in model.asset_law]),
            "asset_jump_param2": _fmt_vec([law.params[1] for law in model.asset_law])
            if asset_kind == LOGNORMAL else "",
            "asset_intensity": _fmt_vec(model.asset_intensity),
            "claim_kind": claim_kind,
            "claim_param1": _fmt_vec([law.params[0] for law in model.claim_law]),
            "claim_param2": _fmt_vec([law.params[1] for law in model.claim_law])
            if claim_kind == LOGNORMAL else "",
            "claim_intensity": _fmt_vec(model.claim_intensity),
        },
        "delay": {
            "rho": str(delay.rho),
            "zeta": str(delay.zeta),
            "kappa": str(delay.kappa),
            "theta_flow": str(delay.theta_flow),
            "xi": str(delay.xi),
            "literal_xi_sign": "true" if delay.literal_xi_sign else "false",
        },
        "penalty": {"delta": str(penalty.delta)},
        "simulation": {
            "horizon": str(horizon), "dt": str(dt), "paths": str(paths),
            "seed": str(seed), "x0": str(x0), "s0": str(s0), "r0": str(r0),
        },
        "bounds": {k: str(_float(bounds_vals[k], "bounds", k)) if k != "grid_n" else str(grid_n)
                   for k in _BOUNDS_DEFAULTS},
        "output": {"directory": out_dir},
    }
    return RunConfig(
        model=model, delay=delay, penalty=penalty, horizon=horizon, dt=dt,
        paths=paths, seed=seed, x0=x0, s0=s0, r0=r0, bounds=bounds,
        grid_n=grid_n, out_dir=out_dir, resolved=resolved,
    )


def echo_config(cfg: RunConfig) -> str:
    """Render the resolved configuration; reloading it reproduces the run."""
    lines = []
    for sec, values in cfg.resolved.items():
        lines.append(f"[{sec}]")
        for key, value in values.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def case_config_path(name: str) -> str:
    """Filesystem path of a bundled benchmark configuration (case1 / case2)."""
    if name not in ("case1", "case2"):
        raise ConfigError(f"unknown bundled configuration '{name}'")
    return str(resources.files("surplusgame").joinpath(f"configs/{name}.cfg"))
