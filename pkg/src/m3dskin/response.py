"""Phenomenological force response and the Arduino-style readout chain.

The terminal resistance of a tile under force ``F`` is modelled as

    R(F) = R_wire + R0 + a * (F / F_a) * exp(1 - F / F_a) - b * (1 - exp(-F / F_b))

A bump of height ``a`` peaking at ``F_a`` gives the initial rise; a
saturating fall of depth ``b`` gives the long descent.  After a load is
removed a residual offset decays exponentially.

The sensor sits between ``V_cc`` and the ADC node, the reference resistor
between the node and ground.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.optimize import least_squares

F_MAX = 200.0
PEAK_WINDOW = (0.7, 1.3)


class InsufficientAnchors(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, best_residual: float, tol: float):
        self.best_residual = best_residual
        super().__init__(f"best max relative residual {best_residual:.3%} exceeds {tol:.3%}")


class OutOfBranch(ValueError):
    pass


class RangeSaturated(ValueError):
    pass


@dataclass(frozen=True)
class ResponseParams:
    r_wire: float
    r0: float
    a: float
    f_a: float
    b: float
    f_b: float
    f_sat: float = F_MAX

    def __post_init__(self):
        if self.r_wire < 0:
            raise ValueError("r_wire must be >= 0")
        for name in ("r0", "a", "f_a", "b", "f_b", "f_sat"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def rest(self) -> float:
        return self.r_wire + self.r0


@dataclass(frozen=True)
class HysteresisState:
    residual0: float = 0.0
    t0: float = 0.0
    tau: float = 30.0

    def __post_init__(self):
        if self.residual0 < 0:
            raise ValueError("residual must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    def residual(self, t: float) -> float:
        if t <= self.t0:
            return self.residual0
        return self.residual0 * math.exp(-(t - self.t0) / self.tau)


NO_HYSTERESIS = HysteresisState()


def _curve(x: np.ndarray, F: np.ndarray) -> np.ndarray:
    r, a, fa, b, fb = x
    return r + a * (F / fa) * np.exp(1.0 - F / fa) - b * (1.0 - np.exp(-F / fb))


def rf_eval(params: ResponseParams, F, hyst: HysteresisState = NO_HYSTERESIS, t: float = 0.0):
    """Resistance at force ``F`` (scalar or array) including decayed residual."""
    Fa = np.asarray(F, dtype=float)
    if np.any(Fa < 0):
        raise ValueError("force must be >= 0")
    x = (params.rest, params.a, params.f_a, params.b, params.f_b)
    out = _curve(np.array(x), Fa) + hyst.residual(t)
    return float(out) if out.ndim == 0 else out


def slope(params: ResponseParams, F):
    """dR/dF (ohm per newton)."""
    F = np.asarray(F, dtype=float)
    rise = params.a / params.f_a * (1.0 - F / params.f_a) * np.exp(1.0 - F / params.f_a)
    fall = params.b / params.f_b * np.exp(-F / params.f_b)
    return rise - fall


def fit_rf(
    anchors: Sequence[tuple[float, float]],
    *,
    r_wire: float = 0.0,
    f_sat: float = F_MAX,
    tol: float = 0.01,
) -> ResponseParams:
    """Bounded least-squares fit of the response curve to (force, ohm) anchors.

    ``R_wire`` is held fixed (it is only separable from ``R0`` with an
    independent wiring estimate).  When an interior anchor sits above both
    neighbours the data encode a rise-then-fall; hinge residuals then keep
    the curve rising at ``PEAK_WINDOW[0]`` times that anchor's force and
    falling at ``PEAK_WINDOW[1]`` times it.  Without them four anchors leave
    the peak position free.  Several starting points are tried and the
    lowest cost kept; :class:`NoConvergence` is raised if the best fit misses
    an anchor by more than ``tol`` relative.
    """
    pts = sorted((float(f), float(r)) for f, r in anchors)
    if len(pts) < 4 or not any(f == 0.0 for f, _ in pts):
        raise InsufficientAnchors("need at least 4 anchors including F = 0")
    if any(f < 0 or r <= 0 for f, r in pts):
        raise ValueError("anchors need F >= 0 and R > 0")
    F = np.array([p[0] for p in pts])
    R = np.array([p[1] for p in pts])
    r_rest = R[F == 0.0].mean()
    span = max(R.max() - R.min(), 1e-3 * r_rest)
    fmax = max(F.max(), 1.0)

    interior = [i for i in range(1, len(R) - 1) if R[i] > R[i - 1] and R[i] > R[i + 1]]
    i_peak = max(interior, key=lambda i: R[i]) if interior else None

    def dcurve(x, f):
        _, a, fa, b, fb = x
        return a / fa * (1 - f / fa) * np.exp(1 - f / fa) - b / fb * np.exp(-f / fb)

    def resid(x):
        r = (_curve(x, F) - R) / R
        if i_peak is None:
            return r
        fp = F[i_peak]
        scale = fp / R[i_peak]
        rising = min(0.0, dcurve(x, PEAK_WINDOW[0] * fp)) * scale
        falling = max(0.0, dcurve(x, PEAK_WINDOW[1] * fp)) * scale
        return np.append(r, [rising, falling])

    lo = [1e-9, 1e-9, 1e-3 * fmax, 1e-9, 0.03 * fmax]
    hi = [np.inf, 10 * span + r_rest, 2.0 * fmax, 10 * span + r_rest, 10.0 * fmax]
    best = None
    for fa0 in (0.1, 0.2, 0.35):
        for fb0 in (0.2, 0.5, 1.0):
            x0 = [r_rest, span * 0.5, fa0 * fmax, span, fb0 * fmax]
            x0 = np.clip(x0, np.array(lo) * (1 + 1e-9) + 1e-12, np.array(hi) * (1 - 1e-9))
            sol = least_squares(resid, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=4000)
            if best is None or sol.cost < best.cost:
                best = sol
    worst = float(np.max(np.abs(resid(best.x)[: len(R)])))
    if worst > tol:
        raise NoConvergence(worst, tol)
    r, a, fa, b, fb = (float(v) for v in best.x)
    if r - r_wire <= 0:
        raise NoConvergence(worst, tol)
    params = ResponseParams(r_wire, r - r_wire, a, fa, b, fb, f_sat)
    grid = np.linspace(0.0, f_sat, 2001)
    if np.any(rf_eval(params, grid) <= 0):
        raise NoConvergence(worst, tol)
    return params


def peak_force(params: ResponseParams, f_max: float | None = None, n: int = 20001) -> float:
    F = np.linspace(0.0, f_max or params.f_sat, n)
    return float(F[int(np.argmax(rf_eval(params, F)))])


def steepest_descent_force(params: ResponseParams, f_max: float | None = None, n: int = 20001) -> float:
    """Force where the curve falls fastest (argmax of -dR/dF)."""
    F = np.linspace(0.0, f_max or params.f_sat, n)
    return float(F[int(np.argmin(slope(params, F)))])


def release_load(params: ResponseParams | None, F_prev: float, t: float, *,
                 r_max: float = 200.0, f_ref: float = 160.0, tau: float = 30.0) -> HysteresisState:
    """Residual left after releasing a load of ``F_prev`` at time ``t``."""
    if F_prev < 0:
        raise ValueError("F_prev must be >= 0")
    return HysteresisState(r_max * min(1.0, F_prev / f_ref), t, tau)


# --- readout ------------------------------------------------------------

@dataclass(frozen=True)
class ReadoutConfig:
    v_cc: float = 5.0
    r_ref: float = 5600.0
    adc_bits: int = 10

    def __post_init__(self):
        if not (self.v_cc > 0 and self.r_ref > 0 and self.adc_bits >= 1):
            raise ValueError("need v_cc > 0, r_ref > 0, adc_bits >= 1")

    @property
    def full_scale(self) -> int:
        return (1 << self.adc_bits) - 1


def divider_voltage(r_s, cfg: ReadoutConfig = ReadoutConfig()):
    r = np.asarray(r_s, dtype=float)
    if np.any(r <= 0):
        raise ValueError("sensor resistance must be > 0")
    v = cfg.v_cc * cfg.r_ref / (r + cfg.r_ref)
    return float(v) if v.ndim == 0 else v


def adc_counts(v, cfg: ReadoutConfig = ReadoutConfig()):
    va = np.asarray(v, dtype=float)
    if np.any(va < 0) or np.any(va > cfg.v_cc):
        raise ValueError("voltage outside [0, V_cc]")
    c = np.floor(va * cfg.full_scale / cfg.v_cc + 0.5).astype(np.int64)
    return int(c) if c.ndim == 0 else c


def adc_to_resistance(counts, cfg: ReadoutConfig = ReadoutConfig()):
    c = np.asarray(counts)
    if np.any(c <= 0) or np.any(c >= cfg.full_scale):
        raise RangeSaturated("ADC reading at a rail; resistance is not recoverable")
    r = cfg.r_ref * (cfg.full_scale - c.astype(float)) / c
    return float(r) if r.ndim == 0 else r


def quantization_band(r_s: float, cfg: ReadoutConfig = ReadoutConfig()) -> tuple[float, float]:
    """Resistances at the edges of the count bin that ``r_s`` falls in."""
    c = adc_counts(divider_voltage(r_s, cfg), cfg)
    m = cfg.full_scale
    edge = lambda x: math.inf if x <= 0 else cfg.r_ref * (m - x) / x
    return edge(c + 0.5), edge(c - 0.5)


def readout(params: ResponseParams, forces: Iterable[float], cfg: ReadoutConfig = ReadoutConfig(),
            hyst: HysteresisState = NO_HYSTERESIS, t: float = 0.0) -> list[tuple[float, float, float, int]]:
    """(force, R, V, counts) rows through the full chain."""
    rows = []
    for f in forces:
        r = rf_eval(params, f, hyst, t)
        v = divider_voltage(r, cfg)
        rows.append((float(f), r, v, adc_counts(v, cfg)))
    return rows


def force_from_resistance(params: ResponseParams, r: float, tol: float = 1e-7) -> float:
    """Invert the descending branch on ``[F_a, F_sat]`` by bisection."""
    lo, hi = params.f_a, params.f_sat
    r_lo, r_hi = rf_eval(params, hi), rf_eval(params, lo)
    if not (r_lo <= r <= r_hi):
        raise OutOfBranch(f"{r:.1f} ohm outside the descending branch [{r_lo:.1f}, {r_hi:.1f}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rf_eval(params, mid) > r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def force_to_pressure(force: float, tip_diameter_mm: float) -> float:
    """Mean contact pressure (Pa) under a circular tip."""
    if force < 0 or tip_diameter_mm <= 0:
        raise ValueError("need force >= 0 and a positive tip diameter")
    d = tip_diameter_mm * 1e-3
    return force / (math.pi * d * d / 4.0)


# --- files --------------------------------------------------------------

def params_to_dict(p: ResponseParams) -> dict:
    return {k: float(v) for k, v in asdict(p).items()}


def params_from_dict(d: Mapping) -> ResponseParams:
    return ResponseParams(**{k: float(d[k]) for k in ("r_wire", "r0", "a", "f_a", "b", "f_b")},
                          f_sat=float(d.get("f_sat", F_MAX)))


def dump_params(p: ResponseParams) -> str:
    return yaml.safe_dump({"response": params_to_dict(p)}, sort_keys=True)


def load_params(path: str | Path) -> ResponseParams:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ValueError(f"params file is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("params file must be a mapping")
    return params_from_dict(doc["response"] if "response" in doc else doc)


def load_presets() -> dict[str, ResponseParams]:
    """Named parameter sets shipped with the package (see data/presets.yaml)."""
    text = resources.files("m3dskin").joinpath("data/presets.yaml").read_text()
    doc = yaml.safe_load(text)
    return {name: params_from_dict(d) for name, d in doc["presets"].items()}


def preset(name: str) -> ResponseParams:
    presets = load_presets()
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(presets))}")
    return presets[name]


def read_anchors_csv(path: str | Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"force_N", "resistance_ohm"} <= set(rows[0]):
        raise ValueError("anchor CSV needs force_N,resistance_ohm columns")
    return [(float(r["force_N"]), float(r["resistance_ohm"])) for r in rows]


def with_wire(p: ResponseParams, r_wire: float) -> ResponseParams:
    """Same sensor curve behind a different wiring resistance."""
    return replace(p, r_wire=r_wire)
