"""Experiment configuration: a YAML file (JSON is accepted, being a subset of YAML).

Schema (all sections optional unless the experiment needs them)::

    experiment: theorem-check     # channel-info | rate-sd | rate-ad | theorem-check
                                  # | kennedy-scaling | picture-equivalence
    seed: 7                       # required by randomized experiments
    threads: 1
    channel: {mu1: 0.894, mu2: 0.2}   # or {eta: 0.8} / {eta: 0.8, n_env: 0.1}
    povm: {family: kennedy}           # pnr: n_max; homodyne: edges; helstrom-binary: gammas, priors
    energy: 0.1                       # scalar or list
    n_modes: 2
    grids:
      points: {re: [-3, 3, 61]}       # an axis is a list of values or [start, stop, num] under
      lambda: {re: [-1, 1, 11]}       # the key "linspace"; missing axes default to [0]
    search: {rounds: 3, shrink: 0.2, point_rounds: 4, sweeps: 2}
    theorem: {n_random: 200, n_optimized: 2, tolerance: 1.0e-6, certificate_points: 5}
    picture: {n_instances: 100, n_points: 3, modes: [2, 3]}
    scaling: {alpha: {linspace: [0.5, 4.0, 21]}, lambda: {linspace: [-0.3, 0.3, 7]}}
    output: {dir: results}

A run manifest written by the CLI carries the normalized configuration
under ``config`` and can be passed back as ``--config``.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ValidationError
from .gaussian import ChannelParams
from .measurement import Povm

EXPERIMENTS = ("channel-info", "rate-sd", "rate-ad", "theorem-check", "kennedy-scaling",
               "picture-equivalence")
RANDOMIZED = ("theorem-check", "picture-equivalence")
FAMILIES = ("kennedy", "pnr", "homodyne", "helstrom-binary")

DEFAULTS = {
    "threads": 1,
    "n_modes": 2,
    "grids": {
        "points": {"re": {"linspace": [-3.0, 3.0, 61]}},
        "lambda": {"re": {"linspace": [-1.0, 1.0, 11]}},
    },
    "search": {"rounds": 3, "shrink": 0.2, "point_rounds": 0, "sweeps": 2,
               "theta": {"linspace": [0.0, 1.5707963267948966, 5]},
               "phi": {"linspace": [0.0, 4.71238898038469, 4]}},
    "theorem": {"n_random": 200, "n_optimized": 2, "tolerance": 1e-6, "lambda_scale": 1.0,
                "point_rounds": 4, "certificate_points": 5},
    "picture": {"n_instances": 100, "n_points": 3, "modes": [2, 3], "amplitude_scale": 1.0},
    "scaling": {},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def axis(spec, key: str) -> np.ndarray:
    """An axis is a number, a list of numbers, or ``{linspace: [start, stop, num]}``."""
    if isinstance(spec, dict):
        if set(spec) != {"linspace"}:
            raise ValidationError(f"{key}: axis mappings take only the key 'linspace'")
        a = spec["linspace"]
        if not (isinstance(a, (list, tuple)) and len(a) == 3):
            raise ValidationError(f"{key}.linspace: expected [start, stop, num]")
        n = a[2]
        if not isinstance(n, int) or n < 1:
            raise ValidationError(f"{key}.linspace: num must be a positive integer")
        out = np.linspace(float(a[0]), float(a[1]), n)
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        out = np.array([float(spec)])
    elif isinstance(spec, (list, tuple)):
        try:
            out = np.asarray(spec, dtype=float).ravel()
        except (TypeError, ValueError):
            raise ValidationError(f"{key}: axis values must be numbers") from None
    else:
        raise ValidationError(f"{key}: expected a number, a list or {{linspace: [start, stop, num]}}")
    if out.size == 0:
        raise ValidationError(f"{key}: grid is empty")
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{key}: grid contains non-finite values")
    return out


def complex_grid(spec, key: str) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(spec, dict):
        raise ValidationError(f"{key}: expected a mapping with 're' and/or 'im' axes")
    extra = set(spec) - {"re", "im"}
    if extra:
        raise ValidationError(f"{key}: unknown keys {sorted(extra)}")
    re = axis(spec.get("re", [0.0]), f"{key}.re")
    im = axis(spec.get("im", [0.0]), f"{key}.im")
    return re, im


def product_points(re, im) -> np.ndarray:
    return (re[:, None] + 1j * im[None, :]).ravel()


def parse_channel(spec) -> ChannelParams:
    if not isinstance(spec, dict):
        raise ValidationError("channel: expected a mapping")
    if "eta" in spec:
        if set(spec) - {"eta", "n_env"}:
            raise ValidationError("channel: give either mu1/mu2 or eta (with optional n_env)")
        eta = float(spec["eta"])
        if not 0.0 <= eta <= 1.0:
            raise ValidationError(f"channel.eta: must lie in [0, 1], got {eta}")
        n_env = float(spec.get("n_env", 0.0))
        if n_env < 0:
            raise ValidationError(f"channel.n_env: must be >= 0, got {n_env}")
        return ChannelParams.thermal_loss(eta, n_env) if n_env > 0 else ChannelParams.pure_loss(eta)
    for k in ("mu1", "mu2"):
        if k not in spec:
            raise ValidationError(f"channel.{k}: missing")
    mu1, mu2 = float(spec["mu1"]), float(spec["mu2"])
    if mu1 < 0:
        raise ValidationError(f"channel.mu1: must be >= 0, got {mu1}")
    if mu2 < 0:
        raise ValidationError(f"channel.mu2: must be >= 0 (channel physicality constraint "
                              f"mu2 >= |1 - mu1^2|), got {mu2}")
    if mu2 < abs(1.0 - mu1 ** 2) * (1 - 1e-12):
        raise ValidationError(f"channel.mu2: violates the channel physicality constraint "
                              f"mu2 >= |1 - mu1^2| = {abs(1 - mu1 ** 2):.6g}, got {mu2}")
    return ChannelParams(mu1, mu2)


def parse_povm(spec) -> Povm:
    if not isinstance(spec, dict) or "family" not in spec:
        raise ValidationError("povm.family: missing")
    fam = spec["family"]
    if fam not in FAMILIES:
        raise ValidationError(f"povm.family: unknown family {fam!r} (expected one of {', '.join(FAMILIES)})")
    if fam == "kennedy":
        return Povm.kennedy(complex(spec.get("lambda_re", 0.0), spec.get("lambda_im", 0.0)))
    if fam == "pnr":
        n_max = spec.get("n_max", 6)
        if not isinstance(n_max, int) or n_max < 0:
            raise ValidationError(f"povm.n_max: must be a nonnegative integer, got {n_max!r}")
        return Povm.pnr(complex(spec.get("lambda_re", 0.0), spec.get("lambda_im", 0.0)), n_max)
    if fam == "homodyne":
        edges = axis(spec.get("edges", [0.0]), "povm.edges")
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("povm.edges: bin edges must be strictly increasing")
        return Povm.homodyne(float(spec.get("theta", 0.0)), tuple(edges.tolist()))
    gam = spec.get("gammas")
    if not (isinstance(gam, list) and len(gam) == 2):
        raise ValidationError("povm.gammas: helstrom-binary needs two amplitudes [[re, im], [re, im]]")
    g = [complex(*v) if isinstance(v, list) else complex(v) for v in gam]
    pri = spec.get("priors", [0.5, 0.5])
    return Povm.helstrom_binary(g[0], g[1], tuple(float(x) for x in pri))


@dataclass
class ExperimentConfig:
    experiment: str
    raw: dict = field(repr=False)

    def get(self, *path, default=None):
        node = self.raw
        for p in path:
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node

    @property
    def seed(self) -> int | None:
        return self.raw.get("seed")

    @property
    def threads(self) -> int:
        return int(self.raw.get("threads", 1))

    @property
    def channel(self) -> ChannelParams:
        return parse_channel(self.raw["channel"])

    @property
    def povm(self) -> Povm:
        return parse_povm(self.raw["povm"])

    @property
    def energies(self) -> np.ndarray:
        return axis(self.raw["energy"], "energy")

    @property
    def n_modes(self) -> int:
        return int(self.raw["n_modes"])

    @property
    def points(self) -> np.ndarray:
        return product_points(*complex_grid(self.raw["grids"]["points"], "grids.points"))

    @property
    def lambda_axes(self) -> tuple[np.ndarray, np.ndarray]:
        return complex_grid(self.raw["grids"]["lambda"], "grids.lambda")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _needs(experiment: str) -> tuple:
    return {
        "channel-info": ("channel",),
        "rate-sd": ("channel", "povm", "energy"),
        "rate-ad": ("channel", "povm", "energy"),
        "theorem-check": ("channel", "povm", "energy"),
        "kennedy-scaling": ("energy",),
        "picture-equivalence": ("channel", "povm"),
    }[experiment]


def violations(raw, experiment: str | None = None) -> list[str]:
    """Every schema or invariant violation in ``raw`` (empty when valid)."""
    if not isinstance(raw, dict):
        return ["<root>: expected a mapping"]
    out = []
    exp = experiment or raw.get("experiment")
    if exp is None:
        return ["experiment: missing"]
    if exp not in EXPERIMENTS:
        return [f"experiment: unknown experiment {exp!r} (expected one of {', '.join(EXPERIMENTS)})"]
    if experiment and raw.get("experiment", experiment) != experiment:
        out.append(f"experiment: config is for {raw['experiment']!r}, command is {experiment!r}")
    cfg = _merge(DEFAULTS, raw)
    for key in _needs(exp):
        if key not in cfg:
            out.append(f"{key}: missing (required by {exp})")
    if exp in RANDOMIZED and cfg.get("seed") is None:
        out.append(f"seed: missing (required by the randomized experiment {exp})")
    seed = cfg.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64):
        out.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
    threads = cfg.get("threads")
    if not isinstance(threads, int) or threads < 1:
        out.append(f"threads: must be a positive integer, got {threads!r}")

    def check(fn):
        try:
            fn()
        except ValidationError as exc:
            out.append(str(exc))
        except (TypeError, ValueError, KeyError) as exc:
            out.append(f"invalid value: {exc}")

    if "channel" in cfg:
        check(lambda: parse_channel(cfg["channel"]))
    if "povm" in cfg:
        check(lambda: parse_povm(cfg["povm"]))
    if "energy" in cfg:
        def energy_ok():
            e = axis(cfg["energy"], "energy")
            if np.any(e < 0):
                raise ValidationError("energy: must be >= 0")
            if exp == "kennedy-scaling" and np.any((e <= 0) | (e >= 1)):
                raise ValidationError("energy: scaling-study energies must lie in (0, 1)")
        check(energy_ok)
    n = cfg.get("n_modes")
    if not isinstance(n, int) or not 1 <= n <= 3:
        out.append(f"n_modes: must be 1, 2 or 3, got {n!r}")
    check(lambda: complex_grid(cfg["grids"]["points"], "grids.points"))
    check(lambda: complex_grid(cfg["grids"]["lambda"], "grids.lambda"))
    s = cfg["search"]
    for k in ("rounds", "point_rounds", "sweeps"):
        if not isinstance(s.get(k), int) or s[k] < 0:
            out.append(f"search.{k}: must be a nonnegative integer, got {s.get(k)!r}")
    if not isinstance(s.get("shrink"), (int, float)) or not 0 < s["shrink"] < 1:
        out.append(f"search.shrink: must lie in (0, 1), got {s.get('shrink')!r}")
    check(lambda: axis(s["theta"], "search.theta"))
    check(lambda: axis(s["phi"], "search.phi"))
    t = cfg["theorem"]
    for k in ("n_random", "n_optimized", "point_rounds"):
        if not isinstance(t.get(k), int) or t[k] < 0:
            out.append(f"theorem.{k}: must be a nonnegative integer, got {t.get(k)!r}")
    cp = t.get("certificate_points")
    if cp is not None and (not isinstance(cp, int) or (cp != 0 and cp < 5)):
        out.append(f"theorem.certificate_points: must be 0 (off) or at least 5, got {cp!r}")
    if not isinstance(t.get("tolerance"), (int, float)) or not t["tolerance"] > 0:
        out.append(f"theorem.tolerance: must be > 0, got {t.get('tolerance')!r}")
    p = cfg["picture"]
    if not isinstance(p.get("n_instances"), int) or p["n_instances"] < 1:
        out.append(f"picture.n_instances: must be a positive integer, got {p.get('n_instances')!r}")
    if not isinstance(p.get("n_points"), int) or p["n_points"] < 1:
        out.append(f"picture.n_points: must be a positive integer, got {p.get('n_points')!r}")
    modes = p.get("modes")
    if not (isinstance(modes, list) and modes and all(isinstance(m, int) and 1 <= m <= 3 for m in modes)):
        out.append(f"picture.modes: must be a non-empty list drawn from 1, 2, 3, got {modes!r}")
    for k in ("alpha", "lambda"):
        if k in cfg["scaling"]:
            check(lambda k=k: axis(cfg["scaling"][k], f"scaling.{k}"))
    return out


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads 1e-6 (no dot) as a string; accept the JSON float syntax too
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)?(?:\.[0-9_]*)?[eE][-+]?[0-9]+$|"
               r"^[-+]?(?:[0-9][0-9_]*\.[0-9_]*|\.[0-9_]+)(?:[eE][-+]?[0-9]+)?$|"
               r"^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."))


def read_raw(path) -> dict:
    """Parse a YAML/JSON config or a run manifest (whose ``config`` section is returned)."""
    text = Path(path).read_text()
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML/JSON ({exc})") from None
    if raw is None:
        raw = {}
    if isinstance(raw, dict) and "manifest_version" in raw and isinstance(raw.get("config"), dict):
        raw = raw["config"]
    return raw


def load(path, experiment: str | None = None, seed: int | None = None,
         threads: int | None = None) -> ExperimentConfig:
    raw = read_raw(path)
    if not isinstance(raw, dict):
        raise ValidationError("<root>: expected a mapping")
    if seed is not None:
        raw["seed"] = seed
    if threads is not None:
        raw["threads"] = threads
    if experiment is not None:
        raw.setdefault("experiment", experiment)
    bad = violations(raw, experiment)
    if bad:
        raise ValidationError("; ".join(bad))
    return ExperimentConfig(raw["experiment"], _merge(DEFAULTS, raw))


def dumps(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
