"""INI run configuration.

Example::

    [model]
    type = ising
    n_sites = 8
    J = 1.0
    g = 1.05
    h = 0.5

    [state]
    kind = plus            ; plus | zero | random | custom
    ; vectors = 1,0; 0.6,0.8   (custom: one "a,b" pair per site, complex allowed)

    [filter]
    M = 64                 ; or target_delta = 1.0
    y = auto
    E_center = auto
    epsilon_total = 1e-8
    route = state          ; state | mpo
    method = chebyshev     ; evolution method of the mpo route

    [truncation]
    max_bond = none
    threshold = 1e-12

    [output]
    directory = out
    formats = json, csv, checkpoint

    [run]
    seed = 0
    threads = 1

A ``[sweep]`` section turns the same file into a sweep plan; list values are
comma separated (``n_sites = 8, 10``).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .hamiltonian import _DEFAULT_COUPLINGS, HamiltonianSpec
from .tensor import TruncationPolicy

__all__ = ["ConfigError", "RunConfig", "load_config"]

_FORMATS = {"json", "csv", "checkpoint"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _get(cp, section, key, conv, default=None, required=False):
    name = f"{section}.{key}"
    if not cp.has_section(section) or not cp.has_option(section, key):
        if required:
            raise ConfigError(name, "missing")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"cannot parse {raw!r} ({exc})") from None


def _int(raw: str) -> int:
    val = float(raw)
    if val != int(val):
        raise ValueError("not an integer")
    return int(val)


def _opt(conv):
    def inner(raw):
        return None if raw.lower() in ("none", "auto", "") else conv(raw)
    return inner


def _list(conv):
    def inner(raw):
        return [conv(p.strip()) for p in raw.split(",") if p.strip()]
    return inner


def _vectors(raw: str) -> List[Tuple[complex, complex]]:
    out = []
    for chunk in raw.split(";"):
        parts = [complex(p.strip().replace(" ", "")) for p in chunk.split(",")]
        if len(parts) != 2:
            raise ValueError("each site needs two amplitudes")
        out.append((parts[0], parts[1]))
    return out


@dataclass(frozen=True)
class SweepSection:
    n_sites: List[int]
    M: List[int]
    target_delta: List[float]
    y: Union[str, float]
    path: str
    seeds: List[int]
    max_bond: List[Optional[int]]
    threshold: List[float]


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    model: str
    n_sites: int
    couplings: Dict[str, float]
    normalize: bool
    state_kind: str
    state_vectors: Optional[List[Tuple[complex, complex]]]
    M: Optional[int]
    target_delta: Optional[float]
    y: Optional[float]
    E_center: Optional[float]
    epsilon_total: float
    route: str
    method: str
    denominator: Optional[float]
    zeta_hint: Optional[float]
    s_floor: float
    has_filter: bool
    max_bond: Optional[int]
    threshold: float
    output_dir: Optional[str]
    formats: List[str]
    seed: int
    threads: int
    t_max: float
    n_t: int
    sweep: Optional[SweepSection] = None

    @property
    def spec(self) -> HamiltonianSpec:
        return HamiltonianSpec(self.n_sites, self.model, self.couplings, self.normalize)

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.max_bond, self.threshold)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.state_vectors is not None:
            out["state_vectors"] = [[str(a), str(b)] for a, b in self.state_vectors]
        return out


def load_config(path, seed: Optional[int] = None, threads: Optional[int] = None) -> RunConfig:
    """Parse and validate an INI file; command-line overrides win."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        cp.read(p)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from None
    if not cp.has_section("model"):
        raise ConfigError("model", "section missing")

    model = _get(cp, "model", "type", str, "ising")
    if model not in _DEFAULT_COUPLINGS:
        raise ConfigError("model.type", f"unknown model {model!r}")
    n_sites = _get(cp, "model", "n_sites", _int, None)
    normalize = _get(cp, "model", "normalize", lambda r: cp.BOOLEAN_STATES[r.lower()], True)
    couplings = {}
    for key in cp.options("model"):
        if key in ("type", "n_sites", "normalize"):
            continue
        if key not in _DEFAULT_COUPLINGS[model]:
            raise ConfigError(f"model.{key}", f"not a coupling of model {model!r}")
        couplings[key] = _get(cp, "model", key, float)

    state_kind = _get(cp, "state", "kind", str, "plus")
    if state_kind not in ("plus", "zero", "random", "custom"):
        raise ConfigError("state.kind", f"unknown state kind {state_kind!r}")
    vectors = _get(cp, "state", "vectors", _vectors, None)
    if state_kind == "custom" and vectors is None:
        raise ConfigError("state.vectors", "required for kind = custom")

    has_filter = cp.has_section("filter")
    M = _get(cp, "filter", "M", _int, None)
    target_delta = _get(cp, "filter", "target_delta", float, None)
    y = _get(cp, "filter", "y", _opt(float), None)
    E_center = _get(cp, "filter", "E_center", _opt(float), None)
    epsilon_total = _get(cp, "filter", "epsilon_total", float, 1e-8)
    route = _get(cp, "filter", "route", str, "state")
    method = _get(cp, "filter", "method", str, "chebyshev")
    denominator = _get(cp, "filter", "denominator", _opt(float), None)
    zeta_hint = _get(cp, "filter", "zeta_hint", _opt(float), None)
    s_floor = _get(cp, "filter", "s_floor", float, 0.1)
    if has_filter:
        if M is None and target_delta is None:
            raise ConfigError("filter.M", "either M or target_delta is required")
        if M is not None and target_delta is not None:
            raise ConfigError("filter.M", "give M or target_delta, not both")
    if M is not None and (M < 2 or M % 2):
        raise ConfigError("filter.M", f"must be a positive even integer, got {M}")
    if target_delta is not None and not target_delta > 0:
        raise ConfigError("filter.target_delta", "must be positive")
    if y is not None and not (y > 0 and math.isfinite(y)):
        raise ConfigError("filter.y", "must be positive")
    if not 0 < epsilon_total < 1:
        raise ConfigError("filter.epsilon_total", "must lie in (0, 1)")
    if route not in ("state", "mpo"):
        raise ConfigError("filter.route", f"must be state or mpo, got {route!r}")
    if method not in ("chebyshev", "trotter"):
        raise ConfigError("filter.method", f"must be chebyshev or trotter, got {method!r}")
    if denominator is not None and not denominator > 0:
        raise ConfigError("filter.denominator", "must be positive")
    if zeta_hint is not None and not zeta_hint > 0:
        raise ConfigError("filter.zeta_hint", "must be positive")

    max_bond = _get(cp, "truncation", "max_bond", _opt(_int), None)
    threshold = _get(cp, "truncation", "threshold", float, 1e-12)
    if max_bond is not None and max_bond < 1:
        raise ConfigError("truncation.max_bond", "must be >= 1")
    if not 0 <= threshold < 1:
        raise ConfigError("truncation.threshold", "must lie in [0, 1)")

    output_dir = _get(cp, "output", "directory", str, None)
    formats = _get(cp, "output", "formats", _list(str), sorted(_FORMATS))
    bad = set(formats) - _FORMATS
    if bad:
        raise ConfigError("output.formats", f"unknown formats {sorted(bad)}")

    cfg_seed = _get(cp, "run", "seed", _int, 0)
    cfg_threads = _get(cp, "run", "threads", _int, 1)
    seed = cfg_seed if seed is None else seed
    threads = cfg_threads if threads is None else threads
    if threads < 1:
        raise ConfigError("run.threads", "must be >= 1")

    t_max = _get(cp, "oracle", "t_max", float, 1.0)
    n_t = _get(cp, "oracle", "n_t", _int, 41)
    if n_t < 2:
        raise ConfigError("oracle.n_t", "must be >= 2")

    sweep = None
    if cp.has_section("sweep"):
        s_sites = _get(cp, "sweep", "n_sites", _list(_int), [n_sites] if n_sites else None)
        if not s_sites:
            raise ConfigError("sweep.n_sites", "missing")
        s_M = _get(cp, "sweep", "M", _list(_int), [])
        s_delta = _get(cp, "sweep", "target_delta", _list(float), [])
        if not s_M and not s_delta:
            raise ConfigError("sweep.M", "either M or target_delta is required")
        y_raw = _get(cp, "sweep", "y", str, "suggest")
        if y_raw in ("suggest", "auto"):
            s_y: Union[str, float] = "suggest"
        else:
            try:
                s_y = float(y_raw)
            except ValueError:
                raise ConfigError("sweep.y", f"cannot parse {y_raw!r}") from None
        s_path = _get(cp, "sweep", "path", str, "mps")
        if s_path not in ("mps", "dense"):
            raise ConfigError("sweep.path", f"must be mps or dense, got {s_path!r}")
        s_seeds = _get(cp, "sweep", "seeds", _list(_int), [seed])
        s_bonds = _get(cp, "sweep", "max_bond", _list(_opt(_int)), [max_bond])
        s_thr = _get(cp, "sweep", "threshold", _list(float), [threshold])
        sweep = SweepSection(s_sites, s_M, s_delta, s_y, s_path, s_seeds, s_bonds, s_thr)
        if n_sites is None:
            n_sites = s_sites[0]

    if n_sites is None:
        raise ConfigError("model.n_sites", "missing")
    if n_sites < 1:
        raise ConfigError("model.n_sites", "must be positive")
    if vectors is not None and len(vectors) != n_sites:
        raise ConfigError("state.vectors", f"expected {n_sites} site vectors, got {len(vectors)}")
    if E_center is not None and abs(E_center) > n_sites:
        raise ConfigError("filter.E_center", f"must lie in [-N, N] = [-{n_sites}, {n_sites}]")
    try:
        HamiltonianSpec(n_sites, model, couplings, normalize)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None

    return RunConfig(model, n_sites, couplings, normalize, state_kind, vectors, M, target_delta, y,
                     E_center, epsilon_total, route, method, denominator, zeta_hint, s_floor, has_filter,
                     max_bond, threshold, output_dir, formats, seed, threads, t_max, n_t, sweep)
