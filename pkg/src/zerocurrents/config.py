"""Experiment configuration: flat ``key = value`` text.

Repeated keys form lists; ``#`` starts a comment.  Per-family keys are
``family.<k>.<field>``.  ``format = 1`` is required.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .ensembles import EnsembleSpec, Family
from .errors import ConfigError
from .geometry import MIN_RESOLUTION, ModelSpace, build_grid
from .metrics import BundleFamily, BundleSequence
from .spherefunc import perturbation
from .testfunctions import select

FORMAT_VERSION = 1
STAGES = ("assumptions", "bergman", "sample", "zeros", "rate", "exceptions", "growth", "report")

_TOP_KEYS = {
    "format", "name", "space", "m", "stages", "p", "samples", "resolution", "rule",
    "dictionary", "seed", "ensemble", "autopull_kind", "autopull_strength", "matrix_seed",
    "bump_height", "C0", "C4", "growth_b", "growth_p", "expectation_samples", "export_zeros",
}
_FAMILY_KEYS = {"slopes", "offsets", "perturbation", "tau_const", "tau_linear", "a",
                "A_schedule", "d_schedule"}


def parse_text(text: str) -> dict[str, list[str]]:
    """Key -> list of raw values (one per occurrence)."""
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out.setdefault(key, []).append(value)
    return out


@dataclass(frozen=True)
class FamilyConfig:
    slopes: tuple[float, ...]
    offsets: tuple[int, ...] = ()
    perturbation: str = "none"
    tau_const: float = 0.0
    tau_linear: float = 0.0
    a: float = 1.0
    A_schedule: tuple[float, ...] = ()
    d_schedule: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    space: ModelSpace
    families: tuple[FamilyConfig, ...]
    p_list: tuple[int, ...]
    samples: int = 100
    resolution: int = 64
    rule: str = "gauss"
    dictionary: tuple[str, ...] = ()
    seed: int = 0
    stages: tuple[str, ...] = STAGES
    ensemble: str = "FS"
    autopull_kind: str = "diag"
    autopull_strength: float = 1.0
    matrix_seed: int = 0
    bump_height: float = 1.0
    C0: float = 1.0
    C4: float = 1.0
    growth_b: float = 0.5
    growth_p: tuple[int, ...] = ()
    expectation_samples: int = 0
    export_zeros: bool = False
    digest: str = field(default="", compare=False)

    @property
    def m(self) -> int:
        return len(self.families)

    @property
    def growth_schedule(self) -> tuple[int, ...]:
        return self.growth_p or self.p_list

    def sequence(self) -> BundleSequence:
        fams = []
        for fc in self.families:
            pert = perturbation(fc.perturbation, self.space)
            A_sched = tuple(zip(self.p_list, fc.A_schedule)) if fc.A_schedule else ()
            d_sched = tuple(zip(self.p_list, fc.d_schedule)) if fc.d_schedule else ()
            fams.append(BundleFamily(fc.slopes, fc.offsets, pert, fc.tau_const, fc.tau_linear,
                                     fc.a, A_sched, d_sched))
        return BundleSequence(self.space, tuple(fams), self.C0, self.name)

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(Family(self.ensemble), self.autopull_kind, self.autopull_strength,
                            self.matrix_seed, self.bump_height)

    def grid(self, resolution: int | None = None):
        return build_grid(self.space, resolution or self.resolution, self.rule)

    def test_functions(self):
        return select(self.space, self.dictionary)


# ---------------------------------------------------------------------------
# typed field readers
# ---------------------------------------------------------------------------

def _one(raw, key, default=None):
    vals = raw.get(key)
    if vals is None:
        if default is None:
            raise ConfigError(f"missing required field '{key}'")
        return default
    if len(vals) != 1:
        raise ConfigError(f"field '{key}' given {len(vals)} times; expected once")
    return vals[0]


def _conv(key, value, typ):
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{key}': cannot read {value!r} as {typ.__name__}") from None


def _int(raw, key, default=None) -> int:
    v = _one(raw, key, None if default is None else str(default))
    x = _conv(key, v, float)
    if x != int(x):
        raise ConfigError(f"field '{key}': expected an integer, got {v!r}")
    return int(x)


def _float(raw, key, default=None) -> float:
    return _conv(key, _one(raw, key, None if default is None else repr(default)), float)


def _list(raw, key, typ) -> tuple:
    """Repeated keys and whitespace-separated tokens both extend the list."""
    out = []
    for v in raw.get(key, []):
        out += [_conv(key, tok, typ) for tok in v.split()]
    return tuple(out)


def _ints(raw, key) -> tuple[int, ...]:
    vals = _list(raw, key, float)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"field '{key}': expected integers, got {vals}")
    return tuple(int(v) for v in vals)


def _family(raw, k: int, n: int) -> FamilyConfig:
    pre = f"family.{k}."
    sub = {key[len(pre):]: v for key, v in raw.items() if key.startswith(pre)}
    unknown = sorted(set(sub) - _FAMILY_KEYS)
    if unknown:
        raise ConfigError(f"unknown field(s) {[pre + u for u in unknown]}")
    slopes = _list(sub, "slopes", float)
    if len(slopes) != n:
        raise ConfigError(f"field '{pre}slopes' needs {n} value(s), got {len(slopes)}")
    if any(s <= 0 for s in slopes):
        raise ConfigError(f"field '{pre}slopes' must be positive")
    offsets = _ints(sub, "offsets")
    if offsets and len(offsets) != n:
        raise ConfigError(f"field '{pre}offsets' needs {n} value(s), got {len(offsets)}")
    d_sched = []
    for v in sub.get("d_schedule", []):
        toks = v.split()
        if len(toks) != n:
            raise ConfigError(f"field '{pre}d_schedule': each entry needs {n} degree(s), got {v!r}")
        d_sched.append(tuple(_conv(pre + "d_schedule", t, int) for t in toks))
    try:
        a = _float(sub, "a", 1.0)
        if a <= 0:
            raise ConfigError(f"field '{pre}a' must be positive")
        return FamilyConfig(
            slopes, offsets, _one(sub, "perturbation", "none"),
            _float(sub, "tau_const", 0.0), _float(sub, "tau_linear", 0.0), a,
            _list(sub, "A_schedule", float), tuple(d_sched))
    except ConfigError as exc:
        raise ConfigError(str(exc).replace("field '", f"field '{pre}", 1)) from None


def load_config(source, digest: str | None = None) -> ExperimentConfig:
    """Parse and validate a configuration from a path or from text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = str(source).encode()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8: {exc}") from None
    raw = parse_text(text)
    fmt = _int(raw, "format")
    if fmt != FORMAT_VERSION:
        raise ConfigError(f"field 'format': unsupported version {fmt} (expected {FORMAT_VERSION})")
    unknown = sorted(k for k in raw if k not in _TOP_KEYS and not k.startswith("family."))
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown}")
    try:
        space = ModelSpace.parse(_one(raw, "space"))
    except ValueError as exc:
        raise ConfigError(f"field 'space': {exc}") from None
    m = _int(raw, "m", space.n)
    if m != space.n:
        raise ConfigError(f"field 'm': only m = n is supported (m={m}, n={space.n})")
    fam_ids = sorted({int(k.split(".")[1]) for k in raw if k.startswith("family.")
                      and k.split(".")[1].isdigit()})
    bad = [k for k in raw if k.startswith("family.") and not k.split(".")[1].isdigit()]
    if bad:
        raise ConfigError(f"malformed family field(s) {bad}")
    if fam_ids != list(range(m)):
        raise ConfigError(f"fields 'family.<k>.*' must cover k = 0..{m - 1}, got {fam_ids}")
    families = tuple(_family(raw, k, space.n) for k in range(m))

    p_list = _ints(raw, "p")
    if not p_list:
        raise ConfigError("field 'p': at least one value required")
    if any(p < 1 for p in p_list) or any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ConfigError(f"field 'p' must be strictly increasing positive integers, got {p_list}")
    growth_p = _ints(raw, "growth_p")
    if growth_p and any(b <= a for a, b in zip(growth_p, growth_p[1:])):
        raise ConfigError(f"field 'growth_p' must be strictly increasing, got {growth_p}")
    for k, fc in enumerate(families):
        pre = f"family.{k}."
        if fc.d_schedule and fc.A_schedule and len(fc.d_schedule) != len(fc.A_schedule):
            raise ConfigError(
                f"fields '{pre}d_schedule' ({len(fc.d_schedule)} entries) and "
                f"'{pre}A_schedule' ({len(fc.A_schedule)} entries) have different lengths")
        for key, sched in (("d_schedule", fc.d_schedule), ("A_schedule", fc.A_schedule)):
            if sched and len(sched) != len(p_list):
                raise ConfigError(f"field '{pre}{key}' has {len(sched)} entries but 'p' has "
                                  f"{len(p_list)}")
            if sched and growth_p and not set(growth_p) <= set(p_list):
                raise ConfigError(f"field 'growth_p' must be a subset of 'p' when '{pre}{key}' is set")
        if any(A <= 0 for A in fc.A_schedule):
            raise ConfigError(f"field '{pre}A_schedule' must be positive")

    samples = _int(raw, "samples", 100)
    if samples < 1:
        raise ConfigError("field 'samples' must be at least 1")
    resolution = _int(raw, "resolution", 64)
    if resolution < MIN_RESOLUTION:
        raise ConfigError(f"field 'resolution' must be at least {MIN_RESOLUTION}")
    rule = _one(raw, "rule", "gauss")
    if rule not in ("gauss", "midpoint"):
        raise ConfigError("field 'rule' must be 'gauss' or 'midpoint'")
    stages = tuple(_list(raw, "stages", str)) or STAGES
    bad_st = [s for s in stages if s not in STAGES]
    if bad_st:
        raise ConfigError(f"field 'stages': unknown stage(s) {bad_st}; choose from {list(STAGES)}")
    ensemble = _one(raw, "ensemble", "FS").upper()
    if ensemble not in Family.__members__:
        raise ConfigError(f"field 'ensemble' must be one of {list(Family.__members__)}")
    seed = _int(raw, "seed", 0)
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("field 'seed' must be an unsigned 64-bit integer")

    cfg = ExperimentConfig(
        name=_one(raw, "name", "experiment"), space=space, families=families, p_list=p_list,
        samples=samples, resolution=resolution, rule=rule,
        dictionary=tuple(_list(raw, "dictionary", str)), seed=seed, stages=stages,
        ensemble=ensemble, autopull_kind=_one(raw, "autopull_kind", "diag"),
        autopull_strength=_float(raw, "autopull_strength", 1.0),
        matrix_seed=_int(raw, "matrix_seed", 0), bump_height=_float(raw, "bump_height", 1.0),
        C0=_float(raw, "C0", 1.0), C4=_float(raw, "C4", 1.0), growth_b=_float(raw, "growth_b", 0.5),
        growth_p=growth_p, expectation_samples=_int(raw, "expectation_samples", 0),
        export_zeros=bool(_int(raw, "export_zeros", 0)),
        digest=digest or hashlib.sha256(data).hexdigest())
    # semantic checks that need the built objects
    try:
        cfg.test_functions()
        cfg.ensemble_spec()
        seq = cfg.sequence()
        for p in cfg.p_list:
            for k in range(cfg.m):
                seq.weight(k, p)
                seq.A(k, p)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.C0 <= 0 or cfg.C4 <= 0 or cfg.growth_b <= 0:
        raise ConfigError("fields 'C0', 'C4' and 'growth_b' must be positive")
    return cfg
