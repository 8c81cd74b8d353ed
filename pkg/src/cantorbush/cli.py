"""Command line front end: experiment configs, the experiment registry and reports.

Configs are flat ``key = value`` text files (``#`` starts a comment)::

    experiment = decoupling
    seed = 0
    q = 3
    trials = 10

Every run writes three files into ``output_dir``: ``<stem>.csv`` with the
measured rows, ``<stem>.checks.csv`` with the asserted checks (value,
threshold, relation, basis, pass flag) and ``<stem>.json``, a summary with
sorted keys.  Nothing time- or host-dependent is written, so a fixed seed
gives byte-identical files.  All randomness is drawn from
``numpy.random.RandomState(seed)`` (MT19937), which is stable across
platforms and numpy versions.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import __version__
from ._validation import check_random_state

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Check",
    "ExperimentResult",
    "Experiment",
    "CATALOG",
    "catalog",
    "run_experiment",
    "write_reports",
    "run",
    "main",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# configuration


def _parse_digits(text):
    text = text.strip()
    if not text or text.lower() == "none":
        return None
    return tuple(int(v) for v in text.replace(" ", "").split(","))


def _parse_optional(kind):
    def parse(text):
        text = text.strip()
        if not text or text.lower() == "none":
            return None
        return kind(text)

    return parse


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_PARSERS = {
    "experiment": str,
    "seed": int,
    "q": _parse_optional(int),
    "N": _parse_optional(int),
    "digits": _parse_digits,
    "p": float,
    "j_min": int,
    "j_max": int,
    "k_min": int,
    "k_max": int,
    "epsilon": float,
    "gamma": _parse_optional(float),
    "delta": float,
    "r": float,
    "trials": int,
    "ascent_trials": int,
    "ascent_steps": int,
    "grid": int,
    "points": int,
    "line_mode": _parse_bool,
    "output_dir": str,
    "tag": str,
}

REQUIRED = ("experiment", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on.

    ``q`` selects the Singer digit set of size ``q + 1`` in base
    ``q^2 + q + 1``; ``N`` together with ``digits`` gives an explicit digit
    set instead.  ``gamma = None`` means ``1/p + 0.05``.  ``j_min..j_max``
    index Cantor levels, ``k_min..k_max`` decoupling levels.
    """

    experiment: str
    seed: int = 0
    q: int = None
    N: int = None
    digits: tuple = None
    p: float = 4.0
    j_min: int = 1
    j_max: int = 3
    k_min: int = 1
    k_max: int = 2
    epsilon: float = 0.3
    gamma: float = None
    delta: float = 0.2
    r: float = 8.0
    trials: int = 10
    ascent_trials: int = 0
    ascent_steps: int = 10
    grid: int = 2048
    points: int = 64
    line_mode: bool = True
    output_dir: str = "reports"
    tag: str = ""

    def __post_init__(self):
        for name in ("p", "epsilon", "delta", "r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.gamma is not None:
            object.__setattr__(self, "gamma", float(self.gamma))
        if self.digits is not None:
            object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        problems = []
        if self.j_min > self.j_max:
            problems.append(f"empty j range {self.j_min}..{self.j_max}")
        if self.k_min > self.k_max:
            problems.append(f"empty k range {self.k_min}..{self.k_max}")
        if self.j_min < 0 or self.k_min < 1:
            problems.append("levels start at j >= 0 and k >= 1")
        if self.p < 2:
            problems.append(f"p={self.p} is below 2")
        if self.trials < 1:
            problems.append("trials must be >= 1")
        if min(self.grid, self.points) < 2:
            problems.append("grid and points must be >= 2")
        if not 0 < self.epsilon <= 0.5:
            problems.append("epsilon must lie in (0, 1/2]")
        if self.digits is not None and self.N is None:
            problems.append("digits need an explicit N")
        if problems:
            raise ConfigError("; ".join(problems))

    # -- derived quantities

    def digit_set(self):
        from .lambdap import DigitSet, singer_difference_set

        if self.digits is not None:
            return DigitSet(self.N, self.digits)
        if self.q is None:
            raise ConfigError(f"experiment {self.experiment!r} needs q, or N with digits")
        return singer_difference_set(self.q)

    @property
    def alpha(self):
        try:
            S = self.digit_set()
        except (ConfigError, ValueError):
            return None
        return math.log(len(S)) / math.log(S.N)

    @property
    def gamma_value(self):
        return 1.0 / self.p + 0.05 if self.gamma is None else self.gamma

    def stem(self):
        return self.experiment + (f"-{self.tag}" if self.tag else "")

    # -- serialization

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self):
        lines = [f"# cantorbush experiment config (version {__version__})"]
        a = self.alpha
        if a is not None:
            lines.append(f"# derived alpha = {a!r}")
        for name in sorted(_PARSERS):
            lines.append(f"{name} = {_format_value(getattr(self, name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, defaults=None):
        """Parse the flat ``key = value`` format.

        ``defaults`` (a mapping) fills keys absent from the text; the catalog
        defaults of the named experiment are used when it is None.

        Raises
        ------
        ConfigError
            On a line without ``=``, an unknown or repeated key, a value of
            the wrong type, or missing required keys (all of them listed).
        """
        values = {}
        errors = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
                continue
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "j":
                pairs = [("j_min", value), ("j_max", value)]
            elif key == "k":
                pairs = [("k_min", value), ("k_max", value)]
            else:
                pairs = [(key, value)]
            for key, value in pairs:
                if key not in _PARSERS:
                    errors.append(f"line {lineno}: unknown key {key!r}")
                    continue
                if key in values:
                    errors.append(f"line {lineno}: duplicate key {key!r}")
                    continue
                try:
                    values[key] = _PARSERS[key](value)
                except ValueError as exc:
                    errors.append(f"line {lineno}: bad value for {key}: {exc}")
        missing = [k for k in REQUIRED if k not in values]
        if missing:
            errors.append("missing required fields: " + ", ".join(missing))
        if errors:
            raise ConfigError("\n".join(errors))
        if defaults is None:
            exp = CATALOG.get(values["experiment"])
            if exp is None:
                raise ConfigError(f"unknown experiment {values['experiment']!r}; see 'cantorbush catalog'")
            defaults = exp.defaults
        merged = dict(defaults)
        merged.update(values)
        return cls(**merged)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


# ---------------------------------------------------------------------------
# results


@dataclass
class Check:
    """One asserted comparison ``value <relation> threshold``.

    ``basis`` says where the threshold comes from: ``exact`` (a closed form
    or exact count), ``bound`` (an inequality with an explicit constant) or
    ``measured`` (a cross-run comparison of measured constants).
    """

    name: str
    value: float
    threshold: float
    relation: str = "<="
    basis: str = "exact"

    @property
    def passed(self):
        v, t = float(self.value), float(self.threshold)
        if math.isnan(v):
            return False
        return {"<=": v <= t, ">=": v >= t, "==": v == t}[self.relation]

    def row(self):
        return {"check": self.name, "value": self.value, "relation": self.relation,
                "threshold": self.threshold, "basis": self.basis, "passed": self.passed}


@dataclass
class ExperimentResult:
    rows: list
    checks: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    module: str
    summary: str
    runner: object
    defaults: dict
    exact_moment: bool = False
    command: str = "run"


CATALOG = {}


def _register(name, anchor, module, summary, command, exact_moment=False, **defaults):
    def deco(fn):
        base = {"experiment": name}
        base.update(defaults)
        CATALOG[name] = Experiment(name, anchor, module, summary, fn, base, exact_moment, command)
        return fn

    return deco


def _tree(cfg, depth):
    from .cantor import build_self_similar

    return build_self_similar(cfg.digit_set(), J=depth)


# ---------------------------------------------------------------------------
# cantor


@_register("cantor-construct", "cantor-construct", "cantor",
           "Build the digit tree; interval measures are exact powers", "construct", q=3, j_min=0, j_max=4)
def _run_construct(cfg, rng):
    from .cantor import ancestor_ratios, tree_to_json

    tree = _tree(cfg, max(cfg.j_max, 1))
    rows = [{"level": j, "nodes": len(tree.nodes(j)), "expected": tree.N0 ** j,
             "measure_per_node": float(Fraction(1, tree.N0 ** j))} for j in range(cfg.j_min, cfg.j_max + 1)]
    ratios = ancestor_ratios(tree, cfg.j_max)
    worst = max(abs(float(r - 1)) for r in ratios)
    bad_counts = sum(r["nodes"] != r["expected"] for r in rows)
    checks = [Check("ancestor_ratio_defect", worst, 0.0, "==", "exact"),
              Check("levels_with_wrong_node_count", bad_counts, 0, "==", "exact")]
    return ExperimentResult(rows, checks, {"tree": json.loads(tree_to_json(tree))})


@_register("main-e1b", "main-e1b", "cantor",
           "Frostman ratios mu(B(x,r))/r^alpha: implied constant stable in depth", "construct",
           q=3, j_min=3, j_max=6)
def _run_frostman(cfg, rng):
    from .cantor import ancestor_ratios, frostman_scan

    tree = _tree(cfg, cfg.j_max)
    reports = [frostman_scan(tree, J, max_centers=cfg.points * 4) for J in (cfg.j_min, cfg.j_max)]
    rows = [r.as_row() for r in reports]
    c0, c1 = reports[0].implied_constant, reports[1].implied_constant
    drift = max(c0 / c1, c1 / c0)
    exact = max(abs(float(r - 1)) for r in ancestor_ratios(tree, cfg.j_min))
    return ExperimentResult(rows, [Check("implied_constant_drift", drift, 2.0, "<=", "bound"),
                                   Check("ancestor_interval_defect", exact, 0.0, "==", "exact")])


# ---------------------------------------------------------------------------
# lambdap


@_register("sidon", "largeA", "lambdap", "Singer difference sets are Sidon with q+1 elements", "lambdap", q=3)
def _run_sidon(cfg, rng):
    from .lambdap import is_sidon

    S = cfg.digit_set()
    cert = is_sidon(S)
    n = len(S)
    rows = [{"N": S.N, "n": n, "digits": " ".join(map(str, S.elements)), "sidon": cert.is_sidon,
             "energy": cert.energy}]
    checks = [Check("is_sidon", int(cert.is_sidon), 1, "==", "exact"),
              Check("energy_minus_2n2_minus_n", cert.energy - (2 * n * n - n), 0, "==", "exact")]
    if cfg.q is not None and cfg.digits is None:
        checks.append(Check("size_minus_q_plus_1", n - (cfg.q + 1), 0, "==", "exact"))
    return ExperimentResult(rows, checks)


@_register("energy", "bourgain-thm", "lambdap",
           "Fourth-moment quadrature equals the additive energy", "lambdap", True, trials=10, points=40, grid=400)
def _run_energy(cfg, rng):
    from .lambdap import DigitSet, additive_energy, exponential_sum_moment

    rows, worst = [], 0.0
    k = int(round(cfg.p / 2))
    for i in range(cfg.trials):
        size = int(rng.randint(2, cfg.points + 1))
        elems = rng.choice(np.arange(cfg.grid), size=size, replace=False)
        S = DigitSet(cfg.grid + 1, elems)
        E = additive_energy(S, k).value
        m = exponential_sum_moment(S, cfg.p)
        rel = abs(m - E) / E
        worst = max(worst, rel)
        rows.append({"trial": i, "size": size, "energy": E, "quadrature": m, "rel_error": rel})
    return ExperimentResult(rows, [Check("max_rel_error", worst, 1e-9, "<=", "exact")])


@_register("lambda-p-0", "lambda-p-0", "lambdap",
           "Unit Lambda(4) ratios: Singer sets stay below 2^(1/4), full intervals grow like N^(1/4)",
           "lambdap", True, q=3, trials=4, ascent_steps=50)
def _run_lambda_contrast(cfg, rng):
    from .lambdap import DigitSet, lambda_p_ratio_exact_even, lambda_p_ratio_search

    S = cfg.digit_set()
    n = len(S)
    unit = lambda_p_ratio_exact_even(S, 2)
    closed = (2 - 1 / n) ** 0.25
    est = lambda_p_ratio_search(S, 4, trials=cfg.trials, steps=cfg.ascent_steps, random_state=rng)
    rows = [{"set": f"singer-q{cfg.q}" if cfg.q else "digits", "n": n, "unit_ratio": unit,
             "closed_form": closed, "searched_sup": est.ratio_sup}]
    checks = [Check("singer_unit_minus_closed_form", abs(unit - closed), 1e-9, "<=", "exact"),
              Check("singer_unit_ratio", unit, 2 ** 0.25, "<=", "exact"),
              Check("search_at_least_unit", est.ratio_sup - unit, 0.0, ">=", "exact")]
    for M in (16, 64, 256):
        r = lambda_p_ratio_exact_even(DigitSet(M + 1, range(M)), 2)
        floor = 0.9 * (2 / 3) ** 0.25 * M ** 0.25
        rows.append({"set": f"full-{M}", "n": M, "unit_ratio": r, "closed_form": floor / 0.9, "searched_sup": ""})
        checks.append(Check(f"full_{M}_ratio", r, floor, ">=", "bound"))
    return ExperimentResult(rows, checks)


# ---------------------------------------------------------------------------
# spectral


@_register("fourier-decay", "fourier-decay", "spectral",
           "Self-similar transforms do not decay along N^j", "spectrum", q=3, j_min=1, j_max=4)
def _run_fourier(cfg, rng):
    from .spectral import mu_hat_selfsimilar

    S = cfg.digit_set()
    base = mu_hat_selfsimilar(S.elements, S.N, 1.0, K=40)
    rows, worst = [], 0.0
    for j in range(cfg.j_min, cfg.j_max + 1):
        v = mu_hat_selfsimilar(S.elements, S.N, float(S.N) ** j, K=40)
        worst = max(worst, abs(v - base))
        rows.append({"j": j, "abs_mu_hat": abs(v), "abs_mu_hat_1": abs(base), "difference": abs(v - base)})
    return ExperimentResult(rows, [Check("max_difference_from_xi_1", worst, 1e-8, "<=", "exact")],
                            {"abs_mu_hat_1": abs(base)})


# ---------------------------------------------------------------------------
# operators

_KERNEL_DEFAULTS = dict(N=7, digits=(1, 2, 4), j_min=1, j_max=2, epsilon=0.3)


@lru_cache(maxsize=8)
def _kernel(N, digits, j, epsilon, gamma):
    from .cantor import build_self_similar
    from .lambdap import DigitSet
    from .operators import truncate_main

    tree = build_self_similar(DigitSet(N, digits), J=j)
    return truncate_main(j, tree.numerators(j)[0], epsilon, 1, tree, gamma)


def _kernels(cfg):
    S = cfg.digit_set()
    return S, [(j, *_kernel(S.N, S.elements, j, cfg.epsilon, cfg.gamma_value))
               for j in range(cfg.j_min, cfg.j_max + 1)]


def _spread(values):
    return max(values) / min(values)


@_register("mult-lemma1", "mult-lemma1", "operators",
           "Multiplier support and agreement of the t- and y-integral forms", "maximal",
           N=7, digits=(1, 2, 4), j_min=1, j_max=1, trials=100)
def _run_multiplier(cfg, rng):
    from .operators import multiplier_mtilde, multiplier_mtilde_dual
    from .operators.multipliers import multiplier_support

    tree = _tree(cfg, cfg.j_min + 1)
    j, g = cfg.j_min, cfg.gamma_value
    lo, hi = multiplier_support(j, tree.N)
    rows, diffs, mags = [], [], []
    for i in range(cfg.trials):
        xi = math.exp(rng.uniform(math.log(lo), math.log(hi))) * (1 if rng.random() < 0.5 else -1)
        s = rng.uniform(-20.0, 20.0)
        a = multiplier_mtilde(j, g, xi, s, tree)
        b = multiplier_mtilde_dual(j, g, xi, s, tree)
        diffs.append(abs(a - b))
        mags.append(abs(a))
        rows.append({"xi": xi, "s": s, "t_form": abs(a), "y_form": abs(b), "difference": abs(a - b)})
    outside = [x for x in (0.99 * lo, 1.01 * hi, -1.01 * hi, 0.3 * lo, 10 * hi)]
    leak = max(abs(multiplier_mtilde(j, g, x, 0.5, tree)) for x in outside)
    rel = max(diffs) / max(mags)
    return ExperimentResult(rows, [Check("outside_support_abs", leak, 0.0, "==", "exact"),
                                   Check("form_disagreement_rel_to_max", rel, 1e-6, "<=", "exact")])


@_register("k-decay", "prop-k-decay", "operators",
           "Kernel envelope constants (M=2) and peak height against N^j", "maximal", **_KERNEL_DEFAULTS)
def _run_kernel_decay(cfg, rng):
    from .operators import verify_kernel_decay

    _, ks = _kernels(cfg)
    rows = []
    for j, K, tail, pred in ks:
        d = verify_kernel_decay(K, 2)
        rows.append({k: d[k] for k in ("j", "C_u", "C_t", "C_joint", "peak_over_Nj", "far_field_ratio")})
    return ExperimentResult(rows, [
        Check("envelope_constant_spread", _spread([r["C_joint"] for r in rows]), 4.0, "<=", "measured"),
        Check("peak_over_Nj_spread", _spread([r["peak_over_Nj"] for r in rows]), 2.0, "<=", "measured"),
    ])


@_register("fourier-local", "fourier-local", "operators",
           "L1 norm of K - K_main falls with j at rate N^-eps", "maximal", **_KERNEL_DEFAULTS)
def _run_tail(cfg, rng):
    S, ks = _kernels(cfg)
    rows = [{"j": j, "tail_l1": tail, "rate": pred} for j, K, tail, pred in ks]
    checks = []
    limit = 2 * float(S.N) ** (-cfg.epsilon)
    for a, b in zip(rows, rows[1:]):
        checks.append(Check(f"tail_ratio_{a['j']}_{b['j']}", b["tail_l1"] / a["tail_l1"], limit, "<=", "bound"))
    return ExperimentResult(rows, checks)


@_register("cor-falp", "cor-falp", "operators",
           "Localized operator norm over N^{j(gamma-alpha)} is stable in j", "maximal", **_KERNEL_DEFAULTS)
def _run_falp(cfg, rng):
    from .operators import falp_constant

    _, ks = _kernels(cfg)
    rows = []
    for j, K, tail, pred in ks:
        rows.append({"j": j, "C": falp_constant(K, cfg.p, random_state=int(rng.randint(2 ** 31))), "gamma": K.gamma, "alpha": K.alpha})
    return ExperimentResult(rows, [Check("C_spread", _spread([r["C"] for r in rows]), 4.0, "<=", "measured")])


@_register("e-m-restricted", "e-m-restricted", "operators",
           "Single-scale maximal operator on band-limited probes: fitted growth exponent", "maximal",
           q=3, j_min=1, j_max=3, trials=2)
def _run_maximal(cfg, rng):
    from .operators import operator_norm_probe

    tree = _tree(cfg, cfg.j_max + 1)
    est = operator_norm_probe("maximal", tree, cfg.p, range(cfg.j_min, cfg.j_max + 1), count=cfg.trials,
                              random_state=rng, n_x=cfg.grid)
    return ExperimentResult(est.rows(), [Check("beta", est.beta, 0.25, "<=", "bound")],
                            {"residual": est.residual})


@_register("ave-e1", "ave-e1", "operators",
           "A_t is an L^p contraction; mixed L^r_t L^p_x averages stay bounded in j", "average",
           q=3, j_min=1, j_max=3, trials=2, r=8.0)
def _run_average(cfg, rng):
    from .operators import averaging_op, mixed_norm_average, probe_family
    from .operators.averaging import lp_norm

    tree = _tree(cfg, cfg.j_max + 1)
    N = tree.N
    worst_contraction = 0.0
    rows = []
    for j in range(cfg.j_min, cfg.j_max + 1):
        best = 0.0
        for fam in ("single", "near", "sparse", "packet"):
            for pr in probe_family(fam, j, N, cfg.trials, rng):
                base = lp_norm(pr, cfg.p)
                best = max(best, mixed_norm_average(pr, tree, cfg.r, cfg.p) / base)
                for t in (0.5, 1.0, 1.5, 2.0):
                    worst_contraction = max(worst_contraction, lp_norm(averaging_op(pr, t, tree), cfg.p) / base)
        rows.append({"j": j, "mixed_ratio": best})
    growth = rows[-1]["mixed_ratio"] / rows[0]["mixed_ratio"]
    return ExperimentResult(rows, [Check("average_contraction", worst_contraction, 1 + 1e-6, "<=", "exact"),
                                   Check("mixed_norm_growth", growth, 2.0, "<=", "bound")])


# ---------------------------------------------------------------------------
# decoupling


def _random_slope(rng):
    return Fraction(int(rng.randint(1, 400)), int(rng.randint(1, 100)))


@_register("cc-e1", "cc-e1", "decoupling",
           "Rotated frames are scaled rotations preserving the pairing; bush segments stay in their strips",
           "decouple", N=7, digits=(1, 2, 4), trials=1000)
def _run_frames(cfg, rng):
    from .decoupling import RotatedFrame, bush_containment_check

    S = cfg.digit_set()
    gram = pairing = 0.0
    violations = checked = 0
    for _ in range(cfg.trials):
        fr = RotatedFrame(float(rng.normal(scale=3.0)))
        gram = max(gram, fr.gram_defect())
        xt, xs = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        scale = np.abs(np.sum(xt * xs, axis=1)) + 1.0
        pairing = max(pairing, float(np.max(fr.pairing_defect(xt, xs) / scale)))
        a = _random_slope(rng)
        da = Fraction(1, S.N ** int(rng.randint(0, 4)))
        xi1 = Fraction(int(rng.randint(1, 10 ** 6)), int(rng.randint(1, 1000)))
        xi2 = xi1 + xi1 / S.N * Fraction(int(rng.randint(1, 1001)), 1000)
        rep = bush_containment_check(a, da, xi1, xi2, S, samples_per_branch=3)
        checked += rep.checked
        violations += len(rep.violations)
    rows = [{"instances": cfg.trials, "gram_defect": gram, "pairing_defect": pairing,
             "containment_checked": checked, "containment_violations": violations}]
    return ExperimentResult(rows, [Check("gram_defect", gram, 1e-12, "<=", "exact"),
                                   Check("pairing_defect", pairing, 1e-12, "<=", "exact"),
                                   Check("containment_violations", violations, 0, "==", "exact")])


@_register("decoupling", "decoupling", "decoupling",
           "Single-step weighted ratio: largest value over random and ascent-refined trials", "decouple", True,
           q=3, trials=200, ascent_trials=50, ascent_steps=10)
def _run_single(cfg, rng):
    from .decoupling import global_ratio, single_step_experiment, single_step_family, unit_trial

    S = cfg.digit_set()
    rep = single_step_experiment(S, p=cfg.p, trials=cfg.trials, ascent_trials=cfg.ascent_trials,
                                 ascent_steps=cfg.ascent_steps, random_state=rng)
    n = len(S)
    rows = rep.rows()
    checks = []
    if cfg.p == 4:
        lower = (2 - 1 / n) ** 0.25
        unit_global = global_ratio(unit_trial(single_step_family(S, profile="delta")), p=4)
        rows[0]["unit_global_ratio"] = unit_global
        checks += [Check("C1_at_least_unit_lambda4", rep.C1, lower, ">=", "bound"),
                   Check("unit_global_minus_closed_form", abs(unit_global - lower), 1e-9, "<=", "exact")]
    return ExperimentResult(rows, checks, {"C1": rep.C1})


@_register("multi-e", "multi-e", "decoupling",
           "Multilevel ratios per level; growth constant and the weight-compare constant", "decouple", True,
           q=3, k_min=1, k_max=3, trials=6)
def _run_multilevel(cfg, rng):
    from .decoupling import multilevel_experiment

    tree = _tree(cfg, cfg.k_max)
    steps = cfg.ascent_steps if cfg.ascent_trials else 0
    rep = multilevel_experiment(tree, cfg.k_max, trials=cfg.trials, p=cfg.p, random_state=rng,
                                xi_lines=1 if cfg.line_mode else None, ascent_steps=steps)
    rows = [r for r in rep.rows() if r["k"] >= cfg.k_min]
    ref = 100 * math.log10(1 + math.sqrt(2))
    checks = [Check("log10_C4_vs_corner_bound", rep.log10_C4, ref + 1e-9, "<=", "bound")]
    return ExperimentResult(rows, checks, {"C2": rep.C2, "C3": rep.C3, "log10_C4": rep.log10_C4})


@_register("p2-collapse", "decoupling-global", "decoupling",
           "At p=2 every decoupling ratio should collapse to at most 1", "decouple", True,
           q=3, p=2.0, k_max=2, trials=10)
def _run_p2(cfg, rng):
    from .decoupling import (bush_family, global_ratio, multilevel_ratios, random_trial, single_step_family,
                             single_step_ratio, strip_family)

    if cfg.p != 2:
        raise ConfigError("p2-collapse runs at p = 2 only")
    S = cfg.digit_set()
    tree = _tree(cfg, cfg.k_max)
    single = single_step_family(S)
    N = tree.N
    strip = strip_family(tree, 1.0, 1.0 / N, N ** 2, N ** 2 * (1 + 1 / N))
    bush = bush_family(tree, cfg.k_max, xi_lines=1 if cfg.line_mode else None)
    worst = {"single": 0.0, "strip": 0.0, "multilevel": 0.0, "global": 0.0}
    for _ in range(cfg.trials):
        t = random_trial(single, rng)
        worst["single"] = max(worst["single"], single_step_ratio(t, p=2))
        worst["global"] = max(worst["global"], global_ratio(t, p=2))
        worst["strip"] = max(worst["strip"], multilevel_ratios(random_trial(strip, rng), p=2)[1])
        tb = random_trial(bush, rng)
        worst["multilevel"] = max(worst["multilevel"], max(multilevel_ratios(tb, p=2).values()))
        worst["global"] = max(worst["global"], global_ratio(tb, p=2))
    rows = [{"family": k, "max_ratio": v} for k, v in worst.items()]
    checks = [Check(f"{k}_p2_ratio", v, 1 + (1e-6 if k == "global" else 1e-3), "<=", "bound")
              for k, v in worst.items()]
    return ExperimentResult(rows, checks)


@_register("partition", "partition", "decoupling",
           "Tile weights sum to about one; the frequency cover of the bush has bounded overlap", "decouple",
           N=7, digits=(1, 2, 4), j_min=1, j_max=1, points=2000)
def _run_partition(cfg, rng):
    from .decoupling import Tiling, bush_cover, frame_from_slope, partition_check

    floor = (1 + math.sqrt(2)) ** -100
    rows, checks = [], []
    for slope in (None, 0.7):
        til = Tiling(1.0, (-10, 10), (-10, 10), None if slope is None else frame_from_slope(slope))
        pts = rng.uniform(-3, 3, size=(200, 2))
        lo, hi = partition_check(til, pts)
        rows.append({"kind": "tiling", "slope": slope if slope is not None else 0.0, "min_sum": lo, "max_sum": hi})
        checks += [Check(f"tiling_min_slope_{slope or 0}", lo, floor, ">=", "bound"),
                   Check(f"tiling_max_slope_{slope or 0}", hi, 1.1, "<=", "bound")]
    tree = _tree(cfg, cfg.j_max)
    for j in range(cfg.j_min, cfg.j_max + 1):
        cov = bush_cover(j, cfg.epsilon, tree.N, tree, samples=cfg.points, random_state=rng)
        rows.append({"kind": "bush_cover", "j": j, "pieces": cov.count, "strips": len(cov.strips),
                     "log_count_over_log_N": cov.scaling_exponent(), "uncovered": cov.uncovered,
                     "branch_multiplicity": cov.branch_multiplicity, "union_multiplicity": cov.union_multiplicity})
        checks += [Check(f"uncovered_j{j}", cov.uncovered, 0, "==", "exact"),
                   Check(f"branch_multiplicity_j{j}", cov.branch_multiplicity, 16, "<=", "bound")]
    return ExperimentResult(rows, checks)


# ---------------------------------------------------------------------------
# geometry


@_register("wtaf", "WTAF", "geometry",
           "Unions of scaled Cantor copies: calibrated neighbourhood ratio and Minkowski slope", "wtaf",
           q=3, j_min=1, j_max=4, delta=0.2, points=64)
def _run_wtaf(cfg, rng):
    from .geometry import (build_union_cover, calibrated_ratios, cantor_cover, cover_points, grid_family,
                           minkowski_estimate)

    tree = _tree(cfg, cfg.j_max)
    fam = grid_family(tree, cfg.j_min, n_points=cfg.points, random_state=rng)
    levels = range(cfg.j_min, cfg.j_max + 1)
    X = [build_union_cover(fam.at_level(j)) for j in levels]
    Y = [cover_points(fam.points, tree.N, j) for j in levels]
    rows = calibrated_ratios(X, Y, cfg.delta, cfg.p)
    for row, x, y in zip(rows, X, Y):
        row.update({"X_cells": x.count, "Y_cells": y.count})
    checks = [Check(f"ratio_j{r['level']}_vs_first", r["ratio"], r["threshold"], ">=", "measured") for r in rows[1:]]
    if cfg.j_max - cfg.j_min >= 2:
        est = minkowski_estimate(cantor_cover(tree, j) for j in levels)
        checks.append(Check("minkowski_slope_minus_alpha", abs(est.slope - tree.alpha), 0.05, "<=", "bound"))
    return ExperimentResult(rows, checks, {"alpha": tree.alpha})


# ---------------------------------------------------------------------------
# running and reporting


def _is_even_integer(p):
    return float(p) == int(p) and int(p) % 2 == 0


def validate(cfg):
    """Experiment-specific checks beyond the config invariants."""
    exp = CATALOG.get(cfg.experiment)
    if exp is None:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; known: {', '.join(sorted(CATALOG))}")
    if exp.exact_moment and not _is_even_integer(cfg.p):
        raise ConfigError(
            f"p={cfg.p:g} is not an even integer, but {cfg.experiment!r} uses the exact moment path, which "
            f"expands |f|^p as a finite trigonometric sum. Set p to 2, 4 or 6, or use an experiment "
            f"without this restriction (e.g. e-m-restricted or ave-e1).")
    if cfg.digits is None and cfg.q is None:
        return exp
    try:
        S = cfg.digit_set()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if S.N - 1 in S.elements:
        raise ConfigError(f"digit N-1={S.N - 1} is not allowed in a Cantor digit set")
    return exp


def run_experiment(cfg):
    exp = validate(cfg)
    rng = check_random_state(cfg.seed)
    return exp.runner(cfg, rng)


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return format(v, ".12g") if math.isfinite(v) else str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v)
    return "" if v is None else str(v)


def _csv_text(rows):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_cell(r.get(k)) for k in keys])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float(format(v, ".12g")) if math.isfinite(v) else str(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def summary(cfg, result):
    exp = CATALOG[cfg.experiment]
    return {
        "experiment": cfg.experiment,
        "anchor": exp.anchor,
        "module": exp.module,
        "version": __version__,
        "generator": "numpy.random.RandomState (MT19937)",
        "config": cfg.to_dict(),
        "alpha": cfg.alpha,
        "checks": [c.row() for c in result.checks],
        "passed": result.passed,
        "notes": result.notes,
    }


def write_reports(cfg, result, output_dir=None):
    """Write the row table, the check table and the JSON summary; return the paths."""
    out = output_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, cfg.stem())
    paths = [stem + ".csv", stem + ".checks.csv", stem + ".json"]
    texts = [_csv_text(result.rows), _csv_text([c.row() for c in result.checks]),
             json.dumps(_jsonable(summary(cfg, result)), indent=1, sort_keys=True) + "\n"]
    for path, text in zip(paths, texts):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return paths


def catalog():
    """Text listing of every experiment with its anchor, module, subcommand and defaults."""
    lines = []
    for name in sorted(CATALOG):
        e = CATALOG[name]
        lines.append(f"{name}  (anchor: {e.anchor})  module: {e.module}  subcommand: {e.command}")
        lines.append(f"    {e.summary}")
        defaults = " ".join(f"{k}={_format_value(v)}" for k, v in sorted(e.defaults.items()) if k != "experiment")
        lines.append(f"    defaults: {defaults or '-'}")
    return "\n".join(lines) + "\n"


def _print_result(cfg, result, stream):
    stream.write(_csv_text(result.rows))
    for c in result.checks:
        flag = "PASS" if c.passed else "FAIL"
        stream.write(f"{flag} {cfg.experiment}:{c.name} {_cell(c.value)} {c.relation} {_cell(c.threshold)}\n")


def run(config_paths, jobs=1, output_dir=None, stream=None):
    """Run config files (possibly concurrently) and write reports in input order.

    Returns the exit status: 0 when every asserted check passes, 1 otherwise
    (including configuration errors, which are reported on stderr).
    """
    stream = stream or sys.stdout
    try:
        cfgs = [c if isinstance(c, ExperimentConfig) else ExperimentConfig.load(c) for c in config_paths]
        for c in cfgs:
            validate(c)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    with ThreadPoolExecutor(max_workers=max(1, int(jobs))) as pool:
        futures = [pool.submit(run_experiment, c) for c in cfgs]
        status = 0
        for cfg, fut in zip(cfgs, futures):
            try:
                res = fut.result()
            except ConfigError as exc:
                sys.stderr.write(f"error in {cfg.experiment}: {exc}\n")
                status = 1
                continue
            for path in write_reports(cfg, res, output_dir):
                stream.write(f"wrote {path}\n")
            _print_result(cfg, res, stream)
            status |= 0 if res.passed else 1
    return status


# ---------------------------------------------------------------------------
# argument parsing

_FLAG_TYPES = {
    "seed": int, "q": int, "N": int, "digits": _parse_digits, "p": float, "j_min": int, "j_max": int,
    "k_min": int, "k_max": int, "epsilon": float, "gamma": float, "delta": float, "r": float, "trials": int,
    "ascent_trials": int, "ascent_steps": int, "grid": int, "points": int, "line_mode": _parse_bool,
    "tag": str,
}


def _add_config_flags(sp):
    for name, kind in _FLAG_TYPES.items():
        sp.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    sp.add_argument("--j", dest="j", type=int, default=None, help="shorthand for --j-min J --j-max J")
    sp.add_argument("--output-dir", default=None, help="write CSV/JSON reports here")
    sp.add_argument("--save-config", default=None, help="write the resolved config to this path")


def _config_from_args(name, args):
    values = dict(CATALOG[name].defaults)
    for key in _FLAG_TYPES:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.j is not None:
        values["j_min"] = values["j_max"] = args.j
    if args.q is not None and args.N is None and args.digits is None:
        values.pop("N", None)
        values.pop("digits", None)
    return ExperimentConfig(**values)


def build_parser():
    parser = argparse.ArgumentParser(prog="cantorbush", description="Numerical experiments on Cantor-set "
                                     "maximal operators, Lambda(p) sets and Cantor-bush decoupling.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    by_command = {}
    for e in CATALOG.values():
        by_command.setdefault(e.command, []).append(e.name)
    primary = {"construct": "cantor-construct", "lambdap": "lambda-p-0", "spectrum": "fourier-decay",
               "maximal": "e-m-restricted", "average": "ave-e1", "decouple": "decoupling", "wtaf": "wtaf"}
    helps = {"construct": "build a digit tree and check its measure",
             "lambdap": "Sidon sets, energies and Lambda(p) ratios",
             "spectrum": "Fourier transform of the Cantor measure",
             "maximal": "multipliers, kernels and the maximal operator",
             "average": "averaging operators and mixed norms",
             "decouple": "decoupling ratios and bush geometry",
             "wtaf": "unions of scaled Cantor copies"}
    for cmd, default in primary.items():
        sp = sub.add_parser(cmd, help=helps[cmd])
        sp.add_argument("--experiment", choices=sorted(by_command[cmd]), default=default)
        _add_config_flags(sp)
    sub.add_parser("catalog", help="list experiments with anchors and defaults")
    sp = sub.add_parser("run", help="run experiments from config files")
    sp.add_argument("configs", nargs="*", help="config files in key = value format")
    sp.add_argument("--all", action="store_true", help="run the whole catalog with default configs")
    sp.add_argument("--seed", type=int, default=0, help="seed for --all")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--output-dir", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        sys.stdout.write(catalog())
        return 0
    if args.command == "run":
        configs = list(args.configs)
        if args.all:
            configs += [ExperimentConfig(**dict(e.defaults, seed=args.seed)) for _, e in sorted(CATALOG.items())]
        if not configs:
            sys.stderr.write("error: give config files or --all\n")
            return 1
        t0 = time.perf_counter()
        status = run(configs, args.jobs, args.output_dir)
        sys.stderr.write(f"finished in {time.perf_counter() - t0:.1f} s\n")
        return status
    try:
        cfg = _config_from_args(args.experiment, args)
        validate(cfg)
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    if args.save_config:
        cfg.save(args.save_config)
    res = run_experiment(cfg)
    if args.output_dir:
        for path in write_reports(cfg, res, args.output_dir):
            sys.stdout.write(f"wrote {path}\n")
    _print_result(cfg, res, sys.stdout)
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
