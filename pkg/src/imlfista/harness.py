"""Benchmark scenarios: test images, degradations, lambda search, comparisons."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .imgcore import ConfigError, normalize, read_image, snr
from .linops import InpaintMask, SeparableBlur, TvOperator, nltv_build
from .mlevel import DEFAULT_GAMMA, Hierarchy, LevelProblem, build_hierarchy
from .solver import RunTrace, SolverConfig, run


@dataclass(frozen=True)
class Scenario:
    task: str = "deblur"
    image: str = "camera"
    size: int = 256
    psf_dim: Optional[int] = 20
    psf_sigma: Optional[float] = 3.6
    keep_prob: Optional[float] = None
    noise_sigma: float = 0.01
    regularizer: str = "tv"
    lam: float = 1e-3
    gamma: float = DEFAULT_GAMMA
    levels: int = 5
    filter: str = "sym10"
    p: int = 2
    m: int = 5
    d: float = 1.0
    a: float = 4.0
    tol0: float = 1e-8
    max_inner: int = 500
    max_outer: int = 100
    seed: int = 0

    def __post_init__(self):
        blur = self.psf_dim is not None or self.psf_sigma is not None
        mask = self.keep_prob is not None
        if self.task == "deblur":
            if not (self.psf_dim and self.psf_sigma) or mask:
                raise ConfigError("deblur needs psf_dim and psf_sigma and no keep_prob")
        elif self.task == "inpaint":
            if not mask or blur:
                raise ConfigError("inpaint needs keep_prob and no PSF parameters")
        else:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.regularizer not in ("tv", "nltv"):
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")

    def solver_config(self, ml: bool = True, **kw) -> SolverConfig:
        base = dict(d=self.d, a=self.a if self.d > 0 else 2.0, p=self.p, m=self.m,
                    tol0=self.tol0, max_inner=self.max_inner, max_outer=self.max_outer,
                    seed=self.seed, ml_enabled=ml)
        base.update(kw)
        return SolverConfig(**base)


# --------------------------------------------------------------------------
# key = value config files

def _coerce(name: str, text: str):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    kind = {f.name: f.type for f in fields(Scenario)}[name]
    if "int" in str(kind):
        return int(float(text))
    if "float" in str(kind):
        return float(text)
    return text


def parse_config(text: str) -> dict:
    out = {}
    names = {f.name for f in fields(Scenario)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def scenario_from(overrides: dict, base: Optional[Scenario] = None) -> Scenario:
    base_d = asdict(base) if base is not None else {}
    if overrides.get("task") == "inpaint" and "psf_dim" not in overrides:
        base_d.update(psf_dim=None, psf_sigma=None)
    base_d.update(overrides)
    return Scenario(**base_d)


def format_config(sc: Scenario) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(sc).items())


# --------------------------------------------------------------------------
# images

def phantom(n: int = 64) -> np.ndarray:
    """Piecewise-smooth synthetic image in [0, 1]."""
    yy, xx = np.mgrid[0:n, 0:n] / float(n)
    img = 0.2 + 0.3 * xx
    img = np.where((xx - 0.35) ** 2 + (yy - 0.4) ** 2 < 0.06, 0.8 - 0.4 * yy, img)
    img = np.where((np.abs(xx - 0.72) < 0.12) & (np.abs(yy - 0.7) < 0.18), 1.0, img)
    img = np.where((xx - 0.7) ** 2 / 0.01 + (yy - 0.25) ** 2 / 0.003 < 1, 0.05, img)
    return normalize(img)


def camera(n: int = 256) -> np.ndarray:
    """Shipped 256x256 grayscale photo, block-averaged for smaller ``n``."""
    ref = resources.files("imlfista").joinpath("data/camera256.pgm")
    with resources.as_file(ref) as p:
        img = read_image(p)
    if n != 256:
        if 256 % n:
            raise ConfigError("camera size must divide 256")
        f = 256 // n
        img = img.reshape(n, f, n, f).mean(axis=(1, 3))
    return normalize(img)


def load_image(name: str, size: int) -> np.ndarray:
    if name == "phantom":
        return phantom(size)
    if name == "camera":
        return camera(size)
    return normalize(read_image(name))


# --------------------------------------------------------------------------
# problem construction

def degrade(x_true: np.ndarray, sc: Scenario):
    """Return ``(z, A)`` with ``z = A x_true + noise`` (all randomness seeded)."""
    mask_seq, noise_seq = np.random.SeedSequence(sc.seed).spawn(2)
    shape = x_true.shape[:2]
    if sc.task == "deblur":
        A = SeparableBlur.gaussian(shape, sc.psf_dim, sc.psf_sigma)
    else:
        A = InpaintMask.bernoulli(shape, sc.keep_prob, mask_seq)
    z = A.apply(x_true)
    if sc.noise_sigma > 0:
        z = z + sc.noise_sigma * np.random.default_rng(noise_seq).standard_normal(z.shape)
    return z, A


def wiener_init(A, z: np.ndarray, noise_sigma: float) -> np.ndarray:
    """Wiener-type inverse for a separable blur, ``z`` itself otherwise.

    Uses the SVDs of the Kronecker factors with a constant noise-to-signal
    ratio ``sigma^2 / (var(z) - sigma^2)``.
    """
    if not isinstance(A, SeparableBlur):
        return np.array(z, copy=True)
    uc, sc_, vct = np.linalg.svd(A.col_factor)
    ur, sr, vrt = np.linalg.svd(A.row_factor)
    sig2 = max(float(np.var(z)) - noise_sigma**2, 1e-12)
    nsr = max(noise_sigma**2 / sig2, 1e-6)
    s = np.outer(sc_, sr)
    filt = s / (s * s + nsr)
    zm = np.moveaxis(z, (0, 1), (-2, -1))
    xh = uc.T @ zm @ ur
    xh = xh * filt
    x = vct.T @ xh @ vrt
    return np.moveaxis(x, (-2, -1), (0, 1))


def usable_levels(shape, wanted: int) -> int:
    """Largest level count <= ``wanted`` whose coarsest grid is at least 8 wide."""
    j = wanted
    while j > 1:
        div = 2 ** (j - 1)
        if all(n % div == 0 and n // div >= 8 for n in shape[:2]):
            break
        j -= 1
    return j


@dataclass
class Instance:
    scenario: Scenario
    x_true: np.ndarray
    z: np.ndarray
    x0: np.ndarray
    hierarchy: Hierarchy


def build_instance(sc: Scenario, x_true: Optional[np.ndarray] = None, levels=None) -> Instance:
    if x_true is None:
        x_true = load_image(sc.image, sc.size)
    z, A = degrade(x_true, sc)
    x0 = wiener_init(A, z, sc.noise_sigma)
    if sc.regularizer == "tv":
        D = TvOperator(*x_true.shape[:2])
    else:
        D = nltv_build(x0)
    fine = LevelProblem(A, D, z, sc.lam, sc.gamma)
    J = usable_levels(x_true.shape, sc.levels if levels is None else levels)
    return Instance(sc, x_true, z, x0, build_hierarchy(fine, J, sc.filter))


def _run_variant(args):
    hier, cfg, x0, ref = args
    return run(hier, cfg, x0, reference=ref)


def grid_search_lambda(sc: Scenario, candidates, iters: int = 200, x_true=None):
    """Pick the lambda whose FISTA solution has the best SNR.

    Returns ``(best_lambda, [(lambda, snr), ...])``; ties go to the smaller
    lambda.
    """
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise ConfigError("need at least one lambda candidate")
    table = []
    for lam in cands:
        inst = build_instance(replace(sc, lam=lam), x_true, levels=1)
        cfg = sc.solver_config(ml=False, max_outer=iters)
        tr = run(inst.hierarchy, cfg, inst.x0)
        table.append((lam, snr(inst.x_true, tr.x)))
    best = max(table, key=lambda row: (row[1], -row[0]))
    return best[0], table


STANDARD_VARIANTS = {
    "FB": dict(d=0.0, a=2.0, ml=False),
    "IML_FB": dict(d=0.0, a=2.0, ml=True),
    "FISTA": dict(ml=False),
    "IML_FISTA": dict(ml=True),
}


def variant_configs(sc: Scenario, names=None) -> dict:
    names = names or list(STANDARD_VARIANTS)
    out = {}
    for name in names:
        spec = dict(STANDARD_VARIANTS[name])
        ml = spec.pop("ml")
        out[name] = sc.solver_config(ml=ml, **spec)
    return out


def compare(sc: Scenario, variants: dict, workers: int = 1, inst: Optional[Instance] = None):
    """Run every variant from the same start point.

    Returns ``(traces, summary_rows, f_best)``. The normalized objective of
    a trace is ``(F_k - F_best) / (F_0 - F_best)`` with ``F_best`` the
    smallest objective reached by any variant.
    """
    if not variants:
        raise ConfigError("need at least one solver variant")
    inst = inst or build_instance(sc)
    jobs = [(inst.hierarchy, cfg, inst.x0, inst.x_true) for cfg in variants.values()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = dict(zip(variants, pool.map(_run_variant, jobs)))
    else:
        traces = {name: _run_variant(job) for name, job in zip(variants, jobs)}
    f_best = min(float(tr.objectives.min()) for tr in traces.values())
    rows = []
    for name, tr in traces.items():
        objs, snrs = tr.objectives, tr.snrs

        def at(arr, k):
            return float(arr[k]) if k < len(arr) else math.nan

        rows.append(dict(
            variant=name, iterations=len(objs) - 1,
            F_final=float(objs[-1]), F_2=at(objs, 2), F_5=at(objs, 5),
            SNR_2=at(snrs, 2), SNR_5=at(snrs, 5), SNR_final=float(snrs[-1]),
            seconds=tr.records[-1].seconds,
        ))
    return traces, rows, f_best


def normalized_objective(trace: RunTrace, f_best: float) -> np.ndarray:
    objs = trace.objectives
    span = objs[0] - f_best
    if span == 0:
        return np.ones_like(objs)
    return (objs - f_best) / span


def write_report(out_dir, sc: Scenario, traces: dict, rows: list, f_best: float) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, tr in traces.items():
        tr.to_csv(out / f"trace_{name}.csv",
                  extra={"normalized_objective": normalized_objective(tr, f_best)})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    (out / "scenario.cfg").write_text(format_config(sc))
