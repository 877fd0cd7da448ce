"""Scan orchestration: configuration, the model->profile->assembly->verdict
pipeline, report/CSV emission, and figure rendering."""

import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import evans as EV
from . import reduction as RD
from .errors import EvansKitError, UnknownSystem
from .evalsys import (
    assemble_general_viscous,
    assemble_identity_viscous,
    assemble_multid_model,
    assemble_relaxation_balanced_flux,
    multid_parabolicity_margin,
    multid_symbol_positivity,
)
from .model import check_hypotheses_relaxation, check_hypotheses_viscous
from .profile import load_profile, save_profile, solve_profile
from .registry import REGISTRY, get_system

SCHEMA_VERSION = "1"

REPORT_REQUIRED_KEYS = (
    "schema_version", "config", "hypotheses", "profile", "regimes",
    "contours", "verdict",
)

CSV_COLUMNS = ("re_lambda", "im_lambda", "re_D", "im_D", "abs_D", "arg_D",
               "logscale")


@dataclass
class ScanConfig:
    system: str = "burgers"
    eps: float = 0.1
    params: dict = field(default_factory=dict)
    xi2: float = 0.0
    contour: str = "half-annulus"
    rmin: float = None
    rmax: float = None
    points: int = 256
    domain_L: float = None
    npts: int = 1601
    tol: float = 1e-8
    zero_floor: float = 1e-8
    regime_C: float = 4.0
    regime_samples: tuple = (0.6,)
    out: str = "scan-out"
    jobs: int = 1
    with_regimes: bool = True
    with_figures: bool = True

    def validate(self):
        if self.system not in REGISTRY:
            raise UnknownSystem(f"unknown system {self.system!r}")
        if self.tol <= 0 or self.zero_floor <= 0:
            raise ValueError("tolerances must be positive")
        if self.rmin is not None and self.rmax is not None \
                and not self.rmin < self.rmax:
            raise ValueError("rmin must be below rmax")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        return self


def parse_config_file(path):
    """Nested key-value text: `a.b = value` per line, '#' comments."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def config_from_mapping(tree):
    """Flatten the nested key-value tree into a ScanConfig."""
    cfg = ScanConfig()

    def fnum(v):
        try:
            return int(v)
        except (TypeError, ValueError):
            return float(v)

    flat = {
        "system": ("system", str),
        "eps": ("eps", float),
        "xi2": ("xi2", float),
        "jobs": ("jobs", int),
        "out": ("out", str),
    }
    for key, (attr, cast) in flat.items():
        if key in tree:
            setattr(cfg, attr, cast(tree[key]))
    contour = tree.get("contour", {})
    if isinstance(contour, dict):
        if "geometry" in contour:
            cfg.contour = str(contour["geometry"])
        for k, attr in (("rmin", "rmin"), ("rmax", "rmax")):
            if k in contour:
                setattr(cfg, attr, float(contour[k]))
        if "points" in contour:
            cfg.points = int(contour["points"])
    dom = tree.get("domain", {})
    if "L" in dom:
        cfg.domain_L = float(dom["L"])
    if "npts" in dom:
        cfg.npts = int(dom["npts"])
    tol = tree.get("tol", {})
    if "ode" in tol:
        cfg.tol = float(tol["ode"])
    if "zero_floor" in tol:
        cfg.zero_floor = float(tol["zero_floor"])
    regime = tree.get("regime", {})
    if "C" in regime:
        cfg.regime_C = float(regime["C"])
    if "enabled" in regime:
        cfg.with_regimes = str(regime["enabled"]).lower() not in ("0", "false", "no")
    params = tree.get("param", {})
    if isinstance(params, dict):
        cfg.params = {k: fnum(v) for k, v in params.items()}
    return cfg


@dataclass
class ScanReport:
    config: dict
    hypotheses: dict
    profile: dict
    regimes: list
    contours: list
    verdict: dict
    timings: dict
    schema_version: str = SCHEMA_VERSION
    samples: list = field(default_factory=list, repr=False)

    def as_dict(self, with_timings=True):
        out = {
            "schema_version": self.schema_version,
            "config": self.config,
            "hypotheses": self.hypotheses,
            "profile": self.profile,
            "regimes": self.regimes,
            "contours": self.contours,
            "verdict": self.verdict,
        }
        if with_timings:
            out["timings"] = self.timings
        return out


def validate_report(doc):
    """Minimal schema check for emitted reports."""
    for key in REPORT_REQUIRED_KEYS:
        if key not in doc:
            raise ValueError(f"report missing key {key!r}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ValueError("schema version mismatch")
    if doc["verdict"].get("status") not in ("stable", "unstable", "inconclusive"):
        raise ValueError("bad verdict status")
    for c in doc["contours"]:
        for k in ("geometry", "winding", "min_abs_D"):
            if k not in c:
                raise ValueError(f"contour entry missing {k!r}")
    return True


def _cache_dir():
    return os.environ.get("EVANSKIT_CACHE_DIR", "")


def _profile_for(cfg, sys, timings):
    entry = REGISTRY[cfg.system]
    u_minus = entry.u_minus(cfg.eps)
    t0 = time.perf_counter()
    cache = _cache_dir()
    key = None
    if cache:
        Ltag = "auto" if cfg.domain_L is None else f"{cfg.domain_L:g}"
        key = Path(cache) / (f"{cfg.system}-eps{cfg.eps:g}-L{Ltag}-"
                             f"m{cfg.npts}.profile.txt")
        if key.exists():
            prof = load_profile(key, sys)
            timings["profile"] = time.perf_counter() - t0
            timings["profile_cached"] = True
            return prof
    prof = solve_profile(sys, u_minus, eps=cfg.eps, L=cfg.domain_L,
                         npts=cfg.npts)
    if key is not None:
        key.parent.mkdir(parents=True, exist_ok=True)
        save_profile(prof, key)
    timings["profile"] = time.perf_counter() - t0
    timings["profile_cached"] = False
    return prof


def run_scan(cfg):
    """Execute model checks -> profile -> assembly -> regimes -> verdict.

    Deterministic given the configuration; any module error is surfaced in
    the report with verdict status 'inconclusive'.
    """
    cfg.validate()
    timings = {}
    t_start = time.perf_counter()
    config_echo = {k: (v if not isinstance(v, tuple) else list(v))
                   for k, v in asdict(cfg).items()}

    if cfg.system == "multid-model":
        return _run_scan_multid(cfg, config_echo, timings, t_start)

    sys = get_system(cfg.system, **cfg.params)
    t0 = time.perf_counter()
    hyp = (check_hypotheses_viscous(sys) if sys.kind == "viscous"
           else check_hypotheses_relaxation(sys))
    timings["hypotheses"] = time.perf_counter() - t0

    prof = _profile_for(cfg, sys, timings)
    profile_info = {
        "eps": prof.eps,
        "endpoint_states": {
            "u_minus": prof.u_minus.tolist(), "u_plus": prof.u_plus.tolist(),
        },
        "tail_rate": prof.theta_hat,
        "tail_r2": prof.tail_r2,
        "ode_residual": prof.ode_residual,
        "L": prof.L,
    }
    if prof.v is not None:
        profile_info["endpoint_states"]["v_minus"] = prof.v_minus.tolist()
        profile_info["endpoint_states"]["v_plus"] = prof.v_plus.tolist()

    t0 = time.perf_counter()
    if sys.kind == "relaxation":
        es = assemble_relaxation_balanced_flux(prof, sys)
    elif sys.identity_viscosity():
        es = assemble_identity_viscous(prof, sys)
    else:
        es = assemble_general_viscous(prof, sys)
    timings["assembly"] = time.perf_counter() - t0

    regimes = []
    if cfg.with_regimes:
        t0 = time.perf_counter()
        try:
            segs, reports = RD.regime_partition_and_normal_form(
                es, prof, C=cfg.regime_C, r_min=cfg.rmin, R_max=cfg.rmax,
                lam_tilde_samples=cfg.regime_samples, stride=8)
            for seg in segs:
                regimes.append({"tag": seg.tag, "lo": seg.lo, "hi": seg.hi,
                                "lam_scale": seg.lam_scale})
            regimes.append({"tag": "certificates",
                            "I": [_jsonable(r) for r in reports["I"]],
                            "II": _jsonable(reports["II"]),
                            "III": _jsonable(reports["III"])})
        except EvansKitError as exc:
            regimes.append({"tag": "skipped", "reason": str(exc)})
        timings["regimes"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    verdict = EV.stability_verdict(es, prof.eps, r_min=cfg.rmin, R_max=cfg.rmax,
                                   tol=cfg.tol, npoints=cfg.points,
                                   jobs=cfg.jobs, zero_floor=cfg.zero_floor)
    timings["verdict"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start

    return _make_report(cfg, config_echo, hyp.as_dict(), profile_info, regimes,
                        verdict, timings, prof)


def _run_scan_multid(cfg, config_echo, timings, t_start):
    t0 = time.perf_counter()
    model = get_system("multid-model", **cfg.params)
    margin = multid_parabolicity_margin(model)
    grid = [(c, s) for c in np.linspace(-3, 3, 7)
            for s in np.linspace(-3, 3, 7) if not (c == 0 and s == 0)]
    sym_minus, theta = multid_symbol_positivity(model, cfg.eps, grid)
    sym_plus, _ = multid_symbol_positivity(model, -cfg.eps, grid)
    hyp = {
        "parabolicity": {"passed": margin > 0, "margin": margin, "witness": None},
        "symbol_positivity": {"passed": min(sym_minus, sym_plus) >= -1e-12,
                              "margin": float(min(sym_minus, sym_plus)),
                              "witness": None},
        "transverse_speed": {"passed": model.a > 0, "margin": model.a,
                             "witness": None},
    }
    timings["hypotheses"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    es = assemble_multid_model(cfg.eps, cfg.xi2, a=model.a, B11=model.B11,
                               B12=model.B12, B21=model.B21, B22=model.B22,
                               L=cfg.domain_L, npts=cfg.npts)
    prof = es.profile
    timings["assembly"] = time.perf_counter() - t0
    profile_info = {
        "eps": prof.eps,
        "endpoint_states": {"u_minus": prof.u_minus.tolist(),
                            "u_plus": prof.u_plus.tolist()},
        "tail_rate": prof.theta_hat,
        "tail_r2": prof.tail_r2,
        "ode_residual": prof.ode_residual,
        "L": prof.L,
    }

    t0 = time.perf_counter()
    verdict = EV.stability_verdict(es, cfg.eps, r_min=cfg.rmin, R_max=cfg.rmax,
                                   tol=cfg.tol, npoints=cfg.points,
                                   jobs=cfg.jobs, zero_floor=cfg.zero_floor)
    timings["verdict"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start
    return _make_report(cfg, config_echo, hyp, profile_info,
                        [{"tag": "skipped", "reason": "multid model"}],
                        verdict, timings, prof)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _make_report(cfg, config_echo, hyp_dict, profile_info, regimes, verdict,
                 timings, prof):
    wr = verdict.winding
    contours = []
    samples = []
    if wr is not None:
        contours.append({
            "geometry": f"half-annulus[{verdict.r_min:.6g},{verdict.R_max:.6g}]",
            "winding": wr.winding,
            "min_abs_D": wr.min_abs,
            "max_abs_D": wr.max_abs,
            "n_samples": len(wr.samples),
            "refinement_depth": wr.depth,
        })
        samples = wr.samples
    vd = {"status": verdict.status, "unstable_count": verdict.unstable_count,
          "detail": verdict.detail}
    report = ScanReport(config=_jsonable(config_echo), hypotheses=_jsonable(hyp_dict),
                        profile=_jsonable(profile_info), regimes=_jsonable(regimes),
                        contours=_jsonable(contours), verdict=vd, timings=timings,
                        samples=samples)
    report._profile_obj = prof
    return report


def write_csv(samples, path):
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for s in samples:
            row = (s.lam.real, s.lam.imag, s.value.real, s.value.imag,
                   abs(s.value), float(np.angle(s.value)), s.logscale)
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def render_figures(report, outdir):
    """Profile and Evans-contour figures alongside the delimited output."""
    outdir = Path(outdir)
    prof = getattr(report, "_profile_obj", None)
    written = []
    if prof is not None:
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
        for j in range(prof.n):
            axes[0].plot(prof.x, prof.u[:, j], label=f"u{j + 1}")
        if prof.v is not None:
            for j in range(prof.r):
                axes[0].plot(prof.x, prof.v[:, j], "--", label=f"v{j + 1}")
        axes[0].set_xlabel("x")
        axes[0].set_title("profile")
        axes[0].legend(fontsize=8)
        tail = np.linalg.norm(prof.u - np.where(prof.x[:, None] > 0,
                                                prof.u_plus, prof.u_minus), axis=1)
        axes[1].semilogy(prof.x, np.maximum(tail, 1e-18))
        axes[1].set_xlabel("x")
        axes[1].set_title("distance to endpoints")
        fig.tight_layout()
        p = outdir / "profile.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)
    if report.samples:
        vals = np.array([s.value for s in report.samples])
        phases = np.unwrap(np.angle(vals))
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
        axes[0].plot(vals.real, vals.imag, ".-", ms=3, lw=0.7)
        axes[0].plot([0], [0], "rx")
        axes[0].set_xlabel("Re D")
        axes[0].set_ylabel("Im D")
        axes[0].set_title("Evans locus")
        axes[1].plot(np.arange(len(vals)), (phases - phases[0]) / (2 * np.pi))
        axes[1].set_xlabel("sample")
        axes[1].set_ylabel("accumulated phase / 2pi")
        w = report.contours[0]["winding"] if report.contours else 0
        axes[1].set_title(f"winding = {w}")
        fig.tight_layout()
        p = outdir / "evans.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)
    return written


def emit_report(report, outdir, with_figures=True):
    """Write report.json, samples.csv, the cached-profile copy, and figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = report.as_dict(with_timings=True)
    validate_report(doc)
    paths = {"json": outdir / "report.json", "csv": outdir / "samples.csv"}
    with open(paths["json"], "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_csv(report.samples, paths["csv"])
    prof = getattr(report, "_profile_obj", None)
    if prof is not None:
        paths["profile"] = outdir / "profile.txt"
        save_profile(prof, paths["profile"])
    if with_figures:
        for p in render_figures(report, outdir):
            paths[Path(p).stem + "_png"] = p
    return paths
