"""Experiment execution, report serialization, and rerun comparison.

Streams: centers are drawn from ``root.child(0).child(center_index + c)``
and center ``c`` at radius ``i`` uses ``root.child(1).child(c).child(i)``,
where ``root = RngStream(seed)``.  Nothing depends on the thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import Resolved
from .core import DEFAULT_PRECISION_BITS, Billiard, Circle, TorusDisk, sample_invariant, set_threads
from .hitstats import (Exceeded, estimate_ball_measure, corona_ratio, horizon_for, local_dimension,
                       mean_loglog_slope, mean_return_time, return_time_table, fit_line, ensemble_hits,
                       EmpiricalPMF)
from .measure import exact_ball_measure
from .poisson import Poisson, estimate_r1, estimate_r2, total_bound, tv_distance, tv_std_error
from .radius import corona_exponent, dichotomy_radius, verify_corona_bound
from .rng import ALGORITHM, RngStream

SCHEMA = "hitpoisson.report/1"
# keys that may legitimately differ between a run and its rerun
VOLATILE = {"threads", "output_path"}


def clean(obj):
    """JSON-ready copy: python scalars, lists, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def center_dict(p) -> dict:
    if isinstance(p, Circle):
        return {"x": p.x}
    if isinstance(p, TorusDisk):
        return {"x": p.x, "z_re": p.z_re, "z_im": p.z_im}
    if isinstance(p, Billiard):
        return {"r": p.r, "phi": p.phi}
    raise TypeError(type(p).__name__)


def _centers(res: Resolved, root: RngStream) -> list:
    v = res.values
    if res.explicit_center is not None:
        return [res.explicit_center]
    stream = root.child(0)
    bits = max(DEFAULT_PRECISION_BITS, v["horizon_cap"] + 128)
    return [sample_invariant(res.spec, stream.child(v["center_index"] + c), v["burn_in"], bits)
            for c in range(v["centers"])]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(clean(row[c])) for c in columns])
    return buf.getvalue()


def render_json(report: dict) -> str:
    return json.dumps(clean(report), indent=2, sort_keys=False, allow_nan=False) + "\n"


# -- experiments --------------------------------------------------------------------


def _poisson_test(res, centers, root):
    v, spec = res.values, res.spec
    results, rows = [], []
    for c, x in enumerate(centers):
        for i, r in enumerate(res.radii):
            stream = root.child(1).child(c).child(i)
            n, bm = horizon_for(spec, x, r, v["t"], v["budget"], stream.child(0), v["burn_in"])
            _, counts = ensemble_hits(spec, x, r, [n], v["ensemble_size"], stream.child(1), v["burn_in"])
            pmf = EmpiricalPMF.from_values(counts[:, 0])
            target = Poisson(v["t"])
            tv = tv_distance(pmf, target)
            results.append({"center": c, "radius": r, "horizon": n, "ball_measure": bm.value,
                            "ball_measure_std_error": bm.std_error, "ball_measure_exact": bm.exact is not None,
                            "tv_distance": tv, "tv_distance_std_error": tv_std_error(pmf),
                            "mean": pmf.mean(), "counts": {str(k): pmf.counts[k] for k in sorted(pmf.counts)}})
            for k in range(pmf.max_k + 1):
                rows.append({"center": c, "radius": r, "k": k, "count": pmf.counts.get(k, 0),
                             "frequency": pmf.pmf(k), "poisson_pmf": target.pmf(k)})
    worst = max(results, key=lambda d: d["tv_distance"])
    summary = {"tv_distance": worst["tv_distance"], "tv_distance_std_error": worst["tv_distance_std_error"]}
    return summary, results, ["center", "radius", "k", "count", "frequency", "poisson_pmf"], rows


def _slope_dict(est) -> dict:
    return {"slope": est.slope, "intercept": est.intercept, "r2": est.r2, "low_r2": est.low_r2,
            "dropped": est.dropped, "points": est.points}


def _recurrence(res, centers, root):
    v, spec = res.values, res.spec
    results, rows, fits = [], [], []
    for c, x in enumerate(centers):
        taus = return_time_table(spec, x, res.radii, v["horizon_cap"])
        xs, ys, dropped = [], [], []
        for r, tau in zip(res.radii, taus):
            exceeded = isinstance(tau, Exceeded)
            rows.append({"center": c, "radius": r, "tau": "" if exceeded else tau, "exceeded": exceeded})
            if exceeded:
                dropped.append(r)
            else:
                xs.append(-math.log(r))
                ys.append(math.log(tau))
        fit = fit_line(xs, ys, dropped)
        fits.append(fit)
        results.append({"center": c, **_slope_dict(fit)})
    combined = fits[0] if len(fits) == 1 else mean_loglog_slope(fits)
    return _slope_dict(combined), results, ["center", "radius", "tau", "exceeded"], rows


def _dimension(res, centers, root):
    v, spec = res.values, res.spec
    results, rows, fits = [], [], []
    for c, x in enumerate(centers):
        fit = local_dimension(spec, x, res.radii, v["budget"], root.child(1).child(c), v["burn_in"],
                              exact=v["exact_measure"])
        fits.append(fit)
        results.append({"center": c, **_slope_dict(fit)})
        logs = dict(fit.points)
        for r in res.radii:
            lm = logs.get(math.log(r))
            rows.append({"center": c, "radius": r, "ball_measure": math.exp(lm) if lm is not None else 0.0})
    combined = fits[0] if len(fits) == 1 else mean_loglog_slope(fits)
    return _slope_dict(combined), results, ["center", "radius", "ball_measure"], rows


def _kac(res, centers, root):
    v, spec = res.values, res.spec
    results = []
    for c, x in enumerate(centers):
        for i, r in enumerate(res.radii):
            stream = root.child(1).child(c).child(i)
            mr = mean_return_time(spec, x, r, v["ensemble_size"], v["horizon_cap"], stream.child(1), v["burn_in"])
            exact = exact_ball_measure(spec, x, r) if v["exact_measure"] else None
            if exact is not None:
                mu, mu_se = exact, 0.0
            else:
                bm = estimate_ball_measure(spec, x, r, v["budget"], stream.child(0), v["burn_in"])
                mu, mu_se = bm.estimate, bm.std_error
            product = mr.mean * mu
            se = math.hypot(mr.std_error * mu, mr.mean * mu_se)
            results.append({"center": c, "radius": r, "mean": mr.mean, "mean_std_error": mr.std_error,
                            "ball_measure": mu, "ball_measure_std_error": mu_se, "kac_product": product,
                            "kac_product_std_error": se, "exceeded": mr.exceeded, "size": mr.size})
    cols = ["center", "radius", "mean", "mean_std_error", "ball_measure", "kac_product", "exceeded"]
    worst = max(results, key=lambda d: abs(d["kac_product"] - 1.0))
    return {"kac_product": worst["kac_product"], "kac_product_std_error": worst["kac_product_std_error"]}, \
        results, cols, results


def _corona(res, centers, root):
    v, spec = res.values, res.spec
    results = []
    for c, x in enumerate(centers):
        for i, r in enumerate(res.radii):
            ratio = corona_ratio(spec, x, r, v["delta"], v["budget"], root.child(1).child(c).child(i),
                                 v["burn_in"], exact=v["exact_measure"])
            results.append({"center": c, "radius": r, "delta": v["delta"], "ratio": ratio})
    return {"max_ratio": max(d["ratio"] for d in results)}, results, ["center", "radius", "delta", "ratio"], results


def _dichotomy(res, centers, root):
    v, spec = res.values, res.spec
    results, rows = [], []
    a = corona_exponent(v["lambda"])
    for c, x in enumerate(centers):
        stream = root.child(1).child(c)
        trace = dichotomy_radius(spec, x, v["n"], v["scale_theta"], v["lambda"], v["depth"], v["budget"],
                                 stream.child(0), v["burn_in"], exact=v["exact_measure"])
        schedule = [trace.radius**k for k in v["s_powers"]]
        check = verify_corona_bound(spec, x, trace.radius, a, v["c0"], schedule, v["budget"], stream.child(1),
                                    v["burn_in"], exact=v["exact_measure"], lam=v["lambda"])
        results.append({"center": c, "trace": trace.to_dict(), "corona_check": check.to_dict()})
        for k, ((lo, hi), m, se) in enumerate(zip(trace.intervals, trace.masses, trace.mass_errors)):
            rows.append({"center": c, "level": k, "left": lo, "right": hi,
                         "side": trace.chosen_sides[k - 1] if k else "", "mass": m, "mass_std_error": se})
    summary = {"a": a, "radii": [d["trace"]["radius"] for d in results],
               "corona_passed": all(d["corona_check"]["passed"] for d in results)}
    return summary, results, ["center", "level", "left", "right", "side", "mass", "mass_std_error"], rows


def _bound(res, centers, root):
    v, spec = res.values, res.spec
    results = []
    for c, x in enumerate(centers):
        for i, r in enumerate(res.radii):
            stream = root.child(1).child(c).child(i)
            n, bm = horizon_for(spec, x, r, v["t"], v["budget"], stream.child(0), v["burn_in"])
            eps = bm.value
            p = v["p"] if v["p"] is not None else max(2, int(math.floor(r**-0.5)))
            _, counts = ensemble_hits(spec, x, r, [n], v["ensemble_size"], stream.child(1), v["burn_in"])
            pmf = EmpiricalPMF.from_values(counts[:, 0])
            tv = tv_distance(pmf, Poisson(n * eps))
            tv_se = tv_std_error(pmf)
            r1 = estimate_r1(spec, x, r, n, p, v["j_grid"], v["q_grid"], v["ensemble_size"], stream.child(2),
                             v["burn_in"])
            r2, r2_se = estimate_r2(spec, x, r, p, v["ensemble_size"], stream.child(3), v["budget"], v["burn_in"])
            rep = total_bound(eps, n, p, v["m"], r1.value, r2, r1.std_error, r2_se)
            margin = rep.total + 3.0 * math.hypot(tv_se, rep.total_std_err) - tv
            results.append({"center": c, "radius": r, **rep.to_dict(), "r1_label": r1.label, "r1_grid": r1.grid,
                            "tv_distance": tv, "tv_distance_std_error": tv_se, "sound": margin >= 0,
                            "margin": margin})
    cols = ["center", "radius", "epsilon", "n", "p", "m", "r1", "r2", "r3", "total", "r1_std_err", "r2_std_err",
            "tv_distance", "tv_distance_std_error", "sound"]
    return {"all_sound": all(d["sound"] for d in results)}, results, cols, results


RUNNERS = {"poisson-test": _poisson_test, "recurrence": _recurrence, "dimension": _dimension, "kac": _kac,
           "corona": _corona, "dichotomy": _dichotomy, "bound": _bound}


def execute(res: Resolved) -> tuple[dict, str]:
    """Run the configured experiment; returns (report, csv text)."""
    v = res.values
    set_threads(v["threads"])
    root = RngStream(v["seed"])
    centers = _centers(res, root)
    summary, results, columns, rows = RUNNERS[v["experiment"]](res, centers, root)
    spec = res.spec
    report = {
        "schema": SCHEMA,
        "version": __version__,
        "rng_algorithm": ALGORITHM,
        "numpy_version": np.__version__,
        "seed": v["seed"],
        "threads": v["threads"],
        "experiment": v["experiment"],
        "config": v,
        "system": {**spec.to_dict(), "zeta": spec.zeta, "alpha": spec.alpha},
        "centers": [center_dict(x) for x in centers],
        **summary,
        "results": results,
    }
    return clean(report), render_csv(columns, rows)


def output_paths(base: str) -> tuple[Path, Path]:
    p = Path(base)
    if p.suffix in (".json", ".csv"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".csv")


def write_outputs(report: dict, csv_text: str, base: str) -> tuple[Path, Path]:
    json_path, csv_path = output_paths(base)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    report = dict(report, csv_file=csv_path.name)
    json_path.write_bytes(render_json(report).encode("utf-8"))
    csv_path.write_bytes(csv_text.encode("utf-8"))
    return json_path, csv_path


# -- rerun comparison ----------------------------------------------------------------


def _std_error_for(parent: dict | None, key) -> float | None:
    if not isinstance(parent, dict) or not isinstance(key, str):
        return None
    for name in (key + "_std_error", key + "_std_err"):
        if isinstance(parent.get(name), (int, float)):
            return float(parent[name])
    return None


def first_difference(old, new, statistical: bool, path: str = "", parent=None, key=None) -> str | None:
    """Path of the first field where ``new`` does not reproduce ``old``."""
    if isinstance(old, dict) and isinstance(new, dict):
        for k in old:
            if k in VOLATILE or k == "csv_file":
                continue
            if k not in new:
                return f"{path}.{k}" if path else k
            d = first_difference(old[k], new[k], statistical, f"{path}.{k}" if path else k, old, k)
            if d:
                return d
        extra = [k for k in new if k not in old and k not in VOLATILE]
        return (f"{path}.{extra[0]}" if path else extra[0]) if extra else None
    if isinstance(old, list) and isinstance(new, list):
        if len(old) != len(new):
            return path
        for i, (a, b) in enumerate(zip(old, new)):
            d = first_difference(a, b, statistical, f"{path}[{i}]", None, None)
            if d:
                return d
        return None
    if old == new and type(old) is type(new):
        return None
    numeric = (int, float)
    if statistical and isinstance(old, numeric) and isinstance(new, numeric) and not isinstance(old, bool):
        se = _std_error_for(parent, key)
        if se is not None and abs(old - new) <= 3.0 * math.sqrt(2.0) * se:
            return None
    return path
