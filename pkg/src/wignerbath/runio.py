"""Run orchestration and persistence: CSV grids, JSON sidecars, gnuplot
triplets, and the run manifest.

Every data file is written atomically (temp file + rename) and contains no
timestamps, so identical configurations produce byte-identical files; the
manifest inventories each file with its SHA-256 checksum and is written
last.  The process exit status is nonzero iff any diagnostic exceeded its
tolerance or a quadrature flagged failure.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .states import make_initial_wigner
from .wigner import observables, wigner_from_density, density_from_wigner
from .evolution import evolve, QuadratureSpec
from .oracle import default_probes, certify_instance

FMT = "%.17g"


def _render(value):
    return FMT % value


def _atomic_write(path, data):
    tmp = path + ".tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_wigner_csv(w, path):
    """Grid CSV: one row per x node, columns are p nodes, coordinates in the
    header; flattened lexicographically for d > 1."""
    grid = w.grid
    d = grid.d
    vals = w.values.reshape(grid.n_x**d, grid.n_x**d)
    p = grid.p_nodes
    x = grid.x_nodes
    lines = []
    if d == 1:
        header = "x\\p," + ",".join(_render(v) for v in p)
    else:
        header = "xflat\\pflat," + ",".join(str(i) for i in range(vals.shape[1]))
    lines.append(header)
    for i in range(vals.shape[0]):
        coord = _render(x[i]) if d == 1 else str(i)
        lines.append(coord + "," + ",".join(_render(v) for v in vals[i]))
    _atomic_write(path, "\n".join(lines) + "\n")


def emit_plot_data(w, stem):
    """Gnuplot-ready (x, p, W) triplets plus marginal curves (d = 1).

    Byte-stable across reruns of the same configuration.
    """
    grid = w.grid
    if grid.d != 1:
        raise ValueError("plot data emission is limited to d = 1")
    x = grid.x_nodes
    p = grid.p_nodes
    lines = []
    for i in range(grid.n_x):
        for j in range(grid.n_x):
            lines.append(f"{_render(x[i])} {_render(p[j])} {_render(w.values[i, j])}")
        lines.append("")
    tri_path = stem + "_wigner.dat"
    _atomic_write(tri_path, "\n".join(lines) + "\n")

    from .wigner import marginals
    pos, mom = marginals(w)
    lines = ["# x  position_marginal  p  momentum_marginal"]
    for i in range(grid.n_x):
        lines.append(f"{_render(x[i])} {_render(pos[i])} "
                     f"{_render(p[i])} {_render(mom[i])}")
    mar_path = stem + "_marginals.dat"
    _atomic_write(mar_path, "\n".join(lines) + "\n")
    return [tri_path, mar_path]


def _obs_payload(w):
    return observables(w).as_dict()


def run(config):
    """Execute one configuration; returns the manifest dictionary.

    Aborts after flushing a partial manifest (with the failure cause) if any
    stage raises.
    """
    t_start = time.time()
    os.makedirs(config.out_dir, exist_ok=True)
    manifest = {
        "tool": "wignerbath",
        "version": __version__,
        "mode": config.mode,
        "config": dict(sorted(config.raw.items())),
        "started_unix": t_start,
        "files": [],
        "diagnostics": {},
        "failures": [],
    }
    files = []

    def finish(failed=None):
        if failed:
            manifest["failures"].append(failed)
        manifest["ended_unix"] = time.time()
        manifest["files"] = [
            {"path": os.path.basename(p), "sha256": _sha256(p),
             "bytes": os.path.getsize(p)} for p in files
        ]
        man_path = os.path.join(config.out_dir, "manifest.json")
        _atomic_write(man_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest

    try:
        w0 = make_initial_wigner(config.initial, config.grid,
                                 boundary_tol=config.boundary_tol)
    except ValueError as exc:
        return finish(failed=f"initial state: {exc}")

    try:
        if config.mode == "observables":
            path = os.path.join(config.out_dir, "observables.json")
            _atomic_write(path, json.dumps(_obs_payload(w0), indent=2,
                                           sort_keys=True) + "\n")
            files.append(path)

        elif config.mode == "transform":
            rho = density_from_wigner(w0)
            w_back = wigner_from_density(rho, config.grid)
            path = os.path.join(config.out_dir, "wigner_t0.csv")
            write_wigner_csv(w_back, path)
            files.append(path)
            sidecar = {
                "observables": _obs_payload(w_back),
                "roundtrip_sup_error": float(np.max(np.abs(w_back.values - w0.values))),
                "density_trace": [rho.trace().real, rho.trace().imag],
                "hermiticity_defect": rho.hermiticity_defect(),
            }
            path = os.path.join(config.out_dir, "wigner_t0.json")
            _atomic_write(path, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
            files.append(path)
            if config.plot_data and config.grid.d == 1:
                files.extend(emit_plot_data(
                    w_back, os.path.join(config.out_dir, "t0")))

        elif config.mode == "evolve":
            for it, t in enumerate(config.times):
                result = evolve(w0, config.model, t, config.quad,
                                backend=config.backend, workers=config.workers)
                tag = f"t{it}"
                path = os.path.join(config.out_dir, f"wigner_{tag}.csv")
                write_wigner_csv(result.w_total, path)
                files.append(path)
                diag = dict(result.diagnostics)
                sidecar = {
                    "time": t,
                    "observables": _obs_payload(result.w_total),
                    "diagnostics": diag,
                }
                path = os.path.join(config.out_dir, f"wigner_{tag}.json")
                _atomic_write(path, json.dumps(sidecar, indent=2,
                                               sort_keys=True) + "\n")
                files.append(path)
                manifest["diagnostics"][tag] = {
                    "time": t,
                    "trace_defect_g2": diag["trace_defect_g2"],
                    "max_imag_residue": diag["max_imag_residue"],
                    "hermiticity_defect": diag["hermiticity_defect"],
                    "perturbativity_ratio": diag["perturbativity_ratio"],
                }
                if diag["quadrature_failed"]:
                    manifest["failures"].append(f"{tag}: quadrature failed its "
                                                "self-estimated tolerance")
                if diag["non_perturbative"]:
                    manifest["failures"].append(f"{tag}: correction exceeds the "
                                                "30% perturbativity guard")
                if config.plot_data and config.grid.d == 1:
                    files.extend(emit_plot_data(
                        result.w_total, os.path.join(config.out_dir, tag)))

        elif config.mode == "certify":
            t = config.times[-1]
            probes = default_probes(config.grid, config.model, t)
            record = certify_instance(w0, config.model, t, probes, config.quad,
                                      backend=config.backend)
            path = os.path.join(config.out_dir, "certification.json")
            _atomic_write(path, json.dumps(record, indent=2, sort_keys=True,
                                           default=str) + "\n")
            files.append(path)
            manifest["diagnostics"]["certification"] = {
                "all_passed": record["all_passed"],
                "runtime_s": record["runtime_s"],
            }
            if not record["all_passed"]:
                manifest["failures"].append("certification: oracle disagreement "
                                            "beyond tolerance")
    except ValueError as exc:
        return finish(failed=str(exc))

    return finish()
