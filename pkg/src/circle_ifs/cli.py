"""Command-line surface: reproducible experiments from JSON configs.

Every run is fully determined by its config (plus --seed/--threads
overrides, which are themselves part of the reproducibility contract:
--threads never changes output bytes).  Outputs are canonical JSON (sorted
keys, shortest round-trip floats) or CSV, so identical configs give
byte-identical artifacts.

Exit codes: 0 success, 2 verification failure (including config schema
violations), 3 search exhaustion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .certifier import (
    CertificatePair,
    ContractionFails,
    LengthExceeded,
    NoAttractingSide,
    RationalRotation,
    SearchExhausted,
    certify_robust_minimality,
    check_certificate,
    find_universal_word,
    perturb_map,
)
from .circle_maps import Arc, map_from_json
from .ifs_core import IFS, minimality_estimate, orbit_to_csv_rows
from .periodic_points import (
    HorizonExceeded,
    StageExhausted,
    density_sweep,
    find_contracted_fixed_arc,
    periodic_in_interval,
)
from .symbolic import InvalidModel, SequenceModel, model_from_json, sample_sequence
from .synchronization import (
    CoverSearchExhausted,
    NoMinimalGenerator,
    Unpolarized,
    antonov_classify,
    detect_repellers,
    hitting_tail_check,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Config violation, reported with the offending field path."""


# ---------------------------------------------------------------------------
# Canonical output
# ---------------------------------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header: list[str], rows: list[tuple]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, newline="")


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _field(cfg: dict, key: str, path: str, required: bool = True, default=None):
    if key not in cfg:
        if required:
            raise ConfigError(f"{path}{key}: missing required field")
        return default
    return cfg[key]


def load_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    schema = _field(raw, "schema", "")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: expected {SCHEMA_VERSION}, got {schema!r}")
    gens = _field(raw, "generators", "")
    if not isinstance(gens, list) or not gens:
        raise ConfigError("generators: must be a non-empty array of map objects")
    for i, g in enumerate(gens):
        try:
            map_from_json(g)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"generators[{i}]: {exc}") from exc
    if "model" in raw:
        try:
            model_from_json(raw["model"])
        except (InvalidModel, KeyError, TypeError) as exc:
            raise ConfigError(f"model: {exc}") from exc
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed: must be a non-negative integer")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params: must be an object")
    return raw


def _ifs_of(cfg: dict) -> IFS:
    return IFS(
        [map_from_json(g) for g in cfg["generators"]], label=cfg.get("label", "")
    )


def _model_of(cfg: dict) -> SequenceModel:
    if "model" not in cfg:
        raise ConfigError("model: required by this command")
    return model_from_json(cfg["model"])


def _arc_param(params: dict, key: str, path: str) -> Arc:
    obj = _field(params, key, path)
    try:
        return Arc(float(obj["start"]), float(obj["length"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}{key}: {exc}") from exc


# ---------------------------------------------------------------------------
# Command handlers: (config, seed, threads) -> (text, exit_code)
# ---------------------------------------------------------------------------


def _cmd_simulate_orbit(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    ifs = _ifs_of(cfg)
    model = _model_of(cfg)
    length = int(params.get("length", 1000))
    x = float(params.get("x", 0.0))
    header = ["n", "letter", "point"]
    if length == 0:
        return csv_text(header, []), 0
    word = sample_sequence(model, length, seed)
    return csv_text(header, orbit_to_csv_rows(ifs, word, x)), 0


def _cmd_estimate_minimality(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    ifs = _ifs_of(cfg)
    kwargs = dict(
        eps=float(params.get("eps", 0.01)),
        start_grid=int(params.get("start_grid", 16)),
        depth=int(params.get("depth", 10_000)),
    )
    fwd = minimality_estimate(ifs, **kwargs)
    bwd = minimality_estimate(ifs.inverse_ifs(), **kwargs)
    out = {
        "label": cfg.get("label", ""),
        "params": kwargs,
        "forward": fwd.to_json(),
        "backward": bwd.to_json(),
    }
    return canonical_json(out), 0


def _cmd_classify(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    result = antonov_classify(
        _ifs_of(cfg),
        _model_of(cfg),
        n_pairs=int(params.get("n_pairs", 500)),
        sync_horizon=int(params.get("sync_horizon", 2000)),
        tol_sync=float(params.get("tol_sync", 1e-3)),
        n_seeds=int(params.get("n_seeds", 20)),
        word_length=int(params.get("word_length", 5000)),
        m_levels=int(params.get("m_levels", 10)),
        seed=seed,
        check_minimality=bool(params.get("check_minimality", False)),
        threads=threads,
    )
    return canonical_json(result.to_json()), 0


def _cmd_detect_repellers(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    model = _model_of(cfg)
    word = sample_sequence(model, int(params.get("word_length", 5000)), seed)
    est = detect_repellers(
        _ifs_of(cfg), word, m_levels=int(params.get("m_levels", 12))
    )
    return canonical_json(est.to_json()), 0


def _cmd_tail_bound(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    report = hitting_tail_check(
        _ifs_of(cfg),
        _model_of(cfg),
        _arc_param(params, "target", "params."),
        x=float(params.get("x", 0.0)),
        n_grid=params.get("n_grid"),
        n_trials=int(params.get("n_trials", 10_000)),
        seed=seed,
        minimal_index=int(params.get("minimal_index", 0)),
    )
    text = csv_text(
        ["n", "empirical_miss", "bound", "stderr"], report.to_csv_rows()
    )
    return text, 0 if report.dominated else 2


def _cmd_certify(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    gens = [map_from_json(g) for g in cfg["generators"]]
    if len(gens) != 2:
        raise ConfigError("generators: certify expects exactly two maps")
    pair = certify_robust_minimality(
        gens[0],
        gens[1],
        n_max=int(params.get("n_max", 10_000)),
        deriv_margin=float(params.get("deriv_margin", 0.01)),
        min_margin=float(params.get("min_margin", 1e-4)),
        label=cfg.get("label", ""),
    )
    return canonical_json(pair.to_json()), 0


def _cmd_certify_check(path: str) -> tuple[str, int]:
    try:
        blob = json.loads(Path(path).read_text())
        pair = CertificatePair.from_json(blob)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"certificate: {exc}") from exc
    ok_f, rev_f = check_certificate(pair.forward)
    ok_b, rev_b = check_certificate(pair.backward)
    out = {
        "forward": {"ok": ok_f, "margins": rev_f.margins},
        "backward": {"ok": ok_b, "margins": rev_b.margins},
        "ok": ok_f and ok_b,
    }
    return canonical_json(out), 0 if (ok_f and ok_b) else 2


def _cmd_universal_word(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    res = find_universal_word(
        _ifs_of(cfg),
        _arc_param(params, "target", "params."),
        z_grid=int(params.get("z_grid", 1000)),
        max_len=int(params.get("max_len", 500)),
    )
    out = {
        "word": res.word.to_json(),
        "length": len(res.word),
        "capture_times": list(res.capture_times),
        "z_grid": res.z_grid,
        "fine_verified": res.fine_verified,
        "target": res.target.to_json(),
        "shrunk_target": res.shrunk_target.to_json(),
    }
    return canonical_json(out), 0


def _cmd_find_periodic(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    ifs = _ifs_of(cfg)
    model = _model_of(cfg)
    attractor = find_contracted_fixed_arc(
        ifs, model, seed, horizon=int(params.get("horizon", 512))
    )
    rec = periodic_in_interval(ifs, _arc_param(params, "target", "params."), attractor)
    return canonical_json(rec.to_json()), 0


def _cmd_density_sweep(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    report = density_sweep(
        _ifs_of(cfg),
        int(params.get("mesh", 20)),
        _model_of(cfg),
        seed,
        horizon=int(params.get("horizon", 512)),
        threads=threads,
    )
    text = csv_text(
        ["arc_index", "stability", "found", "word_length", "residual", "multiplier"],
        report.to_csv_rows(),
    )
    return text, 0


def _cmd_perturb(cfg: dict, seed: int, threads: int) -> tuple[str, int]:
    params = cfg.get("params", {})
    size = params.get("size")
    if not isinstance(size, (int, float)) or size < 0:
        raise ConfigError("params.size: must be a non-negative number")
    inner_name = _field(params, "command", "params.")
    if inner_name not in HANDLERS or inner_name == "perturb":
        raise ConfigError(f"params.command: unknown or non-perturbable {inner_name!r}")
    perturb_seed = int(params.get("perturb_seed", 0))
    new_gens = []
    for i, gj in enumerate(cfg["generators"]):
        key = np.array([perturb_seed % (1 << 64), 7000 + i], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        new_gens.append(perturb_map(map_from_json(gj), float(size), rng).to_json())
    inner_cfg = dict(cfg)
    inner_cfg["generators"] = new_gens
    inner_cfg["params"] = params.get("params", {})
    return HANDLERS[inner_name](inner_cfg, seed, threads)


HANDLERS = {
    "simulate-orbit": _cmd_simulate_orbit,
    "estimate-minimality": _cmd_estimate_minimality,
    "classify": _cmd_classify,
    "detect-repellers": _cmd_detect_repellers,
    "tail-bound": _cmd_tail_bound,
    "certify": _cmd_certify,
    "universal-word": _cmd_universal_word,
    "find-periodic": _cmd_find_periodic,
    "density-sweep": _cmd_density_sweep,
    "perturb": _cmd_perturb,
}

_EXHAUSTION = (
    SearchExhausted,
    StageExhausted,
    HorizonExceeded,
    LengthExceeded,
    CoverSearchExhausted,
)
_VERIFICATION = (
    ContractionFails,
    NoAttractingSide,
    RationalRotation,
    NoMinimalGenerator,
    Unpolarized,
    InvalidModel,
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="circle-ifs",
        description="Simulation and certification toolkit for circle-map IFSs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread bound")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if name == "certify":
            p.add_argument("--check", default=None, metavar="FILE",
                           help="re-verify an existing certificate file")
    args = parser.parse_args(argv)

    try:
        if args.command == "certify" and args.check is not None:
            text, code = _cmd_certify_check(args.check)
        else:
            if args.config is None:
                raise ConfigError("config: --config is required")
            cfg = load_config(args.config)
            seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
            text, code = HANDLERS[args.command](cfg, seed, max(1, args.threads))
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except _EXHAUSTION as exc:
        sys.stderr.write(f"search exhausted: {exc}\n")
        return 3
    except _VERIFICATION as exc:
        sys.stderr.write(f"verification failure: {exc}\n")
        return 2
    _emit(text, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
