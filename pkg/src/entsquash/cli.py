"""Command-line front end: scenario configs in, JSON/CSV reports out.

Subcommands: verify-tomography, ion-trap-threshold, polarization-certify,
negativity, bound, diamond-norm, sweep.  Scenario configs are TOML; reports
are JSON with sorted keys so identical configs and seeds reproduce
byte-identical files (wall time goes to stderr, never into the report).

Exit codes: 0 analyses ran (whatever the verdicts), 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from math import sqrt

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python 3.10
    import tomli as tomllib

from . import __version__, geometry, maps, metrics, models, sdp
from .operators import HermitianOperator
from .sdp import SolverFailure


class ConfigError(ValueError):
    pass


# -- config plumbing --


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def _get(cfg: dict, section: str, key: str, default=None, required: bool = False):
    value = cfg.get(section, {}).get(key, default)
    if required and value is None:
        raise ConfigError(f"missing [{section}] {key}")
    return value


def _resolve_seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(_get(cfg, "options", "seed", 0))


def _report_skeleton(command: str, cfg: dict, seed: int) -> dict:
    return {
        "command": command,
        "config": cfg,
        "library": {"name": "entsquash", "version": __version__},
        "seed": seed,
        "results": {},
        "certification": {},
        "wall_time_s": None,
    }


def _emit(report: dict, args, started: float) -> None:
    text = json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"wall time: {time.perf_counter() - started:.3f} s", file=sys.stderr)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _operator_from_payload(payload: dict) -> HermitianOperator:
    try:
        return HermitianOperator.from_payload(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad matrix payload: {exc}") from exc


def _map_from_config(section: dict) -> maps.ProcessMap:
    kind = section.get("kind")
    if kind == "identity":
        return maps.identity_map(int(section.get("dim", 2)))
    if kind == "transposition":
        return maps.transposition_map(int(section.get("dim", 2)))
    if kind == "depolarizing":
        return maps.depolarizing_map(int(section.get("dim", 2)), float(section["q"]))
    if kind == "transposition-mix":
        dim = int(section.get("dim", 2))
        w = float(section["weight"])
        if not 0.0 <= w <= 1.0:
            raise ConfigError("transposition-mix weight must lie in [0, 1]")
        return maps.add_maps(maps.identity_map(dim), maps.transposition_map(dim), 1 - w, w)
    if kind == "choi":
        try:
            return maps.ProcessMap.from_payload(section)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad choi map payload: {exc}") from exc
    raise ConfigError(f"unknown map kind {kind!r}")


def _state_from_config(cfg: dict):
    source = _get(cfg, "state", "source", required=True)
    if source == "werner":
        p = _get(cfg, "state", "p", required=True)
        try:
            return models.werner_state(float(p)).op
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if source == "matrix":
        op = _operator_from_payload(cfg["state"])
        cut_dims = cfg["state"].get("cut_dims")
        if cut_dims:
            try:
                op = op.with_dims(cut_dims)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return op
    raise ConfigError(f"unknown state source {source!r}")


# -- polarization scenario states --


def _single_photon_index(n_max: int, mode: int) -> int:
    return models.block_slices(n_max)[1].start + mode


def _pair_state_from_config(cfg: dict, n_max: int) -> HermitianOperator:
    """Bipartite state on the two-sided polarization space, from either the
    built-in photon-pair family or an explicit matrix payload (which may be
    given at a larger truncation if its support fits the model's)."""
    source = _get(cfg, "state", "source", "photon-pair")
    if source == "photon-pair":
        return _photon_pair_state(cfg, n_max)
    if source != "matrix":
        raise ConfigError(f"unknown state source {source!r} for this scenario")
    op = _operator_from_payload(cfg["state"])
    if len(op.dims) != 2 or op.dims[0] != op.dims[1]:
        raise ConfigError("explicit pair states need dims = [D, D]")
    try:
        n_user = models.truncation_from_dim(op.dims[0])
        if n_user < n_max:
            raise ConfigError(
                f"state lives at truncation {n_user}, below the model's {n_max}"
            )
        mat = models.compress_to_truncation(op.entries, n_user, n_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dim = sum(models.block_dims(n_max))
    return HermitianOperator(mat, (dim, dim))


def _photon_pair_state(cfg: dict, n_max: int) -> HermitianOperator:
    kind = _get(cfg, "state", "kind", "bell")
    dim = sum(models.block_dims(n_max))
    h_idx = _single_photon_index(n_max, 0)
    v_idx = _single_photon_index(n_max, 1)

    def pair_ket(a_idx, b_idx):
        ket = np.zeros(dim * dim, dtype=complex)
        ket[a_idx * dim + b_idx] = 1.0
        return ket

    if kind == "bell":
        ket = (pair_ket(h_idx, v_idx) + pair_ket(v_idx, h_idx)) / sqrt(2)
        mat = np.outer(ket, ket.conj())
    elif kind == "product":
        plus = (pair_ket(h_idx, h_idx) + pair_ket(h_idx, v_idx)
                + pair_ket(v_idx, h_idx) + pair_ket(v_idx, v_idx)) / 2.0
        mat = np.outer(plus, plus.conj())
    else:
        raise ConfigError(f"unknown photon-pair kind {kind!r}")

    admixture = _get(cfg, "state", "admixture")
    if admixture:
        n_extra, weight = int(admixture[0]), float(admixture[1])
        if not 0.0 <= weight <= 1.0:
            raise ConfigError("admixture weight must lie in [0, 1]")
        if n_extra > n_max:
            raise ConfigError(
                f"admixture has {n_extra} photons but the model truncates at {n_max}"
            )
        extra_a = np.zeros(dim, dtype=complex)
        extra_a[models.block_slices(n_max)[n_extra].start] = 1.0  # |n,0>_z on A
        extra_b = np.zeros(dim, dtype=complex)
        extra_b[h_idx] = 1.0
        extra = np.outer(np.kron(extra_a, extra_b), np.kron(extra_a, extra_b).conj())
        mat = (1 - weight) * mat + weight * extra
    return HermitianOperator(mat, (dim, dim))


def _polarization_model_from_config(cfg: dict, n_max_override=None) -> models.PhotonBlockModel:
    kind = _get(cfg, "model", "kind", "polarization")
    if kind != "polarization":
        raise ConfigError(f"expected a polarization model, got {kind!r}")
    n_max = int(n_max_override or _get(cfg, "model", "n_max", 3))
    try:
        return models.polarization_model(
            n_max,
            eta=float(_get(cfg, "model", "eta", 1.0)),
            p_dark=float(_get(cfg, "model", "p_dark", 0.0)),
            q=float(_get(cfg, "model", "q", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- subcommand: verify-tomography --


def run_tomography_test(cfg: dict, seed: int, n_max_override=None) -> dict:
    """Simulate the two-party polarization data, reconstruct through the
    single-photon target description, test the result, lift the verdict.

    The reconstruction inverts Born's rule over the products of the
    processed target observables on the two-sided vacuum + qubit space.
    That set spans exactly the components the data can determine (the
    qubit-pair block among them), so the minimum-norm inversion recovers
    the squashed two-qubit operator for any imperfection setting.
    """
    model = _polarization_model_from_config(cfg, n_max_override)
    n_max = model.n_max
    rho = _pair_state_from_config(cfg, n_max)

    # joint expectation data of the processed full observables, and the
    # matching products of processed target observables
    ops, labels, values = [], [], []
    for ba in "xyz":
        for bb in "xyz":
            for la in ("vac", "0", "1"):
                for lb in ("vac", "0", "1"):
                    w = np.kron(
                        model.full_sets[ba].operator(la).entries,
                        model.full_sets[bb].operator(lb).entries,
                    )
                    values.append(float(np.real(np.trace(rho.entries @ w))))
                    t = np.kron(
                        model.target_sets[ba].operator(la).entries,
                        model.target_sets[bb].operator(lb).entries,
                    )
                    ops.append(HermitianOperator(t, (3, 3)))
                    labels.append(f"{la}{ba}|{lb}{bb}")
    target_products = models.ObservableSet(tuple(ops), tuple(labels))
    reconstructed = maps.linear_inversion(
        target_products, values, allow_incomplete=True
    )

    residual = max(
        abs(float(np.real(np.trace(reconstructed.entries @ op.entries))) - val)
        for op, val in zip(ops, values)
    )
    pair_block = reconstructed.entries.reshape(3, 3, 3, 3)[1:, 1:, 1:, 1:]
    qubit_pair = HermitianOperator(pair_block.reshape(4, 4), (2, 2))
    coincidence = qubit_pair.trace()
    results = {
        "coincidence_weight": coincidence,
        "reconstruction_residual": residual,
        "reconstructed": qubit_pair.to_payload(),
    }
    if coincidence < 1e-9:
        results["verdict"] = "no coincidence signal"
        return {"results": results, "certification": {}}

    normalized = (1.0 / coincidence) * qubit_pair
    rep = metrics.negativity(normalized)
    ppt = metrics.ppt_test(normalized)
    witness = metrics.witness_value(models.standard_witness(), normalized)
    min_eig = float(np.linalg.eigvalsh(normalized.entries)[0])
    results.update(
        negativity=rep.value,
        ppt_status=ppt.status,
        ppt_min_eigenvalue=ppt.min_eigenvalue,
        witness_value=witness,
        reconstruction_psd=bool(min_eig >= -1e-9),
        reconstruction_min_eigenvalue=min_eig,
    )
    if min_eig < -1e-9:
        results["note"] = "non-PSD reconstruction: entanglement directly witnessed"

    inclusion = geometry.check_inclusion(
        model, models.pauli_targets(), restarts=16, seed=seed, samples=2000
    )
    certified = inclusion.status == "certified-subset"
    if ppt.status == "npt":
        results["verdict"] = (
            "entangled (certified lift)" if certified
            else "entangled (target model only; no certified lift)"
        )
    else:
        results["verdict"] = "not detected"
    return {
        "results": results,
        "certification": {"inclusion": inclusion.to_payload(), "model": model.describe()},
    }


# -- subcommand: ion-trap-threshold --


def run_ion_trap_threshold(cfg: dict) -> dict:
    if _get(cfg, "model", "kind") == "ion-trap":
        variants = [_get(cfg, "model", "model", required=True)]
    else:
        variants = _get(cfg, "options", "variants", ["qubit", "qutrit"])
    modes = _get(cfg, "options", "constraints", ["joint+marginals"])
    p_lo = float(_get(cfg, "options", "p_lo", 0.3))
    p_hi = float(_get(cfg, "options", "p_hi", 0.9))
    tol_p = float(_get(cfg, "options", "tol_p", 1e-3))
    results = {}
    for variant in variants:
        if variant not in ("qubit", "qutrit"):
            raise ConfigError(f"unknown ion-trap variant {variant!r}")
        for mode in modes:
            if mode not in ("joint", "joint+marginals"):
                raise ConfigError(f"unknown constraint mode {mode!r}")
            include = mode == "joint+marginals"

            def feasible(p, variant=variant, include=include):
                res = sdp.ion_trap_compatibility(p, variant, include_marginals=include)
                if res.solution.status in ("feasible", "infeasible-certified"):
                    return res.solution.status == "feasible"
                if res.solution.status == "undecided":
                    return res.solution.feasibility_margin >= 0.0
                raise SolverFailure(f"compatibility probe failed: {res.solution.status}")

            key = f"{variant}/{mode}"
            try:
                threshold = sdp.threshold_search(feasible, p_lo, p_hi, tol_p)
                results[key] = {"threshold": threshold, "tol_p": tol_p}
            except ValueError as exc:
                results[key] = {"threshold": None, "note": str(exc)}
    return {"results": results, "certification": {"ppt_exact_dimensions": True}}


# -- subcommand: polarization-certify --


def run_polarization_certification(n_max: int, seed: int, samples: int = 20000) -> dict:
    if n_max < 1:
        raise ConfigError("n_max must be at least 1")
    model = models.polarization_model(n_max)
    inclusion = geometry.check_inclusion(
        model, models.pauli_targets(), restarts=32, seed=seed, samples=samples
    )
    anticommutation = {
        n: geometry.all_anticommutation_certificates(n) for n in range(1, n_max + 1)
    }
    expansion = {
        n: max(geometry.permutation_expansion_matches(n, b) for b in "xyz")
        for n in range(1, min(n_max, 4) + 1)
    }
    squasher = models.click_squasher(n_max)
    slices = models.block_slices(n_max, include_vacuum=False)
    click_dim = model.click_dim
    restriction = {}
    for k in range(1, n_max + 1):
        proj = np.zeros((click_dim, click_dim))
        for n in range(1, k + 1):
            sl = slices[n]
            proj[sl, sl] = np.eye(n + 1)
        restricted = maps.restricted_choi(squasher, proj)
        restriction[k] = float(np.linalg.eigvalsh(restricted.entries)[0])
    cp_check = maps.check_complete_positivity(squasher)
    positivity = maps.check_positivity(
        squasher,
        restarts=16,
        seed=seed,
        certificate=(
            "bloch-ball-inclusion" if inclusion.status == "certified-subset" else None
        ),
    )
    # defining identity of the constructed map on seeded random states
    rng = np.random.default_rng(seed)
    identity_dev = 0.0
    full_squasher = model.squasher()
    for _ in range(20):
        g = rng.standard_normal((model.full_dim, model.full_dim)) + 1j * rng.standard_normal(
            (model.full_dim, model.full_dim)
        )
        rho = g @ g.conj().T
        rho /= np.real(np.trace(rho))
        out = full_squasher.apply_matrix(rho)
        for beta in "xyz":
            for label in ("vac", "0", "1"):
                lhs = np.trace(rho @ model.full_sets[beta].operator(label).entries)
                rhs = np.trace(out @ model.target_sets[beta].operator(label).entries)
                identity_dev = max(identity_dev, abs(float(np.real(lhs - rhs))))
    results = {
        "n_max": n_max,
        "per_block_max_norm_sq": {str(k): v for k, v in inclusion.per_block.items()},
        "anticommutation_certificates": {str(k): v for k, v in anticommutation.items()},
        "permutation_expansion_deviation": {str(k): v for k, v in expansion.items()},
        "choi_min_eigenvalue_by_truncation": {str(k): v for k, v in restriction.items()},
        "completely_positive": cp_check.completely_positive,
        "choi_min_eigenvalue": cp_check.min_choi_eigenvalue,
        "positivity_status": positivity.positivity_status,
        "worst_output_eigenvalue": positivity.worst_output_eigenvalue,
        "squash_identity_deviation": identity_dev,
        "squasher": squasher.to_payload(),
    }
    return {
        "results": results,
        "certification": {"inclusion": inclusion.to_payload()},
    }


# -- subcommand: sweep --


def _sweep_rows(cfg: dict, seed: int) -> tuple[list[str], list[list]]:
    section = cfg.get("sweep", {})
    variable = section.get("variable")
    if variable not in ("p", "eta", "p_dark", "q"):
        raise ConfigError(f"unknown sweep variable {variable!r}")
    start = float(section.get("start", 0.0))
    stop = float(section.get("stop", 1.0))
    steps = int(section.get("steps", 0))
    if steps < 1:
        raise ConfigError("sweep needs at least one step")
    grid = np.linspace(start, stop, steps)

    if variable == "p":
        available = ["negativity", "witness_value"]
        w = models.standard_witness()

        def point(p):
            rho = models.werner_state(p).op
            return {
                "negativity": metrics.negativity(rho).value,
                "witness_value": metrics.witness_value(w, rho),
            }

    else:
        available = ["squashed_negativity", "coincidence_weight"]
        n_max = int(_get(cfg, "model", "n_max", 2))
        pair_cfg = {"state": {"source": "photon-pair", "kind": "bell"}}
        rho = _photon_pair_state(pair_cfg, n_max)

        def point(value):
            model = models.polarization_model(n_max, **{variable: value})
            squashed = maps.apply(
                maps.tensor_maps(model.squasher(), model.squasher()), rho
            )
            four = squashed.entries.reshape(3, 3, 3, 3)
            return {
                "squashed_negativity": metrics.negativity(squashed.with_dims((3, 3))).value,
                "coincidence_weight": float(
                    np.real(np.einsum("abab->", four[1:, 1:, 1:, 1:]))
                ),
            }

    requested = section.get("metrics", available)
    unknown = [m for m in requested if m not in available]
    if unknown:
        raise ConfigError(
            f"unknown sweep metrics {unknown} for variable {variable!r}; "
            f"available: {available}"
        )
    header = [variable] + list(requested)
    rows = []
    for value in grid:
        computed = point(float(value))
        rows.append([float(value)] + [computed[m] for m in requested])
    return header, rows


def run_sweep(cfg: dict, seed: int) -> tuple[list[str], list[list]]:
    return _sweep_rows(cfg, seed)


# -- argument parsing and dispatch --


def _common_flags(sub):
    sub.add_argument("--config", help="scenario TOML file")
    sub.add_argument("--seed", type=int, default=None, help="seed for stochastic steps")
    sub.add_argument("--n-max", type=int, default=None, help="photon-number truncation")
    sub.add_argument("--out", help="write the report to this path")
    sub.add_argument("--format", choices=("json", "csv"), default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entsquash",
        description="entanglement verification under realistic measurement models",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in (
        "verify-tomography",
        "ion-trap-threshold",
        "polarization-certify",
        "negativity",
        "bound",
        "diamond-norm",
        "sweep",
    ):
        sub = subs.add_parser(name)
        _common_flags(sub)
        if name == "diamond-norm":
            sub.add_argument("--kind", choices=("identity", "transposition"))
            sub.add_argument("--dim", type=int, default=2)
            sub.add_argument("--cross-check", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = _load_config(args.config) if args.config else {}
        seed = _resolve_seed(args, cfg)
        report = _report_skeleton(args.command, cfg, seed)

        if args.command == "verify-tomography":
            outcome = run_tomography_test(cfg, seed, args.n_max)
        elif args.command == "ion-trap-threshold":
            outcome = run_ion_trap_threshold(cfg)
        elif args.command == "polarization-certify":
            n_max = args.n_max or int(_get(cfg, "model", "n_max", 3))
            outcome = run_polarization_certification(n_max, seed)
        elif args.command == "negativity":
            state = _state_from_config(cfg)
            cut = int(_get(cfg, "state", "cut", 0))
            rep = metrics.negativity(state, cut=cut)
            outcome = {
                "results": {
                    "negativity": rep.value,
                    "pt_trace_norm": rep.pt_trace_norm,
                    "negative_eigenvalue_sum": rep.negative_eigenvalue_sum,
                },
                "certification": {},
            }
        elif args.command == "bound":
            state = _state_from_config(cfg)
            map_a = _map_from_config(cfg.get("map_a", {"kind": "identity"}))
            map_b = _map_from_config(cfg.get("map_b", {"kind": "identity"}))
            grid_res = _get(cfg, "options", "grid_resolution")
            peak = metrics.negativity_bound_peak(
                state, map_a, map_b, seed=seed, grid_resolution=grid_res
            )
            diamond = metrics.negativity_bound_diamond(state, map_a, map_b)
            outcome = {
                "results": {
                    "peak_norm_bound": peak.to_payload(),
                    "diamond_bound": diamond.to_payload(),
                },
                "certification": {
                    "claimed_bounds_use": "certified upper bounds on the map norm only"
                },
            }
        elif args.command == "diamond-norm":
            if args.kind:
                m = _map_from_config({"kind": args.kind, "dim": args.dim})
            elif "map" in cfg:
                m = _map_from_config(cfg["map"])
            else:
                raise ConfigError("diamond-norm needs --kind or a [map] config section")
            if args.cross_check:
                res = sdp.diamond_norm(m, cross_check=True, seed=seed)
                results = {
                    "diamond_norm": res.value,
                    "multistart_lower": res.multistart_lower,
                    "agreement": res.agreement,
                }
            else:
                results = {"diamond_norm": sdp.diamond_norm(m)}
            outcome = {"results": results, "certification": {}}
        elif args.command == "sweep":
            header, rows = run_sweep(cfg, seed)
            if (args.format or "csv") == "csv":
                buf = io.StringIO()
                writer = csv.writer(buf, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
                text = buf.getvalue()
                if args.out:
                    with open(args.out, "w") as fh:
                        fh.write(text)
                else:
                    sys.stdout.write(text)
                print(f"wall time: {time.perf_counter() - started:.3f} s", file=sys.stderr)
                return 0
            outcome = {"results": {"header": header, "rows": rows}, "certification": {}}
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {args.command}")

        report["results"] = outcome["results"]
        report["certification"] = outcome["certification"]
        _emit(report, args, started)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, IndexError) as exc:
        # invalid inputs surfacing from the library layers
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
