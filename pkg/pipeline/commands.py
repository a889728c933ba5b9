# pipeline/commands.py
"""
Pipeline stages. Each command reads its inputs from the run directory, skips
work whose manifest key is unchanged, and records what it wrote.

    simulate -> paths.npz
    fit      -> model.npz, fit_sweep.csv
    build    -> system.txt
    gramians -> gramian_P.bin, gramian_Q.bin, spectra.csv, sigma.csv
    reduce   -> reduced_<k>.txt, balanced_sigma.csv, l2_curve.csv
    price    -> smile_full.csv, smile_reduced_<k>.csv, iv_errors_<k>.csv
    report   -> report/*.csv, report/*.svg
"""
import time
from functools import wraps

import numpy as np

from models.bergomi import simulate_bergomi
from models.fitting import FittedSignatureModel, fit_path_batch
from models.path_batch import PathBatch
from models.rough_bergomi import simulate_rough_bergomi
from pipeline.artifacts import RunDirectory, stage_key
from pipeline.config import PipelineConfig
from pipeline import report
from pricing.black_scholes import build_smile, iv_error_report, write_smile_csv
from pricing.monte_carlo import SimulationGrid, l2_error_curve, simulate_linear_sde
from system.balancing import balance, drift_output_gap, hankel_spectrum, reduce
from system.gramians import compute_gramians, gramian_spectra, load_gramian, save_gramian, save_spectra_csv
from system.serialization import read_system, write_system
from system.signature_sde import NoiseCovariance, assemble_system
from utils.errors import ConfigError, SignatureMORError
from utils.logger import get_logger

logger = get_logger(__name__)


def noise_covariance(config: PipelineConfig) -> NoiseCovariance:
    """K of the Brownian driver components: (Z, W1, W2) for Bergomi, (Z, W) for rough Bergomi."""
    params = config.model_params
    if config.model.name == "bergomi":
        return NoiseCovariance.from_correlation(params.correlation_matrix())
    return NoiseCovariance.from_correlation(np.array([[1.0, params.rho], [params.rho, 1.0]]))


def reduced_name(k: int) -> str:
    return f"reduced_{k}.txt"


def _stage(name: str):
    """Log start, end and duration of a stage."""
    def wrap(func):
        @wraps(func)
        def run(config: PipelineConfig, run_dir: RunDirectory):
            logger.info(f"{name}: start ({config.model.name}, out={run_dir.root})")
            started = time.perf_counter()
            try:
                result = func(config, run_dir)
            except SignatureMORError as e:
                logger.error(f"{name} failed: {e}")
                raise
            logger.info(f"{name}: done in {time.perf_counter() - started:.1f}s")
            return result
        return run
    return wrap


@_stage("simulate")
def cmd_simulate(config: PipelineConfig, run_dir: RunDirectory) -> None:
    """Simulate the ground-truth model paths used for fitting."""
    fitting = config.fitting
    sections = config.section_dict("model", config.model.name)
    sections["grid"] = {"paths": fitting.paths, "steps": fitting.steps, "horizon": fitting.horizon}
    sections["seed"] = config.io.seed
    key = stage_key(sections)
    if run_dir.is_current("simulate", key):
        return
    simulate = simulate_bergomi if config.model.name == "bergomi" else simulate_rough_bergomi
    batch = simulate(config.model_params, fitting.horizon, fitting.steps, fitting.paths,
                     config.io.seed, threads=config.io.threads)
    batch.save(run_dir.path("paths.npz"))
    run_dir.record("simulate", key, ["paths.npz"])


@_stage("fit")
def cmd_fit(config: PipelineConfig, run_dir: RunDirectory) -> FittedSignatureModel:
    """Fit the signature price model to the simulated paths."""
    run_dir.require("paths.npz", command="simulate")
    sections = config.section_dict("fitting")
    sections["m"] = config.m
    key = stage_key(sections, [run_dir.input_hash("paths.npz")])
    if run_dir.is_current("fit", key):
        return FittedSignatureModel.load(run_dir.path("model.npz"))
    batch = PathBatch.load(run_dir.path("paths.npz"))
    if batch.d != config.d:
        raise ConfigError(f"paths.npz has driver dimension {batch.d}, model {config.model.name} needs {config.d}")
    fitting = config.fitting
    model = fit_path_batch(
        batch,
        config.m,
        ridge=fitting.ridge,
        train_fraction=fitting.train_fraction,
        sweep=fitting.sweep,
        chunk=fitting.chunk,
        threads=config.io.threads,
    )
    model.save(run_dir.path("model.npz"))
    report.write_csv(run_dir.path("fit_sweep.csv"), ("ridge", "train_rmse", "validation_rmse"), model.sweep)
    run_dir.record("fit", key, ["model.npz", "fit_sweep.csv"])
    return model


@_stage("build")
def cmd_build(config: PipelineConfig, run_dir: RunDirectory) -> None:
    """Assemble the signature system with the fitted (or empty-word) output and write system.txt."""
    sections = config.section_dict("model", config.model.name, "signature")
    sections["m"] = config.m
    inputs = []
    if config.signature.output == "fitted":
        run_dir.require("model.npz", command="fit")
        inputs.append(run_dir.input_hash("model.npz"))
    key = stage_key(sections, inputs)
    if run_dir.is_current("build", key):
        return

    L = None
    if config.signature.output == "fitted":
        model = FittedSignatureModel.load(run_dir.path("model.npz"))
        if (model.order.d, model.order.m) != (config.d, config.m):
            raise ConfigError(
                f"model.npz was fitted with d={model.order.d}, m={model.order.m}; "
                f"configuration needs d={config.d}, m={config.m}"
            )
        L = model.functional
    system = assemble_system(config.d, config.m, noise_covariance(config), L=L)
    write_system(run_dir.path("system.txt"), system)
    run_dir.record("build", key, ["system.txt"])


@_stage("gramians")
def cmd_gramians(config: PipelineConfig, run_dir: RunDirectory) -> None:
    """Gramians P, Q on [0, T], their spectra and the Hankel values."""
    run_dir.require("system.txt", command="build")
    key = stage_key({"horizon": config.reduction.horizon}, [run_dir.input_hash("system.txt")])
    if run_dir.is_current("gramians", key):
        return
    system = read_system(run_dir.path("system.txt"))
    gramians = compute_gramians(system, config.reduction.horizon, threads=config.io.threads)
    save_gramian(run_dir.path("gramian_P.bin"), gramians.P, gramians.horizon)
    save_gramian(run_dir.path("gramian_Q.bin"), gramians.Q, gramians.horizon)
    save_spectra_csv(run_dir.path("spectra.csv"), gramian_spectra(gramians))
    sigma = hankel_spectrum(gramians.P, gramians.Q)
    report.write_csv(run_dir.path("sigma.csv"), ("k", "sigma"), enumerate(sigma, start=1))
    run_dir.record("gramians", key, ["gramian_P.bin", "gramian_Q.bin", "spectra.csv", "sigma.csv"])


@_stage("reduce")
def cmd_reduce(config: PipelineConfig, run_dir: RunDirectory) -> None:
    """Balance, write reduced systems and the L^2 output error curve over the configured dimensions."""
    run_dir.require("system.txt", "gramian_P.bin", "gramian_Q.bin")
    sections = config.section_dict("reduction")
    sections.update(seed=config.io.seed, price_dims=config.price_dims, dims=config.reduction_dims)
    inputs = [run_dir.input_hash(n) for n in ("system.txt", "gramian_P.bin", "gramian_Q.bin")]
    key = stage_key(sections, inputs)
    if run_dir.is_current("reduce", key):
        return

    system = read_system(run_dir.path("system.txt"))
    P, _ = load_gramian(run_dir.path("gramian_P.bin"))
    Q, _ = load_gramian(run_dir.path("gramian_Q.bin"))
    bal = balance(P, Q, config.reduction.rank_tol)
    report.write_csv(run_dir.path("balanced_sigma.csv"), ("k", "sigma"), enumerate(bal.sigma, start=1))

    wanted = sorted(set(config.reduction_dims) | set(config.price_dims))
    dims = [k for k in wanted if k <= bal.r]
    if len(dims) < len(wanted):
        logger.warning(f"Skipping dimensions above the numerical rank r={bal.r}: {[k for k in wanted if k > bal.r]}")
    reduced = {k: reduce(system, bal, k) for k in dims}
    for k, red in reduced.items():
        write_system(run_dir.path(reduced_name(k)), red)

    curve_dims = [k for k in dims if k in set(config.reduction_dims)]
    grid = SimulationGrid(config.reduction.horizon, config.reduction.l2_steps, config.reduction.l2_paths, config.io.seed)
    errors = l2_error_curve(system, [reduced[k] for k in curve_dims], grid, threads=config.io.threads)
    times = grid.times
    rows = []
    for k, res in zip(curve_dims, errors):
        gap = float(np.max(drift_output_gap(system, reduced[k], times)))
        rows.append((k, res.error, res.stderr, res.relative, res.relative_stderr, gap))
    report.write_csv(
        run_dir.path("l2_curve.csv"),
        ("n_red", "l2_error", "stderr", "relative", "relative_stderr", "drift_gap"),
        rows,
    )
    outputs = ["balanced_sigma.csv", "l2_curve.csv"] + [reduced_name(k) for k in dims]
    run_dir.record("reduce", key, outputs)


@_stage("price")
def cmd_price(config: PipelineConfig, run_dir: RunDirectory) -> None:
    """Call smiles of the full and reduced signature models and their relative IV errors."""
    run_dir.require("system.txt", command="build")
    dims = [k for k in config.price_dims if run_dir.path(reduced_name(k)).exists()]
    if len(dims) < len(config.price_dims):
        logger.warning(f"No reduced system for dimensions {sorted(set(config.price_dims) - set(dims))}; run 'reduce'")
    sections = config.section_dict("pricing")
    sections["seed"] = config.io.seed
    inputs = [run_dir.input_hash("system.txt")] + [run_dir.input_hash(reduced_name(k)) for k in dims]
    key = stage_key(sections, inputs)
    if run_dir.is_current("price", key):
        return

    pricing = config.pricing
    s0 = config.model_params.s0
    system = read_system(run_dir.path("system.txt"))
    reduced = {k: read_system(run_dir.path(reduced_name(k))) for k in dims}
    full_smiles = []
    reduced_smiles = {k: [] for k in dims}
    error_rows = {k: [] for k in dims}
    for T in pricing.maturities:
        grid = SimulationGrid.for_maturity(T, pricing.paths, config.io.seed, pricing.steps_per_year, pricing.antithetic)
        full = build_smile(simulate_linear_sde(system, grid, threads=config.io.threads).terminal, T, s0)
        full_smiles.append(full)
        for k, red in reduced.items():
            smile = build_smile(simulate_linear_sde(red, grid, threads=config.io.threads).terminal, T, s0)
            reduced_smiles[k].append(smile)
            rep = iv_error_report(full, smile)
            error_rows[k].extend(zip([T] * len(rep.strikes), rep.strikes, rep.rel_errors, rep.rel_error_stderrs))
            logger.info(f"T={T:.4f}, n_red={k}: max relative IV error {rep.max_error:.3e}")

    outputs = ["smile_full.csv"]
    write_smile_csv(run_dir.path("smile_full.csv"), full_smiles)
    for k in dims:
        write_smile_csv(run_dir.path(f"smile_reduced_{k}.csv"), reduced_smiles[k])
        report.write_csv(run_dir.path(f"iv_errors_{k}.csv"), ("T", "K", "rel_error", "rel_error_stderr"), error_rows[k])
        outputs += [f"smile_reduced_{k}.csv", f"iv_errors_{k}.csv"]
    run_dir.record("price", key, outputs)


@_stage("report")
def cmd_report(config: PipelineConfig, run_dir: RunDirectory) -> None:
    """Consolidated CSVs and SVG charts under report/, plus reference targets."""
    run_dir.require("sigma.csv", "balanced_sigma.csv", "l2_curve.csv", "smile_full.csv")
    report.write_report(run_dir.root, config.model.name)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "build": cmd_build,
    "gramians": cmd_gramians,
    "reduce": cmd_reduce,
    "price": cmd_price,
    "report": cmd_report,
}
