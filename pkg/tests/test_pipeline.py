import numpy as np
import pytest

from main import main
from pipeline.artifacts import RunDirectory
from pipeline.commands import COMMANDS, cmd_build, cmd_report, cmd_simulate
from pipeline.config import apply_overrides, load_config
from pipeline.report import read_table, sigma_crossing
from system.serialization import read_system
from utils.errors import MissingArtifactError, StaleArtifactError

STAGES = ("simulate", "fit", "build", "gramians", "reduce", "price", "report")

TINY = """\
[model]
name = bergomi

[bergomi]

[signature]
m = 2

[fitting]
paths = 40
steps = 8
horizon = 0.5
sweep = 1e-8, 1e-4

[reduction]
horizon = 1.0
dims = 1, 2, 3
l2_paths = 50
l2_steps = 16

[pricing]
maturities = 0.5
paths = 2000
steps_per_year = 32
dims = 2, 3

[io]
seed = 1
threads = 2
"""


def _run_all(out, threads=2):
    config = apply_overrides(load_config(text=TINY), out=str(out), threads=threads)
    run_dir = RunDirectory(config.io.out)
    for stage in STAGES:
        COMMANDS[stage](config, run_dir)
    return config, run_dir


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    return _run_all(tmp_path_factory.mktemp("run"))


def test_every_stage_writes_its_artifacts(finished_run):
    _, run_dir = finished_run
    for name in (
        "paths.npz", "model.npz", "fit_sweep.csv", "system.txt", "gramian_P.bin", "gramian_Q.bin",
        "spectra.csv", "sigma.csv", "balanced_sigma.csv", "l2_curve.csv", "reduced_1.txt",
        "reduced_3.txt", "smile_full.csv", "smile_reduced_2.csv", "iv_errors_3.csv", "manifest.json",
    ):
        assert run_dir.path(name).exists(), name
    for name in ("sigma", "l2_curve", "iv_smiles", "iv_errors"):
        assert (run_dir.root / "report" / f"{name}.svg").exists()
        assert (run_dir.root / "report" / f"{name}.csv").exists()


def test_artifact_contents(finished_run):
    _, run_dir = finished_run
    system = read_system(run_dir.path("system.txt"))
    assert (system.d, system.m, system.n) == (4, 2, 21)
    sigma = read_table(run_dir.path("sigma.csv"))["sigma"]
    assert sigma.shape == (21,) and np.all(np.diff(sigma) <= 0)
    curve = read_table(run_dir.path("l2_curve.csv"))
    assert curve["n_red"].tolist() == [1.0, 2.0, 3.0]
    assert np.all(curve["l2_error"] >= 0) and np.all(curve["drift_gap"] >= 0)
    assert len(read_table(run_dir.path("fit_sweep.csv"))["ridge"]) == 2
    smile = read_table(run_dir.path("smile_full.csv"))
    assert len(smile["K"]) == 21 and np.all(smile["T"] == 0.5)


def test_reference_targets(finished_run):
    _, run_dir = finished_run
    lines = (run_dir.root / "report" / "reference_targets.csv").read_text().splitlines()
    assert lines[0] == "target,reference,measured"
    rows = {line.split(",")[0]: line.split(",")[1:] for line in lines[1:]}
    assert rows["state_dimension"] == ["1365", "21"]
    sigma = read_table(run_dir.path("sigma.csv"))["sigma"]
    assert int(rows["sigma_crossing_index"][1]) == sigma_crossing(sigma, 1e-8)


def test_sigma_crossing():
    assert sigma_crossing(np.array([1.0, 1e-3, 1e-9, 0.0]), 1e-8) == 3
    assert sigma_crossing(np.array([1.0, 0.5]), 1e-8) == 3


def test_rerun_is_up_to_date(finished_run):
    config, run_dir = finished_run
    manifest = run_dir.path("manifest.json").read_text()
    stamp = run_dir.path("paths.npz").stat().st_mtime_ns
    rerun = RunDirectory(run_dir.root)
    for stage in STAGES[:-1]:
        COMMANDS[stage](config, rerun)
    assert run_dir.path("manifest.json").read_text() == manifest
    assert run_dir.path("paths.npz").stat().st_mtime_ns == stamp


def test_same_seed_gives_identical_files(finished_run, tmp_path):
    _, first = finished_run
    _, second = _run_all(tmp_path / "again", threads=1)
    for name in ("fit_sweep.csv", "sigma.csv", "l2_curve.csv", "smile_full.csv", "iv_errors_2.csv",
                 "system.txt", "report/sigma.svg", "report/iv_smiles.svg"):
        assert first.path(name).read_bytes() == second.path(name).read_bytes(), name


def test_changed_seed_is_refused_without_force(finished_run):
    config, run_dir = finished_run
    changed = apply_overrides(config, seed=99)
    with pytest.raises(StaleArtifactError):
        cmd_simulate(changed, RunDirectory(run_dir.root))


def test_missing_inputs_name_the_producer(tmp_path):
    config = apply_overrides(load_config(text=TINY), out=str(tmp_path))
    run_dir = RunDirectory(tmp_path)
    with pytest.raises(MissingArtifactError, match="run 'fit' first"):
        cmd_build(config, run_dir)
    with pytest.raises(MissingArtifactError) as info:
        cmd_report(config, run_dir)
    assert "sigma.csv" in str(info.value) and "smile_full.csv" in str(info.value)


def test_unit_output_needs_no_fit(tmp_path):
    config = load_config(text=TINY.replace("m = 2\n", "m = 2\noutput = unit\n"))
    cmd_build(config, RunDirectory(tmp_path))
    system = read_system(tmp_path / "system.txt")
    assert system.L[0, 0] == 1.0 and np.count_nonzero(system.L) == 1


def test_main_exit_codes(tmp_path, capsys):
    config_path = tmp_path / "tiny.ini"
    config_path.write_text(TINY)
    out = tmp_path / "run"
    assert main(["--config", str(config_path), "--out", str(out), "report"]) == 2
    assert "missing artifact" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "absent.ini"), "simulate"]) == 2
    assert main(["--config", str(config_path), "--out", str(out), "--seed", "3", "simulate"]) == 0
    assert (out / "paths.npz").exists()
    with pytest.raises(SystemExit):
        main(["--config", str(config_path), "explode"])
