# pipeline/report.py
"""
CSV helpers and the report stage: static SVG charts, each next to a CSV with
the exact plotted numbers, and the reference targets compared with the run.
"""
import re
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams.update(
    {
        "font.family": "DejaVu Sans",
        "axes.unicode_minus": False,
        "svg.fonttype": "none",
        "svg.hashsalt": "signature-mor",
    }
)
import matplotlib.pyplot as plt  # noqa: E402

from utils import defaults  # noqa: E402
from utils.logger import get_logger  # noqa: E402

logger = get_logger(__name__)

REPORT_DIR = "report"
SIGMA_PLOT_COUNT = 80


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Comma-separated file; floats written with repr so reruns are byte-identical."""
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell(v) for v in row) + "\n")


def read_table(path: Union[str, Path]) -> dict[str, np.ndarray]:
    """Numeric CSV as {column: values}."""
    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return {name: np.empty(0) for name in header}
    return {name: data[:, j] for j, name in enumerate(header)}


def sigma_crossing(sigma: np.ndarray, level: float) -> int:
    """First 1-based index k with sigma_k < level, or len(sigma) + 1 if none."""
    below = np.flatnonzero(np.asarray(sigma) < level)
    return int(below[0]) + 1 if below.size else len(sigma) + 1


def _dims_of(root: Path, pattern: str) -> list[int]:
    rx = re.compile(re.escape(pattern).replace(re.escape("{k}"), r"(\d+)") + "$")
    dims = []
    for path in root.iterdir():
        match = rx.match(path.name)
        if match:
            dims.append(int(match.group(1)))
    return sorted(dims)


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote {path}")


def plot_sigma(root: Path, out: Path) -> np.ndarray:
    sigma = read_table(root / "sigma.csv")["sigma"]
    shown = sigma[:SIGMA_PLOT_COUNT]
    ks = np.arange(1, len(shown) + 1)
    write_csv(out / "sigma.csv", ("k", "sigma"), zip(ks, shown))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    positive = shown > 0
    ax.semilogy(ks[positive], shown[positive], marker="o", markersize=3, linewidth=1)
    ax.set_xlabel("k")
    ax.set_ylabel(r"$\sigma_k = \sqrt{\mathrm{eig}_k(PQ)}$")
    ax.set_title(f"Hankel-type values, first {len(shown)} of n = {len(sigma)}")
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, out / "sigma.svg")
    return sigma


def plot_l2_curve(root: Path, out: Path) -> dict[str, np.ndarray]:
    curve = read_table(root / "l2_curve.csv")
    dims = curve["n_red"].astype(int)
    write_csv(
        out / "l2_curve.csv",
        ("n_red", "l2_error", "stderr", "relative", "relative_stderr"),
        zip(dims, curve["l2_error"], curve["stderr"], curve["relative"], curve["relative_stderr"]),
    )

    fig, ax = plt.subplots(figsize=(7, 4.5))
    shown = curve["l2_error"] > 0
    ax.errorbar(dims[shown], curve["l2_error"][shown], yerr=curve["stderr"][shown],
                marker="o", markersize=3, linewidth=1, capsize=2)
    ax.set_yscale("log")
    ax.set_xlabel(r"reduced dimension $\tilde n$")
    ax.set_ylabel(r"$\sqrt{E\int_0^T |Y_t - \tilde Y_t|^2 dt}$")
    ax.set_title("L2 output error")
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, out / "l2_curve.svg")
    return curve


def _smile_rows(path: Path) -> dict[float, np.ndarray]:
    table = read_table(path)
    return {
        float(T): np.column_stack([table[c][table["T"] == T] for c in ("K", "iv", "iv_stderr")])
        for T in np.unique(table["T"])
    }


def plot_smiles(root: Path, out: Path) -> None:
    systems = [("full", root / "smile_full.csv")]
    systems += [(f"n_red={k}", root / f"smile_reduced_{k}.csv") for k in _dims_of(root, "smile_reduced_{k}.csv")]
    smiles = {label: _smile_rows(path) for label, path in systems}
    maturities = sorted(smiles["full"])

    rows = []
    for label, by_T in smiles.items():
        for T in maturities:
            for K, iv, se in by_T.get(T, np.empty((0, 3))):
                rows.append((label, T, K, iv, se))
    write_csv(out / "iv_smiles.csv", ("system", "T", "K", "iv", "iv_stderr"), rows)

    fig, axes = plt.subplots(1, len(maturities), figsize=(5 * len(maturities), 4.5), squeeze=False)
    for ax, T in zip(axes[0], maturities):
        for label, by_T in smiles.items():
            if T not in by_T:
                continue
            K, iv, _ = by_T[T].T
            style = {"linewidth": 2} if label == "full" else {"linestyle": "--", "linewidth": 1}
            ax.plot(K, iv, label=label, **style)
        ax.set_title(f"T = {T:.4g}")
        ax.set_xlabel("strike K")
        ax.set_ylabel("implied volatility")
        ax.grid(True, alpha=0.3)
    axes[0][0].legend()
    fig.tight_layout()
    _save(fig, out / "iv_smiles.svg")


def plot_iv_errors(root: Path, out: Path) -> dict[int, float]:
    """Relative IV error per strike for every reduced dimension; returns the max error per dimension."""
    dims = _dims_of(root, "iv_errors_{k}.csv")
    tables = {k: read_table(root / f"iv_errors_{k}.csv") for k in dims}
    rows = []
    for k, t in tables.items():
        rows.extend(zip([k] * len(t["T"]), t["T"], t["K"], t["rel_error"], t["rel_error_stderr"]))
    write_csv(out / "iv_errors.csv", ("n_red", "T", "K", "rel_error", "rel_error_stderr"), rows)

    maturities = sorted({float(T) for t in tables.values() for T in np.unique(t["T"])}) or [None]
    fig, axes = plt.subplots(1, len(maturities), figsize=(5 * len(maturities), 4.5), squeeze=False)
    for ax, T in zip(axes[0], maturities):
        for k, t in tables.items():
            sel = (t["T"] == T) & (t["rel_error"] > 0)
            ax.errorbar(t["K"][sel], t["rel_error"][sel], yerr=t["rel_error_stderr"][sel],
                        label=f"n_red={k}", marker="o", markersize=3, linewidth=1, capsize=2)
        ax.set_yscale("log")
        ax.set_title("no reduced smiles" if T is None else f"T = {T:.4g}")
        ax.set_xlabel("strike K")
        ax.set_ylabel("relative IV error")
        ax.grid(True, which="both", alpha=0.3)
    if tables:
        axes[0][0].legend()
    else:
        logger.warning(f"No iv_errors_<k>.csv in {root}; run 'price' with reduced systems")
    fig.tight_layout()
    _save(fig, out / "iv_errors.svg")

    worst = {}
    for k, t in tables.items():
        finite = np.isfinite(t["rel_error"])
        worst[k] = float(np.max(t["rel_error"][finite])) if np.any(finite) else float("nan")
    return worst


def reference_rows(model: str, sigma: np.ndarray, curve: dict, iv_worst: dict[int, float]) -> list[tuple]:
    """(target, reference, measured) rows; measured is NaN when the run has no data for a target."""
    targets = defaults.REFERENCE_TARGETS[model]
    level = targets["sigma_crossing_level"]
    crossing = sigma_crossing(sigma, level)
    rows = []
    for name, reference in targets.items():
        if name == "state_dimension":
            measured = len(sigma)
        elif name == "sigma_crossing_index":
            measured = crossing
        elif name == "sigma_crossing_level":
            measured = level
        elif name == "exact_dim":
            measured = crossing - 1
        elif name.startswith("iv_rel_error_dim_"):
            measured = iv_worst.get(int(name.rsplit("_", 1)[1]), float("nan"))
        elif name.startswith("l2_rel_error_above_dim_"):
            above = curve["n_red"] > int(name.rsplit("_", 1)[1])
            measured = float(np.max(curve["relative"][above])) if np.any(above) else float("nan")
        else:
            measured = float("nan")
        rows.append((name, reference, measured))
    return rows


def write_report(root: Union[str, Path], model: str) -> Path:
    """
    Write report/ under a run directory.

    :param root: Run directory holding sigma.csv, l2_curve.csv and the smile CSVs.
    :param model: 'bergomi' or 'rough_bergomi', selecting the reference targets.
    :return: The report directory.
    """
    root = Path(root)
    out = root / REPORT_DIR
    out.mkdir(exist_ok=True)
    sigma = plot_sigma(root, out)
    curve = plot_l2_curve(root, out)
    plot_smiles(root, out)
    iv_worst = plot_iv_errors(root, out)

    rows = reference_rows(model, sigma, curve, iv_worst)
    write_csv(out / "reference_targets.csv", ("target", "reference", "measured"), rows)
    for name, reference, measured in rows:
        logger.info(f"{name}: reference {reference}, measured {measured}")
    if np.any(np.diff(sigma[sigma > 0]) > 0):
        logger.warning("sigma spectrum is not monotonically decreasing")
    return out
