import numpy as np
import pytest

pytest.importorskip("matplotlib")

from qkernel.kernel import select_rank
from qkernel.pipeline import grid_search_svr
from qkernel.plotting import plot_denoise, plot_noise_sweep, plot_series, plot_surface


def test_plots_write_png(tmp_path):
    rows = [{"p1": a, "p2": b, "seed": 0, "alignment": 1 - a - b, "test_accuracy": 0.9} for a in (0.0, 0.1) for b in (0.0, 0.2)]
    plot_noise_sweep(rows, tmp_path / "n.png")
    plot_series([{"shots": s, "alignment": 0.9, "test_accuracy": 0.8} for s in (10, 100)], "shots", tmp_path / "s.png", logx=True)
    sel = select_rank(np.diag([1.0, 0.2, 0.1]), np.diag([1.0, 0.0, 0.0]))
    plot_denoise(sel, tmp_path / "d.png")
    K = np.eye(3)
    plot_surface(grid_search_svr(K, [0.0, 1.0, 2.0], K, [0.0, 1.0, 2.0], [0.0, 0.1], [1.0, 2.0]), tmp_path / "g.png")
    for name in "nsdg":
        assert (tmp_path / f"{name}.png").read_bytes()[:4] == b"\x89PNG"
