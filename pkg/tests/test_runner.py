import filecmp

import numpy as np
import pytest

from cmmexplore import plyio
from cmmexplore.cli import main
from cmmexplore.config import from_dict, load_config
from cmmexplore.explorer import PerceptionCache
from cmmexplore.runner import (_save_checkpoint, final_scores, make_exploration, read_rows, rep_paths, run,
                               sweep_alpha)

TINY = """
name: tiny
budget: 6
replications: 2
scene_pool: 4
checkpoint_every: 3
scene:
  table: {extent: [0.4, 0.4], color: [0.8, 0.55, 0.25]}
  sampling_density: 1500
  objects:
    - {name: ball, shape: sphere, size: [0.12], color: [0.1, 0.25, 0.85]}
"""

CACHE = PerceptionCache()


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY)
    cfg = load_config(path)
    cfg.output_dir = str(tmp_path / "runs")
    return cfg


def _files(d):
    return sorted(p.relative_to(d) for p in d.rglob("*") if p.is_file())


def test_single_iteration_run(tiny, tmp_path):
    tiny.budget, tiny.replications = 1, 1
    d = run(tiny, tmp_path / "one", plots=False, cache=CACHE)
    rows = read_rows(d / "rep000.csv")
    assert len(rows) == 1 and rows[0]["iter"] == 1
    assert (d / "summary.csv").exists() and (d / "summary.dat").exists()
    assert (d / "config.yaml").exists() and (d / "rep000.relevance.ply").exists()


def test_rerun_is_byte_identical(tiny, tmp_path):
    a = run(tiny, tmp_path / "a", plots=True, cache=CACHE)
    b = run(from_dict(tiny.to_dict()), tmp_path / "b", plots=True)
    files = _files(a)
    assert files == _files(b)
    assert {"figures/quality.png", "rep001.mean-choice.ply", "rep001.checkpoint.json"} <= {str(f) for f in files}
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(f) for f in files], shallow=False)
    assert not mismatch and not errors


def test_split_merge_ablation(tiny, tmp_path):
    tiny.disable_split_merge = True
    tiny.budget = 60
    tiny.replications = 1
    d = run(tiny, tmp_path / "abl", plots=False, cache=CACHE)
    for r in read_rows(d / "rep000.csv"):
        assert r["K0"] == min(1, r["n0"]) and r["K1"] == min(1, r["n1"])


def test_resume_matches_uninterrupted_run(tiny, tmp_path):
    full = run(tiny, tmp_path / "full", plots=False, cache=CACHE)
    part = tmp_path / "part"
    part.mkdir()
    (part / "config.yaml").write_text((full / "config.yaml").read_text())
    ex = make_exploration(tiny, 0, CACHE)
    ex.run(4)
    _save_checkpoint(rep_paths(part, 0)["checkpoint"], tiny, 0, ex)
    run(tiny, part, plots=False, cache=CACHE)
    for name in ("rep000.csv", "rep001.csv", "summary.csv"):
        assert (part / name).read_bytes() == (full / name).read_bytes()


def test_resume_rejects_other_config(tiny, tmp_path):
    d = run(tiny, tmp_path / "x", plots=False, cache=CACHE)
    tiny.cmm.alpha = 0.5
    with pytest.raises(ValueError, match="different configuration"):
        run(tiny, d, plots=False, cache=CACHE)


def test_summary_statistics(tiny, tmp_path):
    d = run(tiny, tmp_path / "s", plots=False, cache=CACHE)
    reps = [read_rows(d / f"rep00{i}.csv") for i in range(2)]
    summary = read_rows(d / "summary.csv")
    assert len(summary) == tiny.budget
    last = summary[-1]
    acc = [r[-1]["accuracy"] for r in reps]
    assert last["accuracy_mean"] == pytest.approx(np.mean(acc))
    assert last["accuracy_std"] == pytest.approx(np.std(acc))
    assert final_scores(d)["accuracy_mean"] == pytest.approx(np.mean(acc))


def test_alpha_sweep(tiny, tmp_path):
    out, rows = sweep_alpha(tiny, [0.2, 0.8], tmp_path / "sweep", plots=True, cache=CACHE)
    assert [r["alpha"] for r in rows] == [0.2, 0.8]
    table = read_rows(out / "sweep.csv")
    assert len(table) == 2 and (out / "sweep.png").exists()
    assert (out / "alpha-0.20" / "rep001.csv").exists()
    with pytest.raises(ValueError):
        sweep_alpha(tiny, [0.0], tmp_path / "bad", plots=False)


def test_cli_run_and_export(tiny, tmp_path, capsys):
    cfg_path = tmp_path / "tiny.yaml"
    d = tmp_path / "cli-run"
    assert main(["run", str(cfg_path), "--run-dir", str(d), "--replications", "1", "--budget", "3"]) == 0
    assert str(d) in capsys.readouterr().out
    assert len(read_rows(d / "rep000.csv")) == 3
    assert (d / "figures" / "samples.png").exists()
    out = tmp_path / "map.ply"
    assert main(["export-map", str(d / "rep000.checkpoint.json"), "-o", str(out)]) == 0
    pos, _, colors = plyio.read_ply(out)
    ref, _, _ = plyio.read_ply(d / "rep000.relevance.ply")
    assert len(pos) == len(ref)
    assert main(["export-map", str(d / "rep000.checkpoint.json"), "-o", str(out), "--choice", "--seed", "3"]) == 0
    assert main(["export-map", str(tmp_path / "missing.json"), "-o", str(out)]) == 1


def test_ply_round_trip(tmp_path, rng):
    pos = rng.random((10, 3))
    nrm = np.tile([0, 0, 1.0], (10, 1))
    col = rng.random((10, 3))
    plyio.write_ply(tmp_path / "c.ply", pos, nrm, col)
    p, n, c = plyio.read_ply(tmp_path / "c.ply")
    assert np.allclose(p, pos, atol=1e-6) and np.allclose(n, nrm)
    assert np.array_equal(c, plyio.to_bytes8(col))
    assert np.array_equal(plyio.ramp([0.0, 1.0], 0, 1)[1], [1, 1, 0])
