import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from bohmtraj import experiments
from bohmtraj.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from bohmtraj.errors import NumericalError

SMOKE = {
    "evolve-box": "[experiment]\nkind = evolve\n[system]\nn_points = 64\n[state]\nn_max = 16\n"
                  "[integration]\nt_end = 0.01\nn_frames = 2\n",
    "evolve-line": "[experiment]\nkind = evolve\n[system]\ngeometry = line\nL = 20\nn_points = 256\n"
                   "[state]\nq0 = 0\np0 = 1\nsigma = 1\n[integration]\nt_end = 0.2\nn_frames = 2\n",
    "freeze-check": "[experiment]\nkind = freeze-check\n[system]\nn_points = 64\n[state]\nmode = 2, 1\n"
                    "[ensemble]\nn_particles = 8\n[integration]\nperiods = 1\n",
    "wkb-compare": "[experiment]\nkind = wkb-compare\n[wkb]\nn_points = 100\n",
    "length-spectrum": "[experiment]\nkind = length-spectrum\n[spectrum]\nn_max = 70\nn_k = 2048\n",
    "microcanonical": "[experiment]\nkind = microcanonical\n[system]\nn_points = 64\n",
    "bipolar-demo": "[experiment]\nkind = bipolar-demo\n[system]\nn_points = 256\n"
                    "[ensemble]\nn_particles = 4\n[integration]\nt_end = 0.1\ndt_traj = 0.002\n",
    "perturbative-phase": "[experiment]\nkind = perturbative-phase\n[system]\nL = 20\nn_points = 256\n"
                          "[ensemble]\nn_particles = 4\n[integration]\nt_end = 0.2\ndt = 0.01\ndt_traj = 0.01\n",
}


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("name", sorted(SMOKE))
def test_every_kind_runs_and_writes_manifest(tmp_path, name, capsys):
    out = tmp_path / "out"
    assert main(["--config", write(tmp_path, SMOKE[name]), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == name.split("-box")[0].split("-line")[0]
    assert manifest["files"]
    for f in manifest["files"]:
        assert (out / f).is_file()
    assert set(manifest["versions"]) == {"package", "numpy", "scipy", "python"}
    assert not list(out.glob(".staging-*"))
    assert "ok" in capsys.readouterr().out


def test_dry_run_echoes_resolved_config(tmp_path, capsys):
    cfg = write(tmp_path, "[experiment]\nkind = dos\nseed = 4\n")
    assert main(["--config", cfg, "--dry-run", "--seed", "11"]) == EXIT_OK
    echo = json.loads(capsys.readouterr().out)
    assert echo["seed"] == 11
    assert echo["parameters"]["spectrum"]["n_max"] == 200


def test_template_is_valid_config(tmp_path, capsys):
    assert main(["--template", "lyapunov"]) == EXIT_OK
    text = capsys.readouterr().out
    assert main(["--config", write(tmp_path, text), "--dry-run"]) == EXIT_OK


def test_validation_failures_exit_2_and_list_everything(tmp_path, capsys):
    cfg = write(tmp_path, "[experiment]\nkind = dos\n[spectrum]\nn_max = 2\nepsilon = -1\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "spectrum.n_max" in err and "spectrum.epsilon" in err
    assert not (tmp_path / "o").exists()
    assert main(["--config", str(tmp_path / "missing.ini"), "--dry-run"]) == EXIT_CONFIG
    assert main(["--config", cfg, "--threads", "0", "--dry-run"]) == EXIT_CONFIG


def test_unresolved_step_is_a_validation_error(tmp_path, capsys):
    text = SMOKE["evolve-line"].replace("n_frames = 2", "n_frames = 2\ndt = 0.5")
    assert main(["--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "stability bound" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_numerical_abort_exits_3_and_removes_partial_output(tmp_path, monkeypatch, capsys):
    def exploding(cfg, w, threads):
        np.savetxt(w.path("partial.txt"), np.zeros(3))
        raise NumericalError("non-finite wave function at step 17")

    monkeypatch.setitem(experiments.RUNNERS, "dos", exploding)
    out = tmp_path / "o"
    assert main(["--config", write(tmp_path, "[experiment]\nkind = dos\n"), "--out", str(out)]) == EXIT_NUMERICAL
    assert "step 17" in capsys.readouterr().err
    assert not out.exists()
    # a pre-existing directory is kept but left without partial files
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["--config", write(tmp_path, "[experiment]\nkind = dos\n"), "--out", str(out)]) == EXIT_NUMERICAL
    assert sorted(p.name for p in out.iterdir()) == ["keep.txt"]


def test_seed_changes_sampled_output(tmp_path):
    cfg = write(tmp_path, SMOKE["freeze-check"])
    outs = []
    for seed in (1, 2, 1):
        out = tmp_path / f"s{len(outs)}"
        assert main(["--config", cfg, "--out", str(out), "--seed", str(seed)]) == EXIT_OK
        outs.append(json.loads((out / "manifest.json").read_text())["files"])
    assert outs[0] == outs[2]
    assert outs[0] != outs[1]


@pytest.mark.skipif(shutil.which("bohmtraj") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["bohmtraj", "--template", "dos"], capture_output=True, text=True)
    assert res.returncode == 0 and "[spectrum]" in res.stdout
    res = subprocess.run([sys.executable, "-m", "bohmtraj.cli", "--config", str(tmp_path / "x.ini"), "--dry-run"],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_CONFIG


@pytest.mark.parametrize("name", ["evolve-line", "length-spectrum", "bipolar-demo"])
def test_plot_stub_reads_the_run_tables(tmp_path, name):
    out = tmp_path / "out"
    assert main(["--config", write(tmp_path, SMOKE[name]), "--out", str(out)]) == EXIT_OK
    stub = out / "plot.py"
    assert "plot.py" in json.loads((out / "manifest.json").read_text())["files"]
    compile(stub.read_text(), str(stub), "exec")
    pytest.importorskip("matplotlib")
    res = subprocess.run([sys.executable, str(stub), "--save"], capture_output=True, text=True,
                         env={"MPLBACKEND": "Agg", "PATH": ""})
    assert res.returncode == 0, res.stderr
    assert list(out.glob("*.png"))
