import json

import numpy as np
import pytest
import yaml
from PIL import Image

from rcae import container
from rcae.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from rcae.cli import main
from rcae.config import EXAMPLE_CONFIG, RunConfig, preset
from rcae.data import WhitenConfig, Whitener, synth_dataset
from rcae.errors import CheckpointError, ConfigError
from rcae.model import DecoderFilters, ModelDims

SMALL = ["--set", "model.d=16", "--set", "model.w=4", "--set", "model.K=4",
         "--set", "data.n=12", "--set", "solver.cycles=3"]


@pytest.fixture
def trained(tmp_path):
    ckpt = tmp_path / "m.rcae"
    assert main(["train", *SMALL, "--threads", "1", "--out", str(ckpt)]) == 0
    return ckpt


# --- config -----------------------------------------------------------------

def test_defaults_round_trip(tmp_path):
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    cfg.dump(tmp_path / "c.yaml")
    assert RunConfig.load(tmp_path / "c.yaml") == cfg


def test_example_config_matches_defaults():
    assert RunConfig.from_dict(yaml.safe_load(EXAMPLE_CONFIG)) == RunConfig()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": {"depth": 3}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"extras": {}})
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["model.depth=3"])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["model"])


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["model.w=100"])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["solver.mode=fast"])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["whiten.reg=0"])


def test_value_types_checked():
    assert RunConfig().with_overrides(["model.sigma_a=1e-3"]).model.sigma_a == 1e-3
    assert RunConfig().with_overrides(["solver.lam=2"]).solver.lam == 2.0
    for bad in ("model.K=2.5", "model.K=true", "model.activation=3", "solver.lam=abc"):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides([bad])


def test_overrides_parse_scalars():
    cfg = RunConfig().with_overrides(["solver.lam=2.5", "data.path=/tmp/x", "sweep.grid=[1, 2]"])
    assert cfg.solver.lam == 2.5 and cfg.data.path == "/tmp/x" and cfg.sweep.grid == [1, 2]


def test_presets():
    p = preset("paper")
    assert (p.model.d, p.model.C, p.model.K) == (244, 1, 300)
    assert (p.model.sigma_a, p.model.sigma_b) == (0.1, 0.01)
    assert (p.solver.lam, p.solver.cycles, p.solver.mode) == (16.5, 1, "literal")
    d = preset("desk")
    assert (d.model.d, d.model.K, d.model.w, d.solver.mode) == (64, 32, 8, "exact")
    with pytest.raises(ConfigError):
        preset("huge")


def test_threads_override():
    assert RunConfig().solver_config(3).workers == 3
    assert RunConfig().solver_config().workers >= 1


# --- container and checkpoint -----------------------------------------------

def test_container_round_trip(tmp_path):
    arrays = {"c": np.array([[1 + 2j, -0.0 - 0.0j]]), "f": np.arange(3.0), "i": np.arange(4)}
    container.save(tmp_path / "x.bin", "thing", {"a": 1}, arrays)
    meta, back = container.load(tmp_path / "x.bin", "thing")
    assert meta == {"a": 1}
    for k, v in arrays.items():
        assert back[k].tobytes() == v.astype(back[k].dtype).tobytes()
    with pytest.raises(CheckpointError):
        container.load(tmp_path / "x.bin", "checkpoint")


def test_container_rejects_garbage(tmp_path):
    (tmp_path / "g.bin").write_bytes(b"hello world, not a container")
    with pytest.raises(CheckpointError):
        container.load(tmp_path / "g.bin")
    container.save(tmp_path / "t.bin", "k", {}, {"a": np.ones(100)})
    (tmp_path / "t.bin").write_bytes((tmp_path / "t.bin").read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        container.load(tmp_path / "t.bin")


def test_checkpoint_round_trip_lossless(tmp_path):
    dims = ModelDims(8, 3, 2)
    W = np.fft.fft2(np.random.default_rng(0).standard_normal((2, 8, 8)))
    train = synth_dataset("gaussian-blobs", 3, 8)
    ck = Checkpoint(dims, DecoderFilters(W), 7, 0.2, 0.03, 16.5, "literal", 1, "tanh", "rot180",
                    Whitener.fit(train, WhitenConfig()))
    save_checkpoint(ck, tmp_path / "c.rcae")
    back = load_checkpoint(tmp_path / "c.rcae")
    assert back.decoder.spectral.tobytes() == ck.decoder.spectral.tobytes()
    assert back.whitener.amplitude.tobytes() == ck.whitener.amplitude.tobytes()
    assert (back.dims, back.seed, back.sigma_a, back.sigma_b, back.lam, back.mode, back.transpose) == \
        (dims, 7, 0.2, 0.03, 16.5, "literal", "rot180")
    assert back.whitener.scale == ck.whitener.scale
    assert np.array_equal(back.encoder().filters, ck.encoder().filters)


# --- commands ---------------------------------------------------------------

def test_train_writes_checkpoint_and_metadata(trained, capsys):
    meta = json.loads(trained.with_name(trained.name + ".meta.json").read_text())
    assert meta["config"]["model"]["K"] == 4
    assert meta["data"]["n_images"] == 12
    assert "rcae_version" in meta
    assert load_checkpoint(trained).dims == ModelDims(16, 4, 4)


def test_train_is_reproducible(tmp_path, trained):
    again = tmp_path / "again.rcae"
    assert main(["train", *SMALL, "--threads", "1", "--out", str(again)]) == 0
    assert again.read_bytes() == trained.read_bytes()


def test_train_from_directory(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(4):
        Image.fromarray(rng.integers(0, 256, (20, 24), dtype=np.uint8), mode="L").save(tmp_path / f"{i}.pgm")
    out = tmp_path / "d.rcae"
    assert main(["train", *SMALL, "--data", str(tmp_path), "--out", str(out)]) == 0


def test_train_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "x.rcae")
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", out]) == 3
    assert main(["train", "--set", "model.nope=1", "--out", out]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [1, 2\n")
    assert main(["train", "--config", str(bad), "--out", out]) == 2
    assert main(["train", "--set", "model.sigma_a=abc", "--out", out]) == 2


def test_solve_errors_exit_4(tmp_path, monkeypatch):
    from rcae import pipeline
    from rcae.errors import EmptyStats

    def boom(*args, **kwargs):
        raise EmptyStats("nothing absorbed")

    monkeypatch.setattr(pipeline, "train", boom)
    assert main(["train", *SMALL, "--out", str(tmp_path / "x.rcae")]) == 4


def test_reconstruct(tmp_path, trained, capsys):
    x = np.random.default_rng(0).standard_normal((16, 16))
    np.save(tmp_path / "x.npy", x)
    out = tmp_path / "r.pgm"
    assert main(["reconstruct", str(trained), str(tmp_path / "x.npy"), "--out", str(out),
                 "--save-npy", str(tmp_path / "r.npy")]) == 0
    assert "reconstruction error" in capsys.readouterr().out
    assert np.asarray(Image.open(out)).shape == (16, 34)
    assert np.all(np.isfinite(np.load(tmp_path / "r.npy")))


def test_reconstruct_with_zero_filters(tmp_path):
    dims = ModelDims(8, 3, 2)
    save_checkpoint(Checkpoint(dims, DecoderFilters.zeros(dims)), tmp_path / "z.rcae")
    np.save(tmp_path / "x.npy", np.random.default_rng(1).standard_normal((8, 8)))
    assert main(["reconstruct", str(tmp_path / "z.rcae"), str(tmp_path / "x.npy"),
                 "--out", str(tmp_path / "r.pgm"), "--save-npy", str(tmp_path / "r.npy")]) == 0
    assert np.all(np.load(tmp_path / "r.npy") == 0)


def test_reconstruct_errors(tmp_path, trained):
    Image.fromarray(np.zeros((20, 20), np.uint8), mode="L").save(tmp_path / "big.pgm")
    out = str(tmp_path / "r.pgm")
    assert main(["reconstruct", str(trained), str(tmp_path / "big.pgm"), "--out", out]) == 3
    assert main(["reconstruct", str(trained), str(tmp_path / "big.pgm"), "--out", out, "--resize"]) == 0
    (tmp_path / "junk.rcae").write_bytes(b"junk")
    assert main(["reconstruct", str(tmp_path / "junk.rcae"), str(tmp_path / "big.pgm"), "--out", out]) == 3


def test_encode(tmp_path, trained):
    np.save(tmp_path / "x.npy", np.zeros((16, 16)))
    assert main(["encode", str(trained), str(tmp_path / "x.npy"), "--out", str(tmp_path / "f.npy")]) == 0
    assert np.load(tmp_path / "f.npy").shape == (4, 13, 13)
    assert main(["encode", str(trained), str(tmp_path / "x.npy"), "--out", str(tmp_path / "f.pgm"),
                 "--transpose-mode", "rot180"]) == 0
    assert (tmp_path / "f.pgm").exists()


def test_encode_symmetric_filters_agree(tmp_path):
    dims = ModelDims(8, 3, 2)
    base = np.random.default_rng(2).standard_normal((2, 3, 3))
    sym = base + np.swapaxes(base, 1, 2)
    sym = sym + sym[:, ::-1, ::-1]
    save_checkpoint(Checkpoint(dims, DecoderFilters.from_spatial(sym, dims)), tmp_path / "s.rcae")
    np.save(tmp_path / "x.npy", np.random.default_rng(3).standard_normal((8, 8)))
    outs = []
    for mode in ("transpose", "rot180"):
        target = tmp_path / f"{mode}.npy"
        assert main(["encode", str(tmp_path / "s.rcae"), str(tmp_path / "x.npy"), "--out", str(target),
                     "--transpose-mode", mode]) == 0
        outs.append(np.load(target))
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-12)


def test_export_filters(tmp_path, trained, capsys):
    out = tmp_path / "f.pgm"
    assert main(["export-filters", str(trained), "--out", str(out), "--crop", "w", "--cols", "2"]) == 0
    assert np.asarray(Image.open(out)).shape == (9, 9)
    assert len((tmp_path / "f.norms.csv").read_text().splitlines()) == 5


def test_example_config_command(capsys):
    assert main(["example-config"]) == 0
    assert capsys.readouterr().out == EXAMPLE_CONFIG


def test_sweep_timing(tmp_path, capsys):
    args = ["sweep", "timing", "--set", "model.d=12", "--set", "model.w=3", "--set", "sweep.grid=[2, 4]",
            "--set", "sweep.repeats=3", "--set", "sweep.n_images=2", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    assert "r^2" in capsys.readouterr().out
    assert (tmp_path / "timing_num_filters.csv").exists()
    assert (tmp_path / "timing.meta.json").exists()


def test_sweep_lambda_default_grid(tmp_path, capsys):
    args = ["sweep", "lambda", "--set", "model.d=12", "--set", "model.w=3", "--set", "model.K=3",
            "--set", "sweep.n_train=6", "--set", "sweep.n_eval=3", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    assert len((tmp_path / "lambda_sweep.csv").read_text().splitlines()) == 26


def test_sweep_convergence(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RCAE_OUT_DIR", str(tmp_path))
    args = ["sweep", "convergence", "--set", "model.d=12", "--set", "model.w=3", "--set", "model.K=3",
            "--set", "sweep.n_train=8", "--set", "sweep.checkpoint_every=2", "--set", "solver.cycles=3"]
    assert main(args) == 0
    assert "settle ratio" in capsys.readouterr().out
    assert len((tmp_path / "convergence.csv").read_text().splitlines()) == 5
