import csv

import numpy as np
import pytest
import torch
from PIL import Image

from conftest import TINY_INI
from swinstyleformer.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, diff_heatmap, main, parse_layers
from swinstyleformer.data import make_faces
from swinstyleformer.io import read_image, write_image


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.ini").write_text(TINY_INI)
    assert main(["train", "--config", str(d / "tiny.ini"), "--out", str(d / "run")]) == EXIT_OK
    faces = make_faces(3, seed=11)
    for i, name in enumerate("abc"):
        write_image(str(d / f"{name}.png"), faces[i:i + 1])
    return d


def ck(d):
    return str(d / "run" / "final.pt")


def invert(d, img="a.png", out="inv.png", codes="codes.txt"):
    return main(["invert", "--checkpoint", ck(d), "--in", str(d / img), "--out", str(d / out),
                 "--codes-out", str(d / codes)])


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_train_writes_log(run):
    with open(run / "run" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["step"] for r in rows] == ["0", "1"]
    assert (run / "run" / "generator.pt").exists()


def test_train_seeded_log_is_reproducible(run, tmp_path):
    (tmp_path / "t.ini").write_text(TINY_INI)
    assert main(["train", "--config", str(tmp_path / "t.ini"), "--out", str(tmp_path / "r")]) == 0
    assert read_bytes(tmp_path / "r" / "metrics.csv") == read_bytes(run / "run" / "metrics.csv")


def test_train_unknown_key(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[train]\nwhatever = 1\n")
    assert main(["train", "--config", str(tmp_path / "bad.ini")]) == EXIT_USAGE
    assert "train.whatever" in capsys.readouterr().err


def test_train_nan_exits_runtime(run, tmp_path, monkeypatch):
    from swinstyleformer.losses import NonFiniteLossError
    from swinstyleformer.trainer import Trainer

    def boom(self, x):
        raise NonFiniteLossError("pixel", float("nan"))

    monkeypatch.setattr(Trainer, "train_step", boom)
    (tmp_path / "t.ini").write_text(TINY_INI)
    assert main(["train", "--config", str(tmp_path / "t.ini")]) == EXIT_RUNTIME


def test_invert_is_byte_deterministic(run):
    assert invert(run, out="i1.png", codes="c1.txt") == EXIT_OK
    assert invert(run, out="i2.png", codes="c2.txt") == EXIT_OK
    assert read_bytes(run / "i1.png") == read_bytes(run / "i2.png")
    assert read_bytes(run / "c1.txt") == read_bytes(run / "c2.txt")
    codes = np.loadtxt(run / "c1.txt")
    assert codes.shape == (10, 32)


def test_synthesize_from_saved_codes(run):
    invert(run)
    assert main(["synthesize", "--checkpoint", ck(run), "--codes", str(run / "codes.txt"),
                 "--out", str(run / "syn.png")]) == EXIT_OK
    assert read_bytes(run / "syn.png") == read_bytes(run / "inv.png")


def edit(d, direction, alpha, out, codes="edit_codes.txt"):
    return main(["edit", "--checkpoint", ck(d), "--in", str(d / "a.png"), "--direction", str(direction),
                 "--alpha", str(alpha), "--out", str(d / out), "--codes-out", str(d / codes)])


def test_edit(run):
    invert(run)
    rng = np.random.default_rng(0)
    direction = rng.normal(size=32)
    np.savetxt(run / "dir.txt", direction)
    assert edit(run, run / "dir.txt", 0, "e0.png") == EXIT_OK
    assert read_bytes(run / "e0.png") == read_bytes(run / "inv.png")
    assert edit(run, run / "dir.txt", 3, "ep.png", "cp.txt") == EXIT_OK
    assert edit(run, run / "dir.txt", -3, "em.png") == EXIT_OK
    assert read_bytes(run / "ep.png") != read_bytes(run / "em.png")
    delta = np.loadtxt(run / "cp.txt") - np.loadtxt(run / "codes.txt")
    expect = 3 * direction.astype(np.float32)[None].repeat(10, 0)
    assert np.abs(delta - expect).max() < 1e-5


def test_edit_per_row_direction(run):
    invert(run)
    rows = np.zeros((10, 32))
    rows[4] = 1.0
    np.savetxt(run / "rows.txt", rows)
    assert edit(run, run / "rows.txt", 2, "er.png", "cr.txt") == EXIT_OK
    delta = np.loadtxt(run / "cr.txt") - np.loadtxt(run / "codes.txt")
    assert np.abs(delta[4] - 2).max() < 1e-5
    assert np.abs(np.delete(delta, 4, axis=0)).max() == 0


def test_edit_bad_direction(run):
    np.savetxt(run / "short.txt", np.ones(31))
    assert edit(run, run / "short.txt", 1, "x.png") == EXIT_RUNTIME
    (run / "nan.txt").write_text("nan\n" * 32)
    assert edit(run, run / "nan.txt", 1, "x.png") == EXIT_RUNTIME


def mix(d, layers, out):
    return main(["mix", "--checkpoint", ck(d), "--in", str(d / "a.png"), str(d / "b.png"),
                 "--layers", layers, "--out", str(d / out)])


def test_mix(run):
    invert(run, "a.png", "ia.png", "ca.txt")
    invert(run, "b.png", "ib.png", "cb.txt")
    assert mix(run, "", "m_none.png") == EXIT_OK
    assert read_bytes(run / "m_none.png") == read_bytes(run / "ia.png")
    assert mix(run, "0-9", "m_all.png") == EXIT_OK
    assert read_bytes(run / "m_all.png") == read_bytes(run / "ib.png")
    assert mix(run, "6-9", "m_fine.png") == EXIT_OK
    assert mix(run, "10", "bad.png") == EXIT_USAGE


def test_parse_layers():
    assert parse_layers("8-13", 14) == [8, 9, 10, 11, 12, 13]
    assert parse_layers("1,3, 2", 4) == [1, 2, 3]
    assert parse_layers("", 4) == []


def test_super_resolve(run):
    small = make_faces(1, seed=3, size=16)
    write_image(str(run / "small.png"), small)
    assert main(["super-resolve", "--checkpoint", ck(run), "--in", str(run / "small.png"),
                 "--out", str(run / "sr.png")]) == EXIT_OK
    assert Image.open(run / "sr.png").size == (64, 64)
    assert main(["super-resolve", "--checkpoint", ck(run), "--in", str(run / "a.png"),
                 "--factor", "8", "--out", str(run / "sr8.png")]) == EXIT_OK


def test_heatmaps(run):
    for cmd in ("diff-heatmap", "attention-heatmap"):
        out = run / f"{cmd}.png"
        assert main([cmd, "--checkpoint", ck(run), "--in", str(run / "a.png"), "--out", str(out)]) == 0
        im = Image.open(out)
        assert im.mode == "L" and im.size == (64, 64)


def test_diff_heatmap_function():
    x = torch.rand(1, 3, 8, 8) * 2 - 1
    assert (diff_heatmap(x, x) == 0).all()
    y = x + 0.1 * torch.randn(1, 3, 8, 8)
    h = diff_heatmap(x, y)
    assert h.min() == 0 and h.max() == 1
    best, where = -1.0, None
    for r in range(8):
        for c in range(8):
            d = sum(abs(float(x[0, ch, r, c] - y[0, ch, r, c])) for ch in range(3))
            if d > best:
                best, where = d, (r, c)
    assert np.unravel_index(h.argmax(), h.shape) == where


def test_metrics_command(run, capsys):
    assert main(["metrics", "--in", str(run / "a.png"), str(run / "a.png")]) == EXIT_OK
    out = dict(line.split("\t") for line in capsys.readouterr().out.strip().splitlines())
    assert float(out["mse"]) == 0 and out["psnr"] == "inf"
    assert main(["metrics", "--in", str(run / "a.png")]) == EXIT_USAGE


def test_runtime_errors(run, tmp_path, capsys):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"\x00" * 64)
    assert main(["invert", "--checkpoint", str(bad), "--in", str(run / "a.png"),
                 "--out", str(tmp_path / "x.png")]) == EXIT_RUNTIME
    assert "version" in capsys.readouterr().err
    write_image(str(tmp_path / "big.png"), make_faces(1, seed=0, size=32))
    assert main(["invert", "--checkpoint", ck(run), "--in", str(tmp_path / "big.png"),
                 "--out", str(tmp_path / "x.png")]) == EXIT_RUNTIME


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["invert", "--in", "a.png"]) == EXIT_USAGE
    assert main(["edit", "--checkpoint", "c", "--in", "a", "--out", "o", "--direction", "d",
                 "--alpha", "lots"]) == EXIT_USAGE


def test_png_round_trip(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, (1, 3, 16, 16)).astype(np.float64)
    img = torch.from_numpy(arr / 127.5 - 1)
    write_image(str(tmp_path / "p.png"), img)
    back = np.asarray(Image.open(tmp_path / "p.png")).transpose(2, 0, 1)
    assert np.array_equal(back, arr[0].astype(np.uint8))
    assert torch.allclose(read_image(str(tmp_path / "p.png")), img.float(), atol=1e-6)
