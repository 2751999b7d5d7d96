"""End-to-end tests of the command-line pipeline at tiny settings."""

import json

import numpy as np
import pytest

from strokegen.checkpoint import load_checkpoint
from strokegen.cli import main
from strokegen.dataset import load_samples
from strokegen.metrics import pooled_adherence

TINY = {
    "style": {"dim": 32, "layers": 1},
    "text": {"dim": 24, "heads": 1},
    "diffusion": {"steps": 8, "beta_max": 0.4, "dim": 24, "heads": 2,
                  "layers": 2},
    "style_train": {"iters": 30, "batch_size": 4, "eval_interval": 10},
    "diffusion_train": {"iters": 4, "batch_size": 2, "warmup": 0},
}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Shared pipeline artifacts: dataset, style and generation checkpoints."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    data = root / "data.jsonl"
    assert main(["gen-data", "--out", str(data), "--writers", "2",
                 "--per-writer", "5", "--seed", "3"]) == 0
    style = root / "style.ckpt"
    assert main(["pretrain-style", "--data", str(data), "--out", str(style),
                 "--config", str(cfg), "--log", str(root / "pre.jsonl")]) == 0
    gen = root / "gen.ckpt"
    assert main(["train", "--data", str(data), "--style-ckpt", str(style),
                 "--out", str(gen), "--config", str(cfg),
                 "--log", str(root / "train.jsonl")]) == 0
    return {"root": root, "cfg": cfg, "data": data, "style": style, "gen": gen}


# ---------------------------------------------------------------------------
# gen-data

def test_gen_data_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert main(["gen-data", "--out", str(out), "--writers", "3",
                     "--per-writer", "4", "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()
    samples = load_samples(a)
    assert len(samples) == 12
    assert sorted({s.writer_id for s in samples}) == [0, 1, 2]


def test_gen_data_rejects_zero_writers(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "x.jsonl"),
                 "--writers", "0", "--per-writer", "4"]) == 2


def test_gen_data_custom_vocab(tmp_path):
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("FOO\nBAR\n")
    out = tmp_path / "v.jsonl"
    assert main(["gen-data", "--out", str(out), "--writers", "1",
                 "--per-writer", "6", "--vocab", str(vocab)]) == 0
    words = {w for s in load_samples(out) for w in s.text.split(" ")}
    assert words <= {"FOO", "BAR"}


# ---------------------------------------------------------------------------
# pretrain-style / train

def test_pretrain_log_is_sorted_jsonl(work):
    lines = (work["root"] / "pre.jsonl").read_text().strip().split("\n")
    assert lines
    for line in lines:
        record = json.loads(line)
        assert json.dumps(record, sort_keys=True) == line


def test_train_checkpoint_records_config(work):
    ckpt = load_checkpoint(work["gen"])
    assert ckpt.kind == "generation"
    run = ckpt.config["run"]
    assert run["diffusion"]["layers"] == 2
    assert run["diffusion_train"]["iters"] == 4
    assert ckpt.extra["step"] == 4


def test_train_without_style_ckpt_is_usage_error(work, tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["train", "--data", str(work["data"]),
              "--out", str(tmp_path / "g.ckpt")])
    assert err.value.code == 2


def test_config_file_overrides_flags(work, tmp_path):
    # --lr says 0.5, the config file says 1e-3; the file wins
    cfg = tmp_path / "over.json"
    override = dict(TINY)
    override["diffusion_train"] = dict(TINY["diffusion_train"], lr=1e-3)
    cfg.write_text(json.dumps(override))
    out = tmp_path / "over.ckpt"
    assert main(["train", "--data", str(work["data"]),
                 "--style-ckpt", str(work["style"]), "--out", str(out),
                 "--config", str(cfg), "--lr", "0.5"]) == 0
    run = load_checkpoint(out).config["run"]
    assert run["diffusion_train"]["lr"] == 1e-3


def test_train_resume_continues(work, tmp_path):
    cfg = tmp_path / "more.json"
    override = dict(TINY)
    override["diffusion_train"] = dict(TINY["diffusion_train"], iters=6)
    cfg.write_text(json.dumps(override))
    out = tmp_path / "resumed.ckpt"
    assert main(["train", "--data", str(work["data"]),
                 "--resume", str(work["gen"]), "--out", str(out),
                 "--config", str(cfg), "--iters", "6"]) == 0
    # resume keeps the checkpointed run config, so 4 steps stay 4
    assert load_checkpoint(out).extra["step"] == 4


# ---------------------------------------------------------------------------
# sample / render / eval

def style_image_path(work):
    path = work["root"] / "style.png"
    if not path.exists():
        assert main(["render", "--data", str(work["data"]), "--index", "0",
                     "--out", str(path), "--height", "32",
                     "--width", "256"]) == 0
    return path


def test_sample_round_trip(work, tmp_path):
    sample0 = load_samples(work["data"])[0]
    layout_path = tmp_path / "layout.json"
    layout_path.write_text(json.dumps(sample0.layout.as_list()))
    out = tmp_path / "gen_samples.jsonl"
    png = tmp_path / "gen.png"
    assert main(["sample", "--ckpt", str(work["gen"]),
                 "--style-image", str(style_image_path(work)),
                 "--text", sample0.text, "--layout", str(layout_path),
                 "--seed", "5", "--out", str(out), "--render", str(png)]) == 0
    written = load_samples(out)
    assert len(written) == 1
    assert written[0].text == sample0.text
    assert written[0].layout == sample0.layout
    assert np.isfinite(written[0].strokes.offsets).all()
    assert png.exists()


def test_sample_rejects_mismatched_layout(work, tmp_path):
    sample0 = load_samples(work["data"])[0]
    layout_path = tmp_path / "layout.json"
    layout_path.write_text(json.dumps(sample0.layout.as_list()))
    code = main(["sample", "--ckpt", str(work["gen"]),
                 "--style-image", str(style_image_path(work)),
                 "--text", sample0.text + " EXTRAWORD",
                 "--layout", str(layout_path),
                 "--out", str(tmp_path / "x.jsonl")])
    assert code == 2


def test_render_writes_png(work, tmp_path):
    out = tmp_path / "r.png"
    assert main(["render", "--data", str(work["data"]), "--index", "1",
                 "--out", str(out), "--height", "32", "--width", "256"]) == 0
    from strokegen.util import load_image
    img = load_image(out)
    assert (img.height, img.width) == (32, 256)
    assert img.pixels.min() < 1.0


def test_render_index_out_of_range(work, tmp_path):
    assert main(["render", "--data", str(work["data"]), "--index", "999",
                 "--out", str(tmp_path / "r.png")]) == 2


def test_eval_self_comparison(work, tmp_path):
    prefix = str(tmp_path / "report")
    assert main(["eval", "--generated", str(work["data"]),
                 "--reference", str(work["data"]), "--out-prefix", prefix,
                 "--height", "32", "--width", "256"]) == 0
    report = json.loads(open(prefix + ".json").read())
    assert report["psnr"] == 100.0
    assert report["mssim"] == pytest.approx(1.0, abs=1e-9)
    samples = load_samples(work["data"])
    expected = pooled_adherence([(s.strokes, s.layout) for s in samples])
    assert report["layout_adherence"] == pytest.approx(expected, rel=1e-12)
    text = open(prefix + ".txt").read()
    assert "psnr 100.0" in text


def test_eval_length_mismatch(work, tmp_path):
    short = tmp_path / "short.jsonl"
    samples = load_samples(work["data"])
    from strokegen.dataset import save_samples
    save_samples(short, samples[:3])
    assert main(["eval", "--generated", str(short),
                 "--reference", str(work["data"]),
                 "--out-prefix", str(tmp_path / "r")]) == 2


def test_missing_data_file_is_error(tmp_path):
    assert main(["render", "--data", str(tmp_path / "nope.jsonl"),
                 "--out", str(tmp_path / "r.png")]) == 2
