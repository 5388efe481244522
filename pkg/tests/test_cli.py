import csv
import json

import pytest

from services import sgio
from views.main_view import main_view

SMALL_CONFIG = "# modelo reducido\nd=8\nheads=2\nchannels=4\ndecoder_channels=4\ndense_layers=2\nt_iters=1\n"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


def fuse_args(root, out, *extra):
    return [
        "fuse",
        "--ir", str(root / "ir" / "pair0.pgm"),
        "--vi", str(root / "vi" / "pair0.pgm"),
        "--annotation", str(root / "pair0_annotation.json"),
        "--regions", str(root / "pair0_regions.json"),
        "--out", str(out),
        *extra,
    ]


def last_error(capsys) -> dict:
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


# --- Superficie y errores ---

def test_help_exits_cleanly(capsys):
    assert main_view(["--help"]) == 0
    assert "parse-text" in capsys.readouterr().out


def test_missing_required_flag_is_usage_error(manifest, tmp_path):
    assert main_view(["fuse", "--vi", "x.pgm", "--annotation", "a", "--regions", "r", "--out", "o"]) == 2


def test_missing_input_file(manifest, tmp_path, capsys):
    args = fuse_args(tmp_path, tmp_path / "out.pgm")
    args[2] = str(tmp_path / "ir" / "missing.pgm")
    assert main_view(args) == 2
    assert last_error(capsys)["error"] == "MissingFileError"


def test_invalid_config_file(manifest, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown=1\n", encoding="utf-8")
    assert main_view(["--config", str(bad), *fuse_args(tmp_path, tmp_path / "out.pgm")]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


def test_invalid_override_is_config_error(manifest, tmp_path, capsys):
    assert main_view(["train", "--data", str(manifest), "--out", str(tmp_path / "m.msgc"), "--epochs", "0"]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


def test_corrupt_image_fails(manifest, tmp_path, capsys):
    (tmp_path / "ir" / "pair0.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    assert main_view(fuse_args(tmp_path, tmp_path / "out.pgm")) == 1
    assert last_error(capsys)["error"] == "ParseError"


def test_malformed_manifest_fails(manifest, tmp_path, capsys):
    manifest.write_text(json.dumps([{"ir": 5}]), encoding="utf-8")
    assert main_view(["train", "--data", str(manifest), "--out", str(tmp_path / "m.msgc")]) == 1
    assert last_error(capsys)["error"] == "SgioValidationError"


def test_truncated_checkpoint_fails(manifest, tmp_path, capsys):
    (tmp_path / "m.msgc").write_bytes(b"MSGC\x01")
    assert main_view(fuse_args(tmp_path, tmp_path / "out.pgm", "--model", str(tmp_path / "m.msgc"))) == 1
    assert last_error(capsys)["error"] == "ParseError"


# --- Subcomandos ---

def test_parse_text_sentence(capsys):
    assert main_view(["parse-text", "--sentence", "red car near tree"]) == 0
    document = json.loads(capsys.readouterr().out)
    assert [o["phrase"] for o in document["objects"]] == ["car", "tree"]
    assert document["relations"] == [[0, "near", 1]]


def test_parse_text_annotation_with_dot(manifest, tmp_path):
    out, dot = tmp_path / "graphs.json", tmp_path / "graphs.dot"
    argv = ["parse-text", "--annotation", str(tmp_path / "pair0_annotation.json"), "--out", str(out), "--dot", str(dot)]
    assert main_view(argv) == 0
    tiers = json.loads(out.read_text(encoding="utf-8"))["tiers"]
    assert len(tiers) == 5
    assert dot.read_text(encoding="utf-8").count("digraph") == 5


def test_build_vsg(manifest, tmp_path):
    out, relations = tmp_path / "subgraphs.msgt", tmp_path / "relations.json"
    argv = ["build-vsg", "--regions", str(tmp_path / "pair0_regions.json"), "--out", str(out), "--relations", str(relations)]
    assert main_view(argv) == 0
    assert sgio.load_tensor(out).shape == (3, 16)
    dump = json.loads(relations.read_text(encoding="utf-8"))
    assert len(dump["relations"]) == 6
    assert dump["selected"] == [0, 2, 1]


def test_fuse_then_eval(manifest, tmp_path):
    fused_dir = tmp_path / "fused"
    fused_dir.mkdir()
    embedding = tmp_path / "E.msgt"
    assert main_view(fuse_args(tmp_path, fused_dir / "pair0.pgm", "--dump-embedding", str(embedding))) == 0
    image = sgio.load_image(fused_dir / "pair0.pgm")
    assert (image.height, image.width) == (16, 16)
    assert sgio.load_tensor(embedding).shape == (1, 16)

    table = tmp_path / "metrics.csv"
    argv = ["eval", "--fused", str(fused_dir), "--ir", str(tmp_path / "ir"), "--vi", str(tmp_path / "vi"), "--out", str(table)]
    assert main_view(argv) == 0
    rows = read_csv(table)
    assert [row["image"] for row in rows] == ["pair0", "mean"]
    assert list(rows[0]) == ["image", "qabf", "ssim", "ag", "sf", "mi", "psnr"]


def test_rank_published(capsys):
    assert main_view(["rank", "--published", "llvip"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 8
    assert set(rows[0]) == {"method", "mrank", "published_mrank"}
    ours = next(row for row in rows if row["method"] == "Ours")
    assert float(ours["mrank"]) == pytest.approx(19 / 7, abs=1e-6)


def test_rank_table_file(tmp_path):
    table, out = tmp_path / "table.csv", tmp_path / "ranks.csv"
    table.write_text("method,qabf,psnr\nA,0.5,20\nB,0.6,30\n", encoding="utf-8")
    assert main_view(["rank", "--table", str(table), "--lower-better", "psnr", "--out", str(out)]) == 0
    assert {row["method"]: float(row["mrank"]) for row in read_csv(out)} == {"A": 1.5, "B": 1.5}


def test_train_then_fuse_with_checkpoint(manifest, tmp_path, config_file):
    checkpoint, log = tmp_path / "model.msgc", tmp_path / "loss.csv"
    argv = ["--config", str(config_file), "train", "--data", str(manifest), "--out", str(checkpoint),
            "--log", str(log), "--epochs", "2", "--max-steps", "2", "--lr", "0.001"]
    assert main_view(argv) == 0
    assert checkpoint.is_file()
    rows = read_csv(log)
    assert [row["epoch"] for row in rows] == ["1", "2"]
    assert float(rows[-1]["total"]) > 0.0

    out = tmp_path / "fused.pgm"
    assert main_view(["--config", str(config_file), *fuse_args(tmp_path, out, "--model", str(checkpoint))]) == 0
    assert out.is_file()


def test_ablate_loss_suite(manifest, tmp_path, config_file):
    out = tmp_path / "ablation.csv"
    argv = ["ablate", "--config", str(config_file), "--data", str(manifest), "--suite", "loss",
            "--out", str(out), "--epochs", "1", "--max-steps", "1"]
    assert main_view(argv) == 0
    rows = read_csv(out)
    assert [row["config"] for row in rows] == ["L_fg", "L_bg", "L_fg+L_bg", "L_fg+L_bg+L_ctr"]


def test_ablate_disable_flags(manifest, tmp_path, config_file):
    out = tmp_path / "ablation.csv"
    argv = ["ablate", "--config", str(config_file), "--data", str(manifest), "--disable", "msgha",
            "--out", str(out), "--epochs", "1", "--max-steps", "1"]
    assert main_view(argv) == 0
    assert [row["config"] for row in read_csv(out)] == ["full", "-msgha"]


def test_ablate_conflicting_disable_is_config_error(manifest, tmp_path, capsys):
    argv = ["ablate", "--data", str(manifest), "--disable", "tsg", "vsg", "--out", str(tmp_path / "a.csv")]
    assert main_view(argv) == 2
    assert last_error(capsys)["error"] == "ConfigError"
    assert not (tmp_path / "a.csv").exists()


def test_ablate_disable_and_suite_are_exclusive(manifest, tmp_path):
    argv = ["ablate", "--data", str(manifest), "--suite", "loss", "--disable", "tsg", "--out", str(tmp_path / "a.csv")]
    assert main_view(argv) == 2
