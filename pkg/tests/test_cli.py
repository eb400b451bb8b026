#!/usr/bin/env python3
"""Test the gan-forensics command line"""

import json
import tempfile
from pathlib import Path

from click.testing import CliRunner

from controllers.checkpoint_store import load_checkpoint, load_features
from controllers.file_handler import FileHandler
from core.errors import ForensicsError
from gan_forensics import cli, run

QUICK_TRAIN = ["--scale", "micro", "--epochs", "1", "--batch-size", "4",
               "--batches-per-epoch", "1", "--val-batches", "1", "--pairs", "hv", "--lr", "0.001"]


def _invoke(*args):
    result = CliRunner().invoke(cli, [str(a) for a in args])
    assert result.exit_code == 0, result.output
    return result


def _corpus(root: Path) -> Path:
    """Synthesize and split a tiny two-class corpus; returns the split manifest"""
    _invoke("synth", "--out", root / "corpus", "--size", 16, "--per-class-images", 6)
    split = root / "split.jsonl"
    _invoke("split", "--manifest", root / "corpus" / "manifest.jsonl", "--out", split,
            "--fractions", 0.5, 0.25, 0.25)
    return split


def _trained(root: Path):
    split = _corpus(root)
    model = root / "model.ckpt"
    _invoke("train", "--manifest", split, "--out", model, *QUICK_TRAIN)
    return split, model


def test_exit_codes():
    """Test usage errors exit 2 and runtime failures exit 1"""
    assert run([]) == 2
    assert run(["--no-such-flag"]) == 2
    assert run(["train"]) == 2
    assert run(["--help"]) == 0

    with tempfile.TemporaryDirectory() as tmp:
        garbage = Path(tmp) / "garbage.ckpt"
        garbage.write_bytes(b"not a checkpoint")
        image = Path(tmp) / "x.png"
        image.write_bytes(b"")
        assert run(["detect", "--model", str(garbage), str(image)]) == 1

    print("✓ Exit code test passed")


def test_synth_and_split():
    """Test the corpus commands print their config and write manifests"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        result = _invoke("synth", "--out", root / "c", "--size", 16, "--per-class-images", 4,
                         "--seed", 3)
        assert result.output.startswith("synth config: ")
        records = FileHandler.read_manifest(root / "c" / "manifest.jsonl")
        assert len(records) == 8

        result = _invoke("split", "--manifest", root / "c" / "manifest.jsonl",
                         "--out", root / "s.jsonl", "--fractions", 0.5, 0.25, 0.25)
        assert "train" in result.output
        assert {r.split for r in FileHandler.read_manifest(root / "s.jsonl")} <= {
            "train", "val", "test"}

        result = _invoke("ingest", "--root", root / "c", "--out", root / "ingested.jsonl")
        assert len(FileHandler.read_manifest(root / "ingested.jsonl")) == 8

    print("✓ Corpus command test passed")


def test_extract_and_oracle():
    """Test feature dumps and the separability oracle from the command line"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        split = _corpus(root)
        dump = root / "train.features"
        _invoke("extract", "--manifest", split, "--out", dump, "--split", "train",
                "--pairs", "h", "--patch-size", 8)
        features, records, policy = load_features(dump)
        assert features.shape == (len(records), 256, 256, 3)
        assert policy.patch.size == 8 and policy.patch.stride == 4

        result = _invoke("oracle", "--manifest", split, "--out", root / "oracle.json")
        assert "test accuracy:" in result.output
        assert "train_accuracy" in json.loads((root / "oracle.json").read_text())

    print("✓ Extract and oracle test passed")


def test_train_detect_eval():
    """Test training writes a checkpoint and history, then detect and eval read it"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        split, model = _trained(root)
        ckpt = load_checkpoint(model)
        assert ckpt.is_detection
        assert ckpt.subset.tag == "hv"
        history = model.with_suffix(".history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_acc" and len(history) == 2

        result = _invoke("detect", "--model", model, "--manifest", split, "--split", "test",
                         "--out", root / "detect.json")
        lines = [line for line in result.output.splitlines() if "\t" in line]
        assert all(line.split("\t")[2] in ("real", "gan") for line in lines)
        assert "accuracy: " in result.output
        summary = json.loads((root / "detect.json").read_text())
        assert len(summary["results"]) == len(lines)

        image = FileHandler.read_manifest(split)[0].path
        result = _invoke("detect", "--model", model, image)
        assert "accuracy" not in result.output

        result = CliRunner().invoke(cli, ["attribute", "--model", str(model), image])
        assert result.exit_code == 1
        assert isinstance(result.exception, ForensicsError)

        result = _invoke("eval", "--model", model, "--manifest", split, "--out",
                         root / "report.json")
        assert "equal-prior accuracy: " in result.output
        report = json.loads((root / "report.json").read_text())
        assert sum(map(sum, report["confusion"]["counts"])) == report["evaluated"]

    print("✓ Train/detect/eval test passed")


def test_localize_and_embed():
    """Test heatmap and embedding outputs land where requested"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        split, model = _trained(root)
        image = Path(FileHandler.read_manifest(split)[0].path)

        _invoke("localize", image, "--model", model, "--patch-size", 8, "--stride", 4,
                "--out", root / "heat")
        assert (root / "heat" / f"{image.stem}_heatmap.png").exists()
        assert (root / "heat" / f"{image.stem}_heatmap.cfhm").exists()

        _invoke("embed", "--model", model, "--manifest", split, "--out", root / "emb",
                "--pca-dim", 3, "--perplexity", 2, "--iterations", 30)
        for name in ("embeddings.jsonl", "layout.csv", "tsne.png"):
            assert (root / "emb" / name).exists(), name
        assert len((root / "emb" / "layout.csv").read_text().splitlines()) == 13

    print("✓ Localize and embed test passed")


def test_sweep():
    """Test a two-value JPEG sweep writes a 2x2 matrix"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        split = _corpus(root)
        result = _invoke("sweep", "--manifest", split, "--grid", "jpeg", "--values", "none,90",
                         "--out", root / "sweep.json", *QUICK_TRAIN)
        matrix = json.loads((root / "sweep.json").read_text())
        assert matrix["train_values"] == ["none", "90"]
        assert len(matrix["accuracy"]) == 2 and len(matrix["accuracy"][0]) == 2
        assert "train\\test" in result.output

    print("✓ Sweep test passed")


def test_output_dir_defaults():
    """Test synth, localize and embed write under GANFOR_OUTPUT_DIR when --out is omitted"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        split, model = _trained(root)
        image = Path(FileHandler.read_manifest(split)[0].path)
        runner = CliRunner(env={"GANFOR_OUTPUT_DIR": str(root / "runs")})

        result = runner.invoke(cli, ["synth", "--size", "8", "--per-class-images", "2"])
        assert result.exit_code == 0, result.output
        assert len(FileHandler.read_manifest(root / "runs" / "synth" / "manifest.jsonl")) == 4

        result = runner.invoke(cli, ["localize", str(image), "--model", str(model),
                                     "--patch-size", "8", "--stride", "4"])
        assert result.exit_code == 0, result.output
        assert (root / "runs" / "heatmaps" / f"{image.stem}_heatmap.png").exists()

        result = runner.invoke(cli, ["embed", "--model", str(model), "--manifest", str(split),
                                     "--pca-dim", "3", "--perplexity", "2",
                                     "--iterations", "10"])
        assert result.exit_code == 0, result.output
        assert (root / "runs" / "embeddings" / "layout.csv").exists()

    print("✓ Output directory default test passed")


def test_every_command_accepts_seed():
    """Test ingest and oracle take --seed and echo it with their config"""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        split = _corpus(root)
        result = _invoke("ingest", "--root", root / "corpus", "--out", root / "i.jsonl",
                         "--seed", 7)
        assert '"seed": 7' in result.output.splitlines()[0]
        result = _invoke("oracle", "--manifest", split, "--seed", 7)
        assert '"seed": 7' in result.output.splitlines()[0]

    print("✓ Seed option test passed")


if __name__ == "__main__":
    print("Testing gan_forensics.py...")
    test_exit_codes()
    test_synth_and_split()
    test_extract_and_oracle()
    test_train_detect_eval()
    test_localize_and_embed()
    test_sweep()
    test_output_dir_defaults()
    test_every_command_accepts_seed()
    print("\n✅ All CLI tests passed!")
