import numpy as np
import pytest
import torch
from PIL import Image

from bevfusion import FusionArchSpec, TrainConfig, infer, load_checkpoint, train
from bevfusion.data import crop_sample, load_bundles

TINY = FusionArchSpec(base_width=4)


def test_untrained_checkpoint_still_runs_the_pipeline(dataset, tmp_path):
    ck = tmp_path / "init.pt"
    history = train(dataset["completed"], ck, TrainConfig(steps=0), TINY)
    assert history == []
    model, payload = load_checkpoint(ck)
    assert payload["arch"]["base_width"] == 4
    assert payload["train_config"]["steps"] == 0
    written = infer(ck, dataset["completed"], tmp_path / "pred")
    assert len(written) == 8
    for name in written:
        pred = np.asarray(Image.open(tmp_path / "pred" / f"{name}_label.png"))
        assert pred.shape == (128, 128)
        assert pred.max() < 13  # valid class ids, never the nodata value


def test_training_is_deterministic(dataset, tmp_path):
    kwargs = dict(config=TrainConfig(steps=8, seed=3), arch=TINY)
    h1 = train(dataset["completed"], tmp_path / "a.pt", **kwargs)
    h2 = train(dataset["completed"], tmp_path / "b.pt", **kwargs)
    assert h1 == h2
    a, _ = load_checkpoint(tmp_path / "a.pt")
    b, _ = load_checkpoint(tmp_path / "b.pt")
    for pa, pb in zip(a.state_dict().values(), b.state_dict().values()):
        assert torch.equal(pa, pb)


def test_inference_is_deterministic(dataset, tmp_path):
    ck = tmp_path / "ck.pt"
    train(dataset["completed"], ck, TrainConfig(steps=4), TINY)
    infer(ck, dataset["completed"], tmp_path / "p1")
    infer(ck, dataset["completed"], tmp_path / "p2")
    for png in sorted((tmp_path / "p1").iterdir()):
        assert png.read_bytes() == (tmp_path / "p2" / png.name).read_bytes()


def test_missing_channel_is_reported(dataset, tmp_path):
    import shutil

    broken = tmp_path / "broken"
    shutil.copytree(dataset["completed"], broken)
    victim = next(broken.glob("*_alt.png"))
    victim.unlink()
    with pytest.raises(FileNotFoundError, match="alt raster"):
        load_bundles(broken)


def test_bundle_tensors_are_normalized(dataset):
    samples = load_bundles(dataset["completed"])
    assert len(samples) == 8
    for s in samples:
        assert s.rgb.shape == (3, 128, 128) and s.rgb.max() <= 1.0
        assert s.alt.shape == (1, 128, 128) and 0.0 <= s.alt.min() and s.alt.max() <= 1.0
        assert s.z_range >= 0.0


def test_crop_is_identity_at_native_size(dataset):
    sample = load_bundles(dataset["completed"])[0]
    g = torch.Generator().manual_seed(0)
    assert crop_sample(sample, 128, g) is sample
    with pytest.raises(ValueError, match="smaller than the"):
        crop_sample(sample, 256, g)
    small = crop_sample(sample, 64, g)
    assert small.rgb.shape == (3, 64, 64)
    assert small.mask.shape == (64, 64)


def test_cli_train_and_infer(dataset, tmp_path):
    from bevfusion.cli import main

    ck = tmp_path / "cli.pt"
    rc = main(
        [
            "train",
            "--bundles",
            str(dataset["completed"]),
            "--checkpoint",
            str(ck),
            "--steps",
            "2",
            "--width",
            "4",
            "--weights",
            str(dataset["weights"]),
        ]
    )
    assert rc == 0 and ck.exists()
    out = tmp_path / "pred"
    rc = main(["infer", str(dataset["completed"]), str(out), "--checkpoint", str(ck)])
    assert rc == 0
    assert len(list(out.glob("*_label.png"))) == 8
