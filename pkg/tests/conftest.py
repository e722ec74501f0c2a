"""Shared fixtures: 64-bit default precision and the cached overfit run."""

import numpy as np
import pytest

from tamperloc import precision
from tamperloc.data import AugmentSpec, SynthSpec, synthesize_dataset
from tamperloc.model import ModelConfig
from tamperloc.train import TrainConfig, train

# one line per shipping criterion, echoed after the run so the gate trail
# survives output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance gate")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def f64_default():
    """Property tests run at 64-bit; each test starts from a clean mode."""
    prev = precision.get_precision()
    precision.set_precision("f64")
    yield
    precision.set_precision(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def tiny_model_config(**overrides) -> ModelConfig:
    """Smallest config that exercises every architectural piece."""
    base = dict(
        embed_dims=(4, 8, 16, 32),
        depths=(1, 1, 1, 1),
        num_heads=(1, 2, 4, 8),
        sr_ratios=(4, 2, 1, 1),
        mlp_ratio=2,
        decoder_width=8,
        fe_spatial_reduction=4,
        fe_channel_reduction=4,
        fe_dilation=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


def overfit_train_config(seed: int = 3) -> TrainConfig:
    return TrainConfig(
        epochs=320,
        batch_size=4,
        lr_max=5e-3,
        lr_min=5e-4,
        image_size=64,
        seed=seed,
        checkpoint_interval=320,
        eval_interval=80,
        precision_mode="f32",
        model=ModelConfig(
            embed_dims=(8, 16, 32, 64),
            depths=(1, 1, 1, 1),
            num_heads=(1, 2, 4, 8),
            sr_ratios=(8, 4, 2, 1),
            mlp_ratio=2,
            decoder_width=32,
        ),
        augment=AugmentSpec.identity(),
    )


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory):
    """One 4-image, 320-step training run shared by the acceptance tests."""
    root = tmp_path_factory.mktemp("overfit")
    data_dir = root / "data"
    synthesize_dataset(SynthSpec(image_size=64, n_images=4, rng_seed=7), data_dir)
    cfg = overfit_train_config()
    model, history, ckpt = train(cfg, data_dir, root / "run")
    precision.set_precision("f64")
    return {
        "cfg": cfg,
        "model": model,
        "history": history,
        "ckpt": ckpt,
        "data_dir": data_dir,
        "out_dir": root / "run",
    }
