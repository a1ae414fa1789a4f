"""Cross-implementation parity: torch reference vs engine on converted weights."""

import numpy as np
import pytest
import torch

from urwconvert.container import read_container, write_container
from urwconvert.mapping import ArchSpec, convert_checkpoint
from urwconvert.reference import random_reference

kintile = pytest.importorskip("kintile")

from kintile.generator import Generator, GeneratorConfig  # noqa: E402
from kintile.normalize import NormMode  # noqa: E402
from kintile.tensor import Tensor  # noqa: E402
from kintile.weights import WeightStore  # noqa: E402

WIDTH, BLOCKS, P = 16, 2, 64


@pytest.fixture(scope="module")
def converted(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("parity")
    model = random_reference(width=WIDTH, n_resblocks=BLOCKS, seed=2024)
    ckpt = tmp / "ref.pth"
    torch.save(model.state_dict(), ckpt)
    out = tmp / "ref.urw"
    result = convert_checkpoint(ckpt, ArchSpec(width=WIDTH, n_resblocks=BLOCKS))
    write_container(out, result.entries)
    cfg = GeneratorConfig(base_width=WIDTH, n_resblocks=BLOCKS, patch_size=P)
    engine = Generator.build(cfg, WeightStore.load(out))
    return model, engine, out


def test_forward_parity_over_patches(converted):
    model, engine, _ = converted
    model.eval()
    worst = 0.0
    rng = np.random.default_rng(31)
    for _ in range(10):
        patch = rng.uniform(-1, 1, (1, 3, P, P)).astype(np.float32)
        with torch.no_grad():
            want = model(torch.from_numpy(patch)).numpy()
        got = engine.forward(Tensor(patch), NormMode.patch_in()).numpy()
        worst = max(worst, float(np.abs(got - want).max()))
    print(f"ACCEPTANCE 11 converter-parity: max|d|={worst:.2e} over 10 patches")
    assert worst < 1e-3


def test_container_roundtrip_byte_identical(converted):
    _, _, out = converted
    reparsed = read_container(out)
    reemitted = out.parent / "reemitted.urw"
    write_container(reemitted, reparsed)
    assert out.read_bytes() == reemitted.read_bytes()


def test_engine_full_pipeline_runs_on_converted_weights(converted):
    from kintile.normalize import build_kernel
    from kintile.pipeline import translate
    from kintile.synthetic import gradient_image

    _, engine, _ = converted
    out, report = translate(gradient_image(2 * P, 2 * P), engine,
                            NormMode.kin(build_kernel("constant", 3)))
    assert out.shape == (3, 2 * P, 2 * P)
    assert np.isfinite(out).all()
