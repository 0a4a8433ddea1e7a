import pytest

from tacpeg.dataset import DataConfig, generate_dataset, split_dataset


@pytest.fixture(scope="session")
def tiny_ds(tmp_path_factory):
    """A small on-disk dataset shared by read-only tests."""
    out = tmp_path_factory.mktemp("tiny_ds")
    cfg = DataConfig(n_samples=10, shapes=("square",), clearance_mm=2.0, seed=123)
    manifest = generate_dataset(cfg, out)
    manifest = split_dataset(manifest, 0.6, seed=123)
    manifest.save(out / "manifest.json")
    return out, manifest
