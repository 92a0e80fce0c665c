import numpy as np
import pytest

from locbench.data_io import load_dataset
from locbench.synth import DescriptorModel, SceneConfig, emit_images, generate_scene, write_dataset


@pytest.fixture(scope="session")
def small_scene():
    """16 database images on a grid, 5 queries, one planted missing query."""
    return generate_scene(
        SceneConfig(layout="grid", n_db=16, n_query=5, n_points=300, seed=3, n_missing=1)
    )


@pytest.fixture(scope="session")
def small_dataset(small_scene, tmp_path_factory):
    """The small scene written to disk (two features, images) and reloaded."""
    root = tmp_path_factory.mktemp("ds") / "small"
    write_dataset(
        small_scene,
        root,
        descriptor_models={
            "pose_oracle": DescriptorModel(),
            "pose_noisy": DescriptorModel(mode="pose_plus_noise", sigma=0.05, dimension=16),
        },
    )
    emit_images(small_scene, root)
    return load_dataset(root)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
