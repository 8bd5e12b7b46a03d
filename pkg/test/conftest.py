import pytest

from egocapture4d.synth.scenario import ScenarioConfig, generate


@pytest.fixture(scope="module")
def small_config() -> ScenarioConfig:
    return ScenarioConfig(frames=6, truncation=0.34, scene_spacing=0.05, seed=3)


@pytest.fixture(scope="module")
def small_bundle(small_config):
    return generate(small_config)
