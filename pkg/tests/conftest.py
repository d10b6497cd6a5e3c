from pathlib import Path

import pytest

MINI_DIR = Path(__file__).parent / "data" / "mini"


@pytest.fixture(scope="session")
def mini_dir() -> Path:
    return MINI_DIR


@pytest.fixture()
def mini_config(tmp_path):
    """Replay config for the bundled mini corpus with a fresh workdir."""
    from prodchoice.config import load_config

    def make(workdir=None, **extra):
        overrides = {"paths": {"workdir": str(workdir or tmp_path / "work")}}
        for key, value in extra.items():
            overrides[key] = value
        return load_config(MINI_DIR / "config.replay.json", overrides=overrides)

    return make
