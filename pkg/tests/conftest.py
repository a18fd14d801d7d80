from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from loguru import logger


@pytest.fixture
def caplog(caplog: pytest.LogCaptureFixture):
    handler_id = logger.add(
        caplog.handler,
        format='{message}',
        level=0,
        filter=lambda record: record['level'].no >= caplog.handler.level,
        enqueue=False,  # Set to 'True' if your test is spawning child processes.
    )
    yield caplog
    logger.remove(handler_id)


@pytest.fixture
def ap_config_values(tmp_path: Path):
    return {
        'config_dir': tmp_path / '__config__' / 'config',
        'state_dir': tmp_path / '__config__' / 'state',
    }


@pytest.fixture(autouse=True)
def _ap_config_defaults(
    monkeypatch: pytest.MonkeyPatch,
    ap_config_values: dict[str, Path],
):
    monkeypatch.setenv('ADMMPEP_CONFIG_DIR', str(ap_config_values['config_dir']))
    monkeypatch.setenv('ADMMPEP_STATE_DIR', str(ap_config_values['state_dir']))


@pytest.fixture
def ap_rng():
    return np.random.default_rng(20240521)
