import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from buddy.motion_io import synth_demo
from buddy.mvae import MvaeConfig, train_mvae, transitions_from_trajectory
from buddy.skeleton import load_skeleton


@pytest.fixture(scope="session")
def humanoid():
    return load_skeleton("humanoid22")


@pytest.fixture(scope="session")
def quadarm():
    return load_skeleton("quadarm")


@pytest.fixture(scope="session")
def wheelarm():
    return load_skeleton("wheelarm")


@pytest.fixture(scope="session")
def handshake_demo():
    return synth_demo("handshake", seed=7, duration_s=10.0)


@pytest.fixture(scope="session")
def trained_mvae(handshake_demo, humanoid):
    """Small but genuinely trained motion decoder shared across tests."""
    clips = transitions_from_trajectory(handshake_demo, humanoid)
    model, history = train_mvae(
        clips, handshake_demo.fps,
        MvaeConfig(epochs=16, hidden=(128, 128)), seed=0,
    )
    model.train_history = history
    return model
