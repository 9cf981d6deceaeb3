from __future__ import annotations

import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from chainworld_finetune import TrainSpec, load_pairs, train
from chainworld_finetune.serve import create_app

FIXTURES = Path(__file__).parent / "fixtures"
PAIRS_PATH = FIXTURES / "toy_pairs.jsonl"


@pytest.fixture(scope="session")
def toy_pairs():
    return load_pairs(PAIRS_PATH)


@pytest.fixture(scope="session")
def overfit_dir(tmp_path_factory):
    """One tiny model memorizing the 20-pair toy set, shared by the session."""
    out = tmp_path_factory.mktemp("artifact") / "overfit"
    train(
        TrainSpec(
            pairs_path=str(PAIRS_PATH),
            direction="precondition",
            output_dir=str(out),
            base_model="tiny",
            learning_rate=3e-4,
            epochs=200,
            batch_size=4,
            holdout_fraction=0.0,
            seed=0,
        )
    )
    return str(out)


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


class RunningServer:
    def __init__(self, app, port: int):
        self.port = port
        self.base_url = f"http://127.0.0.1:{port}"
        self._server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + 15
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start in time")
            time.sleep(0.05)

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture(scope="session")
def served(overfit_dir):
    server = RunningServer(create_app(overfit_dir), free_port())
    yield server
    server.stop()
