import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conqure.scheduler import DeviceDescriptor, DeviceKind, QueuePolicy
from conqure.circuits import full_gate_set
from conqure.service import DeviceConfig, QueueService, ServiceConfig


def make_service(tmp_path, devices=None, **config_kwargs) -> QueueService:
    if devices is None:
        devices = (
            DeviceConfig(
                DeviceDescriptor(
                    device_id="sim0",
                    kind=DeviceKind.SIMULATOR,
                    num_qubits=24,
                    supported_gates=full_gate_set(),
                ),
                QueuePolicy.PRIORITY_FIFO,
            ),
        )
    config = ServiceConfig(
        store_path=str(tmp_path / "jobs.jsonl"),
        devices=tuple(devices),
        port=0,
        **config_kwargs,
    )
    return QueueService(config)


@pytest.fixture
def service(tmp_path):
    svc = make_service(tmp_path)
    svc.start()
    yield svc
    svc.stop()


@pytest.fixture
def service_url(service):
    return service.url
