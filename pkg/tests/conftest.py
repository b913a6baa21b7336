import json

import pytest

from mepg.moe import registry_to_doc, ExpertEntry, ExpertRegistry
from mepg.neural.checkpoint import save_denoiser
from mepg.neural.denoiser import init_denoiser

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1].replace("test_", "", 1)
        _ACCEPTANCE_RESULTS.append((name, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, outcome in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"  [{outcome:>6}] {name}")


@pytest.fixture(scope="session")
def tiny_expert_setup(tmp_path_factory):
    """A one-expert registry backed by small randomly initialized params,
    enough for service/CLI plumbing tests (no training)."""
    root = tmp_path_factory.mktemp("tiny-experts")
    params = init_denoiser(0, features=6, n_timesteps=50)
    ckpt = root / "solo.ckpt"
    save_denoiser(ckpt, params, meta={"expert_id": "solo"})
    registry = ExpertRegistry((
        ExpertEntry("solo", str(ckpt), "blobs", "global-capable", ""),
    ))
    config_path = root / "experts.json"
    config_path.write_text(json.dumps(registry_to_doc(registry)))
    return {"registry": registry, "params": params,
            "config_path": config_path, "root": root}


@pytest.fixture(scope="session")
def two_expert_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("two-experts")
    entries = []
    for i, (eid, style, role) in enumerate(
            [("alpha", "blobs", "global-capable"), ("beta", "stripes", "local")]):
        params = init_denoiser(i, features=6, n_timesteps=50)
        ckpt = root / f"{eid}.ckpt"
        save_denoiser(ckpt, params, meta={"expert_id": eid})
        entries.append(ExpertEntry(eid, str(ckpt), style, role, ""))
    registry = ExpertRegistry(tuple(entries))
    config_path = root / "experts.json"
    config_path.write_text(json.dumps(registry_to_doc(registry)))
    return {"registry": registry, "config_path": config_path, "root": root}
