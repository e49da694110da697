import numpy as np
import pytest

from dsnmt.config import ModelConfig
from dsnmt.model import Transformer
from dsnmt.toy import toy_weights


def small_config(**kw) -> ModelConfig:
    base = dict(enc_layers=2, dec_layers=2, d_model=16, n_heads=2, d_ffn=24, vocab_size=40, max_rel_pos=3,
                max_tgt_len=12)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def small_model():
    cfg = small_config()
    return Transformer(cfg, toy_weights(cfg, seed=7, eos_scale=2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_criteria: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name = report.nodeid.rsplit("::", 1)[-1]
        _criteria.append((name, "PASS" if report.outcome == "passed" else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in _criteria:
        terminalreporter.write_line(f"{verdict}  {name}  {detail}")
