"""Shared fixtures; the trained smokers models are built once per session."""

import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from ltn.grounding import GroundingConfig
from ltn.optimizer import TrainConfig, train
from ltn.parser import parse_kb
from ltn.satisfiability import theory_from_document

CORPUS = Path(__file__).resolve().parents[1] / "corpus"

# the configuration the smokers experiments are judged under
SMOKERS_SEED = 7
SMOKERS_STEPS = 5000
SMOKERS_RESTARTS = 3


def load_corpus(*names):
    doc = parse_kb((CORPUS / names[0]).read_text(encoding="utf-8"))
    for name in names[1:]:
        doc = doc.merge(parse_kb((CORPUS / name).read_text(encoding="utf-8")))
    return doc


@dataclass
class TrainedModel:
    theory: object          # GroundedTheory carrying the best learned grounding
    trace: object
    seconds: float          # wall time for all restarts


def trained(*names):
    theory = theory_from_document(load_corpus(*names), GroundingConfig(30, 10, "lukasiewicz"), seed=SMOKERS_SEED)
    config = TrainConfig(steps=SMOKERS_STEPS, seed=SMOKERS_SEED, restarts=SMOKERS_RESTARTS, log_every=500)
    start = time.perf_counter()
    env, trace = train(theory, config, threads=1)
    return TrainedModel(theory.with_env(env), trace, time.perf_counter() - start)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS


@pytest.fixture(scope="session")
def exp1_model():
    return trained("smokers_exp1.kb")


@pytest.fixture(scope="session")
def exp2_model():
    return trained("smokers_exp1.kb", "smokers_axioms.kb")
