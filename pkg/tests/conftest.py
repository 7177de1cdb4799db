import pytest

from pipebits.affine import analyze_affine
from pipebits.benchmarks import build
from pipebits.interval import analyze_interval
from pipebits.smtrange import analyze_smt

BENCH_IDS = ("hcd", "usm", "dus", "of:4")


@pytest.fixture(scope="session")
def pipelines():
    return {b: build(b) for b in BENCH_IDS}


@pytest.fixture(scope="session")
def ia_results(pipelines):
    return {b: analyze_interval(p) for b, p in pipelines.items()}


@pytest.fixture(scope="session")
def aa_results(pipelines):
    return {b: analyze_affine(p) for b, p in pipelines.items()}


@pytest.fixture(scope="session")
def smt_results(pipelines):
    # built-in branch-and-bound backend; the slowest fixture here
    return {b: analyze_smt(p) for b, p in pipelines.items()}


OF_CHAIN = ["v_x_0"] + sum([["av_x_%d" % k, "common_%d" % k, "v_x_%d" % (k + 1)]
                            for k in range(4)], [])
