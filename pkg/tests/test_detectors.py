import pytest

from evmfix.detectors import (ARITH, CROSS, INTRA, KINDS, TX_ORIGIN, VulnerabilityReport,
                              dedupe, detect_all, strip_iszero)
from evmfix.symbolic import Concrete, Node

from conftest import analysis, fixture_names, load


def lines(name, kind, mnemonic=None):
    """Source lines of the culprits of ``kind`` reports, minus the fixture's line offset."""
    b = load(name)
    off = b.meta.get("line_offset", 0)
    out = set()
    for r in analysis(name).reports:
        if r.kind != kind:
            continue
        (pc,) = r.culprit_pcs
        if mnemonic and b.program[pc].mnemonic != mnemonic:
            continue
        start = r.source_span[0]
        out.add(b.source[:start].count("\n") + 1 - off)
    return out


# -- positives and negatives -----------------------------------------------------

@pytest.mark.parametrize("name", fixture_names("positive"))
def test_positive_kinds(name):
    kinds = {r.kind for r in analysis(name).reports}
    assert set(load(name).meta["expect"]) <= kinds


@pytest.mark.parametrize("name", fixture_names("negative"))
def test_negatives_clean(name):
    assert analysis(name).reports == []


def test_negative_set_covers_the_cases():
    names = set(fixture_names("negative"))
    assert {"write_after_call", "constant_arithmetic"} <= names
    assert {n for n in names if n.endswith("_staticcall")} >= {
        "bank_staticcall", "wallet_staticcall", "masburn_staticcall",
        "transfer_proxy_staticcall"}


@pytest.mark.parametrize("name", fixture_names("control") + fixture_names("loop"))
def test_controls_clean(name):
    assert analysis(name).clean


# -- figure expectations ------------------------------------------------------------

def test_masburn_arithmetic_lines():
    assert lines("masburn", ARITH, "SUB") == {4, 5, 6, 12}
    assert lines("masburn", ARITH, "ADD") == {6, 18}


def test_masburn_reentrancy():
    assert lines("masburn", INTRA) == {18}


def test_transfer_proxy_lines():
    got = lines("transfer_proxy", ARITH)
    assert got == {2, 6, 7, 8}
    assert 9 not in got


def test_bank_reports():
    b = load("bank")
    rs = analysis("bank").reports
    intra = [r for r in rs if r.kind == INTRA]
    assert len(intra) == 1 and intra[0].function == "withdraw"
    assert b.program[intra[0].culprit_pcs[0]].mnemonic == "SSTORE"
    cross = [r for r in rs if r.kind == CROSS]
    assert {r.function for r in cross} == {"transfer"}
    assert lines("bank", CROSS) == {5, 6}
    assert lines("bank", INTRA) == {11}


def test_guard_suppresses_intra_only():
    kinds = {r.kind for r in analysis("bank_guarded").reports}
    assert INTRA not in kinds and CROSS in kinds


def test_wallet_origin():
    (r,) = analysis("wallet").reports
    assert r.kind == TX_ORIGIN
    assert load("wallet").program[r.culprit_pcs[0]].mnemonic == "ORIGIN"


def test_origin_into_log_only_is_fine():
    assert analysis("origin_logged").reports == []


def test_fees_sites():
    b = load("fees")
    got = {b.program[r.culprit_pcs[0]].mnemonic for r in analysis("fees").reports}
    assert got == {"DIV", "SUB"}


def test_fixed_bundles_clean():
    for name in fixture_names("fixed"):
        assert analysis(name).clean, name


# -- explanation paths ----------------------------------------------------------------

@pytest.mark.parametrize("name", fixture_names("positive"))
def test_reports_have_dependency_paths(name):
    res = analysis(name)
    for r in res.reports:
        for culprit in r.culprit_pcs:
            path = res.dp.path(r.critical_pc, culprit)
            assert path and path[0] == r.critical_pc and path[-1] == culprit
            assert all((a, b) in res.dp.edges for a, b in zip(path, path[1:]))


@pytest.mark.parametrize("name", fixture_names("positive"))
def test_reports_unique_and_sorted(name):
    rs = analysis(name).reports
    keys = [r.key() for r in rs]
    assert len(keys) == len(set(keys))
    assert dedupe(rs) == rs


def test_report_json():
    r = analysis("tip").reports[0]
    data = r.to_json()
    assert data["kind"] == ARITH and data["culprits"] == list(r.culprit_pcs)
    assert data["source"]["length"] > 0


def test_dedupe_keeps_first():
    a = VulnerabilityReport(ARITH, 5, (2,), "f", 0)
    b = VulnerabilityReport(ARITH, 5, (2,), "f", 3)
    c = VulnerabilityReport(INTRA, 5, (4,), "f", 1)
    assert dedupe([a, b, c]) == [c, a]
    assert KINDS.index(INTRA) < KINDS.index(ARITH)


def test_detect_all_is_deterministic():
    res = analysis("bank")
    b = load("bank")
    again = detect_all(res.traces, res.dp, b.functions, b.sourcemap)
    assert again == res.reports


def test_strip_iszero():
    core = Node("LT", (Concrete(1), Concrete(2)))
    assert strip_iszero(Node("ISZERO", (Node("ISZERO", (core,)),))) == (core, 2)
    assert strip_iszero(core) == (core, 0)


# -- mutants ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", fixture_names("mutant"))
def test_mutants_still_vulnerable(name):
    assert not analysis(name).clean
