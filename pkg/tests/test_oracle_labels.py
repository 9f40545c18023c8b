# tests/test_oracle_labels.py
from fractions import Fraction

import pytest

from oracle.labels import (
    OracleError,
    basis_of,
    canonical,
    contract,
    parse_label,
    parse_pattern,
    pattern_key,
    substitute_varphi,
)


def test_compressed_and_explicit_forms_agree():
    assert parse_label("phi_{ijkl}") == parse_label("phi_{i|j|k|l}")
    assert parse_label("phi_{i,i|jj|k,k}").render() == "phi_{i,i|j|j|k,k}"
    assert parse_label("phi_{i.pq|jkl}") == parse_label("phi_{i,pq|j|k|l}")


def test_factor_round_trip():
    text = "phi_{i|j|k|l}*db^{i}_{j}*dda^{kl}_{pp}"
    lab = parse_label(text)
    assert [f.kind for f in lab.factors] == ["db", "dda"]
    assert lab.render() == text


@pytest.mark.parametrize("text", ["psi_{ijkl}", "phi_{ijk}", "phi_{ij||kl}", "phi_{ijkl}*xx^{i}_{j}"])
def test_malformed_labels(text):
    with pytest.raises(OracleError):
        parse_label(text)


def test_canonical_renames_by_first_appearance():
    assert canonical(parse_label("phi_{k|l|i|j}")).render() == "phi_{i|j|k|l}"
    # derivative order is symmetric
    assert canonical(parse_label("phi_{p,ji|j|i|p}")) == canonical(parse_label("phi_{p,ij|j|i|p}"))


def test_pattern_keys_are_sorted():
    assert pattern_key(parse_pattern("d(kl)d(ji)")) == "d(ij)d(kl)"
    assert parse_pattern("") == frozenset()
    with pytest.raises(OracleError):
        parse_pattern("d(ijk)")


def test_contract_delta_patterns():
    lab = parse_label("phi_{i|j|k|l}")
    assert contract(lab, parse_pattern("d(ij)d(kl)")).render() == "phi_{i|i|j|j}"
    assert contract(lab, parse_pattern("d(ik)d(jl)")).render() == "phi_{i|j|i|j}"
    assert contract(lab, parse_pattern("d(il)d(jk)")).render() == "phi_{i|j|j|i}"


def test_contract_rejects_free_indices():
    with pytest.raises(OracleError):
        contract(parse_label("phi_{i|j|k|l}"), parse_pattern("d(ij)"))


def test_substitute_plain_varphi():
    out = substitute_varphi(parse_label("phi_{V|V|i|i}"))
    assert [(c, lab.render()) for c, lab in out] == [(Fraction(1, 4), "phi_{i,i|j,j|k|k}")]


def test_substitute_differentiated_varphi():
    out = {lab.render(): c for c, lab in substitute_varphi(parse_label("phi_{V,i|i|j|j}"))}
    assert out == {
        "phi_{i|j|k|k}*db^{i}_{j}": Fraction(1),
        "phi_{i,ij|j|k|k}": Fraction(1, 2),
    }


def test_second_derivative_of_varphi_rejected():
    with pytest.raises(OracleError):
        substitute_varphi(parse_label("phi_{V,ij|i|j|k,k}"))


def test_basis_names():
    assert basis_of(["d(ij)d(kl)", "d(il)d(jk)"]) == "delta3"
    assert basis_of([""]) == "contracted"
    assert basis_of(["d(ij)d(kl)d(pq)"]) == "delta15"
    assert basis_of(["d(ij)d(kl)", ""]) == "mixed"
