"""Axiom checks, order-preservation census, certified generators and oracles."""

from xaitu.verify.axioms import (
    DESIGNATED_FAILURE,
    AxiomId,
    Case,
    ImpossibilityCertificate,
    Verdict,
    Witness,
    axiom_suite,
    check_axiom,
    claim_game,
    impossibility_certificate,
    merge,
    run_suite,
)
from xaitu.verify.generators import MODES, GeneratorExhausted, PairCase, generate_game, in_domain, random_table
from xaitu.verify.oracles import DividendTable, harsanyi_dividends, shapley_oracle
from xaitu.verify.order import (
    SIGN_TABLE,
    STRATA,
    CensusCell,
    SignCensus,
    branch_frequencies,
    check_order_preservation,
    find_reversal,
    sign_case_census,
    stratified_games,
)

__all__ = [
    "AxiomId",
    "Case",
    "CensusCell",
    "DESIGNATED_FAILURE",
    "DividendTable",
    "GeneratorExhausted",
    "ImpossibilityCertificate",
    "MODES",
    "PairCase",
    "SIGN_TABLE",
    "STRATA",
    "SignCensus",
    "Verdict",
    "Witness",
    "axiom_suite",
    "branch_frequencies",
    "check_axiom",
    "check_order_preservation",
    "claim_game",
    "find_reversal",
    "generate_game",
    "harsanyi_dividends",
    "impossibility_certificate",
    "in_domain",
    "merge",
    "random_table",
    "run_suite",
    "shapley_oracle",
    "sign_case_census",
    "stratified_games",
]
