"""Regenerate the fixture corpus under tests/fixtures.

Run from the repository root:  python3 tools/build_corpus.py
"""

import json
from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).parent))

import fx_masburn  # noqa: E402
import fx_proxy  # noqa: E402
import fx_figs  # noqa: E402
import fx_misc  # noqa: E402

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def _write(name, data):
    (OUT / f"{name}.json").write_text(json.dumps(data, indent=1) + "\n")


def pair(name, module, meta=None, transactions=None, **variants):
    """Original, fixed and golden source for one positive fixture."""
    meta = dict(meta or {})
    orig = module.build(fixed=False).bundle(name, fixed=f"{name}.fixed.json", meta=meta)
    if transactions:
        orig["transactions"] = transactions
    _write(name, orig)
    _write(f"{name}.fixed", module.build(fixed=True).bundle(f"{name}.fixed", meta={"role": "fixed"}))
    (OUT / "golden" / f"{name}.fixed.sol").write_text(module.FIXED)


def single(name, emitter, meta=None, transactions=None, fixed=None):
    data = emitter.bundle(name, meta=dict(meta or {}))
    if transactions:
        data["transactions"] = transactions
    if fixed:
        data["fixed"] = fixed
    _write(name, data)


def build_all():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "golden").mkdir(exist_ok=True)
    pair("masburn", fx_masburn, {"role": "positive", "expect": ["IntraReentrancy", "Arithmetic"],
                                 "line_offset": fx_masburn.LINE_OFFSET},
         fx_masburn.transactions())
    pair("transfer_proxy", fx_proxy, {"role": "positive", "expect": ["Arithmetic"],
                                      "line_offset": fx_proxy.LINE_OFFSET},
         fx_proxy.transactions())
    single("transfer_proxy_staticcall", fx_proxy.build(opcode="STATICCALL"),
           {"role": "negative", "variant_of": "transfer_proxy"})
    single("masburn_staticcall", fx_masburn.build(opcode="STATICCALL"),
           {"role": "negative", "variant_of": "masburn"})
    single("masburn_mutant", fx_masburn.build(fixed=True, guard=False),
           {"role": "mutant", "variant_of": "masburn"})
    bank = fx_figs.bank
    pair("bank", bank, {"role": "positive", "expect": ["IntraReentrancy", "CrossReentrancy"]},
         bank.transactions())
    single("bank_guarded", bank.build(source=fx_figs.BANK_GUARDED, guard_withdraw=True),
           {"role": "positive", "expect": ["CrossReentrancy"]})
    single("bank_staticcall", bank.build(opcode="STATICCALL"),
           {"role": "negative", "variant_of": "bank"})
    single("bank_mutant", bank.build(fixed=True, guard_body=False),
           {"role": "mutant", "variant_of": "bank"})
    w = fx_figs.wallet
    pair("wallet", w, {"role": "positive", "expect": ["TxOrigin"]}, w.transactions())
    single("wallet_staticcall", w.build(opcode="STATICCALL"),
           {"role": "negative", "variant_of": "wallet"})
    single("wallet_mutant", w.build(fixed=True, who="ORIGIN"),
           {"role": "mutant", "variant_of": "wallet"})
    single("write_after_call", fx_figs.write_after_call(), {"role": "negative"})
    single("guarded_transfer", fx_figs.guarded_transfer(), {"role": "control"})
    m = fx_misc
    single("single_assignment_loop", m.single_assignment_loop(), {"role": "loop", "bound": 1})
    single("straight_line", m.straight_line(), {"role": "control"})
    single("diamond", m.diamond(), {"role": "control"})
    single("nested_if", m.nested_if(), {"role": "control"})
    single("disjoint_slots", m.disjoint_slots(), {"role": "negative"},
           [{"calldata": [fx_misc.SEL_SET, 9]}, {"calldata": [fx_misc.SEL_PAY]}])
    single("scaled_slot", m.scaled_slot(), {"role": "negative"},
           [{"calldata": [fx_misc.SEL_PUT, 2, 77]}, {"calldata": [fx_misc.SEL_GET]}])
    single("constant_arithmetic", m.constant_arithmetic(), {"role": "negative"})
    single("origin_logged", m.origin_logged(), {"role": "negative"})
    single("explode", m.explode(), {"role": "stress"})
    pair("fees", m.fees, {"role": "positive", "expect": ["Arithmetic"]}, m.fees.transactions())
    pair("tip", m.tip, {"role": "positive", "expect": ["Arithmetic"]}, m.tip.transactions())
    single("three_path_loop", fx_figs.three_path_loop(), {"role": "loop", "bound": 5})


if __name__ == "__main__":
    build_all()
    print(f"fixtures written to {OUT}")
