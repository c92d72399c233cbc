"""Proxy token transfer with a fee: the fee + value overflow."""

from emitter import Emitter

SOURCE = """\
contract SmartMesh {
    function transferProxy(address _from, address _to, uint256 _value, uint256 _feeSmt) public returns (bool) {
        if (balances[_from] < _feeSmt + _value) revert();
        uint256 nonce = nonces[_from];
        if (balances[_to] + _value < balances[_to]) revert();
        if (balances[msg.sender] + _feeSmt < balances[msg.sender]) revert();
        balances[_to] += _value;
        balances[msg.sender] += _feeSmt;
        balances[_from] -= _value + _feeSmt;
        nonces[_from] = nonce + 1;
        _to.transfer(_value);
        return true;
    }

    mapping(address => uint256) balances;
    mapping(address => uint256) nonces;
}
"""

FIXED = """\
contract SmartMesh {
    function transferProxy(address _from, address _to, uint256 _value, uint256 _feeSmt) public returns (bool) {
        if (balances[_from] < add_uint256(_feeSmt, _value)) revert();
        uint256 nonce = nonces[_from];
        if (balances[_to] + _value < balances[_to]) revert();
        if (balances[msg.sender] + _feeSmt < balances[msg.sender]) revert();
        balances[_to] = add_uint256(balances[_to], _value);
        balances[msg.sender] = add_uint256(balances[msg.sender], _feeSmt);
        balances[_from] = sub_uint256(balances[_from], add_uint256(_value, _feeSmt));
        nonces[_from] = nonce + 1;
        _to.transfer(_value);
        return true;
    }

    mapping(address => uint256) balances;
    mapping(address => uint256) nonces;

    function add_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        uint256 c = a + b;
        require(c >= a);
        return c;
    }

    function sub_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        require(b <= a);
        return a - b;
    }
}
"""

SEL = 0xEB502D45
BALANCES, NONCES = 0, 1
LINE_OFFSET = 1
MAX = (1 << 256) - 1


def build(fixed=False, opcode="CALL"):
    e = Emitter(FIXED if fixed else SOURCE)
    ln = (lambda n: n + LINE_OFFSET)
    safe = fixed
    e.begin("transferProxy")
    e.push(0)
    e.op("CALLDATALOAD")
    e.push(SEL)
    e.op("EQ")
    e.op("ISZERO")
    e.jumpi("rv")
    for i, v in enumerate(("from", "to", "value", "fee")):
        e.arg(i, v)
    # line 2
    e.get("fee")
    e.get("value")
    e.arith("ADD", src="_feeSmt + _value", line=ln(2), safe=safe)
    e.get("from")
    e.mapping_slot(BALANCES)
    e.op("SLOAD")
    e.op("LT", src="balances[_from] < " + ("add_uint256(_feeSmt, _value)" if fixed else "_feeSmt + _value"),
         line=ln(2))
    e.jumpi("rv", src="revert()", node="IfStatement", line=ln(2))
    # line 3
    e.get("from")
    e.mapping_slot(NONCES)
    e.op("SLOAD", src="nonces[_from]", node="IndexAccess", line=ln(3))
    e.name("nonce")
    # lines 4 and 5: the developer's own overflow checks
    for who, amt, line in (("to", "value", 4), ("sender", "fee", 5)):
        _balance_of(e, who)
        e.op("DUP1")
        e.get(amt)
        e.op("ADD", src=f"balances[{_key(who)}] + {_param(amt)}", node="BinaryOperation",
             line=ln(line))
        e.op("LT")
        e.jumpi("rv", src="revert()", node="IfStatement", line=ln(line))
    # lines 6 and 7
    for who, amt, line in (("to", "value", 6), ("sender", "fee", 7)):
        _key_of(e, who)
        e.op("DUP1")
        e.op("SLOAD")
        e.get(amt)
        text = (f"balances[{_key(who)}] = add_uint256(balances[{_key(who)}], {_param(amt)})" if fixed
                else f"balances[{_key(who)}] += {_param(amt)}")
        e.arith("ADD", src=text, node="Assignment", line=ln(line), safe=safe)
        e.op("SWAP1")
        e.op("SSTORE", src=text, node="Assignment", line=ln(line))
    # line 8
    _key_of(e, "from")
    e.op("DUP1")
    e.op("SLOAD")
    e.get("value")
    e.get("fee")
    e.arith("ADD", src="_value + _feeSmt", line=ln(8), safe=safe)
    text = ("balances[_from] = sub_uint256(balances[_from], add_uint256(_value, _feeSmt))" if fixed
            else "balances[_from] -= _value + _feeSmt")
    e.arith("SUB", src=text, node="Assignment", line=ln(8), safe=safe)
    e.op("SWAP1")
    e.op("SSTORE", src=text, node="Assignment", line=ln(8))
    # line 9: never reaches the transfer
    e.get("nonce")
    e.push(1)
    e.arith("ADD", src="nonce + 1", line=ln(9))
    e.get("from")
    e.mapping_slot(NONCES)
    e.op("SSTORE", src="nonces[_from] = nonce + 1", node="Assignment", line=ln(9))
    # line 10
    e.call_args()
    if opcode == "CALL":
        e.get("value")
    e.get("to")
    e.call(opcode, src="_to.transfer(_value)", line=ln(10))
    e.require(src="_to.transfer(_value)", line=ln(10))
    e.push(1)
    e.push(0)
    e.op("MSTORE")
    e.push(0x20)
    e.push(0)
    e.op("RETURN", src="return true;", node="Return", line=ln(11))
    e.label("rv", [])
    e.revert(src="revert()", line=ln(2))
    e.end()
    return e


def _key(who):
    return {"to": "_to", "from": "_from", "sender": "msg.sender"}[who]


def _param(v):
    return {"value": "_value", "fee": "_feeSmt"}[v]


def _key_of(e, who):
    if who == "sender":
        e.op("CALLER")
    else:
        e.get(who)
    e.mapping_slot(BALANCES)


def _balance_of(e, who):
    _key_of(e, who)
    e.op("SLOAD")


def transactions():
    from evmfix.concrete import sha3_words
    alice, bob, relayer = 0xA11CE, 0xB0B, 0x5E1F
    bal = lambda who: hex(sha3_words([who, BALANCES]))
    return [
        {"calldata": [SEL, alice, bob, 10, 1], "caller": relayer,
         "storage": {bal(alice): 100}},
        {"calldata": [SEL, alice, bob, 5, 2], "caller": relayer},
        # the historical exploit: fee + value wraps to zero
        {"calldata": [SEL, 0xBAD, bob, MAX, 1], "caller": relayer},
        {"calldata": [SEL, bob, alice, 1000, 0], "caller": relayer},
    ]
