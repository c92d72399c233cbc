"""Bank (cross-function reentrancy), wallet (tx.origin) and the smaller figure examples."""

from emitter import Emitter
from evmfix.concrete import sha3_words

# --- bank -------------------------------------------------------------------

BANK = """\
contract Bank {
    mapping(address => uint) private balances;
    function transfer(address to, uint amount) public {
        if (balances[msg.sender] >= amount) {
            balances[to] += amount;
            balances[msg.sender] -= amount;
        }
    }
    function withdraw() public {
        require(msg.sender.call.value(balances[msg.sender])(""));
        balances[msg.sender] = 0;
    }
}
"""

BANK_FIXED = """\
contract Bank {
    mapping(address => uint) private balances;
    function transfer(address to, uint amount) nonReentrant public {
        if (balances[msg.sender] >= amount) {
            balances[to] = add_uint256(balances[to], amount);
            balances[msg.sender] -= amount;
        }
    }
    function withdraw() nonReentrant public {
        require(msg.sender.call.value(balances[msg.sender])(""));
        balances[msg.sender] = 0;
    }

    bool private _reentrancyLock;

    modifier nonReentrant() {
        require(!_reentrancyLock);
        _reentrancyLock = true;
        _;
        _reentrancyLock = false;
    }

    function add_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        uint256 c = a + b;
        require(c >= a);
        return c;
    }
}
"""

# the developer guarded withdraw but not transfer
BANK_GUARDED = """\
contract Bank {
    mapping(address => uint) private balances;
    function transfer(address to, uint amount) public {
        if (balances[msg.sender] >= amount) {
            balances[to] += amount;
            balances[msg.sender] -= amount;
        }
    }
    function withdraw() nonReentrant public {
        require(msg.sender.call.value(balances[msg.sender])(""));
        balances[msg.sender] = 0;
    }

    bool private _reentrancyLock;

    modifier nonReentrant() {
        require(!_reentrancyLock);
        _reentrancyLock = true;
        _;
        _reentrancyLock = false;
    }
}
"""

SEL_TRANSFER, SEL_WITHDRAW = 0xA9059CBB, 0x3CCFD60B
BANK_LOCK = 1


class bank:
    SOURCE, FIXED = BANK, BANK_FIXED

    @staticmethod
    def build(fixed=False, source=None, guard_transfer=None, guard_withdraw=None,
              opcode="CALL", guard_body=True):
        src = source or (BANK_FIXED if fixed else BANK)
        gt = fixed if guard_transfer is None else guard_transfer
        gw = fixed if guard_withdraw is None else guard_withdraw
        e = Emitter(src)
        e.dispatch([(SEL_TRANSFER, "transfer"), (SEL_WITHDRAW, "withdraw")])
        # transfer(to, amount)
        e.label("transfer", [None])
        e.begin("transfer")
        e.op("POP")
        if gt:
            e.guard_enter(BANK_LOCK, "require(!_reentrancyLock);" if guard_body else None)
        e.arg(0, "to")
        e.arg(1, "amount")
        e.get("amount")
        e.op("CALLER")
        e.mapping_slot(0)
        e.op("SLOAD", src="balances[msg.sender]", node="IndexAccess", line=4)
        e.op("LT", src="balances[msg.sender] >= amount", line=4)
        e.jumpi("t_end", src="if (balances[msg.sender] >= amount)", node="IfStatement", line=4)
        e.get("to")
        e.mapping_slot(0)
        e.op("DUP1")
        e.op("SLOAD")
        e.get("amount")
        text = "balances[to] = add_uint256(balances[to], amount)" if fixed else "balances[to] += amount"
        e.arith("ADD", src=text, node="Assignment", line=5, safe=fixed)
        e.op("SWAP1")
        e.op("SSTORE", src=text, node="Assignment", line=5)
        e.op("CALLER")
        e.mapping_slot(0)
        e.op("DUP1")
        e.op("SLOAD")
        e.get("amount")
        e.arith("SUB", src="balances[msg.sender] -= amount", node="Assignment", line=6)
        e.op("SWAP1")
        e.op("SSTORE", src="balances[msg.sender] -= amount", node="Assignment", line=6)
        e.label("t_end", ["to", "amount"])
        if gt:
            e.guard_exit(BANK_LOCK, guard_body)
        e.op("STOP")
        e.end()
        # withdraw()
        e.label("withdraw", [None])
        e.begin("withdraw")
        e.op("POP")
        if gw:
            e.guard_enter(BANK_LOCK, "require(!_reentrancyLock);" if guard_body else None)
        e.call_args()
        if opcode == "CALL":
            e.op("CALLER")
            e.mapping_slot(0)
            e.op("SLOAD", src="balances[msg.sender]", node="IndexAccess", line=10)
        e.op("CALLER")
        e.call(opcode, src='msg.sender.call.value(balances[msg.sender])("")', line=10)
        e.require(src='require(msg.sender.call.value(balances[msg.sender])(""));', line=10)
        e.push(0)
        e.op("CALLER")
        e.mapping_slot(0)
        e.op("SSTORE", src="balances[msg.sender] = 0", node="Assignment", line=11)
        if gw:
            e.guard_exit(BANK_LOCK, guard_body)
        e.op("STOP")
        e.end()
        return e

    @staticmethod
    def transactions():
        alice, bob = 0xA11CE, 0xB0B
        bal = lambda who: hex(sha3_words([who, 0]))
        return [
            {"calldata": [SEL_TRANSFER, bob, 30], "caller": alice,
             "storage": {bal(alice): 100, bal(bob): 5}},
            {"calldata": [SEL_WITHDRAW], "caller": bob},
            {"calldata": [SEL_TRANSFER, alice, 500], "caller": bob},
            # the payee re-enters transfer while receiving its balance
            {"calldata": [SEL_WITHDRAW], "caller": alice,
             "reentry": {"0": [SEL_TRANSFER, bob, 70]}},
            {"calldata": [SEL_WITHDRAW], "caller": bob},
        ]


# --- wallet (tx.origin) -------------------------------------------------------

WALLET = """\
contract Wallet {
    address owner;
    function withdrawAll(address _recipient) public {
        require(tx.origin == owner);
        _recipient.transfer(address(this).balance);
    }
}
"""

WALLET_FIXED = WALLET.replace("tx.origin", "msg.sender")
SEL_WITHDRAW_ALL = 0x2E1A7D4D


class wallet:
    SOURCE, FIXED = WALLET, WALLET_FIXED

    @staticmethod
    def build(fixed=False, opcode="CALL", who=None):
        e = Emitter(WALLET_FIXED if fixed else WALLET)
        e.begin("withdrawAll")
        e.arg(0, "to")
        e.sload(0, src="owner", line=4)
        who = who or ("CALLER" if fixed else "ORIGIN")
        e.op(who, src="msg.sender" if fixed else "tx.origin", node="MemberAccess", line=4)
        e.op("EQ", src=("msg.sender" if fixed else "tx.origin") + " == owner", line=4)
        e.require(src=f"require({'msg.sender' if fixed else 'tx.origin'} == owner);", line=4)
        e.call_args()
        if opcode == "CALL":
            e.op("ADDRESS")
            e.op("BALANCE", src="address(this).balance", node="MemberAccess", line=5)
        e.get("to")
        e.call(opcode, src="_recipient.transfer(address(this).balance)", line=5)
        e.require(src="_recipient.transfer(address(this).balance)", line=5)
        e.op("STOP")
        e.end()
        return e

    @staticmethod
    def transactions():
        owner, thief = 0x0E, 0xBAD
        return [
            {"calldata": [SEL_WITHDRAW_ALL, owner], "origin": owner, "caller": owner,
             "storage": {"0x0": owner}},
            # a phishing contract forwards the owner's transaction
            {"calldata": [SEL_WITHDRAW_ALL, thief], "origin": owner, "caller": thief},
            {"calldata": [SEL_WITHDRAW_ALL, thief], "origin": thief, "caller": thief},
        ]


# --- write after an independent call (no reentrancy) ---------------------------

NW = """\
contract Counter {
    mapping(address => uint) balances;
    uint numWithdraw;
    function withdraw() public {
        uint amount = balances[msg.sender];
        balances[msg.sender] = 0;
        msg.sender.call.value(amount)("");
        numWithdraw = numWithdraw + 1;
    }
}
"""


def write_after_call(opcode="CALL"):
    e = Emitter(NW)
    e.begin("withdraw")
    e.op("CALLER")
    e.mapping_slot(0)
    e.op("SLOAD", src="balances[msg.sender]", node="IndexAccess", line=5)
    e.name("amount")
    e.push(0)
    e.op("CALLER")
    e.mapping_slot(0)
    e.op("SSTORE", src="balances[msg.sender] = 0", node="Assignment", line=6)
    e.call_args()
    e.get("amount")
    e.op("CALLER")
    e.call(opcode, src='msg.sender.call.value(amount)("")', line=7)
    e.op("POP")
    e.sload(1, src="numWithdraw", line=8, nth=1)
    e.push(1)
    e.arith("ADD", src="numWithdraw + 1", line=8)
    e.push(1)
    e.op("SSTORE", src="numWithdraw = numWithdraw + 1", node="Assignment", line=8)
    e.op("STOP")
    e.end()
    return e


# --- three nested guards, two stores (control dependency example) -------------

GUARDS = """\
contract Token {
    mapping(address => uint) balances;
    function transfer(address _to, uint _value) public {
        if (_value > 0) {
            if (balances[msg.sender] >= _value) {
                if (balances[_to] + _value >= balances[_to]) {
                    balances[msg.sender] -= _value;
                    balances[_to] += _value;
                }
            }
        }
    }
}
"""


def guarded_transfer():
    e = Emitter(GUARDS)
    e.begin("transfer")
    e.arg(0, "to")
    e.arg(1, "value")
    e.push(0)
    e.get("value")
    e.op("GT", src="_value > 0", line=4)                       # GT0
    e.op("ISZERO")
    e.jumpi("end", src="if (_value > 0)", node="IfStatement", line=4)
    e.get("value")
    e.op("CALLER")
    e.mapping_slot(0)
    e.op("SLOAD")
    e.op("LT")
    e.op("ISZERO", src="balances[msg.sender] >= _value", line=5)  # ISZERO1
    e.op("ISZERO")
    e.jumpi("end", src="if (balances[msg.sender] >= _value)", node="IfStatement", line=5)
    e.get("to")
    e.mapping_slot(0)
    e.op("SLOAD")
    e.op("DUP1")
    e.get("value")
    e.op("ADD", src="balances[_to] + _value", node="BinaryOperation", line=6)
    e.op("LT")
    e.op("ISZERO", src="balances[_to] + _value >= balances[_to]", line=6)  # ISZERO2
    e.op("ISZERO")
    e.jumpi("end", src="if (balances[_to] + _value >= balances[_to])", node="IfStatement", line=6)
    e.op("CALLER")
    e.mapping_slot(0)
    e.op("DUP1")
    e.op("SLOAD")
    e.get("value")
    e.arith("SUB", src="balances[msg.sender] -= _value", node="Assignment", line=7)
    e.op("SWAP1")
    e.op("SSTORE", src="balances[msg.sender] -= _value", node="Assignment", line=7)  # SSTORE3
    e.get("to")
    e.mapping_slot(0)
    e.op("DUP1")
    e.op("SLOAD")
    e.get("value")
    e.arith("ADD", src="balances[_to] += _value", node="Assignment", line=8)
    e.op("SWAP1")
    e.op("SSTORE", src="balances[_to] += _value", node="Assignment", line=8)  # SSTORE4
    e.label("end", ["to", "value"])
    e.op("STOP")
    e.end()
    return e


# --- while loop with three paths and five assignments --------------------------

LOOP = """\
contract Loop {
    function run(uint x, uint y, uint z) public returns (uint) {
        uint m = 0;
        uint n = 0;
        while (x < 100) {
            if (y < 100) {
                m = n + 1;
                y = y + 1;
            } else if (z < 100) {
                n = x + 1;
                z = z + 1;
            } else {
                x = x + 1;
            }
        }
        return m;
    }
}
"""


def three_path_loop():
    e = Emitter(LOOP)
    e.begin("run")
    for i, v in enumerate("xyz"):
        e.arg(i, v)
    e.push(0)
    e.name("m")
    e.push(0)
    e.name("n")

    def cond(var, line, target):
        e.push(100)
        e.get(var)
        e.op("LT", src=f"{var} < 100", line=line)
        e.op("ISZERO")
        e.jumpi(target)

    def update(dst, src_var, line):
        e.push(1)
        e.get(src_var)
        e.arith("ADD", src=f"{src_var} + 1", line=line)
        e.assign(dst, src=f"{dst} = {src_var} + 1", line=line)

    layout = ["x", "y", "z", "m", "n"]
    e.label("head")
    cond("x", 5, "exit")
    cond("y", 6, "else1")
    update("m", "n", 7)
    update("y", "y", 8)
    e.jump("head")
    e.label("else1", layout)
    cond("z", 9, "else2")
    update("n", "x", 10)
    update("z", "z", 11)
    e.jump("head")
    e.label("else2", layout)
    update("x", "x", 13)
    e.jump("head")
    e.label("exit", layout)
    e.get("m")
    e.push(0)
    e.op("MSTORE")
    e.push(0x20)
    e.push(0)
    e.op("RETURN", src="return m;", node="Return", line=16)
    e.end()
    return e
