"""Small fixtures: control-flow shapes, negatives and overhead accounting."""

from emitter import Emitter


def _ret(e, var):
    e.get(var)
    e.push(0)
    e.op("MSTORE")
    e.push(0x20)
    e.push(0)
    e.op("RETURN")


# --- control-flow shapes --------------------------------------------------------

COUNT = """\
contract Count {
    function f(uint n) public returns (uint) {
        uint i = 0;
        while (i < n) {
            i = i + 1;
        }
        return i;
    }
}
"""


def single_assignment_loop():
    e = Emitter(COUNT)
    e.begin("f")
    e.arg(0, "n")
    e.push(0)
    e.name("i")
    e.label("head")
    e.get("n")
    e.get("i")
    e.op("LT", src="i < n", line=4)
    e.op("ISZERO")
    e.jumpi("exit")
    e.push(1)
    e.get("i")
    e.arith("ADD", src="i + 1", line=5)
    e.assign("i", src="i = i + 1", line=5)
    e.jump("head")
    e.label("exit", ["n", "i"])
    _ret(e, "i")
    e.end()
    return e


STRAIGHT = """\
contract Straight {
    uint x;
    function f(uint a) public {
        x = a * 2;
    }
}
"""


def straight_line():
    e = Emitter(STRAIGHT)
    e.begin("f")
    e.arg(0, "a")
    e.push(2)
    e.get("a")
    e.op("MUL", src="a * 2", node="BinaryOperation", line=4)
    e.push(0)
    e.op("SSTORE", src="x = a * 2", node="Assignment", line=4)
    e.op("STOP")
    e.end()
    return e


DIAMOND = """\
contract Diamond {
    uint x;
    function f(uint a) public {
        if (a > 10) { x = 1; } else { x = 2; }
        x = x + a;
    }
}
"""


def diamond():
    e = Emitter(DIAMOND)
    e.begin("f")
    e.arg(0, "a")
    e.push(10)
    e.get("a")
    e.op("GT", src="a > 10", line=4)
    e.jumpi("then")
    e.push(2)
    e.push(0)
    e.op("SSTORE", src="x = 2", node="Assignment", line=4)
    e.jump("join")
    e.label("then", ["a"])
    e.push(1)
    e.push(0)
    e.op("SSTORE", src="x = 1", node="Assignment", line=4)
    e.label("join", ["a"])
    e.get("a")
    e.sload(0)
    e.arith("ADD", src="x + a", line=5)
    e.push(0)
    e.op("SSTORE", src="x = x + a", node="Assignment", line=5)
    e.op("STOP")
    e.end()
    return e


NESTED = """\
contract Nested {
    uint x;
    function f(uint a, uint b) public {
        if (a > 1) {
            if (b > 2) { x = a; }
            x = b;
        }
    }
}
"""


def nested_if():
    e = Emitter(NESTED)
    e.begin("f")
    e.arg(0, "a")
    e.arg(1, "b")
    e.push(1)
    e.get("a")
    e.op("GT", src="a > 1", line=4)
    e.op("ISZERO")
    e.jumpi("end")
    e.push(2)
    e.get("b")
    e.op("GT", src="b > 2", line=5)
    e.op("ISZERO")
    e.jumpi("inner")
    e.get("a")
    e.push(0)
    e.op("SSTORE", src="x = a", node="Assignment", line=5)
    e.label("inner", ["a", "b"])
    e.get("b")
    e.push(0)
    e.op("SSTORE", src="x = b", node="Assignment", line=6)
    e.label("end", ["a", "b"])
    e.op("STOP")
    e.end()
    return e


# --- negatives ------------------------------------------------------------------

DISJOINT = """\
contract Disjoint {
    uint a;
    uint b;
    function pay() public {
        msg.sender.call.value(a)("");
        b = 1;
    }
    function set(uint v) public {
        b = v;
    }
}
"""
SEL_PAY, SEL_SET = 0x1B9265B8, 0x60FE47B1


def disjoint_slots(opcode="CALL"):
    e = Emitter(DISJOINT)
    e.dispatch([(SEL_PAY, "pay"), (SEL_SET, "set")])
    e.label("pay", [None])
    e.begin("pay")
    e.op("POP")
    e.call_args()
    if opcode == "CALL":
        e.sload(0, src="a", line=5)
    e.op("CALLER")
    e.call(opcode, src='msg.sender.call.value(a)("")', line=5)
    e.op("POP")
    e.push(1)
    e.push(1)
    e.op("SSTORE", src="b = 1", node="Assignment", line=6)
    e.op("STOP")
    e.end()
    e.label("set", [None])
    e.begin("set")
    e.op("POP")
    e.arg(0, "v")
    e.push(1)
    e.op("SSTORE", src="b = v", node="Assignment", line=9)
    e.op("STOP")
    e.end()
    return e


# a store through a computed slot cannot be resolved to a concrete location
SCALED = """\
contract Scaled {
    function put(uint k, uint v) public {
        assembly { sstore(mul(k, 2), v) }
    }
    function get() public returns (uint) {
        assembly { mstore(0, sload(4)) return(0, 32) }
    }
}
"""
SEL_PUT, SEL_GET = 0xB8E010DE, 0x6D4CE63C


def scaled_slot():
    e = Emitter(SCALED)
    e.dispatch([(SEL_PUT, "put"), (SEL_GET, "get")])
    e.label("put", [None])
    e.begin("put")
    e.op("POP")
    e.arg(1, "v")
    e.push(2)
    e.arg(0, "k")
    e.op("MUL", src="mul(k, 2)", node="FunctionCall", line=3)
    e.op("SSTORE", src="sstore(mul(k, 2), v)", node="FunctionCall", line=3)
    e.op("STOP")
    e.end()
    e.label("get", [None])
    e.begin("get")
    e.op("POP")
    e.sload(4, "r", src="sload(4)", node="FunctionCall", line=6)
    _ret(e, "r")
    e.end()
    return e


CONST = """\
contract Tip {
    uint paid;
    function tipFixed() public {
        msg.sender.transfer(2 + 3);
        paid = 1;
    }
}
"""


def constant_arithmetic():
    e = Emitter(CONST)
    e.begin("tipFixed")
    e.call_args()
    e.push(3)
    e.push(2)
    e.op("ADD", src="2 + 3", node="BinaryOperation", line=4)
    e.op("CALLER")
    e.call("CALL", src="msg.sender.transfer(2 + 3)", line=4)
    e.require(src="msg.sender.transfer(2 + 3)", line=4)
    e.push(1)
    e.push(0)
    e.op("SSTORE", src="paid = 1", node="Assignment", line=5)
    e.op("STOP")
    e.end()
    return e


AUDIT = """\
contract Audit {
    event Seen(address who);
    function ping() public {
        emit Seen(tx.origin);
        msg.sender.transfer(1);
    }
}
"""


def origin_logged():
    e = Emitter(AUDIT)
    e.begin("ping")
    e.op("ORIGIN", src="tx.origin", node="MemberAccess", line=4)
    e.push(0)
    e.push(0)
    e.op("LOG1", src="emit Seen(tx.origin)", node="EmitStatement", line=4)
    e.call_args()
    e.push(1)
    e.op("CALLER")
    e.call("CALL", src="msg.sender.transfer(1)", line=5)
    e.require(src="msg.sender.transfer(1)", line=5)
    e.op("STOP")
    e.end()
    return e


# --- path explosion ---------------------------------------------------------------

EXPLODE = """\
contract Explode {
    uint acc;
    function f(uint a) public {
        // thirty independent branches on bits of a
    }
}
"""


def explode(branches=30):
    e = Emitter(EXPLODE)
    e.begin("f")
    e.arg(0, "a")
    for k in range(branches):
        e.push(1 << k)
        e.get("a")
        e.op("AND")
        e.op("ISZERO")
        e.jumpi(f"skip{k}")
        e.push(k + 1)
        e.push(0)
        e.op("SSTORE")
        e.label(f"skip{k}", ["a"])
    e.op("STOP")
    e.end()
    return e


# --- overhead accounting ---------------------------------------------------------

FEES = """\
contract Fees {
    uint counter;
    uint total;
    uint stats;
    function pay(uint a, uint b, uint rate) public {
        uint fee = a / rate;
        uint amount = a - fee;
        counter = counter + 1;
        total = total + b;
        stats = b * 2;
        msg.sender.transfer(amount);
    }
}
"""

FEES_FIXED = """\
contract Fees {
    uint counter;
    uint total;
    uint stats;
    function pay(uint a, uint b, uint rate) public {
        uint fee = div_uint256(a, rate);
        uint amount = sub_uint256(a, fee);
        counter = counter + 1;
        total = total + b;
        stats = b * 2;
        msg.sender.transfer(amount);
    }

    function sub_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        require(b <= a);
        return a - b;
    }

    function div_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        require(b > 0);
        return a / b;
    }
}
"""


class fees:
    SOURCE, FIXED = FEES, FEES_FIXED

    @staticmethod
    def build(fixed=False):
        e = Emitter(FEES_FIXED if fixed else FEES)
        e.begin("pay")
        e.arg(0, "a")
        e.arg(1, "b")
        e.arg(2, "rate")
        e.get("a")
        e.get("rate")
        e.arith("DIV", src="div_uint256(a, rate)" if fixed else "a / rate", line=6, safe=fixed)
        e.name("fee")
        e.get("a")
        e.get("fee")
        e.arith("SUB", src="sub_uint256(a, fee)" if fixed else "a - fee", line=7, safe=fixed)
        e.name("amount")
        for slot, var, line, text in ((0, None, 8, "counter + 1"), (1, "b", 9, "total + b")):
            e.sload(slot)
            if var:
                e.get(var)
            else:
                e.push(1)
            e.arith("ADD", src=text, line=line)
            e.push(slot)
            e.op("SSTORE", src=text.split(" ")[0] + " = " + text, node="Assignment", line=line)
        e.push(2)
        e.get("b")
        e.arith("MUL", src="b * 2", line=10)
        e.push(2)
        e.op("SSTORE", src="stats = b * 2", node="Assignment", line=10)
        e.call_args()
        e.get("amount")
        e.op("CALLER")
        e.call("CALL", src="msg.sender.transfer(amount)", line=11)
        e.require(src="msg.sender.transfer(amount)", line=11)
        e.op("STOP")
        e.end()
        return e

    @staticmethod
    def transactions():
        return [
            {"calldata": [0, 1000, 7, 100]},
            {"calldata": [0, 50, 1, 10]},
            {"calldata": [0, 12345, 2, 0]},
            {"calldata": [0, 12345, 2, 3]},
        ]


TIP = """\
contract Tip {
    function tip(uint a, uint b) public {
        msg.sender.transfer(a + b);
    }
}
"""

TIP_FIXED = """\
contract Tip {
    function tip(uint a, uint b) public {
        msg.sender.transfer(add_uint256(a, b));
    }

    function add_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        uint256 c = a + b;
        require(c >= a);
        return c;
    }
}
"""


class tip:
    SOURCE, FIXED = TIP, TIP_FIXED

    @staticmethod
    def build(fixed=False):
        e = Emitter(TIP_FIXED if fixed else TIP)
        e.begin("tip")
        e.call_args()
        e.arg(1, "b")
        e.arg(0, "a")
        e.arith("ADD", src="add_uint256(a, b)" if fixed else "a + b", line=3, safe=fixed)
        e.op("CALLER")
        src = f"msg.sender.transfer({'add_uint256(a, b)' if fixed else 'a + b'})"
        e.call("CALL", src=src, line=3)
        e.require(src=src, line=3)
        e.op("STOP")
        e.end()
        return e

    @staticmethod
    def transactions():
        return [{"calldata": [0, 4, 5]}]
