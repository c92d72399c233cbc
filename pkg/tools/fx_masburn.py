"""Token burner with a weekly limit: reentrancy plus unchecked arithmetic."""

from emitter import Emitter
from evmfix.concrete import sha3_words

SOURCE = """\
contract MasBurn {
    function getThisWeekBurnedAmount() public view returns (uint) {
        uint thisWeekStartTime = getThisWeekStartTime();
        uint total = 0;
        for (uint i = numOfBurns; i > 0; i--) {
            if (burnTimestampArr[i - 1] < thisWeekStartTime) break;
            total += burnAmountArr[i - 1];
        }
        return total;
    }

    function getThisWeekBurnAmountLeft() public view returns (uint) {
        return weeklyLimit - getThisWeekBurnedAmount();
    }

    function burn(uint amount) external {
        require(amount <= getThisWeekBurnAmountLeft());
        require(IERC20(tokenAddress).transferFrom(msg.sender, BURN_ADDRESS, amount));
        ++numOfBurns;
    }

    function getThisWeekStartTime() public view returns (uint) {
        return weekStartTime;
    }

    uint public weeklyLimit;
    uint public weekStartTime;
    uint public numOfBurns;
    address public tokenAddress;
    address public constant BURN_ADDRESS = 0x000000000000000000000000000000000000dEaD;
    uint[] public burnTimestampArr;
    uint[] public burnAmountArr;
}
"""

FIXED = """\
contract MasBurn {
    function getThisWeekBurnedAmount() public view returns (uint) {
        uint thisWeekStartTime = getThisWeekStartTime();
        uint total = 0;
        for (uint i = numOfBurns; i > 0; i = sub_uint256(i, 1)) {
            if (burnTimestampArr[sub_uint256(i, 1)] < thisWeekStartTime) break;
            total = add_uint256(total, burnAmountArr[sub_uint256(i, 1)]);
        }
        return total;
    }

    function getThisWeekBurnAmountLeft() public view returns (uint) {
        return sub_uint256(weeklyLimit, getThisWeekBurnedAmount());
    }

    function burn(uint amount) nonReentrant external {
        require(amount <= getThisWeekBurnAmountLeft());
        require(IERC20(tokenAddress).transferFrom(msg.sender, BURN_ADDRESS, amount));
        numOfBurns = add_uint256(numOfBurns, 1);
    }

    function getThisWeekStartTime() public view returns (uint) {
        return weekStartTime;
    }

    uint public weeklyLimit;
    uint public weekStartTime;
    uint public numOfBurns;
    address public tokenAddress;
    address public constant BURN_ADDRESS = 0x000000000000000000000000000000000000dEaD;
    uint[] public burnTimestampArr;
    uint[] public burnAmountArr;

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

    function sub_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        require(b <= a);
        return a - b;
    }
}
"""

SEL_BURN = 0x42966C68
LIMIT, START, COUNT, TOKEN, TS_ARR, AMT_ARR, LOCK = range(7)
# reference line numbers start at the first function, one line below the contract header
LINE_OFFSET = 1


def build(fixed=False, guard=True, opcode="CALL"):
    src = FIXED if fixed else SOURCE
    e = Emitter(src)
    safe = fixed
    ln = (lambda n: n + LINE_OFFSET)
    e.dispatch([(SEL_BURN, "burn")])
    e.label("burn")
    e.begin("burn")
    e.op("POP")
    if fixed:
        e.guard_enter(LOCK, "require(!_reentrancyLock);" if guard else None)
    e.arg(0, "amount")
    # inlined getThisWeekBurnedAmount
    e.sload(START, "start", src="getThisWeekStartTime()", line=ln(2))
    e.push(0)
    e.name("total")
    e.sload(COUNT, "i", src="numOfBurns", line=ln(4))
    e.label("head")
    e.get("i")
    e.push(0)
    e.op("SWAP1")
    e.op("GT", src="i > 0", line=ln(4))
    e.op("ISZERO")
    e.jumpi("exit")
    e.get("start")
    e.get("i")
    e.push(1)
    e.arith("SUB", src="i - 1", line=ln(5), safe=safe)
    e.array_elem(TS_ARR)
    e.op("SLOAD", src="burnTimestampArr[i - 1]" if not fixed else "burnTimestampArr[sub_uint256(i, 1)]",
         node="IndexAccess", line=ln(5))
    e.op("LT", src="burnTimestampArr[i - 1] < thisWeekStartTime" if not fixed else
         "burnTimestampArr[sub_uint256(i, 1)] < thisWeekStartTime", line=ln(5))
    e.jumpi("exit", src="break", node="Break", line=ln(5))
    e.get("total")
    e.get("i")
    e.push(1)
    e.arith("SUB", src="i - 1", line=ln(6), safe=safe)
    e.array_elem(AMT_ARR)
    e.op("SLOAD")
    acc = "total += burnAmountArr[i - 1]" if not fixed else \
        "total = add_uint256(total, burnAmountArr[sub_uint256(i, 1)])"
    e.arith("ADD", src=acc, node="Assignment", line=ln(6), safe=safe)
    e.assign("total", src=acc, line=ln(6))
    e.get("i")
    e.push(1)
    dec = "i--" if not fixed else "i = sub_uint256(i, 1)"
    e.arith("SUB", src=dec, node="UnaryOperation", line=ln(4), safe=safe)
    e.assign("i", src=dec, line=ln(4))
    e.jump("head")
    e.label("exit", ["amount", "start", "total", "i"])
    e.drop("i")
    e.drop("start")
    # getThisWeekBurnAmountLeft
    e.sload(LIMIT, src="weeklyLimit", line=ln(12))
    e.op("SWAP1")
    left = "weeklyLimit - getThisWeekBurnedAmount()" if not fixed else \
        "sub_uint256(weeklyLimit, getThisWeekBurnedAmount())"
    e.arith("SUB", src=left, line=ln(12), safe=safe)
    e.name("left")
    e.get("amount")
    e.op("GT", src="amount <= getThisWeekBurnAmountLeft()", line=ln(16))
    e.require(invert=True, src="require(amount <= getThisWeekBurnAmountLeft());", line=ln(16))
    e.call_args()
    if opcode == "CALL":
        e.push(0)
    e.sload(TOKEN, src="tokenAddress", line=ln(17))
    e.call(opcode, src="IERC20(tokenAddress).transferFrom(msg.sender, BURN_ADDRESS, amount)",
           line=ln(17))
    e.require(src="require(IERC20(tokenAddress).transferFrom(msg.sender, BURN_ADDRESS, amount));",
              line=ln(17))
    e.sload(COUNT, src="numOfBurns", line=ln(18))
    e.push(1)
    inc = "++numOfBurns" if not fixed else "numOfBurns = add_uint256(numOfBurns, 1)"
    e.arith("ADD", src=inc, node="UnaryOperation", line=ln(18), safe=safe)
    e.push(COUNT)
    e.op("SSTORE", src=inc, node="Assignment", line=ln(18))
    if fixed:
        e.guard_exit(LOCK, guard)
    e.op("STOP")
    e.end()
    return e


def transactions():
    ts0 = sha3_words([TS_ARR])
    amt0 = sha3_words([AMT_ARR])
    init = {LIMIT: 50, START: 100, COUNT: 1, TOKEN: 0x70CE, ts0: 150, amt0: 60}
    return [
        # an earlier burn of 60 exceeds the limit: the unchecked subtraction wraps
        {"calldata": [SEL_BURN, 5], "storage": {hex(k): v for k, v in init.items()}},
        {"calldata": [SEL_BURN, 5]},
        {"calldata": [SEL_BURN, 100]},
        # the token calls back into burn during the transfer
        {"calldata": [SEL_BURN, 5], "reentry": {"0": [SEL_BURN, 5]}},
    ]
