"""Receptive field and stride bookkeeping for sequential conv/pool chains."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["ChainOp", "TraceEntry", "trace_chain", "VGG_DETECTION_CHAIN", "DETECTION_TAPS"]


@dataclass(frozen=True)
class ChainOp:
    """One convolution or pooling stage in a sequential network."""

    name: str
    kernel: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.kernel < 1 or self.stride < 1:
            raise ValueError(f"kernel and stride must be >= 1 in {self.name}")


@dataclass(frozen=True)
class TraceEntry:
    name: str
    rf: int
    jump: int


def trace_chain(ops: list[ChainOp] | tuple[ChainOp, ...]) -> list[TraceEntry]:
    """Accumulated receptive field and jump after each op.

    Starting from rf=1, jump=1 on the input grid, each op with kernel k and
    stride s updates rf += (k - 1) * jump, then jump *= s.
    """
    rf = 1
    jump = 1
    out: list[TraceEntry] = []
    for op in ops:
        rf += (op.kernel - 1) * jump
        jump *= op.stride
        out.append(TraceEntry(op.name, rf, jump))
    return out


def _conv3(name: str) -> ChainOp:
    return ChainOp(name, kernel=3)


def _pool(name: str) -> ChainOp:
    return ChainOp(name, kernel=2, stride=2)


# VGG16 trunk up through the extra detection stages. Taps are taken after the
# last conv of each named block (the pool that follows a tap feeds the next
# block but does not belong to the tap itself).
VGG_DETECTION_CHAIN: tuple[ChainOp, ...] = (
    _conv3("conv1_1"),
    _conv3("conv1_2"),
    _pool("pool1"),
    _conv3("conv2_1"),
    _conv3("conv2_2"),
    _pool("pool2"),
    _conv3("conv3_1"),
    _conv3("conv3_2"),
    _conv3("conv3_3"),
    _pool("pool3"),
    _conv3("conv4_1"),
    _conv3("conv4_2"),
    _conv3("conv4_3"),
    _pool("pool4"),
    _conv3("conv5_1"),
    _conv3("conv5_2"),
    _conv3("conv5_3"),
    _pool("pool5"),
    _conv3("conv_fc_6"),
    ChainOp("conv_fc_7", kernel=1),
    ChainOp("conv6_1", kernel=1),
    ChainOp("conv6_2", kernel=3, stride=2),
)

# Op name to read each detection head's rf/jump from when tracing the chain.
DETECTION_TAPS: tuple[tuple[str, str], ...] = (
    ("conv3_3", "conv3_3"),
    ("conv4_3", "conv4_3"),
    ("conv5_3", "conv5_3"),
    ("conv_fc_7", "conv_fc_7"),
    ("conv6_2", "conv6_2"),
)


def tap_trace(
    ops: tuple[ChainOp, ...] = VGG_DETECTION_CHAIN,
    taps: tuple[tuple[str, str], ...] = DETECTION_TAPS,
) -> dict[str, TraceEntry]:
    """Trace a chain and pull out the entries for the named tap points."""
    by_name = {entry.name: entry for entry in trace_chain(list(ops))}
    picked: dict[str, TraceEntry] = {}
    for head, op_name in taps:
        if op_name not in by_name:
            raise KeyError(f"tap {op_name!r} not present in chain")
        picked[head] = by_name[op_name]
    return picked
