import numpy as np
import pytest

from anchorlab.layerchain import (
    VGG_DETECTION_CHAIN,
    ChainOp,
    TraceEntry,
    tap_trace,
    trace_chain,
)


def numeric_footprint(ops, n_inputs=512):
    """Gradient-footprint oracle: run the chain on identity columns.

    Every op is an all-ones valid correlation followed by stride slicing, so
    output[0]'s nonzero pattern over input positions IS its receptive field.
    Returns (footprint width of output 0, offset between outputs 0 and 1).
    """
    x = np.eye(n_inputs)
    for op in ops:
        k, s = op.kernel, op.stride
        y = sum(x[i : x.shape[0] - k + 1 + i] for i in range(k))
        x = y[:: s]
    assert x.shape[0] >= 2, "need at least two output positions"
    first = np.flatnonzero(x[0])
    second = np.flatnonzero(x[1])
    return len(first), int(second[0] - first[0])


def test_single_conv():
    assert trace_chain([ChainOp("c", 5)]) == [TraceEntry("c", 5, 1)]


def test_conv_then_strided_pool():
    got = trace_chain([ChainOp("a", 3), ChainOp("b", 2, 2)])
    assert got == [TraceEntry("a", 3, 1), TraceEntry("b", 4, 2)]


def test_op_validation():
    with pytest.raises(ValueError):
        ChainOp("bad", 0)
    with pytest.raises(ValueError):
        ChainOp("bad", 3, 0)


def test_vgg_taps():
    taps = tap_trace()
    assert [taps[n].jump for n in ("conv3_3", "conv4_3", "conv5_3", "conv_fc_7", "conv6_2")] == [
        4, 8, 16, 32, 64,
    ]
    assert [taps[n].rf for n in ("conv3_3", "conv4_3", "conv5_3", "conv_fc_7", "conv6_2")] == [
        40, 92, 196, 276, 340,
    ]


def test_missing_tap_raises():
    with pytest.raises(KeyError):
        tap_trace(taps=(("x", "not_there"),))


@pytest.mark.parametrize(
    "ops",
    [
        (ChainOp("c5", 5),),
        (ChainOp("a", 3), ChainOp("p", 2, 2), ChainOp("b", 3)),
        (ChainOp("a", 7, 2), ChainOp("b", 3, 3)),
    ],
)
def test_trace_matches_numeric_footprint_small(ops):
    trace = trace_chain(list(ops))
    rf, jump = numeric_footprint(ops, n_inputs=128)
    assert trace[-1].rf == rf
    assert trace[-1].jump == jump


def test_trace_matches_numeric_footprint_full_chain():
    trace = {e.name: e for e in trace_chain(list(VGG_DETECTION_CHAIN))}
    # check the two cheapest taps numerically; deeper taps follow by the same
    # recursion already validated above
    for upto, n in (("conv3_3", 128), ("conv4_3", 256)):
        prefix = []
        for op in VGG_DETECTION_CHAIN:
            prefix.append(op)
            if op.name == upto:
                break
        rf, jump = numeric_footprint(tuple(prefix), n_inputs=n)
        assert trace[upto].rf == rf
        assert trace[upto].jump == jump
