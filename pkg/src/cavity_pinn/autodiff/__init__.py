from cavity_pinn.autodiff.batched import ArrayTape
from cavity_pinn.autodiff.tape import (
    PLAIN,
    PlainOps,
    SingularOperationError,
    Tape,
    TapeError,
    TapeNode,
    backward,
    var,
)
from cavity_pinn.autodiff.taylor import TaylorTuple, input_tuple, taylor_affine, taylor_tanh

__all__ = [
    "ArrayTape",
    "PLAIN",
    "PlainOps",
    "SingularOperationError",
    "Tape",
    "TapeError",
    "TapeNode",
    "TaylorTuple",
    "backward",
    "input_tuple",
    "taylor_affine",
    "taylor_tanh",
    "var",
]
