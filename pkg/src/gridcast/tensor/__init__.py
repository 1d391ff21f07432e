"""Tensor module - dense tensors and tensor-train machinery."""

from gridcast.tensor.dense import (
    DenseTensor,
    SplitMatricization,
    as_tensor,
    fold,
    matricize,
    unvectorize,
    vectorize,
)
from gridcast.tensor.io import load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes
from gridcast.tensor.train import (
    TensorTrain,
    left_orthogonalize,
    tt_contract_pair,
    tt_decompose,
    tt_reconstruct,
    tt_to_matrix,
)

__all__ = [
    "DenseTensor",
    "SplitMatricization",
    "as_tensor",
    "fold",
    "matricize",
    "unvectorize",
    "vectorize",
    "TensorTrain",
    "tt_decompose",
    "tt_reconstruct",
    "tt_to_matrix",
    "left_orthogonalize",
    "tt_contract_pair",
    "load_tensor",
    "save_tensor",
    "tensor_from_bytes",
    "tensor_to_bytes",
]
