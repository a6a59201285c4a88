"""Atomic fetch-and-add for numba kernels running in concurrent threads."""

from numba import types
from numba.core import cgutils
from numba.extending import intrinsic


@intrinsic
def atomic_fetch_add(typingctx, ary, idx, val):
    """``old = ary[idx]; ary[idx] += val`` as one sequentially consistent operation.

    Only integer arrays are supported. Returns the value before the addition.
    """
    if not isinstance(ary, types.Array) or not isinstance(ary.dtype, types.Integer):
        return None
    sig = ary.dtype(ary, types.intp, ary.dtype)

    def codegen(context, builder, signature, args):
        aryty = signature.args[0]
        arr = context.make_array(aryty)(context, builder, args[0])
        ptr = cgutils.get_item_pointer(
            context, builder, aryty, arr, [args[1]], wraparound=False
        )
        return builder.atomic_rmw("add", ptr, args[2], "seq_cst")

    return sig, codegen
