"""Compiled likelihood kernels.

One kernel set is generated per floating-point type (single and double
precision).  Every per-event quantity is built from 256 interleaved partial
sums ("lanes"): lane ``l`` accumulates source events ``j`` with
``j % 256 == l``.  The background and triggering parts are kept in separate
lanes so a sampler can cache them and re-weight without touching the O(N^2)
loop.
"""
import math

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

LANES = 256
CLIP = 1e-40

_FASTMATH = {"nnan", "ninf", "nsz", "arcp", "afn"}


@intrinsic
def _bits_as_f64(typingctx, x):
    def codegen(context, builder, sig, args):
        return builder.bitcast(args[0], ir.DoubleType())
    return types.float64(types.int64), codegen


@intrinsic
def _bits_as_f32(typingctx, x):
    def codegen(context, builder, sig, args):
        return builder.bitcast(args[0], ir.FloatType())
    return types.float32(types.int32), codegen


@intrinsic
def _fma(typingctx, a, b, c):
    # explicit fused multiply-add; automatic contraction is off because the
    # vector body and the scalar remainder loops would fuse differently
    if not (a == b == c and isinstance(a, types.Float)):
        return None

    def codegen(context, builder, sig, args):
        ty = context.get_value_type(sig.return_type)
        fn = builder.module.declare_intrinsic("llvm.fma", [ty], ir.FunctionType(ty, [ty, ty, ty]))
        return builder.call(fn, args)
    return a(a, a, a), codegen


def _horner(ftype, degree):
    # Taylor coefficients of exp on |r| <= ln(2)/2, unrolled so LLVM sees
    # straight-line code it can vectorize.
    coefs = [ftype(1.0 / math.factorial(k)) for k in range(degree, -1, -1)]
    names = {f"c{i}": c for i, c in enumerate(coefs)}
    names["fma"] = _fma
    body = "c0"
    for i in range(1, len(coefs)):
        body = f"fma({body}, r, c{i})"
    exec(f"def poly(r):\n    return {body}\n", names)
    return njit(inline="always", fastmath=_FASTMATH)(names["poly"])


class KernelSet:
    """Kernels specialised to one dtype (``np.float32`` or ``np.float64``)."""

    def __init__(self, dtype):
        dtype = np.dtype(dtype).type
        if dtype is np.float64:
            itype, bias, mant, floor_arg, degree, as_float = (
                np.int64, 1023, 52, -708.0, 13, _bits_as_f64)
        elif dtype is np.float32:
            itype, bias, mant, floor_arg, degree, as_float = (
                np.int32, 127, 23, -87.0, 7, _bits_as_f32)
        else:
            raise TypeError(f"unsupported dtype {dtype!r}")
        self.dtype = dtype
        self.exp = _build_exp(dtype, itype, bias, mant, floor_arg, degree, as_float)
        (self.loglik_slice, self.lanes_slice, self.combine_slice,
         self.integral_terms, self.exp_array) = _build_kernels(dtype, self.exp)


def _build_exp(ftype, itype, bias, mant, floor_arg, degree, as_float):
    poly = _horner(ftype, degree)
    log2e = ftype(1.0 / math.log(2.0))
    ln2_hi = ftype(0.693145751953125)
    ln2_lo = ftype(1.42860682030941723212e-6)
    half = ftype(0.5)
    zero = ftype(0.0)
    lowest = ftype(floor_arg)
    ibias = itype(bias)
    imant = itype(mant)

    @njit(inline="always", fastmath=_FASTMATH)
    def fast_exp(v):
        # arguments below the normal range flush to zero
        under = v < lowest
        v = v if v > lowest else lowest
        k = np.floor(v * log2e + half)
        r = v - k * ln2_hi - k * ln2_lo
        e = poly(r) * as_float((itype(k) + ibias) << imant)
        return zero if under else e

    return fast_exp


def _build_kernels(ftype, fast_exp):
    W = LANES
    half = ftype(0.5)
    zero = ftype(0.0)
    one = ftype(1.0)
    rsqrt2 = ftype(1.0 / math.sqrt(2.0))

    @njit(inline="always", fastmath=_FASTMATH)
    def lane_rows(times, lon, lat, scale, i, tau_prec, omega, prec2,
                  do_bg, do_tr, bg, tr):
        n = times.shape[0]
        ti = times[i]
        xi = lon[i]
        yi = lat[i]
        if do_bg:
            bg[:] = zero
            for blk in range(0, n, W):
                m = min(W, n - blk)
                for l in range(m):
                    tj = times[blk + l]
                    z = (ti - tj) * tau_prec
                    e = fast_exp(-half * z * z)
                    bg[l] += e if tj != ti else zero
        if do_tr:
            tr[:] = zero
            # sorted times: strict predecessors are exactly j < first tie of ti
            lo = np.searchsorted(times, ti)
            for blk in range(0, lo, W):
                m = min(W, lo - blk)
                for l in range(m):
                    j = blk + l
                    dx = xi - lon[j]
                    dy = yi - lat[j]
                    p = prec2 * scale[j]
                    a = half * (dx * dx + dy * dy)
                    tr[l] += scale[j] * fast_exp(-omega * (ti - times[j]) - a * p)

    @njit(inline="always", fastmath=_FASTMATH)
    def log_rate(bg, tr, w_bg, w_tr, part):
        # running maximum, normalise, sum, then log(max) + log(sum); float64
        # here because 1e-40 is subnormal in float32 and 1/1e-40 overflows
        wb = np.float64(w_bg)
        wt = np.float64(w_tr)
        mx = CLIP
        for l in range(W):
            p = wb * np.float64(bg[l]) + wt * np.float64(tr[l])
            part[l] = p
            mx = max(mx, p)
        s = 0.0
        for l in range(W):
            s += part[l] / mx
        s = max(s, CLIP / mx)
        return math.log(mx) + math.log(s)

    @njit(inline="always")
    def integral(t, t_last, mu0, tau_prec, xi0, omega):
        upper = half * math.erfc(-(t_last - t) * tau_prec * rsqrt2)
        lower = half * math.erfc(t * tau_prec * rsqrt2)
        return mu0 * (upper - lower) + xi0 * (one - math.exp(-omega * (t_last - t)))

    @njit(nogil=True, fastmath=_FASTMATH, error_model="numpy")
    def loglik_slice(times, lon, lat, scale, start, stop, c, out):
        # c = (w_bg, w_tr, tau_prec, omega, prec2, mu0, xi0)
        bg = np.zeros(W, ftype)
        tr = np.zeros(W, ftype)
        part = np.empty(W, np.float64)
        t_last = times[times.shape[0] - 1]
        for i in range(start, stop):
            lane_rows(times, lon, lat, scale, i, c[2], c[3], c[4], True, True, bg, tr)
            out[i] = (log_rate(bg, tr, c[0], c[1], part)
                      - integral(times[i], t_last, c[5], c[2], c[6], c[3]))

    @njit(nogil=True, fastmath=_FASTMATH, error_model="numpy")
    def lanes_slice(times, lon, lat, scale, start, stop, tau_prec, omega, prec2,
                    do_bg, do_tr, BG, TR):
        for i in range(start, stop):
            lane_rows(times, lon, lat, scale, i, tau_prec, omega, prec2,
                      do_bg, do_tr, BG[i], TR[i])

    @njit(nogil=True, fastmath=_FASTMATH, error_model="numpy")
    def combine_slice(BG, TR, times, start, stop, c, out):
        part = np.empty(W, np.float64)
        t_last = times[times.shape[0] - 1]
        for i in range(start, stop):
            out[i] = (log_rate(BG[i], TR[i], c[0], c[1], part)
                      - integral(times[i], t_last, c[5], c[2], c[6], c[3]))

    @njit(nogil=True)
    def integral_terms(times, mu0, tau_prec, xi0, omega):
        out = np.empty_like(times)
        t_last = times[times.shape[0] - 1]
        for i in range(times.shape[0]):
            out[i] = integral(times[i], t_last, mu0, tau_prec, xi0, omega)
        return out

    @njit(fastmath=_FASTMATH)
    def exp_array(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            out[i] = fast_exp(x[i])
        return out

    return loglik_slice, lanes_slice, combine_slice, integral_terms, exp_array


_KERNELS = {}


def kernels(dtype):
    """Return the (lazily compiled) kernel set for ``dtype``."""
    key = np.dtype(dtype).name
    if key not in _KERNELS:
        _KERNELS[key] = KernelSet(dtype)
    return _KERNELS[key]


@njit(nogil=True)
def ordered_sum(values, start, stop):
    """Sum ``values[start:stop]`` in ascending index order, in float64."""
    s = 0.0
    for i in range(start, stop):
        s += values[i]
    return s
