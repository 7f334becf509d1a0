"""Dense-array layer kernel with reverse-mode gradients.

Implements exactly the layer set the action-value network needs: strided
convolution, transposed convolution, 2x2 max pooling, nearest-neighbor x2
upsampling, fully connected, and the rectifier. Arrays are numpy ndarrays in
(batch, channels, height, width) row-major layout. Forward passes cache what
their backward pass needs; backward passes return the input gradient and
accumulate parameter gradients in place.

Convolutions are evaluated as k*k strided einsums rather than im2col; at the
map sizes this toolkit targets that is both fast and easy to audit.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError


def _pair(value) -> tuple[int, int]:
    if np.isscalar(value):
        return (int(value), int(value))
    a, b = value
    return (int(a), int(b))


class Layer:
    """Base layer: parameter-free unless a subclass defines params/grads."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def spec(self) -> dict:
        raise NotImplementedError


class Conv2D(Layer):
    """Strided cross-correlation with zero padding.

    Output spatial size per axis: floor((H + 2*pad - kernel) / stride) + 1.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0,
                 rng=None, dtype=np.float32):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.pad = _pair(pad)
        if self.kernel < 1 or self.stride < 1:
            raise ShapeMismatchError("kernel and stride must be >= 1")
        rng = rng or np.random.default_rng(0)
        fan_in = self.in_channels * self.kernel * self.kernel
        scale = 1.0 / np.sqrt(fan_in)
        self.weight = rng.uniform(
            -scale, scale, size=(self.out_channels, self.in_channels, self.kernel, self.kernel)
        ).astype(dtype)
        self.bias = np.zeros(self.out_channels, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def out_size(self, size: tuple[int, int]) -> tuple[int, int]:
        k, s = self.kernel, self.stride
        (ph, pw) = self.pad
        h, w = size
        if h + 2 * ph < k or w + 2 * pw < k:
            raise ShapeMismatchError(
                f"input {size} too small for kernel {k} with padding {self.pad}"
            )
        return ((h + 2 * ph - k) // s + 1, (w + 2 * pw - k) // s + 1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatchError(
                f"expected (B, {self.in_channels}, H, W) input, got {x.shape}"
            )
        b, _, h, w = x.shape
        ho, wo = self.out_size((h, w))
        ph, pw = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        out = np.zeros((b, self.out_channels, ho, wo), dtype=x.dtype)
        k, s = self.kernel, self.stride
        for ki in range(k):
            for kj in range(k):
                patch = xp[:, :, ki : ki + ho * s : s, kj : kj + wo * s : s]
                out += np.einsum("bihw,oi->bohw", patch, self.weight[:, :, ki, kj])
        out += self.bias[None, :, None, None]
        self._cache = (xp, x.shape, (ho, wo))
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xp, x_shape, (ho, wo) = self._cache
        if grad_out.shape != (x_shape[0], self.out_channels, ho, wo):
            raise ShapeMismatchError(f"bad grad shape {grad_out.shape}")
        k, s = self.kernel, self.stride
        ph, pw = self.pad
        grad_xp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                patch = xp[:, :, ki : ki + ho * s : s, kj : kj + wo * s : s]
                self.grad_weight[:, :, ki, kj] += np.einsum("bohw,bihw->oi", grad_out, patch)
                grad_xp[:, :, ki : ki + ho * s : s, kj : kj + wo * s : s] += np.einsum(
                    "bohw,oi->bihw", grad_out, self.weight[:, :, ki, kj]
                )
        self.grad_bias += grad_out.sum(axis=(0, 2, 3))
        h, w = x_shape[2], x_shape[3]
        return grad_xp[:, :, ph : ph + h, pw : pw + w]

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]

    def spec(self):
        return {
            "kind": "conv",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": list(self.pad),
        }


class Deconv2D(Layer):
    """Transposed convolution, the shape inverse of a paired Conv2D.

    Output spatial size per axis: (H - 1)*stride - 2*pad + kernel + out_pad,
    where out_pad < stride recovers sizes the paired convolution floored away.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0,
                 out_pad=0, rng=None, dtype=np.float32):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.pad = _pair(pad)
        self.out_pad = _pair(out_pad)
        if self.kernel < 1 or self.stride < 1:
            raise ShapeMismatchError("kernel and stride must be >= 1")
        if any(op >= self.stride + max(self.kernel - 1, 0) + 1 for op in self.out_pad):
            raise ShapeMismatchError("out_pad too large")
        rng = rng or np.random.default_rng(0)
        fan_in = self.in_channels * self.kernel * self.kernel
        scale = 1.0 / np.sqrt(fan_in)
        self.weight = rng.uniform(
            -scale, scale, size=(self.in_channels, self.out_channels, self.kernel, self.kernel)
        ).astype(dtype)
        self.bias = np.zeros(self.out_channels, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def out_size(self, size: tuple[int, int]) -> tuple[int, int]:
        h, w = size
        k, s = self.kernel, self.stride
        (ph, pw), (oh, ow) = self.pad, self.out_pad
        res = ((h - 1) * s + k + oh - 2 * ph, (w - 1) * s + k + ow - 2 * pw)
        if res[0] < 1 or res[1] < 1:
            raise ShapeMismatchError(f"deconv output collapses for input {size}")
        return res

    def _canvas_size(self, h: int, w: int) -> tuple[int, int]:
        k, s = self.kernel, self.stride
        (oh, ow) = self.out_pad
        return ((h - 1) * s + k + oh, (w - 1) * s + k + ow)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatchError(
                f"expected (B, {self.in_channels}, H, W) input, got {x.shape}"
            )
        b, _, h, w = x.shape
        k, s = self.kernel, self.stride
        ph, pw = self.pad
        ch, cw = self._canvas_size(h, w)
        canvas = np.zeros((b, self.out_channels, ch, cw), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                canvas[:, :, ki : ki + h * s : s, kj : kj + w * s : s] += np.einsum(
                    "bihw,io->bohw", x, self.weight[:, :, ki, kj]
                )
        ho, wo = self.out_size((h, w))
        out = canvas[:, :, ph : ph + ho, pw : pw + wo]
        out = out + self.bias[None, :, None, None]
        self._cache = (x, (ch, cw), (ho, wo))
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, (ch, cw), (ho, wo) = self._cache
        b, _, h, w = x.shape
        if grad_out.shape != (b, self.out_channels, ho, wo):
            raise ShapeMismatchError(f"bad grad shape {grad_out.shape}")
        k, s = self.kernel, self.stride
        ph, pw = self.pad
        grad_canvas = np.zeros((b, self.out_channels, ch, cw), dtype=grad_out.dtype)
        grad_canvas[:, :, ph : ph + ho, pw : pw + wo] = grad_out
        grad_x = np.zeros_like(x)
        for ki in range(k):
            for kj in range(k):
                patch = grad_canvas[:, :, ki : ki + h * s : s, kj : kj + w * s : s]
                grad_x += np.einsum("bohw,io->bihw", patch, self.weight[:, :, ki, kj])
                self.grad_weight[:, :, ki, kj] += np.einsum("bihw,bohw->io", x, patch)
        self.grad_bias += grad_out.sum(axis=(0, 2, 3))
        return grad_x

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]

    def spec(self):
        return {
            "kind": "deconv",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": list(self.pad),
            "out_pad": list(self.out_pad),
        }


class MaxPool2(Layer):
    """2x2 max pooling with stride 2.

    Odd trailing rows/columns are dropped (floor semantics). Ties within a
    window route the gradient to the first element in row-major window
    order, keeping backward deterministic.
    """

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        if ho < 1 or wo < 1:
            raise ShapeMismatchError(f"input {x.shape} too small for 2x2 pooling")
        windows = (
            x[:, :, : ho * 2, : wo * 2]
            .reshape(b, c, ho, 2, wo, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, ho, wo, 4)
        )
        argmax = windows.argmax(axis=-1)  # first max index: row-major tie-break
        out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, argmax)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_shape, argmax = self._cache
        b, c, h, w = x_shape
        ho, wo = h // 2, w // 2
        if grad_out.shape != (b, c, ho, wo):
            raise ShapeMismatchError(f"bad grad shape {grad_out.shape}")
        grad_windows = np.zeros((b, c, ho, wo, 4), dtype=grad_out.dtype)
        np.put_along_axis(grad_windows, argmax[..., None], grad_out[..., None], axis=-1)
        grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
        grad_x[:, :, : ho * 2, : wo * 2] = (
            grad_windows.reshape(b, c, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, ho * 2, wo * 2)
        )
        return grad_x

    def spec(self):
        return {"kind": "maxpool"}


class Upsample2(Layer):
    """Nearest-neighbor x2 upsampling; backward sums each 2x2 block."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x.shape
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        b, c, h, w = self._cache
        if grad_out.shape != (b, c, h * 2, w * 2):
            raise ShapeMismatchError(f"bad grad shape {grad_out.shape}")
        return grad_out.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5))

    def spec(self):
        return {"kind": "upsample"}


class Dense(Layer):
    """Fully connected layer.

    Accepts any (B, ...) input and flattens trailing dims to in_features.
    When out_shape is given the output is reshaped to (B, *out_shape), which
    lets a dense layer feed the deconvolution stack directly.
    """

    def __init__(self, in_features, out_features, out_shape=None, rng=None,
                 dtype=np.float32):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.out_shape = tuple(int(v) for v in out_shape) if out_shape else None
        if self.out_shape is not None and int(np.prod(self.out_shape)) != self.out_features:
            raise ShapeMismatchError("out_shape must multiply out to out_features")
        rng = rng or np.random.default_rng(0)
        scale = 1.0 / np.sqrt(self.in_features)
        self.weight = rng.uniform(
            -scale, scale, size=(self.in_features, self.out_features)
        ).astype(dtype)
        self.bias = np.zeros(self.out_features, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        flat = x.reshape(b, -1)
        if flat.shape[1] != self.in_features:
            raise ShapeMismatchError(
                f"expected {self.in_features} features, got {flat.shape[1]}"
            )
        out = flat @ self.weight + self.bias
        self._cache = (flat, x.shape)
        if self.out_shape is not None:
            out = out.reshape(b, *self.out_shape)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        flat, x_shape = self._cache
        b = flat.shape[0]
        grad_flat_out = grad_out.reshape(b, self.out_features)
        self.grad_weight += flat.T @ grad_flat_out
        self.grad_bias += grad_flat_out.sum(axis=0)
        return (grad_flat_out @ self.weight.T).reshape(x_shape)

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]

    def spec(self):
        return {
            "kind": "dense",
            "in_features": self.in_features,
            "out_features": self.out_features,
            "out_shape": list(self.out_shape) if self.out_shape else None,
        }


class ReLU(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if grad_out.shape != self._mask.shape:
            raise ShapeMismatchError(f"bad grad shape {grad_out.shape}")
        return grad_out * self._mask

    def spec(self):
        return {"kind": "relu"}


LAYER_KINDS = {
    "conv": Conv2D,
    "deconv": Deconv2D,
    "maxpool": MaxPool2,
    "upsample": Upsample2,
    "dense": Dense,
    "relu": ReLU,
}


def layer_from_spec(spec: dict, dtype=np.float32) -> Layer:
    kind = spec["kind"]
    if kind == "conv":
        return Conv2D(spec["in_channels"], spec["out_channels"], spec["kernel"],
                      spec["stride"], tuple(spec["pad"]), dtype=dtype)
    if kind == "deconv":
        return Deconv2D(spec["in_channels"], spec["out_channels"], spec["kernel"],
                        spec["stride"], tuple(spec["pad"]), tuple(spec["out_pad"]),
                        dtype=dtype)
    if kind == "maxpool":
        return MaxPool2()
    if kind == "upsample":
        return Upsample2()
    if kind == "dense":
        shape = spec.get("out_shape")
        return Dense(spec["in_features"], spec["out_features"],
                     tuple(shape) if shape else None, dtype=dtype)
    if kind == "relu":
        return ReLU()
    raise ShapeMismatchError(f"unknown layer kind {kind!r}")


class Network:
    """A plain sequential stack of layers sharing one dtype."""

    def __init__(self, layers: list[Layer], dtype=np.float32):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out)
            assert np.isfinite(out).all(), f"non-finite forward output in {layer}"
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad_out, dtype=self.dtype)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
            assert np.isfinite(grad).all(), f"non-finite gradient in {layer}"
        return grad

    def parameters(self) -> list[np.ndarray]:
        found = []
        for layer in self.layers:
            found.extend(layer.params())
        return found

    def gradients(self) -> list[np.ndarray]:
        found = []
        for layer in self.layers:
            found.extend(layer.grads())
        return found

    def zero_gradients(self) -> None:
        for grad in self.gradients():
            grad[...] = 0

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def copy(self) -> "Network":
        clone = Network([layer_from_spec(s, dtype=self.dtype) for s in self.layer_specs()],
                        dtype=self.dtype)
        clone.set_parameters_from(self)
        return clone

    def set_parameters_from(self, other: "Network") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            if mine.shape != theirs.shape:
                raise ShapeMismatchError("parameter shapes differ")
            mine[...] = theirs
