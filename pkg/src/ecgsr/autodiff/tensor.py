"""Tensor type and the tape that drives reverse-mode accumulation.

Every differentiable operation produces a new :class:`Tensor` that remembers
its parent tensors and a closure mapping the output gradient to the parent
gradients. Tensors carry a monotonically increasing creation number, so the
set of ancestors of a root, sorted by that number, is already a topological
order: inputs always exist before the operations that consume them.
"""

from __future__ import annotations

import itertools

import numpy as np

_creation = itertools.count()


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.name = name
        self._parents = ()
        self._backward = None
        self._seq = next(_creation)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self):
        return self.data

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


def _not_scalar(t):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, parents, backward):
    """Wrap ``data`` as the output of an operation.

    ``backward(g)`` must return one gradient (or ``None``) per parent. The
    closure is only retained when some parent requires a gradient.
    """
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


class Tape:
    """Ordered record of the operations that contributed to a root tensor."""

    def __init__(self, nodes):
        self.nodes = list(nodes)

    @classmethod
    def trace(cls, root):
        seen = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if id(node) in seen or not node.requires_grad:
                continue
            seen[id(node)] = node
            stack.extend(node._parents)
        return cls(sorted(seen.values(), key=lambda n: n._seq))

    def __len__(self):
        return len(self.nodes)

    def backward(self, root):
        if root.data.size != 1:
            raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
        if not root.requires_grad:
            return
        if not self.nodes or self.nodes[-1] is not root:
            raise TapeError("root is not the final node of this tape")
        pending = {id(root): np.ones_like(root.data)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = node.grad + g if node.grad is not None else g.copy()
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._seq >= node._seq:
                    raise TapeError("parent visited after its consumer; tape order is broken")
                if pg.shape != parent.data.shape:
                    raise TapeError(
                        f"gradient shape {pg.shape} does not match tensor shape {parent.data.shape}"
                    )
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg


def backward(root, tape=None):
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every leaf that requires it."""
    tape = tape if tape is not None else Tape.trace(root)
    tape.backward(root)
    return tape
