"""
autodiff.py

Matrizes densas (float64) com diferenciação em modo reverso.

Cada operação grava na fita ativa (Tape) a saída, os pais e uma função
vetor-Jacobiano por pai. `backward` percorre a fita de trás para frente
e acumula os gradientes nos tensores-folha (os parâmetros).
"""

from __future__ import annotations

import logging
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from dygcl.errors import DimensionError, NumericError, UsageError

logger = logging.getLogger(__name__)

COSINE_EPS = 1e-8

_ACTIVE_TAPE: ContextVar["Tape | None"] = ContextVar("active_tape", default=None)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensores são matrizes 2-D, recebido ndim={arr.ndim}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() exige tensor escalar, formato recebido {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    out: Tensor
    parents: tuple[Tensor, ...]
    vjps: tuple[Callable[[np.ndarray], np.ndarray], ...]
    op: str


@dataclass
class Tape:
    """Lista de operações em ordem de execução; válida numa única linha de execução."""

    records: list[_Record] = field(default_factory=list)
    _token: object = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)


def _emit(value: np.ndarray, parents: Sequence[Tensor], vjps: Sequence[Callable], op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"resultado não finito em {op}")
    out = Tensor.__new__(Tensor)
    out.data = value
    out.grad = None
    out.name = None
    out.requires_grad = False
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.records.append(_Record(out, tuple(parents), tuple(vjps), op))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: formatos {a.shape} e {b.shape} diferem")


# ----------------------------------------------------
# PRIMITIVAS
# ----------------------------------------------------
def matmul(x: Tensor, w: Tensor) -> Tensor:
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"matmul: {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data
    return _emit(xd @ wd, (x, w), (lambda g: g @ wd.T, lambda g: xd.T @ g), "matmul")


def spmm(adj, h: Tensor) -> Tensor:
    """Matriz esparsa constante (NormalizedAdjacency ou CSR) vezes tensor denso."""
    mat = adj.matrix if hasattr(adj, "matrix") else adj
    if not sp.issparse(mat):
        mat = sp.csr_matrix(mat)
    if mat.shape[1] != h.shape[0]:
        raise DimensionError(f"spmm: adjacência {mat.shape} vs features {h.shape}")
    mat_t = mat.T.tocsr()
    return _emit(np.asarray(mat @ h.data), (h,), (lambda g: np.asarray(mat_t @ g),), "spmm")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _emit(a.data + b.data, (a, b), (lambda g: g, lambda g: g), "add")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if b.shape != (1, x.shape[1]):
        raise DimensionError(f"add_bias: viés {b.shape} para entrada {x.shape}")
    return _emit(x.data + b.data, (x, b), (lambda g: g, lambda g: g.sum(axis=0, keepdims=True)), "add_bias")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), (lambda g: g * bd, lambda g: g * ad), "mul")


def affine(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale·x + shift com escalares constantes."""
    return _emit(scale * x.data + shift, (x,), (lambda g: scale * g,), "affine")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit(y, (x,), (lambda g: g * (1.0 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # forma estável nos dois sinais
    z = x.data
    y = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return _emit(y, (x,), (lambda g: g * y * (1.0 - y),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0.0), (x,), (lambda g: g * mask,), "relu")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise UsageError(f"ativação desconhecida '{kind}'")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Dropout invertido; identidade fora do treino (rng None) ou com taxa zero."""
    if rng is None or rate <= 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit(x.data * mask, (x,), (lambda g: g * mask,), "dropout")


def concat_cols(x: Tensor, y: Tensor) -> Tensor:
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"concat_cols: {x.shape[0]} e {y.shape[0]} linhas")
    a = x.shape[1]
    return _emit(np.hstack([x.data, y.data]), (x, y), (lambda g: g[:, :a], lambda g: g[:, a:]), "concat_cols")


def row_mean(h: Tensor) -> Tensor:
    n = h.shape[0]
    if n == 0:
        raise DimensionError("row_mean de matriz vazia")
    return _emit(h.data.mean(axis=0, keepdims=True), (h,), (lambda g: np.repeat(g / n, n, axis=0),), "row_mean")


def col_max(h: Tensor) -> Tensor:
    """Máximo por coluna; o gradiente vai para a primeira linha de argmax."""
    if h.shape[0] == 0:
        raise DimensionError("col_max de matriz vazia")
    rows = np.argmax(h.data, axis=0)
    cols = np.arange(h.shape[1])
    shape = h.shape

    def vjp(g):
        out = np.zeros(shape)
        out[rows, cols] = g[0]
        return out

    return _emit(h.data[rows, cols].reshape(1, -1), (h,), (vjp,), "col_max")


def gather_rows(h: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= h.shape[0]):
        raise DimensionError(f"gather_rows: índice fora de {h.shape[0]} linhas")
    shape = h.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return _emit(h.data[idx], (h,), (vjp,), "gather_rows")


def scale_rows(h: Tensor, s: Tensor) -> Tensor:
    if s.shape != (h.shape[0], 1):
        raise DimensionError(f"scale_rows: escala {s.shape} para entrada {h.shape}")
    hd, sd = h.data, s.data
    return _emit(hd * sd, (h, s), (lambda g: g * sd, lambda g: (g * hd).sum(axis=1, keepdims=True)), "scale_rows")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    factor = np.where(mask, 1.0, slope)
    return _emit(x.data * factor, (x,), (lambda g: g * factor,), "leaky_relu")


def scatter_add_rows(x: Tensor, idx, n: int) -> Tensor:
    """out[i] = Σ x[e] para idx[e] = i; inverso de gather_rows."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != (x.shape[0],):
        raise DimensionError(f"scatter_add_rows: {idx.shape[0]} índices para {x.shape[0]} linhas")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DimensionError(f"scatter_add_rows: índice fora de {n} linhas")
    out = np.zeros((n, x.shape[1]))
    np.add.at(out, idx, x.data)
    return _emit(out, (x,), (lambda g: g[idx],), "scatter_add_rows")


def segment_softmax(e: Tensor, segments, n: int) -> Tensor:
    """Softmax de uma coluna E × 1 separadamente dentro de cada segmento."""
    seg = np.asarray(segments, dtype=np.int64)
    if e.shape != (seg.size, 1):
        raise DimensionError(f"segment_softmax: escores {e.shape} para {seg.size} arestas")
    top = np.full(n, -np.inf)
    np.maximum.at(top, seg, e.data[:, 0])
    ex = np.exp(e.data[:, 0] - top[seg])
    total = np.zeros(n)
    np.add.at(total, seg, ex)
    y = (ex / total[seg]).reshape(-1, 1)

    def vjp(g):
        inner = np.zeros(n)
        np.add.at(inner, seg, (g * y)[:, 0])
        return y * (g - inner[seg].reshape(-1, 1))

    return _emit(y, (e,), (vjp,), "segment_softmax")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _emit(np.array([[x.data.sum()]]), (x,), (lambda g: np.full(shape, g[0, 0]),), "sum_all")


def mean_of(items: Sequence[Tensor]) -> Tensor:
    """Média de tensores de mesmo formato, reduzidos em ordem fixa."""
    if not items:
        raise UsageError("mean_of exige ao menos um tensor")
    n = len(items)
    total = np.zeros(items[0].shape)
    for t in items:
        _same_shape(items[0], t, "mean_of")
        total = total + t.data
    return _emit(total / n, tuple(items), tuple((lambda g: g / n) for _ in items), "mean_of")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return _emit(np.clip(x.data, lo, hi), (x,), (lambda g: g * inside,), "clamp")


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """a·b / max(‖a‖·‖b‖, ε); abaixo de ε o denominador fica constante."""
    if a.shape[0] != 1 or a.shape != b.shape:
        raise DimensionError(f"cosine_similarity: formatos {a.shape} e {b.shape}")
    ad, bd = a.data, b.data
    na, nb = float(np.linalg.norm(ad)), float(np.linalg.norm(bd))
    dot = float((ad * bd).sum())
    if na * nb <= COSINE_EPS:
        return _emit(
            np.array([[dot / COSINE_EPS]]),
            (a, b),
            (lambda g: g[0, 0] * bd / COSINE_EPS, lambda g: g[0, 0] * ad / COSINE_EPS),
            "cosine_similarity",
        )
    c = dot / (na * nb)
    return _emit(
        np.array([[min(1.0, max(-1.0, c))]]),
        (a, b),
        (
            lambda g: g[0, 0] * (bd / (na * nb) - c * ad / (na * na)),
            lambda g: g[0, 0] * (ad / (na * nb) - c * bd / (nb * nb)),
        ),
        "cosine_similarity",
    )


def binary_cross_entropy(p: Tensor, y: float) -> Tensor:
    if p.shape != (1, 1):
        raise DimensionError(f"binary_cross_entropy espera probabilidade 1×1, recebido {p.shape}")
    q = p.item()
    if not 0.0 < q < 1.0:
        raise NumericError(f"probabilidade {q} fora de (0, 1)")
    value = -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))
    slope = -(y / q) + (1.0 - y) / (1.0 - q)
    return _emit(np.array([[value]]), (p,), (lambda g: g * slope,), "binary_cross_entropy")


# ----------------------------------------------------
# RETROPROPAGAÇÃO
# ----------------------------------------------------
def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """
    Acumula dLoss/dθ em `.grad` de cada folha com requires_grad.
    Chamadas repetidas sem zerar acumulam.
    """
    if loss.shape != (1, 1):
        raise UsageError(f"backward exige perda escalar, formato recebido {loss.shape}")
    tape = tape if tape is not None else _ACTIVE_TAPE.get()
    records = tape.records if tape is not None else []
    produced = {id(r.out) for r in records}

    if not loss.requires_grad:
        return
    if id(loss) not in produced:
        loss.grad = np.ones((1, 1)) if loss.grad is None else loss.grad + 1.0
        return

    pending: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for rec in reversed(records):
        g = pending.pop(id(rec.out), None)
        if g is None:
            continue
        for parent, vjp in zip(rec.parents, rec.vjps):
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            key = id(parent)
            if key in produced:
                pending[key] = contrib if key not in pending else pending[key] + contrib
            elif parent.grad is None:
                parent.grad = np.array(contrib, dtype=np.float64)
            else:
                parent.grad = parent.grad + contrib


# ----------------------------------------------------
# PARÂMETROS
# ----------------------------------------------------
class ParamStore:
    """Mapa nome → Tensor treinável; itera em ordem lexicográfica de nome."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise UsageError(f"parâmetro '{name}' registrado duas vezes")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def glorot(self, name: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    def uniform(self, name: str, rows: int, cols: int, limit: float, rng: np.random.Generator) -> Tensor:
        return self.add(name, rng.uniform(-limit, limit, size=(rows, cols)))

    def zeros(self, name: str, rows: int, cols: int) -> Tensor:
        return self.add(name, np.zeros((rows, cols)))

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise UsageError(f"parâmetro desconhecido '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._params))

    def items(self) -> list[tuple[str, Tensor]]:
        return [(n, self._params[n]) for n in sorted(self._params)]

    def size(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            raise UsageError("snapshot não corresponde aos parâmetros registrados")
        for name, arr in values.items():
            target = self._params[name]
            if arr.shape != target.shape:
                raise DimensionError(f"{name}: formato no snapshot {arr.shape} vs {target.shape}")
            target.data[...] = arr


# ----------------------------------------------------
# VERIFICAÇÃO POR DIFERENÇAS FINITAS
# ----------------------------------------------------
@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict[str, float]

    def by_module(self) -> dict[str, float]:
        """Maior erro por prefixo de nome (local, global, head, ...)."""
        out: dict[str, float] = {}
        for name, err in self.per_param.items():
            module = name.split(".", 1)[0]
            out[module] = max(out.get(module, 0.0), err)
        return out


def grad_check(f: Callable[[ParamStore], Tensor], params: ParamStore, eps: float = 1e-5) -> GradCheckReport:
    """
    Compara o gradiente analítico com (f(θ+εe_i) − f(θ−εe_i)) / 2ε em cada
    coordenada. Erro relativo = |a − n| / max(1, |a|, |n|).
    """
    params.zero_grad()
    with Tape() as tape:
        loss = f(params)
    backward(loss, tape)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape)) for name, t in params.items()
    }
    params.zero_grad()

    per_param: dict[str, float] = {}
    for name, t in params.items():
        worst = 0.0
        for i in range(t.data.size):
            orig = t.data.flat[i]
            t.data.flat[i] = orig + eps
            f_plus = f(params).item()
            t.data.flat[i] = orig - eps
            f_minus = f(params).item()
            t.data.flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].flat[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
        per_param[name] = worst
        logger.debug("gradcheck %s: %.3e", name, worst)
    return GradCheckReport(max(per_param.values(), default=0.0), per_param)
