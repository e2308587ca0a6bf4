"""Dense semi-supervised VAE and its two ablations.

SS: encoder trunk -> (mu, log_var, pi); decoder reads pi ++ z.
ES: encoder trunk -> pi only (plain classifier).
EU: encoder trunk -> (mu, log_var); decoder reads z (plain VAE).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import VariantError
from .tensor import Tensor

VARIANTS = ("SS", "ES", "EU")
LOG_VAR_BOUND = 10.0


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "SS"
    input_dim: int = 784
    encoder_widths: tuple[int, ...] = (1024, 1024)
    latent_dim: int = 2
    # one int per softmax head; an int means a single head
    num_classes: int | tuple[int, ...] = 10
    decoder_widths: tuple[int, ...] = (1024, 1024)
    pi_to_decoder: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise VariantError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))
        if not isinstance(self.num_classes, int):
            object.__setattr__(self, "num_classes", tuple(int(c) for c in self.num_classes))
        dims = [self.input_dim, self.latent_dim, *self.encoder_widths, *self.decoder_widths, *self.head_sizes]
        if any(d <= 0 for d in dims):
            raise ValueError(f"all widths must be positive: {self}")

    @property
    def head_sizes(self) -> tuple[int, ...]:
        if isinstance(self.num_classes, int):
            return (self.num_classes,)
        return self.num_classes

    @property
    def has_pi(self) -> bool:
        return self.variant in ("SS", "ES")

    @property
    def has_latent(self) -> bool:
        return self.variant in ("SS", "EU")

    @property
    def has_decoder(self) -> bool:
        return self.has_latent

    @property
    def feeds_pi(self) -> bool:
        return self.variant == "SS" and self.pi_to_decoder

    @property
    def decoder_input_dim(self) -> int:
        return self.latent_dim + (sum(self.head_sizes) if self.feeds_pi else 0)

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter names and shapes, in checkpoint order."""
        shapes: list[tuple[str, tuple[int, ...]]] = []

        def dense(name, fan_in, fan_out):
            shapes.append((f"{name}.weight", (fan_in, fan_out)))
            shapes.append((f"{name}.bias", (fan_out,)))

        prev = self.input_dim
        for i, w in enumerate(self.encoder_widths):
            dense(f"enc{i}", prev, w)
            prev = w
        trunk = prev
        if self.has_latent:
            dense("mu", trunk, self.latent_dim)
            dense("logvar", trunk, self.latent_dim)
        if self.has_pi:
            for h, c in enumerate(self.head_sizes):
                dense(f"pi{h}", trunk, c)
        if self.has_decoder:
            prev = self.decoder_input_dim
            for i, w in enumerate(self.decoder_widths):
                dense(f"dec{i}", prev, w)
                prev = w
            dense("out", prev, self.input_dim)
        return shapes


@dataclass
class ForwardOutputs:
    pi_heads: list[Tensor] | None
    mu: Tensor | None
    log_var: Tensor | None
    z: Tensor | None
    x_recon: Tensor | None

    @property
    def pi(self) -> Tensor | None:
        if self.pi_heads is None:
            return None
        if len(self.pi_heads) == 1:
            return self.pi_heads[0]
        return T.concat(self.pi_heads, axis=1)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class SsVaeModel:
    spec: ModelSpec
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def initialize(cls, spec: ModelSpec, rng: np.random.Generator | int = 0, dtype=np.float32) -> "SsVaeModel":
        rng = np.random.default_rng(rng)
        params = {}
        for name, shape in spec.param_shapes():
            if name.endswith(".weight"):
                data = glorot_uniform(rng, *shape, dtype=dtype)
            else:
                data = np.zeros(shape, dtype=dtype)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return cls(spec, params)

    @classmethod
    def zeros(cls, spec: ModelSpec, dtype=np.float32) -> "SsVaeModel":
        params = {
            name: Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)
            for name, shape in spec.param_shapes()
        }
        return cls(spec, params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def copy(self, dtype=None) -> "SsVaeModel":
        dtype = dtype or self.dtype
        params = {
            k: Tensor(v.data.astype(dtype, copy=True), requires_grad=True, name=k) for k, v in self.params.items()
        }
        return SsVaeModel(self.spec, params)

    def derive(self, variant: str, rng: np.random.Generator | int | None = None) -> "SsVaeModel":
        """Model of ``variant`` reusing every parameter shared with this one.

        Parameters the source lacks (e.g. pi heads when going EU -> SS) are
        zero, or freshly initialized when ``rng`` is given.  Decoder input rows
        fed by pi always start at zero, so the derived SS model initially
        decodes exactly like its EU source.
        """
        spec = replace(self.spec, variant=variant)
        if rng is None:
            out = SsVaeModel.zeros(spec, dtype=self.dtype)
        else:
            out = SsVaeModel.initialize(spec, rng, dtype=self.dtype)
        first_dec = "dec0.weight" if spec.decoder_widths else "out.weight"
        z_rows = spec.latent_dim
        for name, p in out.params.items():
            src = self.params.get(name)
            if name == first_dec and src is not None and src.shape != p.shape:
                if src.shape[1] != p.shape[1]:
                    raise VariantError(f"cannot derive {variant}: {name} {src.shape} vs {p.shape}")
                p.data[...] = 0
                p.data[-z_rows:] = src.data[-z_rows:]
            elif src is not None:
                if src.shape != p.shape:
                    raise VariantError(f"cannot derive {variant}: {name} {src.shape} vs {p.shape}")
                p.data[...] = src.data
        return out

    def _dense(self, name: str, x: Tensor) -> Tensor:
        return T.matmul(x, self.params[f"{name}.weight"]) + self.params[f"{name}.bias"]

    def _as_input(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x, dtype=self.dtype))

    def trunk(self, x) -> Tensor:
        h = self._as_input(x)
        if h.data.ndim != 2 or h.shape[1] != self.spec.input_dim:
            raise T.DimensionError(f"expected input of shape (batch, {self.spec.input_dim}), got {h.shape}")
        for i in range(len(self.spec.encoder_widths)):
            h = T.relu(self._dense(f"enc{i}", h))
        return h

    def encode(self, x) -> tuple[Tensor | None, Tensor | None, list[Tensor] | None]:
        """Shared trunk, then the heads this variant has: (mu, log_var, pi_heads)."""
        h = self.trunk(x)
        mu = log_var = pis = None
        if self.spec.has_latent:
            mu = self._dense("mu", h)
            log_var = T.clip(self._dense("logvar", h), -LOG_VAR_BOUND, LOG_VAR_BOUND)
        if self.spec.has_pi:
            pis = [T.softmax(self._dense(f"pi{k}", h)) for k in range(len(self.spec.head_sizes))]
        return mu, log_var, pis

    def encode_latent(self, x) -> tuple[Tensor, Tensor]:
        if not self.spec.has_latent:
            raise VariantError(f"{self.spec.variant} model has no latent heads")
        mu, log_var, _ = self.encode(x)
        return mu, log_var

    def classify(self, x) -> Tensor:
        """Class probabilities of the first (or only) pi head."""
        if not self.spec.has_pi:
            raise VariantError(f"{self.spec.variant} model has no pi head")
        return self.encode(x)[2][0]

    def decode(self, pi, z: Tensor) -> Tensor:
        if not self.spec.has_decoder:
            raise VariantError(f"{self.spec.variant} model has no decoder")
        if self.spec.feeds_pi:
            if pi is None:
                raise VariantError("SS decoder needs pi alongside z")
            heads = pi if isinstance(pi, (list, tuple)) else [pi]
            h = T.concat([self._as_input(p) for p in heads] + [self._as_input(z)], axis=1)
        else:
            h = self._as_input(z)
        for i in range(len(self.spec.decoder_widths)):
            h = T.relu(self._dense(f"dec{i}", h))
        return T.sigmoid(self._dense("out", h))

    def forward(
        self,
        x,
        rng: np.random.Generator | int | None = None,
        deterministic: bool = False,
        teacher_labels: np.ndarray | None = None,
    ) -> ForwardOutputs:
        """Full pass. ``deterministic`` uses z = mu; otherwise one sample of z.

        ``teacher_labels`` (n,) or (n, heads), -1 for unlabeled: labeled rows
        feed their one-hot label to the decoder instead of the predicted pi.
        """
        mu, log_var, pis = self.encode(x)
        if not self.spec.has_decoder:
            return ForwardOutputs(pis, None, None, None, None)
        z = mu if deterministic else reparameterize(mu, log_var, rng)
        dec_pi = pis
        if teacher_labels is not None and pis is not None:
            dec_pi = _teacher_force(pis, teacher_labels, self.spec.head_sizes)
        x_recon = self.decode(dec_pi, z)
        return ForwardOutputs(pis, mu, log_var, z, x_recon)


def reparameterize(mu: Tensor, log_var: Tensor, rng: np.random.Generator | int | None = None) -> Tensor:
    """z = mu + exp(log_var / 2) * eps, eps ~ N(0, I); eps carries no gradient."""
    if mu.shape != log_var.shape:
        raise T.DimensionError(f"reparameterize: mu {mu.shape} vs log_var {log_var.shape}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    eps = Tensor(rng.standard_normal(mu.shape, dtype=np.float64).astype(mu.dtype))
    return mu + T.exp(log_var * 0.5) * eps


def _teacher_force(pis: list[Tensor], labels: np.ndarray, head_sizes) -> list[Tensor]:
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    out = []
    for k, (p, c) in enumerate(zip(pis, head_sizes)):
        lab = labels[:, k]
        known = (lab >= 0)[:, None].astype(p.dtype)
        onehot = np.zeros(p.shape, dtype=p.dtype)
        rows = np.flatnonzero(lab >= 0)
        onehot[rows, lab[rows]] = 1.0
        out.append(p * Tensor(1.0 - known) + Tensor(onehot))
    return out
