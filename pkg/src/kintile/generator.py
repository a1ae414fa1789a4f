"""Resnet-style image-to-image generator with pluggable normalization.

The network is the standard CycleGAN generator recipe: a 7x7 stem
convolution, two stride-2 downsampling convolutions, a stack of residual
blocks, two stride-2 transposed convolutions, and a 7x7 output convolution
followed by tanh. Reflection padding is used at the 7x7 ends and inside
residual blocks (applied virtually inside conv2d, which is bit-identical to
padding first), zero padding in the resampling stages.

Every normalization site delegates to :mod:`kintile.normalize`, so the same
weights can run under full-image, patch-wise, thumbnail, or kernelized
instance normalization without any retraining or weight changes.

Canonical parameter names (see README for the container format):

    stem.conv.weight / .bias         (width, in_ch, 7, 7)
    down1.conv.weight / .bias        (2*width, width, 3, 3)
    down2.conv.weight / .bias        (4*width, 2*width, 3, 3)
    res{n}.conv1.weight / .bias      (4*width, 4*width, 3, 3), n = 1..N
    res{n}.conv2.weight / .bias      (4*width, 4*width, 3, 3)
    up1.conv.weight / .bias          (4*width, 2*width, 3, 3)  [Cin, Cout, kh, kw]
    up2.conv.weight / .bias          (2*width, width, 3, 3)
    final.conv.weight / .bias        (out_ch, width, 7, 7)
    norm{k}.gamma / .beta            per-site affine vectors, k = 0..sites-1

Normalization sites are numbered in forward order: 0 stem, 1-2 downsampling,
3..2+2N residual blocks (two per block), then the two upsampling sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .normalize import NormLayerState, NormMode, Phase, StatTable, apply_norm, DEFAULT_EPS
from .tensor import (
    PadSpec,
    Tensor,
    add,
    channel_stats,
    conv2d,
    conv_transpose2d,
    normalize_with_stats,
    relu,
    tanh,
)
from .weights import WeightStore, write_container

__all__ = ["GeneratorConfig", "Generator", "WeightStore"]


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 3
    out_channels: int = 3
    base_width: int = 64
    n_resblocks: int = 9
    patch_size: int = 512
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise ValueError("n_resblocks must be >= 1")
        if self.patch_size < 8 or self.patch_size % 4 != 0:
            raise ValueError(
                f"patch_size must be a positive multiple of 4 (two stride-2 stages), "
                f"got {self.patch_size}"
            )
        if self.base_width < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")

    @property
    def norm_site_count(self) -> int:
        return 5 + 2 * self.n_resblocks

    def norm_channels(self) -> List[int]:
        """Channel count of each normalization site, in forward order."""
        w = self.base_width
        sites = [w, 2 * w, 4 * w]
        sites += [4 * w] * (2 * self.n_resblocks)
        sites += [2 * w, w]
        return sites

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Every required parameter name with its exact shape."""
        w = self.base_width
        shapes: Dict[str, Tuple[int, ...]] = {
            "stem.conv.weight": (w, self.in_channels, 7, 7),
            "stem.conv.bias": (w,),
            "down1.conv.weight": (2 * w, w, 3, 3),
            "down1.conv.bias": (2 * w,),
            "down2.conv.weight": (4 * w, 2 * w, 3, 3),
            "down2.conv.bias": (4 * w,),
        }
        for n in range(1, self.n_resblocks + 1):
            shapes[f"res{n}.conv1.weight"] = (4 * w, 4 * w, 3, 3)
            shapes[f"res{n}.conv1.bias"] = (4 * w,)
            shapes[f"res{n}.conv2.weight"] = (4 * w, 4 * w, 3, 3)
            shapes[f"res{n}.conv2.bias"] = (4 * w,)
        shapes["up1.conv.weight"] = (4 * w, 2 * w, 3, 3)
        shapes["up1.conv.bias"] = (2 * w,)
        shapes["up2.conv.weight"] = (2 * w, w, 3, 3)
        shapes["up2.conv.bias"] = (w,)
        shapes["final.conv.weight"] = (self.out_channels, w, 7, 7)
        shapes["final.conv.bias"] = (self.out_channels,)
        for k, c in enumerate(self.norm_channels()):
            shapes[f"norm{k}.gamma"] = (c,)
            shapes[f"norm{k}.beta"] = (c,)
        return shapes


def _random_params(config: GeneratorConfig, seed: int) -> Dict[str, np.ndarray]:
    """Deterministic random init: N(0, 0.02) convs, zero biases, identity affine."""
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".weight"):
            params[name] = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype=np.float32)
        else:  # biases and betas
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


class Generator:
    """Immutable generator; per-run statistics live in the norm states.

    Build with :meth:`build` from either a :class:`WeightStore` (complete,
    shape-checked) or an integer seed. Forward passes are pure functions of
    (input, mode, coord, phase) once any required caching pass has run.
    """

    def __init__(self, config: GeneratorConfig, params: Dict[str, np.ndarray]):
        self.config = config
        self._params: Dict[str, Tensor] = {k: Tensor(v) for k, v in params.items()}
        self.norm_states: List[NormLayerState] = []
        for k, _c in enumerate(config.norm_channels()):
            self.norm_states.append(
                NormLayerState(
                    layer_id=k,
                    gamma=self._params[f"norm{k}.gamma"].numpy(),
                    beta=self._params[f"norm{k}.beta"].numpy(),
                    eps=config.eps,
                )
            )

    # ------------------------------------------------------------ building

    @classmethod
    def build(
        cls,
        config: GeneratorConfig,
        weights: Union[WeightStore, int],
        allow_extra: bool = False,
    ) -> "Generator":
        if isinstance(weights, WeightStore):
            params: Dict[str, np.ndarray] = {}
            for name, shape in config.param_shapes().items():
                params[name] = weights.take(name, shape)
            extras = weights.remaining()
            if extras and not allow_extra:
                raise ValueError(
                    f"weight store has {len(extras)} unexpected entries: {extras[:5]}"
                )
            return cls(config, params)
        if isinstance(weights, (int, np.integer)):
            return cls(config, _random_params(config, int(weights)))
        raise TypeError(f"weights must be a WeightStore or an integer seed, got {type(weights)}")

    def save_weights(self, path) -> None:
        write_container(path, {k: t.numpy() for k, t in self._params.items()})

    def param(self, name: str) -> Tensor:
        return self._params[name]

    # ---------------------------------------------------------- run state

    def init_tables(self, rows: int, cols: int) -> None:
        """Attach fresh caching tables to every site (kin runs)."""
        for st in self.norm_states:
            st.table = StatTable(rows, cols, st.channels)
            st.thumbnail_mu = None
            st.thumbnail_sigma = None

    def clear_run_state(self) -> None:
        for st in self.norm_states:
            st.table = None
            st.thumbnail_mu = None
            st.thumbnail_sigma = None

    def tables_complete(self) -> bool:
        return all(st.table is not None and st.table.complete for st in self.norm_states)

    def table_bytes(self) -> int:
        return sum(st.table.nbytes() for st in self.norm_states if st.table is not None)

    # ------------------------------------------------------------ forward

    def _validate_input(self, patch: Tensor, mode: NormMode) -> None:
        shp = patch.shape
        if len(shp) != 4 or shp[0] != 1 or shp[1] != self.config.in_channels:
            raise ValueError(
                f"expected input of shape (1, {self.config.in_channels}, H, W), got {shp}"
            )
        h, w = shp[2], shp[3]
        if h % 4 != 0 or w % 4 != 0:
            raise ValueError(f"spatial dims must be multiples of 4, got {h}x{w}")
        p = self.config.patch_size
        if mode.kind != "full-in" and (h != p or w != p):
            raise ValueError(
                f"patch must be exactly {p}x{p} for {mode.kind} (no implicit resize), "
                f"got {h}x{w}"
            )
        lo = float(patch.numpy().min())
        hi = float(patch.numpy().max())
        if lo < -1.0 - 1e-5 or hi > 1.0 + 1e-5:
            raise ValueError(f"input values must lie in [-1, 1], got [{lo:.4g}, {hi:.4g}]")

    def forward(
        self,
        patch: Tensor,
        mode: NormMode,
        coord: Optional[Tuple[int, int]] = None,
        phase: Phase = Phase.INFERENCE,
        _probe: Optional[list] = None,
    ) -> Optional[Tensor]:
        """Translate one patch (or a whole image under full-in).

        During a kin/tin caching pass the output is discarded by the
        pipeline, so the pass stops after the last normalization site and
        returns None.
        """
        self._validate_input(patch, mode)
        if mode.kind == "kin" and phase is Phase.CACHING and coord is None:
            raise ValueError("kin caching requires the patch coordinate")
        caching = phase is Phase.CACHING and mode.kind in ("kin", "tin")
        site = 0

        def norm(h: Tensor) -> Tensor:
            nonlocal site
            st = self.norm_states[site]
            site += 1
            if _probe is not None:
                mu, sigma = channel_stats(h)
                _probe.append((st.layer_id, mu[0].copy(), sigma[0].copy()))
                return normalize_with_stats(h, mu, sigma, st.gamma, st.beta, st.eps)
            return apply_norm(st, h, coord, mode, phase)

        p = self._params
        h = conv2d(patch, p["stem.conv.weight"], p["stem.conv.bias"],
                   stride=1, padding=PadSpec(3, "reflect"))
        h = relu(norm(h))
        h = conv2d(h, p["down1.conv.weight"], p["down1.conv.bias"], stride=2, padding=1)
        h = relu(norm(h))
        h = conv2d(h, p["down2.conv.weight"], p["down2.conv.bias"], stride=2, padding=1)
        h = relu(norm(h))
        for n in range(1, self.config.n_resblocks + 1):
            r = conv2d(h, p[f"res{n}.conv1.weight"], p[f"res{n}.conv1.bias"],
                       stride=1, padding=PadSpec(1, "reflect"))
            r = relu(norm(r))
            r = conv2d(r, p[f"res{n}.conv2.weight"], p[f"res{n}.conv2.bias"],
                       stride=1, padding=PadSpec(1, "reflect"))
            r = norm(r)
            h = add(h, r)
        h = conv_transpose2d(h, p["up1.conv.weight"], p["up1.conv.bias"],
                             stride=2, padding=1, output_padding=1)
        h = relu(norm(h))
        h = conv_transpose2d(h, p["up2.conv.weight"], p["up2.conv.bias"],
                             stride=2, padding=1, output_padding=1)
        last = norm(h)
        if caching or _probe is not None:
            # caching/capture outputs are discarded and probes only need the
            # per-site statistics, so skip the final convolution.
            return None
        h = relu(last)
        h = conv2d(h, p["final.conv.weight"], p["final.conv.bias"],
                   stride=1, padding=PadSpec(3, "reflect"))
        return tanh(h)

    def stat_probe(
        self, patch: Tensor, coord: Optional[Tuple[int, int]] = None
    ) -> List[Tuple[int, np.ndarray, np.ndarray]]:
        """Per-site (layer_id, mu, sigma) a caching pass would record.

        Pure: runs the forward walk with own-statistics normalization and
        never touches the caching tables.
        """
        out: list = []
        self.forward(patch, NormMode.patch_in(), coord=coord, phase=Phase.INFERENCE, _probe=out)
        return out
