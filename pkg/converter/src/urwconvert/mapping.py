"""Checkpoint-to-canonical-name mapping for CycleGAN-recipe generators.

The engine's canonical scheme names parameters by role (stem.conv.weight,
res{n}.conv1.weight, norm{k}.gamma, ...) with normalization sites numbered
in forward order. Checkpoints vary in naming (flat attribute names,
sequential "model.N" indices, DataParallel "module." prefixes), so mapping
walks the checkpoint in its stored order and aligns it against the
architecture's expected parameter sequence:

* 4-D tensors are convolution weights (transposed-conv weights keep
  torch's (Cin, Cout, kh, kw) layout, which is the engine's documented
  layout, so the conversion is a passthrough);
* 1-D ".weight" entries are normalization gammas, and a 1-D ".bias" is a
  beta when it follows a gamma, otherwise a convolution bias;
* missing affine parameters or convolution biases (common in stock
  CycleGAN checkpoints, whose InstanceNorm2d is affine-free) are
  synthesized as identity (gamma = 1, beta = 0, bias = 0) and noted in
  the audit.

Every mapped tensor is shape-checked; offenders are collected and reported
together.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

__all__ = ["ArchSpec", "parse_arch", "ConversionError", "convert_state_dict", "load_checkpoint"]


class ConversionError(Exception):
    pass


@dataclass(frozen=True)
class ArchSpec:
    in_channels: int = 3
    out_channels: int = 3
    width: int = 64
    n_resblocks: int = 9


def parse_arch(name: str, width: Optional[int] = None) -> ArchSpec:
    m = re.fullmatch(r"cyclegan-r(\d+)", name)
    if not m:
        raise ConversionError(f"unknown architecture {name!r} (expected cyclegan-r<N>)")
    return ArchSpec(width=width or 64, n_resblocks=int(m.group(1)))


def expected_sequence(arch: ArchSpec) -> List[Tuple[str, tuple, str]]:
    """(canonical name, shape, kind) in architecture order."""
    w = arch.width
    seq: List[Tuple[str, tuple, str]] = []

    def conv(prefix, cin, cout, k, norm_id, transposed=False):
        kind = "convT_w" if transposed else "conv_w"
        shape = (cin, cout, k, k) if transposed else (cout, cin, k, k)
        seq.append((f"{prefix}.weight", shape, kind))
        seq.append((f"{prefix}.bias", (cout,), "conv_b"))
        if norm_id is not None:
            seq.append((f"norm{norm_id}.gamma", (cout,), "gamma"))
            seq.append((f"norm{norm_id}.beta", (cout,), "beta"))

    conv("stem.conv", arch.in_channels, w, 7, 0)
    conv("down1.conv", w, 2 * w, 3, 1)
    conv("down2.conv", 2 * w, 4 * w, 3, 2)
    for n in range(1, arch.n_resblocks + 1):
        conv(f"res{n}.conv1", 4 * w, 4 * w, 3, 2 * n + 1)
        conv(f"res{n}.conv2", 4 * w, 4 * w, 3, 2 * n + 2)
    conv("up1.conv", 4 * w, 2 * w, 3, 2 * arch.n_resblocks + 3, transposed=True)
    conv("up2.conv", 2 * w, w, 3, 2 * arch.n_resblocks + 4, transposed=True)
    conv("final.conv", w, arch.out_channels, 7, None)
    return seq


@dataclass
class AuditRow:
    source: str
    canonical: str
    shape: tuple
    note: str = ""


@dataclass
class ConversionResult:
    entries: Dict[str, np.ndarray]
    audit: List[AuditRow] = field(default_factory=list)

    def print_audit(self, out=None) -> None:
        import sys

        out = out or sys.stdout
        width = max((len(r.source) for r in self.audit), default=10)
        for r in self.audit:
            print(f"  {r.source:<{width}}  ->  {r.canonical:<22} {str(r.shape):<18} {r.note}",
                  file=out)


def _classify(items):
    """Tag each checkpoint tensor as conv weight, gamma, beta or bias."""
    tagged = []
    last = None
    for name, tensor in items:
        if name.endswith(("num_batches_tracked", "running_mean", "running_var")):
            tagged.append((name, tensor, "skip"))
            continue
        if tensor.ndim == 4:
            kind = "conv4d"
        elif tensor.ndim == 1 and name.endswith(".weight"):
            kind = "gamma"
        elif tensor.ndim == 1:
            kind = "beta" if last == "gamma" else "conv_b"
        else:
            kind = "unknown"
        tagged.append((name, tensor, kind))
        if kind != "skip":
            last = kind
    return tagged


_SYNTH = {"conv_b": np.zeros, "beta": np.zeros, "gamma": np.ones}


def convert_state_dict(state_dict, arch: ArchSpec) -> ConversionResult:
    """Align a generator state dict with the architecture's parameter list."""
    items = [(k, v) for k, v in state_dict.items() if torch.is_tensor(v)]
    tagged = [t for t in _classify(items)]
    expected = expected_sequence(arch)

    entries: Dict[str, np.ndarray] = {}
    audit: List[AuditRow] = []
    problems: List[str] = []
    pos = 0

    def next_tagged():
        nonlocal pos
        while pos < len(tagged) and tagged[pos][2] == "skip":
            audit.append(AuditRow(tagged[pos][0], "-", tuple(tagged[pos][1].shape),
                                  "skipped (tracking buffer)"))
            pos += 1
        return tagged[pos] if pos < len(tagged) else None

    for canon, shape, kind in expected:
        cur = next_tagged()
        want_conv = kind in ("conv_w", "convT_w")
        cur_matches = cur is not None and (
            (want_conv and cur[2] == "conv4d") or (not want_conv and cur[2] == kind)
        )
        if cur_matches:
            name, tensor, _ = cur
            pos += 1
            arr = tensor.detach().cpu().numpy().astype(np.float32)
            if tuple(arr.shape) != shape:
                problems.append(f"{name} -> {canon}: shape {tuple(arr.shape)}, expected {shape}")
                continue
            note = "layout passthrough (Cin,Cout,kh,kw)" if kind == "convT_w" else ""
            entries[canon] = arr
            audit.append(AuditRow(name, canon, shape, note))
        elif kind in _SYNTH:
            entries[canon] = _SYNTH[kind](shape, dtype=np.float32)
            audit.append(AuditRow("-", canon, shape, "synthesized (absent in checkpoint)"))
        else:
            got = f"{cur[0]} ({cur[2]})" if cur is not None else "end of checkpoint"
            problems.append(f"{canon}: expected a {kind} tensor of shape {shape}, got {got}")
            if cur is not None:
                pos += 1

    leftovers = []
    while (cur := next_tagged()) is not None:
        leftovers.append(cur[0])
        pos += 1
    if leftovers:
        problems.append(f"unmapped checkpoint entries: {leftovers[:8]}"
                        + ("..." if len(leftovers) > 8 else ""))
    if problems:
        raise ConversionError(
            "conversion failed:\n  " + "\n  ".join(problems)
        )
    return ConversionResult(entries=entries, audit=audit)


_UNWRAP_KEYS = ("state_dict", "generator", "netG", "net_G", "G", "model_state")


def _strip_module_prefix(sd: dict) -> dict:
    keys = list(sd)
    if keys and all(k.startswith("module.") for k in keys):
        return {k[len("module."):]: v for k, v in sd.items()}
    return sd


def load_checkpoint(path, prefix: Optional[str] = None):
    """Load a checkpoint and return (state_dict, skipped_subtree_audit).

    ``prefix`` selects one subtree of a multi-network checkpoint; without
    it, the whole dict is used if it aligns as a single generator,
    otherwise each top-level prefix group is tried and exactly one must
    align (e.g. netG picked out, netD skipped).
    """
    obj = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(obj, dict) and obj and not all(torch.is_tensor(v) for v in obj.values()):
        for key in _UNWRAP_KEYS:
            inner = obj.get(key)
            if isinstance(inner, dict) and inner and all(torch.is_tensor(v) for v in inner.values()):
                obj = inner
                break
    if not (isinstance(obj, dict) and obj and all(torch.is_tensor(v) for v in obj.values())):
        raise ConversionError(f"{path}: not a state dict (or none found under {_UNWRAP_KEYS})")
    sd = _strip_module_prefix(obj)
    if prefix is not None:
        selected = {k[len(prefix):].lstrip("."): v for k, v in sd.items() if k.startswith(prefix)}
        if not selected:
            raise ConversionError(f"no checkpoint entries start with prefix {prefix!r}")
        skipped = [k for k in sd if not k.startswith(prefix)]
        return selected, skipped
    return sd, []


def convert_checkpoint(path, arch: ArchSpec, prefix: Optional[str] = None) -> ConversionResult:
    sd, skipped = load_checkpoint(path, prefix)
    try:
        result = convert_state_dict(sd, arch)
    except ConversionError:
        if prefix is not None:
            raise
        groups: Dict[str, dict] = {}
        for k, v in sd.items():
            groups.setdefault(k.split(".", 1)[0], {})[k.split(".", 1)[-1]] = v
        aligned = {}
        for gname, gsd in groups.items():
            if len(groups) < 2:
                break
            try:
                aligned[gname] = convert_state_dict(gsd, arch)
            except ConversionError:
                continue
        if len(aligned) == 1:
            gname, result = next(iter(aligned.items()))
            for other in groups:
                if other != gname:
                    result.audit.append(AuditRow(other + ".*", "-", (len(groups[other]),),
                                                 "skipped subtree (not the generator)"))
            return result
        if len(aligned) > 1:
            raise ConversionError(
                f"multiple generator candidates {sorted(aligned)}; pick one with --prefix"
            )
        raise
    for k in skipped:
        result.audit.append(AuditRow(k, "-", (), "skipped (outside --prefix)"))
    return result
