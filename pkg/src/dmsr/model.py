"""DMSR network: dual-domain multi-scale deraining blocks and their composition.

All feature tensors are B x C x H x W. The network takes a three-level rainy
pyramid (S1 full resolution, S2 half, S3 quarter) and returns three derained
images at the same scales, each as a residual on top of its input.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig


def _check_spatial(x: torch.Tensor, divisor: int, who: str) -> None:
    h, w = x.shape[-2:]
    if h % divisor or w % divisor:
        raise ValueError(f"{who}: spatial dims {h}x{w} must be divisible by {divisor}")


class SpatialPixelGate(nn.Module):
    """Sigmoid pixel-gating attention (SPGA).

    Builds a spatial statistics map from rate-2 avg/max pooling of a squeezed
    point-wise projection, a gated point-wise/depth-wise path, fuses the two
    multiplicatively, and re-weights the input with a sigmoid map in (0, 1).
    """

    def __init__(self, channels: int, skip: bool = True):
        super().__init__()
        mid = max(channels // 4, 1)
        self.skip = skip
        self.pw_pool = nn.Conv2d(channels, mid, 1)
        self.spatial = nn.Conv2d(2 * mid, channels, 7, padding=3)
        self.gate = nn.Sequential(
            nn.Conv2d(channels, mid, 1),
            nn.Conv2d(mid, mid, 3, padding=1, groups=mid),
            nn.Conv2d(mid, channels, 1),
        )
        fuse_in = 2 * channels if skip else channels
        self.fuse = nn.Conv2d(fuse_in, channels, 7, padding=3)

    def attention_map(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        p = self.pw_pool(x)
        # ceil_mode keeps odd and 1x1 maps valid (pooled features of small tiles)
        avg = F.avg_pool2d(p, 2, ceil_mode=True, count_include_pad=False)
        mx = F.max_pool2d(p, 2, ceil_mode=True)
        w_s = self.spatial(torch.cat([avg, mx], dim=1))
        w_s = F.interpolate(w_s, size=(h, w), mode="bilinear", align_corners=False)
        w_g = self.gate(x)
        w_m = w_s * w_g
        fused = torch.cat([x, w_m], dim=1) if self.skip else w_m
        return torch.sigmoid(self.fuse(fused))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.attention_map(x)


class MultiScaleRefine(nn.Module):
    """MPSRM: coarse-to-fine pooled branches refined and fused back.

    Branch k pools the input at rate r_k, adds the upsampled previous branch,
    and refines it with SPGA. All branch outputs are upsampled back and summed
    with the input before the tail 3x3 conv.
    """

    def __init__(self, channels: int, cfg: ModelConfig):
        super().__init__()
        self.rates = list(cfg.mpsrm_pool_rates)
        refine = (lambda: SpatialPixelGate(channels, cfg.spga_skip_enabled)) \
            if cfg.spga_enabled else nn.Identity
        self.branches = nn.ModuleList(refine() for _ in self.rates)
        self.tail = (
            nn.Conv2d(channels, channels, 3, padding=1)
            if cfg.mpsrm_tail_conv_enabled else nn.Identity()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.rates:
            _check_spatial(x, self.rates[0], "MultiScaleRefine")
        prev = None
        out = x
        for rate, branch in zip(self.rates, self.branches):
            pooled = F.avg_pool2d(x, rate)
            if prev is not None:
                pooled = pooled + F.interpolate(
                    prev, size=pooled.shape[-2:], mode="bilinear", align_corners=False)
            prev = branch(pooled)
            out = out + F.interpolate(
                prev, size=x.shape[-2:], mode="bilinear", align_corners=False)
        return self.tail(out)


class FrequencyScaleMixer(nn.Module):
    """FDSM: multi-kernel local mixing, FFT-domain modulation, residual output.

    The spatial stage expands channels point-wise, splits into one chunk per
    kernel size, and runs conv -> GELU -> point-wise conv per chunk. The
    frequency stage modulates the concatenated real/imaginary half-spectra
    with a point-wise conv + batch norm + ReLU, then inverse-transforms.
    """

    def __init__(self, channels: int, cfg: ModelConfig):
        super().__init__()
        kernels = list(cfg.fdsm_kernels)
        n = len(kernels)
        self.channels = channels
        self.fft_enabled = cfg.fdsm_fft_enabled
        self.expand = nn.Conv2d(channels, n * channels, 1)
        self.branches = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(channels, channels, z, padding=z // 2),
                nn.GELU(),
                nn.Conv2d(channels, channels, 1),
            )
            for z in kernels
        )
        if cfg.fdsm_fft_enabled and cfg.fdsm_modulation_pw_enabled:
            self.modulation = nn.Sequential(
                nn.Conv2d(2 * n * channels, 2 * n * channels, 1),
                nn.BatchNorm2d(2 * n * channels),
                nn.ReLU(),
            )
        else:
            self.modulation = None
        self.project = nn.Conv2d(n * channels, channels, 1)

    def spatial_mix(self, x: torch.Tensor) -> torch.Tensor:
        chunks = torch.chunk(self.expand(x), len(self.branches), dim=1)
        return torch.cat([b(c) for b, c in zip(self.branches, chunks)], dim=1)

    def freq_mix(self, x_s: torch.Tensor) -> torch.Tensor:
        if not self.fft_enabled:
            return x_s
        h, w = x_s.shape[-2:]
        spec = torch.fft.rfft2(x_s)
        re, im = spec.real, spec.imag
        if not (torch.isfinite(re).all() and torch.isfinite(im).all()):
            raise ValueError("FrequencyScaleMixer: non-finite spectrum")
        if self.modulation is not None:
            mod = self.modulation(torch.cat([re, im], dim=1))
            re, im = torch.chunk(mod, 2, dim=1)
        return torch.fft.irfft2(torch.complex(re, im), s=(h, w))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.project(self.freq_mix(self.spatial_mix(x)))


class ResidualUnit(nn.Module):
    """One DDSAM block: x + FDSM(MPSRM(x))."""

    def __init__(self, channels: int, cfg: ModelConfig):
        super().__init__()
        self.mpsrm = MultiScaleRefine(channels, cfg)
        self.fdsm = FrequencyScaleMixer(channels, cfg)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.fdsm(self.mpsrm(x))


class DualDomainStage(nn.Module):
    """DDSAM: a stack of residual units at one scale."""

    def __init__(self, channels: int, n_blocks: int, cfg: ModelConfig):
        super().__init__()
        if n_blocks < 1:
            raise ValueError("DualDomainStage needs n_blocks >= 1")
        self.blocks = nn.Sequential(*(ResidualUnit(channels, cfg) for _ in range(n_blocks)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(x)


class ScaleInject(nn.Module):
    """Embeds a downsampled rainy image and fuses it into the feature path."""

    def __init__(self, channels: int):
        super().__init__()
        self.embed = nn.Sequential(
            nn.Conv2d(3, channels, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(channels, channels, 3, padding=1),
        )
        self.adjust = nn.Conv2d(channels, channels, 3, padding=1)
        self.fuse = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, feat: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        if feat.shape[-2:] != image.shape[-2:]:
            raise ValueError(
                f"ScaleInject: feature {tuple(feat.shape[-2:])} vs image "
                f"{tuple(image.shape[-2:])} spatial mismatch")
        emb = self.adjust(self.embed(image))
        return self.fuse(torch.cat([feat, emb], dim=1))


class OutputHead(nn.Module):
    """Maps features to a residual image added onto the scale's rainy input."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, 3, 3, padding=1)

    def forward(self, feat: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        if feat.shape[-2:] != image.shape[-2:]:
            raise ValueError("OutputHead: spatial mismatch between feature and image")
        return image + self.conv(feat)


class DMSRNet(nn.Module):
    """Full multi-input multi-output deraining network.

    Encoder: shallow 3x3 embed, three DDSAM stages with strided-conv
    downsampling and injection of the half/quarter-scale inputs. Decoder:
    three DDSAM stages with transposed-conv upsampling, 1x1 fusion of
    encoder skips, and an output head at each scale.
    """

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        c = cfg.base_channels
        nb = cfg.blocks_per_stage

        self.shallow = nn.Conv2d(3, c, 3, padding=1)
        self.enc1 = DualDomainStage(c, nb[0], cfg)
        self.down1 = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.inject2 = ScaleInject(2 * c) if cfg.num_input_scales >= 2 else None
        self.enc2 = DualDomainStage(2 * c, nb[1], cfg)
        self.down2 = nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1)
        self.inject3 = ScaleInject(4 * c) if cfg.num_input_scales >= 3 else None
        self.enc3 = DualDomainStage(4 * c, nb[2], cfg)

        self.dec4 = DualDomainStage(4 * c, nb[3], cfg)
        self.head_quarter = OutputHead(4 * c)
        self.up1 = nn.ConvTranspose2d(4 * c, 2 * c, 3, stride=2, padding=1, output_padding=1)
        self.fuse5 = nn.Conv2d(4 * c, 2 * c, 1)
        self.dec5 = DualDomainStage(2 * c, nb[4], cfg)
        self.head_half = OutputHead(2 * c)
        self.up2 = nn.ConvTranspose2d(2 * c, c, 3, stride=2, padding=1, output_padding=1)
        self.fuse6 = nn.Conv2d(2 * c, c, 1)
        self.dec6 = DualDomainStage(c, nb[5], cfg)
        self.head_full = OutputHead(c)

        self.apply(_init_conv)
        # start as an exact identity: residual contributions and heads grow
        # from zero, which keeps activations bounded through the six stages
        self.zero_heads_()
        self.zero_residual_branches_()

    def zero_heads_(self) -> None:
        """Zero all output heads so the untrained network is the identity."""
        for head in (self.head_full, self.head_half, self.head_quarter):
            nn.init.zeros_(head.conv.weight)
            nn.init.zeros_(head.conv.bias)

    def zero_residual_branches_(self) -> None:
        """Zero MPSRM tails and FDSM projections: every DDSAM unit becomes x -> x."""
        for m in self.modules():
            if isinstance(m, MultiScaleRefine) and isinstance(m.tail, nn.Conv2d):
                nn.init.zeros_(m.tail.weight)
                nn.init.zeros_(m.tail.bias)
            if isinstance(m, FrequencyScaleMixer):
                nn.init.zeros_(m.project.weight)
                nn.init.zeros_(m.project.bias)

    def forward(self, s1, s2, s3):
        _check_spatial(s1, 4, "DMSRNet")
        b, _, h, w = s1.shape
        for s, f, name in ((s2, 2, "S2"), (s3, 4, "S3")):
            if s.shape != (b, 3, h // f, w // f):
                raise ValueError(f"DMSRNet: {name} must be the exact 1/{f} pyramid level")

        f0 = self.shallow(s1)
        e1 = self.enc1(f0)
        x = self.down1(e1)
        if self.inject2 is not None:
            x = self.inject2(x, s2)
        e2 = self.enc2(x)
        x = self.down2(e2)
        if self.inject3 is not None:
            x = self.inject3(x, s3)
        e3 = self.enc3(x)

        d4 = self.dec4(e3)
        out_quarter = self.head_quarter(d4, s3)
        x = self.fuse5(torch.cat([self.up1(d4), e2], dim=1))
        d5 = self.dec5(x)
        out_half = self.head_half(d5, s2)
        x = self.fuse6(torch.cat([self.up2(d5), e1], dim=1))
        d6 = self.dec6(x)
        out_full = self.head_full(d6, s1)
        return out_full, out_half, out_quarter


def _init_conv(m: nn.Module) -> None:
    if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
        if m.bias is not None:
            nn.init.zeros_(m.bias)


def build_pyramid_batch(s1: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Bilinear 1/2 and 1/4 pyramid of a full-resolution batch."""
    _check_spatial(s1, 4, "build_pyramid_batch")
    s2 = F.interpolate(s1, scale_factor=0.5, mode="bilinear", align_corners=False)
    s3 = F.interpolate(s1, scale_factor=0.25, mode="bilinear", align_corners=False)
    return s1, s2, s3


def _conv_params(cin: int, cout: int, k: int) -> int:
    return cin * cout * k * k + cout


def _spga_params(c: int, skip: bool) -> int:
    mid = max(c // 4, 1)
    total = _conv_params(c, mid, 1)
    total += _conv_params(2 * mid, c, 7)
    total += _conv_params(c, mid, 1) + (mid * 9 + mid) + _conv_params(mid, c, 1)
    total += _conv_params(2 * c if skip else c, c, 7)
    return total


def _mpsrm_params(c: int, cfg: ModelConfig) -> int:
    total = 0
    if cfg.spga_enabled:
        total += len(cfg.mpsrm_pool_rates) * _spga_params(c, cfg.spga_skip_enabled)
    if cfg.mpsrm_tail_conv_enabled:
        total += _conv_params(c, c, 3)
    return total


def _fdsm_params(c: int, cfg: ModelConfig) -> int:
    n = len(cfg.fdsm_kernels)
    total = _conv_params(c, n * c, 1)
    for z in cfg.fdsm_kernels:
        total += _conv_params(c, c, z) + _conv_params(c, c, 1)
    if cfg.fdsm_fft_enabled and cfg.fdsm_modulation_pw_enabled:
        total += _conv_params(2 * n * c, 2 * n * c, 1) + 2 * (2 * n * c)  # PW + BN affine
    total += _conv_params(n * c, c, 1)
    return total


def _inject_params(c: int) -> int:
    return (_conv_params(3, c, 3) + _conv_params(c, c, 3)
            + _conv_params(c, c, 3) + _conv_params(2 * c, c, 1))


def param_count(cfg: ModelConfig) -> int:
    """Closed-form scalar parameter count for a config (no model instantiation)."""
    c = cfg.base_channels
    nb = cfg.blocks_per_stage
    unit = {w: _mpsrm_params(w, cfg) + _fdsm_params(w, cfg) for w in (c, 2 * c, 4 * c)}
    total = _conv_params(3, c, 3)  # shallow embed
    widths = [c, 2 * c, 4 * c, 4 * c, 2 * c, c]
    for width, blocks in zip(widths, nb):
        total += blocks * unit[width]
    total += _conv_params(c, 2 * c, 3) + _conv_params(2 * c, 4 * c, 3)  # downsamples
    total += _conv_params(4 * c, 2 * c, 3) + _conv_params(2 * c, c, 3)  # upsamples
    if cfg.num_input_scales >= 2:
        total += _inject_params(2 * c)
    if cfg.num_input_scales >= 3:
        total += _inject_params(4 * c)
    total += _conv_params(4 * c, 2 * c, 1) + _conv_params(2 * c, c, 1)  # skip fusions
    total += sum(_conv_params(w, 3, 3) for w in (4 * c, 2 * c, c))  # heads
    return total
