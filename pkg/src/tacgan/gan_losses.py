"""Per-player scalar losses for each GAN variant.

All losses are minimized by their player, so the discriminator's adversarial
objective and the twin classifier's value function enter negated. The log-kind
adversarial losses have two entry points: one on sigmoid probabilities (the
plain formula, which rejects values outside (0,1)) and one on raw scores that
routes log-sigmoid through a max-shifted logsumexp so confident discriminators
cannot overflow. Both agree exactly in non-saturated regimes; training uses
the score form.

Hinge losses always act on raw scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import Tape, VarId

VARIANT_KINDS = ("vanilla", "cgan_concat", "acgan", "tacgan", "projection")
ADV_KINDS = ("log", "hinge")
GEN_ADV_KINDS = ("saturating", "nonsaturating")


@dataclass(frozen=True)
class GanVariant:
    """Which game is being played and with which knobs.

    lambda_c weighs the classification terms and therefore only means
    something for acgan/tacgan. classifier_on_fake=False is the ablation that
    trains C on real data only.
    """

    kind: str
    adv_loss: str = "log"
    lambda_c: float = 0.0
    generator_adv: str = "nonsaturating"
    classifier_on_fake: bool = True

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}")
        if self.adv_loss not in ADV_KINDS:
            raise ValueError(f"unknown adversarial loss {self.adv_loss!r}")
        if self.generator_adv not in GEN_ADV_KINDS:
            raise ValueError(f"unknown generator objective {self.generator_adv!r}")
        if self.lambda_c < 0:
            raise ValueError(f"lambda_c must be nonnegative, got {self.lambda_c}")
        if self.lambda_c > 0 and self.kind not in ("acgan", "tacgan"):
            raise ValueError(f"lambda_c is only used by acgan/tacgan, not {self.kind!r}")

    @property
    def has_classifier(self) -> bool:
        return self.kind in ("acgan", "tacgan")

    @property
    def has_twin(self) -> bool:
        return self.kind == "tacgan"


@dataclass
class PlayerHeads:
    """Network outputs as callables so loss assembly stays architecture-free.

    adv_score(tape, x) -> (batch, 1) raw score; cond_score(tape, x, y) -> the
    conditional score for cgan_concat/projection; cls_logits / twin_logits
    (tape, x) -> (batch, K).
    """

    adv_score: Optional[Callable[[Tape, VarId], VarId]] = None
    cond_score: Optional[Callable[[Tape, VarId, np.ndarray], VarId]] = None
    cls_logits: Optional[Callable[[Tape, VarId], VarId]] = None
    twin_logits: Optional[Callable[[Tape, VarId], VarId]] = None


@dataclass
class LossBundle:
    d_loss: VarId
    g_loss: VarId
    c_loss: Optional[VarId] = None
    cmi_loss: Optional[VarId] = None
    diagnostics: dict = field(default_factory=dict)


def _softplus(tape: Tape, s: VarId) -> VarId:
    """log(1 + e^s) per row via logsumexp([s, 0]); stable for any score."""
    zeros = tape.leaf(np.zeros_like(tape.value(s)))
    return tape.reduce("logsumexp", tape.concat([s, zeros], axis=1), axis=1)


def _check_probs(v: np.ndarray, name: str) -> None:
    if np.any(v <= 0.0) or np.any(v >= 1.0):
        raise ValueError(f"{name} contains a probability outside (0, 1)")


def adv_d_loss(tape: Tape, d_real: VarId, d_fake: VarId, kind: str) -> VarId:
    """Discriminator loss on probabilities (log) or raw scores (hinge).

    log:   -mean log d_real - mean log(1 - d_fake)
    hinge:  mean max(0, 1 - s_real) + mean max(0, 1 + s_fake)
    """
    if kind == "log":
        _check_probs(tape.value(d_real), "d_real")
        _check_probs(tape.value(d_fake), "d_fake")
        one = tape.leaf(1.0)
        real_term = tape.unary("neg", tape.reduce("mean", tape.unary("log", d_real)))
        fake_term = tape.unary(
            "neg", tape.reduce("mean", tape.unary("log", tape.binary("sub", one, d_fake)))
        )
        return tape.binary("add", real_term, fake_term)
    if kind == "hinge":
        one = tape.leaf(1.0)
        real_term = tape.reduce("mean", tape.unary("relu", tape.binary("sub", one, d_real)))
        fake_term = tape.reduce("mean", tape.unary("relu", tape.binary("add", one, d_fake)))
        return tape.binary("add", real_term, fake_term)
    raise ValueError(f"unknown adversarial loss {kind!r}")


def adv_d_loss_scores(tape: Tape, s_real: VarId, s_fake: VarId, kind: str) -> VarId:
    """As adv_d_loss but from raw scores; log kind uses stable log-sigmoid."""
    if kind == "log":
        real_term = tape.reduce("mean", _softplus(tape, tape.unary("neg", s_real)))
        fake_term = tape.reduce("mean", _softplus(tape, s_fake))
        return tape.binary("add", real_term, fake_term)
    return adv_d_loss(tape, s_real, s_fake, kind)


def adv_g_loss(tape: Tape, d_fake: VarId, kind: str, generator_adv: str) -> VarId:
    """Generator loss on probabilities (log) or raw scores (hinge).

    saturating:     mean log(1 - d_fake)     (Eq. as printed)
    nonsaturating: -mean log d_fake          (the trainable substitution)
    hinge:         -mean s_fake
    """
    if kind == "log":
        _check_probs(tape.value(d_fake), "d_fake")
        if generator_adv == "saturating":
            one = tape.leaf(1.0)
            return tape.reduce("mean", tape.unary("log", tape.binary("sub", one, d_fake)))
        return tape.unary("neg", tape.reduce("mean", tape.unary("log", d_fake)))
    if kind == "hinge":
        return tape.unary("neg", tape.reduce("mean", d_fake))
    raise ValueError(f"unknown adversarial loss {kind!r}")


def adv_g_loss_scores(tape: Tape, s_fake: VarId, kind: str, generator_adv: str) -> VarId:
    if kind == "log":
        if generator_adv == "saturating":
            return tape.unary("neg", tape.reduce("mean", _softplus(tape, s_fake)))
        return tape.reduce("mean", _softplus(tape, tape.unary("neg", s_fake)))
    return adv_g_loss(tape, s_fake, kind, generator_adv)


def classification_ce(tape: Tape, logits: VarId, labels) -> VarId:
    """Mean cross-entropy of integer labels under softmax(logits)."""
    return tape.unary("neg", tape.reduce("mean", tape.gather_log_softmax(logits, labels)))


def projection_score(
    tape: Tape,
    features: VarId,
    psi_w: VarId,
    psi_b: VarId,
    embedding: VarId,
    y,
) -> VarId:
    """Conditional score psi(phi(x)) + e_y . phi(x) on given features.

    embedding is (K, F); the row pick is a one-hot matmul so its gradient
    scatters back to the selected rows.
    """
    feats = tape.value(features)
    emb = tape.value(embedding)
    if emb.shape[1] != feats.shape[1]:
        raise ValueError(
            f"embedding dim {emb.shape[1]} does not match feature dim {feats.shape[1]}"
        )
    y = np.asarray(y)
    if np.any((y < 0) | (y >= emb.shape[0])):
        raise ValueError(f"label out of range for {emb.shape[0]} embedding rows")
    onehot = np.zeros((feats.shape[0], emb.shape[0]))
    onehot[np.arange(feats.shape[0]), y] = 1.0
    selected = tape.binary("matmul", tape.leaf(onehot), embedding)
    ones = tape.leaf(np.ones((feats.shape[1], 1)))
    dot = tape.binary("matmul", tape.binary("mul", selected, features), ones)
    psi = tape.binary("add", tape.binary("matmul", features, psi_w), psi_b)
    return tape.binary("add", psi, dot)


def _scaled(tape: Tape, scale: float, x: VarId) -> VarId:
    return tape.binary("mul", tape.leaf(scale), x)


def assemble(
    tape: Tape,
    variant: GanVariant,
    real: tuple[VarId, np.ndarray],
    fake: tuple[VarId, np.ndarray],
    heads: PlayerHeads,
) -> LossBundle:
    """Build every player's minimized loss for one batch pair.

    real/fake are (x node id, integer labels). Which loss each player applies
    is the caller's duty: the harness routes gradients through per-player
    parameter lists, so d_loss never updates G and cmi_loss never updates G.
    """
    x_real, y_real = real
    x_fake, y_fake = fake
    lam = variant.lambda_c
    diags: dict[str, float] = {}

    if variant.kind in ("cgan_concat", "projection"):
        if heads.cond_score is None:
            raise ValueError(f"variant {variant.kind!r} needs a conditional score head")
        s_real = heads.cond_score(tape, x_real, y_real)
        s_fake = heads.cond_score(tape, x_fake, y_fake)
    else:
        if heads.adv_score is None:
            raise ValueError(f"variant {variant.kind!r} needs an adversarial head")
        s_real = heads.adv_score(tape, x_real)
        s_fake = heads.adv_score(tape, x_fake)

    d_loss = adv_d_loss_scores(tape, s_real, s_fake, variant.adv_loss)
    g_adv = adv_g_loss_scores(tape, s_fake, variant.adv_loss, variant.generator_adv)
    diags["term_a"] = -float(tape.value(d_loss))

    c_loss = None
    cmi_loss = None
    g_loss = g_adv

    if variant.has_classifier:
        if heads.cls_logits is None:
            raise ValueError(f"variant {variant.kind!r} needs a classifier head")
        ce_real = classification_ce(tape, heads.cls_logits(tape, x_real), y_real)
        ce_fake = classification_ce(tape, heads.cls_logits(tape, x_fake), y_fake)
        diags["ce_real"] = float(tape.value(ce_real))
        diags["ce_fake"] = float(tape.value(ce_fake))
        if variant.classifier_on_fake:
            c_loss = _scaled(tape, lam, tape.binary("add", ce_real, ce_fake))
        else:
            c_loss = _scaled(tape, lam, ce_real)
        g_loss = tape.binary("add", g_loss, _scaled(tape, lam, ce_fake))

    if variant.has_twin:
        if heads.twin_logits is None:
            raise ValueError("tacgan needs a twin classifier head")
        ce_twin = classification_ce(tape, heads.twin_logits(tape, x_fake), y_fake)
        diags["twin_v"] = -float(tape.value(ce_twin))
        cmi_loss = _scaled(tape, lam, ce_twin)
        g_loss = tape.binary("sub", g_loss, _scaled(tape, lam, ce_twin))

    return LossBundle(d_loss=d_loss, g_loss=g_loss, c_loss=c_loss, cmi_loss=cmi_loss, diagnostics=diags)
