"""Experiment orchestration: configs, the alternating training loop, sweeps.

A run is fully described by a RunConfig (seed included) and produces a
RunRecord: the config snapshot, a long-format metric series, final generated
samples, final network checkpoints, and build/wall-clock info. Identical
configs give bit-identical metric series.

Randomness is one seed split into named substreams (init/*, data, noise,
eval/*), so adding an evaluation never perturbs training randomness.
"""

from __future__ import annotations

import csv
import json
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import Tape
from .gan_losses import GanVariant, PlayerHeads, assemble, projection_score
from .metrics import label_proportions, median_heuristic, mmd_biased
from .networks import (
    Adam,
    MlpSpec,
    forward,
    forward_np,
    init_mlp,
    init_multihead,
    lift_params,
    load_params,
    multihead_params,
    save_params,
)
from .synthdata import (
    balanced_batches,
    build_overlap_groups,
    load_idx,
    make_mog_spec,
    sample_mog,
)

SCHEMA_VERSION = 1

EXPERIMENTS = ("mog1d", "mog2d", "mnist_overlap")

OUT_ROOT_ENV = "TACGAN_OUT_ROOT"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries a diagnostic snapshot."""

    def __init__(self, iteration: int, losses: dict):
        self.iteration = iteration
        self.losses = losses
        super().__init__(f"non-finite loss at iteration {iteration}: {losses}")


@dataclass
class RunConfig:
    """One experiment's complete, seedable description."""

    experiment: str
    variant: str
    seed: int = 0
    adv_loss: str = "log"
    generator_adv: str = "nonsaturating"
    lambda_c: float = 0.0
    classifier_on_fake: bool = True
    d_m: float = 3.0
    mog_stds: tuple = (1.0, 2.0, 3.0)
    iterations: int = 20000
    steps_d_per_g: int = 10
    batch_size: int = 255
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # 8-d latent: 2-d starves the mixture generator on some seeds
    latent_dim: int = 8
    g_hidden: tuple = (10, 10)
    d_hidden: tuple = (10, 10)
    train_size: int = 30000
    eval_every: int = 1000
    eval_samples: int = 3000
    final_samples: int = 30000
    trunk_cls_grads: str = "c_step_only"
    data_dir: str | None = None
    out_dir: str | None = None

    @property
    def n_classes(self) -> int:
        return 2 if self.experiment == "mnist_overlap" else 3

    @property
    def run_id(self) -> str:
        parts = [self.experiment, self.variant]
        if self.experiment.startswith("mog"):
            parts.append(f"dm{self.d_m:g}")
        parts.append(f"lc{self.lambda_c:g}")
        parts.append(f"seed{self.seed}")
        return "-".join(parts)

    def gan_variant(self) -> GanVariant:
        return GanVariant(
            kind=self.variant,
            adv_loss=self.adv_loss,
            lambda_c=self.lambda_c,
            generator_adv=self.generator_adv,
            classifier_on_fake=self.classifier_on_fake,
        )


def mnist_config(variant: str, **overrides) -> RunConfig:
    """Overlap-MNIST defaults: batch 100, 2:1 steps, z-dim 128, wide MLPs."""
    base = dict(
        experiment="mnist_overlap",
        variant=variant,
        iterations=4000,
        steps_d_per_g=2,
        batch_size=100,
        latent_dim=128,
        g_hidden=(256, 256),
        d_hidden=(256, 256),
        eval_every=500,
        eval_samples=2000,
        final_samples=10000,
    )
    base.update(overrides)
    return RunConfig(**base)


def validate_config(config: RunConfig) -> None:
    if config.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    try:
        config.gan_variant()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if config.seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {config.seed}")
    if config.steps_d_per_g < 1:
        raise ConfigError(f"steps_d_per_g must be >= 1, got {config.steps_d_per_g}")
    if config.iterations < 0:
        raise ConfigError(f"iterations must be >= 0, got {config.iterations}")
    if config.batch_size % config.n_classes != 0:
        raise ConfigError(
            f"batch size {config.batch_size} not divisible by {config.n_classes} classes"
        )
    if config.eval_every < 1:
        raise ConfigError(f"eval_every must be >= 1, got {config.eval_every}")
    for name in ("lr", "adam_eps", "eval_samples", "final_samples"):
        if getattr(config, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(config, name)}")
    if config.trunk_cls_grads not in ("none", "c_step_only"):
        raise ConfigError(f"unknown trunk_cls_grads {config.trunk_cls_grads!r}")
    if config.experiment.startswith("mog") and config.d_m <= 0:
        raise ConfigError(f"d_m must be positive, got {config.d_m}")


def config_to_dict(config: RunConfig) -> dict:
    out = asdict(config)
    out["schema_version"] = SCHEMA_VERSION
    return out


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema version {version!r} not supported, expected {SCHEMA_VERSION}"
        )
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config field {unknown[0]!r}")
    for name in ("mog_stds", "g_hidden", "d_hidden"):
        if name in data:
            data[name] = tuple(data[name])
    config = RunConfig(**data)
    validate_config(config)
    return config


@dataclass(eq=False)
class RunRecord:
    """Everything one run produced; persists and reloads to equality."""

    config: RunConfig
    metrics: list  # (iteration, name, value) tuples
    final_x: np.ndarray
    final_y: np.ndarray
    checkpoints: dict  # player name -> ParamSet
    wall_clock: float
    build_id: str

    @property
    def run_id(self) -> str:
        return self.config.run_id

    def series(self, name: str) -> list[tuple[int, float]]:
        return [(it, val) for it, nm, val in self.metrics if nm == name]

    def last(self, name: str) -> float:
        vals = self.series(name)
        if not vals:
            raise KeyError(f"no metric named {name!r} in record {self.run_id}")
        return vals[-1][1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunRecord):
            return NotImplemented
        if (
            self.config != other.config
            or self.metrics != other.metrics
            or self.wall_clock != other.wall_clock
            or self.build_id != other.build_id
        ):
            return False
        if not (
            np.array_equal(self.final_x, other.final_x)
            and np.array_equal(self.final_y, other.final_y)
        ):
            return False
        if set(self.checkpoints) != set(other.checkpoints):
            return False
        for name, params in self.checkpoints.items():
            ours, theirs = params, other.checkpoints[name]
            if set(ours) != set(theirs):
                return False
            if any(not np.array_equal(ours[k], theirs[k]) for k in ours):
                return False
        return True


def derive_seed(seed: int, label: str) -> int:
    """Independent substream seed for a (run seed, purpose) pair."""
    ss = np.random.SeedSequence([seed, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def substream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label))


def _onehot(y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(y), k))
    out[np.arange(len(y)), y] = 1.0
    return out


class _Trainer:
    """Holds the players of one run and performs the alternating updates."""

    def __init__(self, config: RunConfig):
        validate_config(config)
        self.config = config
        self.variant = config.gan_variant()
        self.k = config.n_classes
        seed = config.seed

        if config.experiment == "mnist_overlap":
            self._setup_mnist_data(config)
        else:
            self._setup_mog_data(config)

        # fixed balanced label pattern for generated batches; batch-mean
        # losses are permutation invariant so the order carries no bias
        self.y_fake = np.repeat(np.arange(self.k), config.batch_size // self.k)
        self.onehot_fake = _onehot(self.y_fake, self.k)
        self.noise_rng = substream(seed, "noise")

        g_sizes = (config.latent_dim + self.k, *config.g_hidden, self.x_dim)
        g_out = "tanh" if config.experiment == "mnist_overlap" else "linear"
        self.g_spec = MlpSpec(g_sizes, output_kind=g_out)
        self.g_params = init_mlp(self.g_spec, derive_seed(seed, "init/g"))
        self.opt_g = Adam(self.g_params, config.lr, config.beta1, config.beta2, config.adam_eps)

        self.shared_trunk = config.experiment == "mnist_overlap" and self.variant.kind in (
            "vanilla",
            "acgan",
            "tacgan",
        )
        if self.shared_trunk:
            self._setup_shared_heads(config)
        else:
            self._setup_separate_nets(config)

        self.d_steps_done = 0
        self.g_steps_done = 0
        self.last_bundle_diag: dict = {}
        self.last_losses: dict = {}

    # -- data -------------------------------------------------------------

    def _setup_mog_data(self, config: RunConfig):
        dims = 2 if config.experiment == "mog2d" else 1
        base = (0.0, 0.0) if dims == 2 else 0.0
        self.mixture = make_mog_spec(config.d_m, base_mean=base, stds=config.mog_stds)
        self.x_dim = dims
        train = sample_mog(self.mixture, config.train_size, derive_seed(config.seed, "data/train"))
        self.batches = balanced_batches(
            train.x, train.y, config.batch_size, derive_seed(config.seed, "data/batches")
        )
        self.eval_real = sample_mog(
            self.mixture, config.eval_samples, derive_seed(config.seed, "eval/real")
        ).x
        self.oracle_fn = None

    def _setup_mnist_data(self, config: RunConfig):
        if not config.data_dir:
            raise ConfigError("mnist_overlap runs need data_dir (see the mnist-prepare command)")
        data_dir = Path(config.data_dir)
        groups_path = data_dir / "groups.npz"
        oracle_path = data_dir / "oracle.json"
        if not groups_path.exists() or not oracle_path.exists():
            raise ConfigError(f"prepared MNIST data not found under {data_dir}")
        blob = np.load(groups_path)
        self.x_dim = blob["x"].shape[1]
        self.mixture = None
        self.batches = balanced_batches(
            blob["x"], blob["group"], config.batch_size, derive_seed(config.seed, "data/batches")
        )
        self.true_digits = blob["digit"]
        oracle_params = load_params(oracle_path)
        n_layers = len([k for k in oracle_params if k.startswith("W")])
        sizes = [oracle_params["W0"].shape[0]] + [
            oracle_params[f"W{i}"].shape[1] for i in range(n_layers)
        ]
        oracle_spec = MlpSpec(tuple(sizes))
        self.oracle_fn = lambda x: forward_np(oracle_spec, oracle_params, x)
        self.eval_real = None

    # -- networks ----------------------------------------------------------

    def _setup_separate_nets(self, config: RunConfig):
        seed = config.seed
        kind = self.variant.kind
        self.players: dict[str, dict] = {}

        if kind == "cgan_concat":
            d_spec = MlpSpec((self.x_dim + self.k, *config.d_hidden, 1))
            d_params = init_mlp(d_spec, derive_seed(seed, "init/d"))
            self.players["d"] = {"spec": d_spec, "params": d_params}
        elif kind == "projection":
            feat = config.d_hidden[-1]
            trunk_spec = MlpSpec((self.x_dim, *config.d_hidden), output_kind="relu")
            rng = substream(seed, "init/d_proj")
            bound = np.sqrt(1.0 / feat)
            d_params = init_mlp(trunk_spec, derive_seed(seed, "init/d"))
            d_params["psiW"] = rng.uniform(-bound, bound, size=(feat, 1))
            d_params["psib"] = np.zeros((1, 1))
            d_params["embed"] = rng.uniform(-bound, bound, size=(self.k, feat))
            self.players["d"] = {"spec": trunk_spec, "params": d_params}
        else:
            d_spec = MlpSpec((self.x_dim, *config.d_hidden, 1))
            d_params = init_mlp(d_spec, derive_seed(seed, "init/d"))
            self.players["d"] = {"spec": d_spec, "params": d_params}

        if self.variant.has_classifier:
            c_spec = MlpSpec((self.x_dim, *config.d_hidden, self.k))
            self.players["c"] = {"spec": c_spec, "params": init_mlp(c_spec, derive_seed(seed, "init/c"))}
        if self.variant.has_twin:
            cmi_spec = MlpSpec((self.x_dim, *config.d_hidden, self.k))
            self.players["cmi"] = {
                "spec": cmi_spec,
                "params": init_mlp(cmi_spec, derive_seed(seed, "init/cmi")),
            }
        for player in self.players.values():
            player["opt"] = Adam(
                player["params"], config.lr, config.beta1, config.beta2, config.adam_eps
            )
            player["names"] = list(player["params"])

    def _setup_shared_heads(self, config: RunConfig):
        trunk_spec = MlpSpec((self.x_dim, *config.d_hidden), output_kind="relu")
        head_dims = {"adv": 1, "cls": self.k}
        if self.variant.has_twin:
            head_dims["twin_cls"] = self.k
        self.net = init_multihead(trunk_spec, head_dims, derive_seed(config.seed, "init/d"))
        flat = multihead_params(self.net)
        trunk_names = [n for n in flat if n.startswith("trunk.")]
        self.players = {
            "d": {"params": flat, "names": trunk_names + ["head.adv.W", "head.adv.b"]}
        }
        cls_names = ["head.cls.W", "head.cls.b"]
        if config.trunk_cls_grads == "c_step_only":
            cls_names = trunk_names + cls_names
        self.players["c"] = {"params": flat, "names": cls_names}
        if self.variant.has_twin:
            self.players["cmi"] = {"params": flat, "names": ["head.twin_cls.W", "head.twin_cls.b"]}
        for player in self.players.values():
            subset = {n: flat[n] for n in player["names"]}
            player["opt"] = Adam(subset, config.lr, config.beta1, config.beta2, config.adam_eps)

    # -- forward helpers ----------------------------------------------------

    def sample_fake_np(self, rng: np.random.Generator, n: int | None = None):
        """Generated batch without a tape: (x, labels)."""
        if n is None:
            y = self.y_fake
            onehot = self.onehot_fake
        else:
            y = np.arange(n) % self.k
            onehot = _onehot(y, self.k)
        z = rng.standard_normal((len(y), self.config.latent_dim))
        x = forward_np(self.g_spec, self.g_params, np.concatenate([z, onehot], axis=1))
        return x, y

    def _lift_disc(self, tape: Tape, requires_grad: bool):
        ids = {}
        if self.shared_trunk:
            flat = self.players["d"]["params"]
            lifted = lift_params(tape, flat, requires_grad=requires_grad)
            for name in self.players:
                ids[name] = lifted
        else:
            for name, player in self.players.items():
                ids[name] = lift_params(tape, player["params"], requires_grad=requires_grad)
        return ids

    def _make_heads(self, tape: Tape, ids) -> PlayerHeads:
        config = self.config
        heads = PlayerHeads()
        if self.shared_trunk:
            memo = {}

            def feats(t, x):
                if x not in memo:
                    trunk_ids = {
                        k.split(".", 1)[1]: v for k, v in ids["d"].items() if k.startswith("trunk.")
                    }
                    memo[x] = forward(t, self.net.trunk_spec, trunk_ids, x)
                return memo[x]

            def head(name):
                def run(t, x):
                    f = feats(t, x)
                    return t.binary(
                        "add",
                        t.binary("matmul", f, ids["d"][f"head.{name}.W"]),
                        ids["d"][f"head.{name}.b"],
                    )

                return run

            heads.adv_score = head("adv")
            if self.variant.has_classifier:
                heads.cls_logits = head("cls")
            if self.variant.has_twin:
                heads.twin_logits = head("twin_cls")
            return heads

        kind = self.variant.kind
        if kind == "cgan_concat":
            d_spec = self.players["d"]["spec"]

            def cond(t, x, y):
                oh = t.leaf(_onehot(np.asarray(y), self.k))
                return forward(t, d_spec, ids["d"], t.concat([x, oh], axis=1))

            heads.cond_score = cond
        elif kind == "projection":
            trunk_spec = self.players["d"]["spec"]

            def cond(t, x, y):
                trunk_ids = {k: v for k, v in ids["d"].items() if k[0] in "Wb"}
                f = forward(t, trunk_spec, trunk_ids, x)
                return projection_score(
                    t, f, ids["d"]["psiW"], ids["d"]["psib"], ids["d"]["embed"], y
                )

            heads.cond_score = cond
        else:
            d_spec = self.players["d"]["spec"]
            heads.adv_score = lambda t, x: forward(t, d_spec, ids["d"], x)
        if self.variant.has_classifier:
            c_spec = self.players["c"]["spec"]
            heads.cls_logits = lambda t, x: forward(t, c_spec, ids["c"], x)
        if self.variant.has_twin:
            cmi_spec = self.players["cmi"]["spec"]
            heads.twin_logits = lambda t, x: forward(t, cmi_spec, ids["cmi"], x)
        return heads

    # -- steps ---------------------------------------------------------------

    def disc_step(self):
        """One synchronized update of D (and C, C^mi) on fresh batches."""
        xb, yb = next(self.batches)
        fake_x, fake_y = self.sample_fake_np(self.noise_rng)
        tape = Tape()
        ids = self._lift_disc(tape, requires_grad=True)
        heads = self._make_heads(tape, ids)
        bundle = assemble(
            tape, self.variant, (tape.leaf(xb), yb), (tape.leaf(fake_x), fake_y), heads
        )
        losses = {"d": bundle.d_loss, "c": bundle.c_loss, "cmi": bundle.cmi_loss}
        for name, player in self.players.items():
            loss_id = losses.get(name)
            if loss_id is None:
                continue
            grads = tape.backward(loss_id)
            player["opt"].step({pname: grads[ids[name][pname]] for pname in player["names"]})
        self.d_steps_done += 1
        self.last_bundle_diag = bundle.diagnostics
        self.last_losses["d_loss"] = float(tape.value(bundle.d_loss))
        if bundle.c_loss is not None:
            self.last_losses["c_loss"] = float(tape.value(bundle.c_loss))
        if bundle.cmi_loss is not None:
            self.last_losses["cmi_loss"] = float(tape.value(bundle.cmi_loss))

    def gen_step(self):
        """One generator update; discriminator-side parameters are frozen."""
        xb, yb = next(self.batches)
        z = self.noise_rng.standard_normal((self.config.batch_size, self.config.latent_dim))
        tape = Tape()
        g_ids = lift_params(tape, self.g_params, requires_grad=True)
        ids = self._lift_disc(tape, requires_grad=False)
        gin = tape.leaf(np.concatenate([z, self.onehot_fake], axis=1))
        fake_id = forward(tape, self.g_spec, g_ids, gin)
        heads = self._make_heads(tape, ids)
        bundle = assemble(
            tape, self.variant, (tape.leaf(xb), yb), (fake_id, self.y_fake), heads
        )
        grads = tape.backward(bundle.g_loss)
        self.opt_g.step({name: grads[g_ids[name]] for name in self.g_params})
        self.g_steps_done += 1
        self.last_bundle_diag = bundle.diagnostics
        self.last_losses["g_loss"] = float(tape.value(bundle.g_loss))

    def check_finite(self, iteration: int):
        if any(not np.isfinite(v) for v in self.last_losses.values()):
            raise TrainingDiverged(iteration, dict(self.last_losses))

    # -- evaluation ------------------------------------------------------------

    def eval_metrics(self, iteration: int) -> list[tuple[int, str, float]]:
        rows = [(iteration, name, value) for name, value in sorted(self.last_losses.items())]
        rows += [(iteration, name, value) for name, value in sorted(self.last_bundle_diag.items())]
        rng = substream(self.config.seed, f"eval/gen/{iteration}")
        if self.config.experiment.startswith("mog"):
            gen_x, _ = self.sample_fake_np(rng, n=self.config.eval_samples)
            h = median_heuristic(
                np.concatenate([self.eval_real, gen_x]),
                seed=derive_seed(self.config.seed, "eval/bandwidth"),
            )
            rows.append((iteration, "mmd", mmd_biased(self.eval_real, gen_x, h).value))
        elif self.oracle_fn is not None:
            gen_x, _ = self.sample_fake_np(rng, n=self.config.eval_samples)
            props = label_proportions(gen_x, self.oracle_fn)
            for digit, p in enumerate(props):
                rows.append((iteration, f"prop_digit{digit}", float(p)))
        return rows

    def checkpoints(self) -> dict:
        out = {"g": {k: v.copy() for k, v in self.g_params.items()}}
        if self.shared_trunk:
            out["d"] = {k: v.copy() for k, v in self.players["d"]["params"].items()}
        else:
            for name, player in self.players.items():
                out[name] = {k: v.copy() for k, v in player["params"].items()}
        return out


def run_training(config: RunConfig) -> RunRecord:
    """Alternating minimax loop: steps_d_per_g disc updates, then one G update.

    Metrics are logged before training (iteration 0), every eval_every
    generator steps, and at the final iteration. Non-finite losses abort with
    a TrainingDiverged snapshot.
    """
    start = time.perf_counter()
    trainer = _Trainer(config)
    metrics: list[tuple[int, str, float]] = []
    metrics.extend(trainer.eval_metrics(0))
    for iteration in range(1, config.iterations + 1):
        try:
            for _ in range(config.steps_d_per_g):
                trainer.disc_step()
            trainer.gen_step()
        except ValueError as exc:
            # blown-up parameters surface as non-finite leaf rejections
            if "non-finite" in str(exc):
                raise TrainingDiverged(iteration, dict(trainer.last_losses)) from exc
            raise
        trainer.check_finite(iteration)
        if iteration % config.eval_every == 0 or iteration == config.iterations:
            metrics.extend(trainer.eval_metrics(iteration))
    metrics.append((config.iterations, "d_steps", float(trainer.d_steps_done)))
    metrics.append((config.iterations, "g_steps", float(trainer.g_steps_done)))

    final_rng = substream(config.seed, "eval/final")
    final_x, final_y = trainer.sample_fake_np(final_rng, n=config.final_samples)
    record = RunRecord(
        config=config,
        metrics=metrics,
        final_x=final_x,
        final_y=final_y,
        checkpoints=trainer.checkpoints(),
        wall_clock=time.perf_counter() - start,
        build_id=__version__,
    )
    if config.out_dir:
        save_record(record, config.out_dir)
    return record


def classifier_fn(record: RunRecord):
    """Rebuild the run's trained auxiliary classifier as a logits callable."""
    config = record.config
    if "c" in record.checkpoints:
        params = record.checkpoints["c"]
        x_dim = params["W0"].shape[0]
        spec = MlpSpec((x_dim, *config.d_hidden, config.n_classes))
        return lambda x: forward_np(spec, params, x)
    flat = record.checkpoints.get("d", {})
    if any(k.startswith("trunk.") for k in flat):
        trunk = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("trunk.")}
        n_layers = len([k for k in trunk if k.startswith("W")])
        sizes = [trunk["W0"].shape[0]] + [trunk[f"W{i}"].shape[1] for i in range(n_layers)]
        trunk_spec = MlpSpec(tuple(sizes), output_kind="relu")
        w, b = flat["head.cls.W"], flat["head.cls.b"]
        return lambda x: forward_np(trunk_spec, trunk, x) @ w + b
    raise KeyError(f"record {record.run_id} has no classifier checkpoint")


# -- persistence --------------------------------------------------------------


def _format_float(value: float) -> str:
    return repr(float(value))


def save_record(record: RunRecord, run_dir) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.json", "w") as fh:
        json.dump(config_to_dict(record.config), fh, indent=2)
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "iteration", "metric", "value"])
        for iteration, name, value in record.metrics:
            writer.writerow([record.run_id, iteration, name, _format_float(value)])
    np.save(run_dir / "final_x.npy", record.final_x)
    np.save(run_dir / "final_y.npy", record.final_y)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for name, params in record.checkpoints.items():
        save_params(params, ckpt_dir / f"{name}.json")
    with open(run_dir / "record.json", "w") as fh:
        json.dump(
            {
                "schema_version": SCHEMA_VERSION,
                "run_id": record.run_id,
                "wall_clock": record.wall_clock,
                "build_id": record.build_id,
                "checkpoints": sorted(record.checkpoints),
            },
            fh,
            indent=2,
        )


def load_record(run_dir) -> RunRecord:
    run_dir = Path(run_dir)
    with open(run_dir / "record.json") as fh:
        meta = json.load(fh)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"record schema version {meta.get('schema_version')!r} not supported, "
            f"expected {SCHEMA_VERSION}"
        )
    with open(run_dir / "config.json") as fh:
        config = config_from_dict(json.load(fh))
    metrics = []
    with open(run_dir / "metrics.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["run_id", "iteration", "metric", "value"]:
            raise ConfigError(f"unexpected metrics header {header}")
        for row in reader:
            metrics.append((int(row[1]), row[2], float(row[3])))
    checkpoints = {
        name: load_params(run_dir / "checkpoints" / f"{name}.json")
        for name in meta["checkpoints"]
    }
    return RunRecord(
        config=config,
        metrics=metrics,
        final_x=np.load(run_dir / "final_x.npy"),
        final_y=np.load(run_dir / "final_y.npy"),
        checkpoints=checkpoints,
        wall_clock=meta["wall_clock"],
        build_id=meta["build_id"],
    )


# -- sweeps ---------------------------------------------------------------------

DM_SWEEP = (1.0, 2.0, 3.0, 4.0, 5.0)
LAMBDA_SWEEP = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)


def _sweep_one(config: RunConfig, out_root: str) -> tuple[str, str, str]:
    try:
        config = replace(config, out_dir=str(Path(out_root) / config.run_id))
        run_training(config)
        return (config.run_id, "ok", "")
    except TrainingDiverged as exc:
        return (config.run_id, "failed", str(exc))


def sweep_configs(axis: str, template: RunConfig, variants, values=None) -> list[RunConfig]:
    def lam_for(variant: str) -> float:
        # variants without an auxiliary classifier ignore the template weight
        return template.lambda_c if variant in ("acgan", "tacgan") else 0.0

    if axis == "dm":
        values = DM_SWEEP if values is None else tuple(values)
        make = lambda v, var: replace(template, d_m=v, variant=var, lambda_c=lam_for(var))
    elif axis == "lambda":
        values = LAMBDA_SWEEP if values is None else tuple(values)
        make = lambda v, var: replace(template, lambda_c=v, variant=var)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; use 'dm' or 'lambda'")
    if not values:
        raise ConfigError("sweep axis has no values")
    configs = []
    for variant in variants:
        for value in values:
            cfg = make(value, variant)
            validate_config(cfg)
            configs.append(cfg)
    return configs


def sweep(
    axis: str,
    template: RunConfig,
    variants,
    out_root,
    values=None,
    workers: int = 1,
) -> list[tuple[str, str, str]]:
    """One run per (variant, axis value); failures are marked, not fatal.

    Returns (run_id, status, message) rows and writes them to summary.csv
    under out_root. Records are persisted per run id for later plotting.
    """
    configs = sweep_configs(axis, template, variants, values)
    out_root = str(out_root)
    Path(out_root).mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, configs, [out_root] * len(configs)))
    else:
        results = [_sweep_one(cfg, out_root) for cfg in configs]
    with open(Path(out_root) / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "status", "message"])
        writer.writerows(results)
    return results


# -- MNIST preparation -------------------------------------------------------------


def prepare_mnist(
    images_path,
    labels_path,
    out_dir,
    seed: int = 0,
    disjoint_zeros: bool = False,
    per_digit: int = 5000,
    oracle_target_accuracy: float = 0.99,
    oracle_max_epochs: int = 30,
) -> dict:
    """Build overlap groups and train the oracle digit classifier.

    Writes groups.npz (x, group, digit), oracle.json and prepare_meta.json
    into out_dir. The real MNIST training set has fewer than 2*per_digit
    zeros, so disjoint_zeros defaults to off; synthetic corpora with enough
    zeros can turn it on.
    """
    ds = load_idx(images_path, labels_path)
    groups = build_overlap_groups(ds, seed=seed, per_digit=per_digit, disjoint_zeros=disjoint_zeros)
    x, group, digit = groups.stacked()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez(out_dir / "groups.npz", x=x, group=group, digit=digit)

    # oracle training set: every 0/1/2 in the source data, scaled like groups
    keep = np.isin(ds.labels, (0, 1, 2))
    ox = ds.images[keep].reshape(keep.sum(), -1).astype(np.float64) / 127.5 - 1.0
    oy = ds.labels[keep].astype(np.int64)
    rng = substream(seed, "oracle/split")
    order = rng.permutation(len(oy))
    n_heldout = max(1, len(oy) // 10)
    held, train = order[:n_heldout], order[n_heldout:]

    spec = MlpSpec((ox.shape[1], 256, 256, 3))
    params = init_mlp(spec, derive_seed(seed, "oracle/init"))
    opt = Adam(params, lr=1e-3, beta1=0.9, beta2=0.999)
    batch_rng = substream(seed, "oracle/batches")
    accuracy = 0.0
    for _epoch in range(oracle_max_epochs):
        perm = batch_rng.permutation(train)
        for start in range(0, len(perm), 128):
            idx = perm[start : start + 128]
            tape = Tape()
            ids = lift_params(tape, params)
            logits = forward(tape, spec, ids, tape.leaf(ox[idx]))
            loss = tape.unary(
                "neg", tape.reduce("mean", tape.gather_log_softmax(logits, oy[idx]))
            )
            grads = tape.backward(loss)
            opt.step({name: grads[ids[name]] for name in params})
        preds = forward_np(spec, params, ox[held]).argmax(axis=1)
        accuracy = float((preds == oy[held]).mean())
        if accuracy >= oracle_target_accuracy:
            break
    save_params(params, out_dir / "oracle.json")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "disjoint_zeros": disjoint_zeros,
        "per_digit": per_digit,
        "oracle_heldout_accuracy": accuracy,
        "oracle_layer_sizes": list(spec.layer_sizes),
    }
    with open(out_dir / "prepare_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return meta


def default_out_root() -> str:
    return os.environ.get(OUT_ROOT_ENV, "runs")
