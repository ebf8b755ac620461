"""Four-step alternating training loop, metrics, evaluation, persistence.

Each train step runs exactly: encoder update, generator update, recognizer
update (real images only), discriminator update (real + generated +
reconstructed sets). Every sub-step rebuilds its forward graph with current
parameters and applies gradients only inside its own namespace.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .checkpoint import CheckpointBundle, ConfigMismatchError, save_checkpoint
from .data import Sample, build_dataset
from .losses import (LossReport, LossWeights, compose_enc_loss, compose_gen_loss,
                     dis_loss, gen_adv_loss, kl_prior, recog_loss, recon_feature_loss)
from .model import ModelConfig, ViGAN
from .optim import adam_step, make_optimizers
from .tensor import Tape, backward

SUBSTEP_ORDER = ("enc", "gen", "rec", "dis")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    total_steps: int
    seed: int
    weights: LossWeights
    model: ModelConfig
    optimizer: dict
    checkpoint_every: int
    eval_every: int
    dataset: dict

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batchnorm needs it)")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


@dataclass
class Batch:
    images: np.ndarray      # [B, C, H, W] in [-1, 1]
    attributes: np.ndarray  # [B, c_dim]


TRAIN_KEYS = ("batch_size", "total_steps", "seed", "lambda1", "lambda2",
              "optimizer", "checkpoint_every", "eval_every", "dataset", "model")
MODEL_KEYS = ("image_size", "channels", "z_dim", "c_dim", "conv_channels",
              "gen_channels", "fc_dim", "rec_fc_dim", "leaky_slope",
              "logvar_min", "logvar_max", "attr_groups")


def model_config_from_dict(d: dict) -> ModelConfig:
    unknown = set(d) - set(MODEL_KEYS)
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")
    missing = set(MODEL_KEYS) - set(d)
    if missing:
        raise ValueError(f"missing model config keys: {sorted(missing)}")
    return ModelConfig(
        image_size=int(d["image_size"]), channels=int(d["channels"]),
        z_dim=int(d["z_dim"]), c_dim=int(d["c_dim"]),
        conv_channels=tuple(int(c) for c in d["conv_channels"]),
        gen_channels=tuple(int(c) for c in d["gen_channels"]),
        fc_dim=int(d["fc_dim"]), rec_fc_dim=int(d["rec_fc_dim"]),
        leaky_slope=float(d["leaky_slope"]),
        logvar_min=float(d["logvar_min"]), logvar_max=float(d["logvar_max"]),
        attr_groups=tuple((str(n), int(s)) for n, s in d["attr_groups"]),
    )


def model_config_to_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["conv_channels"] = list(d["conv_channels"])
    d["gen_channels"] = list(d["gen_channels"])
    d["attr_groups"] = [[n, s] for n, s in d["attr_groups"]]
    return d


def train_config_from_dict(d: dict) -> TrainConfig:
    unknown = set(d) - set(TRAIN_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    missing = set(TRAIN_KEYS) - set(d)
    if missing:
        raise ValueError(f"missing config keys: {sorted(missing)}")
    return TrainConfig(
        batch_size=int(d["batch_size"]), total_steps=int(d["total_steps"]),
        seed=int(d["seed"]),
        weights=LossWeights(float(d["lambda1"]), float(d["lambda2"])),
        model=model_config_from_dict(d["model"]),
        optimizer=dict(d["optimizer"]),
        checkpoint_every=int(d["checkpoint_every"]),
        eval_every=int(d["eval_every"]),
        dataset=dict(d["dataset"]),
    )


def train_config_to_dict(config: TrainConfig) -> dict:
    return {
        "batch_size": config.batch_size, "total_steps": config.total_steps,
        "seed": config.seed, "lambda1": config.weights.lambda1,
        "lambda2": config.weights.lambda2, "optimizer": dict(config.optimizer),
        "checkpoint_every": config.checkpoint_every, "eval_every": config.eval_every,
        "dataset": dict(config.dataset), "model": model_config_to_dict(config.model),
    }


def sample_prior(pool: np.ndarray, batch_size: int, rng: np.random.Generator,
                 z_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """z ~ N(0, I) plus attribute vectors drawn from the empirical pool."""
    if len(pool) == 0:
        raise ValueError("attribute pool is empty")
    z = rng.standard_normal((batch_size, z_dim)).astype(np.float32)
    c = pool[rng.integers(len(pool), size=batch_size)]
    return z, c.copy()


class Trainer:
    def __init__(self, config: TrainConfig, train_set: list[Sample],
                 heldout: Optional[list[Sample]] = None,
                 probe: Optional[Callable[[str, dict], None]] = None):
        if not train_set:
            raise ValueError("training dataset is empty")
        self.config = config
        self.model = ViGAN.build(config.model, seed=config.seed)
        self.opts = make_optimizers(self.model.store, config.optimizer)
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7A1]))
        self.step = 0
        self.probe = probe
        self.images = np.stack([s.image for s in train_set]).astype(np.float32)
        self.pool = np.stack([s.attributes for s in train_set]).astype(np.float32)
        self.heldout = heldout or []

    # --- batching -------------------------------------------------------------

    def _batch(self, step: int) -> Batch:
        """Deterministic schedule: per-epoch permutation keyed by (seed, epoch)."""
        n = len(self.images)
        bs = self.config.batch_size
        per_epoch = max(n // bs, 1)
        epoch, slot = divmod(step, per_epoch)
        perm = np.random.default_rng(
            np.random.SeedSequence([self.config.seed, 0x5E9, epoch])).permutation(n)
        idx = perm[slot * bs:(slot + 1) * bs]
        return Batch(images=self.images[idx], attributes=self.pool[idx])

    # --- sub-steps --------------------------------------------------------------

    def _apply(self, tape: Tape, loss, net: str, components: dict) -> None:
        if not np.isfinite(float(loss.value)):
            raise RuntimeError(
                f"non-finite loss in {net!r} sub-step; components so far: {components}")
        grads = backward(tape, loss)
        pgrads = {name: grads[nid] for name, nid in tape.param_ids.items()
                  if name.startswith(net + "/")}
        adam_step(self.model.store, pgrads, self.opts[net])

    def _reconstruct(self, tape: Tape, x, c):
        enc = self.model.encode(x, "train")
        eps = self.rng.standard_normal(enc.mu.shape).astype(np.float32)
        z = self.model.reparameterize(enc, eps)
        return enc, self.model.generate(z, c, "train")

    def _substep_enc(self, batch: Batch, components: dict):
        tape = Tape()
        x = tape.constant(batch.images)
        c = tape.constant(batch.attributes)
        enc, x_rec = self._reconstruct(tape, x, c)
        f_real = self.model.discriminate(x, "train").features
        f_rec = self.model.discriminate(x_rec, "train", track_stats=False).features
        l_prior = kl_prior(enc.mu, enc.logvar)
        l_recon = recon_feature_loss(f_real, f_rec)
        components["l_prior"] = float(l_prior.value)
        components["l_recon"] = float(l_recon.value)
        self._apply(tape, compose_enc_loss(l_prior, l_recon), "enc", components)

    def _substep_gen(self, batch: Batch, components: dict):
        bs = len(batch.images)
        tape = Tape()
        x = tape.constant(batch.images)
        c = tape.constant(batch.attributes)
        _, x_rec = self._reconstruct(tape, x, c)
        f_real = self.model.discriminate(x, "train").features
        d_rec, q_rec = self.model.discriminate_and_recognize(x_rec, "train",
                                                             track_stats=False)
        z_p, c_p = sample_prior(self.pool, bs, self.rng, self.config.model.z_dim)
        x_gen = self.model.generate(tape.constant(z_p), tape.constant(c_p), "train")
        d_gen, q_gen = self.model.discriminate_and_recognize(x_gen, "train",
                                                             track_stats=False)
        adv_rec = gen_adv_loss(d_rec.p_real)
        adv_gen = gen_adv_loss(d_gen.p_real)
        recog_rec = recog_loss(batch.attributes, q_rec)
        recog_gen = recog_loss(c_p, q_gen)
        l_recon = recon_feature_loss(f_real, d_rec.features)
        loss = compose_gen_loss(adv_rec, recog_rec, adv_gen, recog_gen, l_recon,
                                self.config.weights)
        components["l_gen_adv"] = float(adv_rec.value) + float(adv_gen.value)
        components["l_gen"] = float(loss.value)
        self._apply(tape, loss, "gen", components)

    def _substep_rec(self, batch: Batch, components: dict):
        tape = Tape()
        x = tape.constant(batch.images)
        q = self.model.recognize(x, "train")
        loss = recog_loss(batch.attributes, q)
        components["l_recog"] = float(loss.value)
        self._apply(tape, loss, "rec", components)

    def _substep_dis(self, batch: Batch, components: dict):
        bs = len(batch.images)
        tape = Tape()
        x = tape.constant(batch.images)
        c = tape.constant(batch.attributes)
        _, x_rec = self._reconstruct(tape, x, c)
        z_p, c_p = sample_prior(self.pool, bs, self.rng, self.config.model.z_dim)
        x_gen = self.model.generate(tape.constant(z_p), tape.constant(c_p), "train")
        p_real = self.model.discriminate(x, "train").p_real
        p_gen = self.model.discriminate(x_gen, "train", track_stats=False).p_real
        p_rec = self.model.discriminate(x_rec, "train", track_stats=False).p_real
        loss = dis_loss(p_real, p_gen, p_rec)
        components["l_dis"] = float(loss.value)
        self._apply(tape, loss, "dis", components)
        return bs

    def train_step(self, batch: Batch) -> LossReport:
        bs = len(batch.images)
        components: dict = {}
        if self.probe:
            self.probe("start", {"step": self.step, "batch_size": bs})
        self._substep_enc(batch, components)
        if self.probe:
            self.probe("enc", dict(components))
        self._substep_gen(batch, components)
        if self.probe:
            self.probe("gen", dict(components))
        self._substep_rec(batch, components)
        if self.probe:
            self.probe("rec", {"input": "real", "n": bs, **components})
        self._substep_dis(batch, components)
        if self.probe:
            self.probe("dis", {"n_real": bs, "n_gen": bs, "n_rec": bs, **components})
        report = LossReport(
            l_prior=components["l_prior"], l_recon=components["l_recon"],
            l_recog=components["l_recog"], l_gen_adv=components["l_gen_adv"],
            l_dis=components["l_dis"],
            l_enc=components["l_prior"] + components["l_recon"],
            l_gen=components["l_gen"],
        )
        if not report.finite():
            raise RuntimeError(f"non-finite loss report: {report.as_dict()}")
        return report

    # --- orchestration ----------------------------------------------------------

    def run(self, out_dir=None,
            sample_grid_fn: Optional[Callable[["Trainer", Path, int], None]] = None):
        """Train to total_steps; returns (final bundle, metrics records)."""
        out = Path(out_dir) if out_dir is not None else None
        metrics_path = out / "metrics.log" if out else None
        records = []
        if out:
            out.mkdir(parents=True, exist_ok=True)
        log = open(metrics_path, "a") if metrics_path else None
        try:
            while self.step < self.config.total_steps:
                t0 = time.perf_counter()
                batch = self._batch(self.step)
                report = self.train_step(batch)
                self.step += 1
                record = {"step": self.step, **report.as_dict(),
                          "wall_time": time.perf_counter() - t0}
                records.append(record)
                if log:
                    log.write(json.dumps(record, sort_keys=True) + "\n")
                    log.flush()
                if self.config.eval_every and self.step % self.config.eval_every == 0 \
                        and self.heldout:
                    ev = evaluate(self.model, self.heldout)
                    ev_record = {"step": self.step, "eval": ev}
                    records.append(ev_record)
                    if log:
                        log.write(json.dumps(ev_record, sort_keys=True) + "\n")
                        log.flush()
                if out and self.config.checkpoint_every and \
                        self.step % self.config.checkpoint_every == 0:
                    save_checkpoint(self.to_bundle(), out / f"step_{self.step:06d}.ckpt")
                    if sample_grid_fn:
                        sample_grid_fn(self, out, self.step)
            if out:
                save_checkpoint(self.to_bundle(), out / "final.ckpt")
                if sample_grid_fn:
                    sample_grid_fn(self, out, self.step)
        finally:
            if log:
                log.close()
        return self.to_bundle(), records

    # --- persistence --------------------------------------------------------------

    def to_bundle(self) -> CheckpointBundle:
        tensors = {}
        store = self.model.store
        for name in store.names():
            tensors[f"param/{name}"] = store.param(name)
        for name in store.state_names():
            tensors[f"state/{name}"] = store.state(name)
        adam_meta = {}
        for net, st in self.opts.items():
            for pname in sorted(st.m):
                tensors[f"opt/{net}/m/{pname}"] = st.m[pname]
                tensors[f"opt/{net}/v/{pname}"] = st.v[pname]
            adam_meta[net] = {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2,
                              "eps": st.eps, "t": st.t, "grad_clip": st.grad_clip}
        return CheckpointBundle(
            model_config=model_config_to_dict(self.config.model),
            train_config=train_config_to_dict(self.config),
            step=self.step,
            rng_state=self.rng.bit_generator.state,
            adam=adam_meta,
            tensors=tensors,
        )

    @classmethod
    def from_bundle(cls, bundle: CheckpointBundle, config: TrainConfig,
                    train_set: list[Sample], heldout: Optional[list[Sample]] = None,
                    probe=None) -> "Trainer":
        if bundle.model_config != model_config_to_dict(config.model):
            raise ConfigMismatchError("checkpoint model config differs from the "
                                      "requested configuration")
        trainer = cls(config, train_set, heldout=heldout, probe=probe)
        restore_model(trainer.model, bundle)
        for net, st in trainer.opts.items():
            meta = bundle.adam[net]
            st.t = int(meta["t"])
            for pname in sorted(st.m):
                st.m[pname] = bundle.tensors[f"opt/{net}/m/{pname}"].copy()
                st.v[pname] = bundle.tensors[f"opt/{net}/v/{pname}"].copy()
        trainer.rng.bit_generator.state = bundle.rng_state
        trainer.step = bundle.step
        return trainer


def restore_model(model: ViGAN, bundle: CheckpointBundle) -> None:
    store = model.store
    for name in store.names():
        store.set_param(name, bundle.tensors[f"param/{name}"].copy())
    for name in store.state_names():
        store.set_state(name, bundle.tensors[f"state/{name}"].copy())


def model_from_bundle(bundle: CheckpointBundle) -> ViGAN:
    config = model_config_from_dict(bundle.model_config)
    model = ViGAN.build(config, seed=0)
    restore_model(model, bundle)
    return model


# --- evaluation -------------------------------------------------------------------

def _eval_batches(n: int, batch: int = 64):
    for i in range(0, n, batch):
        yield slice(i, min(i + batch, n))


def _recognize_np(model: ViGAN, images: np.ndarray) -> np.ndarray:
    out = []
    for sl in _eval_batches(len(images)):
        tape = Tape()
        out.append(model.recognize(tape.constant(images[sl]), "eval").value)
    return np.concatenate(out)


def _encode_mu_np(model: ViGAN, images: np.ndarray) -> np.ndarray:
    out = []
    for sl in _eval_batches(len(images)):
        tape = Tape()
        out.append(model.encode(tape.constant(images[sl]), "eval").mu.value)
    return np.concatenate(out)


def _generate_np(model: ViGAN, z: np.ndarray, c: np.ndarray) -> np.ndarray:
    out = []
    for sl in _eval_batches(len(z)):
        tape = Tape()
        img = model.generate(tape.constant(z[sl].astype(np.float32)),
                             tape.constant(c[sl].astype(np.float32)), "eval")
        out.append(img.value)
    return np.concatenate(out)


def _group_argmax(c: np.ndarray, slices: dict) -> dict[str, np.ndarray]:
    return {name: np.argmax(c[:, sl], axis=1) for name, sl in slices.items()}


def plan_edits(true_attrs: np.ndarray, config: ModelConfig):
    """Deterministic edit plan: per sample, one group reassigned to a new class.

    Sample i edits group (i mod n_groups) to class (current + 1 + i mod
    (k - 1)) mod k, which is always different from the current class.
    """
    slices = config.group_slices()
    names = list(slices)
    edited = true_attrs.copy()
    plan = []
    for i in range(len(true_attrs)):
        gname = names[i % len(names)]
        sl = slices[gname]
        k = sl.stop - sl.start
        current = int(np.argmax(true_attrs[i, sl]))
        target = (current + 1 + (i % (k - 1))) % k
        edited[i, sl] = 0.0
        edited[i, sl.start + target] = 1.0
        plan.append((gname, target))
    return edited, plan


def evaluate(model: ViGAN, heldout: list[Sample]) -> dict:
    """Recognizer accuracy, edit fidelity, untouched-slot preservation,
    and pixel reconstruction error on held-out data (eval mode)."""
    if not heldout:
        raise ValueError("held-out dataset is empty")
    config = model.config
    slices = config.group_slices()
    images = np.stack([s.image for s in heldout]).astype(np.float32)
    attrs = np.stack([s.attributes for s in heldout]).astype(np.float32)
    true_cls = _group_argmax(attrs, slices)

    q_real = _recognize_np(model, images)
    pred_cls = _group_argmax(q_real, slices)
    recog_accuracy = float(np.mean([pred_cls[g] == true_cls[g] for g in slices]))

    mu = _encode_mu_np(model, images)
    recon = _generate_np(model, mu, attrs)
    recon_error = float(np.mean((recon - images) ** 2))

    edited_attrs, plan = plan_edits(attrs, config)
    edited_imgs = _generate_np(model, mu, edited_attrs)
    q_edit = _recognize_np(model, edited_imgs)
    edit_cls = _group_argmax(q_edit, slices)
    fidelity_hits = []
    preserved_hits = []
    for i, (gname, target) in enumerate(plan):
        fidelity_hits.append(edit_cls[gname][i] == target)
        others = [edit_cls[g][i] == true_cls[g][i] for g in slices if g != gname]
        preserved_hits.append(all(others))
    return {
        "recog_accuracy": recog_accuracy,
        "edit_fidelity": float(np.mean(fidelity_hits)),
        "preservation": float(np.mean(preserved_hits)),
        "recon_error": recon_error,
    }


def make_trainer(config: TrainConfig, probe=None) -> Trainer:
    train_set, heldout = build_dataset(config.dataset)
    return Trainer(config, train_set, heldout=heldout, probe=probe)
