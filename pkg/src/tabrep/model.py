"""Customer encoder: four embedding branches fused into one representation.

Static categorical and static numerical features become fixed-width vectors
through their embedding banks and columnwise max. The two dynamic branches
run their per-time-step embeddings through an adaptive-depth transformer and
mix the halted states into one vector each. A small fusion network maps the
concatenated branch vectors (plus presence bits) to the representation.

Training couples two mechanisms: reconstruction of frozen random projections
of a model-free customer summary, and any number of supervised
classification heads, joined in a single weighted loss with a ponder
penalty on the adaptive depth.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numeric
from .dynamics import TransformerConfig, TransformerParams, act_run, dynamic_embed
from .embed import EmbeddingBank, categorical_embed, max_concat, positional_numeric_embed
from .encode import (Batch, BranchLayout, augmented_summary, encode_customer,
                     stack_encoded, check_schema, summary_width)
from .errors import (AllTermsDisabledError, ConfigError, NoLabeledCustomersError,
                     TableIOError, UnknownTaskError)
from .numeric import Parameter, Tensor
from .prep import FeatureSchema
from .table import BigTable

MODEL_FORMAT = "tabrep-model"
MODEL_VERSION = 1
EVAL_BATCH = 256


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes; `embed_dim` is both branch and transformer width."""

    embed_dim: int = 32
    n_s: int = 8
    heads: int = 4
    t_max: int = 4
    act_epsilon: float = 0.01
    dropout: float = 0.1
    rep_width: int = 32
    fusion_hidden: int = 64
    head_hidden: int = 32
    recon_count: int = 3
    recon_dim: int = 16
    attention_literal_scale: bool = False

    def transformer(self) -> TransformerConfig:
        # ponder_cost 1.0: the training loss applies its own ponder weight
        return TransformerConfig(n_s=self.n_s, n_e=self.embed_dim, k=self.heads,
                                 t_max=self.t_max, act_epsilon=self.act_epsilon,
                                 ponder_cost=1.0, dropout=self.dropout,
                                 literal_scale=self.attention_literal_scale)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    recon_weight: float = 0.5
    ponder_weight: float = 0.01
    task_weights: dict | None = None
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.recon_weight < 0 or self.ponder_weight < 0:
            raise ConfigError("loss weights must be non-negative")


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(np.max(logits.data, axis=axis, keepdims=True))
    shifted = logits - shift
    return shifted - numeric.log(numeric.tensor_sum(numeric.exp(shifted), axis=axis, keepdims=True))


def cross_entropy(logits: Tensor, labels: np.ndarray, class_weights: np.ndarray) -> Tensor:
    """Class-weighted mean negative log-likelihood.

    Normalized by the total picked weight, so uniform logits score ln(C)
    regardless of the weighting.
    """
    labels = np.asarray(labels, dtype=np.int64)
    picked = log_softmax(logits)[np.arange(len(labels)), labels]
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    total = w.sum()
    if total <= 0:
        raise ConfigError("no positive class weight among the batch labels")
    return numeric.tensor_sum(picked * Tensor(-w)) * (1.0 / total)


def mean_squared_error(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred - Tensor(np.asarray(target, dtype=np.float64))
    return numeric.tensor_mean(diff * diff)


def joint_loss(recon_terms, task_terms, ponder, recon_weight: float,
               ponder_weight: float, task_weights: dict | None = None) -> Tensor:
    """recon_weight * sum(recon) + sum(w_task * task) + ponder_weight * ponder.

    Raises when nothing trainable remains (no supervised term and the
    reconstruction side disabled or empty).
    """
    recon_on = recon_weight > 0 and len(recon_terms) > 0
    if not recon_on and not task_terms:
        raise AllTermsDisabledError("loss has no reconstruction and no supervised term")
    weights = task_weights or {}
    loss = Tensor(np.zeros(()))
    if recon_on:
        total = recon_terms[0]
        for term in recon_terms[1:]:
            total = total + term
        loss = loss + recon_weight * total
    for task, term in task_terms.items():
        loss = loss + float(weights.get(task, 1.0)) * term
    if ponder_weight > 0 and ponder is not None:
        loss = loss + ponder_weight * ponder
    return loss


@dataclass
class ForwardResult:
    rep: Tensor                    # [b, rep_width]
    ponder: Tensor | None          # raw (unit-cost) ponder, summed over branches
    branch_stats: dict = field(default_factory=dict)


class CustomerEncoder:
    """The representation model over one schema.

    `tasks` maps head name to class count; heads can be present and simply
    unused when training unsupervised. All randomness is drawn from named
    substreams of `seed`, so two encoders built with equal arguments hold
    bitwise-equal initial parameters.
    """

    def __init__(self, schema: FeatureSchema, config: ModelConfig = ModelConfig(),
                 tasks: dict[str, int] | None = None, seed: int = 0):
        self.schema = schema
        self.config = config
        self.tasks = dict(tasks or {})
        self.seed = int(seed)
        for task, n_classes in self.tasks.items():
            if n_classes < 2:
                raise ConfigError(f"task {task!r} needs >= 2 classes, got {n_classes}")

        self.layout = BranchLayout.from_schema(schema, config.n_s)
        self.tconfig = config.transformer()
        d = config.embed_dim
        rng = numeric.substream(self.seed, "init")

        self.static_bank = EmbeddingBank.build(
            d, dict(zip(self.layout.cs_features, self.layout.cs_vocab_sizes)),
            list(self.layout.sn_features), rng, "static")
        self.dynamic_bank = EmbeddingBank.build(
            d, dict(zip(self.layout.cd_features, self.layout.cd_vocab_sizes)),
            list(self.layout.dn_features), rng, "dynamic")
        self.cd_params = (TransformerParams.init(self.tconfig, rng, "cd")
                          if self.layout.cd_features else None)
        self.nd_params = (TransformerParams.init(self.tconfig, rng, "nd")
                          if self.layout.dn_features else None)

        fusion_in = 4 * d + 4
        self.fusion_w1 = numeric.glorot_uniform((fusion_in, config.fusion_hidden), rng, "fusion.w1")
        self.fusion_b1 = numeric.zeros_param((config.fusion_hidden,), "fusion.b1")
        self.fusion_w2 = numeric.glorot_uniform((config.fusion_hidden, config.rep_width), rng, "fusion.w2")
        self.fusion_b2 = numeric.zeros_param((config.rep_width,), "fusion.b2")

        self.summary_dim = summary_width(schema)
        recon_rng = numeric.substream(self.seed, "recon-projections")
        self.recon_projections: list[np.ndarray] = []
        self.recon_heads: list[tuple[Parameter, Parameter]] = []
        if self.summary_dim:
            for i in range(config.recon_count):
                self.recon_projections.append(
                    recon_rng.standard_normal((self.summary_dim, config.recon_dim)))
                self.recon_heads.append((
                    numeric.glorot_uniform((config.rep_width, config.recon_dim), rng, f"recon{i}.w"),
                    numeric.zeros_param((config.recon_dim,), f"recon{i}.b")))

        self.task_heads: dict[str, tuple[Parameter, Parameter, Parameter, Parameter]] = {}
        self.class_weights: dict[str, np.ndarray] = {}
        for task, n_classes in self.tasks.items():
            self.task_heads[task] = (
                numeric.glorot_uniform((config.rep_width, config.head_hidden), rng, f"task.{task}.w1"),
                numeric.zeros_param((config.head_hidden,), f"task.{task}.b1"),
                numeric.glorot_uniform((config.head_hidden, n_classes), rng, f"task.{task}.w2"),
                numeric.zeros_param((n_classes,), f"task.{task}.b2"))
            self.class_weights[task] = np.ones(n_classes)

    # ---- parameters and persistence -------------------------------------

    def named_parameters(self) -> dict[str, Parameter]:
        params: list[Parameter] = []
        params += self.static_bank.parameters()
        params += self.dynamic_bank.parameters()
        if self.cd_params is not None:
            params += self.cd_params.parameters()
        if self.nd_params is not None:
            params += self.nd_params.parameters()
        params += [self.fusion_w1, self.fusion_b1, self.fusion_w2, self.fusion_b2]
        for w, b in self.recon_heads:
            params += [w, b]
        for head in self.task_heads.values():
            params += list(head)
        out = {}
        for p in params:
            if p.name in out:
                raise ConfigError(f"duplicate parameter name {p.name!r}")
            out[p.name] = p
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def save(self, path) -> None:
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "seed": self.seed,
            "config": asdict(self.config),
            "tasks": self.tasks,
            "class_weights": {t: w.tolist() for t, w in self.class_weights.items()},
            "schema": self.schema.to_dict(),
            "recon_projections": [g.tolist() for g in self.recon_projections],
            "params": numeric.params_to_dict(self.named_parameters()),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path) -> "CustomerEncoder":
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as e:
            raise TableIOError(str(e)) from e
        except json.JSONDecodeError as e:
            raise TableIOError(f"not a model checkpoint: {e}") from e
        if payload.get("format") != MODEL_FORMAT:
            raise TableIOError(f"not a model checkpoint: format={payload.get('format')!r}")
        if payload.get("version") != MODEL_VERSION:
            raise TableIOError(f"unsupported model version {payload.get('version')!r}")
        schema = FeatureSchema.from_dict(payload["schema"])
        model = cls(schema, ModelConfig(**payload["config"]),
                    tasks={t: int(n) for t, n in payload["tasks"].items()},
                    seed=int(payload["seed"]))
        arrays = numeric.dict_to_arrays(payload["params"])
        named = model.named_parameters()
        if set(arrays) != set(named):
            raise TableIOError("checkpoint parameters do not match the model architecture")
        for name, arr in arrays.items():
            if arr.shape != named[name].data.shape:
                raise TableIOError(f"checkpoint tensor {name!r} has shape {arr.shape}, "
                                   f"expected {named[name].data.shape}")
            named[name].data = arr
        model.recon_projections = [np.asarray(g, dtype=np.float64)
                                   for g in payload["recon_projections"]]
        model.class_weights = {t: np.asarray(w, dtype=np.float64)
                               for t, w in payload["class_weights"].items()}
        return model

    # ---- forward --------------------------------------------------------

    def encode_table(self, table: BigTable, customers=None):
        check_schema(table, self.schema)
        customers = list(customers) if customers is not None else list(table.customers)
        return customers, [encode_customer(table, c, self.schema, self.layout)
                           for c in customers]

    def forward(self, batch: Batch, train: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        d = self.config.embed_dim
        b = batch.size
        zeros = lambda: Tensor(np.zeros((b, d)))

        if self.layout.cs_features:
            e_cs = categorical_embed(batch.cs_ids, self.static_bank.cat_table)
            v_cs = max_concat(e_cs, axis=-2)
        else:
            v_cs = zeros()
        if self.layout.sn_features:
            e_ns = positional_numeric_embed(Tensor(batch.ns_vals), self.static_bank.num_matrix)
            v_ns = max_concat(e_ns, axis=-2)
        else:
            v_ns = zeros()

        ponder = None
        stats = {}
        if self.layout.cd_features:
            e_step = categorical_embed(batch.cd_ids, self.dynamic_bank.cat_table)
            rows = max_concat(e_step, axis=-2)            # [b, n_s, d]
            final, p_cd, st = act_run(rows, self.cd_params, self.tconfig,
                                      mask=batch.seq_valid, train=train, rng=rng)
            e_cd = dynamic_embed(final, self.cd_params.wd) * Tensor(batch.presence[:, 2:3])
            ponder = p_cd
            stats["dynamic_categorical"] = st
        else:
            e_cd = zeros()
        if self.layout.dn_features:
            e_step = positional_numeric_embed(Tensor(batch.nd_vals), self.dynamic_bank.num_matrix)
            rows = max_concat(e_step, axis=-2)
            final, p_nd, st = act_run(rows, self.nd_params, self.tconfig,
                                      mask=batch.seq_valid, train=train, rng=rng)
            e_nd = dynamic_embed(final, self.nd_params.wd) * Tensor(batch.presence[:, 3:4])
            ponder = p_nd if ponder is None else ponder + p_nd
            stats["dynamic_numerical"] = st
        else:
            e_nd = zeros()

        fused_in = numeric.concat([v_cs, v_ns, e_cd, e_nd, Tensor(batch.presence)], axis=-1)
        hidden = numeric.relu(numeric.matmul(fused_in, self.fusion_w1) + self.fusion_b1)
        if train and self.config.dropout > 0:
            hidden = numeric.dropout(hidden, self.config.dropout, train=True, rng=rng)
        rep = numeric.matmul(hidden, self.fusion_w2) + self.fusion_b2
        return ForwardResult(rep=rep, ponder=ponder, branch_stats=stats)

    def task_logits(self, rep: Tensor, task: str) -> Tensor:
        if task not in self.task_heads:
            raise UnknownTaskError(f"unknown task {task!r}; model has {sorted(self.task_heads)}")
        w1, b1, w2, b2 = self.task_heads[task]
        return numeric.matmul(numeric.relu(numeric.matmul(rep, w1) + b1), w2) + b2

    def reconstruction_outputs(self, rep: Tensor) -> list[Tensor]:
        return [numeric.matmul(rep, w) + b for w, b in self.recon_heads]

    def reconstruction_targets(self, summaries: np.ndarray) -> list[np.ndarray]:
        """Frozen random projections of the model-free summary rows."""
        summaries = np.asarray(summaries, dtype=np.float64)
        return [summaries @ g for g in self.recon_projections]

    # ---- inference ------------------------------------------------------

    def _batches(self, table, customers, size=EVAL_BATCH):
        customers, encoded = self.encode_table(table, customers)
        for lo in range(0, len(customers), size):
            yield stack_encoded(customers[lo:lo + size], encoded[lo:lo + size])

    def represent(self, table: BigTable, customers=None) -> tuple[list[str], np.ndarray]:
        """Deterministic evaluation-mode representations, one row per customer."""
        names: list[str] = []
        chunks = []
        for batch in self._batches(table, customers):
            names += batch.customers
            chunks.append(self.forward(batch, train=False).rep.data)
        return names, (np.concatenate(chunks) if chunks
                       else np.zeros((0, self.config.rep_width)))

    def predict_proba(self, table: BigTable, task: str,
                      customers=None) -> tuple[list[str], np.ndarray]:
        if task not in self.task_heads:
            raise UnknownTaskError(f"unknown task {task!r}; model has {sorted(self.task_heads)}")
        names: list[str] = []
        chunks = []
        for batch in self._batches(table, customers):
            names += batch.customers
            logits = self.task_logits(self.forward(batch, train=False).rep, task)
            chunks.append(numeric.softmax(logits, axis=-1).data)
        n_classes = self.tasks[task]
        return names, (np.concatenate(chunks) if chunks else np.zeros((0, n_classes)))

    # ---- training -------------------------------------------------------

    def fit(self, table: BigTable, config: TrainConfig = TrainConfig()) -> list[dict]:
        """Train in place; returns one log record per epoch.

        Supervision uses every labeled customer of each configured task
        (others contribute only reconstruction); the best validation loss
        decides which epoch's parameters are kept.
        """
        customers, encoded = self.encode_table(table)
        n = len(customers)
        if n == 0:
            raise ConfigError("cannot train on a table with no customers")

        summaries = (np.stack([augmented_summary(table, c, self.schema) for c in customers])
                     if self.summary_dim else np.zeros((n, 0)))
        targets = self.reconstruction_targets(summaries) if self.recon_heads else []
        labels = {task: np.array([table.labels.get(task, {}).get(c, -1) for c in customers],
                                 dtype=np.int64)
                  for task in self.tasks}
        for task, arr in labels.items():
            bad = (arr >= self.tasks[task]).sum()
            if bad:
                raise ConfigError(f"task {task!r} has labels outside [0, {self.tasks[task]})")

        split_rng = numeric.substream(config.seed, "split")
        perm = split_rng.permutation(n)
        n_val = int(round(config.validation_fraction * n))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        if len(train_idx) == 0:
            raise ConfigError("validation split leaves no training customers")

        recon_on = config.recon_weight > 0 and bool(self.recon_heads)
        any_labeled = False
        for task in self.tasks:
            mask = labels[task][train_idx] >= 0
            counts = np.bincount(labels[task][train_idx][mask], minlength=self.tasks[task])
            labeled = int(mask.sum())
            if labeled:
                any_labeled = True
                w = np.zeros(self.tasks[task])
                present = counts > 0
                w[present] = labeled / (present.sum() * counts[present])
                self.class_weights[task] = w
        if not recon_on and not any_labeled:
            if self.tasks:
                raise NoLabeledCustomersError(
                    "no labeled training customer and reconstruction disabled")
            raise AllTermsDisabledError("no task heads and reconstruction disabled")

        batch_rng = numeric.substream(config.seed, "batches")
        drop_rng = numeric.substream(config.seed, "dropout")
        opt = numeric.Adam(self.parameters(), lr=config.learning_rate)
        log: list[dict] = []
        best_loss = np.inf
        best_params: dict[str, np.ndarray] | None = None

        def batch_loss(idx: np.ndarray, train: bool) -> Tensor:
            batch = stack_encoded([customers[i] for i in idx], [encoded[i] for i in idx])
            out = self.forward(batch, train=train, rng=drop_rng if train else None)
            recon_terms = [mean_squared_error(pred, t[idx])
                           for pred, t in zip(self.reconstruction_outputs(out.rep), targets)
                           ] if recon_on else []
            task_terms = {}
            for task in self.tasks:
                lab = labels[task][idx]
                rows = np.nonzero(lab >= 0)[0]
                if rows.size:
                    task_terms[task] = cross_entropy(self.task_logits(out.rep, task)[rows],
                                                     lab[rows], self.class_weights[task])
            return joint_loss(recon_terms, task_terms, out.ponder, config.recon_weight,
                              config.ponder_weight, config.task_weights)

        def evaluate_split(idx: np.ndarray) -> float:
            total, count = 0.0, 0
            for lo in range(0, len(idx), EVAL_BATCH):
                chunk = idx[lo:lo + EVAL_BATCH]
                total += float(batch_loss(chunk, train=False).data) * len(chunk)
                count += len(chunk)
            return total / count

        for epoch in range(config.epochs):
            order = train_idx[batch_rng.permutation(len(train_idx))]
            epoch_total, seen = 0.0, 0
            for lo in range(0, len(order), config.batch_size):
                chunk = order[lo:lo + config.batch_size]
                loss = batch_loss(chunk, train=True)
                opt.zero_grad()
                numeric.backward(loss)
                opt.step()
                epoch_total += float(loss.data) * len(chunk)
                seen += len(chunk)
            record = {"epoch": epoch, "train_loss": epoch_total / seen,
                      "val_loss": None, "val_auc": {}}
            selector = record["train_loss"]
            if len(val_idx):
                record["val_loss"] = evaluate_split(val_idx)
                selector = record["val_loss"]
                record["val_auc"] = self._val_auc(table, customers, labels, val_idx)
            log.append(record)
            if selector < best_loss:
                best_loss = selector
                best_params = {k: p.data.copy() for k, p in self.named_parameters().items()}
        if best_params is not None:
            for name, p in self.named_parameters().items():
                p.data = best_params[name]
        return log

    def _val_auc(self, table, customers, labels, val_idx) -> dict:
        from .eval import roc_auc
        out = {}
        for task in self.tasks:
            if self.tasks[task] != 2:
                out[task] = None
                continue
            lab = labels[task][val_idx]
            rows = val_idx[lab >= 0]
            if rows.size == 0 or len(set(labels[task][rows])) < 2:
                out[task] = None
                continue
            _, proba = self.predict_proba(table, task, [customers[i] for i in rows])
            out[task] = roc_auc(proba[:, 1], labels[task][rows])
        return out
