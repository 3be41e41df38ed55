"""Mix-and-separate training loop, frozen-test-set evaluation, the fusion/
alignment ablation grid, and representation probing."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from avsep import dsp, ndgrad as ng, synthband, viz, wavio
from avsep.config import ExperimentConfig, save_config
from avsep.embedders import OracleVisualEmbedder, ProxyClapEmbedder
from avsep.errors import InputError, NumericError
from avsep.metrics import REPORT_CAP_DB, bss_eval, linear_probe, modality_gap
from avsep.separator import (
    FusionMode,
    SeparatorModel,
    align_loss,
    sep_loss,
    total_loss,
)


# -- shared assembly ----------------------------------------------------------


def build_catalog(cfg: ExperimentConfig) -> synthband.Catalog:
    if cfg.synth.catalog == "default":
        return synthband.default_catalog()
    return synthband.load_catalog(cfg.synth.catalog)


def build_embedders(cfg: ExperimentConfig, catalog: synthband.Catalog):
    visual = OracleVisualEmbedder([s.class_id for s in catalog], cfg.embedders)
    clap = ProxyClapEmbedder(cfg.embedders, cfg.dsp.sample_rate)
    return visual, clap


def _net_input(x: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    return np.log1p(x) if cfg.dsp.log1p_input else x


# -- frozen dataset -----------------------------------------------------------

MANIFEST_HEADER = [
    "mixture_id", "split", "class_a", "seed_a", "class_b", "seed_b",
    "gain", "mix_path", "src0_path", "src1_path",
]


def gen_dataset(cfg: ExperimentConfig, out_dir) -> Path:
    """Materialize the frozen test set: WAVs plus a CSV manifest."""
    out_dir = Path(out_dir)
    (out_dir / "wavs").mkdir(parents=True, exist_ok=True)
    catalog = build_catalog(cfg)
    synthband.save_catalog(out_dir / "catalog.cfg", catalog)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.eval.test_seed, 11]))
    rows = []
    for i in range(cfg.eval.n_test_mixtures):
        pair = synthband.sample_pair(
            rng, catalog, cfg.dsp, split="test",
            n_sources=cfg.synth.n_sources, clip_seconds=cfg.synth.clip_seconds,
        )
        paths = [f"wavs/m{i:04d}_mix.wav"]
        wavio.write_wav(out_dir / paths[0], pair.mixture)
        for j, src in enumerate(pair.sources):
            p = f"wavs/m{i:04d}_src{j}.wav"
            wavio.write_wav(out_dir / p, src.waveform)
            paths.append(p)
        a, b = pair.sources
        rows.append(
            [i, "test", a.class_id, a.seed, b.class_id, b.seed,
             viz.fmt(pair.gain, 8), paths[0], paths[1], paths[2]]
        )
    viz.write_csv(out_dir / "manifest.csv", MANIFEST_HEADER, rows)
    return out_dir


def dataset_hash(data_dir) -> str:
    """SHA-256 over the manifest and every referenced WAV, in manifest order."""
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.csv"
    h = hashlib.sha256(manifest.read_bytes())
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            for key in ("mix_path", "src0_path", "src1_path"):
                h.update((data_dir / row[key]).read_bytes())
    return h.hexdigest()


def load_manifest(data_dir) -> list[dict]:
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.csv"
    if not manifest.exists():
        raise InputError(f"no manifest at {manifest}")
    out = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            missing = [
                row[k] for k in ("mix_path", "src0_path", "src1_path")
                if not (data_dir / row[k]).exists()
            ]
            if missing:
                raise InputError(f"manifest references missing audio: {missing}")
            out.append(row)
    return out


# -- training -----------------------------------------------------------------


@dataclass
class ExperimentRun:
    out_dir: Path
    config_path: Path
    loss_csv: Path
    checkpoints: list[Path]
    final_checkpoint: Path
    loss_trace: list[tuple] = field(repr=False, default_factory=list)


def _assemble_batch(pairs, cfg, visual, clap):
    """Stack warped magnitudes, targets, and embeddings for one step."""
    xs, t1, t2, e1, e2, zc = [], [], [], [], [], []
    for pair in pairs:
        xm, _ = dsp.analyze(pair.mixture, cfg.dsp)
        xs.append(xm.values)
        s1, s2 = pair.sources
        t1.append(dsp.analyze(s1.waveform, cfg.dsp)[0].values)
        t2.append(dsp.analyze(s2.waveform, cfg.dsp)[0].values)
        e1.append(visual.embed(s1.class_id))
        e2.append(visual.embed(s2.class_id))
        zc.append(clap.embed(pair.mixture))
    x = np.stack(xs)[:, None]
    return (
        x,
        np.stack(t1)[:, None],
        np.stack(t2)[:, None],
        np.stack(e1),
        np.stack(e2),
        np.stack(zc),
    )


def train(cfg: ExperimentConfig, out_dir) -> ExperimentRun:
    """Train one separator per the config; fully reproducible from the seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_path = save_config(out_dir / "config.cfg", cfg)
    catalog = build_catalog(cfg)
    visual, clap = build_embedders(cfg, catalog)
    model_cfg = replace(cfg.model, init_seed=cfg.train.seed)
    model = SeparatorModel(model_cfg)
    opt = ng.Adam(model.params, lr=cfg.train.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.train.seed, 101]))

    tc = cfg.train
    decay_step = int(round(tc.decay_at * tc.steps)) if tc.decay_factor < 1.0 else -1
    trace = []
    checkpoints = []
    last_good: Optional[dict] = None
    for step in range(1, tc.steps + 1):
        if decay_step > 0 and step == decay_step:
            opt.lr = opt.lr * tc.decay_factor
        pairs = synthband.sample_batch(
            rng, catalog, tc.batch, cfg.dsp,
            split="train", n_sources=cfg.synth.n_sources,
            clip_seconds=cfg.synth.clip_seconds,
        )
        x, t1, t2, e1, e2, zc = _assemble_batch(pairs, cfg, visual, clap)
        xt = ng.Tensor(_net_input(x, cfg))
        with ng.Tape() as tape:
            masks, _, pooled = model.forward_multi(
                xt, [ng.Tensor(e1), ng.Tensor(e2)]
            )
            xc = ng.Tensor(x)
            preds = [ng.mul(m, xc) for m in masks]
            s_loss = sep_loss(preds, [ng.Tensor(t1), ng.Tensor(t2)])
            a_loss = align_loss(pooled, ng.Tensor(zc))
            loss = total_loss(s_loss, a_loss, tc.align_weight)
        sep_v, align_v, total_v = s_loss.item(), a_loss.item(), loss.item()
        if not np.isfinite(total_v):
            abort = out_dir / "ckpt_abort.ckpt"
            if last_good is not None:
                ng.save_checkpoint(
                    abort, {k: ng.Tensor(v) for k, v in last_good.items()}
                )
            raise NumericError(
                f"non-finite loss at step {step}; last finite checkpoint: {abort}"
            )
        last_good = {k: p.data.copy() for k, p in model.params.items()}
        opt.zero_grad()
        tape.backward(loss)
        opt.step()
        trace.append((step, opt.lr, sep_v, align_v, total_v))
        if tc.checkpoint_every and step % tc.checkpoint_every == 0 and step < tc.steps:
            p = out_dir / f"ckpt_step{step:06d}.ckpt"
            ng.save_checkpoint(p, model.state())
            checkpoints.append(p)

    final = out_dir / "ckpt_final.ckpt"
    ng.save_checkpoint(final, model.state())
    checkpoints.append(final)
    loss_csv = viz.write_csv(
        out_dir / "loss.csv",
        ["step", "lr", "sep", "align", "total"],
        (
            [str(s), viz.fmt(lr, 8), viz.fmt(a, 8), viz.fmt(b, 8), viz.fmt(c, 8)]
            for s, lr, a, b, c in trace
        ),
    )
    viz.lines_svg(
        out_dir / "loss.svg",
        {
            "sep": [rowv[2] for rowv in trace],
            "align": [rowv[3] for rowv in trace],
            "total": [rowv[4] for rowv in trace],
        },
        title="training loss",
    )
    return ExperimentRun(out_dir, config_path, loss_csv, checkpoints, final, trace)


# -- evaluation ---------------------------------------------------------------


@dataclass
class ClassRow:
    class_id: int
    name: str
    n: int
    sdr_db: float
    sir_db: float
    sar_db: float


@dataclass
class EvalTable:
    rows: list[ClassRow]
    test_hash: str = ""

    @property
    def overall(self) -> ClassRow:
        n = sum(r.n for r in self.rows)
        def wmean(attr):
            return sum(getattr(r, attr) * r.n for r in self.rows) / n
        return ClassRow(-1, "OVERALL", n, wmean("sdr_db"), wmean("sir_db"), wmean("sar_db"))

    def to_csv(self, path):
        rows = [
            [r.class_id, r.name, r.n, viz.fmt(r.sdr_db, 4), viz.fmt(r.sir_db, 4),
             viz.fmt(r.sar_db, 4)]
            for r in self.rows + [self.overall]
        ]
        return viz.write_csv(
            path, ["class_id", "name", "n", "sdr_db", "sir_db", "sar_db"], rows
        )


def model_separator(model: SeparatorModel, cfg: ExperimentConfig,
                    visual: OracleVisualEmbedder) -> Callable:
    """Estimate both sources of a mixture by conditioned forward passes."""

    def separate(mix: dsp.Waveform, class_ids: Sequence[int], _sources):
        warped, cs = dsp.analyze(mix, cfg.dsp)
        x = warped.values[None, None]
        queries = [
            ng.Tensor(visual.embed(int(cid))[None, :]) for cid in class_ids
        ]
        masks, _, _ = model.forward_multi(ng.Tensor(_net_input(x, cfg)), queries)
        out = []
        for m in masks:
            xhat = dsp.LogMagSpectrogram(
                warped.values * m.data[0, 0], warped.warp,
                cfg.dsp.window, cfg.dsp.hop, cfg.dsp.sample_rate,
            )
            out.append(dsp.reconstruct(xhat, cs))
        return out

    return separate


def mixture_baseline_separator() -> Callable:
    def separate(mix: dsp.Waveform, class_ids, _sources):
        return [dsp.Waveform(mix.samples.copy(), mix.sample_rate) for _ in class_ids]

    return separate


def oracle_mask_separator(cfg: ExperimentConfig) -> Callable:
    """Ideal ratio masks on the warped grid: the ceiling reference."""

    def separate(mix: dsp.Waveform, class_ids, sources):
        warped, cs = dsp.analyze(mix, cfg.dsp)
        out = []
        for src in sources:
            ws, _ = dsp.analyze(src, cfg.dsp)
            mask = np.clip(ws.values / np.maximum(warped.values, 1e-12), 0.0, 1.0)
            out.append(dsp.reconstruct(dsp.apply_mask(warped, mask), cs))
        return out

    return separate


def evaluate(separate: Callable, data_dir, cfg: ExperimentConfig,
             catalog: Optional[synthband.Catalog] = None) -> EvalTable:
    """Score a separation strategy on the frozen test set, per class."""
    data_dir = Path(data_dir)
    catalog = catalog or build_catalog(cfg)
    entries = load_manifest(data_dir)
    acc: dict[int, list] = {}
    for row in entries:
        mix = wavio.read_wav(data_dir / row["mix_path"])
        sources = [
            wavio.read_wav(data_dir / row["src0_path"]),
            wavio.read_wav(data_dir / row["src1_path"]),
        ]
        class_ids = [int(row["class_a"]), int(row["class_b"])]
        estimates = separate(mix, class_ids, sources)
        for idx, (cid, est) in enumerate(zip(class_ids, estimates)):
            n = min(len(est), len(mix))
            est_w = dsp.Waveform(est.samples[:n], est.sample_rate)
            refs = [dsp.Waveform(s.samples[:n], s.sample_rate) for s in sources]
            res = bss_eval(refs, est_w, idx, cfg.eval.filter_len).capped()
            acc.setdefault(cid, []).append(res)
    rows = []
    for cid in sorted(acc):
        vals = acc[cid]
        rows.append(
            ClassRow(
                cid,
                catalog.spec(cid).name,
                len(vals),
                float(np.mean([v.sdr_db for v in vals])),
                float(np.mean([v.sir_db for v in vals])),
                float(np.mean([v.sar_db for v in vals])),
            )
        )
    return EvalTable(rows, test_hash=dataset_hash(data_dir))


def evaluate_checkpoint(checkpoint, data_dir, cfg: ExperimentConfig) -> EvalTable:
    catalog = build_catalog(cfg)
    visual, _ = build_embedders(cfg, catalog)
    model = SeparatorModel(cfg.model)
    model.load_state(ng.load_checkpoint(checkpoint))
    return evaluate(model_separator(model, cfg, visual), data_dir, cfg, catalog)


# -- ablation grid --------------------------------------------------------------

ABLATION_HEADER = ["fusion", "align", "sdr_db", "sir_db", "sar_db", "test_hash", "run_dir"]


def ablate(cfg: ExperimentConfig, data_dir, out_dir) -> list[list]:
    """Six-cell grid {middle, late, hierarchical} x {align on, off}."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lam = cfg.train.align_weight if cfg.train.align_weight > 0 else 0.1
    rows = []
    for mode in (FusionMode.MIDDLE, FusionMode.LATE, FusionMode.HIERARCHICAL):
        for align_on in (False, True):
            cell = f"{mode.value}_{'align' if align_on else 'noalign'}"
            run_cfg = replace(
                cfg,
                model=replace(cfg.model, fusion=mode),
                train=replace(cfg.train, align_weight=lam if align_on else 0.0),
            )
            run_dir = out_dir / cell
            run = train(run_cfg, run_dir)
            table = evaluate_checkpoint(run.final_checkpoint, data_dir, run_cfg)
            table.to_csv(run_dir / "eval_per_class.csv")
            o = table.overall
            rows.append(
                [mode.value, "yes" if align_on else "no", viz.fmt(o.sdr_db, 4),
                 viz.fmt(o.sir_db, 4), viz.fmt(o.sar_db, 4), table.test_hash,
                 str(run_dir.name)]
            )
    viz.write_csv(out_dir / "ablation.csv", ABLATION_HEADER, rows)
    return rows


# -- probing and modality gap ---------------------------------------------------


def _solo_features(model: SeparatorModel, cfg: ExperimentConfig, data_dir,
                   chunk: int = 32):
    """Pooled bottleneck (raw) and alignment-head features per solo test clip."""
    data_dir = Path(data_dir)
    entries = load_manifest(data_dir)
    solos = []
    for row in entries:
        solos.append((data_dir / row["src0_path"], int(row["class_a"])))
        solos.append((data_dir / row["src1_path"], int(row["class_b"])))
    raw_feats, head_feats, labels = [], [], []
    for start in range(0, len(solos), chunk):
        block = solos[start : start + chunk]
        specs = []
        for path, cid in block:
            w = wavio.read_wav(path)
            warped, _ = dsp.analyze(w, cfg.dsp)
            specs.append(warped.values)
            labels.append(cid)
        x = ng.Tensor(_net_input(np.stack(specs)[:, None], cfg))
        bottleneck, _ = model.encode(x)
        raw = bottleneck.data.mean(axis=(2, 3))
        head = model._pooled(bottleneck).data
        raw_feats.extend(raw)
        head_feats.extend(head)
    return np.asarray(raw_feats), np.asarray(head_feats), labels


def probe_and_gap(ckpt_aligned, ckpt_unaligned, cfg: ExperimentConfig,
                  data_dir, out_dir, split_seed: int = 0):
    """Three probe rows (bottleneck w/o & w/ alignment, frozen proxy) and two
    modality-gap rows (w/o & w/ alignment)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    catalog = build_catalog(cfg)
    visual, clap = build_embedders(cfg, catalog)

    feats = {}
    for tag, ckpt in (("no", ckpt_unaligned), ("yes", ckpt_aligned)):
        model = SeparatorModel(cfg.model)
        model.load_state(ng.load_checkpoint(ckpt))
        feats[tag] = _solo_features(model, cfg, data_dir)

    # frozen proxy row is checkpoint independent
    data_dir = Path(data_dir)
    clap_feats, clap_labels = [], []
    for row in load_manifest(data_dir):
        for key, cls in (("src0_path", "class_a"), ("src1_path", "class_b")):
            clap_feats.append(clap.embed(wavio.read_wav(data_dir / row[key])))
            clap_labels.append(int(row[cls]))

    probes = {
        "no": linear_probe(list(zip(feats["no"][0], feats["no"][2])), split_seed),
        "yes": linear_probe(list(zip(feats["yes"][0], feats["yes"][2])), split_seed),
        "proxy": linear_probe(list(zip(clap_feats, clap_labels)), split_seed),
    }
    gaps = {}
    for tag in ("no", "yes"):
        _, head, labels = feats[tag]
        vis = np.stack([visual.embed(c) for c in labels])
        gaps[tag] = modality_gap(head, vis)

    probe_rows = [
        ["bottleneck", "no", viz.fmt(probes["no"].accuracy, 6)],
        ["bottleneck", "yes", viz.fmt(probes["yes"].accuracy, 6)],
        ["proxy_audio", "frozen", viz.fmt(probes["proxy"].accuracy, 6)],
    ]
    gap_rows = [
        ["no", viz.fmt(gaps["no"].gap, 6)],
        ["yes", viz.fmt(gaps["yes"].gap, 6)],
    ]
    viz.write_csv(out_dir / "probe.csv", ["representation", "alignment", "accuracy"], probe_rows)
    viz.write_csv(out_dir / "gap.csv", ["alignment", "gap"], gap_rows)
    return probes, gaps
