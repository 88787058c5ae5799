use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{IndexKind, RunConfig, WorldKind};
use crate::corpus::{
    self, clean, generate_linking_pair, generate_patch_world, generate_typing_world, read_records, LinkingPair,
};
use crate::encoder::{checkpoint, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::geo::GeoEntity;
use crate::linearizer::{build_sentences, train_vocab, ContextRule, PseudoSentence, Vocab};
use crate::pretrain::{train, write_loss_log};
use crate::spatial_index::{CellScheme, SpatialIndex};
use crate::tasks::{
    finetune_typing, length_ablation, link_pair, mean_curve, name_baseline, omission_experiment,
    spatial_embedding_ablation, split_indices, EvalReport, TypingReport,
};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub run_dir: &'a Path,
    /// Files read by the command, for the manifest.
    pub inputs: Vec<PathBuf>,
}

fn verbose() -> bool {
    std::env::var("GEOCTX_LOG").is_ok_and(|v| !v.is_empty() && v != "0" && v != "off")
}

pub fn note(msg: &str) {
    if verbose() {
        eprintln!("geoctx: {msg}");
    }
}

impl Ctx<'_> {
    fn need(&mut self, p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        let p = p.clone().ok_or_else(|| Error::Argument(format!("missing required input --{flag}")))?;
        self.inputs.push(p.clone());
        Ok(p)
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.run_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn entities(&mut self) -> Result<Vec<GeoEntity>> {
        let paths = self.cfg.paths.entities.clone();
        if paths.is_empty() {
            return Err(Error::Argument("missing required input --entities".into()));
        }
        let mut all = Vec::new();
        for p in paths {
            all.extend(corpus::read_entities(&p)?);
            self.inputs.push(p);
        }
        Ok(all)
    }

    fn vocab(&mut self) -> Result<Vocab> {
        let p = self.need(&self.cfg.paths.vocab.clone(), "vocab")?;
        Vocab::load(&p)
    }

    fn scheme(&self) -> CellScheme {
        match (self.cfg.index, self.cfg.index_precision) {
            (IndexKind::Grid, _) => CellScheme::grid_for_radius(self.cfg.context_radius),
            (IndexKind::Geohash, Some(precision)) => CellScheme::Geohash { precision },
            (IndexKind::Geohash, None) => CellScheme::geohash_for_radius(self.cfg.context_radius),
        }
    }

    fn sentences(&self, entities: &[GeoEntity], vocab: &Vocab, labels: Option<&BTreeMap<String, usize>>) -> Result<Vec<PseudoSentence>> {
        let index = SpatialIndex::build(entities, self.scheme())?;
        build_sentences(&index, ContextRule::Radius(self.cfg.context_radius), vocab, &self.cfg.linearizer, labels)
    }

    /// Loaded checkpoint, or a fresh model when none is given.
    fn model(&mut self, vocab: &Vocab) -> Result<(ModelParams, EncoderConfig)> {
        match self.cfg.paths.checkpoint.clone() {
            Some(p) => {
                self.inputs.push(p.clone());
                let ck = checkpoint::load_for_vocab(&p, vocab)?;
                Ok((ck.params, ck.config))
            }
            None => {
                let enc = self.encoder(vocab)?;
                Ok((ModelParams::init(&enc, self.cfg.seed), enc))
            }
        }
    }

    fn encoder(&self, vocab: &Vocab) -> Result<EncoderConfig> {
        let enc = EncoderConfig { vocab_size: vocab.len(), ..self.cfg.encoder.clone() };
        enc.validate()?;
        Ok(enc)
    }

    fn linking_pair(&mut self) -> Result<LinkingPair> {
        let q = self.need(&self.cfg.paths.queries.clone(), "queries")?;
        let c = self.need(&self.cfg.paths.candidates.clone(), "candidates")?;
        let t = self.need(&self.cfg.paths.truth.clone(), "truth")?;
        Ok(LinkingPair {
            queries: corpus::read_entities(&q)?,
            candidates: corpus::read_entities(&c)?,
            truth: corpus::read_truth(&t)?,
            pixel_scale: self.cfg.world.pixel_scale,
        })
    }

    fn write_report(&self, report: &EvalReport) -> Result<()> {
        report.write(&self.dir("reports")?)
    }
}

fn label_map(entities: &[GeoEntity]) -> Result<(Vec<String>, BTreeMap<String, usize>)> {
    let classes: BTreeSet<String> = entities.iter().filter_map(|e| e.label.clone()).collect();
    if classes.len() < 2 {
        return Err(Error::Input("typing needs entities with at least two distinct labels".into()));
    }
    if let Some(e) = entities.iter().find(|e| e.label.is_none()) {
        return Err(Error::Input(format!("entity `{}` has no label", e.id)));
    }
    let classes: Vec<String> = classes.into_iter().collect();
    let map = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    Ok((classes, map))
}

pub fn clean_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let input = ctx.need(&ctx.cfg.paths.input.clone(), "input")?;
    let records = read_records(&input)?;
    let entities = clean(&records);
    corpus::write_entities(&ctx.dir("data")?.join("entities.jsonl"), &entities)?;
    Ok(json!({ "records": records.len(), "kept": entities.len(), "dropped": records.len() - entities.len() }))
}

pub fn synth_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let data = ctx.dir("data")?;
    let spec = &ctx.cfg.world;
    match ctx.cfg.world_kind {
        WorldKind::Typing | WorldKind::Patch => {
            let w = if ctx.cfg.world_kind == WorldKind::Typing {
                generate_typing_world(spec)?
            } else {
                generate_patch_world(spec)?
            };
            corpus::write_entities(&data.join("entities.jsonl"), &w)?;
            Ok(json!({ "entities": w.len() }))
        }
        WorldKind::Linking => {
            let pair = generate_linking_pair(spec)?;
            corpus::write_entities(&data.join("queries.jsonl"), &pair.queries)?;
            corpus::write_entities(&data.join("candidates.jsonl"), &pair.candidates)?;
            corpus::write_truth(&data.join("truth.tsv"), &pair.truth)?;
            Ok(json!({ "queries": pair.queries.len(), "candidates": pair.candidates.len() }))
        }
    }
}

pub fn index_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let entities = ctx.entities()?;
    let index = SpatialIndex::build(&entities, ctx.scheme())?;
    index.write_table(&ctx.dir("data")?.join("index.tsv"))?;
    Ok(json!({ "entities": index.len(), "buckets": index.bucket_count(), "scheme": format!("{:?}", index.scheme()) }))
}

pub fn vocab_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let entities = ctx.entities()?;
    let names: Vec<&str> = entities.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, ctx.cfg.vocab_size)?;
    vocab.save(&ctx.dir("data")?.join("vocab.txt"))?;
    Ok(json!({ "size": vocab.len(), "hash": vocab.hash() }))
}

pub fn pretrain_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let entities = ctx.entities()?;
    let vocab = ctx.vocab()?;
    let (mut params, enc) = ctx.model(&vocab)?;
    let sentences = ctx.sentences(&entities, &vocab, None)?;
    let ckdir = ctx.dir("checkpoints")?;
    let hash = vocab.hash();
    note(&format!("pretraining on {} sentences for {} steps", sentences.len(), ctx.cfg.pretrain.steps));
    let steps = ctx.cfg.pretrain.steps;
    let summary = train(&mut params, &enc, &sentences, &ctx.cfg.pretrain, &mut |step, p| {
        note(&format!("checkpoint at step {step}"));
        let name = if step == steps { "final".to_string() } else { format!("step-{step:06}") };
        checkpoint::save(&ckdir.join(name), p, &enc, &hash, step as u64)
    })?;
    write_loss_log(&ctx.dir("logs")?.join("loss.csv"), &summary.log)?;
    let first = summary.log.first().map(|r| r.loss);
    let last = summary.log.last().map(|r| r.loss);
    let s = json!({
        "sentences": sentences.len(),
        "steps": summary.log.len(),
        "first_loss": first,
        "last_loss": last,
        "skipped_mlm": summary.skipped_mlm,
        "skipped_mep": summary.skipped_mep,
        "empty_mlm": summary.empty_mlm,
        "checkpoints": summary.checkpoints,
    });
    let p = ctx.dir("reports")?.join("pretrain.json");
    fs::write(&p, serde_json::to_string_pretty(&s).expect("json") + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(s)
}

pub fn finetune_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let entities = ctx.entities()?;
    let vocab = ctx.vocab()?;
    let (params, enc) = ctx.model(&vocab)?;
    let (classes, map) = label_map(&entities)?;
    let sentences = ctx.sentences(&entities, &vocab, Some(&map))?;
    let split = split_indices(sentences.len(), ctx.cfg.finetune.train_frac, ctx.cfg.seed)?;
    let out = finetune_typing(&params, &enc, &sentences, &classes, &split, &ctx.cfg.finetune)?;
    let baseline = name_baseline(&sentences, &classes, &split)?;
    checkpoint::save(&ctx.dir("checkpoints")?.join("typing"), &out.params, &out.config, &vocab.hash(), 0)?;
    let mut log = String::from("epoch,loss\n");
    for (i, l) in out.epoch_loss.iter().enumerate() {
        let _ = writeln!(log, "{i},{l}");
    }
    let lp = ctx.dir("logs")?.join("finetune.csv");
    fs::write(&lp, log).map_err(|e| Error::io(&lp, e))?;
    let mut report = EvalReport::new("finetune-typing", ctx.cfg.seed);
    report.typing = Some(TypingReport {
        model: out.report.clone(),
        baseline: Some(baseline.clone()),
        n_train: split.train.len(),
        n_test: split.test.len(),
    });
    ctx.write_report(&report)?;
    Ok(json!({ "micro_f1": out.report.micro_f1, "baseline_micro_f1": baseline.micro_f1 }))
}

pub fn link_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let pair = ctx.linking_pair()?;
    let vocab = ctx.vocab()?;
    let (params, enc) = ctx.model(&vocab)?;
    let out = link_pair(&pair, &params, &enc, &vocab, &ctx.cfg.linearizer, &ctx.cfg.linking)?;
    let mut report = EvalReport::new("link", ctx.cfg.seed);
    report.linking = Some(out.metrics.clone());
    ctx.write_report(&report)?;
    let mut tsv = String::from("query\ttruth\trank\ttop\n");
    for r in &out.rows {
        let _ = writeln!(tsv, "{}\t{}\t{}\t{}", r.query, r.truth, r.rank, r.top.join(","));
    }
    let p = ctx.dir("reports")?.join("links.tsv");
    fs::write(&p, tsv).map_err(|e| Error::io(&p, e))?;
    Ok(json!({ "mrr": out.metrics.mrr }))
}

pub fn omission_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let entities = ctx.entities()?;
    let vocab = ctx.vocab()?;
    let (params, enc) = ctx.model(&vocab)?;
    let curves = (0..ctx.cfg.omission_seeds as u64)
        .map(|k| {
            let oc = crate::tasks::OmissionConfig {
                seed: ctx.cfg.seed + k,
                radius: ctx.cfg.context_radius,
                ..ctx.cfg.omission.clone()
            };
            omission_experiment(&entities, &params, &enc, &vocab, &ctx.cfg.linearizer, &oc)
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = mean_curve(&curves)?;
    let mut report = EvalReport::new("ablate-omission", ctx.cfg.seed);
    let s = json!({ "mrr": curve.mrr(), "elbow": curve.elbow });
    report.omission = Some(curve);
    ctx.write_report(&report)?;
    Ok(s)
}

pub fn length_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let entities = ctx.entities()?;
    let vocab = ctx.vocab()?;
    let (params, enc) = ctx.model(&vocab)?;
    let (classes, _) = label_map(&entities)?;
    let split = split_indices(entities.len(), ctx.cfg.finetune.train_frac, ctx.cfg.seed)?;
    let rows = length_ablation(
        &entities,
        &classes,
        ContextRule::Radius(ctx.cfg.context_radius),
        &ctx.cfg.length_counts,
        &split,
        &params,
        &enc,
        &vocab,
        &ctx.cfg.linearizer,
        &ctx.cfg.finetune,
    )?;
    let mut report = EvalReport::new("ablate-length", ctx.cfg.seed);
    let s = json!(rows.iter().map(|r| (r.neighbors, r.micro_f1)).collect::<Vec<_>>());
    report.length = Some(rows);
    ctx.write_report(&report)?;
    Ok(s)
}

pub fn spatial_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let pair = ctx.linking_pair()?;
    let vocab = ctx.vocab()?;
    let enc = ctx.encoder(&vocab)?;
    let corpus = ctx.sentences(&pair.candidates, &vocab, None)?;
    let (ab, _, _) = spatial_embedding_ablation(
        &pair,
        &corpus,
        ctx.cfg.seed,
        &enc,
        &ctx.cfg.pretrain,
        &vocab,
        &ctx.cfg.linearizer,
        &ctx.cfg.linking,
    )?;
    let mut report = EvalReport::new("ablate-spatial", ctx.cfg.seed);
    let s = json!({ "with_spatial_mrr": ab.with_spatial.mrr, "without_spatial_mrr": ab.without_spatial.mrr });
    report.spatial = Some(ab);
    ctx.write_report(&report)?;
    Ok(s)
}

/// Validates EvalReports and flattens them into one long table.
pub fn report_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let paths = ctx.cfg.paths.reports.clone();
    if paths.is_empty() {
        return Err(Error::Argument("missing required input --report".into()));
    }
    let mut csv = String::from("source,kind,seed,table,row\n");
    let mut n = 0;
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let r = EvalReport::from_json(&text, &p)?;
        ctx.inputs.push(p.clone());
        for (table, body) in r.csv_tables() {
            for line in body.lines().skip(1) {
                let _ = writeln!(csv, "{},{},{},{table},\"{line}\"", p.display(), r.kind, r.seed);
                n += 1;
            }
        }
    }
    let out = ctx.dir("reports")?.join("summary.csv");
    fs::write(&out, &csv).map_err(|e| Error::io(&out, e))?;
    print!("{csv}");
    Ok(json!({ "rows": n }))
}
