use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::ledger::{append_run, provenance, RunRecord};
use super::report::SuiteReport;
use crate::advtrain::{train_baseline, train_finetune, train_gando, LabeledSet, TrainMode, TrainOutcome, TrainingData};
use crate::degrade::{DistortionPool, Family};
use crate::error::{Error, Result};
use crate::evalkit::{
    cross_distortion_matrix, distort_all_levels, distort_random, evaluate_set, loss_decomposition, map50,
    per_level_sweep,
};
use crate::fsio::atomic_write;
use crate::image::Image;
use crate::rng::derive_seed;
use crate::synthkit::{generate_dataset, DatasetManifest, Split};
use crate::tinyssd::{Checkpoint, DetectorParams, Layer, LossConfig};

const TAG_INIT: u64 = 0x1417;
const TAG_POOL: u64 = 0x9001;
const TAG_EVAL: u64 = 0xe7a1;

/// A loaded configuration bound to its output directories.
#[derive(Clone, Debug)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub config_hash: String,
    /// Output root shared by experiments; holds the run ledger.
    pub root: PathBuf,
    /// `root/<experiment_id>`.
    pub dir: PathBuf,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, output_flag: Option<&Path>) -> Self {
        let root = cfg.output_root(output_flag);
        let dir = root.join(&cfg.experiment_id);
        Self {
            config_hash: cfg.hash(),
            cfg,
            root,
            dir,
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("data").join("manifest.txt")
    }

    pub fn checkpoint_path(&self, model: &str) -> PathBuf {
        self.dir.join("checkpoints").join(format!("{model}.ckpt"))
    }

    pub fn log_path(&self, model: &str) -> PathBuf {
        self.dir.join("logs").join(format!("{model}.jsonl"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.dir.join("reports")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join("runs.jsonl")
    }

    /// Runs `f`, then appends a [`RunRecord`]. Failed runs register no
    /// artifacts.
    pub fn record<F>(&self, command: &str, f: F) -> Result<Vec<PathBuf>>
    where
        F: FnOnce(&Self) -> Result<Vec<PathBuf>>,
    {
        let start = Instant::now();
        let result = f(self);
        let (artifacts, status) = match &result {
            Ok(a) => (a.clone(), "ok".to_string()),
            Err(e) => (Vec::new(), format!("error: {e}")),
        };
        append_run(
            &self.ledger_path(),
            &RunRecord {
                experiment_id: self.cfg.experiment_id.clone(),
                config_hash: self.config_hash.clone(),
                provenance: provenance(&self.config_hash),
                command: command.into(),
                artifacts,
                wall_clock_s: start.elapsed().as_secs_f64(),
                status,
            },
        )?;
        result
    }

    fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::load(&self.manifest_path())
    }

    fn pool(&self, family: Family) -> Result<DistortionPool> {
        DistortionPool::from_spec(&self.cfg.pool_spec(family), derive_seed(self.cfg.seed, &[TAG_POOL]))
    }

    fn load_model(&self, model: &str) -> Result<Checkpoint> {
        let path = self.checkpoint_path(model);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path,
                hint: format!("train it first: {}", train_hint(model)),
            });
        }
        Checkpoint::load_for(&path, &self.cfg.arch())
    }
}

/// Checkpoint name: `baseline`, `<mode>-<family>` or
/// `<mode>-<family>-upto-<layer>`.
pub fn model_name(mode: TrainMode, family: Family, freeze_after: Option<Layer>) -> String {
    match (mode, freeze_after) {
        (TrainMode::Baseline, _) => "baseline".into(),
        (m, None) => format!("{m}-{family}"),
        (m, Some(k)) => format!("{m}-{family}-upto-{}", k.name()),
    }
}

fn train_hint(model: &str) -> String {
    let mut parts = model.split('-');
    let mode = parts.next().unwrap_or("baseline");
    let mut cmd = format!("`gando train --mode {mode}");
    if let Some(f) = parts.next() {
        cmd.push_str(&format!(" --set family={f}"));
    }
    if let (Some(_), Some(k)) = (parts.next(), parts.next()) {
        cmd.push_str(&format!(" --freeze-after {k}"));
    }
    cmd.push('`');
    cmd
}

pub fn cmd_generate_data(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let manifest = generate_dataset(&cfg.scene(), cfg.counts(), cfg.seed)?;
    let path = ctx.manifest_path();
    atomic_write(&path, manifest.to_text().as_bytes())?;
    let mut out = vec![path];
    if cfg.cache_images {
        let dir = ctx.dir.join("data").join("images");
        manifest.write_image_cache(&dir)?;
        out.push(dir);
    }
    Ok(out)
}

fn save_outcome(ctx: &Context, model: &str, mut outcome: TrainOutcome) -> Result<Vec<PathBuf>> {
    // Snapshots and the log go first so a registered checkpoint always has them.
    let mut out = Vec::new();
    for snap in &mut outcome.snapshots {
        snap.meta.config_hash = ctx.config_hash.clone();
        let p = ctx
            .dir
            .join("checkpoints")
            .join("snapshots")
            .join(format!("{model}.e{}.ckpt", snap.meta.epoch));
        snap.save(&p)?;
        out.push(p);
    }
    let log = ctx.log_path(model);
    atomic_write(&log, outcome.log.to_jsonl().as_bytes())?;
    out.push(log);
    outcome.checkpoint.meta.config_hash = ctx.config_hash.clone();
    let ck = ctx.checkpoint_path(model);
    outcome.checkpoint.save(&ck)?;
    out.push(ck);
    Ok(out)
}

/// Trains one model. `freeze_after` overrides the config key when given.
pub fn cmd_train(ctx: &Context, mode: TrainMode, freeze_after: Option<Layer>) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let manifest = ctx.manifest()?;
    let arch = cfg.arch();
    let mut tc = cfg.train_config(mode)?;
    if freeze_after.is_some() && mode != TrainMode::Baseline {
        tc.freeze_after = freeze_after;
    }
    let data = TrainingData::from_manifest(&manifest, &arch.anchors(), tc.match_iou)?;
    let model = model_name(mode, cfg.family, tc.freeze_after);
    let outcome = match mode {
        TrainMode::Baseline => {
            let init = DetectorParams::init(&arch, derive_seed(cfg.seed, &[TAG_INIT]))?;
            train_baseline(&tc, init, &data)?
        }
        TrainMode::Finetune | TrainMode::Gando => {
            let baseline = ctx.load_model("baseline")?;
            let pool = ctx.pool(cfg.family)?;
            if mode == TrainMode::Gando {
                train_gando(&tc, &baseline, &data, &pool)?
            } else {
                train_finetune(&tc, &baseline, &data, &pool)?
            }
        }
    };
    save_outcome(ctx, &model, outcome)
}

/// Lazily loaded checkpoints and the test split shared by all suites.
struct Evaluator<'a> {
    ctx: &'a Context,
    test: LabeledSet,
    models: BTreeMap<String, Checkpoint>,
}

impl<'a> Evaluator<'a> {
    fn model(&mut self, name: &str) -> Result<&Checkpoint> {
        if !self.models.contains_key(name) {
            let ck = self.ctx.load_model(name)?;
            self.models.insert(name.to_string(), ck);
        }
        Ok(&self.models[name])
    }

    fn report(&self, suite: &str, title: &str, columns: Vec<String>) -> SuiteReport {
        SuiteReport::new(suite, title, &self.ctx.config_hash, columns)
    }

    fn cite(&self, r: &mut SuiteReport, names: &[String]) {
        for n in names {
            r.checkpoints.insert(n.clone(), self.models[n].id());
        }
    }

    fn seed(&self) -> u64 {
        derive_seed(self.ctx.cfg.seed, &[TAG_EVAL])
    }

    fn distorted(&self, family: Family) -> Result<LabeledSet> {
        Ok(distort_random(&self.test, &self.ctx.pool(family)?, self.seed()))
    }

    fn trio(&self, family: Family) -> Vec<String> {
        vec![
            "baseline".into(),
            model_name(TrainMode::Finetune, family, None),
            model_name(TrainMode::Gando, family, None),
        ]
    }

    fn pct(&mut self, name: &str, set: &LabeledSet) -> Result<Option<f64>> {
        let dc = self.ctx.cfg.decode();
        let ck = self.model(name)?;
        Ok(Some(100.0 * map50(&ck.params, set, &dc)?))
    }

    fn table1(&mut self) -> Result<SuiteReport> {
        let cols = ["L_class", "L_bb", "L_class change %", "L_bb change %"];
        let mut r = self.report("table1", "Detection loss components of the baseline under distortion", cols.map(String::from).to_vec());
        let lc = LossConfig::default();
        let seed = self.seed();
        let pools = Family::ALL.iter().map(|&f| self.ctx.pool(f)).collect::<Result<Vec<_>>>()?;
        let base = self.model("baseline")?.params.clone();
        let clean = loss_decomposition(&base, &self.test, None, seed, &lc)?;
        r.push("clean", vec![Some(clean.l_class), Some(clean.l_bb), Some(0.0), Some(0.0)]);
        for (f, pool) in Family::ALL.iter().zip(&pools) {
            let b = loss_decomposition(&base, &self.test, Some(pool), seed, &lc)?;
            let change = |v: f64, c: f64| (c > 0.0).then(|| 100.0 * (v - c) / c);
            r.push(f.name(), vec![Some(b.l_class), Some(b.l_bb), change(b.l_class, clean.l_class), change(b.l_bb, clean.l_bb)]);
        }
        self.cite(&mut r, &["baseline".into()]);
        Ok(r)
    }

    fn table3(&mut self) -> Result<SuiteReport> {
        let mut r = self.report("table3", "mAP@0.5 (%) on clean and distorted test images", vec!["clean".into(), "distorted".into()]);
        let mut cited = Vec::new();
        for f in self.ctx.cfg.eval_families.clone() {
            let d = self.distorted(f)?;
            for name in self.trio(f) {
                let test = self.test.clone();
                let row = vec![self.pct(&name, &test)?, self.pct(&name, &d)?];
                let label = if name == "baseline" { format!("{f} / baseline") } else { format!("{f} / {}", name.split('-').next().unwrap_or("")) };
                r.push(label, row);
                cited.push(name);
            }
        }
        self.cite(&mut r, &cited);
        Ok(r)
    }

    fn table4(&mut self) -> Result<SuiteReport> {
        let fams = self.ctx.cfg.eval_families.clone();
        let names: Vec<String> = fams.iter().map(|&f| model_name(TrainMode::Gando, f, None)).collect();
        for n in &names {
            self.model(n)?;
        }
        let models: Vec<(String, &DetectorParams<f32>)> = names.iter().map(|n| (n.clone(), &self.models[n].params)).collect();
        let m = cross_distortion_matrix(&models, &fams, &self.test, self.seed(), &self.ctx.cfg.decode())?;
        let cols = fams.iter().map(|f| format!("test {f}")).collect();
        let mut r = self.report("table4", "Cross-distortion mAP@0.5 (%): rows trained on, columns tested on", cols);
        for (name, row) in m.models.iter().zip(&m.map) {
            r.push(format!("trained {}", name.trim_start_matches("gando-")), row.iter().map(|v| Some(100.0 * v)).collect());
        }
        self.cite(&mut r, &names);
        Ok(r)
    }

    fn table5(&mut self) -> Result<SuiteReport> {
        let f = self.ctx.cfg.family;
        let mut r = self.report("table5", "Partial retraining: layers up to k trained", vec!["clean".into(), "distorted".into()]);
        let d = self.distorted(f)?;
        let mut names = Vec::new();
        for k in self.ctx.cfg.gan_k_layers.clone() {
            names.push((format!("up to {k}"), model_name(TrainMode::Gando, f, Some(Layer::parse(&k)?))));
        }
        names.push(("all layers".into(), model_name(TrainMode::Gando, f, None)));
        for (label, name) in &names {
            let test = self.test.clone();
            let row = vec![self.pct(name, &test)?, self.pct(name, &d)?];
            r.push(label.clone(), row);
        }
        let cited: Vec<String> = names.into_iter().map(|(_, n)| n).collect();
        self.cite(&mut r, &cited);
        Ok(r)
    }

    fn table6(&mut self) -> Result<SuiteReport> {
        let f = self.ctx.cfg.family;
        let names = self.trio(f);
        let dc = self.ctx.cfg.decode();
        let mut sweeps = Vec::new();
        for name in &names {
            let params = self.model(name)?.params.clone();
            sweeps.push(per_level_sweep(&params, &self.test, f, &dc)?);
        }
        let cols = sweeps[0].iter().map(|(r, _)| format!("r={r}")).collect();
        let mut r = self.report("table6", &format!("mAP@0.5 (%) by {f} blur radius"), cols);
        for (name, sweep) in names.iter().zip(&sweeps) {
            r.push(name.split('-').next().unwrap_or(name), sweep.iter().map(|(_, m)| Some(100.0 * m)).collect());
        }
        self.cite(&mut r, &names);
        Ok(r)
    }

    fn heavy(&mut self) -> Result<SuiteReport> {
        let cfg = &self.ctx.cfg;
        let f = cfg.family;
        let radii = cfg.heavy_radii.clone();
        let label = radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",");
        let pool = DistortionPool::from_spec(&crate::degrade::PoolSpec { family: f, levels: Some(radii) }, derive_seed(cfg.seed, &[TAG_POOL]))?;
        let heavy = distort_all_levels(&self.test, &pool, self.seed())?;
        let mut r = self.report("heavy", &format!("mAP@0.5 (%) on clean and heavy {f} ({label}) test images"), vec!["clean".into(), "heavy".into()]);
        let names = self.trio(f);
        for name in &names {
            let test = self.test.clone();
            let row = vec![self.pct(name, &test)?, self.pct(name, &heavy)?];
            r.push(name.split('-').next().unwrap_or(name), row);
        }
        self.cite(&mut r, &names);
        Ok(r)
    }

    fn coco(&mut self) -> Result<SuiteReport> {
        let f = self.ctx.cfg.family;
        let cols = ["AP50", "AP50:95", "AP75", "AP small", "AP medium", "AP large"];
        let mut r = self.report("coco", "COCO-style AP (%)", cols.map(String::from).to_vec());
        let d = self.distorted(f)?;
        let dc = self.ctx.cfg.decode();
        let names = self.trio(f);
        for name in &names {
            let params = self.model(name)?.params.clone();
            for (cond, set) in [("clean", &self.test), (f.name(), &d)] {
                let a = evaluate_set(&params, set, &dc)?;
                let p = |v: Option<f64>| v.map(|x| 100.0 * x);
                r.push(
                    format!("{} / {cond}", name.split('-').next().unwrap_or(name)),
                    vec![p(a.map50), p(a.ap_50_95), p(a.ap75), p(a.ap_small), p(a.ap_medium), p(a.ap_large)],
                );
            }
        }
        r.notes.push(format!(
            "Area bins (px^2): small < {:.2}, medium < {:.2}. n/a marks bins without ground truth.",
            a_bins(self.ctx).small_max,
            a_bins(self.ctx).medium_max
        ));
        self.cite(&mut r, &names);
        Ok(r)
    }
}

fn a_bins(ctx: &Context) -> crate::evalkit::AreaBins {
    crate::evalkit::AreaBins::scaled_for(ctx.cfg.image_size)
}

/// Runs each suite and writes `reports/<suite>.{jsonl,md}` (plus an SVG
/// plot for `table6`). An empty list does nothing.
pub fn cmd_evaluate(ctx: &Context, suites: &[String]) -> Result<Vec<PathBuf>> {
    if suites.is_empty() {
        return Ok(Vec::new());
    }
    for s in suites {
        if !super::config::SUITES.contains(&s.as_str()) {
            return Err(Error::Config(format!("unknown suite '{s}' (known: {})", super::config::SUITES.join(", "))));
        }
    }
    let manifest = ctx.manifest()?;
    let arch = ctx.cfg.arch();
    let test = LabeledSet::from_manifest(&manifest, Split::Test, &arch.anchors(), ctx.cfg.match_iou)?;
    let mut ev = Evaluator {
        ctx,
        test,
        models: BTreeMap::new(),
    };
    let mut reports = Vec::new();
    for s in suites {
        reports.push(match s.as_str() {
            "table1" => ev.table1()?,
            "table3" => ev.table3()?,
            "table4" => ev.table4()?,
            "table5" => ev.table5()?,
            "table6" => ev.table6()?,
            "heavy" => ev.heavy()?,
            "coco" => ev.coco()?,
            _ => unreachable!("validated above"),
        });
    }
    let dir = ctx.reports_dir();
    let mut out = Vec::new();
    for r in &reports {
        let j = dir.join(format!("{}.jsonl", r.suite));
        atomic_write(&j, r.to_jsonl().as_bytes())?;
        let m = dir.join(format!("{}.md", r.suite));
        atomic_write(&m, r.to_markdown().as_bytes())?;
        out.extend([j, m]);
        if r.suite == "table6" {
            let p = dir.join("table6.svg");
            atomic_write(&p, r.to_svg("mAP@0.5 (%)").as_bytes())?;
            out.push(p);
        }
    }
    Ok(out)
}

/// Collects every rendered table into `reports/summary.md`.
pub fn cmd_report(ctx: &Context) -> Result<Vec<PathBuf>> {
    let dir = ctx.reports_dir();
    let mut tables: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "md") && p.file_stem().is_some_and(|s| s != "summary"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if tables.is_empty() {
        return Err(Error::MissingArtifact {
            path: dir,
            hint: "run `gando evaluate --suite ...` first".into(),
        });
    }
    tables.sort();
    let mut s = format!(
        "# Experiment {}\n\nconfig hash: `{}`\n\n",
        ctx.cfg.experiment_id, ctx.config_hash
    );
    for t in &tables {
        s.push_str(&std::fs::read_to_string(t)?);
        s.push('\n');
    }
    let path = dir.join("summary.md");
    atomic_write(&path, s.as_bytes())?;
    Ok(vec![path])
}

/// Applies 1-based `level` of `family` to one PNG or every PNG in a
/// directory. Each output `<stem>.png` in `out` gets a `<stem>.tag.json` sidecar.
pub fn cmd_distort(ctx: &Context, input: &Path, family: Family, level: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let pool = DistortionPool::from_spec(&ctx.cfg.pool_spec(family), seed)?;
    if level == 0 || level > pool.len() {
        return Err(Error::Level {
            family: family.name().into(),
            value: level.to_string(),
            valid: format!("level index in [1, {}]", pool.len()),
        });
    }
    let mut inputs: Vec<PathBuf> = if input.is_dir() {
        std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect()
    } else if input.exists() {
        vec![input.to_path_buf()]
    } else {
        return Err(Error::MissingArtifact {
            path: input.to_path_buf(),
            hint: "pass a PNG file or a directory of PNG files".into(),
        });
    };
    if inputs.is_empty() {
        return Err(Error::MissingArtifact {
            path: input.to_path_buf(),
            hint: "the directory contains no .png files".into(),
        });
    }
    inputs.sort();
    let mut written = Vec::new();
    for (i, p) in inputs.iter().enumerate() {
        let img = Image::load_png(p)?;
        let noise_seed = derive_seed(seed, &[i as u64]);
        let d = pool.apply_level(&img, level, noise_seed)?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let png = out.join(format!("{stem}.png"));
        std::fs::create_dir_all(out)?;
        let tmp = out.join(format!(".{stem}.tmp.png"));
        d.save_png(&tmp)?;
        std::fs::rename(&tmp, &png)?;
        let side = out.join(format!("{stem}.tag.json"));
        let tag = serde_json::json!({ "source": p, "tag": d.tag, "seed": seed, "noise_seed": noise_seed });
        atomic_write(&side, format!("{tag}\n").as_bytes())?;
        written.extend([png, side]);
    }
    Ok(written)
}
