use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::layout::{stamp_tree, unix_now, ExpLayout};
use super::stages::*;
use crate::blade::{write_dataset, DatasetManifest, DesignRecord, Split};
use crate::cond::{conditional_generate, pair_by_design, read_strains, surrogate_strains, train_cond, write_strains};
use crate::cond::{CondConfig, CondModel, StrainRecord, StrainTriplet};
use crate::latent::{interpolate, marginal_stats, DiagonalGaussian, PcaBasis};
use crate::mesh::TriangleMesh;
use crate::metrics::{median, surface_distance, write_distance_csv, Histogram};
use crate::neural::{load_checkpoint, save_checkpoint, train_observed, InferConfig, LatentTable, TrainConfig};
use crate::{seeds, Error, Result};

/// Points sampled on an optimized-code mesh when comparing it to the
/// conditional reconstruction of the same design.
const COND_COMPARE_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenDataset,
    Label,
    Train,
    InferLatent,
    Extract,
    EvalDist,
    Pca,
    SampleInterp,
    TrainCmap,
    GenCond,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::GenDataset,
        Stage::Label,
        Stage::Train,
        Stage::InferLatent,
        Stage::Extract,
        Stage::EvalDist,
        Stage::Pca,
        Stage::SampleInterp,
        Stage::TrainCmap,
        Stage::GenCond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenDataset => "gen-dataset",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::InferLatent => "infer-latent",
            Stage::Extract => "extract",
            Stage::EvalDist => "eval-dist",
            Stage::Pca => "pca",
            Stage::SampleInterp => "sample-interp",
            Stage::TrainCmap => "train-cmap",
            Stage::GenCond => "gen-cond",
        }
    }

    fn is_conditional(self) -> bool {
        matches!(self, Stage::TrainCmap | Stage::GenCond)
    }

    /// Files and directories the stage owns inside the experiment.
    pub fn outputs(self, l: &ExpLayout) -> Vec<PathBuf> {
        match self {
            Stage::GenDataset => vec![l.dataset()],
            Stage::Label => vec![l.sdf()],
            Stage::Train => vec![l.decoder(), l.latents().join("train.csv")],
            Stage::InferLatent => vec![l.latents().join("test.csv"), l.reports().join("infer_test.csv")],
            Stage::Extract => vec![l.meshes().join("train"), l.meshes().join("test"), l.reports().join("meshes")],
            Stage::EvalDist => vec![l.reports().join("distance")],
            Stage::Pca => vec![l.reports().join("latent")],
            Stage::SampleInterp => vec![l.meshes().join("generated"), l.reports().join("generated.csv")],
            Stage::TrainCmap => vec![l.cond(), l.reports().join("cond_nrmse.csv")],
            Stage::GenCond => vec![l.meshes().join("cond"), l.reports().join("cond_generation.csv")],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages not to execute in this invocation.
    pub skip: Vec<Stage>,
    /// Re-run stages even when a completion marker exists.
    pub force: bool,
}

/// Seeds actually fed to each stage, derived from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub dataset: u64,
    pub label: u64,
    pub train: u64,
    pub infer: u64,
    pub sample: u64,
    pub cond: Option<u64>,
}

impl RunSeeds {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            dataset: cfg.seed,
            label: seeds::derive(cfg.seed, "label-stage", 0),
            train: seeds::derive(cfg.seed, "train", cfg.train.seed),
            infer: seeds::derive(cfg.seed, "infer", cfg.infer.seed),
            sample: seeds::derive(cfg.seed, "latent-sample", 0),
            cond: cfg.cond.as_ref().map(|c| seeds::derive(cfg.seed, "cond", c.model.seed)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: Stage,
    pub config_hash: String,
    pub timestamp_unix: u64,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config_hash: &'a str,
    seeds: &'a RunSeeds,
    stages: Vec<&'static str>,
    config: &'a RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub root: PathBuf,
    pub config_hash: String,
    pub executed: Vec<Stage>,
    /// Stages skipped on request or because they had already completed.
    pub skipped: Vec<Stage>,
}

/// Runs every stage in order under `exp_root/<config hash>`. Completed
/// stages are detected by marker files and skipped unless `opts.force`.
pub fn run_pipeline(cfg: &RunConfig, exp_root: &Path, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Invalid(format!("cannot build worker pool: {e}")))?;
        pool.install(|| run_stages(cfg, exp_root, opts))
    } else {
        run_stages(cfg, exp_root, opts)
    }
}

fn run_stages(cfg: &RunConfig, exp_root: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let hash = cfg.hash();
    let layout = ExpLayout::new(exp_root, &hash);
    layout.create()?;
    let seeds = RunSeeds::of(cfg);
    let stages: Vec<Stage> = Stage::ALL.into_iter().filter(|s| cfg.cond.is_some() || !s.is_conditional()).collect();
    let manifest = RunManifest { config_hash: &hash, seeds: &seeds, stages: stages.iter().map(|s| s.name()).collect(), config: cfg };
    fs::write(layout.root.join("run.json"), serde_json::to_string_pretty(&manifest)?)?;
    cfg.save(&layout.root.join("config.json"))?;

    let ctx = Ctx { cfg, layout: &layout, seeds: &seeds };
    let mut summary = RunSummary { root: layout.root.clone(), config_hash: hash.clone(), executed: vec![], skipped: vec![] };
    for stage in stages {
        let marker = layout.marker(stage.name());
        if opts.skip.contains(&stage) {
            log::info!("stage {stage}: skipped on request");
            summary.skipped.push(stage);
            continue;
        }
        if marker.exists() && !opts.force {
            log::info!("stage {stage}: already complete");
            summary.skipped.push(stage);
            continue;
        }
        let outputs = stage.outputs(&layout);
        let wrap = |e: Error| Error::Stage { stage: stage.name().into(), artifacts: outputs[0].clone(), source: Box::new(e) };
        for out in &outputs {
            remove_path(out).map_err(wrap)?;
        }
        log::info!("stage {stage}: running");
        ctx.run(stage).map_err(wrap)?;
        let mut artifacts = Vec::new();
        for out in &outputs {
            artifacts.extend(stamp_tree(out, &hash, stage.name()).map_err(wrap)?);
        }
        let marker_body = StageMarker {
            stage,
            config_hash: hash.clone(),
            timestamp_unix: unix_now(),
            artifacts: artifacts.iter().map(|p| p.strip_prefix(&layout.root).unwrap_or(p).to_path_buf()).collect(),
        };
        fs::write(&marker, serde_json::to_string_pretty(&marker_body)?)?;
        summary.executed.push(stage);
    }
    Ok(summary)
}

fn remove_path(p: &Path) -> Result<()> {
    if p.is_dir() {
        fs::remove_dir_all(p)?;
    } else if p.exists() {
        fs::remove_file(p)?;
    }
    Ok(())
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    layout: &'a ExpLayout,
    seeds: &'a RunSeeds,
}

fn ids_of<'a>(designs: impl Iterator<Item = &'a DesignRecord>) -> Vec<String> {
    designs.map(|d| d.design_id.clone()).collect()
}

#[derive(Serialize)]
struct DistanceSummary {
    split: &'static str,
    designs: usize,
    median_relative: f64,
    max_relative: f64,
    median_distance: f64,
}

#[derive(Serialize)]
struct Alignment {
    property: &'static str,
    axis: usize,
    spearman: f64,
}

#[derive(Serialize)]
struct CondRow {
    name: String,
    eps_x: f64,
    eps_y: f64,
    eps_z: f64,
    triangles: usize,
    watertight: bool,
    max_aspect: f64,
    distance_to_optimized: Option<f64>,
}

impl Ctx<'_> {
    fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::GenDataset => write_dataset(&self.cfg.dataset_spec(), &self.layout.dataset()).map(|_| ()),
            Stage::Label => label_dataset(&self.layout.dataset(), &self.layout.sdf(), &self.cfg.label, self.seeds.label).map(|_| ()),
            Stage::Train => self.train(),
            Stage::InferLatent => self.infer(),
            Stage::Extract => self.extract(),
            Stage::EvalDist => self.eval_dist(),
            Stage::Pca => self.pca(),
            Stage::SampleInterp => self.sample_interp(),
            Stage::TrainCmap => self.train_cmap(),
            Stage::GenCond => self.gen_cond(),
        }
    }

    fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::load(&self.layout.dataset())
    }

    fn latents(&self, split: &str) -> Result<Option<LatentTable>> {
        let path = self.layout.latents().join(format!("{split}.csv"));
        if path.exists() {
            LatentTable::read_csv(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn train_latents(&self) -> Result<LatentTable> {
        self.latents("train")?
            .ok_or_else(|| Error::Invalid("training latents missing; run the train stage first".into()))
    }

    fn train(&self) -> Result<()> {
        let ids = ids_of(self.manifest()?.split(Split::Train));
        let sets = load_sets(&self.layout.sdf(), &ids)?;
        let tcfg = TrainConfig { seed: self.seeds.train, ..self.cfg.train.clone() };
        let out = train_observed(&sets, &self.cfg.decoder, &tcfg, |epoch, loss| {
            if epoch % 10 == 0 || epoch + 1 == tcfg.epochs {
                log::info!("epoch {epoch}: loss {loss:.5}");
            }
        })?;
        save_checkpoint(&self.layout.decoder(), &out.model, Some(&out.latents), Some(&tcfg), tcfg.epochs, &out.loss_curve)?;
        out.latents.write_csv(&self.layout.latents().join("train.csv"))
    }

    fn infer(&self) -> Result<()> {
        let ids = ids_of(self.manifest()?.split(Split::Test));
        if ids.is_empty() {
            log::info!("no test designs; nothing to infer");
            return Ok(());
        }
        let ckpt = load_checkpoint(&self.layout.decoder())?;
        let sets = load_sets(&self.layout.sdf(), &ids)?;
        let icfg = InferConfig { seed: self.seeds.infer, ..self.cfg.infer.clone() };
        let (table, outcomes) = infer_codes(&ckpt.model, &sets, &icfg)?;
        table.write_csv(&self.layout.latents().join("test.csv"))?;
        write_infer_report(&self.layout.reports().join("infer_test.csv"), &ids, &outcomes)
    }

    fn extract(&self) -> Result<()> {
        let ckpt = load_checkpoint(&self.layout.decoder())?;
        let report_dir = self.layout.reports().join("meshes");
        fs::create_dir_all(&report_dir)?;
        let m = &self.cfg.mesh;
        for split in ["train", "test"] {
            if let Some(table) = self.latents(split)? {
                let rows = extract_table(&ckpt.model, &table, &self.layout.meshes().join(split), m.resolution, m.half_width)?;
                write_mesh_summaries(&report_dir.join(format!("{split}.csv")), &rows)?;
            }
        }
        Ok(())
    }

    fn eval_dist(&self) -> Result<()> {
        let dir = self.layout.reports().join("distance");
        fs::create_dir_all(&dir)?;
        let mut summaries = Vec::new();
        for split in ["train", "test"] {
            let Some(table) = self.latents(split)? else { continue };
            let reports = evaluate_meshes(&self.layout.dataset(), &self.layout.meshes().join(split), &table.design_ids, &self.cfg.eval)?;
            write_distance_csv(&dir.join(format!("{split}.csv")), &reports)?;
            let dist: Vec<f64> = reports.iter().map(|r| r.mean_directed_distance).collect();
            let rel: Vec<f64> = reports.iter().map(|r| r.relative()).collect();
            Histogram::new(&dist, self.cfg.eval.bins)?.write_json(&dir.join(format!("{split}_histogram.json")))?;
            summaries.push(DistanceSummary {
                split,
                designs: reports.len(),
                median_relative: median(&rel),
                max_relative: rel.iter().cloned().fold(0.0, f64::max),
                median_distance: median(&dist),
            });
        }
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;
        Ok(())
    }

    fn pca(&self) -> Result<()> {
        let table = self.train_latents()?;
        let dir = self.layout.reports().join("latent");
        let pca = PcaBasis::fit(&table, self.cfg.latent.pca_components)?;
        pca.save(&dir.join("pca"))?;
        let dims: Vec<usize> = (0..table.dim()).collect();
        let marginals = marginal_stats(&table, &dims, self.cfg.eval.bins)?;
        fs::write(dir.join("marginals.json"), serde_json::to_string_pretty(&marginals)?)?;

        let manifest = self.manifest()?;
        let params: Vec<_> = table
            .design_ids
            .iter()
            .map(|id| manifest.designs.iter().find(|d| &d.design_id == id).map(|d| d.params))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Invalid("latent table names a design missing from the dataset".into()))?;
        let mut alignment = Vec::new();
        let props: [(&'static str, fn(&crate::blade::BladeParams) -> f64); 3] =
            [("k1", |p| p.k1), ("k2", |p| p.k2), ("k3", |p| p.k3)];
        for (name, get) in props {
            let values: Vec<f64> = params.iter().map(get).collect();
            let (axis, rho) = pca.best_aligned_axis(&table.codes, &values)?;
            alignment.push(Alignment { property: name, axis, spearman: rho });
        }
        fs::write(dir.join("alignment.json"), serde_json::to_string_pretty(&alignment)?)?;
        Ok(())
    }

    fn sample_interp(&self) -> Result<()> {
        let ckpt = load_checkpoint(&self.layout.decoder())?;
        let table = self.train_latents()?;
        let lat = &self.cfg.latent;
        let (res, hw) = (self.cfg.mesh.resolution, self.cfg.mesh.half_width);
        let dir = self.layout.meshes().join("generated");
        let mut rows = Vec::new();

        let gauss = DiagonalGaussian::fit(&table, lat.temperature)?;
        let samples = gauss.sample_codes(lat.n_samples, self.seeds.sample)?;
        for (i, z) in samples.rows().into_iter().enumerate() {
            rows.push(decode_to_file(&ckpt.model, &z.to_vec(), &format!("sample_{i:02}"), &dir, res, hw)?);
        }

        let (a, b) = match &lat.interp_pair {
            Some((a, b)) => (a.clone(), b.clone()),
            None => (table.design_ids[0].clone(), table.design_ids[1].clone()),
        };
        let lookup = |id: &str| table.get(id).ok_or_else(|| Error::Invalid(format!("no latent code for design {id}")));
        let (za, zb) = (lookup(&a)?, lookup(&b)?);
        let n = lat.interp_steps;
        let alphas: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        for (i, z) in interpolate(za.view(), zb.view(), &alphas)?.iter().enumerate() {
            rows.push(decode_to_file(&ckpt.model, &z.to_vec(), &format!("interp_{i:02}"), &dir, res, hw)?);
        }

        if !lat.traverse_coords.is_empty() {
            let pca = PcaBasis::load(&self.layout.reports().join("latent").join("pca"))?;
            let axis = lat.traverse_axis;
            let sd = pca
                .explained_variance
                .get(axis)
                .ok_or_else(|| Error::Invalid(format!("traverse axis {axis} exceeds {} components", pca.n_components())))?
                .sqrt();
            let coords: Vec<f64> = lat.traverse_coords.iter().map(|c| c * sd).collect();
            for (i, z) in pca.traverse(axis, &coords)?.iter().enumerate() {
                rows.push(decode_to_file(&ckpt.model, &z.to_vec(), &format!("traverse_{i:02}"), &dir, res, hw)?);
            }
        }
        write_mesh_summaries(&self.layout.reports().join("generated.csv"), &rows)
    }

    fn cond_cfg(&self) -> Result<&super::config::CondStageConfig> {
        self.cfg.cond.as_ref().ok_or_else(|| Error::Config("no cond section in the config".into()))
    }

    fn train_cmap(&self) -> Result<()> {
        let c = self.cond_cfg()?;
        let records = match &c.strains {
            Some(path) => read_strains(path)?,
            None => self
                .manifest()?
                .split(Split::Train)
                .map(|d| {
                    let s = surrogate_strains(&d.params);
                    StrainRecord { design_id: d.design_id.clone(), eps_x: s.eps_x, eps_y: s.eps_y, eps_z: s.eps_z }
                })
                .collect(),
        };
        let table = self.train_latents()?;
        let (_, inputs, codes) = pair_by_design(&records, &table)?;
        let ccfg = CondConfig { seed: self.seeds.cond.unwrap_or(c.model.seed), ..c.model.clone() };
        let out = train_cond(&inputs, codes.view(), &ccfg)?;
        out.model.save(&self.layout.cond())?;
        write_strains(&self.layout.cond().join("strains.csv"), &records)?;
        let mut w = csv::Writer::from_path(self.layout.reports().join("cond_nrmse.csv"))?;
        w.write_record(["epoch", "nrmse_percent"])?;
        for (e, v) in out.nrmse_curve.iter().enumerate() {
            w.write_record([e.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        log::info!("conditional map NRMSE {:.2}%", out.nrmse_curve.last().copied().unwrap_or(f64::NAN));
        Ok(())
    }

    fn gen_cond(&self) -> Result<()> {
        let c = self.cond_cfg()?;
        let model = CondModel::load(&self.layout.cond())?;
        let ckpt = load_checkpoint(&self.layout.decoder())?;
        let (res, hw) = (self.cfg.mesh.resolution, self.cfg.mesh.half_width);
        let dir = self.layout.meshes().join("cond");
        fs::create_dir_all(&dir)?;

        let targets: Vec<(String, StrainTriplet, Option<String>)> = if c.targets.is_empty() {
            read_strains(&self.layout.cond().join("strains.csv"))?
                .into_iter()
                .filter(|r| self.layout.meshes().join("train").join(format!("{}.obj", r.design_id)).exists())
                .map(|r| Ok((r.design_id.clone(), r.triplet()?, Some(r.design_id))))
                .collect::<Result<_>>()?
        } else {
            c.targets
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((format!("target_{i:02}"), StrainTriplet::from_array(*t)?, None)))
                .collect::<Result<_>>()?
        };

        let mut rows = Vec::new();
        for (name, target, design) in targets {
            let mesh = match conditional_generate(&model, &ckpt.model, target, res, hw) {
                Ok(m) => m,
                Err(Error::ConditioningLeftManifold) => {
                    log::warn!("conditional code for {name} decodes to no surface");
                    TriangleMesh::default()
                }
                Err(e) => return Err(e),
            };
            mesh.write_obj(&mesh_path(&dir, &name))?;
            let distance = match (&design, mesh.is_empty()) {
                (Some(id), false) => {
                    let opt = TriangleMesh::read_obj(&mesh_path(&self.layout.meshes().join("train"), id))?;
                    if opt.is_empty() {
                        None
                    } else {
                        let pts = opt.sample_surface(COND_COMPARE_SAMPLES, seeds::derive(self.cfg.seed, "cond-compare", 0))?;
                        Some(surface_distance(&pts, &mesh, self.cfg.eval.surface)?)
                    }
                }
                _ => None,
            };
            let s = MeshSummary::of(&name, &mesh);
            rows.push(CondRow {
                name,
                eps_x: target.eps_x,
                eps_y: target.eps_y,
                eps_z: target.eps_z,
                triangles: s.triangles,
                watertight: s.watertight,
                max_aspect: s.max_aspect,
                distance_to_optimized: distance,
            });
        }
        let mut w = csv::Writer::from_path(self.layout.reports().join("cond_generation.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
