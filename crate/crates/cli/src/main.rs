use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use forge_core::blade::{write_dataset, DatasetManifest, Split};
use forge_core::cond::{
    conditional_generate, pair_by_design, read_strains, surrogate_strains, train_cond, write_strains, CondConfig, CondModel,
    StrainRecord, StrainTriplet,
};
use forge_core::latent::{interpolate, DiagonalGaussian, PcaBasis};
use forge_core::metrics::{median, nrmse_per_dim, write_distance_csv, NrmseScale, ReferenceSet, SurfaceMode};
use forge_core::neural::{load_checkpoint, save_checkpoint, train_observed, LatentTable, LoadedCheckpoint};
use forge_core::pipeline::stages::{
    decode_to_file, evaluate_meshes, infer_codes, label_dataset, load_sets, write_infer_report, write_mesh,
    write_mesh_summaries, MeshSummary,
};
use forge_core::pipeline::{run_pipeline, RunConfig, RunOptions, RunSeeds, Stage};
use forge_core::mesh::decode_mesh;
use forge_core::{Error, Result};

/// Implicit SDF pipeline for parametric turbine blades.
#[derive(Parser)]
#[command(name = "forge", version, about)]
struct Cli {
    /// Run config (JSON). Its sections provide defaults that subcommand flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config's `seed`.
    #[arg(long, global = true, env = "FORGE_SEED")]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "FORGE_THREADS")]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective run config as JSON.
    Config {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize blade point clouds and the dataset manifest.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        n_surface: Option<usize>,
        #[arg(long)]
        n_interior: Option<usize>,
    },
    /// Turn every cloud of a dataset into clamped signed-distance samples.
    Label {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        band_fraction: Option<f64>,
        #[arg(long)]
        tol_surf: Option<f64>,
    },
    /// Jointly fit the decoder and one latent code per training design.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        sdf: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        no_batch_norm: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        lambda_z: Option<f64>,
    },
    /// Fit codes for unseen designs with the decoder frozen.
    InferLatent {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sdf: PathBuf,
        /// Dataset whose test split is used when `--ids` is absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Decode latent codes to triangle meshes (OBJ, or STL by extension).
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Latent CSV; the checkpoint's training codes when absent.
        #[arg(long)]
        latents: Option<PathBuf>,
        /// Design to extract; every design of the table when absent.
        #[arg(long)]
        id: Option<String>,
        /// Mesh file for a single design, directory otherwise.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Directed surface distance from reference clouds to extracted meshes.
    EvalDist {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Exact point-to-triangle distance instead of surface sampling.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum)]
        reference: Option<ReferenceArg>,
    },
    /// Per-dimension NRMSE between two latent tables.
    EvalNrmse {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "range")]
        scale: ScaleArg,
    },
    /// Principal component analysis of a latent table.
    Pca {
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        components: Option<usize>,
    },
    /// Decode codes along one principal axis.
    Traverse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pca: PathBuf,
        #[arg(long, default_value_t = 0)]
        axis: usize,
        /// Coordinates in units of the axis standard deviation.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
        coords: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Decode linear interpolations between two designs' codes.
    Interp {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        latents: Option<PathBuf>,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Decode codes drawn from a diagonal Gaussian fitted to the latents.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        latents: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Write surrogate strain triplets for every design of a dataset.
    SurrogateStrains {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the strain-to-latent regressor.
    TrainCmap {
        #[arg(long)]
        strains: PathBuf,
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Generate a blade for a target strain triplet.
    GenCond {
        #[arg(long)]
        cmap: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target strains as `eps_x,eps_y,eps_z`.
        #[arg(long)]
        eps: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run every stage under `<exp-root>/<config hash>`.
    Run {
        #[arg(long, default_value = "exp")]
        exp_root: PathBuf,
        /// Stages to leave out of this invocation.
        #[arg(long, value_delimiter = ',')]
        skip: Vec<String>,
        /// Re-run stages that already completed.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args, Clone, Copy)]
struct GridArgs {
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Full,
    Hull,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Range,
    Std,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Invalid(_) | Error::DimensionMismatch { .. } | Error::Parse { .. } | Error::Json(_) => 2,
        _ => 3,
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl GridArgs {
    fn resolve(self, cfg: &RunConfig) -> (usize, f64) {
        (self.resolution.unwrap_or(cfg.mesh.resolution), self.half_width.unwrap_or(cfg.mesh.half_width))
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    Ok(cfg)
}

fn latents_or_checkpoint(path: Option<&Path>, ckpt: &LoadedCheckpoint) -> Result<LatentTable> {
    match path {
        Some(p) => LatentTable::read_csv(p),
        None => ckpt
            .latents
            .clone()
            .ok_or_else(|| Error::Invalid("checkpoint carries no latent table; pass --latents".into())),
    }
}

fn print_summaries(rows: &[MeshSummary]) {
    for r in rows {
        println!(
            "{}: {} triangles, watertight {}, max aspect {:.1}",
            r.name, r.triangles, r.watertight, r.max_aspect
        );
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Config { out } => {
            cfg.validate()?;
            let text = serde_json::to_string_pretty(&cfg)?;
            match out {
                Some(p) => fs::write(p, text)?,
                None => println!("{text}"),
            }
        }
        Command::GenDataset { out, n_train, n_test, n_surface, n_interior } => {
            let d = &mut cfg.dataset;
            set(&mut d.n_train, n_train);
            set(&mut d.n_test, n_test);
            set(&mut d.n_surface, n_surface);
            set(&mut d.n_interior, n_interior);
            let m = write_dataset(&cfg.dataset_spec(), &out)?;
            println!("wrote {} designs to {}", m.designs.len(), out.display());
        }
        Command::Label { dataset, out, n, delta, band_fraction, tol_surf } => {
            let l = &mut cfg.label;
            set(&mut l.n, n);
            set(&mut l.delta, delta);
            set(&mut l.band_fraction, band_fraction);
            set(&mut l.tol_surf, tol_surf);
            let ids = label_dataset(&dataset, &out, &cfg.label, RunSeeds::of(&cfg).label)?;
            println!("labelled {} designs into {}", ids.len(), out.display());
        }
        Command::Train {
            dataset,
            sdf,
            out,
            latent_dim,
            layers,
            width,
            dropout,
            no_batch_norm,
            epochs,
            batch_size,
            lr,
            lambda_z,
        } => {
            let d = &mut cfg.decoder;
            set(&mut d.latent_dim, latent_dim);
            set(&mut d.hidden_layers, layers);
            set(&mut d.width, width);
            set(&mut d.dropout, dropout);
            if no_batch_norm {
                d.batch_norm = false;
            }
            let t = &mut cfg.train;
            set(&mut t.epochs, epochs);
            set(&mut t.batch_size, batch_size);
            set(&mut t.lr0, lr);
            set(&mut t.lambda_z, lambda_z);
            cfg.train.seed = RunSeeds::of(&cfg).train;
            let manifest = DatasetManifest::load(&dataset)?;
            let ids: Vec<String> = manifest.split(Split::Train).map(|d| d.design_id.clone()).collect();
            let sets = load_sets(&sdf, &ids)?;
            let epochs = cfg.train.epochs;
            let outcome = train_observed(&sets, &cfg.decoder, &cfg.train, |e, loss| {
                if e % 10 == 0 || e + 1 == epochs {
                    log::info!("epoch {e}: loss {loss:.5}");
                }
            })?;
            let m = save_checkpoint(&out, &outcome.model, Some(&outcome.latents), Some(&cfg.train), epochs, &outcome.loss_curve)?;
            if let (Some(first), Some(last)) = (outcome.loss_curve.first(), outcome.loss_curve.last()) {
                println!("loss {first:.5} -> {last:.5} over {epochs} epochs");
            }
            println!("checkpoint {} (weights {})", out.display(), &m.weights_sha256[..16]);
        }
        Command::InferLatent { checkpoint, sdf, dataset, ids, out, steps, lr, patience } => {
            let i = &mut cfg.infer;
            set(&mut i.steps, steps);
            set(&mut i.lr0, lr);
            set(&mut i.patience, patience);
            cfg.infer.seed = RunSeeds::of(&cfg).infer;
            let ids = if !ids.is_empty() {
                ids
            } else {
                let dataset = dataset.ok_or_else(|| Error::Invalid("pass --ids or --dataset".into()))?;
                DatasetManifest::load(&dataset)?.split(Split::Test).map(|d| d.design_id.clone()).collect()
            };
            let ckpt = load_checkpoint(&checkpoint)?;
            let sets = load_sets(&sdf, &ids)?;
            let (table, outcomes) = infer_codes(&ckpt.model, &sets, &cfg.infer)?;
            table.write_csv(&out)?;
            write_infer_report(&out.with_extension("report.csv"), &ids, &outcomes)?;
            println!("inferred {} codes into {}", table.len(), out.display());
        }
        Command::Extract { checkpoint, latents, id, out, grid } => {
            let (res, hw) = grid.resolve(&cfg);
            let ckpt = load_checkpoint(&checkpoint)?;
            let table = latents_or_checkpoint(latents.as_deref(), &ckpt)?;
            match id {
                Some(id) => {
                    let z = table.get(&id).ok_or_else(|| Error::Invalid(format!("no code for design {id}")))?;
                    let mesh = decode_mesh(&ckpt.model, z.as_slice().unwrap(), res, hw)?;
                    if let Some(parent) = out.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    write_mesh(&mesh, &out)?;
                    print_summaries(&[MeshSummary::of(&id, &mesh)]);
                }
                None => {
                    let rows = forge_core::pipeline::stages::extract_table(&ckpt.model, &table, &out, res, hw)?;
                    write_mesh_summaries(&out.join("summary.csv"), &rows)?;
                    print_summaries(&rows);
                }
            }
        }
        Command::EvalDist { dataset, meshes, out, exact, samples, reference } => {
            let e = &mut cfg.eval;
            if exact {
                e.surface = SurfaceMode::Exact;
            } else if let (Some(n), SurfaceMode::Sampled { seed, .. }) = (samples, e.surface) {
                e.surface = SurfaceMode::Sampled { n, seed };
            }
            match reference {
                Some(ReferenceArg::Full) => e.reference = ReferenceSet::Full,
                Some(ReferenceArg::Hull) => e.reference = ReferenceSet::default(),
                None => {}
            }
            let manifest = DatasetManifest::load(&dataset)?;
            let ids: Vec<String> = manifest
                .designs
                .iter()
                .map(|d| d.design_id.clone())
                .filter(|id| meshes.join(format!("{id}.obj")).is_file())
                .collect();
            if ids.is_empty() {
                return Err(Error::Invalid(format!("no design meshes found in {}", meshes.display())));
            }
            let reports = evaluate_meshes(&dataset, &meshes, &ids, &cfg.eval)?;
            write_distance_csv(&out, &reports)?;
            let rel: Vec<f64> = reports.iter().map(|r| r.relative()).collect();
            println!(
                "{} designs: median relative distance {:.3}%, max {:.3}%",
                reports.len(),
                100.0 * median(&rel),
                100.0 * rel.iter().cloned().fold(0.0, f64::max)
            );
        }
        Command::EvalNrmse { truth, pred, scale } => {
            let scale = match scale {
                ScaleArg::Range => NrmseScale::Range,
                ScaleArg::Std => NrmseScale::Std,
            };
            let report = nrmse_per_dim(&LatentTable::read_csv(&truth)?, &LatentTable::read_csv(&pred)?, scale)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Pca { latents, out, components } => {
            let table = LatentTable::read_csv(&latents)?;
            let pca = PcaBasis::fit(&table, components.or(cfg.latent.pca_components))?;
            pca.save(&out)?;
            for (i, r) in pca.explained_ratio().iter().enumerate().take(10) {
                println!("PC{}: {:.2}% of variance", i + 1, 100.0 * r);
            }
        }
        Command::Traverse { checkpoint, pca, axis, coords, out, grid } => {
            let (res, hw) = grid.resolve(&cfg);
            let ckpt = load_checkpoint(&checkpoint)?;
            let pca = PcaBasis::load(&pca)?;
            let var = pca
                .explained_variance
                .get(axis)
                .ok_or_else(|| Error::Invalid(format!("axis {axis} exceeds {} components", pca.n_components())))?;
            let scaled: Vec<f64> = coords.iter().map(|c| c * var.sqrt()).collect();
            let rows = pca
                .traverse(axis, &scaled)?
                .iter()
                .enumerate()
                .map(|(i, z)| decode_to_file(&ckpt.model, &z.to_vec(), &format!("traverse_{i:02}"), &out, res, hw))
                .collect::<Result<Vec<_>>>()?;
            print_summaries(&rows);
        }
        Command::Interp { checkpoint, latents, from, to, steps, out, grid } => {
            let (res, hw) = grid.resolve(&cfg);
            let n = steps.unwrap_or(cfg.latent.interp_steps);
            if n < 2 {
                return Err(Error::Invalid("interpolation needs at least two steps".into()));
            }
            let ckpt = load_checkpoint(&checkpoint)?;
            let table = latents_or_checkpoint(latents.as_deref(), &ckpt)?;
            let code = |id: &str| table.get(id).ok_or_else(|| Error::Invalid(format!("no code for design {id}")));
            let (za, zb) = (code(&from)?, code(&to)?);
            let alphas: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let rows = interpolate(za.view(), zb.view(), &alphas)?
                .iter()
                .enumerate()
                .map(|(i, z)| decode_to_file(&ckpt.model, &z.to_vec(), &format!("interp_{i:02}"), &out, res, hw))
                .collect::<Result<Vec<_>>>()?;
            print_summaries(&rows);
        }
        Command::Sample { checkpoint, latents, n, temperature, out, grid } => {
            let (res, hw) = grid.resolve(&cfg);
            let ckpt = load_checkpoint(&checkpoint)?;
            let table = latents_or_checkpoint(latents.as_deref(), &ckpt)?;
            let gauss = DiagonalGaussian::fit(&table, temperature.unwrap_or(cfg.latent.temperature))?;
            let codes = gauss.sample_codes(n.unwrap_or(cfg.latent.n_samples), RunSeeds::of(&cfg).sample)?;
            let rows = codes
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, z)| decode_to_file(&ckpt.model, &z.to_vec(), &format!("sample_{i:02}"), &out, res, hw))
                .collect::<Result<Vec<_>>>()?;
            print_summaries(&rows);
        }
        Command::SurrogateStrains { dataset, out } => {
            let manifest = DatasetManifest::load(&dataset)?;
            let records: Vec<StrainRecord> = manifest
                .designs
                .iter()
                .map(|d| {
                    let s = surrogate_strains(&d.params);
                    StrainRecord { design_id: d.design_id.clone(), eps_x: s.eps_x, eps_y: s.eps_y, eps_z: s.eps_z }
                })
                .collect();
            write_strains(&out, &records)?;
            println!("wrote {} strain records to {}", records.len(), out.display());
        }
        Command::TrainCmap { strains, latents, out, epochs, hidden, lr } => {
            let mut ccfg = cfg.cond.as_ref().map(|c| c.model.clone()).unwrap_or_else(CondConfig::default);
            set(&mut ccfg.epochs, epochs);
            set(&mut ccfg.hidden, hidden);
            set(&mut ccfg.lr0, lr);
            ccfg.seed = forge_core::seeds::derive(cfg.seed, "cond", ccfg.seed);
            let records = read_strains(&strains)?;
            let table = LatentTable::read_csv(&latents)?;
            let (ids, inputs, codes) = pair_by_design(&records, &table)?;
            let outcome = train_cond(&inputs, codes.view(), &ccfg)?;
            outcome.model.save(&out)?;
            println!(
                "fitted {} pairs, final NRMSE {:.2}%",
                ids.len(),
                outcome.nrmse_curve.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::GenCond { cmap, checkpoint, eps, out, grid } => {
            let (res, hw) = grid.resolve(&cfg);
            let target = StrainTriplet::parse(&eps)?;
            let model = CondModel::load(&cmap)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let mesh = conditional_generate(&model, &ckpt.model, target, res, hw)?;
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent)?;
            }
            write_mesh(&mesh, &out)?;
            print_summaries(&[MeshSummary::of("conditional", &mesh)]);
        }
        Command::Run { exp_root, skip, force } => {
            let skip = skip.iter().map(|s| s.parse::<Stage>()).collect::<Result<Vec<_>>>()?;
            let summary = run_pipeline(&cfg, &exp_root, &RunOptions { skip, force })?;
            for s in &summary.executed {
                println!("ran      {s}");
            }
            for s in &summary.skipped {
                println!("skipped  {s}");
            }
            println!("experiment {}", summary.root.display());
        }
    }
    Ok(())
}
