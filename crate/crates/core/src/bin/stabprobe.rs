//! `stabprobe`: post-hoc instability analysis of prediction logs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use stabprobe::excorr::{
    correlation_blocks, example_correlation_matrix, top_covariance_pairs, ObservationAxis,
    Subsample, DEFAULT_SUBSAMPLE_CAP,
};
use stabprobe::rank::dataset_correlation;
use stabprobe::report::svg::{heatmap, trajectory_plot, BandSeries};
use stabprobe::report::{
    read_published_csv, sha256_hex, Cell, InputRecord, Manifest, NormDevTable, OutputRecord,
    PublishedRow, Table, TableFormat, TableSource,
};
use stabprobe::selection::{make_split, resplit_repeated, Selector, DEFAULT_DEV_FRACTION};
use stabprobe::stats::{
    accuracy_grid, decomposition_table, final_accuracy_summary, trajectory, CovariancePath,
};
use stabprobe::store::{
    encode_tensor, ingest_jsonl, load_tensor, CheckpointIndex, CheckpointRange, DatasetKind,
    DatasetMeta, PredictionTensor,
};
use stabprobe::synth::{generate, to_records, BlockModelSpec};
use stabprobe::{Error, Result};

const EXIT_VALIDATION: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "stabprobe",
    version,
    about = "Seed-instability analysis of prediction logs"
)]
struct Cli {
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Md)]
    format: Format,
    /// Half-open range of checkpoint values, e.g. `10..117` or `10..`.
    #[arg(long)]
    checkpoint_range: Option<CheckpointRange>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Md => TableFormat::Markdown,
            Format::Csv => TableFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Standard,
    Analysis,
}

impl From<KindArg> for DatasetKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Standard => DatasetKind::Standard,
            KindArg::Analysis => DatasetKind::Analysis,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Pooled,
    PerSeed,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL prediction log and store it as a tensor file.
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = KindArg::Analysis)]
        kind: KindArg,
        /// Required dataset name.
        #[arg(long)]
        name: Option<String>,
        /// Required example count.
        #[arg(long)]
        expected_size: Option<usize>,
    },
    /// Variance decomposition table (one row per dataset).
    Decompose {
        #[arg(required = true)]
        tensors: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Checkpoint to decompose (default: last).
        #[arg(long)]
        checkpoint: Option<u64>,
        /// Sum covariances over all example pairs instead of total minus independent.
        #[arg(long)]
        slow_path: bool,
    },
    /// Size-normalized deviation table against a reference dataset.
    Normdev {
        /// Tensor files; ignored when --published is given.
        tensors: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// CSV with columns model,dataset,mean,std,size,kind.
        #[arg(long)]
        published: Option<PathBuf>,
        #[arg(long)]
        reference: String,
        /// Model label for tensor input, or a row filter for --published.
        #[arg(long)]
        model: Option<String>,
    },
    /// Mean ± std accuracy band per checkpoint, as SVG plus a table.
    Traj {
        #[arg(required = true)]
        tensors: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Draw this run's trajectory as a dashed line.
        #[arg(long)]
        overlay_run: Option<String>,
    },
    /// Seed-averaged Spearman correlation between dataset trajectories.
    CorrDatasets {
        #[arg(required = true)]
        tensors: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Example-by-example correlations, top covariance pairs and blocks.
    CorrExamples {
        tensor: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Maximum number of examples in the matrix.
        #[arg(long, default_value_t = DEFAULT_SUBSAMPLE_CAP)]
        subsample: usize,
        #[arg(long, default_value_t = 0)]
        subsample_seed: u64,
        #[arg(long, value_enum, default_value_t = AxisArg::Pooled)]
        axis: AxisArg,
        /// Block threshold in (0, 1].
        #[arg(long, default_value_t = 0.9)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Checkpoint for the covariance ranking (default: last).
        #[arg(long)]
        checkpoint: Option<u64>,
    },
    /// Dev/test re-split checkpoint selection.
    Resplit {
        #[arg(long = "target", required = true)]
        targets: Vec<PathBuf>,
        /// External selector datasets (e.g. a standard validation set).
        #[arg(long = "external")]
        externals: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_DEV_FRACTION)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Number of splits (seeds split_seed, split_seed+1, ...).
        #[arg(long, default_value_t = 1)]
        repeat: u64,
    },
    /// Generate a synthetic prediction log from a block-model spec.
    Synth {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Collects output files and writes them with a manifest.
struct Bundle {
    out_dir: PathBuf,
    manifest: Manifest,
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    fn new(out_dir: &Path, command: &str, config: serde_json::Value) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest::new(command, config),
            files: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path, dataset: Option<&str>) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        self.manifest.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            dataset: dataset.map(str::to_string),
        });
        Ok(())
    }

    fn source(&mut self, file: &str, dataset: &str, input: &Path, checkpoints: String) {
        self.manifest.sources.push(TableSource {
            file: file.to_string(),
            dataset: dataset.to_string(),
            input: input.display().to_string(),
            checkpoints,
        });
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn finish(mut self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| io_err(&self.out_dir, e))?;
        for (name, bytes) in &self.files {
            let path = self.out_dir.join(name);
            fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
            self.manifest.outputs.push(OutputRecord {
                file: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            });
        }
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, self.manifest.to_json()).map_err(|e| io_err(&path, e))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn checkpoint_label(t: &PredictionTensor) -> String {
    let c = t.checkpoints();
    if c.len() == 1 {
        c[0].to_string()
    } else {
        format!("{}..={}", c[0], c[c.len() - 1])
    }
}

fn load_all(paths: &[PathBuf], range: Option<CheckpointRange>) -> Result<Vec<PredictionTensor>> {
    paths
        .iter()
        .map(|p| {
            let t = load_tensor(p)?;
            match range {
                Some(r) => t.select_checkpoints(r),
                None => Ok(t),
            }
        })
        .collect()
}

fn print_table(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn config_of(common: &Common, extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = json!({
        "format": TableFormat::from(common.format).extension(),
        "checkpoint_range": common.checkpoint_range.map(|r| r.to_string()),
    });
    if let (Some(base), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        base.extend(more.clone());
    }
    cfg
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            common,
            kind,
            name,
            expected_size,
        } => cmd_ingest(&input, &common, kind.into(), name, expected_size),
        Command::Decompose {
            tensors,
            common,
            checkpoint,
            slow_path,
        } => cmd_decompose(&tensors, &common, checkpoint, slow_path),
        Command::Normdev {
            tensors,
            common,
            published,
            reference,
            model,
        } => cmd_normdev(&tensors, &common, published.as_deref(), &reference, model),
        Command::Traj {
            tensors,
            common,
            overlay_run,
        } => cmd_traj(&tensors, &common, overlay_run),
        Command::CorrDatasets { tensors, common } => cmd_corr_datasets(&tensors, &common),
        Command::CorrExamples {
            tensor,
            common,
            subsample,
            subsample_seed,
            axis,
            tau,
            top_k,
            checkpoint,
        } => cmd_corr_examples(
            &tensor,
            &common,
            Subsample {
                count: subsample,
                seed: subsample_seed,
            },
            axis,
            tau,
            top_k,
            checkpoint,
        ),
        Command::Resplit {
            targets,
            externals,
            common,
            dev_fraction,
            split_seed,
            repeat,
        } => cmd_resplit(
            &targets,
            &externals,
            &common,
            dev_fraction,
            split_seed,
            repeat,
        ),
        Command::Synth { spec, common } => cmd_synth(&spec, &common),
    }
}

fn cmd_ingest(
    input: &Path,
    common: &Common,
    kind: DatasetKind,
    name: Option<String>,
    expected_size: Option<usize>,
) -> Result<()> {
    // a name or size constraint needs both fields; fill the other from the log
    let mut t = ingest_jsonl(input, None)?;
    if name.is_some() || expected_size.is_some() {
        let expected = DatasetMeta {
            name: name.clone().unwrap_or_else(|| t.name().to_string()),
            size: expected_size.unwrap_or(t.n_examples()),
            kind,
        };
        t = ingest_jsonl(input, Some(&expected))?;
    } else if kind != t.meta().kind {
        let expected = DatasetMeta {
            kind,
            ..t.meta().clone()
        };
        t = ingest_jsonl(input, Some(&expected))?;
    }
    if let Some(r) = common.checkpoint_range {
        t = t.select_checkpoints(r)?;
    }
    let file = format!("{}.stab", file_stem(t.name()));
    let mut bundle = Bundle::new(
        &common.out_dir,
        "ingest",
        config_of(
            common,
            json!({ "kind": kind.as_str(), "name": name, "expected_size": expected_size }),
        ),
    );
    bundle.input(input, Some(t.name()))?;
    bundle.source(&file, t.name(), input, checkpoint_label(&t));
    bundle.add(file.clone(), encode_tensor(&t));
    bundle.finish()?;
    eprintln!(
        "ingested {}: {} runs x {} checkpoints x {} examples -> {}",
        t.name(),
        t.n_runs(),
        t.n_checkpoints(),
        t.n_examples(),
        common.out_dir.join(file).display()
    );
    Ok(())
}

fn cmd_decompose(
    paths: &[PathBuf],
    common: &Common,
    checkpoint: Option<u64>,
    slow_path: bool,
) -> Result<()> {
    let tensors = load_all(paths, common.checkpoint_range)?;
    let path = if slow_path {
        CovariancePath::Pairwise
    } else {
        CovariancePath::Fast
    };
    let rows = decomposition_table(&tensors, checkpoint.map(CheckpointIndex), path)?;
    let mut table = Table::new([
        "dataset",
        "sqrt_total_var",
        "sqrt_idp_var",
        "sqrt_abs_cov",
        "cov_sign",
        "checkpoint",
    ]);
    for r in &rows {
        let sign = match r.decomposition.cov_term {
            c if c > 0.0 => "+",
            c if c < 0.0 => "-",
            _ => "0",
        };
        table.push(vec![
            r.dataset.as_str().into(),
            r.sqrt_total_pts.into(),
            r.sqrt_idp_pts.into(),
            r.sqrt_abs_cov_pts.into(),
            sign.into(),
            r.checkpoint.to_string().into(),
        ]);
    }
    let format = TableFormat::from(common.format);
    let file = format!("decomposition.{}", format.extension());
    let rendered = table.render(format);
    let mut bundle = Bundle::new(
        &common.out_dir,
        "decompose",
        config_of(
            common,
            json!({ "checkpoint": checkpoint, "slow_path": slow_path }),
        ),
    );
    for ((p, t), r) in paths.iter().zip(&tensors).zip(&rows) {
        bundle.input(p, Some(t.name()))?;
        bundle.source(&file, t.name(), p, r.checkpoint.to_string());
    }
    bundle.add(file, rendered.clone());
    bundle.finish()?;
    print_table(&rendered)
}

fn cmd_normdev(
    paths: &[PathBuf],
    common: &Common,
    published: Option<&Path>,
    reference: &str,
    model: Option<String>,
) -> Result<()> {
    let format = TableFormat::from(common.format);
    let file = format!("normdev.{}", format.extension());
    let mut bundle = Bundle::new(
        &common.out_dir,
        "normdev",
        config_of(
            common,
            json!({ "reference": reference, "model": model, "published": published.map(|p| p.display().to_string()) }),
        ),
    );
    let rows: Vec<PublishedRow> = match published {
        Some(csv_path) => {
            bundle.input(csv_path, None)?;
            let mut rows = read_published_csv(csv_path)?;
            if let Some(m) = &model {
                rows.retain(|r| &r.model == m);
                if rows.is_empty() {
                    return Err(Error::InvalidParameter(format!("no rows for model {m:?}")));
                }
            }
            bundle.source(&file, "*", csv_path, "published".into());
            rows
        }
        None => {
            if paths.is_empty() {
                return Err(Error::InvalidParameter(
                    "give tensor files or --published".into(),
                ));
            }
            let tensors = load_all(paths, common.checkpoint_range)?;
            let label = model.clone().unwrap_or_else(|| "model".into());
            let mut rows = Vec::new();
            for (p, t) in paths.iter().zip(&tensors) {
                let f = t.final_slice(None)?;
                let (mean, std) = final_accuracy_summary(&f)?;
                bundle.input(p, Some(t.name()))?;
                bundle.source(&file, t.name(), p, f.checkpoint.to_string());
                rows.push(PublishedRow {
                    model: label.clone(),
                    dataset: t.name().to_string(),
                    mean,
                    std,
                    size: t.n_examples(),
                    kind: t.meta().kind,
                });
            }
            rows
        }
    };
    let table = NormDevTable::compute(&rows, reference)?.to_table();
    let rendered = table.render(format);
    bundle.add(file, rendered.clone());
    bundle.finish()?;
    print_table(&rendered)
}

fn cmd_traj(paths: &[PathBuf], common: &Common, overlay_run: Option<String>) -> Result<()> {
    let tensors = load_all(paths, common.checkpoint_range)?;
    let mut series = Vec::new();
    let mut table = Table::new(["dataset", "checkpoint", "mean_acc", "std_acc"]);
    for t in &tensors {
        let tr = trajectory(t)?;
        let overlay = match &overlay_run {
            Some(run) => {
                let r = t.runs().iter().position(|x| &x.0 == run).ok_or_else(|| {
                    Error::InvalidParameter(format!("run {run:?} not in dataset {:?}", t.name()))
                })?;
                let grid = accuracy_grid(t);
                Some((run.clone(), grid[r].iter().map(|a| 100.0 * a).collect()))
            }
            None => None,
        };
        for ((c, m), s) in tr.checkpoints.iter().zip(&tr.mean_acc).zip(&tr.std_acc) {
            table.push(vec![
                t.name().into(),
                c.to_string().into(),
                (100.0 * m).into(),
                (100.0 * s).into(),
            ]);
        }
        series.push(BandSeries {
            name: t.name().to_string(),
            checkpoints: tr.checkpoints.iter().map(|c| c.0).collect(),
            mean: tr.mean_acc.iter().map(|m| 100.0 * m).collect(),
            std: tr.std_acc.iter().map(|s| 100.0 * s).collect(),
            overlay,
        });
    }
    let format = TableFormat::from(common.format);
    let table_file = format!("trajectory.{}", format.extension());
    let mut bundle = Bundle::new(
        &common.out_dir,
        "traj",
        config_of(common, json!({ "overlay_run": overlay_run })),
    );
    for (p, t) in paths.iter().zip(&tensors) {
        bundle.input(p, Some(t.name()))?;
        bundle.source(&table_file, t.name(), p, checkpoint_label(t));
        bundle.source("trajectory.svg", t.name(), p, checkpoint_label(t));
    }
    bundle.add(
        "trajectory.svg",
        trajectory_plot("accuracy over training (mean ± 1 std)", &series),
    );
    bundle.add(table_file, table.render(format));
    bundle.finish()
}

fn cmd_corr_datasets(paths: &[PathBuf], common: &Common) -> Result<()> {
    let tensors = load_all(paths, None)?;
    let m = dataset_correlation(&tensors, common.checkpoint_range)?;
    let header = std::iter::once("dataset".to_string()).chain(m.names.iter().cloned());
    let mut values = Table::new(header.clone());
    let mut undefined = Table::new(header);
    for (i, name) in m.names.iter().enumerate() {
        let mut row = vec![Cell::Text(name.clone())];
        row.extend((0..m.dim()).map(|j| Cell::from(m.get(i, j))));
        values.push(row);
        let mut row = vec![Cell::Text(name.clone())];
        row.extend((0..m.dim()).map(|j| Cell::Text(m.undefined(i, j).to_string())));
        undefined.push(row);
    }
    let mut bundle = Bundle::new(
        &common.out_dir,
        "corr-datasets",
        config_of(common, json!({})),
    );
    let range = common
        .checkpoint_range
        .map_or("all".to_string(), |r| r.to_string());
    for (p, t) in paths.iter().zip(&tensors) {
        bundle.input(p, Some(t.name()))?;
        bundle.source("dataset_corr.csv", t.name(), p, range.clone());
    }
    bundle.add("dataset_corr.csv", values.to_csv());
    bundle.add("dataset_corr_undefined.csv", undefined.to_csv());
    bundle.add(
        "dataset_corr.svg",
        heatmap(
            "Spearman correlation of accuracy trajectories",
            &m.names,
            |i, j| m.get(i, j),
            true,
        ),
    );
    let format = TableFormat::from(common.format);
    if format == TableFormat::Markdown {
        bundle.add("dataset_corr.md", values.to_markdown());
    }
    bundle.finish()?;
    print_table(&values.render(format))
}

#[allow(clippy::too_many_arguments)]
fn cmd_corr_examples(
    path: &Path,
    common: &Common,
    subsample: Subsample,
    axis: AxisArg,
    tau: f64,
    top_k: usize,
    checkpoint: Option<u64>,
) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be in (0, 1], got {tau}"
        )));
    }
    if subsample.count < 2 {
        return Err(Error::InvalidParameter(
            "--subsample must be at least 2".into(),
        ));
    }
    let t = load_all(&[path.to_path_buf()], common.checkpoint_range)?.remove(0);
    let axis = match axis {
        AxisArg::Pooled => ObservationAxis::PooledSeedCheckpoint,
        AxisArg::PerSeed => ObservationAxis::PerSeedMean,
    };
    let m = example_correlation_matrix(&t, Some(subsample), axis)?;
    let blocks = correlation_blocks(&m, tau);
    let f = t.final_slice(checkpoint.map(CheckpointIndex))?;
    let pairs = top_covariance_pairs(&f, top_k)?;

    let mut matrix =
        Table::new(std::iter::once("example".to_string()).chain(m.example_ids.iter().cloned()));
    for (i, id) in m.example_ids.iter().enumerate() {
        let mut row = vec![Cell::Text(id.clone())];
        row.extend((0..m.len()).map(|j| Cell::from(m.get(i, j))));
        matrix.push(row);
    }
    let mut blocks_jsonl = String::new();
    for b in &blocks {
        let line = json!({ "members": b.member_ids, "mean_corr": b.mean_internal_correlation });
        blocks_jsonl.push_str(&line.to_string());
        blocks_jsonl.push('\n');
    }
    let mut top = Table::new(["example_a", "example_b", "covariance", "spearman"]);
    for p in &pairs {
        top.push(vec![
            p.example_a.as_str().into(),
            p.example_b.as_str().into(),
            p.covariance.into(),
            p.correlation.value().into(),
        ]);
    }
    top.md_digits = 3;

    let format = TableFormat::from(common.format);
    let top_file = format!("top_pairs.{}", format.extension());
    let mut bundle = Bundle::new(
        &common.out_dir,
        "corr-examples",
        config_of(
            common,
            json!({
                "subsample": subsample.count,
                "subsample_seed": subsample.seed,
                "axis": axis,
                "tau": tau,
                "top_k": top_k,
                "checkpoint": checkpoint,
            }),
        ),
    );
    bundle.input(path, Some(t.name()))?;
    for file in ["example_corr.csv", "example_corr.svg", "blocks.jsonl"] {
        bundle.source(file, t.name(), path, checkpoint_label(&t));
    }
    bundle.source(&top_file, t.name(), path, f.checkpoint.to_string());
    bundle.add("example_corr.csv", matrix.to_csv());
    bundle.add(
        "example_corr.svg",
        heatmap(
            &format!("inter-example Spearman correlation: {}", t.name()),
            &m.example_ids,
            |i, j| m.get(i, j),
            false,
        ),
    );
    bundle.add("blocks.jsonl", blocks_jsonl);
    let rendered = top.render(format);
    bundle.add(top_file, rendered.clone());
    bundle.finish()?;
    eprintln!(
        "{} examples in matrix, {} blocks at tau={tau}",
        m.len(),
        blocks.len()
    );
    print_table(&rendered)
}

fn cmd_resplit(
    targets: &[PathBuf],
    externals: &[PathBuf],
    common: &Common,
    dev_fraction: f64,
    split_seed: u64,
    repeat: u64,
) -> Result<()> {
    if repeat == 0 {
        return Err(Error::InvalidParameter(
            "--repeat must be at least 1".into(),
        ));
    }
    let target_ts = load_all(targets, common.checkpoint_range)?;
    let external_ts = load_all(externals, common.checkpoint_range)?;
    let mut selectors: Vec<Selector<'_>> = external_ts.iter().map(Selector::External).collect();
    selectors.push(Selector::SelfDev);
    let seeds: Vec<u64> = (0..repeat).map(|k| split_seed + k).collect();

    // [target][seed][selector]
    let results = target_ts
        .iter()
        .map(|t| resplit_repeated(t, &selectors, dev_fraction, &seeds))
        .collect::<Result<Vec<_>>>()?;

    let label = |s: &Selector<'_>| match s {
        Selector::SelfDev => "Re-Split Dev".to_string(),
        Selector::External(t) => t.name().to_string(),
    };
    let header = ["statistic".to_string(), "selector".to_string()]
        .into_iter()
        .chain(target_ts.iter().map(|t| t.name().to_string()));
    let mut table = Table::new(header);
    for (stat, pick) in [("mean", 0usize), ("std", 1)] {
        for (k, sel) in selectors.iter().enumerate() {
            let mut row = vec![Cell::Text(stat.into()), Cell::Text(label(sel))];
            for res in &results {
                let rep = &res[0].1[k];
                let v = if pick == 0 {
                    rep.test_mean
                } else {
                    rep.test_std
                };
                row.push((100.0 * v).into());
            }
            table.push(row);
        }
    }
    table.md_digits = 1;

    let mut selected = Table::new([
        "target",
        "selector",
        "split_seed",
        "run",
        "checkpoint",
        "test_acc",
    ]);
    let mut spread = Table::new(["target", "selector", "split_seed", "test_mean", "test_std"]);
    for (t, res) in target_ts.iter().zip(&results) {
        for (split, reports) in res {
            for (sel, rep) in selectors.iter().zip(reports) {
                spread.push(vec![
                    t.name().into(),
                    label(sel).into(),
                    split.rng_seed.to_string().into(),
                    (100.0 * rep.test_mean).into(),
                    (100.0 * rep.test_std).into(),
                ]);
                for ((run, ck), acc) in rep
                    .per_run_selected_checkpoint
                    .iter()
                    .zip(&rep.per_run_test_accuracy)
                {
                    selected.push(vec![
                        t.name().into(),
                        label(sel).into(),
                        split.rng_seed.to_string().into(),
                        run.0.as_str().into(),
                        ck.to_string().into(),
                        (100.0 * acc).into(),
                    ]);
                }
            }
        }
    }

    let format = TableFormat::from(common.format);
    let file = format!("resplit.{}", format.extension());
    let mut bundle = Bundle::new(
        &common.out_dir,
        "resplit",
        config_of(
            common,
            json!({ "dev_fraction": dev_fraction, "split_seed": split_seed, "repeat": repeat }),
        ),
    );
    for (p, t) in targets.iter().zip(&target_ts) {
        bundle.input(p, Some(t.name()))?;
        bundle.source(&file, t.name(), p, checkpoint_label(t));
        let split = make_split(t, dev_fraction, split_seed)?;
        let ids = json!({ "dev_ids": split.dev_ids, "test_ids": split.test_ids });
        bundle.add(
            format!("split_{}.json", file_stem(t.name())),
            ids.to_string() + "\n",
        );
    }
    for (p, t) in externals.iter().zip(&external_ts) {
        bundle.input(p, Some(t.name()))?;
        bundle.source(&file, t.name(), p, checkpoint_label(t));
    }
    let rendered = table.render(format);
    bundle.add(file, rendered.clone());
    bundle.add("resplit_selected.csv", selected.to_csv());
    if repeat > 1 {
        let mut summary = Table::new([
            "target",
            "selector",
            "splits",
            "mean_of_test_mean",
            "std_of_test_mean",
        ]);
        let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for (ti, res) in results.iter().enumerate() {
            for (_, reports) in res {
                for (si, rep) in reports.iter().enumerate() {
                    groups
                        .entry((ti, si))
                        .or_default()
                        .push(100.0 * rep.test_mean);
                }
            }
        }
        for ((ti, si), vals) in groups {
            summary.push(vec![
                target_ts[ti].name().into(),
                label(&selectors[si]).into(),
                vals.len().to_string().into(),
                stabprobe::numeric::mean(&vals).into(),
                stabprobe::numeric::sample_std(&vals).into(),
            ]);
        }
        bundle.add("resplit_repeats.csv", spread.to_csv());
        bundle.add(
            format!("resplit_spread.{}", format.extension()),
            summary.render(format),
        );
    }
    bundle.finish()?;
    print_table(&rendered)
}

fn cmd_synth(spec_path: &Path, common: &Common) -> Result<()> {
    let spec = BlockModelSpec::from_json_file(spec_path)?;
    let t = generate(&spec)?;
    let file = format!("{}.jsonl", file_stem(t.name()));
    let mut body = BufWriter::new(Vec::new());
    for rec in to_records(&t) {
        serde_json::to_writer(&mut body, &rec).expect("record serializes");
        body.write_all(b"\n").expect("in-memory write");
    }
    let bytes = body.into_inner().expect("in-memory flush");
    let mut bundle = Bundle::new(
        &common.out_dir,
        "synth",
        config_of(common, json!({ "spec": spec })),
    );
    bundle.input(spec_path, Some(t.name()))?;
    bundle.source(&file, t.name(), spec_path, checkpoint_label(&t));
    bundle.add(file, bytes);
    bundle.finish()
}

fn report_error(e: &Error) {
    let line = json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            report_error(&Error::InvalidParameter(
                "--threads must be at least 1".into(),
            ));
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            report_error(&Error::InvalidParameter(e.to_string()));
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
