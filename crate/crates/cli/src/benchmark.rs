use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use halo_choice::evaluation::{
    kl_to_truth, model_recovery_errors, summarize_benchmark, write_reports_csv, CategoryScore,
};
use halo_choice::{
    cross_entropy, fit, load_dataset, split_dataset, Assortment, BenchmarkSummary, ChoiceDataset,
    ChoiceModel, EvalReport, Family, FitConfig, RelativeLossMode,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::CliError;
use crate::flags::{ensure_dir, write_file, FitFlags};

#[derive(Args, Clone, Debug)]
pub struct BenchmarkArgs {
    /// CSV with columns category_name,dataset_path. Relative dataset paths
    /// are resolved against the manifest's directory.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "mnl,halo,lowrank")]
    pub models: Vec<Family>,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// One split and one fit per seed; test CE is averaged over seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    /// Model whose mean loss normalizes the others.
    #[arg(long, default_value = "lowrank")]
    pub reference: String,
    /// CSV with columns category_name,model_name,test_ce for models
    /// evaluated elsewhere.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// ratio-of-means | mean-of-ratios
    #[arg(long, default_value = "ratio-of-means")]
    pub relative_loss: RelativeLossMode,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub reports: Vec<EvalReport>,
    pub summary: BenchmarkSummary,
}

#[derive(Deserialize)]
struct ManifestRow {
    category_name: String,
    dataset_path: PathBuf,
}

struct Category {
    name: String,
    dataset: ChoiceDataset,
    truth: Option<ChoiceModel>,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::csv(path, e))
}

/// `x.jsonl` pairs with `x.truth.json` when that file exists.
fn truth_sibling(dataset: &Path) -> Option<PathBuf> {
    let name = dataset.file_name()?.to_str()?;
    let stem = name.strip_suffix(".jsonl")?;
    let path = dataset.with_file_name(format!("{stem}.truth.json"));
    path.exists().then_some(path)
}

fn load_categories(manifest: &Path) -> Result<Vec<Category>, CliError> {
    let rows: Vec<ManifestRow> = read_csv(manifest)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: manifest lists no categories",
            manifest.display()
        )));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    rows.into_iter()
        .map(|row| {
            let path = base.join(&row.dataset_path);
            let dataset = load_dataset(&path)?;
            let truth = truth_sibling(&path).map(ChoiceModel::load).transpose()?;
            Ok(Category {
                name: row.category_name,
                dataset,
                truth,
            })
        })
        .collect()
}

fn evaluate_cell(
    category: &Category,
    family: Family,
    seed: u64,
    train_fraction: f64,
    base: &FitConfig,
) -> Result<EvalReport, CliError> {
    let (train, test) = split_dataset(&category.dataset, train_fraction, seed)?;
    let config = FitConfig {
        seed,
        ..base.clone()
    };
    let params = fit(family, &train, &config)?.params;
    let mut report = EvalReport {
        model_name: family.to_string(),
        dataset_name: category.name.clone(),
        seed,
        train_ce: cross_entropy(&params, &train)?,
        test_ce: cross_entropy(&params, &test)?,
        kl_to_truth: None,
        param_error_f2: None,
        param_error_l1: None,
    };
    if let Some(truth) = &category.truth {
        let assortments: Vec<Assortment> = test
            .transactions()
            .iter()
            .map(|t| t.assortment().clone())
            .collect();
        report.kl_to_truth = Some(kl_to_truth(&params, truth, &assortments)?);
        if params.halo_matrix().is_some() && truth.halo_matrix().is_some() {
            let err = model_recovery_errors(&params, truth)?;
            report.param_error_f2 = Some(err.f2);
            report.param_error_l1 = Some(err.l1);
        }
    }
    Ok(report)
}

/// Wide layout: one row per category with each model's test CE, then
/// the wins and relative-loss rows.
fn table_csv(summary: &BenchmarkSummary) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["category".to_string()];
    header.extend(summary.models.iter().map(|m| m.model.clone()));
    w.write_record(&header)?;
    for row in &summary.categories {
        let mut rec = vec![row.category.clone()];
        rec.extend(row.ce.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    let mut wins = vec!["wins".to_string()];
    wins.extend(summary.models.iter().map(|m| m.wins.to_string()));
    w.write_record(&wins)?;
    let mut loss = vec!["relative_loss_pct".to_string()];
    loss.extend(
        summary
            .models
            .iter()
            .map(|m| m.relative_loss_pct.to_string()),
    );
    w.write_record(&loss)?;
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn cmd_benchmark(
    args: &BenchmarkArgs,
    out: &mut dyn Write,
) -> Result<BenchmarkOutcome, CliError> {
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--train-fraction {} not in (0, 1)",
            args.train_fraction
        )));
    }
    if args.models.is_empty() || args.seeds.is_empty() {
        return Err(CliError::Usage(
            "--models and --seeds must be nonempty".into(),
        ));
    }
    let config = args.fit.resolve()?;
    let categories = load_categories(&args.manifest)?;
    let sidecar: Vec<CategoryScore> = match &args.sidecar {
        Some(path) => read_csv(path)?,
        None => Vec::new(),
    };

    let cells: Vec<(&Category, Family, u64)> = categories
        .iter()
        .flat_map(|c| {
            args.models
                .iter()
                .flat_map(move |&f| args.seeds.iter().map(move |&s| (c, f, s)))
        })
        .collect();
    // Indexed collection keeps the report order independent of scheduling.
    let reports = cells
        .par_iter()
        .map(|&(c, f, s)| evaluate_cell(c, f, s, args.train_fraction, &config))
        .collect::<Result<Vec<_>, _>>()?;

    let mut scores: Vec<CategoryScore> = reports.iter().map(EvalReport::score).collect();
    scores.extend(sidecar);
    let summary = summarize_benchmark(&scores, &args.reference, args.relative_loss)?;

    ensure_dir(&args.out)?;
    let mut buf = Vec::new();
    write_reports_csv(&reports, &mut buf)?;
    write_file(&args.out.join("reports.csv"), buf)?;
    write_file(&args.out.join("summary.json"), summary.to_json() + "\n")?;
    let table_path = args.out.join("table.csv");
    let table = table_csv(&summary).map_err(|e| CliError::csv(&table_path, e))?;
    write_file(&table_path, table)?;

    out.write_all(summary.render_table().as_bytes())
        .map_err(|e| CliError::io(&args.out, e))?;
    Ok(BenchmarkOutcome { reports, summary })
}
