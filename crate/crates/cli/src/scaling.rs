use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use halo_choice::evaluation::{kl_to_truth, model_recovery_errors};
use halo_choice::synthetic::{generate, heldout_assortments};
use halo_choice::{fit, Assortment, ChoiceDataset, ChoiceModel, Family, FitConfig, SyntheticSpec};
use rayon::prelude::*;

use crate::error::CliError;
use crate::flags::{ensure_dir, write_file, FitFlags};

const FAMILIES: [Family; 2] = [Family::Halo, Family::LowRank];

#[derive(Args, Clone, Debug)]
pub struct ScalingArgs {
    /// Product counts to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m: Vec<usize>,
    /// Rank of every ground truth; also the fitted rank unless --rank is set.
    #[arg(long)]
    pub r: usize,
    /// Sample sizes to sweep. Smaller samples are prefixes of larger ones.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Each seed draws its own ground truth and data.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Fresh assortments over which KL to the truth is averaged.
    #[arg(long, default_value_t = 100)]
    pub kl_assortments: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
}

/// One line of the long-format output.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    pub model: Family,
    pub metric: &'static str,
    pub value: f64,
}

struct Problem {
    m: usize,
    seed: u64,
    truth: ChoiceModel,
    data: ChoiceDataset,
    heldout: Vec<Assortment>,
}

fn run_cell(
    problem: &Problem,
    n: usize,
    family: Family,
    args: &ScalingArgs,
    config: &FitConfig,
) -> Result<Vec<ScalingRow>, CliError> {
    let indices: Vec<usize> = (0..n).collect();
    let train = problem.data.select(&indices);
    let config = FitConfig {
        seed: problem.seed,
        ..config.clone()
    };
    let fitted = fit(family, &train, &config)?.params;
    let err = model_recovery_errors(&fitted, &problem.truth)?;
    let kl = kl_to_truth(&fitted, &problem.truth, &problem.heldout)?;
    let row = |metric, value| ScalingRow {
        m: problem.m,
        n,
        r: args.r,
        seed: problem.seed,
        model: family,
        metric,
        value,
    };
    Ok(vec![
        row("param_error_f2", err.f2),
        row("param_error_l1", err.l1),
        row("kl_to_truth", kl),
    ])
}

fn write_rows(rows: &[ScalingRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["m", "n", "r", "seed", "model", "metric", "value"])?;
    for row in rows {
        w.write_record([
            row.m.to_string(),
            row.n.to_string(),
            row.r.to_string(),
            row.seed.to_string(),
            row.model.to_string(),
            row.metric.to_string(),
            row.value.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn cmd_scaling(args: &ScalingArgs, out: &mut dyn Write) -> Result<Vec<ScalingRow>, CliError> {
    if args.seeds.is_empty() {
        return Err(CliError::Usage("--seeds must be nonempty".into()));
    }
    if args.n.contains(&0) {
        return Err(CliError::Usage("--n values must be positive".into()));
    }
    if args.kl_assortments == 0 {
        return Err(CliError::Usage("--kl-assortments must be positive".into()));
    }
    let mut config = args.fit.resolve()?;
    config.rank = args.fit.rank.unwrap_or(args.r);
    let n_max = *args.n.iter().max().expect("clap requires at least one n");

    let problems = args
        .m
        .iter()
        .flat_map(|&m| args.seeds.iter().map(move |&seed| (m, seed)))
        .map(|(m, seed)| {
            let spec = SyntheticSpec::new(m, args.r, args.q, n_max, seed);
            let (truth, data) = generate(&spec)?;
            Ok(Problem {
                m,
                seed,
                truth: truth.into(),
                data,
                heldout: heldout_assortments(&spec, args.kl_assortments)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut cells = Vec::new();
    for m in &args.m {
        for &n in &args.n {
            for p in problems.iter().filter(|p| p.m == *m) {
                for family in FAMILIES {
                    cells.push((p, n, family));
                }
            }
        }
    }
    let rows: Vec<ScalingRow> = cells
        .par_iter()
        .map(|&(p, n, family)| run_cell(p, n, family, args, &config))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    ensure_dir(&args.out)?;
    let path = args.out.join("scaling.csv");
    let bytes = write_rows(&rows).map_err(|e| CliError::csv(&path, e))?;
    write_file(&path, bytes)?;
    writeln!(
        out,
        "{} fits, {} rows -> {}",
        cells.len(),
        rows.len(),
        path.display()
    )
    .map_err(|e| CliError::io(&args.out, e))?;
    Ok(rows)
}
