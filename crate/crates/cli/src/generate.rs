use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use halo_choice::synthetic::generate;
use halo_choice::{save_dataset, ChoiceModel, SyntheticSpec};

use crate::error::CliError;
use crate::flags::ensure_dir;

#[derive(Args, Clone, Debug)]
pub struct GenerateArgs {
    /// Number of products.
    #[arg(long)]
    pub m: usize,
    /// Rank of the ground-truth interaction term.
    #[arg(long)]
    pub r: usize,
    /// Probability that each product is offered.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Number of transactions.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Base name of the two output files.
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha_max: f64,
    /// Standard deviation of the factor entries [default: 1/sqrt(r)].
    #[arg(long)]
    pub factor_scale: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GenerateOutcome {
    pub dataset_path: PathBuf,
    pub truth_path: PathBuf,
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<GenerateOutcome, CliError> {
    let mut spec = SyntheticSpec::new(args.m, args.r, args.q, args.n as usize, args.seed);
    spec.alpha_range = (args.alpha_min, args.alpha_max);
    if let Some(scale) = args.factor_scale {
        spec.factor_scale = scale;
    }
    let (truth, dataset) = generate(&spec)?;

    ensure_dir(&args.out)?;
    let dataset_path = args.out.join(format!("{}.jsonl", args.name));
    let truth_path = args.out.join(format!("{}.truth.json", args.name));
    save_dataset(&dataset, &dataset_path)?;
    ChoiceModel::from(truth).save(&truth_path)?;

    let report = format!(
        "n={} m={} r={} seed={}\ndataset: {}\ntruth: {}\n",
        dataset.len(),
        args.m,
        args.r,
        args.seed,
        dataset_path.display(),
        truth_path.display()
    );
    out.write_all(report.as_bytes())
        .map_err(|e| CliError::io(&args.out, e))?;
    Ok(GenerateOutcome {
        dataset_path,
        truth_path,
    })
}
