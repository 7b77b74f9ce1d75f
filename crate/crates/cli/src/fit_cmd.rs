use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use halo_choice::{cross_entropy, fit, load_dataset, Family, FitResult};

use crate::error::CliError;
use crate::flags::{ensure_dir, write_file, FitFlags};

#[derive(Args, Clone, Debug)]
pub struct FitArgs {
    /// Training dataset (JSON lines).
    pub dataset: PathBuf,
    /// mnl | mixture | halo | lowrank
    #[arg(long)]
    pub family: Family,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Held-out dataset whose cross-entropy is reported.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub result: FitResult,
    pub test_ce: Option<f64>,
    pub params_path: PathBuf,
    pub trace_path: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<FitOutcome, CliError> {
    let mut config = args.fit.resolve()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dataset = load_dataset(&args.dataset)?;
    // Load the test set before fitting so a bad path fails fast.
    let test = args.test.as_ref().map(load_dataset).transpose()?;

    let result = fit(args.family, &dataset, &config)?;
    let test_ce = test
        .as_ref()
        .map(|t| cross_entropy(&result.params, t))
        .transpose()?;

    ensure_dir(&args.out)?;
    let params_path = args.out.join("params.json");
    let trace_path = args.out.join("trace.csv");
    result.params.save(&params_path)?;
    result.save_trace(&trace_path)?;
    write_file(&args.out.join("config.toml"), config.to_toml())?;

    let report = format!(
        "family={} epochs_run={} converged={}\nfinal_train_objective={}\nval_ce={}\ntest_ce={}\n",
        args.family,
        result.epochs_run,
        result.converged,
        result.final_train_objective(),
        fmt_opt(result.final_val_ce()),
        fmt_opt(test_ce),
    );
    out.write_all(report.as_bytes())
        .map_err(|e| CliError::io(&args.out, e))?;
    Ok(FitOutcome {
        result,
        test_ce,
        params_path,
        trace_path,
    })
}
