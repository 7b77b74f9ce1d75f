use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{FitConfig, Optimizer};
use super::gradients::num_params;
use super::{flatten_params, mean_nll, objective_gradient_into, unflatten_params};
use crate::dataset::{split_dataset, ChoiceDataset};
use crate::error::{ChoiceError, Result};
use crate::models::{
    ChoiceModel, Family, HaloParams, LowRankHaloParams, MixtureMnlParams, MnlParams,
};
use crate::optim::{Adam, GradientDescent};

// Independent random streams derived from the fit seed.
const STREAM_INIT: u64 = 0;
const STREAM_VALIDATION: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Relative change in the final epoch's objective below which a run
/// without early stopping counts as converged.
const CONVERGENCE_TOL: f64 = 1e-8;

enum Stepper {
    Adam(Adam),
    Gd(GradientDescent),
}

impl Stepper {
    fn new(config: &FitConfig, n: usize) -> Self {
        match config.optimizer {
            Optimizer::Adam => Stepper::Adam(Adam::new(
                n,
                config.step_size,
                config.beta1,
                config.beta2,
                config.eps,
            )),
            Optimizer::Gd => Stepper::Gd(GradientDescent::new(config.step_size)),
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Stepper::Adam(o) => o.step(params, grad),
            Stepper::Gd(o) => o.step(params, grad),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_objective: f64,
    /// `None` when no validation split was held out.
    pub val_ce: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: ChoiceModel,
    pub trace: Vec<TraceRow>,
    pub epochs_run: usize,
    pub converged: bool,
    /// Training objective at the initial parameters.
    pub initial_objective: f64,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl FitResult {
    pub fn final_train_objective(&self) -> f64 {
        self.trace
            .last()
            .map_or(self.initial_objective, |r| r.train_objective)
    }

    pub fn final_val_ce(&self) -> Option<f64> {
        self.trace
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .and_then(|r| r.val_ce)
    }

    pub fn save_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| ChoiceError::io(path, e))?;
        write_trace_csv(&self.trace, std::io::BufWriter::new(file))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the trace as CSV with columns `epoch,train_objective,val_ce`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| ChoiceError::Serialization(e.to_string());
    w.write_record(["epoch", "train_objective", "val_ce"])
        .map_err(ser)?;
    for row in trace {
        w.write_record([
            row.epoch.to_string(),
            row.train_objective.to_string(),
            fmt_opt(row.val_ce),
        ])
        .map_err(ser)?;
    }
    w.flush()
        .map_err(|e| ChoiceError::Serialization(e.to_string()))
}

fn initial_params(
    family: Family,
    m: usize,
    config: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ChoiceModel> {
    let normal = Normal::new(0.0, config.init_scale)
        .map_err(|e| ChoiceError::InvalidConfig(e.to_string()))?;
    let mut draw =
        |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng));
    Ok(match family {
        Family::Mnl => MnlParams::zeros(m).into(),
        Family::Halo => HaloParams::new(DMatrix::zeros(m, m))?.into(),
        Family::LowRank => {
            let u = draw(m, config.rank);
            let v = draw(m, config.rank);
            LowRankHaloParams::new(DVector::zeros(m), u, v, config.diag_mode)?.into()
        }
        Family::Mixture => {
            let components = (0..config.mixture_k)
                .map(|_| MnlParams::new(draw(m, 1).column(0).into_owned()))
                .collect::<Result<Vec<_>>>()?;
            MixtureMnlParams::new(DVector::zeros(config.mixture_k), components)?.into()
        }
    })
}

/// Fits a model of `family` to `dataset` by mini-batch descent on the
/// regularized objective, using the update rule in `config.optimizer`.
///
/// With `val_fraction > 0` a seeded holdout is split off; the parameters
/// with the best validation cross-entropy are returned and training stops
/// after `patience` epochs without improvement.
pub fn fit(family: Family, dataset: &ChoiceDataset, config: &FitConfig) -> Result<FitResult> {
    let m = dataset.num_products();
    config.validate(family, m)?;
    if dataset.is_empty() {
        return Err(ChoiceError::InvalidDataset(
            "cannot fit an empty dataset".into(),
        ));
    }

    let mut init_rng = stream(config.seed, STREAM_INIT);
    let mut model = initial_params(family, m, config, &mut init_rng)?;

    let (train, val) = if config.val_fraction > 0.0 && dataset.len() >= 2 {
        let split_seed = stream(config.seed, STREAM_VALIDATION).random::<u64>();
        let (train, val) = split_dataset(dataset, 1.0 - config.val_fraction, split_seed)?;
        if train.is_empty() || val.is_empty() {
            (dataset.clone(), None)
        } else {
            (train, Some(val))
        }
    } else {
        (dataset.clone(), None)
    };
    let train_txns = train.transactions();

    let mut flat = flatten_params(&model);
    let mut grad = vec![0.0; num_params(&model)];
    let mut optimizer = Stepper::new(config, flat.len());
    let mut shuffle_rng = stream(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..train_txns.len()).collect();
    let full_batch = config.batch_size >= train_txns.len();

    let train_objective = |model: &ChoiceModel| -> f64 {
        let nll = mean_nll(model, train_txns);
        if config.lambda == 0.0 {
            nll
        } else {
            nll + config.penalty_sign.factor() * config.lambda * super::penalty(model)
        }
    };

    let initial_objective = train_objective(&model);
    if !initial_objective.is_finite() {
        return Err(ChoiceError::NonFiniteObjective { epoch: 0 });
    }

    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ChoiceModel)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        if full_batch {
            objective_gradient_into(
                &model,
                train_txns.iter(),
                config.lambda,
                config.penalty_sign,
                &mut grad,
            );
            optimizer.step(&mut flat, &grad);
            model = unflatten_params(&model, &flat)
                .map_err(|_| ChoiceError::NonFiniteObjective { epoch })?;
        } else {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(config.batch_size) {
                let batch = chunk.iter().map(|&i| &train_txns[i]);
                objective_gradient_into(
                    &model,
                    batch,
                    config.lambda,
                    config.penalty_sign,
                    &mut grad,
                );
                optimizer.step(&mut flat, &grad);
                model = unflatten_params(&model, &flat)
                    .map_err(|_| ChoiceError::NonFiniteObjective { epoch })?;
            }
        }

        let objective = train_objective(&model);
        if !objective.is_finite() {
            return Err(ChoiceError::NonFiniteObjective { epoch });
        }
        let val_ce = val.as_ref().map(|v| mean_nll(&model, v.transactions()));
        trace.push(TraceRow {
            epoch,
            train_objective: objective,
            val_ce,
        });

        if let Some(ce) = val_ce {
            if !ce.is_finite() {
                return Err(ChoiceError::NonFiniteObjective { epoch });
            }
            let improved = best.as_ref().is_none_or(|(b, _, _)| ce < *b);
            if improved {
                best = Some((ce, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if config.patience > 0 && since_best >= config.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let epochs_run = trace.len();
    let converged = stopped_early || {
        let n = trace.len();
        let last = trace[n - 1].train_objective;
        let prev = if n >= 2 {
            trace[n - 2].train_objective
        } else {
            initial_objective
        };
        (last - prev).abs() <= CONVERGENCE_TOL * last.abs().max(1.0)
    };
    let (params, best_epoch) = match best {
        Some((_, epoch, params)) => (params, epoch),
        None => (model, epochs_run),
    };
    Ok(FitResult {
        params,
        trace,
        epochs_run,
        converged,
        initial_objective,
        best_epoch,
    })
}
