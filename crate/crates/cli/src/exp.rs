//! `exp blackbody` and `exp pendulum`.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use covariant_core::audit::ModelDesc;
use covariant_core::blackbody::{self, BlackbodyConfig};
use covariant_core::model::{DynamicsMode, TrainConfig};
use covariant_core::pendulum::{self, PendulumConfig};
use covariant_core::schema::{FeatureEntry, FeatureKind};
use covariant_core::FeatureSchema;

use crate::io::{check_inputs, check_outputs, load_config, write_report, write_text};
use crate::{CmdResult, Failure};

#[derive(Subcommand, Debug)]
pub enum ExpCommand {
    /// Units-covariant regression of black-body spectra with a search for
    /// the missing dimensional constant.
    Blackbody(BlackbodyArgs),
    /// O(3)-equivariant dynamics of a springy double pendulum in three
    /// gravity modes.
    Pendulum(PendulumArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Experiment config JSON (must carry `"version": 1`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training config JSON (learning rate, epochs, batch size, network).
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// JSON report output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot output.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BlackbodyArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the number of generated samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Write the generated samples as CSV.
    #[arg(long)]
    data_out: Option<PathBuf>,
    /// Write the model with the learned constant, ready for `audit covtest`.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Write the feature schema matching `--model-out`.
    #[arg(long)]
    schema_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PendulumArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the number of training trajectories.
    #[arg(long)]
    n_train: Option<usize>,
    /// Overrides the number of test trajectories.
    #[arg(long)]
    n_test: Option<usize>,
    /// Write the training set as CSV.
    #[arg(long)]
    data_out: Option<PathBuf>,
}

impl Common {
    fn check(&self, extra_outputs: &[&Option<PathBuf>]) -> Result<(), Failure> {
        check_inputs(self.config.iter().chain(self.train_config.iter()))?;
        check_outputs([&self.out, &self.svg].into_iter().chain(extra_outputs.iter().copied()))?;
        if self.epochs == Some(0) {
            return Err(Failure::Usage("--epochs must be at least 1".into()));
        }
        Ok(())
    }

    fn train_config(&self, default: TrainConfig) -> Result<TrainConfig, Failure> {
        let mut tc = match &self.train_config {
            Some(p) => load_config(p)?,
            None => default,
        };
        if let Some(e) = self.epochs {
            tc.epochs = e;
        }
        tc.validate()?;
        Ok(tc)
    }
}

fn run_blackbody(a: BlackbodyArgs) -> CmdResult {
    a.common.check(&[&a.data_out, &a.model_out, &a.schema_out])?;
    let mut cfg: BlackbodyConfig = match &a.common.config {
        Some(p) => load_config(p)?,
        None => BlackbodyConfig::default(),
    };
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.samples {
        cfg.n_samples = n;
    }
    cfg.validate()?;
    let tc = a.common.train_config(blackbody::default_train_config())?;
    if let Some(p) = &a.data_out {
        let data = blackbody::generate_blackbody(&cfg, &cfg.constants)?;
        data.write_csv(std::fs::File::create(p).map_err(covariant_core::Error::from)?)?;
    }
    let report = blackbody::run_blackbody_experiment(&cfg, &tc)?;
    for m in &report.models {
        say!("{:<26} test log-MSE {:.6e}", m.name, m.test_mse);
    }
    let c = &report.constant;
    say!("constant: [{}] magnitude {:.4e} (reference [{}] {:.4e})", c.dim, c.magnitude, c.reference_dim, c.reference_magnitude);
    say!("constant needed: {}", report.constant_needed);
    write_report(a.common.out.as_deref(), &report)?;
    if let (Some(p), Some(svg)) = (&a.common.svg, report.svg()) {
        write_text(p, &svg)?;
    }
    let fitted = report.fitted.as_ref().expect("fresh report keeps its models");
    if let Some(p) = &a.model_out {
        write_report(Some(p), &ModelDesc::UnitsCovariant { model: fitted.with_constant.clone(), output: "B".into() })?;
    }
    if let Some(p) = &a.schema_out {
        let m = &fitted.with_constant;
        let mut features: Vec<FeatureEntry> =
            m.input_names.iter().zip(&m.input_dims).map(|(n, d)| FeatureEntry::new(n.clone(), FeatureKind::Scalar, *d)).collect();
        if let Some(k) = &m.constant {
            features.push(FeatureEntry::new(k.name.clone(), FeatureKind::Scalar, k.dim));
        }
        write_report(Some(p), &FeatureSchema::new(features)?)?;
    }
    Ok(())
}

fn run_pendulum(a: PendulumArgs) -> CmdResult {
    a.common.check(&[&a.data_out])?;
    let mut cfg: PendulumConfig = match &a.common.config {
        Some(p) => load_config(p)?,
        None => PendulumConfig::default(),
    };
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    if cfg.n_train == 0 || cfg.n_test == 0 || cfg.train_labels == 0 || cfg.test_labels == 0 {
        return Err(Failure::Usage("train and test sets need at least one trajectory and label".into()));
    }
    cfg.params.validate()?;
    let tc = a.common.train_config(pendulum::default_train_config())?;
    if let Some(p) = &a.data_out {
        let set = pendulum::generate_dataset_with(cfg.n_train, cfg.train_labels, cfg.seed, &cfg.params, &cfg.sampling)?;
        set.write_csv(std::fs::File::create(p).map_err(covariant_core::Error::from)?)?;
    }
    let report = pendulum::run_pendulum_experiment(&cfg, &tc)?;
    for m in &report.models {
        say!(
            "{:<10} mean relerr {:.4e}  train loss {:.3e}  equivariance {:.2e}",
            m.mode.label(),
            m.mean_rel_err,
            m.final_train_loss,
            m.equivariance_max_dev
        );
    }
    if let Some(g) = &report.learned_gravity {
        say!("learned g direction: angle to true g {:.6} rad (axis angle {:.3e})", g.angle, g.axis_angle);
    }
    if let Some(r) = report.learned_to_known_ratio {
        say!("{} / {} error ratio: {r:.4}", DynamicsMode::LearnedG.label(), DynamicsMode::KnownG.label());
    }
    write_report(a.common.out.as_deref(), &report)?;
    if let Some(p) = &a.common.svg {
        write_text(p, &report.svg())?;
    }
    Ok(())
}

pub fn run(cmd: ExpCommand) -> CmdResult {
    match cmd {
        ExpCommand::Blackbody(a) => run_blackbody(a),
        ExpCommand::Pendulum(a) => run_pendulum(a),
    }
}
