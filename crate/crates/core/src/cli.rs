//! Command-line front end.
//!
//! Failures print a single `error[<code>]: <message>` line to stderr. Exit
//! codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::{parse_synthetic_spec, RunConfig};
use crate::data::{
    demo_extrapolation, gen_synthetic, load_csv, write_csv, write_predictions, DemoConfig, GroundTruth,
    ModelContainer, SplitTag,
};
use crate::ensemble::train_ensemble;
use crate::error::{Error, Result};
use crate::eval::{evaluate_splits, LabeledSplit};
use crate::plot::retention_chart;

#[derive(Debug, Parser)]
#[command(name = "snn-ensemble", version, about = "Deep SNN ensembles for tabular regression with uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an ensemble and write a model container.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `mu,sigma,uncertainty` for every row of a table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics on an in-distribution and a shifted table.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_shifted: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate the synthetic shifted benchmark.
    GenData {
        /// Inline `key=value,...` list or a spec file.
        #[arg(long, default_value = "")]
        spec: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// One-dimensional extrapolation comparison.
    DemoExtrapolation {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "cubic")]
        truth: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Draw one or more retention CSV files as an SVG chart.
    PlotRetention {
        #[arg(long, required = true, num_args = 1..)]
        curve: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            1
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { data, target, config, out } => {
            let cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let ds = load_csv(&data, Some(&target), &cfg.exclude_columns, SplitTag::Train)?;
            let (ens, report) = train_ensemble(&ds.features, ds.require_target()?, &cfg.train)?;
            let mut extra = vec![("target".to_string(), target)];
            extra.extend(cfg.to_pairs().into_iter().map(|(k, v)| (format!("config.{k}"), v)));
            ModelContainer::new(ens, &extra).save(&out)?;
            for m in &report.members {
                match &m.aborted {
                    Some(why) => println!("member {} aborted: {why}", m.index),
                    None => println!(
                        "member {} best_epoch={} epochs={} val_nll={:.6}",
                        m.index,
                        m.best_epoch,
                        m.epochs_run(),
                        m.best_nll()
                    ),
                }
            }
            Ok(())
        }
        Command::Predict { model, data, out } => {
            let c = ModelContainer::load(&model)?;
            let ds = load_csv(&data, None, &[], SplitTag::EvalIn)?;
            let x = ds.features.select_columns(c.ensemble.pipeline().feature_names())?;
            write_predictions(&out, &c.ensemble.predict(&x)?)
        }
        Command::Evaluate { model, input, out_shifted, report } => {
            let c = ModelContainer::load(&model)?;
            let target = c
                .manifest
                .get("target")
                .ok_or_else(|| Error::Config("model manifest has no target column".into()))?
                .to_string();
            let names = c.ensemble.pipeline().feature_names();
            let load = |p: &Path, tag| -> Result<_> {
                let ds = load_csv(p, Some(&target), &[], tag)?;
                let y = ds.require_target()?.to_vec();
                Ok((ds.features.select_columns(names)?, y))
            };
            let (x_in, y_in) = load(&input, SplitTag::DevIn)?;
            let (x_out, y_out) = load(&out_shifted, SplitTag::DevOut)?;
            let r = evaluate_splits(
                &c.ensemble,
                &[
                    LabeledSplit { name: "in", features: &x_in, target: Some(&y_in) },
                    LabeledSplit { name: "out", features: &x_out, target: Some(&y_out) },
                ],
            )?;
            write(&report, &r.to_csv())?;
            let stem = report.with_extension("");
            let curve_path = PathBuf::from(format!("{}_retention.csv", stem.display()));
            let svg_path = PathBuf::from(format!("{}_retention.svg", stem.display()));
            write(&curve_path, &r.pooled_curve.to_csv())?;
            write(&svg_path, &retention_chart(&[("pooled", &r.pooled_curve.points)]))?;
            print!("{}", r.to_csv());
            Ok(())
        }
        Command::GenData { spec, out_dir } => {
            let b = gen_synthetic(&parse_synthetic_spec(&spec)?)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_csv(&out_dir.join("train.csv"), &b.train)?;
            write_csv(&out_dir.join("dev_in.csv"), &b.dev_in)?;
            write_csv(&out_dir.join("dev_out.csv"), &b.dev_out)
        }
        Command::DemoExtrapolation { seed, truth, out_dir } => {
            let r = demo_extrapolation(&DemoConfig::new(seed, truth.parse::<GroundTruth>()?))?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write(&out_dir.join("demo_report.txt"), &r.to_text())?;
            write(&out_dir.join("demo_extrapolation.svg"), &r.svg)?;
            print!("{}", r.to_text());
            Ok(())
        }
        Command::PlotRetention { curve, out } => {
            let mut curves = Vec::new();
            for p in &curve {
                let ds = load_csv(p, Some("mse"), &[], SplitTag::DevIn)?;
                let r = ds.features.select_columns(&["retention".to_string()])?;
                let label = p.file_stem().map_or("curve".into(), |s| s.to_string_lossy().into_owned());
                let pts: Vec<(f64, f64)> = r.column(0).into_iter().zip(ds.require_target()?.iter().copied()).collect();
                curves.push((label, pts));
            }
            let refs: Vec<(&str, &[(f64, f64)])> = curves.iter().map(|(l, p)| (l.as_str(), p.as_slice())).collect();
            write(&out, &retention_chart(&refs))
        }
    }
}
