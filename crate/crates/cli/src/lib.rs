//! Command-line front end: argument parsing, file plumbing and exit codes.

pub mod args;
pub mod commands;
pub mod errors;
pub mod losses;
pub mod png;

use anyhow::Result;

use args::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Gen { out, run } => commands::gen(&out, &run.resolve(file)?),
        Command::Augment {
            images,
            labels,
            out,
            run,
        } => commands::augment(&images, &labels, &out, run.classes, &run.resolve(file)?),
        Command::Baseline {
            method,
            images,
            labels,
            out,
            lambda,
            region,
            fill,
            run,
        } => commands::baseline(
            method,
            &images,
            &labels,
            &out,
            lambda,
            region,
            fill,
            run.classes,
            &run.resolve(file)?,
        ),
        Command::Trace {
            losses,
            synthetic,
            out,
            run,
        } => commands::trace(
            losses.as_deref(),
            &synthetic,
            out.as_deref(),
            &run.resolve(file)?,
        ),
        Command::Simulate {
            synthetic,
            no_augment,
            out_csv,
            out_json,
            run,
        } => commands::simulate(
            &synthetic,
            no_augment,
            &out_csv,
            &out_json,
            &run.resolve(file)?,
        ),
        Command::Inspect { file: path } => {
            print!("{}", commands::inspect(&path)?);
            Ok(())
        }
        Command::Corrupt {
            labels,
            ratio,
            out,
            run,
        } => commands::corrupt(&labels, ratio, &out, run.classes, &run.resolve(file)?),
        Command::ImportPng {
            inputs,
            out,
            grayscale,
        } => commands::import_png(&inputs, &out, grayscale),
        Command::ExportPng { images, out_dir } => commands::export_png(&images, &out_dir),
    }
}
