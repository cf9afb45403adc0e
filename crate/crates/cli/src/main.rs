//! `coopsense` command line: run experiment recipes and check scene files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coopsense::config::{self, SceneFile};
use coopsense::harness::{self, SweepSpec};
use coopsense::scenario::Scene;
use coopsense::Error;

#[derive(Debug, Parser)]
#[command(name = "coopsense", version, about = "Cooperative active/passive OFDM sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a recipe and write its metrics table to <out>/<recipe>.csv.
    Run {
        /// Scene file; the reference scene when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Recipe name, or `custom` for the scene file's [sweep] section.
        #[arg(long)]
        recipe: String,
        /// Trials per sweep point, overriding the recipe.
        #[arg(long)]
        trials: Option<usize>,
        /// Base seed, overriding the recipe.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Parse and validate a scene file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available recipes.
    Recipes,
}

/// Config problems exit with 1, everything else that fails with 2.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigParse(_) | Error::InvalidConfig(_) | Error::UnknownParameter(_) | Error::UnknownRecipe(_) => 1,
        Error::Stage { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn load(config: Option<&Path>) -> coopsense::Result<SceneFile> {
    match config {
        Some(p) => config::load_scene(p),
        None => Ok(SceneFile {
            scene: Scene::reference(),
            sweep: None,
        }),
    }
}

fn specs_for(file: &SceneFile, recipe: &str, trials: Option<usize>, seed: Option<u64>) -> coopsense::Result<Vec<SweepSpec>> {
    let mut specs = if recipe == "custom" {
        vec![file
            .sweep
            .clone()
            .ok_or_else(|| Error::ConfigParse("recipe `custom` needs a [sweep] section in the scene file".into()))?]
    } else {
        harness::recipe(recipe)?
    };
    for s in &mut specs {
        if let Some(t) = trials {
            s.trials = t;
        }
        if let Some(seed) = seed {
            s.seed = seed;
        }
    }
    if specs.iter().any(|s| s.trials == 0) {
        return Err(Error::ConfigParse("at least one trial is needed".into()));
    }
    Ok(specs)
}

fn run(cli: Cli) -> coopsense::Result<()> {
    match cli.command {
        Command::Run {
            config,
            recipe,
            trials,
            seed,
            out,
        } => {
            let file = load(config.as_deref())?;
            let specs = specs_for(&file, &recipe, trials, seed)?;
            let rows = harness::run_recipe(&file.scene, &recipe, &specs)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("{recipe}.csv"));
            harness::write_metrics_csv(BufWriter::new(File::create(&path)?), &rows)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Validate { config } => {
            let file = config::load_scene(&config)?;
            println!(
                "{}: ok ({} target(s){})",
                config.display(),
                file.scene.targets.len(),
                if file.sweep.is_some() { ", custom sweep" } else { "" }
            );
        }
        Command::Recipes => {
            for r in harness::RECIPES {
                println!("{r}");
            }
            println!("custom");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
