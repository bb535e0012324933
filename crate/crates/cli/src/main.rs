use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mdlm_lab::{compare_report, Lab, RunConfig};

#[derive(Parser)]
#[command(name = "mdlmlab", version, about = "Masked diffusion language model lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Defaults are used when absent.
    #[arg(long, env = "MDLMLAB_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, env = "MDLMLAB_SEED")]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, env = "MDLMLAB_OUT", default_value = "runs/default")]
    out: PathBuf,
    /// Resizes `data.gen_len` and the decoding schedules.
    #[arg(long, env = "MDLMLAB_GEN_LEN")]
    gen_len: Option<usize>,
    /// Stops training after this many steps; rerun to resume.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Overrides one config field, e.g. `--set rl.outer_steps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Masked diffusion pretraining on the EOS-padded corpus.
    Pretrain(Common),
    /// Prompt-conditioned fine-tuning.
    Sft(Common),
    /// Policy optimisation against the task verifier.
    Rl(Common),
    /// Scores the latest checkpoint on the evaluation set.
    Eval(Common),
    /// Decodes one completion.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prompt: String,
    },
    /// Step-by-position EOS heatmaps.
    Heatmap(Common),
    /// Runs the configured ablation grid.
    Ablate(Common),
    /// Compares finished run directories.
    Report {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Prints the resolved configuration.
    Config(Common),
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).context("empty override key")?;
    let mut table = root;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("invalid field `{key}`: `{p}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(l) = c.gen_len {
        cfg = cfg.with_gen_len(l);
    }
    if !c.overrides.is_empty() {
        let mut table: toml::Table = cfg.to_toml().parse()?;
        for o in &c.overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("override `{o}` is not KEY=VALUE");
            };
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        cfg = RunConfig::from_toml(&toml::to_string(&table)?)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn lab(c: &Common) -> Result<Lab> {
    let lab = Lab::new(resolve(c)?, &c.out)?;
    Ok(match c.max_steps {
        Some(n) => lab.with_step_limit(n),
        None => lab,
    })
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Pretrain(c) => print_json(&lab(&c)?.pretrain()?),
        Command::Sft(c) => print_json(&lab(&c)?.sft()?),
        Command::Rl(c) => print_json(&lab(&c)?.rl()?),
        Command::Eval(c) => print_json(&lab(&c)?.eval()?),
        Command::Generate { common, prompt } => {
            println!("{}", lab(&common)?.generate(&prompt)?);
            Ok(())
        }
        Command::Heatmap(c) => {
            let variants = lab(&c)?.heatmap()?;
            let stats: Vec<_> = variants.iter().map(|v| (&v.name, &v.stats)).collect();
            print_json(&stats)
        }
        Command::Ablate(c) => {
            print!("{}", lab(&c)?.ablate()?.to_markdown());
            Ok(())
        }
        Command::Report { dirs, format } => {
            let r = compare_report(&dirs)?;
            match format {
                Format::Markdown => print!("{}", r.to_markdown()),
                Format::Csv => print!("{}", r.to_csv()),
                Format::Json => print_json(&r)?,
            }
            Ok(())
        }
        Command::Config(c) => {
            print!("{}", resolve(&c)?.to_toml());
            Ok(())
        }
    }
}
