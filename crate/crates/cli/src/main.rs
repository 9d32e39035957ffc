//! Command-line front end for the r3-core training engine.
//!
//! Four subcommands cover the whole workflow: `train` runs one
//! configuration and writes its artifacts to a directory, `compare` runs
//! several configurations across a common set of seeds and tabulates the
//! results, `inspect-buffer` pretty-prints a stored trajectory archive,
//! and `score-traces` applies the entropy-rank scorer to a standalone
//! file of token-entropy traces.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use r3_core::serr;
use r3_core::{
    compare, median, train, CompareRun, Difficulty, Mode, Origin, SampleRecord, StepMetrics,
    TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "r3",
    version,
    about = "Train and compare group-relative policy optimization runs on synthetic token tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training configuration and write its artifacts to a directory.
    Train {
        /// TOML configuration file; an empty file selects every default.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configuration across a common set of seeds.
    Compare {
        /// Two or more TOML configuration files.
        #[arg(long, num_args = 2.., required = true)]
        configs: Vec<PathBuf>,
        /// Number of seeds; the runs use master seeds 1 through N.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Trajectory CSV path; per-seed final solve rates land next to it
        /// in a *_summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print records from a buffer dump, optionally restricted to one query.
    InspectBuffer {
        /// A buffer.jsonl written by `train`.
        path: PathBuf,
        /// Only show records stored under this query UID.
        #[arg(long)]
        uid: Option<String>,
        /// Selection ratio for the peak-entropy column.
        #[arg(long, default_value_t = 0.2)]
        p: f64,
    },
    /// Rank token-entropy traces and emit dominance scores and rewards as CSV.
    ScoreTraces {
        /// JSONL file with one JSON array of token entropies per line.
        path: PathBuf,
        /// Selection ratio for peak entropy.
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        /// Reward earned by the top-ranked trace.
        #[arg(long, default_value_t = 0.5)]
        rmax: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let result = match Cli::parse().command {
        Command::Train { config, out } => cmd_train(&config, &out),
        Command::Compare { configs, seeds, out } => cmd_compare(&configs, seeds, &out),
        Command::InspectBuffer { path, uid, p } => cmd_inspect_buffer(&path, uid.as_deref(), p),
        Command::ScoreTraces { path, p, rmax, out } => {
            cmd_score_traces(&path, p, rmax, out.as_deref())
        }
    };
    match result {
        Err(error) if is_broken_pipe(&error) => Ok(()),
        other => other,
    }
}

fn is_broken_pipe(error: &anyhow::Error) -> bool {
    error
        .chain()
        .filter_map(|cause| cause.downcast_ref::<io::Error>())
        .any(|io_error| io_error.kind() == io::ErrorKind::BrokenPipe)
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: TrainConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(config)
}

fn cmd_train(config_path: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let run = train(&config)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_jsonl(&out.join("metrics.jsonl"), &run.metrics)?;
    let records = run.buffer.records_in_insertion_order();
    write_jsonl(&out.join("buffer.jsonl"), &records)?;
    write_jsonl(&out.join("suite.jsonl"), &run.tasks)?;
    write_json_pretty(&out.join("policy.json"), &run.policy.snapshot())?;
    write_json_pretty(&out.join("solve_rates.json"), &run.final_solve_rates)?;
    fs::write(
        out.join("config.toml"),
        toml::to_string_pretty(&config).context("serializing resolved config")?,
    )
    .with_context(|| format!("writing {}", out.join("config.toml").display()))?;

    let last = run.metrics.last().expect("a validated run has steps");
    println!(
        "{} mode, {} steps, {} buffered records",
        config.mode.as_str(),
        run.metrics.len(),
        records.len()
    );
    println!(
        "final step: reward {:.3}, solve-all {:.3}, solve-none {:.3}, entropy {:.4}",
        last.mean_reward, last.solve_all_frac, last.solve_none_frac, last.mean_policy_entropy
    );
    let rates = &run.final_solve_rates;
    println!(
        "solve rates: easy {:.3}  medium {:.3}  hard {:.3}  extreme {:.3}",
        stratum_rate(rates, Difficulty::Easy),
        stratum_rate(rates, Difficulty::Medium),
        stratum_rate(rates, Difficulty::Hard),
        stratum_rate(rates, Difficulty::Extreme),
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_compare(config_paths: &[PathBuf], seed_count: u64, out: &Path) -> Result<()> {
    let configs: Vec<TrainConfig> = config_paths
        .iter()
        .map(|path| load_config(path))
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = (1..=seed_count).collect();
    let runs = compare(&configs, &seeds)?;

    write_trajectory_csv(out, &runs)?;
    let summary = summary_path(out);
    write_summary_csv(&summary, config_paths, &runs)?;
    print_median_table(config_paths, &runs, seeds.len());
    println!("trajectories in {}, solve rates in {}", out.display(), summary.display());
    Ok(())
}

fn write_trajectory_csv(path: &Path, runs: &[CompareRun]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    writer.write_record([
        "step",
        "mode",
        "seed",
        "mean_reward",
        "solve_all",
        "solve_none",
        "entropy",
        "replay_injections",
        "reflection_activations",
    ])?;
    for run in runs {
        for metrics in &run.metrics {
            writer.write_record(&[
                metrics.step.to_string(),
                run.mode.as_str().to_string(),
                run.seed.to_string(),
                metrics.mean_reward.to_string(),
                metrics.solve_all_frac.to_string(),
                metrics.solve_none_frac.to_string(),
                metrics.mean_policy_entropy.to_string(),
                metrics.replay_injections.to_string(),
                metrics.reflection_activations.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "compare".into());
    out.with_file_name(format!("{stem}_summary.csv"))
}

fn write_summary_csv(path: &Path, config_paths: &[PathBuf], runs: &[CompareRun]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(["mode", "config", "seed", "easy", "medium", "hard", "extreme"])?;
    for run in runs {
        writer.write_record(&[
            run.mode.as_str().to_string(),
            config_paths[run.config_index].display().to_string(),
            run.seed.to_string(),
            stratum_rate(&run.final_solve_rates, Difficulty::Easy).to_string(),
            stratum_rate(&run.final_solve_rates, Difficulty::Medium).to_string(),
            stratum_rate(&run.final_solve_rates, Difficulty::Hard).to_string(),
            stratum_rate(&run.final_solve_rates, Difficulty::Extreme).to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn stratum_rate(
    rates: &std::collections::BTreeMap<Difficulty, f64>,
    difficulty: Difficulty,
) -> f64 {
    rates.get(&difficulty).copied().unwrap_or(0.0)
}

fn print_median_table(config_paths: &[PathBuf], runs: &[CompareRun], seed_count: usize) {
    println!("medians over {seed_count} seed(s) at the final step:");
    println!(
        "{:<28} {:<5} {:>7} {:>9} {:>10} {:>8} {:>6} {:>7} {:>6} {:>8}",
        "config",
        "mode",
        "reward",
        "solve_all",
        "solve_none",
        "entropy",
        "easy",
        "medium",
        "hard",
        "extreme"
    );
    for (index, path) in config_paths.iter().enumerate() {
        let group: Vec<&CompareRun> =
            runs.iter().filter(|run| run.config_index == index).collect();
        let mode = group.first().map_or(Mode::R3, |run| run.mode);
        println!(
            "{:<28} {:<5} {:>7.3} {:>9.3} {:>10.3} {:>8.4} {:>6.3} {:>7.3} {:>6.3} {:>8.3}",
            path.display(),
            mode.as_str(),
            final_median(&group, |m| m.mean_reward),
            final_median(&group, |m| m.solve_all_frac),
            final_median(&group, |m| m.solve_none_frac),
            final_median(&group, |m| m.mean_policy_entropy),
            rate_median(&group, Difficulty::Easy),
            rate_median(&group, Difficulty::Medium),
            rate_median(&group, Difficulty::Hard),
            rate_median(&group, Difficulty::Extreme),
        );
    }
}

fn final_median(group: &[&CompareRun], pick: impl Fn(&StepMetrics) -> f64) -> f64 {
    let values: Vec<f64> = group
        .iter()
        .filter_map(|run| run.metrics.last())
        .map(pick)
        .collect();
    median(&values)
}

fn rate_median(group: &[&CompareRun], difficulty: Difficulty) -> f64 {
    let values: Vec<f64> = group
        .iter()
        .map(|run| stratum_rate(&run.final_solve_rates, difficulty))
        .collect();
    median(&values)
}

fn cmd_inspect_buffer(path: &Path, uid: Option<&str>, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        bail!("--p must be in (0, 1], got {p}");
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let number = index + 1;
        let line =
            line.with_context(|| format!("{}: reading line {}", path.display(), number))?;
        let record: SampleRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}: invalid record", path.display(), number))?;
        record
            .validate()
            .with_context(|| format!("{}: line {}: invalid record", path.display(), number))?;
        if let Some(filter) = uid {
            if record.uid != filter {
                continue;
            }
        }
        let profile = serr::profile(&record.token_entropies, p)
            .with_context(|| format!("{}: line {}", path.display(), number))?;
        writeln!(
            out,
            "{:<8} epoch {:>3}  reward {:>7.3}  origin {:<10}  truncated {:<5}  len {:>3}  e_peak {:.4}  e_global {:.4}",
            record.uid,
            record.epoch,
            record.reward,
            origin_str(record.origin),
            record.truncated,
            record.response.len(),
            profile.peak,
            profile.global,
        )?;
    }
    Ok(())
}

fn origin_str(origin: Origin) -> &'static str {
    match origin {
        Origin::OnPolicy => "on_policy",
        Origin::Replayed => "replayed",
        Origin::Reflection => "reflection",
    }
}

fn cmd_score_traces(path: &Path, p: f64, rmax: f64, out: Option<&Path>) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        bail!("--p must be in (0, 1], got {p}");
    }
    if !(rmax > 0.0 && rmax.is_finite()) {
        bail!("--rmax must be positive and finite, got {rmax}");
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut profiles = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let number = index + 1;
        let line =
            line.with_context(|| format!("{}: reading line {}", path.display(), number))?;
        let entropies: Vec<f64> = serde_json::from_str(&line).with_context(|| {
            format!(
                "{}: line {}: expected a JSON array of token entropies",
                path.display(),
                number
            )
        })?;
        let profile = serr::profile(&entropies, p)
            .with_context(|| format!("{}: line {}", path.display(), number))?;
        profiles.push(profile);
    }

    let scores = serr::dominance_scores(&profiles);
    let rewards = if profiles.is_empty() {
        Vec::new()
    } else {
        serr::rank_rewards(&scores, rmax)?
    };
    match out {
        Some(path) => {
            let writer = csv::Writer::from_path(path)
                .with_context(|| format!("creating {}", path.display()))?;
            write_scores_csv(writer, &scores, &rewards)
        }
        None => write_scores_csv(csv::Writer::from_writer(io::stdout().lock()), &scores, &rewards),
    }
}

fn write_scores_csv<W: io::Write>(
    mut writer: csv::Writer<W>,
    scores: &[usize],
    rewards: &[f64],
) -> Result<()> {
    writer.write_record(["score", "reward"])?;
    for (score, reward) in scores.iter().zip(rewards) {
        writer.write_record(&[score.to_string(), reward.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for row in rows {
        serde_json::to_writer(&mut file, row)
            .with_context(|| format!("writing {}", path.display()))?;
        file.write_all(b"\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    file.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    serde_json::to_writer_pretty(&mut file, value)
        .with_context(|| format!("writing {}", path.display()))?;
    file.write_all(b"\n")
        .with_context(|| format!("writing {}", path.display()))?;
    file.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
