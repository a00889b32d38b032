use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rpf_core::ppo::PolicyBundle;
use rpf_core::scenario::MetricReport;
use rpf_core::sim::{run_episode, trajectory_rows, write_trajectory, Mode};
use rpf_core::training::Trainer;
use serde::{Deserialize, Serialize};

use crate::config::{arena_by_name, scenario_by_name, Settings};
use crate::{Classify, CmdResult, Common};

pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const FINAL_POLICY: &str = "policy.json";
pub const REPORT: &str = "report.json";

/// Written before any work starts; enough to re-run the command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub git_describe: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub settings: Settings,
    pub seeds: Vec<u64>,
    pub scenario: String,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl RunManifest {
    fn write(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join(MANIFEST), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn settings_for(common: &Common, extra: &[String]) -> CmdResult<Settings> {
    let mut overrides: Vec<String> = common.overrides.clone();
    if let Some(mode) = &common.mode {
        let mode: Mode = mode.parse().map_err(|e: String| anyhow!(e)).config()?;
        overrides.push(format!("mode={mode}"));
    }
    overrides.extend_from_slice(extra);
    Settings::resolve(common.config.as_deref(), &overrides).config()
}

pub fn train(common: &Common, scenario: &str, episodes: Option<usize>, seed: u64, args: &[String]) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(n) = episodes {
        extra.push(format!("ppo.episodes={n}"));
    }
    let mut settings = settings_for(common, &extra)?;
    if scenario != "mixed" || settings.arenas.is_empty() {
        settings.arenas = arena_by_name(scenario).config()?;
    }
    if settings.mode == Mode::VanillaApf {
        return Err(anyhow!("mode vanilla_apf has no parameters to train")).config();
    }
    let config = settings.train_config();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        git_describe: git_describe(),
        command: "train".into(),
        args: args.to_vec(),
        settings: settings.clone(),
        seeds: vec![seed],
        scenario: scenario.into(),
        checkpoint: None,
        out_dir: common.out.clone(),
    };
    manifest.write().runtime()?;

    let episodes = settings.ppo.episodes;
    if episodes == 0 {
        return Ok(());
    }
    let mut trainer = Trainer::new(config, seed).config()?;
    let checkpoints = common.out.join("checkpoints");
    let mut log = BufWriter::new(File::create(common.out.join(TRAIN_LOG)).runtime()?);
    for _ in 0..episodes {
        let entry = trainer.run_episode().runtime()?;
        writeln!(log, "{}", serde_json::to_string(&entry).runtime()?).runtime()?;
        let done = entry.episode + 1;
        if entry.aborted_updates > 0 {
            // the trainer rolled the parameters back, so this is the last good policy
            log.flush().runtime()?;
            trainer.policy.save(&common.out.join(FINAL_POLICY)).runtime()?;
            return Err(anyhow!(
                "non-finite loss in episode {}; last good policy kept in {}",
                entry.episode,
                common.out.join(FINAL_POLICY).display()
            ))
            .runtime();
        }
        if settings.checkpoint_every > 0 && done % settings.checkpoint_every == 0 {
            fs::create_dir_all(&checkpoints).runtime()?;
            trainer
                .policy
                .save(&checkpoints.join(format!("episode_{done:05}.json")))
                .runtime()?;
        }
        eprintln!(
            "episode {:>5}  steps {:>4}  return {:>9.2}  arrivals {}  collisions {}",
            entry.episode, entry.steps, entry.return_mean, entry.arrivals, entry.collisions
        );
    }
    log.flush().runtime()?;
    trainer.policy.save(&common.out.join(FINAL_POLICY)).runtime()?;
    Ok(())
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub steps: usize,
    pub arrivals: usize,
    pub collided: usize,
    pub robot_collisions: usize,
    pub obstacle_collisions: usize,
    pub returns: Vec<f64>,
    pub traveling_distance: MetricReport,
    pub smoothness: MetricReport,
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub mode: Mode,
    pub robots: usize,
    pub episodes: Vec<EpisodeReport>,
    /// Means over episodes of the per-episode robot means.
    pub mean_traveling_distance: f64,
    pub mean_smoothness: f64,
}

pub fn eval(common: &Common, scenario: &str, checkpoint: Option<&Path>, seeds: &[u64], args: &[String]) -> CmdResult {
    let settings = settings_for(common, &[])?;
    let policy = match (settings.mode, checkpoint) {
        (Mode::VanillaApf, _) => None,
        (mode, None) => {
            return Err(anyhow!("mode {mode} needs a policy: pass --checkpoint <file>")).config();
        }
        (_, Some(path)) => Some(
            PolicyBundle::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))
                .config()?,
        ),
    };
    let scenarios = seeds
        .iter()
        .map(|&s| scenario_by_name(scenario, s))
        .collect::<anyhow::Result<Vec<_>>>()
        .config()?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        git_describe: git_describe(),
        command: "eval".into(),
        args: args.to_vec(),
        settings: settings.clone(),
        seeds: seeds.to_vec(),
        scenario: scenario.into(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        out_dir: common.out.clone(),
    };
    manifest.write().runtime()?;

    let mut episodes = Vec::new();
    for (&seed, sc) in seeds.iter().zip(&scenarios) {
        let summary = run_episode(&settings.sim_config(seed), sc, policy.as_ref()).config()?;
        let trajectory = format!("trajectory_seed{seed}.csv");
        let file = BufWriter::new(File::create(common.out.join(&trajectory)).runtime()?);
        write_trajectory(&trajectory_rows(&summary.records), file).runtime()?;
        sc.save(&common.out.join(format!("scenario_seed{seed}.json")))
            .runtime()?;
        eprintln!(
            "seed {seed}: {} steps, {}/{} arrived, {} collided, length {:.3} m, smoothness {:.4}",
            summary.steps,
            summary.arrivals,
            sc.robots.len(),
            summary.collided,
            summary.traveling_distance.mean,
            summary.smoothness.mean
        );
        episodes.push(EpisodeReport {
            seed,
            steps: summary.steps,
            arrivals: summary.arrivals,
            collided: summary.collided,
            robot_collisions: summary.robot_collisions,
            obstacle_collisions: summary.obstacle_collisions,
            returns: summary.returns,
            traveling_distance: summary.traveling_distance,
            smoothness: summary.smoothness,
            trajectory,
        });
    }
    let n = episodes.len().max(1) as f64;
    let report = EvalReport {
        scenario: scenario.into(),
        mode: settings.mode,
        robots: scenarios.first().map_or(0, |s| s.robots.len()),
        mean_traveling_distance: episodes.iter().map(|e| e.traveling_distance.mean).sum::<f64>() / n,
        mean_smoothness: episodes.iter().map(|e| e.smoothness.mean).sum::<f64>() / n,
        episodes,
    };
    fs::write(
        common.out.join(REPORT),
        serde_json::to_string_pretty(&report).runtime()?,
    )
    .runtime()?;
    Ok(())
}

/// Files a run produces whose bytes must reproduce exactly.
fn artifacts(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != MANIFEST) {
                found.push(path.strip_prefix(dir)?.to_path_buf());
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn replay(run_dir: &Path) -> CmdResult {
    let text = fs::read_to_string(run_dir.join(MANIFEST))
        .with_context(|| format!("no manifest in {}", run_dir.display()))
        .config()?;
    let manifest: RunManifest = serde_json::from_str(&text).config()?;
    if manifest.command == "replay" {
        return Err(anyhow!("cannot replay a replay")).config();
    }
    let target = run_dir.join("replay");
    if target.exists() {
        fs::remove_dir_all(&target).runtime()?;
    }
    let mut args = strip_out(&manifest.args);
    args.push("--out".into());
    args.push(target.display().to_string());
    crate::dispatch(args)?;

    let original: Vec<PathBuf> = artifacts(run_dir)
        .runtime()?
        .into_iter()
        .filter(|p| !p.starts_with("replay"))
        .collect();
    let mut mismatched = Vec::new();
    for rel in &original {
        let a = fs::read(run_dir.join(rel)).runtime()?;
        let same = fs::read(target.join(rel)).map(|b| a == b).unwrap_or(false);
        println!("{} {}", if same { "identical" } else { "DIFFERS  " }, rel.display());
        if !same {
            mismatched.push(rel.display().to_string());
        }
    }
    if mismatched.is_empty() {
        println!("replay matches: {} artifacts", original.len());
        Ok(())
    } else {
        Err(anyhow!("replay differs in {}", mismatched.join(", "))).runtime()
    }
}

/// Drops `--out <dir>` / `--out=<dir>` from recorded arguments.
fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_output_flag() {
        let args: Vec<String> = ["eval", "--out", "x", "--seed", "1", "--out=y"]
            .map(String::from)
            .to_vec();
        assert_eq!(strip_out(&args), vec!["eval", "--seed", "1"]);
    }
}
