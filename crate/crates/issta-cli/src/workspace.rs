//! Artifact layout: one directory per scenario, named after the scenario and
//! the leading digits of its config hash. A directory that already holds a
//! trace with the same hash is reused as is.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use issta::analysis::{performance_indices, settling_time, PerformanceReport, DEFAULT_WINDOW};
use issta::config::{ConfigError, ControllerKind, ScenarioConfig};
use issta::sim_engine::{run_with_design, SimTrace, TraceMeta};
use issta::trajectory_gen::SegmentKind;

use crate::commands::{synthesize_config, GainsFile};
use crate::{plot, CliError, CommonArgs};

pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const META_FILE: &str = "trace.meta.toml";
pub const REPORT_FILE: &str = "report.toml";
pub const GAINS_FILE: &str = "design.toml";
pub const PANELS_FILE: &str = "panels.svg";

/// Settling band relative to the step target.
pub const SETTLING_BAND: f64 = 0.02;

/// Scenario from `--config` or `--preset` (default `benchmark`) with
/// the `--seed` and `--controller` overrides applied.
pub fn resolve_config(c: &CommonArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => ScenarioConfig::benchmark(),
    };
    if let Some(seed) = c.seed {
        cfg.sim.seed = seed;
    }
    if let Some(kind) = c.controller {
        cfg.controller = kind;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(ScenarioConfig::from_toml(&text)?)
}

/// Index window: the standard `[10, 14]` s when the horizon covers it,
/// otherwise the last 4 s.
pub fn analysis_window(cfg: &ScenarioConfig) -> (f64, f64) {
    let h = cfg.sim.horizon;
    if h >= DEFAULT_WINDOW.1 {
        DEFAULT_WINDOW
    } else {
        ((h - 4.0).max(0.0), h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub samples: usize,
    pub max_abs_u: f64,
    /// Largest change of `u` between consecutive control samples.
    pub max_u_jump: f64,
    pub max_abs_error: f64,
    /// Mean absolute tracking error over samples outside step segments.
    pub smooth_mu_e: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settling_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub performance: Option<PerformanceReport>,
}

pub fn summarize(cfg: &ScenarioConfig, trace: &SimTrace) -> Result<RunSummary, CliError> {
    let col = |n: &'static str| trace.column(n).ok_or(issta::analysis::AnalysisError::MissingColumn(n));
    let (t, r, q, u) = (col("t")?, col("r")?, col("q_true")?, col("u")?);
    let profile = cfg.profile.build()?;
    let segs = profile.segments();
    let smooth: Vec<f64> = t
        .iter()
        .enumerate()
        .filter(|(_, &ti)| {
            segs.iter()
                .find(|s| ti >= s.t_start && ti < s.t_end)
                .is_some_and(|s| !matches!(s.kind, SegmentKind::Step { .. }))
        })
        .map(|(i, _)| (q[i] - r[i]).abs())
        .collect();
    let smooth_mu_e = if smooth.is_empty() { 0.0 } else { smooth.iter().sum::<f64>() / smooth.len() as f64 };
    let settling = segs.iter().rev().find_map(|s| match s.kind {
        SegmentKind::Step { value } => Some((s.t_start, value)),
        _ => None,
    });
    Ok(RunSummary {
        config_hash: trace.meta.config_hash.clone(),
        scenario: trace.meta.scenario.clone(),
        controller: trace.meta.controller,
        seed: trace.meta.seed,
        samples: trace.len(),
        max_abs_u: u.iter().fold(0.0, |a, v| a.max(v.abs())),
        max_u_jump: u.windows(2).fold(0.0, |a, w| a.max((w[1] - w[0]).abs())),
        max_abs_error: q.iter().zip(&r).fold(0.0, |a, (x, y)| a.max((x - y).abs())),
        smooth_mu_e,
        settling_time: settling.and_then(|(t0, target)| settling_time(&t, &q, target, t0, SETTLING_BAND)),
        performance: performance_indices(trace, analysis_window(cfg), cfg.plant.stroke).ok(),
    })
}

/// Finished run as stored on disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: ScenarioConfig,
    pub trace: SimTrace,
    pub summary: RunSummary,
    pub gains: Option<GainsFile>,
    /// True when the run was found on disk rather than simulated.
    pub cached: bool,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn run_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.root.join(format!("{}-{}", cfg.name, &cfg.hash()[..12]))
    }

    /// Every stored run as `(config hash, directory)`.
    pub fn registry(&self) -> Vec<(String, PathBuf)> {
        let Ok(entries) = fs::read_dir(&self.root) else { return Vec::new() };
        let mut out: Vec<(String, PathBuf)> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter_map(|dir| {
                let text = fs::read_to_string(dir.join(META_FILE)).ok()?;
                let meta: TraceMeta = toml::from_str(&text).ok()?;
                Some((meta.config_hash, dir))
            })
            .collect();
        out.sort();
        out
    }

    pub fn lookup(&self, cfg: &ScenarioConfig) -> Option<RunArtifacts> {
        let dir = self.run_dir(cfg);
        let mut run = load_run(&dir).ok()?;
        if run.trace.meta.config_hash != cfg.hash() {
            return None;
        }
        run.cached = true;
        Some(run)
    }

    /// Runs `cfg` unless an identical run is stored, in which case nothing
    /// is written and the stored run is returned.
    pub fn simulate(&self, cfg: &ScenarioConfig) -> Result<RunArtifacts, CliError> {
        if let Some(run) = self.lookup(cfg) {
            return Ok(run);
        }
        let gains = match cfg.controller {
            ControllerKind::Vgsta => None,
            _ => Some(GainsFile::new(cfg, &synthesize_config(cfg)?)),
        };
        let trace = run_with_design(cfg, gains.as_ref().map(|g| &g.surface))?;
        let summary = summarize(cfg, &trace)?;

        // Build in a private directory and move it into place so concurrent
        // or interrupted runs never leave a half-written artifact set.
        let dir = self.run_dir(cfg);
        fs::create_dir_all(&self.root)?;
        let tmp = self.root.join(format!(
            ".{}.tmp-{}-{:?}",
            dir.file_name().and_then(|n| n.to_str()).unwrap_or("run"),
            std::process::id(),
            std::thread::current().id()
        ));
        let _ = fs::remove_dir_all(&tmp);
        fs::create_dir_all(&tmp)?;
        fs::write(tmp.join(CONFIG_FILE), cfg.to_toml()?)?;
        let mut csv = Vec::new();
        trace.write_csv(&mut csv)?;
        fs::write(tmp.join(TRACE_FILE), csv)?;
        fs::write(tmp.join(META_FILE), trace.meta_toml())?;
        fs::write(tmp.join(REPORT_FILE), to_toml(&summary)?)?;
        if let Some(g) = &gains {
            fs::write(tmp.join(GAINS_FILE), to_toml(g)?)?;
        }
        plot::run_panels(&trace, &tmp.join(PANELS_FILE))?;
        if fs::rename(&tmp, &dir).is_err() {
            // Either another worker stored the same run first, or the
            // directory holds only a gains file; fill in what is missing.
            if self.lookup(cfg).is_none() && dir.is_dir() {
                for entry in fs::read_dir(&tmp)?.filter_map(Result::ok) {
                    let dest = dir.join(entry.file_name());
                    if !dest.exists() {
                        fs::rename(entry.path(), dest)?;
                    }
                }
            }
            let _ = fs::remove_dir_all(&tmp);
            let mut run = self.lookup(cfg).ok_or_else(|| CliError::Io(format!("cannot store run in {}", dir.display())))?;
            run.cached = false;
            return Ok(run);
        }
        Ok(RunArtifacts { dir, config: cfg.clone(), trace, summary, gains, cached: false })
    }
}

pub fn to_toml<T: Serialize>(v: &T) -> Result<String, CliError> {
    toml::to_string(v).map_err(|e| CliError::Other(format!("serialization: {e}")))
}

fn read(dir: &Path, name: &str) -> Result<String, CliError> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| CliError::Io(format!("{what}: {e}")))
}

/// Loads a stored run directory.
pub fn load_run(dir: &Path) -> Result<RunArtifacts, CliError> {
    let config = ScenarioConfig::from_toml(&read(dir, CONFIG_FILE)?)?;
    let meta: TraceMeta = parse(&read(dir, META_FILE)?, META_FILE)?;
    let trace = SimTrace::read_csv(read(dir, TRACE_FILE)?.as_bytes(), meta)?;
    let summary: RunSummary = parse(&read(dir, REPORT_FILE)?, REPORT_FILE)?;
    let gains = match dir.join(GAINS_FILE).exists() {
        true => Some(parse(&read(dir, GAINS_FILE)?, GAINS_FILE)?),
        false => None,
    };
    Ok(RunArtifacts { dir: dir.to_path_buf(), config, trace, summary, gains, cached: true })
}
