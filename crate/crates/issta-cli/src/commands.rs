use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use issta::analysis::{
    chatter_predict, lyapunov_check, performance_indices, reachability_check, red_velocity, ChatterPrediction,
    LyapunovReport, PerformanceReport, ReachabilityReport, RedGains,
};
use issta::config::{ConfigError, ControllerKind, ScenarioConfig};
use issta::issta_controller::{flow_lyapunov, StaGains};
use issta::lmi_synthesis::{assign_h1, bound_psi, SurfaceDesign};
use issta::sim_engine::{sta_gains, synthesize, SimTrace};

use crate::workspace::{analysis_window, load_run, resolve_config, to_toml, RunArtifacts, RunSummary, Workspace};
use crate::{plot, CliError, CommonArgs};

/// Reference figure for `lambda_max(M_k)` at `k1 = 1.1`, `k2 = 2.028`,
/// kept to report its gap to the computed value.
pub const REFERENCE_LAMBDA_MAX: f64 = 1.6303;

/// Surface design plus the STA gain set and the bookkeeping that leads to
/// them.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub design: SurfaceDesign,
    pub gains: StaGains<f64>,
    pub sigma_h: f64,
    pub h1: f64,
    pub psi_analytic: f64,
    pub psi_sampled: f64,
    pub rho_ok: bool,
    pub seconds: f64,
}

pub fn synthesize_config(cfg: &ScenarioConfig) -> Result<Synthesis, CliError> {
    let start = Instant::now();
    let inp = cfg.synthesis.input;
    let h = assign_h1(&cfg.plant, 1.0 / inp.h_slow.max(f64::MIN_POSITIVE))?;
    let psi = bound_psi(&cfg.plant);
    let design = synthesize(cfg)?;
    let gains = sta_gains(cfg)?;
    let rho_ok = gains.rho > gains.rho_threshold();
    Ok(Synthesis {
        design,
        gains,
        sigma_h: h.sigma_h,
        h1: h.h1,
        psi_analytic: psi.analytic,
        psi_sampled: psi.sampled,
        rho_ok,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaRecord {
    pub k1: f64,
    pub k2: f64,
    pub rho: f64,
    pub l: f64,
    pub m_k: [[f64; 2]; 2],
    pub lambda_max_mk: f64,
    pub reference_lambda_max: f64,
    pub lambda_max_gap: f64,
    pub rho_threshold: f64,
    pub rho_ok: bool,
    /// Lyapunov matrix of the actual reduced flow, for comparison.
    pub flow_m: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub h_slow: f64,
    pub h_fast: f64,
    pub t_h1: f64,
    pub t_h2: f64,
    pub sigma_h: f64,
    pub h1: f64,
    pub theta: f64,
    pub psi: f64,
    pub psi_analytic: f64,
    pub psi_sampled: f64,
}

/// Gains file consumed by the controller: assignment, STA gains and the
/// surface design with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    pub config_hash: String,
    pub scenario: String,
    pub assignment: Assignment,
    pub sta: StaRecord,
    pub surface: SurfaceDesign,
}

impl GainsFile {
    pub fn new(cfg: &ScenarioConfig, s: &Synthesis) -> Self {
        let inp = s.design.input;
        let g = &s.gains;
        Self {
            config_hash: cfg.hash(),
            scenario: cfg.name.clone(),
            assignment: Assignment {
                h_slow: inp.h_slow,
                h_fast: inp.h_fast,
                t_h1: 1.0 / inp.h_slow,
                t_h2: 1.0 / inp.h_fast,
                sigma_h: s.sigma_h,
                h1: s.h1,
                theta: inp.theta,
                psi: inp.psi,
                psi_analytic: s.psi_analytic,
                psi_sampled: s.psi_sampled,
            },
            sta: StaRecord {
                k1: g.k1,
                k2: g.k2,
                rho: g.rho,
                l: g.l,
                m_k: g.m_k,
                lambda_max_mk: g.lambda_max_mk,
                reference_lambda_max: REFERENCE_LAMBDA_MAX,
                lambda_max_gap: g.lambda_max_mk - REFERENCE_LAMBDA_MAX,
                rho_threshold: g.rho_threshold(),
                rho_ok: s.rho_ok,
                flow_m: flow_lyapunov(g.k1, g.k2).unwrap_or([[f64::NAN; 2]; 2]),
            },
            surface: s.design.clone(),
        }
    }

    /// Parameter / value / design step rows.
    pub fn table(&self) -> Vec<(String, String, &'static str)> {
        let a = &self.assignment;
        let d = &self.surface;
        let c = &d.certificate;
        let f = |v: f64| format!("{v:.6}");
        let e = |v: f64| format!("{v:.4e}");
        let eigs: Vec<String> = d.closed_loop_eigs.iter().map(|z| format!("{:.4}{:+.4}i", z[0], z[1])).collect();
        vec![
            ("h1 (slow edge)".into(), f(-a.h_slow), "slow strip edge"),
            ("T_h1".into(), f(a.t_h1), "slow strip edge"),
            ("sigma_h".into(), e(a.sigma_h), "slow strip edge"),
            ("h2 (fast edge)".into(), f(-a.h_fast), "fast strip edge"),
            ("T_h2".into(), f(a.t_h2), "fast strip edge"),
            ("theta".into(), f(a.theta), "cone angle"),
            ("Psi (used)".into(), f(a.psi), "friction bound"),
            ("Psi (analytic / sampled)".into(), format!("{} / {}", e(a.psi_analytic), e(a.psi_sampled)), "friction bound"),
            ("K".into(), format!("[{}, {}, {}]", e(d.k[0]), e(d.k[1]), e(d.k[2])), "region LMI"),
            ("gamma1".into(), e(d.gamma1), "surface"),
            ("gamma2".into(), e(d.gamma2), "surface"),
            ("kappa".into(), e(d.kappa), "surface"),
            ("alpha".into(), e(d.alpha), "surface"),
            ("mu(M)".into(), e(d.mu_m), "region LMI"),
            ("closed-loop eigenvalues".into(), eigs.join(", "), "region LMI"),
            ("lambda_min(Y)".into(), e(c.y_min_eig), "certificate"),
            ("lambda_max(LMI) / bound".into(), format!("{} / {}", e(c.lmi_max_eig), e(c.lmi_bound)), "certificate"),
            ("region".into(), if c.region_ok { "ok" } else { "violated" }.into(), "certificate"),
            ("k1, k2".into(), format!("{}, {}", self.sta.k1, self.sta.k2), "STA gains"),
            ("L".into(), f(self.sta.l), "STA gains"),
            (
                "lambda_max(M_k)".into(),
                format!("{} (reference {}, gap {:+.4})", f(self.sta.lambda_max_mk), REFERENCE_LAMBDA_MAX, self.sta.lambda_max_gap),
                "STA gains",
            ),
            ("rho / threshold".into(), format!("{} / {}", self.sta.rho, f(self.sta.rho_threshold)), "STA gains"),
        ]
    }
}

fn print_table(rows: &[(String, String, &'static str)]) {
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    println!("{:w0$}  {:w1$}  design step", "parameter", "value");
    for (p, v, s) in rows {
        println!("{p:w0$}  {v:w1$}  {s}");
    }
}

/// Writes the gains file for the resolved scenario next to its runs.
/// Returns the file, its path and whether an identical file was already
/// there (in which case nothing is written).
pub fn write_gains(c: &CommonArgs) -> Result<(GainsFile, PathBuf, bool, f64), CliError> {
    let cfg = resolve_config(c)?;
    let s = synthesize_config(&cfg)?;
    let file = GainsFile::new(&cfg, &s);
    let dir = Workspace::new(&c.out).run_dir(&cfg);
    let path = dir.join(crate::workspace::GAINS_FILE);
    let text = to_toml(&file)?;
    let cached = fs::read_to_string(&path).ok().as_deref() == Some(text.as_str());
    if !cached {
        fs::create_dir_all(&dir)?;
        fs::write(&path, &text)?;
    }
    Ok((file, path, cached, s.seconds))
}

/// Writes the gains file and prints the summary table. Fails with the
/// infeasibility exit code when `rho` does not clear its threshold; the
/// gains file is still written for inspection.
pub fn cmd_synthesize(c: &CommonArgs) -> Result<(GainsFile, PathBuf), CliError> {
    let (file, path, cached, seconds) = write_gains(c)?;
    println!("{}: {}", if cached { "cached" } else { "wrote" }, path.display());
    print_table(&file.table());
    println!("synthesis time: {seconds:.3} s");
    if !file.sta.rho_ok {
        return Err(CliError::Infeasible(issta::lmi_synthesis::SynthesisError::Certificate(format!(
            "rho = {} does not exceed 2 L lambda_max(M_k) = {}",
            file.sta.rho, file.sta.rho_threshold
        ))));
    }
    Ok((file, path))
}

fn print_summary(run: &RunArtifacts) {
    let s = &run.summary;
    let tag = if run.cached { "cached" } else { "wrote" };
    println!("{tag}: {}", run.dir.display());
    println!("  scenario {} controller {:?} seed {} samples {}", s.scenario, s.controller, s.seed, s.samples);
    println!("  max|u| {:.5}  max|du| {:.5}  max|e| {:.5}  smooth mu_e {:.5e}", s.max_abs_u, s.max_u_jump, s.max_abs_error, s.smooth_mu_e);
    if let Some(p) = &s.performance {
        println!(
            "  window [{}, {}]: M_e {:.5e}  mu_e {:.5e}  sigma_e {:.5e}  ISE {:.5e}  {:.3}% of stroke",
            p.window.0, p.window.1, p.m_e, p.mu_e, p.sigma_e, p.ise, p.steady_state_pct
        );
    }
    if let Some(ts) = s.settling_time {
        println!("  settling time {ts:.4} s");
    }
}

pub fn cmd_simulate(c: &CommonArgs) -> Result<RunArtifacts, CliError> {
    let cfg = resolve_config(c)?;
    let run = Workspace::new(&c.out).simulate(&cfg)?;
    print_summary(&run);
    Ok(run)
}

/// One swept parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<f64>,
}

pub fn parse_sweep(spec: &str) -> Result<Sweep, CliError> {
    let bad = |m: String| CliError::Config(ConfigError::Invalid(m));
    let (key, list) = spec.split_once('=').ok_or_else(|| bad(format!("sweep `{spec}` is not key=v1,v2,...")))?;
    let key = key.trim().to_string();
    if !["rho", "k1", "k2", "seed"].contains(&key.as_str()) {
        return Err(bad(format!("cannot sweep `{key}`; use rho, k1, k2 or seed")));
    }
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("sweep value `{v}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad("empty sweep".into()));
    }
    Ok(Sweep { key, values })
}

fn apply(cfg: &mut ScenarioConfig, key: &str, v: f64) -> Result<(), CliError> {
    match key {
        "rho" => cfg.sta.rho = v,
        "k1" => cfg.sta.k1 = v,
        "k2" => cfg.sta.k2 = v,
        "seed" if v >= 0.0 && v.fract() == 0.0 => cfg.sim.seed = v as u64,
        _ => return Err(CliError::Config(ConfigError::Invalid(format!("bad sweep value {key} = {v}")))),
    }
    cfg.validate()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub dir: String,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepFile {
    key: String,
    base_hash: String,
    points: Vec<SweepPoint>,
}

/// Runs one scenario per sweep value concurrently, then writes a summary
/// and an overlay plot next to the individual runs. Returns the points and
/// the summary directory.
pub fn run_sweep(c: &CommonArgs, sweep: &Sweep) -> Result<(Vec<SweepPoint>, PathBuf), CliError> {
    let base = resolve_config(c)?;
    let ws = Workspace::new(&c.out);
    let cfgs = sweep
        .values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            apply(&mut cfg, &sweep.key, v).map(|_| cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<Result<RunArtifacts, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|cfg| scope.spawn(|| ws.simulate(cfg))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::Other("sweep worker panicked".into())))).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let points: Vec<SweepPoint> = sweep
        .values
        .iter()
        .zip(&runs)
        .map(|(&value, r)| SweepPoint { value, dir: r.dir.display().to_string(), summary: r.summary.clone() })
        .collect();
    let dir = c.out.join(format!("sweep-{}-{}-{}", base.name, sweep.key, &base.hash()[..12]));
    fs::create_dir_all(&dir)?;
    let file = SweepFile { key: sweep.key.clone(), base_hash: base.hash(), points: points.clone() };
    fs::write(dir.join("sweep.toml"), to_toml(&file)?)?;
    let labelled: Vec<(String, &SimTrace)> =
        runs.iter().zip(&sweep.values).map(|(r, v)| (format!("{} = {v}", sweep.key), &r.trace)).collect();
    plot::overlay(&labelled, &dir.join("overlay.svg"))?;
    Ok((points, dir))
}

pub fn cmd_sweep(c: &CommonArgs, spec: &str) -> Result<Vec<SweepPoint>, CliError> {
    let sweep = parse_sweep(spec)?;
    let (points, dir) = run_sweep(c, &sweep)?;
    println!("{:>10}  {:>12}  {:>10}  {:>10}", sweep.key, "settling [s]", "max|u|", "max|du|");
    for p in &points {
        let ts = p.summary.settling_time.map_or("-".to_string(), |t| format!("{t:.4}"));
        println!("{:>10}  {:>12}  {:>10.5}  {:>10.5}", p.value, ts, p.summary.max_abs_u, p.summary.max_u_jump);
    }
    println!("wrote {}", dir.display());
    Ok(points)
}

/// One side of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSide {
    pub scenario: String,
    pub controller: ControllerKind,
    pub config_hash: String,
    /// Time and reason of a blow-up, when the run aborted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// `smooth_mu_e` of the second run over the first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_e_ratio: Option<f64>,
    /// `max|u|` of the second run over the first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_amplitude_ratio: Option<f64>,
    pub a: CompareSide,
    pub b: CompareSide,
}

/// Rejects pairs that do not share the reference, grid and horizon.
pub fn check_comparable(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<(), CliError> {
    if a.profile != b.profile || a.sim.horizon != b.sim.horizon || a.sim.dt_control != b.sim.dt_control {
        return Err(CliError::Config(ConfigError::Invalid(
            "compared scenarios must share profile, horizon and dt_control".into(),
        )));
    }
    Ok(())
}

/// Runs both scenarios and builds the joint report. Blow-ups are recorded
/// in the report rather than returned as errors.
pub fn compare_configs(ws: &Workspace, a: &ScenarioConfig, b: &ScenarioConfig) -> Result<(CompareReport, Vec<RunArtifacts>), CliError> {
    check_comparable(a, b)?;
    let (ra, rb) = std::thread::scope(|scope| {
        let ha = scope.spawn(|| ws.simulate(a));
        let hb = scope.spawn(|| ws.simulate(b));
        (ha.join(), hb.join())
    });
    let panicked = |_| Err(CliError::Other("compare worker panicked".into()));
    let (ra, rb) = (ra.unwrap_or_else(panicked), rb.unwrap_or_else(panicked));
    let side = |cfg: &ScenarioConfig, r: &Result<RunArtifacts, CliError>| -> Result<CompareSide, CliError> {
        let (blow_up_t, blow_up, run) = match r {
            Ok(run) => (None, None, Some(run.summary.clone())),
            Err(CliError::BlowUp { t, reason }) => (Some(*t), Some(reason.clone()), None),
            Err(e) => return Err(CliError::Other(e.to_string())),
        };
        Ok(CompareSide {
            scenario: cfg.name.clone(),
            controller: cfg.controller,
            config_hash: cfg.hash(),
            blow_up_t,
            blow_up,
            run,
        })
    };
    let (sa, sb) = (side(a, &ra)?, side(b, &rb)?);
    let (mu_e_ratio, u_amplitude_ratio) = match (&sa.run, &sb.run) {
        (Some(x), Some(y)) => (Some(y.smooth_mu_e / x.smooth_mu_e), Some(y.max_abs_u / x.max_abs_u)),
        _ => (None, None),
    };
    let runs = [ra, rb].into_iter().filter_map(Result::ok).collect();
    Ok((CompareReport { mu_e_ratio, u_amplitude_ratio, a: sa, b: sb }, runs))
}

/// Compares the resolved scenario against a second one: `--against-config`,
/// `--against-preset`, or the same scenario with `--against-controller`
/// (default vgsta).
pub fn cmd_compare(
    c: &CommonArgs,
    against_config: Option<PathBuf>,
    against_preset: Option<String>,
    against_controller: Option<ControllerKind>,
) -> Result<CompareReport, CliError> {
    let a = resolve_config(c)?;
    let mut b = match (&against_config, &against_preset) {
        (Some(p), _) => crate::workspace::load_config(p)?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => a.clone(),
    };
    if let Some(seed) = c.seed {
        b.sim.seed = seed;
    }
    match against_controller {
        Some(k) => b.controller = k,
        None if against_config.is_none() && against_preset.is_none() => b.controller = ControllerKind::Vgsta,
        None => {}
    }
    b.validate()?;
    let ws = Workspace::new(&c.out);
    let (report, runs) = compare_configs(&ws, &a, &b)?;
    let dir = c.out.join(format!("compare-{}-{}", &a.hash()[..12], &b.hash()[..12]));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("compare.toml"), to_toml(&report)?)?;
    if runs.len() == 2 {
        let labelled: Vec<(String, &SimTrace)> =
            runs.iter().map(|r| (format!("{} ({:?})", r.config.name, r.config.controller), &r.trace)).collect();
        plot::overlay(&labelled, &dir.join("overlay.svg"))?;
    }

    let cell = |s: &CompareSide, f: &dyn Fn(&RunSummary) -> String| s.run.as_ref().map_or("-".to_string(), f);
    println!("{:<22}  {:>24}  {:>24}", "", format!("{:?}", report.a.controller), format!("{:?}", report.b.controller));
    type Cell<'a> = (&'a str, &'a dyn Fn(&RunSummary) -> String);
    let rows: [Cell; 5] = [
        ("smooth mu_e [m]", &|r| format!("{:.5e}", r.smooth_mu_e)),
        ("max|e| [m]", &|r| format!("{:.5e}", r.max_abs_error)),
        ("max|u|", &|r| format!("{:.5}", r.max_abs_u)),
        ("max|du|", &|r| format!("{:.5}", r.max_u_jump)),
        ("window pct [%]", &|r| r.performance.map_or("-".into(), |p| format!("{:.4}", p.steady_state_pct))),
    ];
    for (name, f) in rows {
        println!("{name:<22}  {:>24}  {:>24}", cell(&report.a, f), cell(&report.b, f));
    }
    for s in [&report.a, &report.b] {
        if let (Some(t), Some(b)) = (s.blow_up_t, &s.blow_up) {
            println!("{:?}: blew up at t = {t:.6} s: {b}", s.controller);
        }
    }
    if let Some(r) = report.u_amplitude_ratio {
        println!("control amplitude ratio (second / first): {r:.4}");
    }
    println!("wrote {}", dir.display());
    for s in [&report.a, &report.b] {
        if let (Some(t), Some(reason)) = (s.blow_up_t, &s.blow_up) {
            return Err(CliError::BlowUp { t, reason: format!("{:?} run: {reason}", s.controller) });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config_hash: String,
    /// RMS gap between the offline differentiator and the true velocity.
    pub red_velocity_rms_error: f64,
    pub performance: PerformanceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reachability: Option<ReachabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precondition: Option<String>,
}

/// Recomputes indices for a stored run and, for surface-based controllers,
/// the Lyapunov or reachability check. Writes `analysis.toml`.
pub fn cmd_analyze(dir: &Path, window: Option<(f64, f64)>, beta: f64) -> Result<AnalysisReport, CliError> {
    let run = load_run(dir)?;
    let cfg = &run.config;
    let tr = &run.trace;
    let performance = performance_indices(tr, window.unwrap_or_else(|| analysis_window(cfg)), cfg.plant.stroke)?;
    let vel = red_velocity(tr, &RedGains::default())?;
    let qd = tr.column("q_dot_true").unwrap_or_default();
    let red_velocity_rms_error =
        (vel.iter().zip(&qd).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / vel.len().max(1) as f64).sqrt();
    let mut report = AnalysisReport {
        config_hash: tr.meta.config_hash.clone(),
        red_velocity_rms_error,
        performance,
        lyapunov: None,
        reachability: None,
        precondition: None,
    };
    if let Some(g) = &run.gains {
        let d = &g.surface;
        match cfg.controller {
            ControllerKind::Issta => {
                let first = lyapunov_check(tr, &cfg.plant, d, beta, 0.5, 0.0)?;
                report.lyapunov = Some(lyapunov_check(tr, &cfg.plant, d, beta, 0.5, 1e-5 * first.v_max)?);
            }
            ControllerKind::Relay => {
                let c_e2 = qd.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
                let band = 2.0 * cfg.relay.k_s * tr.meta.dt;
                match reachability_check(tr, cfg.relay.k_s, 0.0, d.kappa, c_e2, band) {
                    Ok(r) => report.reachability = Some(r),
                    Err(e) => report.precondition = Some(e.to_string()),
                }
            }
            ControllerKind::Vgsta => {}
        }
    }
    fs::write(dir.join("analysis.toml"), to_toml(&report)?)?;
    let p = &report.performance;
    println!(
        "window [{}, {}]: M_e {:.5e}  mu_e {:.5e}  sigma_e {:.5e}  ISE {:.5e}  {:.3}% of stroke",
        p.window.0, p.window.1, p.m_e, p.mu_e, p.sigma_e, p.ise, p.steady_state_pct
    );
    println!("differentiator velocity RMS error {:.4e} m/s", report.red_velocity_rms_error);
    if let Some(l) = &report.lyapunov {
        println!(
            "Lyapunov: {} violations over {} checked samples, final |e| {:.4e}, ultimate bound {:.4e}",
            l.violations.len(),
            l.checked,
            l.final_norm,
            l.ultimate_bound
        );
    }
    if let Some(r) = &report.reachability {
        println!("reachability: K_bar {:.4}, {} violations over {} checked samples", r.k_bar, r.violations.len(), r.checked);
    }
    if let Some(m) = &report.precondition {
        println!("reachability precondition: {m}");
    }
    println!("wrote {}", dir.join("analysis.toml").display());
    Ok(report)
}

/// Prediction at `t_s` plus `(T_s, phi_d)` over the decade below it.
pub fn cmd_chatter(c: &CommonArgs, t_s: Option<f64>, omega: f64) -> Result<(ChatterPrediction, Vec<(f64, f64)>), CliError> {
    let cfg = resolve_config(c)?;
    let s = cfg.sta;
    let t_s = t_s.unwrap_or(1.0 / cfg.synthesis.input.h_fast);
    let p = chatter_predict(s.k1, s.k2, s.rho, s.l, t_s, omega)?;
    let sweep = (0..=10)
        .map(|i| {
            let ts = t_s * 10f64.powf(-(i as f64) / 10.0);
            chatter_predict(s.k1, s.k2, s.rho, s.l, ts, omega).map(|q| (ts, q.phi_d))
        })
        .collect::<Result<Vec<_>, _>>()?;
    println!("gamma_a {:.6}  a1 {:.6e}  a_y {:.6e}  phi_d {:.6} rad  (T_s {t_s}, omega {omega})", p.gamma_a, p.a1, p.a_y, p.phi_d);
    println!("quadratic residual {:.3e}", p.residual());
    println!("{:>12}  {:>12}", "T_s", "phi_d");
    for (ts, phi) in &sweep {
        println!("{ts:>12.5e}  {phi:>12.6}");
    }
    Ok((p, sweep))
}

pub fn cmd_plot(dir: &Path) -> Result<PathBuf, CliError> {
    let run = load_run(dir)?;
    let path = dir.join(crate::workspace::PANELS_FILE);
    plot::run_panels(&run.trace, &path)?;
    println!("wrote {}", path.display());
    Ok(path)
}
