//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Matrix3, Matrix4, RowVector3, SymmetricEigen, Vector3, Vector4};

use issta::analysis::chatter_predict;
use issta::config::{ControllerKind, ScenarioConfig};
use issta::hydraulic_plant::jacobian_check;
use issta::issta_controller::{design_sta_gains, flow_lyapunov, sta_lyapunov, sym2_eigenvalues, Measurement};
use issta::sim_engine::{replay_controller, run, run_reduced_sta, SimTrace};
use issta_cli::commands::{compare_configs, REFERENCE_LAMBDA_MAX};
use issta_cli::workspace::TRACE_FILE;
use issta_cli::{run_sweep, write_gains, CommonArgs, Sweep, Workspace};

const K1: f64 = 1.1;
const K2: f64 = 2.028;
const L: f64 = 1.347;
const RHO: f64 = 10.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn args(out: &std::path::Path, preset: &str) -> CommonArgs {
    CommonArgs { config: None, preset: Some(preset.into()), seed: None, out: out.to_path_buf(), controller: None }
}

fn lmi_certificate() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (file, _, _, _) = write_gains(&args(tmp.path(), "benchmark")).expect("synthesis");
    let secs = start.elapsed().as_secs_f64();

    let cfg = ScenarioConfig::benchmark();
    let d = &file.surface;
    let inp = d.input;
    let y = Matrix3::from_fn(|i, j| d.y[i][j]);
    let m = y.try_inverse().unwrap();
    let m = (m + m.transpose()) * 0.5;
    let k = RowVector3::new(d.k[0], d.k[1], d.k[2]);
    let mut a = Matrix3::zeros();
    a[(0, 1)] = 1.0;
    a[(1, 1)] = -cfg.plant.sigma / cfg.plant.m;
    a[(1, 2)] = 1.0;
    let b = Vector3::new(0.0, 0.0, 1.0);
    let mut h = Matrix3::zeros();
    h[(1, 1)] = 1.0;
    let bk = b * k;
    let lhs = m * a + a.transpose() * m - bk.transpose() * m - m * bk + (h.transpose() * m + m * h) * inp.psi;
    let y_min = SymmetricEigen::new(y).eigenvalues.min();
    let lmi_max = SymmetricEigen::new(lhs).eigenvalues.max();
    let a_norm = a.singular_values().max();
    let tan = inp.theta.tan();
    let eigs = (a - bk).complex_eigenvalues();
    let region = eigs
        .iter()
        .all(|l| l.re <= -inp.h_slow + 1e-6 && l.re >= -inp.h_fast - 1e-6 && l.im.abs() <= tan * l.re.abs() + 1e-6);
    let pass = y_min > 0.0 && lmi_max < -1e-8 * a_norm && region && secs < 10.0;
    let eig_txt: Vec<String> = eigs.iter().map(|l| format!("{:.4}{:+.4}i", l.re, l.im)).collect();
    outcome(
        pass,
        format!(
            "lambda_min(Y) = {y_min:.3e}, lambda_max(LMI) = {lmi_max:.3e} (bound {:.3e}), eigenvalues [{}] in region: {region}, synthesis {secs:.3} s",
            -1e-8 * a_norm,
            eig_txt.join(", ")
        ),
    )
}

fn sta_gain_math() -> Outcome {
    let m = sta_lyapunov(K1, K2).unwrap();
    // A^T M + M A = -I for A = [[-k1, 1], [-k2, 0]], unknowns (m11, m12, m21, m22).
    let a = [[-K1, 1.0], [-K2, 0.0]];
    let mut sys = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let row = 2 * i + j;
            for k in 0..2 {
                sys[(row, 2 * k + j)] += a[k][i];
                sys[(row, 2 * i + k)] += a[k][j];
            }
        }
    }
    let rhs = Vector4::new(-1.0, 0.0, 0.0, -1.0);
    let x = sys.lu().solve(&rhs).unwrap();
    let oracle = [[x[0], x[1]], [x[2], x[3]]];
    let max_err = (0..4).map(|i| (m[i / 2][i % 2] - oracle[i / 2][i % 2]).abs()).fold(0.0, f64::max);
    let (_, lmax) = sym2_eigenvalues(&m);
    let gains = design_sta_gains(K1, K2, L, RHO);
    let threshold = 2.0 * L * lmax;
    let pass = max_err <= 1e-12 && gains.is_ok() && RHO > threshold;
    outcome(
        pass,
        format!(
            "max entry error vs linear-system oracle {max_err:.2e}; lambda_max(M_k) = {lmax:.6} vs reference {REFERENCE_LAMBDA_MAX} (discrepancy {:+.4}); rho = {RHO} > 2 L lambda_max = {threshold:.4}",
            lmax - REFERENCE_LAMBDA_MAX
        ),
    )
}

fn reduced_sta() -> Outcome {
    let start = Instant::now();
    let g = design_sta_gains(K1, K2, L, RHO).unwrap();
    let rho = 1.05 * g.rho_threshold();
    let dt = 1e-4;
    let square = move |t: f64| if (t * 2.0).floor() as i64 % 2 == 0 { L } else { -L };
    let tr = run_reduced_sta(rho, K1, K2, &square, (1.0, 0.0), dt, 10.0);
    let ball = 10.0 * dt * rho * rho * K2;
    let last_out = tr.s.iter().rposition(|s| s.abs() > ball);
    let settled = match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < tr.s.len() => Some(tr.t[i + 1]),
        Some(_) => None,
    };
    let frac = |m: &[[f64; 2]; 2]| {
        let v = tr.lyapunov(m, rho);
        let outside: Vec<usize> = (0..v.len() - 1).filter(|&i| tr.s[i].abs() > ball).collect();
        let ok = outside.iter().filter(|&&i| v[i + 1] <= v[i]).count();
        ok as f64 / outside.len().max(1) as f64
    };
    let nonincreasing = frac(&g.m_k);
    let flow = frac(&flow_lyapunov(K1, K2).unwrap());
    let secs = start.elapsed().as_secs_f64();
    let pass = settled.is_some() && nonincreasing >= 0.99 && secs < 5.0;
    outcome(
        pass,
        format!(
            "rho = {rho:.4}, ball {ball:.3e}, stays inside from t = {}; xi^T M_k xi nonincreasing at {:.2}% of outside samples (need 99%); flow-matched matrix: {:.2}%; {secs:.2} s",
            settled.map_or("never".into(), |t| format!("{t:.4} s")),
            100.0 * nonincreasing,
            100.0 * flow
        ),
    )
}

fn tracking() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let cfg = ScenarioConfig::benchmark();
    let run = Workspace::new(tmp.path()).simulate(&cfg).expect("benchmark run");
    let secs = start.elapsed().as_secs_f64();
    let p = run.summary.performance.expect("window indices");
    let pass = p.steady_state_pct < 1.0 && p.m_e < 0.05 * cfg.plant.stroke && run.summary.max_u_jump < 0.2 && secs < 60.0;
    outcome(
        pass,
        format!(
            "window [{}, {}] s: mean error {:.4}% of stroke, M_e = {:.3e} m (limit {:.3e}), max |du| = {:.4} (limit 0.2), {secs:.2} s",
            p.window.0,
            p.window.1,
            p.steady_state_pct,
            p.m_e,
            0.05 * cfg.plant.stroke,
            run.summary.max_u_jump
        ),
    )
}

fn velocity_free() -> Outcome {
    // Exhaustive destructuring: a velocity field on the measurement type
    // would break this pattern at compile time.
    let Measurement { q, p } = Measurement { q: 0.0f64, p: 0.0 };
    let _ = (q, p);

    let mut cfg = ScenarioConfig::benchmark();
    cfg.sim.horizon = 3.0;
    cfg.profile = issta::config::ProfileConfig::Segments {
        segments: issta::trajectory_gen::ReferenceProfile::benchmark(0.06f64)
            .segments()
            .iter()
            .filter(|s| s.t_end <= 3.0)
            .copied()
            .collect(),
    };
    let design = issta::sim_engine::synthesize(&cfg).unwrap();
    let trace = issta::sim_engine::run_with_design(&cfg, Some(&design)).unwrap();
    // Scramble every column the law must not read, then replay.
    let mut blind = trace.clone();
    for name in ["q_true", "q_dot_true", "p_true", "r_dot", "e1", "s", "u", "u_tilde", "g", "v_integral", "z_integral"] {
        let i = issta::sim_engine::column_index(name).unwrap();
        for row in &mut blind.rows {
            row[i] = f64::NAN;
        }
    }
    let replay = replay_controller(&cfg, &design, &blind).unwrap();
    let cols = ["u", "u_tilde", "g"].map(|n| trace.column(n).unwrap());
    let identical = replay
        .iter()
        .enumerate()
        .all(|(i, r)| (0..3).all(|c| r[c].to_bits() == cols[c][i].to_bits()));
    outcome(
        identical && replay.len() == trace.len(),
        format!(
            "measurement carries (q, P) only; replay from q_meas, p_meas, r with all other columns set to NaN reproduces u, u_tilde, g bit for bit over {} samples: {identical}",
            replay.len()
        ),
    )
}

fn linearization() -> Outcome {
    let start = Instant::now();
    let params = ScenarioConfig::benchmark().plant;
    let points = [(0.0, 0.0), (0.3, 2.0e6), (-0.5, -3.0e6)];
    let mut worst: f64 = 0.0;
    for (g0, p0) in points {
        let j = jacobian_check(&params, g0, p0).unwrap();
        worst = worst.max(j.max_rel_err);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && secs < 1.0,
        format!("max relative error {worst:.3e} over (g0, P0) in {points:?} (limit 1e-3), {secs:.3} s"),
    )
}

fn baseline_parity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let ws = Workspace::new(tmp.path());
    let a = ScenarioConfig::benchmark();
    let mut b = a.clone();
    b.controller = ControllerKind::Vgsta;
    let (rep, _) = compare_configs(&ws, &a, &b).expect("comparison");
    let issta = rep.a.run.as_ref();
    match (&rep.a.run, &rep.b.run, rep.mu_e_ratio) {
        (Some(x), Some(y), Some(ratio)) => {
            let parity = (0.2..=5.0).contains(&ratio);
            let amp = if y.max_abs_u >= x.max_abs_u { "holds" } else { "violated (informational)" };
            outcome(
                parity,
                format!(
                    "smooth-segment mu_e IS-STA {:.3e}, VG-STA {:.3e}, ratio {ratio:.3} (need within 5x); max|u| VG-STA {:.4} >= IS-STA {:.4}: {amp}",
                    x.smooth_mu_e, y.smooth_mu_e, y.max_abs_u, x.max_abs_u
                ),
            )
        }
        _ => outcome(
            false,
            format!(
                "VG-STA run {}; IS-STA run {} (smooth mu_e {}, max|u| {})",
                rep.b.blow_up_t.map_or("completed".into(), |t| format!("blew up at t = {t:.4} s: {}", rep.b.blow_up.clone().unwrap_or_default())),
                rep.a.blow_up_t.map_or("completed".into(), |t| format!("blew up at t = {t:.4} s")),
                issta.map_or("-".into(), |r| format!("{:.3e}", r.smooth_mu_e)),
                issta.map_or("-".into(), |r| format!("{:.4}", r.max_abs_u)),
            ),
        ),
    }
}

fn rho_sweep() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = Sweep { key: "rho".into(), values: vec![2.0, 5.0, 10.0, 20.0] };
    let (pts, _) = run_sweep(&args(tmp.path(), "rho-step"), &sweep).expect("sweep");
    let ts: Vec<Option<f64>> = pts.iter().map(|p| p.summary.settling_time).collect();
    let u: Vec<f64> = pts.iter().map(|p| p.summary.max_abs_u).collect();
    let settle_ok = ts.iter().all(Option::is_some) && ts.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap());
    let u_ok = u.windows(2).all(|w| w[1] >= w[0]);
    let ts_txt: Vec<String> = ts.iter().map(|t| t.map_or("none".into(), |t| format!("{t:.4}"))).collect();
    let u_txt: Vec<String> = u.iter().map(|v| format!("{v:.5}")).collect();
    outcome(
        settle_ok && u_ok,
        format!(
            "rho {:?}: settling (2% band) [{}] s nonincreasing: {settle_ok}; max|u| [{}] nondecreasing: {u_ok}",
            sweep.values,
            ts_txt.join(", "),
            u_txt.join(", ")
        ),
    )
}

fn csv(tr: &SimTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    buf
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig::benchmark();
    let (a, b) = (csv(&run(&cfg).unwrap()), csv(&run(&cfg).unwrap()));
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let f1 = std::fs::read(Workspace::new(d1.path()).simulate(&cfg).unwrap().dir.join(TRACE_FILE)).unwrap();
    let f2 = std::fs::read(Workspace::new(d2.path()).simulate(&cfg).unwrap().dir.join(TRACE_FILE)).unwrap();
    let pass = a == b && f1 == f2 && a == f1;
    outcome(pass, format!("two in-memory runs and two stored runs, {} bytes each, identical: {pass}", a.len()))
}

fn describing_function() -> Outcome {
    let mut worst: f64 = 0.0;
    for &ts in &[0.2, 0.05, 1e-2, 1e-3] {
        for &w in &[10.0, 100.0, 1000.0] {
            worst = worst.max(chatter_predict(K1, K2, RHO, L, ts, w).unwrap().residual());
        }
    }
    let t0 = 0.2;
    let phis: Vec<f64> = (0..=20)
        .map(|i| chatter_predict(K1, K2, RHO, L, t0 * 10f64.powf(-(i as f64) / 20.0), 100.0).unwrap().phi_d)
        .collect();
    let monotone = phis.windows(2).all(|w| w[1] < w[0]) && phis.iter().all(|p| *p >= 0.0);
    let tiny = chatter_predict(K1, K2, RHO, L, 1e-5, 100.0).unwrap().phi_d;
    let pass = worst < 1e-10 && monotone && tiny < phis[20];
    outcome(
        pass,
        format!(
            "worst quadratic residual {worst:.2e} (limit 1e-10); phi_d from {:.5} at T_s = {t0} to {:.5} at T_s = {} strictly decreasing: {monotone}; phi_d(1e-5) = {tiny:.3e}",
            phis[0],
            phis[20],
            t0 / 10.0
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("LMI certificate", lmi_certificate),
        ("STA gain math", sta_gain_math),
        ("reduced STA convergence", reduced_sta),
        ("closed-loop tracking", tracking),
        ("velocity freedom", velocity_free),
        ("linearization consistency", linearization),
        ("baseline parity", baseline_parity),
        ("rho sweep", rho_sweep),
        ("determinism", determinism),
        ("describing function", describing_function),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        let tag = if res.pass { "PASS" } else { "FAIL" };
        println!("criterion {:2}: {tag} [{:6.2} s] {name}: {}", i + 1, start.elapsed().as_secs_f64(), res.detail);
        if !res.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!("acceptance: {} of {} criteria fail: {failed:?}", failed.len(), criteria.len());
        std::process::exit(1);
    }
}
