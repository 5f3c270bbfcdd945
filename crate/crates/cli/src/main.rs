//! Experiment harness for the two-path routing model: solvers, baselines,
//! incentive audits, learners, and scripted reproduction runs, all emitting
//! plot-ready CSV plus a JSON metadata sidecar. Outputs are deterministic
//! given the configuration and seed.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;
use pathrec_core::baselines::{
    poa_sweep_csv, random_poa_sweep, value_myopic, value_no_info, worst_case_instance_myopic,
    worst_case_instance_no_info,
};
use pathrec_core::grid::BeliefGrid;
use pathrec_core::irm::{ic_audit, stationary_belief_distribution, ICReport, SimConfig};
use pathrec_core::model::{Action, ModelParams, Observation, PathState};
use pathrec_core::multipath::{ic_scan_3path, policy_map_3, solve_3path, ScanAxis3};
use pathrec_core::qlearn::{
    asymptotic_q, ic_check, ic_regime_scan, policy_from_q, qlearning_online, regime_csv,
    solve_window_policy_values, stationary_window_distribution, window_for_belief,
    LearningSchedule, ObservationWindow, QTable, ScanAxis, WindowPolicy,
};
use pathrec_core::sim::{
    estimate_discounted_cost, run_episode, FixedPolicy, GreedyValuePolicy, MyopicPolicy,
    RecommendationPolicy,
};
use pathrec_core::solver::{
    extract_policy, find_threshold, solution_csv, solve_value_function, verify_shape,
};
use pathrec_core::verify;

#[derive(Parser)]
#[command(
    name = "pathrec",
    version,
    about = "Solvers, baselines, audits, and learners for routing between a deterministic path and partially observed stochastic paths"
)]
struct Cli {
    /// TOML experiment configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Flat key=value model parameter file; overrides the [model] block.
    #[arg(long, global = true)]
    model_kv: Option<PathBuf>,

    /// Seed override for anything stochastic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal value function and export it with its policy.
    Solve,
    /// Monte Carlo evaluation of a policy from a starting belief.
    Evaluate {
        /// Policy source: optimal | myopic | noinfo | qlearn:K
        #[arg(long, default_value = "optimal")]
        policy: String,
        /// Starting belief.
        #[arg(long, default_value_t = 0.5)]
        x0: f64,
        /// Also dump one seeded episode as CSV.
        #[arg(long)]
        dump_trajectory: bool,
    },
    /// Randomized price-of-anarchy sweep plus the worst-case generators.
    Poa {
        /// Number of random instances.
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
    /// Incentive audit of a recommendation policy under hidden history.
    IrmAudit {
        /// Policy source: optimal | myopic | qlearn:K
        #[arg(long, default_value = "optimal")]
        policy: String,
    },
    /// Train the online window learner and compare it to its fixed point.
    QlearnOnline {
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 10_000_000)]
        epochs: u64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.6)]
        omega: f64,
    },
    /// Solve the asymptotic window Q system exactly.
    QlearnAsymptotic {
        #[arg(long, default_value_t = 2)]
        k: u32,
    },
    /// Incentive-regime scan along one parameter axis.
    IcScan {
        #[arg(long, value_enum, default_value_t = AxisArg::Cm)]
        axis: AxisArg,
    },
    /// Solve the three-path model and export its policy map.
    MultipathSolve {
        /// Nodes per axis of the belief square.
        #[arg(long, default_value_t = 100)]
        grid_n: usize,
    },
    /// Re-run a scripted experiment at its reference settings.
    Reproduce {
        #[arg(value_enum)]
        target: ReproduceTarget,
    },
    /// Run the full verification suite; nonzero exit on any failure.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Cm,
    Q,
    Beta,
}

impl AxisArg {
    fn to_axis(self) -> ScanAxis {
        match self {
            AxisArg::Cm => ScanAxis::CM,
            AxisArg::Q => ScanAxis::Q,
            AxisArg::Beta => ScanAxis::Beta,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReproduceTarget {
    Fig2,
    Fig3a,
    Fig3b,
    Fig3c,
    Fig4,
    Table1,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &cli.model_kv {
        config.load_model_kv(path)?;
    }
    if let Some(seed) = cli.seed {
        config.sim.seed = seed;
    }
    config.validate()?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match &cli.command {
        Command::Solve => cmd_solve(&cli.out, &config),
        Command::Evaluate {
            policy,
            x0,
            dump_trajectory,
        } => cmd_evaluate(&cli.out, &config, policy, *x0, *dump_trajectory),
        Command::Poa { count } => cmd_poa(&cli.out, &config, *count),
        Command::IrmAudit { policy } => cmd_irm_audit(&cli.out, &config, policy),
        Command::QlearnOnline {
            k,
            epochs,
            epsilon,
            omega,
        } => cmd_qlearn_online(&cli.out, &config, *k, *epochs, *epsilon, *omega),
        Command::QlearnAsymptotic { k } => cmd_qlearn_asymptotic(&cli.out, &config, *k),
        Command::IcScan { axis } => cmd_ic_scan(&cli.out, &config, axis.to_axis()),
        Command::MultipathSolve { grid_n } => cmd_multipath_solve(&cli.out, &config, *grid_n),
        Command::Reproduce { target } => cmd_reproduce(&cli.out, &config, *target),
        Command::Verify => cmd_verify(&cli.out, &config),
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_meta(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    extra: serde_json::Value,
) -> Result<()> {
    let params = config.params()?;
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "model": params,
        "solver": { "grid_n": config.solver.grid_n, "tol": config.solver.tol },
        "seed": config.sim.seed,
        "results": extra,
    });
    write_file(dir, &format!("{command}.meta.json"), &format!("{meta:#}\n"))
}

fn grid_of(config: &ExperimentConfig) -> BeliefGrid {
    BeliefGrid::new(config.solver.grid_n)
}

fn horizon_of(config: &ExperimentConfig, params: &ModelParams) -> u32 {
    config
        .sim
        .horizon
        .unwrap_or_else(|| pathrec_core::sim::default_horizon(params))
}

// --- solve -------------------------------------------------------------------

fn cmd_solve(out: &Path, config: &ExperimentConfig) -> Result<ExitCode> {
    let params = config.params()?;
    let grid = grid_of(config);
    let (v, iterations) = solve_value_function(&params, &grid, config.solver.tol);
    let policy = extract_policy(&v, &params);
    let shape = verify_shape(&v);
    let threshold = find_threshold(&policy);
    write_file(out, "solution.csv", &solution_csv(&v, &params))?;
    write_meta(
        out,
        "solve",
        config,
        serde_json::json!({
            "iterations": iterations,
            "threshold": threshold,
            "max_monotonicity_violation": shape.max_monotonicity_violation,
            "max_concavity_violation": shape.max_concavity_violation,
        }),
    )?;
    println!(
        "solved in {iterations} iterations; threshold {threshold:?}; shape violations ({:.2e}, {:.2e})",
        shape.max_monotonicity_violation, shape.max_concavity_violation
    );
    Ok(ExitCode::SUCCESS)
}

// --- evaluate ------------------------------------------------------------------

enum PolicySource {
    Optimal,
    Myopic,
    NoInfo,
    Qlearn(u32),
}

fn parse_policy(text: &str) -> Result<PolicySource> {
    match text {
        "optimal" => Ok(PolicySource::Optimal),
        "myopic" => Ok(PolicySource::Myopic),
        "noinfo" => Ok(PolicySource::NoInfo),
        other => {
            if let Some(k) = other.strip_prefix("qlearn:") {
                let k: u32 = k
                    .parse()
                    .with_context(|| format!("bad window length in policy `{other}`"))?;
                if k == 0 {
                    bail!("window length must be at least 1");
                }
                Ok(PolicySource::Qlearn(k))
            } else {
                bail!("unknown policy `{other}` (expected optimal | myopic | noinfo | qlearn:K)")
            }
        }
    }
}

fn cmd_evaluate(
    out: &Path,
    config: &ExperimentConfig,
    policy_text: &str,
    x0: f64,
    dump_trajectory: bool,
) -> Result<ExitCode> {
    if !(0.0..=1.0).contains(&x0) {
        bail!("x0 must lie in [0, 1], got {x0}");
    }
    let params = config.params()?;
    let grid = grid_of(config);
    let horizon = horizon_of(config, &params);
    let seed = config.sim.seed;
    let source = parse_policy(policy_text)?;

    let mut csv = String::from(
        "policy,x0,mc_mean,mc_halfwidth_3sigma,n_runs,truncation_bound,reference_value\n",
    );
    let summary;
    match source {
        PolicySource::Qlearn(k) => {
            // Window policies are evaluated exactly on the (window, belief)
            // chain and cross-checked by a window-driven simulation.
            let (table, _) = asymptotic_q(&params, k, config.solver.tol);
            let policy = policy_from_q(&table);
            let exact = solve_window_policy_values(&policy, &params, &grid, config.solver.tol)
                .cost_at(x0, &params);
            let (mean, halfwidth, truncation) =
                simulate_window_policy(&policy, &params, x0, config.sim.runs, horizon, seed);
            csv.push_str(&format!(
                "{policy_text},{x0},{mean},{halfwidth},{},{truncation},{exact}\n",
                config.sim.runs
            ));
            summary =
                format!("window policy K={k}: exact {exact:.6}, mc {mean:.6} +- {halfwidth:.1e}");
        }
        _ => {
            let (v, _) = solve_value_function(&params, &grid, config.solver.tol);
            let (policy, reference): (Box<dyn RecommendationPolicy>, f64) = match source {
                PolicySource::Optimal => (
                    Box::new(GreedyValuePolicy { value: &v, params }),
                    v.eval(x0),
                ),
                PolicySource::Myopic => {
                    let (vm, _) = value_myopic(&params, &grid, config.solver.tol)
                        .context("myopic policy undefined")?;
                    (Box::new(MyopicPolicy { params }), vm.eval(x0))
                }
                PolicySource::NoInfo => {
                    let action = pathrec_core::baselines::policy_no_info(&params);
                    (Box::new(FixedPolicy { action }), value_no_info(x0, &params))
                }
                PolicySource::Qlearn(_) => unreachable!(),
            };
            let est = estimate_discounted_cost(
                policy.as_ref(),
                &params,
                x0,
                config.sim.runs,
                horizon,
                seed,
            );
            csv.push_str(&format!(
                "{policy_text},{x0},{},{},{},{},{reference}\n",
                est.mean, est.halfwidth_3sigma, est.n_runs, est.truncation_bound
            ));
            summary = format!(
                "{policy_text}: mc {:.6} +- {:.1e} vs reference {reference:.6}",
                est.mean, est.halfwidth_3sigma
            );
            if dump_trajectory {
                let traj = run_episode(policy.as_ref(), &params, horizon, seed, x0);
                write_file(out, "trajectory.csv", &traj.to_csv())?;
            }
        }
    }
    write_file(out, "evaluate.csv", &csv)?;
    write_meta(
        out,
        "evaluate",
        config,
        serde_json::json!({ "summary": summary }),
    )?;
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}

/// Seeded simulation of a window policy, returning the sample mean, a
/// 3-sigma halfwidth, and the truncation bound. The platform acts on the
/// observation window; the hidden chain runs underneath.
fn simulate_window_policy(
    policy: &WindowPolicy,
    params: &ModelParams,
    x0: f64,
    runs: u32,
    horizon: u32,
    seed: u64,
) -> (f64, f64, f64) {
    use rand::Rng;
    let mut samples = Vec::with_capacity(runs as usize);
    let entry = window_for_belief(x0, policy.k, params);
    for r in 0..runs {
        let mut rng = pathrec_core::sim::replica_rng(seed, u64::from(r));
        let mut state = if rng.random::<f64>() < x0 {
            PathState::High
        } else {
            PathState::Low
        };
        let mut window = entry;
        let mut total = 0.0;
        let mut discount = 1.0;
        for _ in 0..horizon {
            let action = policy.action(&window);
            let obs = pathrec_core::model::sample_observation(state, action, params, &mut rng);
            let cost = match (action, obs) {
                (Action::P2, _) => params.c_m,
                (Action::P1, Observation::Hazard) => params.c,
                (Action::P1, _) => 0.0,
            };
            total += discount * cost;
            discount *= params.beta;
            window = window.shift(obs);
            state = pathrec_core::model::sample_state_transition(state, params, &mut rng);
        }
        samples.push(total);
    }
    let n = f64::from(runs);
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let truncation = if params.beta == 0.0 {
        0.0
    } else {
        params.beta.powi(horizon as i32) * params.c_m / (1.0 - params.beta)
    };
    (mean, 3.0 * (var / n).sqrt(), truncation)
}

// --- poa -----------------------------------------------------------------------

fn cmd_poa(out: &Path, config: &ExperimentConfig, count: usize) -> Result<ExitCode> {
    let rows = random_poa_sweep(
        count,
        config.sim.seed,
        config.solver.grid_n,
        config.solver.tol,
    );
    write_file(out, "poa_sweep.csv", &poa_sweep_csv(&rows))?;
    let best = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);

    let grid = BeliefGrid::new(2001);
    let mut worst_csv = String::from("family,q,c,c_m,beta,x0,ratio,target\n");
    let (p_b, x0_b) = worst_case_instance_myopic(0.9, 1e-3, 0.999, 0.5)?;
    let (v_opt_b, _) = solve_value_function(&p_b, &grid, 1e-10);
    let (v_m_b, _) = value_myopic(&p_b, &grid, 1e-10)?;
    let ratio_b = v_m_b.eval(x0_b) / v_opt_b.eval(x0_b);
    worst_csv.push_str(&format!(
        "myopic,{},{},{},{},{x0_b},{ratio_b},{}\n",
        p_b.q_hh,
        p_b.c,
        p_b.c_m,
        p_b.beta,
        0.9 / (1.0 - p_b.beta)
    ));
    let (p_c, x0_c) = worst_case_instance_no_info(0.9, 0.999, 0.5, None)?;
    let (v_opt_c, _) = solve_value_function(&p_c, &grid, 1e-10);
    let ratio_c = value_no_info(x0_c, &p_c) / v_opt_c.eval(x0_c);
    worst_csv.push_str(&format!(
        "no_info,{},{},{},{},{x0_c},{ratio_c},100\n",
        p_c.q_hh, p_c.c, p_c.c_m, p_c.beta
    ));
    write_file(out, "poa_worst.csv", &worst_csv)?;
    write_meta(
        out,
        "poa",
        config,
        serde_json::json!({
            "sweep_instances": count,
            "sweep_best_ratio": best,
            "myopic_instance_ratio": ratio_b,
            "no_info_instance_ratio": ratio_c,
        }),
    )?;
    println!(
        "sweep best ratio {best:.4}; worst-case instances: myopic {ratio_b:.3}, feedback-free {ratio_c:.1}"
    );
    Ok(ExitCode::SUCCESS)
}

// --- irm-audit -------------------------------------------------------------------

fn report_files(out: &Path, name: &str, report: &ICReport) -> Result<()> {
    write_file(
        out,
        &format!("{name}.json"),
        &format!("{}\n", report.to_json()),
    )?;
    write_file(
        out,
        &format!("{name}.csv"),
        &format!("{}\n{}\n", ICReport::csv_header(), report.to_csv_row()),
    )
}

fn cmd_irm_audit(out: &Path, config: &ExperimentConfig, policy_text: &str) -> Result<ExitCode> {
    let params = config.params()?;
    let grid = grid_of(config);
    let sim = SimConfig {
        burn_in: config.sim.burn_in.max(10_000),
        samples: config.sim.samples.max(1_000_000),
        seed: config.sim.seed,
        batches: 20,
    };
    let report = match parse_policy(policy_text)? {
        PolicySource::Qlearn(k) => {
            // Window recommendations are audited exactly over the stationary
            // window distribution; no Monte Carlo error.
            let (table, _) = asymptotic_q(&params, k, config.solver.tol);
            let policy = policy_from_q(&table);
            let dist = stationary_window_distribution(&policy, &params);
            ic_check(&policy, &dist, &params)
        }
        PolicySource::Optimal => {
            let (v, _) = solve_value_function(&params, &grid, config.solver.tol);
            let policy = GreedyValuePolicy { value: &v, params };
            let dist = stationary_belief_distribution(&policy, &params, &grid, &sim);
            ic_audit(&policy, &dist, &params)
        }
        PolicySource::Myopic => {
            let policy = MyopicPolicy { params };
            let dist = stationary_belief_distribution(&policy, &params, &grid, &sim);
            ic_audit(&policy, &dist, &params)
        }
        PolicySource::NoInfo => {
            bail!("the feedback-free platform reveals nothing to audit; use optimal, myopic, or qlearn:K")
        }
    };
    report_files(out, "irm_audit", &report)?;
    write_meta(
        out,
        "irm-audit",
        config,
        serde_json::json!({ "policy": policy_text, "ic_holds": report.ic_holds() }),
    )?;
    println!(
        "audit of {policy_text}: follows_p1 {} ({:?}), follows_p2 {} ({:?}), lambda {:.5} vs c_m {}",
        report.follows_p1,
        report.verdict_p1,
        report.follows_p2,
        report.verdict_p2,
        report.lambda,
        params.c_m
    );
    Ok(ExitCode::SUCCESS)
}

// --- qlearn -----------------------------------------------------------------------

fn qtable_csv(table: &QTable) -> String {
    let mut out = String::from("window,label,q1,q2,visits1,visits2,action\n");
    for w in ObservationWindow::all(table.k) {
        let [q1, q2] = table.values[w.index()];
        let [n1, n2] = table.visits[w.index()];
        let action = if q1 <= q2 { 1 } else { 2 };
        out.push_str(&format!(
            "{},{},{q1},{q2},{n1},{n2},{action}\n",
            w.index(),
            w.label()
        ));
    }
    out
}

fn cmd_qlearn_online(
    out: &Path,
    config: &ExperimentConfig,
    k: u32,
    epochs: u64,
    epsilon: f64,
    omega: f64,
) -> Result<ExitCode> {
    if !(0.0..=1.0).contains(&epsilon) {
        bail!("epsilon must lie in [0, 1], got {epsilon}");
    }
    if !(omega > 0.5 && omega <= 1.0) {
        bail!("omega must lie in (0.5, 1], got {omega}");
    }
    let params = config.params()?;
    let schedule = LearningSchedule::new(omega);
    let table = qlearning_online(&params, k, &schedule, epsilon, epochs, config.sim.seed);
    write_file(out, "qtable_online.csv", &qtable_csv(&table))?;

    let (reference, _) = asymptotic_q(&params, k, config.solver.tol);
    let learned = policy_from_q(&table);
    let target = policy_from_q(&reference);
    let dist = stationary_window_distribution(&target, &params);
    let agreement: f64 = ObservationWindow::all(k)
        .filter(|w| learned.action(w) == target.action(w))
        .map(|w| dist.window_marginal[w.index()])
        .sum();
    write_meta(
        out,
        "qlearn-online",
        config,
        serde_json::json!({
            "k": k, "epochs": epochs, "epsilon": epsilon, "omega": omega,
            "agreement_with_asymptotic": agreement,
        }),
    )?;
    println!(
        "trained K={k} for {epochs} epochs; mass-weighted agreement with the fixed point {agreement:.4}"
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_qlearn_asymptotic(out: &Path, config: &ExperimentConfig, k: u32) -> Result<ExitCode> {
    let params = config.params()?;
    let (table, stats) = asymptotic_q(&params, k, config.solver.tol);
    write_file(out, "qtable_asymptotic.csv", &qtable_csv(&table))?;
    write_meta(
        out,
        "qlearn-asymptotic",
        config,
        serde_json::json!({
            "k": k, "iterations": stats.iterations, "residual": stats.residual,
        }),
    )?;
    println!(
        "fixed point for K={k}: {} iterations, residual {:.2e}",
        stats.iterations, stats.residual
    );
    Ok(ExitCode::SUCCESS)
}

// --- scans -------------------------------------------------------------------------

fn cmd_ic_scan(out: &Path, config: &ExperimentConfig, axis: ScanAxis) -> Result<ExitCode> {
    let ks: Vec<u32> = (config.scan.k_min..=config.scan.k_max).collect();
    let rows = ic_regime_scan(axis, &ks, config.solver.tol);
    write_file(
        out,
        &format!("ic_scan_{}.csv", axis.name()),
        &regime_csv(&rows),
    )?;
    let mut counts = serde_json::Map::new();
    for &k in &ks {
        let n = rows.iter().filter(|r| r.k == k && r.non_ic).count();
        counts.insert(format!("K{k}"), serde_json::json!(n));
        println!("axis {} K={k}: {n} non-IC points", axis.name());
    }
    write_meta(
        out,
        "ic-scan",
        config,
        serde_json::json!({ "axis": axis.name(), "non_ic_counts": counts }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_multipath_solve(out: &Path, config: &ExperimentConfig, grid_n: usize) -> Result<ExitCode> {
    if grid_n < 2 {
        bail!("grid_n must be at least 2, got {grid_n}");
    }
    let params = config.params()?;
    let axis = BeliefGrid::new(grid_n);
    let (v, stats) = solve_3path(&params, &axis, config.solver.tol);
    let map = policy_map_3(&v, &params);
    write_file(out, "multipath_policy.csv", &map.to_csv())?;
    write_meta(
        out,
        "multipath-solve",
        config,
        serde_json::json!({
            "grid_n": grid_n,
            "iterations": stats.iterations,
            "residual": stats.residual,
            "symmetry_residual": v.symmetry_residual(),
            "mirror_symmetric": map.is_mirror_symmetric(),
        }),
    )?;
    println!(
        "solved {grid_n}x{grid_n} in {} iterations; symmetry residual {:.1e}",
        stats.iterations,
        v.symmetry_residual()
    );
    Ok(ExitCode::SUCCESS)
}

// --- reproduce ----------------------------------------------------------------------

struct Summary {
    lines: Vec<(bool, String)>,
}

impl Summary {
    fn new() -> Self {
        Self { lines: Vec::new() }
    }

    fn check(&mut self, passed: bool, text: String) {
        self.lines.push((passed, text));
    }

    fn finish(self, out: &Path, name: &str) -> Result<ExitCode> {
        let mut text = String::new();
        let mut all = true;
        for (passed, line) in &self.lines {
            all &= passed;
            let rendered = format!("[{}] {line}", if *passed { "PASS" } else { "FAIL" });
            println!("{rendered}");
            text.push_str(&rendered);
            text.push('\n');
        }
        write_file(out, &format!("{name}_summary.txt"), &text)?;
        Ok(if all {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(2)
        })
    }
}

fn cmd_reproduce(
    out: &Path,
    config: &ExperimentConfig,
    target: ReproduceTarget,
) -> Result<ExitCode> {
    match target {
        ReproduceTarget::Fig2 => reproduce_fig2(out, config),
        ReproduceTarget::Fig3a => reproduce_fig3(out, ScanAxis::CM, "fig3a"),
        ReproduceTarget::Fig3b => reproduce_fig3(out, ScanAxis::Q, "fig3b"),
        ReproduceTarget::Fig3c => reproduce_fig3(out, ScanAxis::Beta, "fig3c"),
        ReproduceTarget::Fig4 => reproduce_fig4(out),
        ReproduceTarget::Table1 => reproduce_table1(out),
    }
}

fn reproduce_fig2(out: &Path, config: &ExperimentConfig) -> Result<ExitCode> {
    let params = ModelParams::symmetric(0.9, 0.9, 1.0, 0.5, 0.9).unwrap();
    let grid = grid_of(config);
    let (v_opt, _) = solve_value_function(&params, &grid, config.solver.tol);
    let mut csv = String::from("x0,K,cost,optimal_cost\n");
    let mut summary = Summary::new();
    let mut max_gaps = Vec::new();
    let mut argmax_k1 = 0.0f64;
    let mut min_gap = f64::INFINITY;
    for k in 1..=4u32 {
        let (table, _) = asymptotic_q(&params, k, config.solver.tol);
        let policy = policy_from_q(&table);
        let values = solve_window_policy_values(&policy, &params, &grid, config.solver.tol);
        let mut max_gap = f64::NEG_INFINITY;
        let mut argmax = 0.0;
        for i in 0..=100 {
            let x0 = i as f64 / 100.0;
            let cost = values.cost_at(x0, &params);
            let opt = v_opt.eval(x0);
            csv.push_str(&format!("{x0},{k},{cost},{opt}\n"));
            let gap = cost - opt;
            min_gap = min_gap.min(gap);
            if gap > max_gap {
                max_gap = gap;
                argmax = x0;
            }
        }
        if k == 1 {
            argmax_k1 = argmax;
        }
        max_gaps.push(max_gap);
    }
    write_file(out, "fig2.csv", &csv)?;
    summary.check(
        min_gap >= -1e-6,
        format!("learned-policy cost never below optimal (min gap {min_gap:.2e})"),
    );
    summary.check(
        max_gaps[0] > max_gaps[1] && max_gaps[1] > max_gaps[2],
        format!(
            "worst-case gap strictly shrinks over K=1..3 ({:.4} > {:.4} > {:.4})",
            max_gaps[0], max_gaps[1], max_gaps[2]
        ),
    );
    summary.check(
        argmax_k1 <= 0.1 || argmax_k1 >= 0.9,
        format!("K=1 gap peaks at a belief extreme (argmax {argmax_k1})"),
    );
    summary.finish(out, "fig2")
}

fn reproduce_fig3(out: &Path, axis: ScanAxis, name: &str) -> Result<ExitCode> {
    let ks = [1, 2, 3, 4, 5, 6];
    let rows = ic_regime_scan(axis, &ks, 1e-9);
    write_file(out, &format!("{name}.csv"), &regime_csv(&rows))?;
    let count = |k: u32| rows.iter().filter(|r| r.k == k && r.non_ic).count();
    let counts: Vec<usize> = ks.iter().map(|&k| count(k)).collect();
    let mut summary = Summary::new();
    summary.check(
        count(4) <= count(1),
        format!(
            "non-IC set shrinks from K=1 to K=4 on the {} axis (counts by K: {counts:?})",
            axis.name()
        ),
    );
    summary.check(
        count(6) == 0,
        format!("non-IC set empty at K=6 ({} points remain)", count(6)),
    );
    summary.finish(out, name)
}

fn reproduce_fig4(out: &Path) -> Result<ExitCode> {
    let params = ModelParams::symmetric(0.9, 0.9, 1.0, 0.7, 0.9).unwrap();
    let axis = BeliefGrid::new(100);
    let (v, _) = solve_3path(&params, &axis, 1e-9);
    let map = policy_map_3(&v, &params);
    write_file(out, "fig4.csv", &map.to_csv())?;
    let n = axis.len();
    let at = |x: f64, y: f64| {
        map.action(
            (x * (n - 1) as f64).round() as usize,
            (y * (n - 1) as f64).round() as usize,
        )
    };
    use pathrec_core::multipath::Action3;
    let mut summary = Summary::new();
    summary.check(
        at(0.05, 0.95) == Action3::P1
            && at(0.95, 0.05) == Action3::P1Alt
            && at(0.95, 0.95) == Action3::P2,
        "three policy regions in place (each stochastic path where it is cheap, the deterministic one in the high-high corner)"
            .into(),
    );
    summary.check(
        map.is_mirror_symmetric(),
        "action map mirror-symmetric".into(),
    );
    let residual = v.symmetry_residual();
    summary.check(
        residual < 1e-8,
        format!("value symmetry residual {residual:.1e} < 1e-8"),
    );
    summary.finish(out, "fig4")
}

fn reproduce_table1(out: &Path) -> Result<ExitCode> {
    let ks = [1, 2, 3, 4];
    let mut cells = String::from("axis,axis_value,K,ic_holds\n");
    let mut summary_csv = String::from("axis,K,holds_everywhere,fail_count,range_lo,range_hi\n");
    let mut summary = Summary::new();
    for axis in [ScanAxis3::CM, ScanAxis3::Q, ScanAxis3::Beta] {
        let rows = ic_scan_3path(axis, &ks, 1e-9)?;
        for r in &rows {
            cells.push_str(&format!(
                "{},{},{},{}\n",
                axis.name(),
                r.axis_value,
                r.k,
                r.ic_holds
            ));
        }
        let values = axis.values();
        let (lo, hi) = (values[0], values[values.len() - 1]);
        for &k in &ks {
            let fails = rows.iter().filter(|r| r.k == k && !r.ic_holds).count();
            summary_csv.push_str(&format!(
                "{},{k},{},{fails},{lo},{hi}\n",
                axis.name(),
                fails == 0
            ));
            summary.check(
                fails == 0,
                format!(
                    "three-path IC holds across the {} row at K={k} ({fails} failures)",
                    axis.name()
                ),
            );
        }
    }
    write_file(out, "table1_cells.csv", &cells)?;
    write_file(out, "table1.csv", &summary_csv)?;
    summary.finish(out, "table1")
}

// --- verify --------------------------------------------------------------------------

fn cmd_verify(out: &Path, config: &ExperimentConfig) -> Result<ExitCode> {
    let reports = verify::run_all(config.sim.seed, |r| println!("{}", r.line()));
    write_file(out, "verify_report.csv", &verify::report_csv(&reports))?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} criteria passed", reports.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failed}/{} criteria failed", reports.len());
        Ok(ExitCode::from(2))
    }
}
