//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dn_map::{dn_derivatives, DnData, Window};
use crate::error::{Error, Result};
use crate::forward::{build_barrier, linf_bound_check, LinfReport, NonlinearSolver};
use crate::grid::ScalarField;
use crate::inversion::reconstruct_all;
use crate::io::{read_dn_data, write_dn_data, write_fields_csv, write_json};
use crate::nonlocal::assemble_magnetic;
use crate::oracle::{
    adjointness_oracle, barrier_oracle, factorization_oracle, fd_cascade_oracle, getoor_oracle, symbol_oracle,
    OracleReport,
};
use crate::potentials::{
    check_admissibility, gauge_equivalent, gauge_gap, gauge_partner, AdmissibilityReport, PotentialPreset, GAUGE_TOL,
};

#[derive(Debug, Parser)]
#[command(name = "fracmag", version, about = "Fractional magnetic Schrödinger forward and inverse solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check admissibility and gauge self-consistency.
    Check,
    /// Solve the forward problem for the configured exterior datum.
    Solve,
    /// Compute DN derivatives over the configured bases.
    Dnmap,
    /// Recover c_2..c_K from a DN data file and the linear part only.
    Reconstruct {
        /// DN data file; defaults to `<out>/dn_data.txt`.
        #[arg(long)]
        dn: Option<PathBuf>,
    },
    /// Run an independent reference check.
    Oracle {
        #[arg(value_enum)]
        name: OracleName,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleName {
    Symbol,
    Getoor,
    Adjointness,
    Factorization,
    FdCascade,
    Barrier,
    All,
}

/// Parse, run and map the outcome to an exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{}: {e}", e.class());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cfg.output_dir(cli.out.as_deref());
    match &cli.command {
        Command::Check => cmd_check(&cfg, &out),
        Command::Solve => cmd_solve(&cfg, &out).map(|_| 0),
        Command::Dnmap => cmd_dnmap(&cfg, &out).map(|_| 0),
        Command::Reconstruct { dn } => {
            let dn = dn.clone().unwrap_or_else(|| out.join("dn_data.txt"));
            cmd_reconstruct(&cfg, &dn, &out).map(|_| 0)
        }
        Command::Oracle { name } => cmd_oracle(&cfg, *name, &out),
    }
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub failures: Vec<String>,
    pub admissibility: AdmissibilityReport,
    pub gauge_self_gap: (f64, f64),
    pub gauge_partner_equivalent: bool,
    pub gauge_partner_operator_gap: f64,
}

/// Exit 0 when every condition holds, 2 otherwise.
pub fn cmd_check(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let grid = cfg.grid()?;
    let a = cfg.potential(&grid)?;
    let nl = cfg.nonlinearity.build(&grid)?;
    let adm = check_admissibility(&a, &nl, &grid, cfg.s)?;
    let mut failures: Vec<String> = adm.failures().iter().map(|s| s.to_string()).collect();
    let q = nl.q().clone();
    let self_gap = gauge_gap((&a, &q), (&a, &q), &grid, cfg.s)?;
    // symmetric modification supported in the domain: same antisymmetric parallel part
    let (lo, hi) = grid.spec().omega.bounds();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let radius = 0.5 * lo.iter().zip(&hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    let mut vector = vec![0.0; grid.dim()];
    vector[0] = 0.1;
    let delta = PotentialPreset::BumpProduct { vector, center, radius }.build(&grid)?;
    let (a2, q2) = gauge_partner(&a, &q, &delta, &grid, cfg.s)?;
    let equivalent = gauge_equivalent((&a, &q), (&a2, &q2), &grid, cfg.s, GAUGE_TOL)?;
    let m1 = assemble_magnetic(&grid, cfg.s, &a, Some(&q))?;
    let m2 = assemble_magnetic(&grid, cfg.s, &a2, Some(&q2))?;
    let op_gap = (&m1.matrix - &m2.matrix).amax() / m1.norm_inf();
    if self_gap.0 != 0.0 || self_gap.1 != 0.0 {
        failures.push("gauge self-consistency".into());
    }
    if !equivalent || op_gap > GAUGE_TOL {
        failures.push("gauge partner".into());
    }
    let report = CheckReport {
        passed: failures.is_empty(),
        failures: failures.clone(),
        admissibility: adm,
        gauge_self_gap: self_gap,
        gauge_partner_equivalent: equivalent,
        gauge_partner_operator_gap: op_gap,
    };
    write_json(&out.join("check_report.json"), &report)?;
    if report.passed {
        info!("all admissibility and gauge checks pass");
        Ok(0)
    } else {
        error!("violated conditions: {}", failures.join(", "));
        Ok(2)
    }
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub contraction_estimate: Option<f64>,
    pub residual_inf: f64,
    pub max_abs_u: f64,
    pub linear: bool,
    pub barrier_min: f64,
    pub linf: LinfReport,
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<SolveReport> {
    let grid = cfg.grid()?;
    let a = cfg.potential(&grid)?;
    let nl = cfg.nonlinearity.build(&grid)?;
    let g = cfg.data_field(&grid)?;
    let solver = NonlinearSolver::new(&grid, cfg.s, &a, &nl, &cfg.solver)?;
    let sol = solver.solve(&g)?;
    info!(
        "converged in {} iterations; contraction factor {}",
        sol.iterations,
        sol.contraction_estimate.map_or("n/a".into(), |c| format!("{c:.4e}"))
    );
    // the solution solves the linear problem with source q u - a(u)
    let au = nl.eval_a(&sol.u)?;
    let q = nl.q();
    let f = ScalarField((0..grid.len()).map(|k| q[k] * sol.u[k] - au[k]).collect());
    let barrier = build_barrier(&grid, cfg.s, &a, q)?;
    let linf = linf_bound_check(&grid, &sol, &f, &g, &barrier, 1e-6);
    let all: Vec<usize> = (0..grid.len()).collect();
    write_fields_csv(&out.join("solution.csv"), &grid, &all, &[("g", &g), ("u", &sol.u)])?;
    let report = SolveReport {
        iterations: sol.iterations,
        contraction_estimate: sol.contraction_estimate,
        residual_inf: sol.residual_inf,
        max_abs_u: sol.u.max_abs(),
        linear: nl.is_linear(),
        barrier_min: barrier.achieved,
        linf,
    };
    write_json(&out.join("solve_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct DnReport {
    pub order: usize,
    pub eps_base: f64,
    pub dual_mode_gaps: Vec<f64>,
    pub noise_floor: Vec<f64>,
    pub max_estimate: Vec<f64>,
}

pub fn cmd_dnmap(cfg: &RunConfig, out: &Path) -> Result<DnData> {
    let grid = cfg.grid()?;
    let a = cfg.potential(&grid)?;
    let nl = cfg.nonlinearity.build(&grid)?;
    let b1 = cfg.dn.w1.build(&grid, Window::W1)?;
    let b2 = cfg.dn.w2.build(&grid, Window::W2)?;
    let order = cfg.dn_order();
    let dn = dn_derivatives(&a, &nl, &b1, &b2, &grid, cfg.s, order, cfg.dn.scheme, &cfg.solver)?;
    write_dn_data(&out.join("dn_data.txt"), &dn)?;
    let report = DnReport {
        order,
        eps_base: dn.eps_base,
        dual_mode_gaps: dn.dual_mode_gaps(),
        noise_floor: dn.noise_floor.clone(),
        max_estimate: dn.estimate.iter().map(|m| m.amax()).collect(),
    };
    info!("DN derivatives up to order {order}; dual-mode gaps {:?}", report.dual_mode_gaps);
    write_json(&out.join("dn_report.json"), &report)?;
    Ok(dn)
}

#[derive(Debug, Serialize)]
pub struct ReconstructReport {
    pub orders: Vec<usize>,
    pub partial: bool,
    pub abort_reason: Option<String>,
    pub runge_misfit: f64,
    pub runge_condition: f64,
    pub dual_mode_gaps: Vec<f64>,
    pub positivity_margin: f64,
    pub masked_nodes: usize,
}

/// Blind reconstruction: reads the DN file, the potential and `c_1` only.
pub fn cmd_reconstruct(cfg: &RunConfig, dn_path: &Path, out: &Path) -> Result<ReconstructReport> {
    let dn = read_dn_data(dn_path)?;
    let grid = cfg.grid()?;
    if (dn.meta.s - cfg.s).abs() > 0.0 {
        return Err(Error::BasisMismatch(format!("DN data has s = {}, config has {}", dn.meta.s, cfg.s)));
    }
    let a = cfg.potential(&grid)?;
    let q = cfg.nonlinearity.build_q(&grid)?;
    let b1 = cfg.dn.w1.build(&grid, Window::W1)?;
    let b2 = cfg.dn.w2.build(&grid, Window::W2)?;
    let res = reconstruct_all(&dn, &a, &q, &b1, &b2, &grid, dn.order, &cfg.inversion)?;
    let mask = ScalarField::from_fn(&grid, |_| 0.0);
    let mut mask = mask;
    for (slot, &k) in grid.interior().iter().enumerate() {
        mask[k] = if res.mask[slot] { 1.0 } else { 0.0 };
    }
    let names: Vec<String> = (0..res.coefficients.len()).map(|i| format!("c{}_hat", i + 2)).collect();
    let mut cols: Vec<(&str, &ScalarField)> = vec![("u1", &res.u1), ("mask", &mask)];
    for (n, c) in names.iter().zip(&res.coefficients) {
        cols.push((n.as_str(), c));
    }
    write_fields_csv(&out.join("reconstruction.csv"), &grid, grid.interior(), &cols)?;
    let report = ReconstructReport {
        orders: (2..2 + res.coefficients.len()).collect(),
        partial: res.partial,
        abort_reason: res.abort_reason.clone(),
        runge_misfit: res.runge_misfit,
        runge_condition: res.runge_condition,
        dual_mode_gaps: res.dual_mode_gaps.clone(),
        positivity_margin: res.positivity_margin,
        masked_nodes: res.mask.iter().filter(|m| !**m).count(),
    };
    if res.partial {
        error!("reconstruction stopped early: {}", res.abort_reason.as_deref().unwrap_or(""));
    } else {
        info!("recovered orders {:?}", report.orders);
    }
    write_json(&out.join("reconstruction_report.json"), &report)?;
    Ok(report)
}

/// Exit 0 when every requested oracle passes, 3 otherwise.
pub fn cmd_oracle(cfg: &RunConfig, name: OracleName, out: &Path) -> Result<i32> {
    let names = match name {
        OracleName::All => vec![
            OracleName::Symbol,
            OracleName::Getoor,
            OracleName::Adjointness,
            OracleName::Factorization,
            OracleName::FdCascade,
            OracleName::Barrier,
        ],
        n => vec![n],
    };
    let mut reports = Vec::new();
    for n in names {
        let r = run_oracle(cfg, n)?;
        info!(
            "oracle {}: {} (measured {:.3e}, tolerance {:.3e})",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.measured,
            r.tolerance
        );
        reports.push(r);
    }
    let file = match name {
        OracleName::All => "oracle_all.json".to_string(),
        _ => format!("oracle_{}.json", reports[0].name),
    };
    write_json(&out.join(file), &reports)?;
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { 3 })
}

fn run_oracle(cfg: &RunConfig, name: OracleName) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match name {
        OracleName::Symbol => {
            let half = if cfg.domain.dimension == 1 { 8.0 } else { 6.0 };
            symbol_oracle(cfg.domain.dimension, cfg.s, cfg.nodes_per_axis, half)
        }
        OracleName::Getoor => getoor_oracle(cfg.s, cfg.nodes_per_axis),
        OracleName::Adjointness => adjointness_oracle(&cfg.grid()?, cfg.s, 20, &mut rng),
        OracleName::Factorization => factorization_oracle(&cfg.grid()?, cfg.s, 20, &mut rng),
        OracleName::FdCascade => {
            let grid = cfg.grid()?;
            let a = cfg.potential(&grid)?;
            let nl = cfg.nonlinearity.build(&grid)?;
            let b1 = cfg.dn.w1.build(&grid, Window::W1)?;
            let b2 = cfg.dn.w2.build(&grid, Window::W2)?;
            fd_cascade_oracle(&a, &nl, &b1, &b2, &grid, cfg.s, cfg.dn_order(), &cfg.solver)
        }
        OracleName::Barrier => {
            let grid = cfg.grid()?;
            let a = cfg.potential(&grid)?;
            let q = cfg.nonlinearity.build_q(&grid)?;
            barrier_oracle(&grid, cfg.s, &a, &q)
        }
        OracleName::All => unreachable!("expanded by the caller"),
    }
}
