use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use travwave::branch::curvature::{
    adjudicate, lambda_ddot_candidates, CurvatureReport, MATCH_TOL_DISTRIBUTIONAL, MATCH_TOL_REGULAR,
};
use travwave::branch::distributional::{self, trace};
use travwave::branch::regular::{regular_trace, RegularCorrector, RegularSystem};
use travwave::branch::{Branch, BranchPoint};
use travwave::dispersion::{a_coeff, bifurcation_point, kernel_scan, uniqueness_window};
use travwave::domain::{has_errors, BifurcationPoint, GammaMode, RunConfig, Severity};
use travwave::fieldio::io::{read_branch_csv, write_branch_csv, write_field, write_json, write_scan_csv};
use travwave::fieldio::{jump_residual, reconstruct, weak_residual, FieldSpec};
use travwave::modes::build_mode;
use travwave::par::Exec;
use travwave::schrod::{build_operator, smallest_eigs, Grid};
use travwave::Error;

#[derive(Parser)]
#[command(name = "travwave", version, about = "Bifurcating traveling waves: solver and verification suite")]
struct Cli {
    /// Run configuration (TOML with [potential], [solver], [branch]).
    #[arg(long, global = true, default_value = "travwave.toml")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized spot checks; solvers ignore it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run per-wavenumber scans on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bifurcation point, induced alpha and a uniqueness scan.
    Bifpoint {
        #[arg(long, default_value_t = 0.5)]
        halfwidth: f64,
        #[arg(long, default_value_t = 401)]
        n_lambda: usize,
    },
    /// Mode data phi'(0+), norms and psi'(0) for k = 1..K at lambda*.
    Modes,
    /// Dispersion scan, or with --discrete the eigenvalues nearest zero of T_k.
    Spectrum {
        #[arg(long)]
        discrete: bool,
        #[arg(long)]
        lambda_lo: Option<f64>,
        #[arg(long)]
        lambda_hi: Option<f64>,
        #[arg(long, default_value_t = 201)]
        n_lambda: usize,
        #[arg(long, default_value_t = 3)]
        n_eigs: usize,
    },
    /// Trace both half-branches and adjudicate the curvature.
    Trace,
    /// Re-check residuals of a stored branch file.
    Verify {
        #[arg(long)]
        branch: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        n_x: usize,
    },
    /// Reconstruct the field of one branch point.
    Field {
        #[arg(long)]
        branch: Option<PathBuf>,
        /// Row of the branch file; defaults to the largest ε.
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, default_value_t = 64)]
        n_x: usize,
        #[arg(long)]
        y_max: Option<f64>,
        #[arg(long)]
        n_y: Option<usize>,
    },
}

/// Failure categories, reported as the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fail {
    Io = 1,
    Config = 2,
    Compute = 3,
    Newton = 4,
    Residual = 5,
    Curvature = 6,
    Uniqueness = 7,
}

fn category(e: &Error) -> Fail {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => Fail::Io,
        Error::Invalid(_) | Error::Parse(_) => Fail::Config,
        Error::NewtonDiverged { .. } | Error::Degenerate => Fail::Newton,
        _ => Fail::Compute,
    }
}

type Outcome = std::result::Result<(), (Fail, String)>;

fn err(e: Error) -> (Fail, String) {
    (category(&e), e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((fail, msg)) => {
            eprintln!("travwave: {msg}");
            ExitCode::from(fail as u8)
        }
    }
}

struct Ctx {
    run: RunConfig,
    bp: Option<BifurcationPoint>,
    exec: Exec,
}

fn load(cli: &Cli) -> std::result::Result<Ctx, (Fail, String)> {
    let run = RunConfig::from_path(&cli.config).map_err(err)?;
    let diags = run.validate();
    for d in &diags {
        let tag = match d.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        eprintln!("{tag} [{}]: {}", d.code, d.message);
    }
    if has_errors(&diags) {
        return Err((Fail::Config, "configuration rejected".into()));
    }
    let bp = run.solver.target.map(|t| BifurcationPoint {
        k_star: t.k_star,
        lambda_star: t.lambda_star,
        alpha: run.potential.alpha,
    });
    fs::create_dir_all(&cli.out).map_err(|e| err(e.into()))?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    Ok(Ctx { run, bp, exec })
}

fn need_bp(ctx: &Ctx) -> std::result::Result<BifurcationPoint, (Fail, String)> {
    ctx.bp.ok_or((Fail::Config, "this command needs a [branch] section".into()))
}

fn run(cli: &Cli) -> Outcome {
    let ctx = load(cli)?;
    match &cli.cmd {
        Cmd::Bifpoint { halfwidth, n_lambda } => bifpoint(cli, &ctx, *halfwidth, *n_lambda),
        Cmd::Modes => modes(cli, &ctx),
        Cmd::Spectrum { discrete, lambda_lo, lambda_hi, n_lambda, n_eigs } => {
            spectrum(cli, &ctx, *discrete, *lambda_lo, *lambda_hi, *n_lambda, *n_eigs)
        }
        Cmd::Trace => trace_cmd(cli, &ctx),
        Cmd::Verify { branch, n_x } => verify(cli, &ctx, branch.as_deref(), *n_x),
        Cmd::Field { branch, index, n_x, y_max, n_y } => field(cli, &ctx, branch.as_deref(), *index, *n_x, *y_max, *n_y),
    }
}

fn save<T: Serialize + ?Sized>(cli: &Cli, name: &str, value: &T) -> Outcome {
    let path = cli.out.join(name);
    write_json(&path, value).map_err(err)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct BifpointReport {
    bifurcation: BifurcationPoint,
    /// `α` at which `(k*, λ*)` is a zero of the dispersion coefficient.
    alpha_induced: f64,
    /// `A^{k*}_{λ*}` at the configured `α`.
    dispersion_residual: f64,
    window_halfwidth: f64,
    certified: bool,
}

fn bifpoint(cli: &Cli, ctx: &Ctx, halfwidth: f64, n_lambda: usize) -> Outcome {
    let bp = need_bp(ctx)?;
    let spec = &ctx.run.potential;
    let induced = bifurcation_point(spec, bp.k_star, bp.lambda_star).map_err(err)?;
    let residual = a_coeff(spec, bp.k_star, bp.lambda_star).map_err(err)?;
    let w = uniqueness_window(spec, &bp, ctx.run.solver.k_max, halfwidth, n_lambda, ctx.exec).map_err(err)?;
    let report = BifpointReport {
        bifurcation: bp,
        alpha_induced: induced.alpha,
        dispersion_residual: residual,
        window_halfwidth: w,
        certified: w > 0.0,
    };
    save(cli, "bifpoint.json", &report)?;
    if report.certified {
        Ok(())
    } else {
        Err((Fail::Uniqueness, format!("({}, {}) is not an isolated zero", bp.k_star, bp.lambda_star)))
    }
}

#[derive(Serialize)]
struct ModeRow {
    k: usize,
    lambda: f64,
    phi_prime0: f64,
    l2_half_sq: f64,
    v0_l2_half_sq: f64,
    psi_prime0: f64,
}

fn modes(cli: &Cli, ctx: &Ctx) -> Outcome {
    let lambda = ctx.bp.map_or(0.0, |b| b.lambda_star);
    let ks: Vec<usize> = (1..=ctx.run.solver.k_max).collect();
    let rows = ctx
        .exec
        .map(&ks, |&k| {
            let m = build_mode(&ctx.run.potential, k, lambda)?;
            Ok(ModeRow {
                k,
                lambda,
                phi_prime0: m.phi_prime0(),
                l2_half_sq: m.l2_sq(),
                v0_l2_half_sq: m.v0_l2_sq(),
                psi_prime0: m.psi_prime0(),
            })
        })
        .into_iter()
        .collect::<travwave::Result<Vec<_>>>()
        .map_err(err)?;
    save(cli, "modes.json", &rows)
}

#[derive(Serialize)]
struct EigRow {
    k: usize,
    lambda: f64,
    eigenvalues: Vec<f64>,
}

fn spectrum(
    cli: &Cli,
    ctx: &Ctx,
    discrete: bool,
    lo: Option<f64>,
    hi: Option<f64>,
    n_lambda: usize,
    n_eigs: usize,
) -> Outcome {
    let spec = &ctx.run.potential;
    let cfg = &ctx.run.solver;
    let center = ctx.bp.map_or(0.0, |b| b.lambda_star);
    if discrete {
        let ks: Vec<usize> = (1..=cfg.k_max).collect();
        let rows = ctx
            .exec
            .map(&ks, |&k| {
                let op = build_operator(spec, k, center, cfg)?;
                let eigenvalues = smallest_eigs(&op, n_eigs)?.into_iter().map(|p| p.value).collect();
                Ok(EigRow { k, lambda: center, eigenvalues })
            })
            .into_iter()
            .collect::<travwave::Result<Vec<_>>>()
            .map_err(err)?;
        return save(cli, "spectrum_discrete.json", &rows);
    }
    let lo = lo.unwrap_or(center - 1.0);
    let hi = hi.unwrap_or(center + 0.5 * (1.0 - center));
    let scan = kernel_scan(spec, 1..=cfg.k_max, (lo, hi), n_lambda, ctx.exec).map_err(err)?;
    let path = cli.out.join("spectrum.csv");
    write_scan_csv(&path, &scan).map_err(err)?;
    println!("{}", path.display());
    save(cli, "spectrum_zeros.json", &scan.zeros)
}

#[derive(Serialize)]
struct TraceReport<'a> {
    curvature: &'a CurvatureReport,
    eps_max_used: f64,
    lambda_star_origin: f64,
    points: usize,
    failures: &'a [(f64, String)],
    max_residual: f64,
    max_newton_iters: usize,
}

fn trace_cmd(cli: &Cli, ctx: &Ctx) -> Outcome {
    let bp = need_bp(ctx)?;
    let spec = &ctx.run.potential;
    let cfg = &ctx.run.solver;
    let cands = lambda_ddot_candidates(spec, &bp).map_err(err)?;
    let mut last: Option<(Branch, Option<Grid>, f64)> = None;
    let (tol, origin) = match spec.mode {
        GammaMode::DistributionalGamma => (MATCH_TOL_DISTRIBUTIONAL, bp.lambda_star),
        GammaMode::RegularGamma => {
            let sys = RegularSystem::new(spec, cfg).map_err(err)?;
            let o = travwave::branch::regular::discrete_origin(spec, &bp, &sys.grid).map_err(err)?;
            (MATCH_TOL_REGULAR, o.lambda_star)
        }
    };
    let (report, eps_used) = adjudicate(
        |e| {
            let c = travwave::SolverConfig { eps_max: e, ..cfg.clone() };
            let (branch, grid) = match spec.mode {
                GammaMode::DistributionalGamma => (trace(spec, &bp, &c, ctx.exec)?, None),
                GammaMode::RegularGamma => {
                    let rb = regular_trace(spec, &bp, &c, ctx.exec)?;
                    (rb.branch, Some(rb.grid))
                }
            };
            let pts = branch.points.clone();
            last = Some((branch, grid, e));
            Ok(pts)
        },
        cfg.eps_max,
        origin,
        &cands,
        tol,
        3,
    )
    .map_err(err)?;
    let (branch, grid, _) = last.expect("adjudicate traced at least once");
    let path = cli.out.join("branch.csv");
    write_branch_csv(&path, &branch.points, grid.as_ref().map(|g| g.ys.as_slice())).map_err(err)?;
    println!("{}", path.display());
    let summary = TraceReport {
        curvature: &report,
        eps_max_used: eps_used,
        lambda_star_origin: origin,
        points: branch.points.len(),
        failures: &branch.failures,
        max_residual: branch.points.iter().map(|p| p.residual_norm).fold(0.0, f64::max),
        max_newton_iters: branch.points.iter().map(|p| p.newton_iters).max().unwrap_or(0),
    };
    save(cli, "curvature.json", &summary)?;
    if !branch.failures.is_empty() {
        return Err((Fail::Newton, format!("{} half-branch(es) stopped early", branch.failures.len())));
    }
    if !report.is_unique_match() {
        return Err((Fail::Curvature, format!("curvature match: {}", report.best_match)));
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyRow {
    eps: f64,
    lambda: f64,
    stored_residual: f64,
    residual: f64,
    weak_interior: f64,
    weak_boundary: f64,
    spot_boundary: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    seed: u64,
    residual_limit: f64,
    interior_limit: f64,
    boundary_limit: f64,
    rows: Vec<VerifyRow>,
    pass: bool,
}

fn branch_path(cli: &Cli, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| cli.out.join("branch.csv"), Path::to_path_buf)
}

fn verify(cli: &Cli, ctx: &Ctx, branch: Option<&Path>, n_x: usize) -> Outcome {
    let bp = need_bp(ctx)?;
    let spec = &ctx.run.potential;
    let cfg = &ctx.run.solver;
    let points = read_branch_csv(&branch_path(cli, branch)).map_err(err)?;
    let tol = cfg.tol_newton;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let spots: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let residual_limit = 10.0 * tol;
    let (interior_limit, boundary_limit) = match spec.mode {
        GammaMode::DistributionalGamma => (1e-10, 10.0 * tol),
        GammaMode::RegularGamma => (10.0 * tol + cfg.h(), 0.0),
    };
    let regular = match spec.mode {
        GammaMode::RegularGamma => {
            let sys = RegularSystem::new(spec, cfg).map_err(err)?;
            let origin = travwave::branch::regular::discrete_origin(spec, &bp, &sys.grid).map_err(err)?;
            Some((sys, origin))
        }
        GammaMode::DistributionalGamma => None,
    };
    let check = |p: &BranchPoint| -> travwave::Result<VerifyRow> {
        let (residual, spot) = match (&regular, p.spectrum()) {
            (None, Some(a)) => (
                distributional::recheck(p, bp.k_star, spec)?,
                jump_residual(a, spec, p.lambda, &spots)?,
            ),
            (Some((sys, origin)), None) => (RegularCorrector::new(sys, origin)?.recheck(p)?, 0.0),
            _ => return Err(Error::Parse("branch file does not match the configured Γ mode".into())),
        };
        let fs = match spec.mode {
            GammaMode::DistributionalGamma => FieldSpec { n_x, y_max: cfg.y_max.min(20.0), n_y: 401 },
            GammaMode::RegularGamma => FieldSpec::from_config(cfg, n_x),
        };
        let w = weak_residual(&reconstruct(p, spec, cfg, &fs)?, spec, p.lambda)?;
        let pass = residual <= residual_limit
            && w.interior <= interior_limit
            && w.boundary <= boundary_limit.max(0.0)
            && spot <= boundary_limit.max(0.0);
        Ok(VerifyRow {
            eps: p.eps,
            lambda: p.lambda,
            stored_residual: p.residual_norm,
            residual,
            weak_interior: w.interior,
            weak_boundary: w.boundary,
            spot_boundary: spot,
            pass,
        })
    };
    let rows = ctx.exec.map(&points, check).into_iter().collect::<travwave::Result<Vec<_>>>().map_err(err)?;
    let pass = rows.iter().all(|r| r.pass);
    save(cli, "verify.json", &VerifyReport { seed: cli.seed, residual_limit, interior_limit, boundary_limit, rows, pass })?;
    if pass {
        Ok(())
    } else {
        Err((Fail::Residual, "stored branch fails residual checks".into()))
    }
}

fn field(
    cli: &Cli,
    ctx: &Ctx,
    branch: Option<&Path>,
    index: Option<usize>,
    n_x: usize,
    y_max: Option<f64>,
    n_y: Option<usize>,
) -> Outcome {
    let cfg = &ctx.run.solver;
    let points = read_branch_csv(&branch_path(cli, branch)).map_err(err)?;
    let i = match index {
        Some(i) if i < points.len() => i,
        Some(i) => return Err((Fail::Config, format!("index {i} out of range ({} points)", points.len()))),
        None => points
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.eps.total_cmp(&b.1.eps))
            .map(|(i, _)| i)
            .ok_or((Fail::Config, "empty branch file".to_string()))?,
    };
    let fs = FieldSpec { n_x, y_max: y_max.unwrap_or(cfg.y_max), n_y: n_y.unwrap_or(cfg.n_y) };
    let f = reconstruct(&points[i], &ctx.run.potential, cfg, &fs).map_err(err)?;
    let path = cli.out.join("field.csv");
    write_field(&path, &f).map_err(err)?;
    println!("{}", path.display());
    Ok(())
}
