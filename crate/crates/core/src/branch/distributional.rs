//! The distributional-Γ system `r_k = A^k_λ a_k − (γk²/4)(a∗a∗a)_k`.

use nalgebra::{DMatrix, DVector};

use super::{damped_newton, eps_schedule, Branch, BranchPoint, BranchState};
use crate::dispersion::{a_coeff, a_coeff_dlambda};
use crate::domain::{ensure_valid, BifurcationPoint, GammaMode, PotentialSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::par::Exec;
use crate::seqalg::{conv3, square, OddSpectrum};

fn check_mode(spec: &PotentialSpec) -> Result<()> {
    match spec.mode {
        GammaMode::DistributionalGamma => Ok(()),
        GammaMode::RegularGamma => Err(Error::Regime("distributional solver needs a delta-type Γ".into())),
    }
}

fn dispersion_row(spec: &PotentialSpec, k_max: usize, lambda: f64) -> Result<Vec<f64>> {
    (1..=k_max).map(|k| a_coeff(spec, k, lambda)).collect()
}

/// `r_k`, `k = 1..K`; the cube is summed on its full support before truncation.
pub fn g_residual(a: &OddSpectrum, lambda: f64, spec: &PotentialSpec) -> Result<OddSpectrum> {
    check_mode(spec)?;
    let k_max = a.k_max();
    let cube = conv3(a, k_max)?;
    let coeffs = dispersion_row(spec, k_max, lambda)?;
    Ok(OddSpectrum::from_coeffs(
        (1..=k_max)
            .map(|k| {
                let kf = k as f64;
                coeffs[k - 1] * a.get(k) - 0.25 * spec.gamma * kf * kf * cube.get(k)
            })
            .collect(),
    ))
}

/// Max-norm of the cubic term on modes `K+1..3K`, which the truncated system drops.
pub fn truncation_residual(a: &OddSpectrum, spec: &PotentialSpec) -> Result<f64> {
    let k_max = a.k_max();
    if k_max == 0 {
        return Ok(0.0);
    }
    let cube = conv3(a, 3 * k_max)?;
    Ok((k_max + 1..=3 * k_max)
        .map(|k| (0.25 * spec.gamma * (k * k) as f64 * cube.get(k)).abs())
        .fold(0.0, f64::max))
}

/// Jacobian of [`g_residual`] in `a` (`K×K`) and its `λ`-column.
pub fn g_jacobian(a: &OddSpectrum, lambda: f64, spec: &PotentialSpec) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_mode(spec)?;
    let k_max = a.k_max();
    let s = square(a);
    let coeffs = dispersion_row(spec, k_max, lambda)?;
    let jac = DMatrix::from_fn(k_max, k_max, |i, j| {
        let (k, m) = (i as i64 + 1, j as i64 + 1);
        let kf = k as f64;
        let cubic = 3.0 * (s.at(k - m) - s.at(k + m));
        f64::from(i == j) * coeffs[i] - 0.25 * spec.gamma * kf * kf * cubic
    });
    let dl = (1..=k_max)
        .map(|k| Ok(a_coeff_dlambda(spec, k, lambda)? * a.get(k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok((jac, DVector::from_vec(dl)))
}

fn extended_residual(x: &[f64], lambda: f64, k_star: usize, eps: f64, spec: &PotentialSpec) -> Result<Vec<f64>> {
    let a = OddSpectrum::from_coeffs(x.to_vec());
    let mut r = g_residual(&a, lambda, spec)?.into_coeffs();
    r.push(x[k_star - 1] - eps);
    Ok(r)
}

fn extended_step(x: &[f64], lambda: f64, k_star: usize, f: &[f64], spec: &PotentialSpec) -> Result<(Vec<f64>, f64)> {
    let k_max = x.len();
    let a = OddSpectrum::from_coeffs(x.to_vec());
    let (jac, dl) = g_jacobian(&a, lambda, spec)?;
    let n = k_max + 1;
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (k_max, k_max)).copy_from(&jac);
    m.view_mut((0, k_max), (k_max, 1)).copy_from(&dl);
    m[(k_max, k_star - 1)] = 1.0;
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let lu = m.lu();
    let u = lu.u();
    let pivot_min = u.diagonal().iter().fold(f64::INFINITY, |s, v| s.min(v.abs()));
    if !(pivot_min > 1e-14 * scale) {
        return Err(Error::Degenerate);
    }
    let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
    let d = lu.solve(&rhs).ok_or(Error::Degenerate)?;
    Ok((d.rows(0, k_max).iter().copied().collect(), d[k_max]))
}

fn k_star_of(cfg: &SolverConfig) -> Result<usize> {
    cfg.target
        .map(|t| t.k_star)
        .filter(|&k| k >= 1 && k <= cfg.k_max)
        .ok_or_else(|| Error::Regime("corrector needs a branch target with 1 ≤ k* ≤ K".into()))
}

/// Solves `{r = 0, a_{k*} = ε}` for `(a, λ)` by damped Newton from `seed`.
pub fn corrector(seed: &BranchPoint, eps_target: f64, spec: &PotentialSpec, cfg: &SolverConfig) -> Result<BranchPoint> {
    check_mode(spec)?;
    let k_star = k_star_of(cfg)?;
    let a0 = seed
        .spectrum()
        .ok_or_else(|| Error::Regime("distributional corrector needs a spectral seed".into()))?
        .resized(cfg.k_max);
    if eps_target == 0.0 {
        return Ok(BranchPoint {
            eps: 0.0,
            lambda: seed.lambda,
            state: BranchState::Spectrum(OddSpectrum::zeros(cfg.k_max)),
            residual_norm: 0.0,
            newton_iters: 0,
            history: vec![0.0],
            truncation_residual: 0.0,
        });
    }
    let res = damped_newton(
        a0.into_coeffs(),
        seed.lambda,
        cfg.tol_newton,
        cfg.max_newton_iters,
        |x, l| extended_residual(x, l, k_star, eps_target, spec),
        |x, l, f| extended_step(x, l, k_star, f, spec),
    )?;
    let a = OddSpectrum::from_coeffs(res.x);
    let truncation_residual = truncation_residual(&a, spec)?;
    Ok(BranchPoint {
        eps: eps_target,
        lambda: res.lambda,
        state: BranchState::Spectrum(a),
        residual_norm: res.residual,
        newton_iters: res.iters,
        history: res.history,
        truncation_residual,
    })
}

/// Predictor `a⁰ = εe^{k*}`, `λ⁰ = λ* + ½cε²`.
pub fn predictor(bp: &BifurcationPoint, k_max: usize, eps: f64, curvature: f64) -> BranchPoint {
    let mut a = OddSpectrum::zeros(k_max);
    a.set(bp.k_star, eps);
    BranchPoint {
        eps,
        lambda: bp.lambda_star + 0.5 * curvature * eps * eps,
        state: BranchState::Spectrum(a),
        residual_norm: f64::NAN,
        newton_iters: 0,
        history: Vec::new(),
        truncation_residual: 0.0,
    }
}

/// Both half-branches `ε = ±j·eps_max/n_branch`; the halves run on `exec`.
pub fn trace(spec: &PotentialSpec, bp: &BifurcationPoint, cfg: &SolverConfig, exec: Exec) -> Result<Branch> {
    check_mode(spec)?;
    let spec = spec.with_alpha(bp.alpha);
    let cfg = cfg.clone().with_target(bp.k_star, bp.lambda_star);
    ensure_valid(&spec, &cfg)?;
    let seed_curvature = super::curvature::lambda_ddot_candidates(&spec, bp)?
        .first()
        .map_or(0.0, |c| c.value);
    let schedule = eps_schedule(cfg.eps_max, cfg.n_branch);
    let halves = exec.map(&[1.0, -1.0], |&sign| {
        let mut points = Vec::new();
        let mut failure = None;
        for &e in &schedule {
            let eps = sign * e;
            let seed = predictor(bp, cfg.k_max, eps, seed_curvature);
            match corrector(&seed, eps, &spec, &cfg) {
                Ok(p) => points.push(p),
                Err(err) => {
                    failure = Some((eps, err.to_string()));
                    break;
                }
            }
        }
        (points, failure)
    });
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (p, f) in halves {
        points.extend(p);
        failures.extend(f);
    }
    points.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    Ok(Branch { points, failures })
}

/// Max-norm of the extended residual of a stored point, recomputed from scratch.
pub fn recheck(point: &BranchPoint, k_star: usize, spec: &PotentialSpec) -> Result<f64> {
    let a = point
        .spectrum()
        .ok_or_else(|| Error::Regime("expected a spectral branch point".into()))?;
    if k_star == 0 || k_star > a.k_max() {
        return Err(Error::Truncation { requested: k_star, support: a.k_max() });
    }
    Ok(norm_inf(&extended_residual(a.coeffs(), point.lambda, k_star, point.eps, spec)?))
}
