//! The regular-Γ mode-coupled system on the finite-difference grid:
//! `(T_k u_k)_j + ¼k²Γ(y_j)(u(y_j)∗u(y_j)∗u(y_j))_k = 0`, `k = 1..K`.
//!
//! Unknowns are stored node-major (`x[j·K + k − 1] = u_k(y_j)`) so the
//! Jacobian is banded with bandwidth `K`. The amplitude constraint is
//! `⟨u_{k*}, φ*_h⟩_h = ε` with `φ*_h` the discrete kernel vector at the
//! discrete bifurcation parameter `λ*_h`.

use super::{damped_newton, eps_schedule, Branch, BranchPoint, BranchState};
use crate::domain::{ensure_valid, BifurcationPoint, GammaMode, PotentialSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, BandMatrix, LowRankSolver};
use crate::par::Exec;
use crate::schrod::{build_on_grid, check_interface, discrete_lambda_star, node_gamma, Grid};
use crate::seqalg::{conv3, square, OddSpectrum};

/// Precomputed `λ`-independent parts of the regular system.
#[derive(Clone, Debug)]
pub struct RegularSystem {
    pub grid: Grid,
    pub k_max: usize,
    /// `T_k(0)` diagonal per mode.
    base: Vec<Vec<f64>>,
    /// `k²V₀` per mode: `T_k(λ) = T_k(0) − λ·diag(k²V₀)`.
    dlambda: Vec<Vec<f64>>,
    off: f64,
    /// `(node, Γ)` where `Γ ≠ 0`.
    active: Vec<(usize, f64)>,
}

impl RegularSystem {
    pub fn new(spec: &PotentialSpec, cfg: &SolverConfig) -> Result<Self> {
        if spec.mode != GammaMode::RegularGamma {
            return Err(Error::Regime("regular solver needs a Γ profile".into()));
        }
        let grid = Grid::from_config(cfg)?;
        for g in &spec.gamma_profile {
            for y in [g.y_lo, g.y_hi] {
                if y.abs() < grid.y_max {
                    check_interface(&grid, y)?;
                }
            }
        }
        let mut base = Vec::with_capacity(cfg.k_max);
        let mut dlambda = Vec::with_capacity(cfg.k_max);
        let mut off = 0.0;
        for k in 1..=cfg.k_max {
            let op = build_on_grid(spec, k, 0.0, grid.clone())?;
            off = op.off;
            base.push(op.diag);
            dlambda.push(op.dlambda);
        }
        let active = grid
            .ys
            .iter()
            .enumerate()
            .map(|(j, &y)| (j, node_gamma(spec, y, grid.h)))
            .filter(|&(_, g)| g != 0.0)
            .collect();
        Ok(Self { grid, k_max: cfg.k_max, base, dlambda, off, active })
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_nodes() * self.k_max
    }

    fn node_spectrum(&self, x: &[f64], j: usize) -> OddSpectrum {
        OddSpectrum::from_coeffs(x[j * self.k_max..(j + 1) * self.k_max].to_vec())
    }

    /// Node-major residual.
    pub fn residual(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if !(lambda < 1.0) {
            return Err(Error::Regime(format!("lambda = {lambda} must be < 1")));
        }
        let kk = self.k_max;
        let n = self.n_nodes();
        let mut r = vec![0.0; n * kk];
        for j in 0..n {
            for k in 0..kk {
                let i = j * kk + k;
                let mut s = (self.base[k][j] - lambda * self.dlambda[k][j]) * x[i];
                if j > 0 {
                    s += self.off * x[i - kk];
                }
                if j + 1 < n {
                    s += self.off * x[i + kk];
                }
                r[i] = s;
            }
        }
        for &(j, g) in &self.active {
            let cube = conv3(&self.node_spectrum(x, j), kk)?;
            for k in 1..=kk {
                r[j * kk + k - 1] += 0.25 * (k * k) as f64 * g * cube.get(k);
            }
        }
        Ok(r)
    }

    /// Max-norm of the cubic term on modes `K+1..3K` over the Γ support.
    pub fn truncation_residual(&self, x: &[f64]) -> Result<f64> {
        let kk = self.k_max;
        let mut m = 0.0f64;
        for &(j, g) in &self.active {
            let cube = conv3(&self.node_spectrum(x, j), 3 * kk)?;
            for k in kk + 1..=3 * kk {
                m = m.max((0.25 * (k * k) as f64 * g * cube.get(k)).abs());
            }
        }
        Ok(m)
    }

    /// Banded Jacobian in `x` and the `λ`-column.
    pub fn jacobian(&self, x: &[f64], lambda: f64) -> (BandMatrix, Vec<f64>) {
        let kk = self.k_max;
        let n = self.n_nodes();
        let mut jac = BandMatrix::zeros(n * kk, kk, kk);
        let mut dl = vec![0.0; n * kk];
        for j in 0..n {
            for k in 0..kk {
                let i = j * kk + k;
                jac.set(i, i, self.base[k][j] - lambda * self.dlambda[k][j]);
                if j > 0 {
                    jac.set(i, i - kk, self.off);
                }
                if j + 1 < n {
                    jac.set(i, i + kk, self.off);
                }
                dl[i] = -self.dlambda[k][j] * x[i];
            }
        }
        for &(j, g) in &self.active {
            let s = square(&self.node_spectrum(x, j));
            for k in 1..=kk as i64 {
                let c = 0.75 * (k * k) as f64 * g;
                for m in 1..=kk as i64 {
                    let v = c * (s.at(k - m) - s.at(k + m));
                    jac.add(j * kk + k as usize - 1, j * kk + m as usize - 1, v);
                }
            }
        }
        (jac, dl)
    }

    pub fn to_mode_grid(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let kk = self.k_max;
        (0..kk).map(|k| (0..self.n_nodes()).map(|j| x[j * kk + k]).collect()).collect()
    }

    pub fn from_mode_grid(&self, values: &[Vec<f64>]) -> Result<Vec<f64>> {
        if values.len() != self.k_max {
            return Err(Error::Mismatch { left: values.len(), right: self.k_max });
        }
        let n = self.n_nodes();
        let mut x = vec![0.0; n * self.k_max];
        for (k, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Mismatch { left: row.len(), right: n });
            }
            for (j, v) in row.iter().enumerate() {
                x[j * self.k_max + k] = *v;
            }
        }
        Ok(x)
    }
}

/// Residual in mode-grid shape: `values[k−1][j]`.
pub fn regular_residual(
    values: &[Vec<f64>],
    lambda: f64,
    spec: &PotentialSpec,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let sys = RegularSystem::new(spec, cfg)?;
    let x = sys.from_mode_grid(values)?;
    Ok(sys.to_mode_grid(&sys.residual(&x, lambda)?))
}

/// Discrete branch origin: `λ*_h` and the `h`-normalized kernel vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOrigin {
    pub k_star: usize,
    pub lambda_star: f64,
    pub phi: Vec<f64>,
}

pub fn discrete_origin(spec: &PotentialSpec, bp: &BifurcationPoint, grid: &Grid) -> Result<DiscreteOrigin> {
    let (lambda_star, pair) = discrete_lambda_star(spec, bp.k_star, bp.lambda_star, grid)?;
    Ok(DiscreteOrigin { k_star: bp.k_star, lambda_star, phi: pair.vector })
}

/// Amplitude-constrained Newton solver for one `ε`.
pub struct RegularCorrector<'a> {
    pub sys: &'a RegularSystem,
    pub origin: &'a DiscreteOrigin,
    /// Mode-`k*` kernel vector embedded in node-major layout.
    v: Vec<f64>,
}

impl<'a> RegularCorrector<'a> {
    pub fn new(sys: &'a RegularSystem, origin: &'a DiscreteOrigin) -> Result<Self> {
        if origin.k_star == 0 || origin.k_star > sys.k_max {
            return Err(Error::Truncation { requested: origin.k_star, support: sys.k_max });
        }
        let mut v = vec![0.0; sys.n_unknowns()];
        for (j, p) in origin.phi.iter().enumerate() {
            v[j * sys.k_max + origin.k_star - 1] = *p;
        }
        Ok(Self { sys, origin, v })
    }

    fn constraint(&self, x: &[f64], eps: f64) -> f64 {
        self.sys.grid.h * dot(&self.v, x) - eps
    }

    fn extended_residual(&self, x: &[f64], lambda: f64, eps: f64) -> Result<Vec<f64>> {
        let mut r = self.sys.residual(x, lambda)?;
        r.push(self.constraint(x, eps));
        Ok(r)
    }

    /// Bordered step: with `J̃ = J + v wᵀ` (`w = hv`) nonsingular at the
    /// fold-free branch, `δx = x₁ + δλ·x₂` where `J̃x₁ = −r − v·g` and
    /// `J̃x₂ = −j_λ`.
    fn step(&self, x: &[f64], lambda: f64, f: &[f64]) -> Result<(Vec<f64>, f64)> {
        let sys = self.sys;
        let (mut base, jl) = sys.jacobian(x, lambda);
        let nu = sys.n_unknowns();
        let (r, g) = (&f[..nu], f[nu]);
        let center = sys.grid.center * sys.k_max + self.origin.k_star - 1;
        // pin the kernel direction in the band factor; Woodbury removes the pin
        let theta = base.get(center, center).abs() + 2.0 / (sys.grid.h * sys.grid.h);
        base.add(center, center, theta);
        let w: Vec<f64> = self.v.iter().map(|p| sys.grid.h * p).collect();
        let mut e = vec![0.0; nu];
        e[center] = 1.0;
        let mut neg = vec![0.0; nu];
        neg[center] = -theta;
        let solver = LowRankSolver::new(base, vec![(self.v.clone(), w.clone()), (e, neg)])
            .map_err(|_| Error::Degenerate)?;
        let rhs1: Vec<f64> = r.iter().zip(&self.v).map(|(ri, vi)| -ri - vi * g).collect();
        let rhs2: Vec<f64> = jl.iter().map(|v| -v).collect();
        let (x1, _) = solver.solve(&rhs1, 3, 1e-14);
        let (x2, _) = solver.solve(&rhs2, 3, 1e-14);
        let den = dot(&w, &x2);
        let scale = dot(&w, &w).sqrt() * crate::linalg::norm2(&x2);
        if !(den.abs() > 1e-13 * scale) {
            return Err(Error::Degenerate);
        }
        let dl = (-g - dot(&w, &x1)) / den;
        Ok((x1.iter().zip(&x2).map(|(a, b)| a + dl * b).collect(), dl))
    }

    /// Solves for `ε` from the predictor `u = εφ*_h e^{k*}`, `λ = λ*_h + ½cε²`.
    pub fn solve(&self, eps: f64, curvature: f64, cfg: &SolverConfig) -> Result<BranchPoint> {
        let sys = self.sys;
        let lambda0 = self.origin.lambda_star + 0.5 * curvature * eps * eps;
        if eps == 0.0 {
            return Ok(BranchPoint {
                eps,
                lambda: self.origin.lambda_star,
                state: BranchState::ModeGrid { values: vec![vec![0.0; sys.n_nodes()]; sys.k_max] },
                residual_norm: 0.0,
                newton_iters: 0,
                history: vec![0.0],
                truncation_residual: 0.0,
            });
        }
        let x0: Vec<f64> = self.v.iter().map(|p| eps * p).collect();
        let res = damped_newton(
            x0,
            lambda0,
            cfg.tol_newton,
            cfg.max_newton_iters,
            |x, l| self.extended_residual(x, l, eps),
            |x, l, f| self.step(x, l, f),
        )?;
        let truncation_residual = sys.truncation_residual(&res.x)?;
        Ok(BranchPoint {
            eps,
            lambda: res.lambda,
            state: BranchState::ModeGrid { values: sys.to_mode_grid(&res.x) },
            residual_norm: res.residual,
            newton_iters: res.iters,
            history: res.history,
            truncation_residual,
        })
    }

    /// Max-norm extended residual of a stored point.
    pub fn recheck(&self, point: &BranchPoint) -> Result<f64> {
        let values = point
            .mode_grid()
            .ok_or_else(|| Error::Regime("expected a mode-grid branch point".into()))?;
        let x = self.sys.from_mode_grid(values)?;
        Ok(norm_inf(&self.extended_residual(&x, point.lambda, point.eps)?))
    }
}

/// A traced regular branch with its discrete origin.
#[derive(Clone, Debug)]
pub struct RegularBranch {
    pub branch: Branch,
    pub origin: DiscreteOrigin,
    pub grid: Grid,
}

/// Both half-branches of the regular system; halves run on `exec`.
pub fn regular_trace(spec: &PotentialSpec, bp: &BifurcationPoint, cfg: &SolverConfig, exec: Exec) -> Result<RegularBranch> {
    let spec = spec.with_alpha(bp.alpha);
    let cfg = cfg.clone().with_target(bp.k_star, bp.lambda_star);
    ensure_valid(&spec, &cfg)?;
    let sys = RegularSystem::new(&spec, &cfg)?;
    let origin = discrete_origin(&spec, bp, &sys.grid)?;
    let corrector = RegularCorrector::new(&sys, &origin)?;
    let seed_curvature = super::curvature::lambda_ddot_candidates(&spec, bp)?
        .first()
        .map_or(0.0, |c| c.value);
    let schedule = eps_schedule(cfg.eps_max, cfg.n_branch);
    let halves = exec.map(&[1.0, -1.0], |&sign| {
        let mut points = Vec::new();
        let mut failure = None;
        for &e in &schedule {
            match corrector.solve(sign * e, seed_curvature, &cfg) {
                Ok(p) => points.push(p),
                Err(err) => {
                    failure = Some((sign * e, err.to_string()));
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
    Ok(RegularBranch { branch: Branch { points, failures }, origin, grid: sys.grid })
}
