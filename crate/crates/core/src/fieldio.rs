//! Field reconstruction `Φ(x, y) = Σ u_k(y) sin(kx)`, weak-form residuals,
//! and file I/O ([`io`]).
//!
//! The weak residual tests against `sin(mx)·hat_j(y)`. By orthogonality in
//! `x` this reduces to one 1D weak form per mode `m`, so mode profiles are
//! recovered from the sampled field by a discrete sine projection (exact
//! when `n_x > 2K`) and the `y`-integrals are done cell by cell.

pub mod io;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::branch::{BranchPoint, BranchState};
use crate::domain::{GammaMode, PotentialSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::modes::{build_mode, ModeFunction};
use crate::quad::GaussLegendre;
use crate::schrod::Grid;
use crate::seqalg::{conv3, OddSpectrum};

/// Sampling grid of a reconstructed field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    /// Points on `[0, 2π)`.
    pub n_x: usize,
    pub y_max: f64,
    /// Points on `[0, y_max]`; the `y`-grid has `2n_y − 1` nodes.
    pub n_y: usize,
}

impl FieldSpec {
    /// The solver's own `y`-grid, boundary nodes included.
    pub fn from_config(cfg: &SolverConfig, n_x: usize) -> Self {
        Self { n_x, y_max: cfg.y_max, n_y: cfg.n_y }
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| 2.0 * PI * i as f64 / self.n_x as f64).collect()
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        let h = self.y_max / (self.n_y - 1) as f64;
        let half = self.n_y as i64 - 1;
        (-half..=half).map(|j| j as f64 * h).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    /// FNV-1a digest of the potential spec's JSON form.
    pub spec_digest: String,
    pub eps: f64,
    /// Number of sine modes in the source branch point.
    pub k_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub x_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    /// `values[i][j] = Φ(x_i, y_j)`.
    pub values: Vec<Vec<f64>>,
    pub lambda: f64,
    pub meta: FieldMeta,
}

pub fn spec_digest(spec: &PotentialSpec) -> String {
    let text = serde_json::to_string(spec).expect("spec serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn synthesize(profiles: &[Vec<f64>], xs: &[f64]) -> Vec<Vec<f64>> {
    let n_y = profiles.first().map_or(0, Vec::len);
    xs.iter()
        .map(|&x| {
            let sines: Vec<f64> = (1..=profiles.len()).map(|k| (k as f64 * x).sin()).collect();
            (0..n_y).map(|j| profiles.iter().zip(&sines).map(|(p, s)| p[j] * s).sum()).collect()
        })
        .collect()
}

/// Linear interpolation of interior-node values (zero at `±y_max`).
fn interpolate(grid: &Grid, values: &[f64], y: f64) -> f64 {
    let t = (y + grid.y_max) / grid.h;
    let i = t.floor();
    let frac = t - i;
    let at = |n: i64| -> f64 {
        // node n of the full grid; n = 0 and n = len+1 are the Dirichlet ends
        if n <= 0 || n as usize > values.len() {
            0.0
        } else {
            values[n as usize - 1]
        }
    };
    let n = i as i64;
    if frac == 0.0 {
        at(n)
    } else {
        (1.0 - frac) * at(n) + frac * at(n + 1)
    }
}

/// Samples `Φ` on `fs`. Distributional points use the closed-form modes;
/// regular points interpolate the mode grid linearly in `y`.
pub fn reconstruct(point: &BranchPoint, spec: &PotentialSpec, cfg: &SolverConfig, fs: &FieldSpec) -> Result<FieldGrid> {
    if fs.n_x == 0 || fs.n_y < 2 {
        return Err(Error::Grid(format!("field needs n_x ≥ 1 and n_y ≥ 2, got {}, {}", fs.n_x, fs.n_y)));
    }
    if !(fs.y_max > 0.0 && fs.y_max <= cfg.y_max * (1.0 + 1e-12)) {
        return Err(Error::Grid(format!("field y_max = {} outside [−{}, {}]", fs.y_max, cfg.y_max, cfg.y_max)));
    }
    let xs = fs.x_nodes();
    let ys = fs.y_nodes();
    let (profiles, k_max) = match &point.state {
        BranchState::Spectrum(a) => {
            let profiles = (1..=a.k_max())
                .map(|k| {
                    let ak = a.get(k);
                    if ak == 0.0 {
                        return Ok(vec![0.0; ys.len()]);
                    }
                    let m = build_mode(spec, k, point.lambda)?;
                    Ok(ys.iter().map(|&y| ak * m.value(y)).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            (profiles, a.k_max())
        }
        BranchState::ModeGrid { values } => {
            let grid = Grid::from_config(cfg)?;
            for row in values {
                if row.len() != grid.len() {
                    return Err(Error::Mismatch { left: row.len(), right: grid.len() });
                }
            }
            let profiles = values.iter().map(|row| ys.iter().map(|&y| interpolate(&grid, row, y)).collect()).collect();
            (profiles, values.len())
        }
    };
    Ok(FieldGrid {
        values: synthesize(&profiles, &xs),
        x_nodes: xs,
        y_nodes: ys,
        lambda: point.lambda,
        meta: FieldMeta { spec_digest: spec_digest(spec), eps: point.eps, k_max },
    })
}

/// Mode profiles `u_m(y_j)`, `m = 1..k_max`, by discrete sine projection.
pub fn sine_profiles(field: &FieldGrid, k_max: usize) -> Result<Vec<Vec<f64>>> {
    let n = field.x_nodes.len();
    if n <= 2 * k_max {
        return Err(Error::Grid(format!("n_x = {n} cannot resolve {k_max} modes (need n_x > 2K)")));
    }
    let scale = 2.0 / n as f64;
    Ok((1..=k_max)
        .map(|m| {
            let sines: Vec<f64> = field.x_nodes.iter().map(|&x| (m as f64 * x).sin()).collect();
            (0..field.y_nodes.len())
                .map(|j| scale * field.values.iter().zip(&sines).map(|(row, s)| row[j] * s).sum::<f64>())
                .collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeakResidual {
    /// Max over `(m, j)` of the `h`-normalized weak form away from `y = 0`
    /// (distributional) or everywhere (regular).
    pub interior: f64,
    /// Distributional case: max over the `x`-grid of the jump-condition
    /// residual at `y = 0`. Zero in the regular case.
    pub boundary: f64,
}

/// Weak-form residual of a reconstructed field at parameter `lambda`.
pub fn weak_residual(field: &FieldGrid, spec: &PotentialSpec, lambda: f64) -> Result<WeakResidual> {
    let k_max = field.meta.k_max;
    if k_max == 0 || field.values.iter().all(|r| r.iter().all(|&v| v == 0.0)) {
        return Ok(WeakResidual { interior: 0.0, boundary: 0.0 });
    }
    let profiles = sine_profiles(field, k_max)?;
    match spec.mode {
        GammaMode::DistributionalGamma => distributional_weak(field, &profiles, spec, lambda),
        GammaMode::RegularGamma => regular_weak(field, &profiles, spec, lambda),
    }
}

fn center_index(ys: &[f64]) -> Result<usize> {
    ys.iter()
        .position(|&y| y == 0.0)
        .ok_or_else(|| Error::Grid("field y-grid must contain y = 0".into()))
}

fn uniform_h(ys: &[f64]) -> f64 {
    (ys[ys.len() - 1] - ys[0]) / (ys.len() - 1) as f64
}

/// Cell `[lo, hi]` split at the coefficient jumps it contains.
fn subcells(lo: f64, hi: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![lo];
    pts.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
    pts.push(hi);
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn signed_derivative(m: &ModeFunction, y: f64) -> f64 {
    if y >= 0.0 { m.derivative(y) } else { -m.derivative(-y) }
}

fn distributional_weak(field: &FieldGrid, profiles: &[Vec<f64>], spec: &PotentialSpec, lambda: f64) -> Result<WeakResidual> {
    let ys = &field.y_nodes;
    let c = center_index(ys)?;
    let h = uniform_h(ys);
    let k_max = profiles.len();
    let a = OddSpectrum::from_coeffs(profiles.iter().map(|p| p[c]).collect());
    let modes = (1..=k_max).map(|k| build_mode(spec, k, lambda)).collect::<Result<Vec<_>>>()?;

    // samples must be the closed-form profiles
    let mut interior = 0.0f64;
    for (k, (p, m)) in profiles.iter().zip(&modes).enumerate() {
        let ak = a.get(k + 1);
        for (j, &y) in ys.iter().enumerate() {
            interior = interior.max((p[j] - ak * m.value(y)).abs());
        }
    }

    let gl = GaussLegendre::new(8);
    let cuts = spec.step().map(|(_, b)| vec![-b, b]).unwrap_or_default();
    for (k, m) in modes.iter().enumerate() {
        let ak = a.get(k + 1);
        if ak == 0.0 {
            continue;
        }
        let k2 = ((k + 1) * (k + 1)) as f64;
        for j in 1..ys.len() - 1 {
            if j == c {
                continue;
            }
            let yj = ys[j];
            let mut form = 0.0;
            for (lo, hi, slope) in [(ys[j - 1], yj, 1.0 / h), (yj, ys[j + 1], -1.0 / h)] {
                for (s0, s1) in subcells(lo, hi, &cuts) {
                    form += gl.integrate(s0, s1, |y| {
                        let hat = 1.0 - (y - yj).abs() / h;
                        let coef = 1.0 - lambda * spec.v0(y) - spec.w(y);
                        signed_derivative(m, y) * slope + k2 * coef * m.value(y) * hat
                    });
                }
            }
            interior = interior.max((ak * form / h).abs());
        }
    }

    let boundary = jump_residual(&a, spec, lambda, &field.x_nodes)?;
    Ok(WeakResidual { interior, boundary })
}

/// Max over `xs` of `Φ_y(x,0₊) − Φ_y(x,0₋) − ∂x²(αΦ + γΦ³)(x,0)` for
/// `Φ = Σ a_k φ_k(|y|) sin(kx)`. The cube is expanded on its full support
/// `1..3K`, so dropped modes show up here.
pub fn jump_residual(a: &OddSpectrum, spec: &PotentialSpec, lambda: f64, xs: &[f64]) -> Result<f64> {
    let k_max = a.k_max();
    let cube = conv3(a, 3 * k_max)?;
    let slopes = (1..=k_max)
        .map(|k| Ok(2.0 * build_mode(spec, k, lambda)?.phi_prime0()))
        .collect::<Result<Vec<f64>>>()?;
    let r: Vec<f64> = (1..=3 * k_max)
        .map(|m| {
            let m2 = (m * m) as f64;
            let lin = if m <= k_max { (slopes[m - 1] + m2 * spec.alpha) * a.get(m) } else { 0.0 };
            lin - 0.25 * spec.gamma * m2 * cube.get(m)
        })
        .collect();
    Ok(xs
        .iter()
        .map(|&x| r.iter().enumerate().map(|(i, ri)| ri * ((i + 1) as f64 * x).sin()).sum::<f64>().abs())
        .fold(0.0, f64::max))
}

fn regular_weak(field: &FieldGrid, profiles: &[Vec<f64>], spec: &PotentialSpec, lambda: f64) -> Result<WeakResidual> {
    let ys = &field.y_nodes;
    let c = center_index(ys)?;
    let h = uniform_h(ys);
    let k_max = profiles.len();
    let gl = GaussLegendre::new(3);
    let mut cuts = spec.breakpoints();
    for g in &spec.gamma_profile {
        cuts.push(g.y_lo);
        cuts.push(g.y_hi);
    }
    let n = ys.len();
    // per-cell quadrature data: (y, weight, u(y) as spectrum) for each cell i = [y_i, y_{i+1}]
    let cells: Vec<Vec<(f64, f64, OddSpectrum)>> = (0..n - 1)
        .map(|i| {
            let mut pts = Vec::new();
            for (s0, s1) in subcells(ys[i], ys[i + 1], &cuts) {
                let (mid, rad) = (0.5 * (s0 + s1), 0.5 * (s1 - s0));
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let y = mid + rad * x;
                    let t = (y - ys[i]) / h;
                    let u = OddSpectrum::from_coeffs(profiles.iter().map(|p| (1.0 - t) * p[i] + t * p[i + 1]).collect());
                    pts.push((y, w * rad, u));
                }
            }
            pts
        })
        .collect();
    let cubes: Vec<Vec<Option<OddSpectrum>>> = cells
        .iter()
        .map(|pts| {
            pts.iter()
                .map(|(y, _, u)| (spec.gamma_at(*y) != 0.0).then(|| conv3(u, k_max)).transpose())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut interior = 0.0f64;
    for m in 1..=k_max {
        let p = &profiles[m - 1];
        let m2 = (m * m) as f64;
        for j in 1..n - 1 {
            let mut form = (2.0 * p[j] - p[j - 1] - p[j + 1]) / h;
            for cell in [j - 1, j] {
                for ((y, w, u), cube) in cells[cell].iter().zip(&cubes[cell]) {
                    let hat = 1.0 - (y - ys[j]).abs() / h;
                    if hat <= 0.0 {
                        continue;
                    }
                    let coef = 1.0 - lambda * spec.v0(*y) - spec.w(*y);
                    let mut v = m2 * coef * u.get(m);
                    if let Some(cb) = cube {
                        v += 0.25 * m2 * spec.gamma_at(*y) * cb.get(m);
                    }
                    form += w * v * hat;
                }
            }
            if j == c {
                form -= m2 * spec.alpha * p[j];
            }
            interior = interior.max((form / h).abs());
        }
    }
    Ok(WeakResidual { interior, boundary: 0.0 })
}
