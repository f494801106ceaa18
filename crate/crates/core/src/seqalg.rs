//! Odd sine-series sequences and their convolution algebra.
//!
//! An [`OddSpectrum`] stores `a_1..a_K`; the full-lattice sequence is
//! `a_{−k} = −a_k`, `a_0 = 0`. Products of sine series correspond to
//! convolutions on the full lattice, which [`LatticeSeq`] represents
//! without any symmetry assumption.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compensated (Neumaier) accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Truncated odd real sequence `(a_k)_{k=1..K}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddSpectrum {
    coeffs: Vec<f64>,
}

/// Scaling of the basis sequence `e^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisNorm {
    /// `e^m_m = 1`.
    Unit,
    /// `e^m_m = 1/√2`, unit `l²` norm on the full lattice.
    InvSqrt2,
}

impl OddSpectrum {
    pub fn zeros(k_max: usize) -> Self {
        Self { coeffs: vec![0.0; k_max] }
    }

    /// `coeffs[i]` is `a_{i+1}`.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn k_max(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `a_k` for any integer `k`, zero outside `|k| ≤ K`.
    pub fn at(&self, k: i64) -> f64 {
        let n = k.unsigned_abs() as usize;
        if n == 0 || n > self.coeffs.len() {
            0.0
        } else if k > 0 {
            self.coeffs[n - 1]
        } else {
            -self.coeffs[n - 1]
        }
    }

    /// `a_k` for `k ≥ 1`.
    pub fn get(&self, k: usize) -> f64 {
        self.coeffs[k - 1]
    }

    pub fn set(&mut self, k: usize, v: f64) {
        self.coeffs[k - 1] = v;
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|x| c * x).collect() }
    }

    /// Zero-pads or truncates to `k_max` modes.
    pub fn resized(&self, k_max: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(k_max, 0.0);
        Self { coeffs }
    }

    pub fn to_lattice(&self) -> LatticeSeq {
        let k = self.coeffs.len() as i64;
        LatticeSeq::from_fn(-k, k, |j| self.at(j))
    }
}

/// Basis sequence `e^m` with `K` stored modes.
pub fn basis_e(m: usize, k_max: usize, norm: BasisNorm) -> OddSpectrum {
    let mut e = OddSpectrum::zeros(k_max);
    e.set(
        m,
        match norm {
            BasisNorm::Unit => 1.0,
            BasisNorm::InvSqrt2 => std::f64::consts::FRAC_1_SQRT_2,
        },
    );
    e
}

/// Finitely supported sequence on `min_index..=min_index+len−1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSeq {
    min_index: i64,
    vals: Vec<f64>,
}

impl LatticeSeq {
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Self {
        Self { min_index: lo, vals: (lo..=hi).map(f).collect() }
    }

    pub fn at(&self, j: i64) -> f64 {
        let i = j - self.min_index;
        if i < 0 || i as usize >= self.vals.len() {
            0.0
        } else {
            self.vals[i as usize]
        }
    }

    pub fn min_index(&self) -> i64 {
        self.min_index
    }

    pub fn max_index(&self) -> i64 {
        self.min_index + self.vals.len() as i64 - 1
    }

    /// Full convolution `(self ∗ other)_j = Σ_m self_m other_{j−m}`.
    pub fn conv(&self, other: &LatticeSeq) -> LatticeSeq {
        let lo = self.min_index + other.min_index;
        let hi = self.max_index() + other.max_index();
        LatticeSeq::from_fn(lo, hi, |j| {
            let mut acc = NeumaierSum::default();
            let m_lo = self.min_index.max(j - other.max_index());
            let m_hi = self.max_index().min(j - other.min_index);
            for m in m_lo..=m_hi {
                acc.add(self.at(m) * other.at(j - m));
            }
            acc.value()
        })
    }

    /// `Σ (1+|j|)^{2s} |x_j|²`, square-rooted.
    pub fn hs_norm(&self, s: f64) -> f64 {
        (self.min_index..=self.max_index())
            .map(|j| (1.0 + j.abs() as f64).powf(2.0 * s) * self.at(j).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.vals.iter().map(|x| x.abs()).sum()
    }

    /// Positive-index part, assuming oddness.
    fn positive_part(&self, out_len: usize) -> OddSpectrum {
        OddSpectrum::from_coeffs((1..=out_len as i64).map(|k| self.at(k)).collect())
    }
}

/// `(a∗a∗a)_k`, `k = 1..out_len`, summed over the full support `−K..K`.
pub fn conv3(a: &OddSpectrum, out_len: usize) -> Result<OddSpectrum> {
    check_support(a, out_len)?;
    let l = a.to_lattice();
    Ok(l.conv(&l).conv(&l).positive_part(out_len))
}

/// Directional derivative of the cube, `3(a∗a∗h)_k`, `k = 1..out_len`.
pub fn conv3_dir(a: &OddSpectrum, h: &OddSpectrum, out_len: usize) -> Result<OddSpectrum> {
    if a.k_max() != h.k_max() {
        return Err(Error::Mismatch { left: a.k_max(), right: h.k_max() });
    }
    check_support(a, out_len)?;
    let la = a.to_lattice();
    let c = la.conv(&la).conv(&h.to_lattice()).positive_part(out_len);
    Ok(c.scaled(3.0))
}

/// `a∗a` on the full lattice (an even sequence on `−2K..2K`).
pub fn square(a: &OddSpectrum) -> LatticeSeq {
    let l = a.to_lattice();
    l.conv(&l)
}

fn check_support(a: &OddSpectrum, out_len: usize) -> Result<()> {
    if out_len > 3 * a.k_max() {
        Err(Error::Truncation { requested: out_len, support: 3 * a.k_max() })
    } else {
        Ok(())
    }
}

/// `‖a‖_{h^s}` over the full lattice: `Σ_k 2(1+k)^{2s} a_k²`, square-rooted.
pub fn hs_norm(a: &OddSpectrum, s: f64) -> f64 {
    a.coeffs
        .iter()
        .enumerate()
        .map(|(i, x)| 2.0 * (2.0 + i as f64).powf(2.0 * s) * x * x)
        .sum::<f64>()
        .sqrt()
}

/// `‖a‖_{l¹}` over the full lattice.
pub fn l1_norm(a: &OddSpectrum) -> f64 {
    2.0 * a.coeffs.iter().map(|x| x.abs()).sum::<f64>()
}

/// `Σ_{k=1..K} a_k sin(kx)`.
pub fn sine_eval(a: &OddSpectrum, x: f64) -> f64 {
    a.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * ((i + 1) as f64 * x).sin())
        .sum()
}
