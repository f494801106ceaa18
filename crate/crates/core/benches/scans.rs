//! Sequential vs rayon execution of the per-wavenumber scans and branch halves.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use travwave::branch::distributional::trace;
use travwave::branch::regular::regular_trace;
use travwave::dispersion::kernel_scan;
use travwave::domain::{BifurcationPoint, GammaInterval, PotentialSpec, SolverConfig};
use travwave::par::Exec;
use travwave::schrod::{build_operator, inverse_norms, smallest_eigs};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dispersion(c: &mut Criterion) {
    let spec = PotentialSpec::p1_distributional(2f64.sqrt() / 2.0, 1.0);
    let mut g = c.benchmark_group("kernel_scan");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "k1..40x2048"), |b| {
            b.iter(|| kernel_scan(black_box(&spec), 1..=40, (0.3, 0.7), 2048, exec).unwrap())
        });
    }
    g.finish();
}

fn spectral_gap(c: &mut Criterion) {
    let spec = PotentialSpec::p1_distributional(2.0, 1.0);
    let cfg = SolverConfig { y_max: 20.0, n_y: 2001, ..SolverConfig::default() };
    let ks: Vec<usize> = (2..=16).collect();
    let mut g = c.benchmark_group("gap_scan");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "k2..16"), |b| {
            b.iter(|| {
                exec.map(&ks, |&k| {
                    let op = build_operator(&spec, k, 0.0, &cfg).unwrap();
                    let gap = smallest_eigs(&op, 1).unwrap()[0].value;
                    (gap, inverse_norms(&op, None, 10).unwrap())
                })
            })
        });
    }
    g.finish();
}

fn branches(c: &mut Criterion) {
    let bp = BifurcationPoint { k_star: 1, lambda_star: 0.0, alpha: 2.0 };
    let dist = PotentialSpec::p1_distributional(2.0, 1.0);
    let dcfg = SolverConfig { k_max: 12, eps_max: 0.1, n_branch: 32, ..SolverConfig::default() };
    let reg = PotentialSpec::p1_regular(2.0, vec![GammaInterval { y_lo: -1.0, y_hi: 1.0, value: 1.0 }]);
    let rcfg = SolverConfig { k_max: 6, y_max: 20.0, n_y: 1001, tol_newton: 1e-9, n_branch: 8, ..SolverConfig::default() };
    let mut g = c.benchmark_group("trace");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "distributional"), |b| {
            b.iter(|| trace(black_box(&dist), &bp, &dcfg, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new(name, "regular"), |b| {
            b.iter(|| regular_trace(black_box(&reg), &bp, &rcfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dispersion, spectral_gap, branches);
criterion_main!(benches);
