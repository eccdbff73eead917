//! Hot kernels. Run once with the default features and once with
//! `--no-default-features`; the benchmark ids carry the build mode, so the
//! two runs land side by side in the criterion report.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use otprox::transport::{build_cost, omt_prox, GridSpec, KernelOperator, SinkhornSettings};
use otprox::{
    wright_omega_elementwise, LinearOperator, OmegaEvalPolicy, ParallelGeometry, RayTransform,
};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn ramp(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + ((i * 37) % 101) as f64 / 101.0).collect()
}

fn kernel_products(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel_apply");
    for n in [32usize, 64] {
        let cost = build_cost(GridSpec::square(n), 2.0, 20.0).unwrap();
        let fft = KernelOperator::new(cost.clone(), 1.0).unwrap();
        let v = ramp(n * n);
        g.bench_with_input(BenchmarkId::new(format!("fft/{MODE}"), n), &v, |b, v| {
            b.iter(|| fft.apply_nonneg(black_box(v), false).unwrap())
        });
        if n <= 32 {
            let dense = KernelOperator::new_dense(&cost, 1.0).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("dense/{MODE}"), n), &v, |b, v| {
                b.iter(|| dense.apply_nonneg(black_box(v), false).unwrap())
            });
        }
    }
    g.finish();
}

fn ray_transform(c: &mut Criterion) {
    let pi = std::f64::consts::PI;
    let geom = ParallelGeometry::new(64, 64, 30, (pi / 4.0, 3.0 * pi / 4.0), 100).unwrap();
    let stored = Arc::new(RayTransform::new(geom.clone()).unwrap());
    let free = Arc::new(RayTransform::matrix_free(geom).unwrap());
    let x = ramp(64 * 64);
    let y = ramp(30 * 100);
    let mut g = c.benchmark_group("ray_64");
    for (name, op) in [("stored", &stored), ("matrix_free", &free)] {
        g.bench_function(format!("apply/{name}/{MODE}"), |b| {
            b.iter(|| op.apply(black_box(&x)).unwrap())
        });
        g.bench_function(format!("adjoint/{name}/{MODE}"), |b| {
            b.iter(|| op.adjoint(black_box(&y)).unwrap())
        });
    }
    g.finish();
}

fn omega(c: &mut Criterion) {
    let xs: Vec<f64> = (0..4096).map(|i| -20.0 + 40.0 * i as f64 / 4096.0).collect();
    let policy = OmegaEvalPolicy::default();
    c.bench_function(&format!("omega_4096/{MODE}"), |b| {
        b.iter(|| wright_omega_elementwise(black_box(&xs), &policy).unwrap())
    });
}

fn prox(c: &mut Criterion) {
    let n = 32;
    let kernel = KernelOperator::new(build_cost(GridSpec::square(n), 2.0, 20.0).unwrap(), 1.0).unwrap();
    let mu0 = ramp(n * n);
    let mu1: Vec<f64> = mu0.iter().rev().cloned().collect();
    let settings = SinkhornSettings::fixed(50);
    c.bench_function(&format!("omt_prox_32_50it/{MODE}"), |b| {
        b.iter(|| omt_prox(black_box(&mu0), &mu1, 20.0, &kernel, &settings, None).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernel_products, ray_transform, omega, prox
}
criterion_main!(benches);
