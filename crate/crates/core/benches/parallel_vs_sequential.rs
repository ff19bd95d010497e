use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use necklab::experiments::{wente_sweep, DiskSpec, WenteSweepConfig};
use necklab::grid::build_annulus;
use necklab::lorentz::lorentz_norms;
use necklab::maps::{MapDomain, RationalMapSpec, SphereMap, SphereMesh};
use necklab::par;
use necklab::spectral::assemble_jacobi;

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn bench_sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("lorentz_256");
    let grid = build_annulus(1.0, (-8f64).exp(), 256, 256).unwrap();
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let f = grid.sample(|r, _| 1.0 / r);
                black_box(lorentz_norms(&grid, &f).unwrap())
            })
        });
    }
    par::set_sequential(false);
    g.finish();
}

fn bench_assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("jacobi_assembly_64");
    let mesh = SphereMesh::uniform(64, 64).unwrap();
    let map = SphereMap::sample(&RationalMapSpec::identity(), Arc::new(MapDomain::Sphere(mesh)));
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(assemble_jacobi(&map).unwrap())));
    }
    par::set_sequential(false);
    g.finish();
}

fn bench_wente(c: &mut Criterion) {
    let mut g = c.benchmark_group("wente_sweep_small");
    g.sample_size(10);
    let cfg = WenteSweepConfig {
        modes: vec![1, 4, 8],
        scale_exponents: vec![2, 4],
        disk: DiskSpec {
            core: 1.0 / 64.0,
            n_core: 16,
            ds: 0.02,
            n_theta: 64,
        },
        ..WenteSweepConfig::default()
    };
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(wente_sweep(&cfg).unwrap())));
    }
    par::set_sequential(false);
    g.finish();
}

criterion_group!(benches, bench_sampling, bench_assembly, bench_wente);
criterion_main!(benches);
