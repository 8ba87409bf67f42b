use chdg_bench::Fixture;
use chdg_core::assembly::{assemble_dg_mass, assemble_ip_laplacian, MassWeight};
use chdg_core::chcore::{SchurPreconditioner, SwappedJacobian};
use chdg_core::linalg::{BandedLu, LinearOperator};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const SIZES: [usize; 2] = [16, 32];

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for n in SIZES {
        let fx = Fixture::spinodal(n);
        let disc = &fx.problem.disc;
        g.bench_with_input(BenchmarkId::new("weighted_mass", n), &fx.phi, |b, phi| {
            b.iter(|| assemble_dg_mass(disc, MassWeight::FieldSquared(black_box(phi))).unwrap())
        });
        g.bench_function(BenchmarkId::new("ip_laplacian", n), |b| b.iter(|| assemble_ip_laplacian(disc, 10.0)));
    }
    g.finish();
}

fn banded_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("banded_lu");
    for n in SIZES {
        let fx = Fixture::spinodal(n);
        let a = fx.problem.mass.add(1.0, &fx.problem.lap, 1e-3);
        let lu = BandedLu::factor(&a, None).unwrap();
        g.bench_function(BenchmarkId::new("factor", n), |b| b.iter(|| BandedLu::factor(black_box(&a), None).unwrap()));
        g.bench_with_input(BenchmarkId::new("solve", n), &fx.phi, |b, rhs| b.iter(|| lu.solve(black_box(rhs))));
    }
    g.finish();
}

fn stage_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("stage");
    for n in SIZES {
        let fx = Fixture::spinodal(n);
        let state = fx.state();
        g.bench_function(BenchmarkId::new("residual", n), |b| {
            b.iter(|| fx.problem.residual(black_box(&state), &fx.phi, &fx.ctx, 0.0))
        });
        let jac = SwappedJacobian::new(&fx.problem, &fx.phi, fx.ctx, 0.0).unwrap();
        let pc = SchurPreconditioner::new(&jac, 0.0).unwrap();
        let x = vec![1.0; jac.nrows()];
        let mut y = vec![0.0; jac.nrows()];
        g.bench_function(BenchmarkId::new("jacobian_apply", n), |b| b.iter(|| jac.apply(black_box(&x), &mut y)));
        g.bench_function(BenchmarkId::new("preconditioner_apply", n), |b| b.iter(|| pc.apply(black_box(&x), &mut y)));
    }
    g.finish();
}

criterion_group!(benches, assembly, banded_solve, stage_kernels);
criterion_main!(benches);
