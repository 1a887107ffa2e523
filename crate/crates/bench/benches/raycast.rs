use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use railsim_bench::random_triangles;
use railsim_core::geom::Vec3;
use railsim_core::raycast::{cast_brute_force, Accelerator, Ray, DEFAULT_T_MIN};

fn rays(n: usize) -> Vec<Ray> {
    (0..n)
        .map(|i| {
            let a = i as f64 * 0.618_033_988_75 * std::f64::consts::TAU;
            let e = ((i % 32) as f64 / 32.0 - 0.5) * 0.6;
            Ray::new(
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(a.cos() * e.cos(), a.sin() * e.cos(), e.sin()),
                200.0,
            )
        })
        .collect()
}

fn build(c: &mut Criterion) {
    let mut g = c.benchmark_group("accelerator_build");
    g.sample_size(10);
    for n in [10_000, 100_000] {
        let tris = random_triangles(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &tris, |b, t| b.iter(|| Accelerator::build(t)));
    }
    g.finish();
}

fn cast(c: &mut Criterion) {
    let tris = random_triangles(10_000, 2);
    let accel = Accelerator::build(&tris);
    let rays = rays(1024);
    let mut g = c.benchmark_group("cast_1024_rays");
    g.bench_function("accelerated", |b| {
        b.iter(|| rays.iter().filter(|r| accel.cast(r).is_some()).count())
    });
    g.sample_size(10);
    g.bench_function("brute_force", |b| {
        b.iter(|| {
            rays.iter()
                .filter(|r| cast_brute_force(&tris, r, DEFAULT_T_MIN).is_some())
                .count()
        })
    });
    g.finish();
}

criterion_group!(benches, build, cast);
criterion_main!(benches);
