use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use qrotor::linalg::lowest_eigenpair;
use qrotor::local::DEFAULT_N_MAX;
use qrotor::{
    build_hamiltonian, ground_state, idmrg_fixed_point, truncated_svd, DmrgSettings, IdmrgSettings, KrylovSettings,
    ModelParams, TruncationSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn svd(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // a two-site wavefunction at chi = 32, d = 9
    let (m, n) = (32 * 9, 9 * 32);
    let theta: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec = TruncationSpec::new(32, 1e-10).unwrap();
    c.bench_function("truncated_svd 288x288", |b| {
        b.iter(|| truncated_svd(&theta, m, n, &spec).unwrap())
    });
}

fn lanczos(c: &mut Criterion) {
    // tridiagonal test operator of dimension 4096
    let n = 4096;
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            let mut v = 2.0 * x[i] + 0.001 * i as f64 * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            y[i] = v;
        }
    };
    let settings = KrylovSettings::default();
    c.bench_function("lanczos n=4096", |b| {
        b.iter(|| lowest_eigenpair(apply, n, None, &settings).unwrap())
    });
}

fn dmrg(c: &mut Criterion) {
    let p = ModelParams::new(16, DEFAULT_N_MAX).ej(2.0).ej2(0.3);
    let h = build_hamiltonian(&p).unwrap();
    let mut s = DmrgSettings::for_length(16).chi_max(24);
    s.max_sweeps = 2;
    let mut g = c.benchmark_group("dmrg");
    g.sample_size(10);
    g.bench_function("two sweeps L=16 chi=24", |b| b.iter(|| ground_state(&h, &s).unwrap()));
    g.bench_function("idmrg chi=16", |b| {
        b.iter_batched(
            || IdmrgSettings::default().chi_max(16),
            |s| idmrg_fixed_point(&p, &s).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, svd, lanczos, dmrg);
criterion_main!(benches);
