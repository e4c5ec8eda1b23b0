use criterion::{criterion_group, criterion_main};

criterion_group!(benches, rewire_bench::simulators, rewire_bench::integrator);
criterion_main!(benches);
