use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdlm_bench::{model, prompt};
use mdlm_core::predictor::MaskPredictor;
use mdlm_core::Vocab;

fn forward_backward(c: &mut Criterion) {
    let vocab = Vocab::toy();
    let mut g = c.benchmark_group("model");
    for d in [32usize, 64] {
        let params = model(&vocab, d, 64);
        let p = prompt(&vocab);
        let response = vec![vocab.mask_id(); 64];
        let mut tokens = p.clone();
        tokens.extend_from_slice(&response);
        g.bench_with_input(BenchmarkId::new("predict", d), &d, |b, _| {
            b.iter(|| params.predict(&p, &response).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("forward_backward", d), &d, |b, _| {
            let cache = params.forward_cached(&tokens).unwrap();
            let dlogits = vec![1e-3; cache.logits.len()];
            let mut grads = vec![0.0; params.len()];
            b.iter(|| {
                let cache = params.forward_cached(&tokens).unwrap();
                params.backward(&cache, &dlogits, &mut grads);
            })
        });
    }
    g.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
