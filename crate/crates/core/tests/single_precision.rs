use myis::estimators::kong_ess;
use myis::models::{make_toy, ToySpec};
use myis::prox::GaussianModel;
use myis::samplers::run_chain;
use myis::{EnvelopeView, Functional, SamplerConfig, SamplerKind, WeightedSample};

#[test]
fn envelope_agrees_across_precisions() {
    let m32 = make_toy::<f32>(ToySpec { beta: 4, d: 3 }).unwrap();
    let m64 = make_toy::<f64>(ToySpec { beta: 4, d: 3 }).unwrap();
    let x32 = [0.3f32, -1.7, 2.2];
    let x64: Vec<f64> = x32.iter().map(|v| *v as f64).collect();
    let v32 = EnvelopeView::new(&m32, 0.1f32).unwrap().evaluate(&x32).unwrap();
    let v64 = EnvelopeView::new(&m64, 0.1f64).unwrap().evaluate(&x64).unwrap();
    assert!(((v32.value as f64) - v64.value).abs() <= 1e-5 * v64.value.abs().max(1.0));
    for (a, b) in v32.grad.iter().zip(&v64.grad) {
        assert!(((*a as f64) - b).abs() <= 1e-4 * b.abs().max(1.0));
    }
}

#[test]
fn f32_chain_and_estimates() {
    let model = GaussianModel::<f32>::isotropic(2, 1.0).unwrap();
    let cfg = SamplerConfig::<f32>::new(SamplerKind::MyHmc, 5000).with_seed(2);
    let trace = run_chain(&cfg, &model, 0.5).unwrap();
    assert!(trace.log_weights.iter().all(|w| *w <= 0.0));
    let ws = WeightedSample::from_trace(&trace, &Functional::Identity).unwrap();
    let ne = kong_ess(&ws).unwrap() / 5000.0;
    assert!(ne > 0.8 && ne <= 1.0, "n_e/n {ne}");
}
