use rand::Rng;
use touchstone_core::neuro::train::batch_gradient;
use touchstone_core::neuro::*;
use touchstone_core::par::Exec;
use touchstone_core::seeding;

fn random_inputs(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeding::rng(seed, &[99]);
    (0..n)
        .map(|k| {
            let level = 3.0 * k as f64 - 2.0;
            (0..cfg.sample_len()).map(|_| level + rng.gen_range(-1.0..1.0)).collect()
        })
        .collect()
}

fn max_relative_gradient_error(model: &HardnessModel, inputs: &[Vec<f64>], labels: &[f64], seeds: &[u64]) -> f64 {
    let (_, grads) = batch_gradient(model, inputs, labels, seeds, Exec::Sequential).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (pi, p) in model.params.params.iter().enumerate() {
        for k in 0..p.value.len() {
            let mut plus = model.clone();
            plus.params.params[pi].value[k] += h;
            let mut minus = model.clone();
            minus.params.params[pi].value[k] -= h;
            let lp = batch_gradient(&plus, inputs, labels, seeds, Exec::Sequential).unwrap().0.total;
            let lm = batch_gradient(&minus, inputs, labels, seeds, Exec::Sequential).unwrap().0.total;
            let num = (lp - lm) / (2.0 * h);
            let ana = grads.0[pi][k];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
                if rel > 1e-4 {
                    eprintln!("{}[{k}]: analytic {ana} numeric {num}", p.name);
                }
            }
        }
    }
    worst
}

#[test]
fn finite_difference_gradient_check_on_reduced_model() {
    let cfg = ModelConfig::tiny();
    let model = HardnessModel::new(cfg.clone(), 6).unwrap();
    let inputs = random_inputs(&cfg, 4, 1);
    let preds: Vec<f64> = inputs.iter().map(|x| model.predict_one(x).unwrap()).collect();
    let labels: Vec<f64> = preds.iter().enumerate().map(|(i, p)| p + [1.5, -2.0, 0.5, 3.0][i]).collect();
    let loss = hardness_loss(&preds, &labels).unwrap();
    assert!(loss.variance > 1e-3, "penalty must sit on its active branch");
    let seeds = [11, 12, 13, 14];
    let worst = max_relative_gradient_error(&model, &inputs, &labels, &seeds);
    println!("max relative error {worst:e}");
    assert!(worst < 1e-4);
}
