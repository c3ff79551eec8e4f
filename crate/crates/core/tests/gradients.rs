mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssm_core::backend::{DifferentiableLm, TinyBackend, Vocab};
use ssm_core::baselines::{head_ce_grad, head_ce_loss, HeadLearner, HeadSetting};
use ssm_core::casting::CastConfig;
use ssm_core::datasets::Example;
use ssm_core::scoring::Target;
use ssm_core::training::{Learner, MarginLossConfig, SsmLearner};

fn central_difference<L: Learner>(learner: &mut L, example: &Example, h: f64) -> Vec<f64> {
    let base = learner.parameters();
    let mut scratch = vec![0.0; base.len()];
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] += h;
            learner.set_parameters(&p);
            let up = learner.accumulate(example, &mut scratch).unwrap();
            p[i] -= 2.0 * h;
            learner.set_parameters(&p);
            let down = learner.accumulate(example, &mut scratch).unwrap();
            learner.set_parameters(&base);
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-12)
}

fn backend(seed: u64) -> TinyBackend {
    TinyBackend::init(Vocab::new(common::WORDS), 4, seed).unwrap()
}

#[test]
fn ssm_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for i in 0..40 {
        let ex = common::random_example(&mut rng, i, 2);
        let target = if i % 2 == 0 { Target::Premise } else { Target::Hypothesis };
        let loss = MarginLossConfig {
            eta: 5.0,
            target,
            grams: 2,
        };
        let mut learner = SsmLearner::new(backend(i as u64), loss, CastConfig::builtin().clone());
        let mut analytic = vec![0.0; learner.num_parameters()];
        let value = learner.accumulate(&ex, &mut analytic).unwrap();
        if value == 0.0 {
            continue;
        }
        let numeric = central_difference(&mut learner, &ex, 1e-6);
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "example {i}: relative error {err:e}");
        checked += 1;
    }
    assert!(checked > 30);
}

#[test]
fn head_learner_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for setting in [HeadSetting::HeadCe, HeadSetting::HeadMargin] {
        for i in 0..20 {
            let ex = common::random_example(&mut rng, i, 1);
            let mut learner = HeadLearner::new(backend(i as u64), setting, i as u64, 5.0, CastConfig::builtin().clone());
            let mut analytic = vec![0.0; learner.num_parameters()];
            learner.accumulate(&ex, &mut analytic).unwrap();
            let numeric = central_difference(&mut learner, &ex, 1e-6);
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-5, "{setting:?} example {i}: relative error {err:e}");
        }
    }
}

#[test]
fn pooled_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let mut b = backend(seed);
        let mut w = common::random_words(&mut rng, 6);
        w.push("unseen".into());
        let upstream: Vec<f64> = (0..b.representation_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |b: &TinyBackend| b.pooled(&w).iter().zip(&upstream).map(|(p, u)| p * u).sum::<f64>();
        let mut analytic = vec![0.0; b.parameters().len()];
        b.accumulate_pooled_gradient(&w, &upstream, &mut analytic);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|i| {
                let orig = b.parameters()[i];
                b.parameters_mut()[i] = orig + h;
                let up = f(&b);
                b.parameters_mut()[i] = orig - h;
                let down = f(&b);
                b.parameters_mut()[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect();
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = rng.gen_range(2..=5);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let gold = rng.gen_range(0..n);
        let grad = head_ce_grad(&logits, gold).unwrap();
        let h = 1e-5;
        for j in 0..n {
            let mut up = logits.clone();
            let mut down = logits.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (head_ce_loss(&up, gold).unwrap() - head_ce_loss(&down, gold).unwrap()) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(fd.abs()).max(1.0);
            assert!(rel < 1e-6, "logit {j}: {} vs {fd}", grad[j]);
        }
    }
}
