use std::path::PathBuf;

use dexpipe::policy::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_obs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..OBS_DIM).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn random_action(rng: &mut ChaCha8Rng) -> Action {
    let mut a = [0.0; ACTION_DIM];
    for k in 0..REGRESSION_DIM {
        a[k] = rng.random_range(-0.9..0.9) * ACTION_CLAMP[k];
    }
    a[13] = if rng.random_bool(0.3) { 1.0 } else { 0.0 };
    Action::from_array(&a)
}

/// Floored relative error used by the gradient checks.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn loss(p: &PolicyParams, obs: &[Vec<f64>], t: &[Action]) -> f64 {
    p.grad(obs, t).unwrap().0
}

#[test]
fn gradient_matches_central_differences_on_every_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for pair in 0..10 {
        let mut p = PolicyParams::init(&[12, 10], 1.0, pair);
        let obs = random_obs(&mut rng, 3);
        let t: Vec<_> = (0..3).map(|_| random_action(&mut rng)).collect();
        let (_, g) = p.grad(&obs, &t).unwrap();
        for k in 0..g.len() {
            let v = p.net.params()[k];
            p.net.params_mut()[k] = v + h;
            let lp = loss(&p, &obs, &t);
            p.net.params_mut()[k] = v - h;
            let lm = loss(&p, &obs, &t);
            p.net.params_mut()[k] = v;
            worst = worst.max(rel_err(g[k], (lp - lm) / (2.0 * h)));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn memorizes_a_constant_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut obs = [0.0; OBS_DIM];
    obs.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let sample = BcSample {
        obs,
        action: random_action(&mut rng),
    };
    let hyper = BcHyper {
        epochs: 2000,
        batch: 1,
        lr: 1e-3,
        ..BcHyper::default()
    };
    let (_, report) = train_bc(&[sample; 1], &hyper).unwrap();
    assert_eq!(report.steps, 2000);
    // terminate label 0 or 1 keeps a residual BCE; the regression part must vanish
    let p = train_bc(&[sample], &hyper).unwrap().0;
    let a = p.act(&obs).unwrap();
    let err: f64 = a.normalized().iter().zip(sample.action.normalized()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 13.0;
    assert!(err < 1e-4, "regression mse {err}");
    let (after, _) = p.grad(&[p.standardize(&obs)], &[sample.action]).unwrap();
    assert!(after < 1e-4, "loss after 2000 steps {after} (curve end {})", report.final_loss);
}

fn small_dataset(seed: u64, n: usize) -> Vec<BcSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut obs = [0.0; OBS_DIM];
            obs.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            BcSample {
                obs,
                action: random_action(&mut rng),
            }
        })
        .collect()
}

#[test]
fn same_seed_gives_identical_params_regardless_of_threads() {
    let data = small_dataset(3, 300);
    let hyper = BcHyper {
        epochs: 3,
        hidden: vec![32, 32],
        ..BcHyper::default()
    };
    let (a, _) = train_bc(&data, &hyper).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (b, _) = pool.install(|| train_bc(&data, &hyper).unwrap());
    assert_eq!(a, b);
}

#[test]
fn shard_gradients_sum_to_the_full_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = PolicyParams::init(&HIDDEN, 1.0, 1);
    let obs = random_obs(&mut rng, 64);
    let t: Vec<_> = (0..64).map(|_| random_action(&mut rng)).collect();
    let (_, full) = p.grad(&obs, &t).unwrap();
    let mut summed = vec![0.0; full.len()];
    for k in 0..4 {
        let r = k * 16..(k + 1) * 16;
        let (_, g) = p.grad(&obs[r.clone()], &t[r]).unwrap();
        summed.iter_mut().zip(&g).for_each(|(s, v)| *s += v * 16.0 / 64.0);
    }
    let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in full.iter().zip(&summed) {
        assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
    }
}

#[test]
fn outputs_stay_inside_the_caps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let obs = random_obs(&mut rng, 1000);
    for seed in 0..20 {
        let mut p = PolicyParams::init(&HIDDEN, 1.0, seed);
        p.net.params_mut().iter_mut().for_each(|v| *v *= 50.0);
        for a in p.forward_many(&obs).unwrap() {
            let arr = a.to_array();
            for k in 0..REGRESSION_DIM {
                assert!(arr[k].abs() <= ACTION_CLAMP[k]);
            }
            assert!((0.0..=1.0).contains(&a.terminate));
        }
    }
}

#[test]
fn empty_dataset_is_rejected() {
    assert!(train_bc(&[], &BcHyper::default()).is_err());
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden_obs() -> Observation {
    std::array::from_fn(|k| (0.37 * k as f64).sin() * 1.5)
}

/// The fixtures were produced once by this forward pass and frozen; set
/// DEXPIPE_REGEN_GOLDEN=1 to rewrite them deliberately.
#[test]
fn golden_model_reproduces_golden_action() {
    if std::env::var_os("DEXPIPE_REGEN_GOLDEN").is_some() {
        let mut p = PolicyParams::init(&HIDDEN, 1.0, 2024);
        p.stats = Some(Standardizer {
            mean: (0..OBS_DIM).map(|k| 0.01 * k as f64).collect(),
            std: (0..OBS_DIM).map(|k| 1.0 + 0.02 * k as f64).collect(),
        });
        p.quantize();
        p.save(&fixture("golden_policy.dxpm")).unwrap();
        let a = p.act(&golden_obs()).unwrap();
        std::fs::write(fixture("golden_action.json"), serde_json::to_string_pretty(&a.to_array().to_vec()).unwrap()).unwrap();
    }
    let p = PolicyParams::load(&fixture("golden_policy.dxpm")).unwrap();
    let want: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(fixture("golden_action.json")).unwrap()).unwrap();
    let got = p.act(&golden_obs()).unwrap().to_array();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{got:?} vs {want:?}");
    }
}

/// Means of consecutive 100-step windows of `curve`.
fn smoothed(curve: &[f64]) -> Vec<f64> {
    curve.chunks_exact(100).map(|w| w.iter().sum::<f64>() / 100.0).collect()
}

#[test]
fn smoothed_loss_is_non_increasing_on_demonstrations() {
    use dexpipe::datagen::{generate_episodes, samples_of, GenerateOptions};
    let sim = dexpipe::sim::Simulator::canonical();
    let (eps, _) = generate_episodes(&sim, &dexpipe::ablation::sim_spec(12), 150, &GenerateOptions::default()).unwrap();
    let (_, report) = train_bc(&samples_of(&eps), &BcHyper::default()).unwrap();
    let s = smoothed(&report.curve);
    assert!(s.len() >= 10);
    for (k, w) in s.windows(2).enumerate() {
        assert!(w[1] <= w[0], "window {k}: {} -> {}", w[0], w[1]);
    }
    assert!(s[s.len() - 1] < 0.05 * s[0]);
}
