//! Sim/nominal data-mix ablation: three behavior-cloning setups evaluated on
//! held-out object variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{derive_seed, mix, samples_of};
use crate::episode::EpisodeRecord;
use crate::error::Result;
use crate::policy::{train_bc, BcHyper, PolicyParams};
use crate::sequencer::{run_grasp_lift, run_reach, SequencerConfig};
use crate::sim::{ObjectShape, PositionRange, RandomizationSpec, Simulator};

/// Training distribution of the simulated demonstrations.
pub fn sim_spec(seed: u64) -> RandomizationSpec {
    RandomizationSpec {
        position_range: PositionRange {
            x: [-0.50, -0.40],
            y: [-0.06, 0.06],
        },
        scale_range: [0.8, 1.5],
        shape_set: vec![ObjectShape::Box, ObjectShape::DiamondPrism],
        appearance_noise_sigma: 0.015,
        seed,
        ..RandomizationSpec::nominal()
    }
}

pub fn nominal_spec(seed: u64) -> RandomizationSpec {
    RandomizationSpec::nominal().with_seed(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub spec: RandomizationSpec,
}

/// Held-out objects: the nominal box, the same box with perturbed features,
/// a diamond prism and a larger box.
pub fn variants() -> Vec<Variant> {
    let base = RandomizationSpec::nominal();
    let v = |name: &str, spec: RandomizationSpec| Variant {
        name: name.into(),
        spec,
    };
    vec![
        v("nominal_box", base.clone()),
        v(
            "recolored_box",
            RandomizationSpec {
                appearance_noise_sigma: 0.01,
                ..base.clone()
            },
        ),
        v(
            "diamond_prism",
            RandomizationSpec {
                shape_set: vec![ObjectShape::DiamondPrism],
                ..base.clone()
            },
        ),
        v(
            "larger_box",
            RandomizationSpec {
                scale_range: [1.4, 1.4],
                ..base
            },
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// `(sim, nominal)` episode counts of each setup.
    pub setups: Vec<(usize, usize)>,
    pub eval_seeds: usize,
    pub seed: u64,
    pub bc: BcHyper,
    pub sequencer: SequencerConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            setups: vec![(0, 40), (4000, 40), (4000, 0)],
            eval_seeds: 20,
            seed: 0,
            bc: BcHyper::default(),
            sequencer: SequencerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub variant: String,
    pub successes: usize,
    pub trials: usize,
}

impl VariantScore {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupResult {
    /// `"sim/nominal"`, e.g. `"4000/40"`.
    pub label: String,
    pub sim: usize,
    pub nominal: usize,
    pub final_loss: f64,
    pub scores: Vec<VariantScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: AblationConfig,
    pub rows: Vec<SetupResult>,
}

/// Grasp-and-lift successes of `policy` on `variant` over `n` held-out seeds.
pub fn evaluate_variant(
    sim: &Simulator,
    policy: &PolicyParams,
    variant: &Variant,
    n: usize,
    seed: u64,
    seq: &SequencerConfig,
) -> Result<usize> {
    let wins: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let spec = variant.spec.with_seed(derive_seed(seed, i as u64));
            let spawned = sim.spawn(&spec)?;
            let (start, reach) = run_reach(sim, &spawned, seq);
            if !reach.outcome.is_success() {
                return Ok(false);
            }
            Ok(run_grasp_lift(sim, &start, policy, seq).1.outcome.is_success())
        })
        .collect::<Result<_>>()?;
    Ok(wins.into_iter().filter(|&w| w).count())
}

/// Trains every setup on a mix of the two pools and scores it on every variant.
pub fn run_ablation(
    sim: &Simulator,
    sim_pool: &[EpisodeRecord],
    nominal_pool: &[EpisodeRecord],
    cfg: &AblationConfig,
) -> Result<AblationReport> {
    let variants = variants();
    let eval_base = derive_seed(cfg.seed, 0xE7A1);
    let mut rows = Vec::new();
    for (k, &(n_sim, n_nom)) in cfg.setups.iter().enumerate() {
        let label = format!("{n_sim}/{n_nom}");
        let episodes = mix(sim_pool, nominal_pool, (n_sim, n_nom), derive_seed(cfg.seed, k as u64))?;
        let samples = samples_of(episodes);
        let hyper = BcHyper {
            seed: derive_seed(cfg.seed, 0xBC00 + k as u64),
            ..cfg.bc.clone()
        };
        log::info!("setup {label}: training on {} samples", samples.len());
        let (policy, report) = train_bc(&samples, &hyper)?;
        let mut scores = Vec::new();
        for (j, v) in variants.iter().enumerate() {
            let successes = evaluate_variant(sim, &policy, v, cfg.eval_seeds, derive_seed(eval_base, j as u64), &cfg.sequencer)?;
            log::info!("setup {label}: {} {successes}/{}", v.name, cfg.eval_seeds);
            scores.push(VariantScore {
                variant: v.name.clone(),
                successes,
                trials: cfg.eval_seeds,
            });
        }
        rows.push(SetupResult {
            label,
            sim: n_sim,
            nominal: n_nom,
            final_loss: report.final_loss,
            scores,
        });
    }
    Ok(AblationReport {
        config: cfg.clone(),
        rows,
    })
}
