//! Full-pipeline trials and the per-step success table.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::inhand::{cumulative_rotation, run_inhand};
use super::{run_grasp_lift, run_reach, Outcome, SequencerConfig, SkillId, SkillResult};
use crate::datagen::derive_seed;
use crate::error::Result;
use crate::policy::PolicyParams;
use crate::rl::{GaussianPolicy, SubSkillId};
use crate::sim::{RandomizationSpec, Simulator, WorldState};

/// Everything a trial needs besides the world: the grasp policy and one
/// student per in-hand sub-skill.
#[derive(Debug, Clone)]
pub struct Policies {
    pub grasp: PolicyParams,
    pub students: [GaussianPolicy; 4],
}

pub const GRASP_MODEL_FILE: &str = "grasp.dxpm";

/// File name of the student of `k` inside a model directory.
pub fn student_file(k: SubSkillId) -> String {
    format!("{}.dxpm", k.name())
}

impl Policies {
    /// Reads `grasp.dxpm` and `inhand1.dxpm` .. `inhand4.dxpm` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let grasp = PolicyParams::load(&dir.join(GRASP_MODEL_FILE))?;
        let students = SubSkillId::ALL.map(|k| GaussianPolicy::load(&dir.join(student_file(k))));
        let [a, b, c, d] = students;
        Ok(Self {
            grasp,
            students: [a?, b?, c?, d?],
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.grasp.save(&dir.join(GRASP_MODEL_FILE))?;
        for k in SubSkillId::ALL {
            self.students[k.index()].save(&dir.join(student_file(k)))?;
        }
        Ok(())
    }
}

/// Grip summary of the state an in-hand skill starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub contacts: usize,
    /// Sum of contact normal forces (N).
    pub normal_force: f64,
    pub rotation_deg: f64,
}

impl StartSummary {
    pub fn of(state: &WorldState) -> Self {
        Self {
            contacts: state.contacts.len(),
            normal_force: state.contacts.iter().map(|c| c.normal_force).sum(),
            rotation_deg: cumulative_rotation(state).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRecord {
    pub skill: SkillId,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSummary>,
}

/// Start-state statistics of one in-hand skill over the trials that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffStats {
    pub skill: SkillId,
    pub reached: usize,
    pub succeeded: usize,
    pub mean_normal_force: f64,
    pub min_normal_force: f64,
    pub mean_contacts: f64,
    pub mean_rotation_deg: f64,
}

fn handoff_stats(reports: &[TrialReport]) -> Vec<HandoffStats> {
    SkillId::ALL[SkillId::InHand1 as usize..]
        .iter()
        .map(|&skill| {
            let recs: Vec<&SkillRecord> = reports
                .iter()
                .map(|r| &r.skills[skill as usize])
                .filter(|s| s.start.is_some())
                .collect();
            let starts: Vec<&StartSummary> = recs.iter().filter_map(|s| s.start.as_ref()).collect();
            let n = starts.len().max(1) as f64;
            HandoffStats {
                skill,
                reached: starts.len(),
                succeeded: recs.iter().filter(|s| s.outcome.is_success()).count(),
                mean_normal_force: starts.iter().map(|s| s.normal_force).sum::<f64>() / n,
                min_normal_force: starts.iter().map(|s| s.normal_force).reduce(f64::min).unwrap_or(0.0),
                mean_contacts: starts.iter().map(|s| s.contacts as f64).sum::<f64>() / n,
                mean_rotation_deg: starts.iter().map(|s| s.rotation_deg).sum::<f64>() / n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub config_hash: String,
    /// One record per skill, in pipeline order.
    pub skills: Vec<SkillRecord>,
    /// Object rotation about the task axis at the end of the trial (deg).
    pub final_rotation_deg: f64,
}

impl TrialReport {
    /// Skills completed before the first failure.
    pub fn successes(&self) -> usize {
        self.skills.iter().take_while(|r| r.outcome.is_success()).count()
    }
}

/// Hex SHA-256 of the canonical JSON of the sequencer config.
pub fn config_hash(cfg: &SequencerConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Runs the six skills on `spawned`. `observe` sees the state each attempted
/// skill starts from.
pub fn run_pipeline(
    sim: &Simulator,
    spawned: &WorldState,
    policies: &Policies,
    cfg: &SequencerConfig,
    mut observe: impl FnMut(SkillId, &WorldState),
) -> TrialReport {
    let mut skills = Vec::with_capacity(SkillId::ALL.len());
    let mut state = spawned.clone();
    for skill in SkillId::ALL {
        if skills.last().is_some_and(|r: &SkillRecord| !r.outcome.is_success()) {
            skills.push(SkillRecord {
                skill,
                outcome: Outcome::NotReached,
                steps: 0,
                start: None,
            });
            continue;
        }
        observe(skill, &state);
        let start = (skill as usize >= SkillId::InHand1 as usize).then(|| StartSummary::of(&state));
        let (next, SkillResult { outcome, steps }) = match skill {
            SkillId::Reach => run_reach(sim, &state, cfg),
            SkillId::GraspLift => run_grasp_lift(sim, &state, &policies.grasp, cfg),
            _ => {
                let k = SubSkillId::ALL[skill as usize - SkillId::InHand1 as usize];
                run_inhand(sim, &state, &policies.students[k.index()], k, cfg)
            }
        };
        state = next;
        skills.push(SkillRecord {
            skill,
            outcome,
            steps,
            start,
        });
    }
    TrialReport {
        seed: spawned.rng_seed,
        config_hash: config_hash(cfg),
        skills,
        final_rotation_deg: cumulative_rotation(&state).to_degrees(),
    }
}

pub fn run_trial(sim: &Simulator, spec: &RandomizationSpec, policies: &Policies, cfg: &SequencerConfig) -> Result<TrialReport> {
    let spawned = sim.spawn(spec)?;
    Ok(run_pipeline(sim, &spawned, policies, cfg, |_, _| {}))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub trials: usize,
    pub spec: RandomizationSpec,
    pub config_hash: String,
    /// Successes per pipeline step, in `SkillId::ALL` order.
    pub counts: Vec<usize>,
    /// Grip at each in-hand handoff, for measuring the gap to the training starts.
    pub handoff: Vec<HandoffStats>,
    pub reports: Vec<TrialReport>,
}

impl EvaluationReport {
    /// Six-column text table: one header row of skill names, one row of
    /// `successes/trials`.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = SkillId::ALL.iter().map(|s| s.name()).collect();
        let cells: Vec<String> = self.counts.iter().map(|c| format!("{c}/{}", self.trials)).collect();
        let width = names.iter().map(|n| n.len()).chain(cells.iter().map(String::len)).max().unwrap_or(0);
        for row in [names.iter().map(|s| s.to_string()).collect::<Vec<_>>(), cells] {
            let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            let _ = writeln!(out, "{}", line.join(" | "));
        }
        out
    }

    /// One line per in-hand skill: trials reaching it, successes and grip at the handoff.
    pub fn handoff_table(&self) -> String {
        let mut out = String::new();
        for h in self.handoff.iter().filter(|h| h.reached > 0) {
            let _ = writeln!(
                out,
                "{:>8}: reached {:>3}, succeeded {:>3}, contacts {:.2}, normal force mean {:.2} N min {:.2} N, rotation {:.1} deg",
                h.skill.name(),
                h.reached,
                h.succeeded,
                h.mean_contacts,
                h.mean_normal_force,
                h.min_normal_force,
                h.mean_rotation_deg
            );
        }
        out
    }

    /// One JSON line per trial, then a summary line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = crate::io::to_jsonl(&self.reports)?;
        let summary = serde_json::json!({
            "summary": {
                "trials": self.trials,
                "config_hash": self.config_hash,
                "skills": SkillId::ALL.iter().map(|s| s.name()).collect::<Vec<_>>(),
                "counts": self.counts,
                "handoff": self.handoff,
            }
        });
        out.push_str(&serde_json::to_string(&summary)?);
        out.push('\n');
        Ok(out)
    }
}

/// `n` independent trials; trial `i` spawns from `spec` reseeded with
/// `derive_seed(spec.seed, i)`.
pub fn evaluate(
    sim: &Simulator,
    n: usize,
    spec: &RandomizationSpec,
    policies: &Policies,
    cfg: &SequencerConfig,
) -> Result<EvaluationReport> {
    spec.validate()?;
    let reports = (0..n as u64)
        .into_par_iter()
        .map(|i| run_trial(sim, &spec.with_seed(derive_seed(spec.seed, i)), policies, cfg))
        .collect::<Result<Vec<_>>>()?;
    let counts = (0..SkillId::ALL.len())
        .map(|k| reports.iter().filter(|r| r.skills[k].outcome.is_success()).count())
        .collect();
    Ok(EvaluationReport {
        trials: n,
        spec: spec.clone(),
        config_hash: config_hash(cfg),
        counts,
        handoff: handoff_stats(&reports),
        reports,
    })
}
