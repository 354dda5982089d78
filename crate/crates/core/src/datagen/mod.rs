//! Randomized-spawn dataset generation with a scripted expert, dataset
//! manifests and the sim/nominal mixing used by the ablation.

mod expert;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use expert::{scripted_episode, scripted_grasp, ExpertConfig, ScriptedExpert};

use crate::episode::{EpisodeRecord, Provenance};
use crate::error::{Error, IoContext, Result};
use crate::policy::BcSample;
use crate::sequencer::SequencerConfig;
use crate::sim::{RandomizationSpec, Simulator};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: &str = "1.0";

/// SplitMix64 mix of a base seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hex SHA-256 of the canonical JSON of `spec`.
pub fn spec_hash(spec: &RandomizationSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub seed: u64,
    pub spec_hash: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub spec: RandomizationSpec,
    pub spec_hash: String,
    /// Candidate spawns the expert failed on.
    pub skipped: Vec<u64>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).at(&path)?;
        let m: Self = serde_json::from_str(&text)?;
        crate::robot::check_version(&m.format_version)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub expert: ExpertConfig,
    pub sequencer: SequencerConfig,
    /// Candidate spawns tried per successful episode before giving up.
    pub max_attempts_per_episode: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            expert: ExpertConfig::default(),
            sequencer: SequencerConfig::default(),
            max_attempts_per_episode: 3,
        }
    }
}

/// Records `n` successful scripted episodes. Candidate `i` uses seed
/// `derive_seed(spec.seed, i)`; failed candidates are skipped and logged.
pub fn generate_episodes(
    sim: &Simulator,
    spec: &RandomizationSpec,
    n: usize,
    opts: &GenerateOptions,
) -> Result<(Vec<EpisodeRecord>, Vec<u64>)> {
    spec.validate()?;
    let max = n * opts.max_attempts_per_episode + 16;
    let batch = (rayon::current_num_threads() * 8).max(16);
    let mut episodes = Vec::with_capacity(n);
    let mut skipped = Vec::new();
    let mut next = 0usize;
    while episodes.len() < n {
        if next >= max {
            return Err(Error::Dataset(format!(
                "expert succeeded on {} of {max} candidate spawns, {n} episodes requested",
                episodes.len()
            )));
        }
        let idx: Vec<usize> = (next..(next + batch).min(max)).collect();
        next += idx.len();
        let results: Vec<(u64, Result<Option<EpisodeRecord>>)> = idx
            .par_iter()
            .map(|&i| {
                let s = spec.with_seed(derive_seed(spec.seed, i as u64));
                (s.seed, scripted_episode(sim, &s, &opts.expert, &opts.sequencer))
            })
            .collect();
        for (seed, r) in results {
            if episodes.len() == n {
                break;
            }
            match r? {
                Some(ep) => episodes.push(ep),
                None => {
                    log::info!("expert failed on spawn seed {seed}; skipped");
                    skipped.push(seed);
                }
            }
        }
    }
    Ok((episodes, skipped))
}

pub fn episode_file_name(index: usize) -> String {
    format!("episode_{index:05}.json")
}

/// Generates `n` episodes into `out` and writes the manifest last.
pub fn generate(
    sim: &Simulator,
    spec: &RandomizationSpec,
    n: usize,
    out: &Path,
    force: bool,
    opts: &GenerateOptions,
) -> Result<Manifest> {
    crate::io::prepare_output_dir(out, force)?;
    let (episodes, skipped) = generate_episodes(sim, spec, n, opts)?;
    let hash = spec_hash(spec);
    let entries = episodes
        .par_iter()
        .enumerate()
        .map(|(i, ep)| {
            let file = episode_file_name(i);
            ep.save(&out.join(&file))?;
            Ok(ManifestEntry {
                file,
                seed: ep.metadata.seed,
                spec_hash: hash.clone(),
                provenance: ep.metadata.provenance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION.into(),
        spec: spec.clone(),
        spec_hash: hash,
        skipped,
        entries,
    };
    crate::io::write_json_atomic(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Episodes of `dir` in [`dataset_files`] order.
pub fn load_dataset(dir: &Path) -> Result<Vec<EpisodeRecord>> {
    dataset_files(dir)?.par_iter().map(|p| EpisodeRecord::load(p)).collect()
}

/// Episode files in `dir`: the manifest's when there is one, else every
/// `*.json` in name order.
pub fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(Manifest::load(dir)?.entries.iter().map(|e| dir.join(&e.file)).collect());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Deterministic subset of `n` episodes: the first `n` of a seeded permutation.
fn subsample<'a>(pool: &'a [EpisodeRecord], n: usize, seed: u64, label: &str) -> Result<Vec<&'a EpisodeRecord>> {
    if n > pool.len() {
        return Err(Error::Dataset(format!(
            "{label}: {n} episodes requested, {} available",
            pool.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| &pool[i]).collect())
}

/// `(n_sim, n_nominal)` episodes drawn from the two pools.
pub fn mix<'a>(
    sim_pool: &'a [EpisodeRecord],
    nominal_pool: &'a [EpisodeRecord],
    counts: (usize, usize),
    seed: u64,
) -> Result<Vec<&'a EpisodeRecord>> {
    if counts == (0, 0) {
        return Err(Error::Dataset("mix (0, 0) selects no episodes".into()));
    }
    let mut out = subsample(sim_pool, counts.0, derive_seed(seed, 0), "sim")?;
    out.extend(subsample(nominal_pool, counts.1, derive_seed(seed, 1), "nominal")?);
    Ok(out)
}

pub fn samples_of<'a>(episodes: impl IntoIterator<Item = &'a EpisodeRecord>) -> Vec<BcSample> {
    episodes.into_iter().flat_map(|e| e.samples()).collect()
}
