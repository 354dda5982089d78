use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dexpipe::ablation::{run_ablation, sim_spec, AblationConfig};
use dexpipe::datagen::{derive_seed, generate, load_dataset, mix, samples_of, GenerateOptions};
use dexpipe::episode::EpisodeRecord;
use dexpipe::io::{load_config, write_atomic, write_json_atomic};
use dexpipe::policy::{self, BcHyper};
use dexpipe::rl::{self, GaussianPolicy, RlConfig, SubSkillId, SubskillReport, REPORT_FILE};
use dexpipe::sequencer::{evaluate, Policies, SequencerConfig};
use dexpipe::sim::{RandomizationSpec, Simulator};
use dexpipe::teleop::{self, ServerConfig, SessionConfig};
use dexpipe::{Error, Result};
use serde_json::{json, Value};

use crate::{AblateArgs, DatagenArgs, DistillArgs, EvalArgs, TeleopArgs, TrainBcArgs, TrainRlArgs};

const SIM_DATA: &str = "sim";
const NOMINAL_DATA: &str = "nominal";

fn config_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load_config)
}

fn load_spec(path: Option<&Path>, fallback: RandomizationSpec) -> Result<RandomizationSpec> {
    let spec = match path {
        Some(p) => load_config(p)?,
        None => fallback,
    };
    spec.validate()?;
    Ok(spec)
}

/// `model.dxpm` → `model.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// Logs the resolved configuration and writes it to `path`.
fn snapshot(path: &Path, config: Value) -> Result<()> {
    log::info!("config snapshot {}: {config}", path.display());
    write_json_atomic(path, &config)
}

fn print_json(v: Value) {
    println!("{v}");
}

pub fn datagen(a: &DatagenArgs) -> Result<()> {
    let base = if a.nominal {
        RandomizationSpec::nominal()
    } else {
        load_spec(a.spec.as_deref(), sim_spec(0))?
    };
    let spec = base.with_seed(derive_seed(a.seed, if a.nominal { 2 } else { 1 }));
    let opts: GenerateOptions = config_or_default(a.config.as_deref())?;
    log::info!("datagen seed {} -> spec seed {}", a.seed, spec.seed);
    let sim = Simulator::canonical();
    let manifest = generate(&sim, &spec, a.n, &a.out, a.force, &opts)?;
    snapshot(
        &a.out.join("datagen_config.json"),
        json!({ "seed": a.seed, "n": a.n, "nominal": a.nominal, "spec": spec, "options": opts }),
    )?;
    print_json(json!({
        "episodes": manifest.entries.len(),
        "skipped": manifest.skipped.len(),
        "spec_hash": manifest.spec_hash,
        "out": a.out,
    }));
    Ok(())
}

pub fn teleop(a: &TeleopArgs) -> Result<()> {
    let spec = load_spec(a.spec.as_deref(), RandomizationSpec::nominal())?.with_seed(a.seed);
    let addr = format!("{}:{}", a.host, a.port);
    let listener = TcpListener::bind(&addr).map_err(|source| Error::Io {
        path: addr.clone().into(),
        source,
    })?;
    let cfg = ServerConfig::new(SessionConfig::new(spec, Some(a.out.clone())));
    snapshot(&a.out.join("teleop_config.json"), json!({ "seed": a.seed, "session": cfg.session, "tick_hz": cfg.tick_hz }))?;
    let handle = teleop::serve(Arc::new(Simulator::canonical()), listener, cfg)?;
    print_json(json!({ "listening": handle.addr().to_string() }));
    handle.wait();
    Ok(())
}

fn pool(root: &Path, name: &str, needed: usize) -> Result<Vec<EpisodeRecord>> {
    if needed == 0 {
        return Ok(Vec::new());
    }
    let dir = root.join(name);
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a dataset directory", dir.display())));
    }
    load_dataset(&dir)
}

pub fn train_bc(a: &TrainBcArgs) -> Result<()> {
    let (n_sim, n_nom) = (a.mix.0, a.mix.1);
    let sim_pool = pool(&a.data, SIM_DATA, n_sim)?;
    let nom_pool = pool(&a.data, NOMINAL_DATA, n_nom)?;
    let episodes = mix(&sim_pool, &nom_pool, (n_sim, n_nom), derive_seed(a.seed, 0x313))?;
    let mut hyper: BcHyper = config_or_default(a.config.as_deref())?;
    hyper.seed = derive_seed(a.seed, 0xBC);
    snapshot(
        &sibling(&a.out, "config.json"),
        json!({ "seed": a.seed, "mix": [n_sim, n_nom], "data": a.data, "hyper": hyper }),
    )?;
    let samples = samples_of(episodes);
    log::info!("training on {} samples from {n_sim}/{n_nom} episodes", samples.len());
    let (policy, report) = policy::train_bc(&samples, &hyper)?;
    policy.save(&a.out)?;
    let summary = json!({
        "model": a.out,
        "samples": samples.len(),
        "steps": report.steps,
        "final_loss": report.final_loss,
        "epoch_losses": report.epoch_losses,
    });
    write_json_atomic(&sibling(&a.out, "report.json"), &summary)?;
    print_json(summary);
    Ok(())
}

pub fn train_rl(a: &TrainRlArgs) -> Result<()> {
    let skill = SubSkillId::from_number(a.skill as usize)?;
    let mut cfg: RlConfig = config_or_default(a.config.as_deref())?;
    cfg.seed = a.seed;
    let sim = Simulator::canonical();
    let (_, report) = rl::train_subskill(&sim, &cfg, skill, Some(&a.out))?;
    print_json(json!({
        "skill": skill.name(),
        "out": a.out,
        "successes": report.eval.successes,
        "episodes": report.eval.episodes,
    }));
    Ok(())
}

pub fn distill(a: &DistillArgs) -> Result<()> {
    let run_dir = a.teacher.parent().unwrap_or(Path::new("."));
    let mut cfg: RlConfig = match &a.config {
        Some(p) => load_config(p)?,
        None if run_dir.join(rl::CONFIG_FILE).exists() => load_config(&run_dir.join(rl::CONFIG_FILE))?,
        None => RlConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let skill = match a.skill {
        Some(n) => SubSkillId::from_number(n as usize)?,
        None => {
            let p = run_dir.join(REPORT_FILE);
            let text = std::fs::read_to_string(&p).map_err(|source| Error::Io { path: p.clone(), source })?;
            serde_json::from_str::<SubskillReport>(&text)?.skill
        }
    };
    let teacher = GaussianPolicy::load(&a.teacher)?;
    snapshot(
        &sibling(&a.out, "config.json"),
        json!({ "teacher": a.teacher, "skill": skill.name(), "config": cfg }),
    )?;
    let sim = Simulator::canonical();
    let (student, report) = rl::distill(&sim, &cfg, skill, &teacher, None)?;
    student.save(&a.out)?;
    write_json_atomic(&sibling(&a.out, "report.json"), &report)?;
    print_json(json!({
        "skill": skill.name(),
        "student": report.student.successes,
        "teacher": report.teacher.successes,
        "episodes": report.student.episodes,
    }));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let spec = load_spec(a.spec.as_deref(), RandomizationSpec::nominal())?.with_seed(a.seed);
    let seq: SequencerConfig = config_or_default(a.config.as_deref())?;
    let policies = Policies::load(&a.models)?;
    snapshot(
        &sibling(&a.report, "config.json"),
        json!({ "seed": a.seed, "trials": a.trials, "models": a.models, "spec": spec, "sequencer": seq }),
    )?;
    let sim = Simulator::canonical();
    let report = evaluate(&sim, a.trials, &spec, &policies, &seq)?;
    write_atomic(&a.report, report.to_jsonl()?.as_bytes())?;
    print!("{}{}", report.table(), report.handoff_table());
    Ok(())
}

pub fn ablate_mix(a: &AblateArgs) -> Result<()> {
    let mut cfg: AblationConfig = config_or_default(a.config.as_deref())?;
    cfg.seed = a.seed;
    let n_sim = cfg.setups.iter().map(|s| s.0).max().unwrap_or(0);
    let n_nom = cfg.setups.iter().map(|s| s.1).max().unwrap_or(0);
    let sim_pool = pool(&a.data, SIM_DATA, n_sim)?;
    let nom_pool = pool(&a.data, NOMINAL_DATA, n_nom)?;
    let sim = Simulator::canonical();
    let report = run_ablation(&sim, &sim_pool, &nom_pool, &cfg)?;
    let mut text = dexpipe::io::to_jsonl(&report.rows)?;
    text.push_str(&json!({ "summary": { "setups": report.rows.iter().map(|r| &r.label).collect::<Vec<_>>(), "config": cfg } }).to_string());
    text.push('\n');
    write_atomic(&a.report, text.as_bytes())?;
    print!("{}", crate::report::render(&text)?);
    Ok(())
}
