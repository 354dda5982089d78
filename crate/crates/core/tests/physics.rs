use dexpipe::ablation::sim_spec;
use dexpipe::datagen::{derive_seed, scripted_episode, scripted_grasp, ExpertConfig};
use dexpipe::kinematics::{ReducedHandCommand, REDUCED_DOF};
use dexpipe::rl::{scripted_rotation, OracleConfig};
use dexpipe::sequencer::SequencerConfig;
use dexpipe::sim::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use std::sync::OnceLock;

fn held_states() -> &'static Vec<WorldState> {
    static S: OnceLock<Vec<WorldState>> = OnceLock::new();
    S.get_or_init(|| {
        let sim = Simulator::canonical();
        let seq = SequencerConfig::default();
        (0..40)
            .filter_map(|i| scripted_grasp(&sim, &sim_spec(derive_seed(31, i)), &ExpertConfig::default(), &seq).unwrap())
            .collect()
    })
}

/// Net force of the contacts on the object, world frame.
fn contact_force(s: &WorldState) -> Vector3<f64> {
    let local: Vector3<f64> = s
        .contacts
        .iter()
        .map(|c| {
            let (t1, t2) = tangent_basis(&c.normal);
            -c.normal * c.normal_force + t1 * c.tangential_force[0] + t2 * c.tangential_force[1]
        })
        .sum();
    s.object.orientation() * local
}

#[test]
fn held_objects_are_in_static_force_balance() {
    let sim = Simulator::canonical();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for start in held_states() {
        let mut s = start.clone();
        // Sweep the grasp through a few configurations of each held state.
        for k in 0..6 {
            let (next, reading) = sim.step(&s, &Command::hold(&s), 0.1).unwrap();
            if next.phase() == Phase::Held && !reading.slip_event {
                let weight = Vector3::new(0.0, 0.0, -next.mass * sim.config().gravity);
                worst = worst.max((contact_force(&next) + weight).norm());
                checked += 1;
            }
            s = scripted_rotation(&sim, &next, 0.05 * (k + 1) as f64, &OracleConfig::default(), 0.1).unwrap().0;
            if s.phase() != Phase::Held {
                break;
            }
        }
    }
    assert!(checked >= 100, "only {checked} held configurations");
    assert!(worst < 1e-6, "force residual {worst:e} N");
}

fn in_cone(s: &WorldState) -> bool {
    s.contacts
        .iter()
        .all(|c| c.normal_force >= 0.0 && c.tangential_force[0].hypot(c.tangential_force[1]) <= s.friction_mu * c.normal_force + 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    /// 100 cases of 1000 random steps each; a dropped object restarts from another held state.
    #[test]
    fn persisted_contacts_stay_inside_the_friction_cone(start in 0usize..1000, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let sim = Simulator::canonical();
        let states = held_states();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = states[start % states.len()].clone();
        let mut contacts = 0;
        for _ in 0..1000 {
            if s.phase() != Phase::Held {
                s = states[rng.random_range(0..states.len())].clone();
            }
            let mut hand = s.hand_command.to_array();
            for h in hand.iter_mut().take(REDUCED_DOF) {
                *h += rng.random_range(-0.01..0.01);
            }
            let cmd = Command {
                arm: ArmTarget::Joints(s.robot.arm),
                hand: sim.hand().clamp_reduced(&ReducedHandCommand::from_slice(&hand)),
            };
            s = sim.step(&s, &cmd, 0.1).unwrap().0;
            prop_assert!(in_cone(&s), "cone violated at tick {}", s.tick);
            contacts += s.contacts.len();
        }
        prop_assert!(contacts >= 1000, "only {} contacts checked", contacts);
    }
}

#[test]
fn seeded_episodes_replay_bit_identically() {
    let sim = Simulator::canonical();
    let seq = SequencerConfig::default();
    let mut n = 0;
    for i in 0..110 {
        let Some(ep) = scripted_episode(&sim, &sim_spec(derive_seed(8, i)), &ExpertConfig::default(), &seq).unwrap() else {
            continue;
        };
        assert!(ep.replays_exactly(&sim).unwrap(), "episode {i}");
        n += 1;
        if n == 100 {
            break;
        }
    }
    assert_eq!(n, 100);
}

#[test]
fn recorded_episode_survives_a_file_round_trip() {
    let sim = Simulator::canonical();
    let ep = scripted_episode(&sim, &sim_spec(5), &ExpertConfig::default(), &SequencerConfig::default())
        .unwrap()
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ep.json");
    ep.save(&p).unwrap();
    let back = dexpipe::episode::EpisodeRecord::load(&p).unwrap();
    assert_eq!(back, ep);
    let readings = back.replay(&sim).unwrap();
    let bits = |r: &SensorReading| serde_json::to_string(r).unwrap();
    for (r, f) in readings.iter().zip(&ep.frames) {
        assert_eq!(bits(r), bits(&f.reading));
    }
}
