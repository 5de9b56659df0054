use softsnake::algo::{train, Algorithm, TrainedPolicy, TrainerConfig};
use softsnake::behavior::ScriptedSteering;
use softsnake::dataset::{collect, CollectConfig, OfflineDataset};
use softsnake::disa::{train_disa, CounterConfig, DisaConfig, PenaltyConfig};
use softsnake::dynamics::SnakeModel;
use softsnake::env::{EpisodeConfig, GoalRegion, Observation, RegionKind};
use softsnake::eval::{evaluate, recompute_return, Controller, EvalProtocol};
use softsnake::kinematics::BodyGrid;
use softsnake::nn::Checkpoint;

fn model() -> SnakeModel {
    SnakeModel {
        grid: BodyGrid::new(33, 0.5).unwrap(),
        ..SnakeModel::default()
    }
}

fn episode() -> EpisodeConfig {
    EpisodeConfig {
        max_steps: 20,
        ..EpisodeConfig::default()
    }
}

fn left() -> GoalRegion {
    GoalRegion::new(RegionKind::LeftHalf, 0.3, 0.6)
}

fn dataset(seed: u64) -> OfflineDataset {
    let cfg = CollectConfig {
        n_episodes: 12,
        ..CollectConfig::default()
    };
    collect(&ScriptedSteering::default(), &model(), &episode(), &left(), &cfg, seed).unwrap()
}

fn trainer(algorithm: Algorithm) -> TrainerConfig {
    TrainerConfig {
        algorithm,
        batch_size: 32,
        total_steps: 60,
        hidden: vec![16, 16],
        eval_every: 30,
        eval_goals: 0,
        seed: 4,
        ..TrainerConfig::default()
    }
}

#[test]
fn dataset_file_round_trip_feeds_training() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    let ds = dataset(1);
    let hash = ds.save(&path).unwrap();
    let back = OfflineDataset::load(&path).unwrap();
    assert_eq!(back.checksum(), hash);
    assert_eq!(back.transitions(), ds.transitions());

    let a = train(&ds.normalize().unwrap(), &trainer(Algorithm::Bc), None).unwrap();
    let b = train(&back.normalize().unwrap(), &trainer(Algorithm::Bc), None).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
}

#[test]
fn checkpoint_restores_the_same_controller() {
    let ds = dataset(2).normalize().unwrap();
    for alg in [Algorithm::Bc, Algorithm::Cql, Algorithm::Iql] {
        let out = train(&ds, &trainer(alg), None).unwrap();
        let restored = TrainedPolicy::from_checkpoint(&Checkpoint::from_bytes(&out.checkpoint.to_bytes()).unwrap()).unwrap();
        assert_eq!(restored.provenance.algorithm, alg);
        for t in ds.transitions().iter().step_by(7) {
            let obs = Observation::from_slice(&t.observation).unwrap();
            assert_eq!(out.policy.act(&obs, None).unwrap(), restored.act(&obs, None).unwrap());
        }
    }
}

#[test]
fn evaluation_of_a_trained_policy_is_consistent() {
    let ds = dataset(3).normalize().unwrap();
    let policy = train(&ds, &trainer(Algorithm::Iql), None).unwrap().policy;
    let protocol = EvalProtocol {
        n_goals: 4,
        ..EvalProtocol::default()
    };
    let reports = evaluate(&policy, &model(), &episode(), &protocol).unwrap();
    assert_eq!(reports.len(), protocol.test_regions.len());
    for (report, region) in reports.iter().zip(&protocol.test_regions) {
        assert_eq!(report.records.len(), 4);
        for ((rec, trace), goal) in report.records.iter().zip(&report.trajectories).zip(protocol.goals(region)) {
            assert_eq!((rec.goal_x, rec.goal_y), (goal.x, goal.y));
            assert_eq!(trace.len(), rec.steps + 1);
            let r = recompute_return(goal, trace, &episode()).unwrap();
            assert!((r - rec.episode_return).abs() < 1e-9, "{r} vs {}", rec.episode_return);
        }
    }
    let again = evaluate(&policy, &model(), &episode(), &protocol).unwrap();
    assert_eq!(again[0].records, reports[0].records);
}

#[test]
fn penalty_changes_training_and_decays_to_zero() {
    let ds = dataset(4).normalize().unwrap();
    let cfg = |alpha0| DisaConfig {
        trainer: trainer(Algorithm::DisaIql),
        penalty: PenaltyConfig {
            alpha0,
            ..PenaltyConfig::default()
        },
        counter: CounterConfig::default(),
    };
    let plain = train(&ds, &trainer(Algorithm::Iql), None).unwrap();
    let penalized = train_disa(&ds, &cfg(0.5), None).unwrap();
    assert_ne!(plain.checkpoint.tensor_checksum(), penalized.checkpoint.tensor_checksum());
    let alpha = penalized.log.column("alpha_t").unwrap();
    assert!(alpha.windows(2).all(|w| w[1] <= w[0]));
    assert!(alpha[0] > 0.0 && alpha[0] <= 0.5);
    assert!(*alpha.last().unwrap() < 0.5 * 30.0 / 60.0 + 1e-12);
}
