//! Pipeline commands behind the `softsnake` binary.
//!
//! Every command reads a [`RunConfig`], writes its artifacts under
//! `out_dir`, and leaves an `effective_config.json` plus a `manifest.json`
//! with content hashes of its inputs and outputs next to them:
//!
//! ```text
//! <out>/simulate/trajectory.csv
//! <out>/dataset/dataset.bin, dataset.csv
//! <out>/train/<algorithm>/checkpoint.bin, training_log.csv
//! <out>/eval/<algorithm>/<region>.json, <region>.csv, <region>_summary.csv
//! <out>/compare/comparison.csv, comparison.txt
//! ```

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softsnake::algo::{Algorithm, EvalHook, TrainedPolicy};
use softsnake::container::{read_file, sha256_hex, write_file};
use softsnake::dataset::{collect, OfflineDataset};
use softsnake::disa::train_configured;
use softsnake::dynamics::{trace_to_csv, SnakeState, TracePoint};
use softsnake::eval::{evaluate, export_report, load_json_report, EvalReport, ReportFormat};
use softsnake::kinematics::{ChannelState, Direction, Vec2};
use softsnake::nn::Checkpoint;
use softsnake::{Error, ErrorCategory};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("missing {what} at {}; run `softsnake {producer}` first", path.display())]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        producer: String,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit code: 2 config, 3 data, 4 numeric, 5 I/O, 6 contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingArtifact { .. } => 5,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numeric => 4,
                ErrorCategory::Io => 5,
                ErrorCategory::Contract => 6,
            },
        }
    }
}

/// Artifact paths under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn simulate_dir(&self) -> PathBuf {
        self.root.join("simulate")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn dataset(&self) -> PathBuf {
        self.dataset_dir().join("dataset.bin")
    }

    pub fn train_dir(&self, a: Algorithm) -> PathBuf {
        self.root.join("train").join(a.name())
    }

    pub fn checkpoint(&self, a: Algorithm) -> PathBuf {
        self.train_dir(a).join("checkpoint.bin")
    }

    pub fn eval_dir(&self, a: Algorithm) -> PathBuf {
        self.root.join("eval").join(a.name())
    }

    pub fn compare_dir(&self) -> PathBuf {
        self.root.join("compare")
    }
}

/// Hashes of what a command read and wrote.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            ..Manifest::default()
        }
    }

    fn output(&mut self, dir: &Path, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_file(path, bytes)?;
        let name = path.strip_prefix(dir).unwrap_or(path).display().to_string();
        self.outputs.insert(name, sha256_hex(bytes));
        Ok(())
    }

    fn finish(self, dir: &Path, cfg: &RunConfig) -> CliResult<Manifest> {
        write_file(&dir.join("effective_config.json"), cfg.effective().to_json().as_bytes())?;
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), body.as_bytes())?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> CliResult<Manifest> {
        let path = dir.join("manifest.json");
        let bytes = read_file(&path)?;
        Ok(serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?)
    }
}

/// Hash of the effective config without `out_dir`, so identical runs in
/// different directories agree.
fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.effective();
    c.out_dir = PathBuf::new();
    sha256_hex(c.to_json().as_bytes())
}

fn require(path: &Path, what: &'static str, producer: impl Into<String>) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            what,
            path: path.to_path_buf(),
            producer: producer.into(),
        })
    }
}

pub struct SimulateOutcome {
    pub trace: Vec<TracePoint>,
    pub manifest: Manifest,
}

impl SimulateOutcome {
    pub fn displacement(&self) -> Vec2 {
        let (a, b) = (self.trace[0], self.trace[self.trace.len() - 1]);
        Vec2::new(b.com_x - a.com_x, b.com_y - a.com_y)
    }
}

/// Open-loop rollout with fixed biases, one trace row per integrator step
/// plus the initial state.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<SimulateOutcome> {
    let model = cfg.model();
    model.validate()?;
    let s = &cfg.simulate;
    let channel = ChannelState {
        bias: s.bias,
        bias_prev: s.bias,
        direction: Direction::from_continuous(s.direction),
    };
    channel.validate()?;
    let mut state = SnakeState::at_rest(Vec2::ZERO, 0.0, model.initial_curvature(&channel)?);
    let mut trace = Vec::with_capacity(s.steps + 1);
    trace.push(TracePoint::of(&state));
    for _ in 0..s.steps {
        state = model.step(&state, &channel, cfg.environment.dt)?;
        trace.push(TracePoint::of(&state));
    }
    let dir = Layout::new(&cfg.out_dir).simulate_dir();
    let mut m = Manifest::new("simulate");
    m.inputs.insert("config".into(), config_hash(cfg));
    m.output(&dir, &dir.join("trajectory.csv"), trace_to_csv(&trace).as_bytes())?;
    Ok(SimulateOutcome {
        trace,
        manifest: m.finish(&dir, cfg)?,
    })
}

pub fn cmd_collect(cfg: &RunConfig) -> CliResult<(OfflineDataset, Manifest)> {
    let ds = collect(
        &cfg.dataset.behavior,
        &cfg.model(),
        &cfg.environment,
        &cfg.evaluation.train_region,
        &cfg.collect_config(),
        cfg.seed,
    )?;
    let layout = Layout::new(&cfg.out_dir);
    let dir = layout.dataset_dir();
    let mut m = Manifest::new("collect");
    m.inputs.insert("config".into(), config_hash(cfg));
    m.output(&dir, &layout.dataset(), &ds.to_bytes())?;
    m.output(&dir, &dir.join("dataset.csv"), ds.to_csv().as_bytes())?;
    Ok((ds, m.finish(&dir, cfg)?))
}

pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
    pub manifest: Manifest,
    pub policy: TrainedPolicy,
}

pub fn cmd_train(cfg: &RunConfig, dataset: Option<&Path>) -> CliResult<TrainSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let ds_path = dataset.map(Path::to_path_buf).unwrap_or_else(|| layout.dataset());
    require(&ds_path, "dataset", "collect")?;
    let raw = OfflineDataset::load(&ds_path)?;
    let ds = if raw.is_normalized() { raw.clone() } else { raw.normalize()? };
    let hook = EvalHook {
        model: cfg.model(),
        episode: cfg.environment,
        region: cfg.evaluation.train_region,
        seed: cfg.evaluation.seed,
    };
    let out = train_configured(&ds, &cfg.disa_config(), Some(&hook))?;
    let alg = cfg.trainer.algorithm;
    let dir = layout.train_dir(alg);
    let mut m = Manifest::new("train");
    m.inputs.insert("config".into(), config_hash(cfg));
    m.inputs.insert("dataset".into(), raw.checksum());
    let ck_bytes = out.checkpoint.to_bytes();
    let ck_path = layout.checkpoint(alg);
    m.output(&dir, &ck_path, &ck_bytes)?;
    m.output(&dir, &dir.join("training_log.csv"), out.log.to_csv().as_bytes())?;
    Ok(TrainSummary {
        checkpoint: ck_path,
        checkpoint_hash: sha256_hex(&ck_bytes),
        manifest: m.finish(&dir, cfg)?,
        policy: out.policy,
    })
}

fn protocol_hash(cfg: &RunConfig) -> String {
    let body = serde_json::json!({
        "protocol": cfg.evaluation.protocol(),
        "environment": cfg.environment,
        "model": cfg.model(),
    });
    sha256_hex(body.to_string().as_bytes())
}

pub struct EvalSummary {
    pub algorithm: Algorithm,
    pub reports: Vec<EvalReport>,
    pub manifest: Manifest,
}

/// Evaluates a checkpoint on every test region. Without `checkpoint` the
/// one trained for `trainer.algorithm` under `out_dir` is used.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<EvalSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let alg = cfg.trainer.algorithm;
    let ck_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| layout.checkpoint(alg));
    require(&ck_path, "checkpoint", format!("train --algorithm {}", alg.name()))?;
    let ck_bytes = read_file(&ck_path)?;
    let policy = TrainedPolicy::from_checkpoint(&Checkpoint::from_bytes(&ck_bytes)?)?;
    let algorithm = policy.provenance.algorithm;
    let protocol = cfg.evaluation.protocol();
    let mut reports = evaluate(&policy, &cfg.model(), &cfg.environment, &protocol)?;
    let dir = layout.eval_dir(algorithm);
    let mut m = Manifest::new("eval");
    m.inputs.insert("checkpoint".into(), sha256_hex(&ck_bytes));
    m.inputs.insert("protocol".into(), protocol_hash(cfg));
    for r in &mut reports {
        if !cfg.evaluation.write_trajectories {
            r.trajectories.clear();
        }
        export_report(r, &dir, ReportFormat::Csv)?;
        let json = serde_json::to_string_pretty(&*r).expect("report serializes");
        m.output(&dir, &dir.join(format!("{}.json", r.region)), json.as_bytes())?;
        for suffix in [".csv", "_summary.csv"] {
            let p = dir.join(format!("{}{suffix}", r.region));
            let bytes = read_file(&p)?;
            m.outputs.insert(format!("{}{suffix}", r.region), sha256_hex(&bytes));
        }
    }
    Ok(EvalSummary {
        algorithm,
        reports,
        manifest: m.finish(&dir, cfg)?,
    })
}

/// Reuses an existing evaluation when it was made from the same checkpoint
/// under the same protocol.
fn cached_eval(cfg: &RunConfig, alg: Algorithm) -> CliResult<Option<Vec<EvalReport>>> {
    let layout = Layout::new(&cfg.out_dir);
    let dir = layout.eval_dir(alg);
    let Ok(m) = Manifest::load(&dir) else { return Ok(None) };
    let ck = sha256_hex(&read_file(&layout.checkpoint(alg))?);
    if m.inputs.get("checkpoint") != Some(&ck) || m.inputs.get("protocol") != Some(&protocol_hash(cfg)) {
        return Ok(None);
    }
    let mut reports = Vec::new();
    for region in &cfg.evaluation.test_regions {
        let p = dir.join(format!("{}.json", region.kind.name()));
        match load_json_report(&p) {
            Ok(r) => reports.push(r),
            Err(_) => return Ok(None),
        }
    }
    Ok(Some(reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub region: String,
    pub in_distribution: bool,
    pub algorithm: Algorithm,
    pub success_rate: f64,
    pub avg_reward: f64,
    pub avg_steps: f64,
}

pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub text: String,
    pub manifest: Manifest,
}

impl Comparison {
    pub fn success(&self, region: &str, alg: Algorithm) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.region == region && r.algorithm == alg)
            .map(|r| r.success_rate)
    }
}

/// One table per test region with a row per algorithm, plus the success
/// delta of the count-penalized learner over plain IQL.
pub fn cmd_compare(cfg: &RunConfig) -> CliResult<Comparison> {
    let layout = Layout::new(&cfg.out_dir);
    for alg in Algorithm::ALL {
        require(
            &layout.checkpoint(alg),
            "checkpoint",
            format!("train --algorithm {}", alg.name()),
        )?;
    }
    let mut m = Manifest::new("compare");
    let mut per_alg = Vec::new();
    for alg in Algorithm::ALL {
        let reports = match cached_eval(cfg, alg)? {
            Some(r) => r,
            None => {
                let mut c = cfg.clone();
                c.trainer.algorithm = alg;
                cmd_eval(&c, None)?.reports
            }
        };
        m.inputs.insert(
            format!("{}_checkpoint", alg.name()),
            sha256_hex(&read_file(&layout.checkpoint(alg))?),
        );
        per_alg.push((alg, reports));
    }
    let train_kind = cfg.evaluation.train_region.kind;
    let mut rows = Vec::new();
    let mut text = String::new();
    for (ri, region) in cfg.evaluation.test_regions.iter().enumerate() {
        let name = region.kind.name();
        let in_dist = region.kind == train_kind;
        let label = if in_dist { "in-distribution" } else { "out-of-distribution" };
        let _ = writeln!(text, "Region: {name} ({label}, {} goals)", cfg.evaluation.n_goals);
        let _ = writeln!(text, "{:<10} {:>12} {:>11} {:>10}", "algorithm", "success_rate", "avg_reward", "avg_steps");
        for (alg, reports) in &per_alg {
            let a = &reports[ri].aggregates;
            let _ = writeln!(
                text,
                "{:<10} {:>12.3} {:>11.2} {:>10.1}",
                alg.name(),
                a.success_rate,
                a.avg_reward,
                a.avg_steps
            );
            rows.push(ComparisonRow {
                region: name.to_string(),
                in_distribution: in_dist,
                algorithm: *alg,
                success_rate: a.success_rate,
                avg_reward: a.avg_reward,
                avg_steps: a.avg_steps,
            });
        }
        let get = |alg| rows.iter().find(|r: &&ComparisonRow| r.region == name && r.algorithm == alg);
        if let (Some(d), Some(i)) = (get(Algorithm::DisaIql), get(Algorithm::Iql)) {
            let _ = writeln!(
                text,
                "disa_iql - iql success delta on {name}: {:+.3}",
                d.success_rate - i.success_rate
            );
        }
        text.push('\n');
    }
    let mut csv = String::from("region,in_distribution,algorithm,success_rate,avg_reward,avg_steps\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.region,
            r.in_distribution,
            r.algorithm.name(),
            r.success_rate,
            r.avg_reward,
            r.avg_steps
        );
    }
    let dir = layout.compare_dir();
    m.inputs.insert("protocol".into(), protocol_hash(cfg));
    m.output(&dir, &dir.join("comparison.csv"), csv.as_bytes())?;
    m.output(&dir, &dir.join("comparison.txt"), text.as_bytes())?;
    Ok(Comparison {
        rows,
        text,
        manifest: m.finish(&dir, cfg)?,
    })
}
