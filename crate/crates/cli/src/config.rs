//! Experiment configuration: flat `key = value` text grouped in sections.
//!
//! ```text
//! [trainer]
//! steps = 2000
//! lr = 0.005
//! ```
//!
//! Values are resolved in order: preset defaults, config file, `--set`
//! overrides, then the dedicated flags. Every key is written back to the
//! snapshot, so a snapshot alone reproduces a run.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ebm_core::diagnostics::{AuditConfig, DEFAULT_MAXLAG};
use ebm_core::landscape::{geometric_schedule, MergeConfig, MetastableConfig};
use ebm_core::toy::Bounds;
use ebm_core::trainer::{OptimizerKind, Preset, TrainerConfig};
use ebm_core::{Error, InitMode, Result, SamplerConfig};

const SECTIONS: [&str; 10] = [
    "experiment",
    "data",
    "model",
    "trainer",
    "sampler",
    "sample",
    "audit",
    "toy",
    "map",
    "diagnostics",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Sample,
    Audit,
    Toy,
    Map,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Audit => "audit",
            Command::Toy => "toy",
            Command::Map => "map",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Command::Train, Command::Sample, Command::Audit, Command::Toy, Command::Map]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    SyntheticDigits,
    Toy,
    None,
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub size: usize,
    pub channels: usize,
    /// Number of drawn digits.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Architecture preset name, a full spec string (`input=2;seed=1;layers=...`),
    /// or `double-well` for the map command.
    pub potential: String,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub count: usize,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub density: String,
    /// Size of the ground-truth training set.
    pub samples: usize,
    pub resolution: usize,
    pub bandwidth: f64,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub starts: usize,
    pub metastable: MetastableConfig,
    pub merge: MergeConfig,
    pub audit_report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub preset: Preset,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
    pub sample: SampleConfig,
    pub audit: AuditConfig,
    pub toy: ToyConfig,
    pub map: MapConfig,
    pub maxlag: usize,
    /// Every resolved key, for the snapshot.
    pub resolved: BTreeMap<String, String>,
}

/// Flags given on the command line.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub set: Vec<String>,
}

/// Parses `[section]` headers and `key = value` lines into `section.key`.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            if !SECTIONS.contains(&section.as_str()) {
                return Err(Error::Config(format!("{origin}:{}: unknown section [{section}]", n + 1)));
            }
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
        let key = if section.is_empty() || k.contains('.') {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn defaults(command: Command, preset: Preset) -> Vec<(&'static str, String)> {
    let t = preset.config();
    let s = t.sampler;
    let toy = preset.is_toy() || command == Command::Toy;
    vec![
        ("experiment.command", command.name().into()),
        ("experiment.preset", preset.name().into()),
        ("experiment.seed", "0".into()),
        ("experiment.threads", "1".into()),
        ("experiment.out", "runs/out".into()),
        ("data.source", if toy { "toy" } else { "synthetic-digits" }.into()),
        ("data.size", "28".into()),
        ("data.channels", "1".into()),
        ("data.count", "2000".into()),
        ("model.potential", preset.potential_preset().into()),
        ("model.checkpoint", String::new()),
        ("trainer.steps", t.steps.to_string()),
        ("trainer.batch_pos", t.batch_pos.to_string()),
        ("trainer.batch_neg", t.batch_neg.to_string()),
        ("trainer.lr", t.lr.to_string()),
        ("trainer.optimizer", t.optimizer.to_string()),
        ("trainer.bank_capacity", t.bank_capacity.to_string()),
        ("trainer.checkpoint_every", t.checkpoint_every.to_string()),
        ("sampler.epsilon", s.epsilon.to_string()),
        ("sampler.steps", s.steps.to_string()),
        ("sampler.tau", s.tau.to_string()),
        ("sampler.mh", s.mh.to_string()),
        ("sampler.init", s.init.to_string()),
        ("sample.count", "100".into()),
        ("sample.init", "noise".into()),
        ("sample.epsilon", "auto".into()),
        ("sample.steps", "auto".into()),
        ("sample.tau", "auto".into()),
        ("sample.mh", "false".into()),
        ("audit.epsilon", if toy { "0.125" } else { "0.015" }.into()),
        ("audit.steps", "auto".into()),
        ("audit.chains", "64".into()),
        ("audit.record_every", "auto".into()),
        ("audit.reference_samples", "2000".into()),
        ("toy.density", "mixture".into()),
        ("toy.samples", "10000".into()),
        ("toy.resolution", "200".into()),
        ("toy.bandwidth", "0.05".into()),
        ("toy.lo", "-1".into()),
        ("toy.hi", "1".into()),
        ("map.starts", "100".into()),
        ("map.langevin_steps", "200".into()),
        ("map.langevin_epsilon", "0.05".into()),
        ("map.temperature", "0.01".into()),
        ("map.descent_steps", "20000".into()),
        ("map.tol", "1e-5".into()),
        ("map.dedup_radius", "auto".into()),
        ("map.alpha_from", "1".into()),
        ("map.alpha_to", "0.01".into()),
        ("map.alpha_stages", "10".into()),
        ("map.travel_budget", "5000".into()),
        ("map.travel_epsilon", "0.05".into()),
        ("map.capture_radius", "auto".into()),
        ("map.energy_resolution", "0.5".into()),
        ("map.audit_report", String::new()),
        ("diagnostics.maxlag", DEFAULT_MAXLAG.to_string()),
    ]
}

struct Lookup<'a>(&'a BTreeMap<String, String>);

impl Lookup<'_> {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v: f64 = self.get(key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{key} must be positive, got {v}")));
        }
        Ok(v)
    }

    fn count(&self, key: &str) -> Result<usize> {
        let v: usize = self.get(key)?;
        if v == 0 {
            return Err(Error::Config(format!("{key} must be at least 1")));
        }
        Ok(v)
    }
}

/// Fills `auto` entries whose value follows from other keys. `dim` is the
/// number of entries of one input.
pub fn resolve_auto(map: &mut BTreeMap<String, String>, dim: usize) {
    let get = |m: &BTreeMap<String, String>, k: &str| m.get(k).cloned().unwrap_or_default();
    let set = |m: &mut BTreeMap<String, String>, k: &str, v: String| {
        if m.get(k).map(String::as_str) == Some("auto") {
            m.insert(k.to_string(), v);
        }
    };
    let l: usize = get(map, "sampler.steps").parse().unwrap_or(1);
    set(map, "sample.epsilon", get(map, "sampler.epsilon"));
    set(map, "sample.steps", get(map, "sampler.steps"));
    set(map, "sample.tau", get(map, "sampler.tau"));
    set(map, "audit.steps", (100 * l).to_string());
    let k: usize = get(map, "audit.steps").parse().unwrap_or(1);
    set(map, "audit.record_every", (k / 200).max(1).to_string());
    let radius = 0.05 * (dim as f64).sqrt();
    set(map, "map.dedup_radius", radius.to_string());
    set(map, "map.capture_radius", radius.to_string());
}

impl ExperimentConfig {
    /// Input dimension implied by the data section (2 for toys).
    fn input_dim(map: &BTreeMap<String, String>) -> usize {
        let l = Lookup(map);
        let toy = l.raw("data.source") == "toy" || l.raw("model.potential") == "double-well";
        if toy {
            2
        } else {
            let size: usize = l.get("data.size").unwrap_or(28);
            let ch: usize = l.get("data.channels").unwrap_or(1);
            ch * size * size
        }
    }

    pub fn resolve(command: Command, cli: &CliOverrides) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                parse_kv(&text, &p.display().to_string())?
            }
            None => Vec::new(),
        };
        let mut sets = Vec::new();
        for s in &cli.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))?;
            sets.push((k.trim().to_string(), v.trim().to_string()));
        }
        let preset_name = cli
            .preset
            .clone()
            .or_else(|| sets.iter().chain(&file).rev().find(|(k, _)| k == "experiment.preset").map(|(_, v)| v.clone()))
            .unwrap_or_else(|| {
                if command == Command::Toy { "toy-conv" } else { "image-nonconv" }.to_string()
            });
        let preset: Preset = preset_name.parse()?;

        let mut map: BTreeMap<String, String> = defaults(command, preset)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for (k, v) in file.into_iter().chain(sets) {
            if !map.contains_key(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            map.insert(k, v);
        }
        map.insert("experiment.command".into(), command.name().into());
        map.insert("experiment.preset".into(), preset.name().into());
        if let Some(seed) = cli.seed {
            map.insert("experiment.seed".into(), seed.to_string());
        }
        if let Some(t) = cli.threads {
            map.insert("experiment.threads".into(), t.to_string());
        }
        if let Some(o) = &cli.out {
            map.insert("experiment.out".into(), o.display().to_string());
        }
        let dim = Self::input_dim(&map);
        resolve_auto(&mut map, dim);
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let l = Lookup(&map);
        let seed: u64 = l.get("experiment.seed")?;
        let source = match l.raw("data.source") {
            "synthetic-digits" => DataSource::SyntheticDigits,
            "toy" => DataSource::Toy,
            "none" => DataSource::None,
            "" => return Err(Error::Config("data.source is empty".into())),
            p => DataSource::Path(PathBuf::from(p)),
        };
        let sampler = SamplerConfig {
            epsilon: l.positive("sampler.epsilon")?,
            steps: l.count("sampler.steps")?,
            tau: l.get("sampler.tau")?,
            mh: l.get("sampler.mh")?,
            init: l.get("sampler.init")?,
        };
        let trainer = TrainerConfig {
            steps: l.count("trainer.steps")?,
            batch_pos: l.count("trainer.batch_pos")?,
            batch_neg: l.count("trainer.batch_neg")?,
            lr: l.positive("trainer.lr")?,
            optimizer: l.raw("trainer.optimizer").parse::<OptimizerKind>()?,
            sampler,
            bank_capacity: l.get("trainer.bank_capacity")?,
            checkpoint_every: l.count("trainer.checkpoint_every")?,
            seed,
        };
        trainer.validate()?;
        let sample_init: InitMode = l.raw("sample.init").parse()?;
        if sample_init == InitMode::Persistent {
            return Err(Error::Config("sample.init must be noise or data".into()));
        }
        let sample = SampleConfig {
            count: l.count("sample.count")?,
            sampler: SamplerConfig {
                epsilon: l.positive("sample.epsilon")?,
                steps: l.count("sample.steps")?,
                tau: l.get("sample.tau")?,
                mh: l.get("sample.mh")?,
                init: sample_init,
            },
        };
        sample.sampler.validate()?;
        let audit = AuditConfig {
            epsilon: l.positive("audit.epsilon")?,
            steps: l.count("audit.steps")?,
            chains: l.count("audit.chains")?,
            record_every: l.count("audit.record_every")?,
            reference_samples: l.count("audit.reference_samples")?,
        };
        let (lo, hi): (f64, f64) = (l.get("toy.lo")?, l.get("toy.hi")?);
        if hi <= lo {
            return Err(Error::Config("toy.hi must exceed toy.lo".into()));
        }
        let toy = ToyConfig {
            density: l.raw("toy.density").to_string(),
            samples: l.count("toy.samples")?,
            resolution: l.count("toy.resolution")?,
            bandwidth: l.positive("toy.bandwidth")?,
            bounds: Bounds { lo: [lo, lo], hi: [hi, hi] },
        };
        ebm_core::toy::ToyDensity::by_name(&toy.density)?;
        let map_cfg = MapConfig {
            starts: l.count("map.starts")?,
            metastable: MetastableConfig {
                langevin_steps: l.get("map.langevin_steps")?,
                epsilon: l.positive("map.langevin_epsilon")?,
                temperature: l.get("map.temperature")?,
                descent_steps: l.count("map.descent_steps")?,
                tol: l.positive("map.tol")?,
                dedup_radius: l.positive("map.dedup_radius")?,
            },
            merge: MergeConfig {
                alpha_schedule: geometric_schedule(
                    l.positive("map.alpha_from")?,
                    l.positive("map.alpha_to")?,
                    l.count("map.alpha_stages")?,
                ),
                travel_budget: l.count("map.travel_budget")?,
                epsilon: l.positive("map.travel_epsilon")?,
                temperature: l.get("map.temperature")?,
                capture_radius: l.positive("map.capture_radius")?,
                energy_resolution: l.get("map.energy_resolution")?,
                seed,
            },
            audit_report: l.path("map.audit_report"),
        };
        if map_cfg.metastable.temperature < 0.0 {
            return Err(Error::Config("map.temperature must be nonnegative".into()));
        }
        Ok(Self {
            command: l.raw("experiment.command").parse()?,
            preset: l.raw("experiment.preset").parse()?,
            seed,
            threads: l.count("experiment.threads")?,
            out: PathBuf::from(l.raw("experiment.out")),
            data: DataConfig {
                source,
                size: l.count("data.size")?,
                channels: l.count("data.channels")?,
                count: l.count("data.count")?,
            },
            model: ModelConfig {
                potential: l.raw("model.potential").to_string(),
                checkpoint: l.path("model.checkpoint"),
            },
            trainer,
            sample,
            audit,
            toy,
            map: map_cfg,
            maxlag: l.get("diagnostics.maxlag")?,
            resolved: map,
        })
    }

    /// The resolved configuration in the input format.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for section in SECTIONS {
            let prefix = format!("{section}.");
            let mut first = true;
            for (k, v) in self.resolved.iter().filter(|(k, _)| k.starts_with(&prefix)) {
                if first {
                    let _ = writeln!(s, "[{section}]");
                    first = false;
                }
                let _ = writeln!(s, "{} = {v}", &k[prefix.len()..]);
            }
            if !first {
                s.push('\n');
            }
        }
        s
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(cmd: Command, preset: &str, set: &[&str]) -> Result<ExperimentConfig> {
        let cli = CliOverrides {
            preset: Some(preset.into()),
            set: set.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        ExperimentConfig::resolve(cmd, &cli)
    }

    #[test]
    fn sections_and_comments() {
        let kv = parse_kv("# c\n[trainer]\nsteps = 5 # five\n\n[sampler]\ninit=noise\n", "t").unwrap();
        assert_eq!(
            kv,
            vec![
                ("trainer.steps".to_string(), "5".to_string()),
                ("sampler.init".to_string(), "noise".to_string())
            ]
        );
        assert!(parse_kv("[nope]\n", "t").is_err());
        assert!(parse_kv("[trainer]\njunk\n", "t").is_err());
    }

    #[test]
    fn preset_values_flow_through() {
        let c = resolve(Command::Toy, "toy-conv", &[]).unwrap();
        assert_eq!(c.trainer.sampler.epsilon, 0.125);
        assert_eq!(c.trainer.sampler.init, InitMode::Persistent);
        assert_eq!(c.audit.steps, 100 * c.trainer.sampler.steps);
        assert_eq!(c.data.source, DataSource::Toy);
    }

    #[test]
    fn snapshot_reproduces_config() {
        let c = resolve(Command::Train, "image-nonconv", &["trainer.steps=7", "sampler.steps=3"]).unwrap();
        assert_eq!(c.audit.steps, 300);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.txt");
        std::fs::write(&p, c.snapshot()).unwrap();
        let again = ExperimentConfig::resolve(
            Command::Train,
            &CliOverrides {
                config: Some(p),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(again, c);
        assert!(!c.snapshot().contains("auto"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for bad in ["trainer.lr=-1", "sampler.tau=2", "trainer.steps=0", "nope.key=1", "toy.density=blob"] {
            let err = resolve(Command::Train, "toy-nonconv", &[bad]).unwrap_err();
            assert_eq!(err.class(), "config", "{bad}");
        }
        assert_eq!(resolve(Command::Train, "nope", &[]).unwrap_err().class(), "config");
    }
}
