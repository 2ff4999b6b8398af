use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ebm_core::data::{load_dataset, save_image_grid, synthetic_digits, ImageOptions};
use ebm_core::diagnostics::{
    analysis_window, longrun_audit, series_stats, AuditReport, Verdict, CSV_HEADER,
};
use ebm_core::landscape::{emit_disconnectivity, find_metastable, merge_basins, LandscapeMap};
use ebm_core::plot::{line_plot, stem_plot};
use ebm_core::potential::analytic::DoubleWell;
use ebm_core::potential::{load_checkpoint, save_checkpoint};
use ebm_core::sampler::{init_batch, run_chain, uniform_batch};
use ebm_core::toy::{grid_l1, grid_normalize, kde, sample_truth, ToyDensity};
use ebm_core::trainer::{train_with, TrainObserver};
use ebm_core::{rng, DiagnosticsRecord, Energy, Error, Potential, PotentialSpec, Result, Tensor};

use crate::config::{Command, DataSource, ExperimentConfig};
use crate::output::{column_csv, GRID_COLUMNS, ensure_dir, io_err, read_text, save_samples, write_text};

// Independent random streams for the pieces of one run.
const DATA_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const AUDIT_STREAM: u64 = 3;
const MAP_STREAM: u64 = 4;

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    ensure_dir(cfg.out_dir())?;
    write_text(&cfg.out_path("config.txt"), &cfg.snapshot())?;
    match cfg.command {
        Command::Train => train(cfg).map(|_| ()),
        Command::Sample => sample(cfg),
        Command::Audit => audit(cfg),
        Command::Toy => toy(cfg),
        Command::Map => map(cfg),
    }
}

fn load_data(cfg: &ExperimentConfig) -> Result<Tensor> {
    let mut r = rng::stream(cfg.seed, DATA_STREAM);
    let data = match &cfg.data.source {
        DataSource::SyntheticDigits => {
            if cfg.data.channels != 1 {
                return Err(Error::Config("synthetic digits are grayscale; set data.channels = 1".into()));
            }
            synthetic_digits(cfg.data.count, cfg.data.size, &mut r)?.samples
        }
        DataSource::Toy => sample_truth(&ToyDensity::by_name(&cfg.toy.density)?, cfg.toy.samples, &mut r)?,
        DataSource::Path(p) => {
            let opts = ImageOptions {
                size: cfg.data.size,
                channels: cfg.data.channels,
            };
            load_dataset(p, opts)?.samples
        }
        DataSource::None => return Err(Error::Config("this command needs data; set data.source".into())),
    };
    if !data.is_finite() {
        return Err(Error::Dataset("training data contains non-finite values".into()));
    }
    Ok(data)
}

fn build_potential(cfg: &ExperimentConfig, sample_shape: &[usize]) -> Result<Potential> {
    let name = &cfg.model.potential;
    let spec = if name.contains("layers=") {
        let spec: PotentialSpec = name.parse()?;
        if spec.input_shape != sample_shape {
            return Err(Error::Dimension {
                context: "model.potential input vs data",
                expected: sample_shape.to_vec(),
                found: spec.input_shape,
            });
        }
        spec
    } else {
        PotentialSpec::preset(name, sample_shape, cfg.seed)?
    };
    Potential::build(spec)
}

fn checkpoint_path(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.model
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{} needs model.checkpoint", cfg.command.name())))
}

fn energies<E: Energy + ?Sized>(pot: &E, batch: &Tensor) -> Result<Vec<f64>> {
    batch.samples().map(|x| pot.energy_at(x)).collect()
}

struct RunWriter {
    out: PathBuf,
    log: BufWriter<File>,
}

impl RunWriter {
    fn new(out: &Path) -> Result<Self> {
        let path = out.join("diagnostics.csv");
        let mut log = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(log, "{CSV_HEADER}").map_err(io_err(&path))?;
        ensure_dir(&out.join("checkpoints"))?;
        ensure_dir(&out.join("samples"))?;
        Ok(Self {
            out: out.to_path_buf(),
            log,
        })
    }

    fn flush(&mut self) -> Result<()> {
        let path = self.out.join("diagnostics.csv");
        self.log.flush().map_err(io_err(&path))
    }
}

impl TrainObserver<Potential> for RunWriter {
    fn on_step(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        let path = self.out.join("diagnostics.csv");
        writeln!(self.log, "{}", record.csv_row()).map_err(io_err(&path))
    }

    fn on_checkpoint(&mut self, t: usize, pot: &Potential, negatives: &Tensor) -> Result<()> {
        self.flush()?;
        let stem = format!("step_{t:06}");
        save_checkpoint(pot, &self.out.join("checkpoints").join(format!("{stem}.ckpt")))?;
        let dir = self.out.join("samples");
        save_samples(negatives, &dir, &stem)?;
        let e = energies(pot, negatives)?;
        write_text(&dir.join(format!("{stem}_energy.csv")), &column_csv("energy", &e))
    }
}

fn plot_diagnostics(out: &Path, log: &[DiagnosticsRecord], maxlag: usize) -> Result<()> {
    let pick = |f: fn(&DiagnosticsRecord) -> f64| -> Vec<(f64, f64)> {
        log.iter().map(|r| (r.t as f64, f(r))).collect()
    };
    let d = pick(|r| r.d);
    let v = pick(|r| r.v);
    let r = pick(|r| r.r);
    write_text(&out.join("energy_gap.svg"), &line_plot("energy difference", "step", "d", &[("d", &d)]))?;
    write_text(&out.join("grad_norm.svg"), &line_plot("gradient magnitude", "step", "v", &[("v", &v)]))?;
    write_text(&out.join("displacement.svg"), &line_plot("drift displacement", "step", "r", &[("r", &r)]))?;

    let w = analysis_window(log.len());
    let ds: Vec<f64> = log[w.clone()].iter().map(|r| r.d).collect();
    let vs: Vec<f64> = log[w.clone()].iter().map(|r| r.v).collect();
    let stats = match series_stats(&ds, false, Some(&vs), maxlag) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("warning: skipping correlation analysis: {e}");
            return Ok(());
        }
    };
    let band = 2.0 / (ds.len() as f64).sqrt();
    let mut csv = String::from("lag,acf_d,pacf_d,ccf_dv\n");
    for lag in -(maxlag as i64)..=maxlag as i64 {
        let k = lag.unsigned_abs() as usize;
        let (a, p) = if lag >= 0 {
            (stats.acf[k].to_string(), stats.pacf[k].to_string())
        } else {
            (String::new(), String::new())
        };
        let c = stats.ccf_at(lag).map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{lag},{a},{p},{c}");
    }
    write_text(&out.join("series_stats.csv"), &csv)?;
    let lags: Vec<i64> = (0..=maxlag as i64).collect();
    write_text(&out.join("acf_d.svg"), &stem_plot("autocorrelation of d", &lags, &stats.acf, Some(band)))?;
    write_text(&out.join("pacf_d.svg"), &stem_plot("partial autocorrelation of d", &lags, &stats.pacf, Some(band)))?;
    let all: Vec<i64> = (-(maxlag as i64)..=maxlag as i64).collect();
    write_text(&out.join("ccf_dv.svg"), &stem_plot("cross-correlation of d and v", &all, &stats.ccf, Some(band)))
}

struct Trained {
    potential: Potential,
    negatives: Tensor,
}

fn train(cfg: &ExperimentConfig) -> Result<Trained> {
    let data = load_data(cfg)?;
    let pot0 = build_potential(cfg, data.sample_shape())?;
    let out = cfg.out_dir();
    let mut writer = RunWriter::new(out)?;
    let result = train_with(&data, &pot0, &cfg.trainer, &mut writer);
    writer.flush()?;
    let run = result?;
    save_checkpoint(&run.potential, &out.join("model.ckpt"))?;
    plot_diagnostics(out, &run.log, cfg.maxlag)?;
    let last = run.log.last().copied();
    if let Some(r) = last {
        println!("trained {} steps: d={:.4} v={:.4} r={:.4}", r.t, r.d, r.v, r.r);
    }
    Ok(Trained {
        potential: run.potential,
        negatives: run.last_negatives,
    })
}

fn sample(cfg: &ExperimentConfig) -> Result<()> {
    let pot = load_checkpoint(checkpoint_path(cfg)?)?;
    let shape = pot.input_shape().to_vec();
    let data = match cfg.sample.sampler.init {
        ebm_core::InitMode::Data => Some(load_data(cfg)?),
        _ => None,
    };
    let mut r = rng::stream(cfg.seed, SAMPLE_STREAM);
    let init = init_batch(cfg.sample.sampler.init, &shape, data.as_ref(), None, cfg.sample.count, &mut r)?;
    let res = run_chain(&init.states, &pot, &cfg.sample.sampler, &mut r)?;
    let name = save_samples(&res.final_states, cfg.out_dir(), "samples")?;
    write_text(&cfg.out_path("samples_energy.csv"), &column_csv("energy", &res.final_energies))?;
    println!(
        "wrote {} samples to {} (accept rate {:.3})",
        res.final_states.batch_len(),
        cfg.out_path(&name).display(),
        res.accept_rate
    );
    Ok(())
}

fn audit(cfg: &ExperimentConfig) -> Result<()> {
    let pot = load_checkpoint(checkpoint_path(cfg)?)?;
    let data = load_data(cfg)?;
    let mut r = rng::stream(cfg.seed, AUDIT_STREAM);
    let report = longrun_audit(&pot, &data, &cfg.audit, &mut r)?;
    write_audit(cfg.out_dir(), &report)?;
    println!("verdict: {}", report.verdict);
    Ok(())
}

fn write_audit(out: &Path, report: &AuditReport) -> Result<()> {
    write_text(&out.join("audit.txt"), &report.to_kv())?;
    write_text(&out.join("audit_trajectory.csv"), &report.trajectory_csv())?;
    let pts = |arm: &ebm_core::diagnostics::AuditArm| -> Vec<(f64, f64)> {
        arm.trajectory.iter().map(|&(k, u)| (k as f64, u)).collect()
    };
    let (a, b) = (pts(&report.from_data), pts(&report.from_noise));
    let level = |y: f64| -> Vec<(f64, f64)> {
        let x1 = a.last().map(|p| p.0).unwrap_or(1.0);
        vec![(0.0, y), (x1, y)]
    };
    let mean = level(report.data_mean);
    let low = level(report.data_mean - 2.0 * report.data_sd);
    let svg = line_plot(
        "long-run mean energy",
        "step",
        "energy",
        &[("data init", &a), ("noise init", &b), ("data mean", &mean), ("data mean - 2 sd", &low)],
    );
    write_text(&out.join("audit_trajectory.svg"), &svg)?;
    save_samples(&report.from_data.terminal_states, out, "audit_data_init")?;
    save_samples(&report.from_noise.terminal_states, out, "audit_noise_init")?;
    Ok(())
}

fn toy(cfg: &ExperimentConfig) -> Result<()> {
    if !matches!(cfg.data.source, DataSource::Toy) {
        return Err(Error::Config("the toy command needs data.source = toy".into()));
    }
    let truth = ToyDensity::by_name(&cfg.toy.density)?;
    let run = train(cfg)?;
    let (b, g) = (cfg.toy.bounds, cfg.toy.resolution);
    let tg = grid_normalize(&truth, b, g)?;
    let lg = grid_normalize(&run.potential, b, g)?;
    let kg = kde(&run.negatives, cfg.toy.bandwidth, b, g)?;
    let out = cfg.out_dir();
    for (name, grid, title) in [("truth", &tg, "true density"), ("learned", &lg, "learned density"), ("kde", &kg, "sample density")] {
        write_text(&out.join(format!("{name}.csv")), &grid.to_csv())?;
        write_text(&out.join(format!("{name}.svg")), &grid.to_svg(title))?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "l1_learned_truth={}", grid_l1(&lg, &tg)?);
    let _ = writeln!(s, "l1_kde_truth={}", grid_l1(&kg, &tg)?);
    let _ = writeln!(s, "l1_learned_kde={}", grid_l1(&lg, &kg)?);
    let maxima = kg.local_maxima(0.05);
    for (i, m) in truth.modes().iter().enumerate() {
        let nearest = maxima
            .iter()
            .map(|&(ix, iy)| {
                let c = kg.cell_center(ix, iy);
                ((c[0] - m[0]).powi(2) + (c[1] - m[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let _ = writeln!(s, "mode{i}_kde_distance={nearest}");
    }
    write_text(&out.join("toy_l1.txt"), &s)?;
    print!("{s}");
    Ok(())
}

enum MapPotential {
    Learned(Potential),
    DoubleWell(DoubleWell),
}

impl MapPotential {
    fn energy(&self) -> &dyn Energy {
        match self {
            MapPotential::Learned(p) => p,
            MapPotential::DoubleWell(p) => p,
        }
    }
}

fn audit_verdict(path: &Path) -> Result<Option<Verdict>> {
    let text = read_text(path)?;
    let v = text.lines().find_map(|l| l.strip_prefix("verdict="));
    Ok(match v.map(str::trim) {
        Some("convergent") => Some(Verdict::Convergent),
        Some("non-convergent") => Some(Verdict::NonConvergent),
        _ => None,
    })
}

fn map(cfg: &ExperimentConfig) -> Result<()> {
    if let Some(p) = &cfg.map.audit_report {
        match audit_verdict(p)? {
            Some(Verdict::Convergent) => {}
            Some(Verdict::NonConvergent) => eprintln!(
                "warning: the audit classified this model as non-convergent; its minima may not reflect the data"
            ),
            None => eprintln!("warning: no verdict found in {}", p.display()),
        }
    }
    let pot = if cfg.model.potential == "double-well" {
        MapPotential::DoubleWell(DoubleWell)
    } else {
        MapPotential::Learned(load_checkpoint(checkpoint_path(cfg)?)?)
    };
    let e = pot.energy();
    let mut r = rng::stream(cfg.seed, MAP_STREAM);
    let starts = uniform_batch(e.input_shape(), cfg.map.starts, &mut r)?;
    let minima = find_metastable(e, &starts, &cfg.map.metastable, &mut r)?;
    if minima.is_empty() {
        return Err(Error::Precondition("no minimum converged; raise map.descent_steps".into()));
    }
    let landscape = merge_basins(e, &minima, &cfg.map.merge)?;
    let tree = emit_disconnectivity(&landscape)?;
    let out = cfg.out_dir();
    let images = e.input_shape().len() == 3;
    let files = write_basins(out, &landscape, images)?;
    write_text(&out.join("landscape.txt"), &landscape.to_text(images.then_some(&files[..])))?;
    write_text(&out.join("map_config.txt"), &cfg.map.merge.to_kv())?;
    write_text(&out.join("disconnectivity.svg"), &tree.to_svg("disconnectivity"))?;
    let mut joins = String::from("left,right,height\n");
    for (a, b, h) in tree.joins() {
        let _ = writeln!(joins, "{a},{b},{h}");
    }
    write_text(&out.join("disconnectivity.csv"), &joins)?;
    println!(
        "{} minima in {} basins, {} merges",
        minima.len(),
        landscape.basins.len(),
        landscape.merges.len()
    );
    Ok(())
}

/// Writes each basin's members and returns the file names per basin.
fn write_basins(out: &Path, map: &LandscapeMap, images: bool) -> Result<Vec<Vec<String>>> {
    let dir = out.join("basins");
    ensure_dir(&dir)?;
    let mut files = Vec::with_capacity(map.basins.len());
    for (i, basin) in map.basins.iter().enumerate() {
        let members = Tensor::stack(&basin.members)?;
        let name = if images {
            let name = format!("basin_{i:03}.png");
            save_image_grid(&members, GRID_COLUMNS, &dir.join(&name))?;
            name
        } else {
            save_samples(&members, &dir, &format!("basin_{i:03}"))?
        };
        files.push(vec![format!("basins/{name}")]);
    }
    Ok(files)
}
