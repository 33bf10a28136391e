//! Subcommand execution: every artifact is a function of (config, seed).

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, ExperimentConfig, Task};
use crate::io::{self, DataError, MetricRow};
use std::path::{Path, PathBuf};
use thiserror::Error;
use vfunc_core::gridworld::{
    diversity_metric, interpolation_study, landmark_fractions, make_world, train_rl, visitation_map, Gridworld,
    VisitationMap,
};
use vfunc_core::model::{Head, VFuncModel};
use vfunc_core::regression::{
    interpolation_trace, make_seasonal_trend, make_toy_curve, predictive_band, train_regression,
    trace_column_variance, Dataset1D,
};
use vfunc_core::rng::stream;
use vfunc_core::toy::{run_bounds_check, ToyJoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    EvalBand,
    Interp,
    Visitation,
    Diversity,
    BoundsCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::EvalBand => "eval-band",
            Command::Interp => "interp",
            Command::Visitation => "visitation",
            Command::Diversity => "diversity",
            Command::BoundsCheck => "bounds-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] vfunc_core::Error),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("check failed:\n{0}")]
    Acceptance(String),
}

impl RunError {
    /// 1 usage/config, 2 runtime, 3 failed check.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Usage(_) | RunError::Data(_) => 1,
            RunError::Checkpoint(e) => match e {
                CheckpointError::Missing(_) | CheckpointError::ConfigMismatch { .. } | CheckpointError::Version { .. } => 1,
                CheckpointError::Io { .. } | CheckpointError::Malformed { .. } => 2,
            },
            RunError::Model(_) | RunError::Output { .. } => 2,
            RunError::Acceptance(_) => 3,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Worker threads for per-latent evaluation; results do not depend on it.
    pub jobs: usize,
}

/// What a subcommand reports on stdout (`lines`) and stderr (`notices`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub lines: Vec<String>,
    pub notices: Vec<String>,
}

pub fn resolve(config_path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::from_path(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.out = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(command: Command, cfg: &ExperimentConfig, jobs: usize) -> Result<Summary, RunError> {
    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out).map_err(|source| RunError::Output { path: out.clone(), source })?;
    write(&out.join("config.resolved.json"), |w| std::io::Write::write_all(w, cfg.to_json().as_bytes()))?;
    let ctx = Ctx { cfg, out, jobs: jobs.max(1) };
    match (command, cfg.task) {
        (Command::Train, _) => ctx.train(),
        (Command::BoundsCheck, _) => ctx.bounds_check(),
        (Command::EvalBand, Task::Regression) => ctx.eval_band(),
        (Command::Interp, Task::Regression) => ctx.interp_regression(),
        (Command::Interp, Task::Rl) => ctx.interp_rl(),
        (Command::Visitation, Task::Rl) => ctx.visitation(),
        (Command::Diversity, Task::Rl) => ctx.diversity(),
        (cmd, task) => Err(RunError::Usage(format!("`{}` is not available for task {task:?}", cmd.name()))),
    }
}

fn write(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>) -> Result<(), RunError> {
    io::write_file(path, f).map_err(|source| RunError::Output { path: path.into(), source })
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset1D, RunError> {
    let data = match cfg.dataset.as_str() {
        "toy_curve" => make_toy_curve(cfg.train_points, cfg.seed)?,
        "seasonal_trend" => make_seasonal_trend(cfg.train_points, cfg.seed)?,
        _ => {
            let path = cfg.data_path.as_deref().ok_or_else(|| RunError::Usage("dataset `csv` needs data_path".into()))?;
            io::load_csv(Path::new(path))?
        }
    };
    Ok(if cfg.centered { data.centered() } else { data })
}

pub fn build_model(cfg: &ExperimentConfig, world: Option<&Gridworld>) -> Result<VFuncModel, RunError> {
    let mc = match world {
        Some(w) => cfg.model_config(w.num_states(), Head::Categorical { classes: 4 }),
        None => cfg.model_config(1, Head::Gaussian { y_dim: 1 }),
    };
    Ok(VFuncModel::new(mc, &mut stream(cfg.seed, "model.init"))?)
}

/// Mean of `values` over grid points inside and outside `[lo, hi]`.
pub fn split_mean(grid: &[f64], values: &[f64], (lo, hi): (f64, f64)) -> (f64, f64) {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (x, v) in grid.iter().zip(values) {
        if (lo..=hi).contains(x) {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    (s_in / n_in.max(1) as f64, s_out / n_out.max(1) as f64)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    jobs: usize,
}

impl Ctx<'_> {
    fn checkpoint_path(&self) -> PathBuf {
        self.cfg.checkpoint.as_ref().map_or_else(|| self.out.join("checkpoint.json"), PathBuf::from)
    }

    fn load(&self) -> Result<VFuncModel, RunError> {
        Ok(Checkpoint::load_for(&self.checkpoint_path(), self.cfg)?.model)
    }

    fn world(&self) -> Result<Gridworld, RunError> {
        Ok(make_world(&self.cfg.world)?)
    }

    fn train(&self) -> Result<Summary, RunError> {
        let cfg = self.cfg;
        let mut summary = Summary::default();
        let (model, rows) = match cfg.task {
            Task::Regression => {
                let data = build_dataset(cfg)?;
                let mut model = build_model(cfg, None)?;
                let log = train_regression(&mut model, &data, &cfg.regression_config(), cfg.seed)?;
                let rows: Vec<MetricRow> = log
                    .iter()
                    .map(|m| MetricRow { step: m.step, reward_or_loglik: m.log_likelihood, entropy_bound: Some(m.entropy_bound) })
                    .collect();
                (model, rows)
            }
            Task::Rl => {
                let world = self.world()?;
                write(&self.out.join("world.txt"), |w| std::io::Write::write_all(w, world.to_ascii().as_bytes()))?;
                let mut model = build_model(cfg, Some(&world))?;
                let log = train_rl(&world, &mut model, &cfg.rl_config(), cfg.seed)?;
                let skipped: Vec<&String> = log.iter().flat_map(|m| &m.notices).collect();
                if let Some(first) = skipped.first() {
                    summary.notices.push(format!("entropy update skipped {} time(s): {first}", skipped.len()));
                }
                let rows = log
                    .iter()
                    .map(|m| MetricRow { step: m.iteration + 1, reward_or_loglik: m.mean_return, entropy_bound: m.entropy_bound })
                    .collect();
                (model, rows)
            }
        };
        write(&self.out.join("metrics.csv"), |w| io::write_metrics(w, &rows))?;
        Checkpoint::new(cfg, model).save(&self.checkpoint_path())?;
        if let Some(last) = rows.last() {
            let bound = last.entropy_bound.map_or("n/a".into(), |b| format!("{b:.4}"));
            summary.lines.push(format!("final step {}: reward_or_loglik {:.4}, entropy bound {bound}", last.step, last.reward_or_loglik));
        }
        summary.lines.push(format!("checkpoint written to {}", self.checkpoint_path().display()));
        Ok(summary)
    }

    fn eval_band(&self) -> Result<Summary, RunError> {
        let model = self.load()?;
        let data = build_dataset(self.cfg)?;
        let grid = data.default_grid(self.cfg.eval.grid_points);
        let band = predictive_band(&model, &grid, self.cfg.eval.z_samples, &mut stream(self.cfg.seed, "eval.band"))?;
        write(&self.out.join("band.csv"), |w| io::write_band(w, &band))?;
        let (inside, outside) = split_mean(&grid, &band.stds, data.x_train_range);
        Ok(Summary {
            lines: vec![format!("mean predictive std: {inside:.6} inside the training range, {outside:.6} outside")],
            notices: Vec::new(),
        })
    }

    fn interp_regression(&self) -> Result<Summary, RunError> {
        let model = self.load()?;
        let data = build_dataset(self.cfg)?;
        let grid = data.default_grid(self.cfg.eval.grid_points);
        let mut rng = stream(self.cfg.seed, "eval.interp");
        let z0 = model.sample_latent(&mut rng);
        let z1 = model.sample_latent(&mut rng);
        let alphas = &self.cfg.eval.alphas;
        let rows = interpolation_trace(&model, &z0, &z1, alphas, &grid)?;
        write(&self.out.join("interp.csv"), |w| io::write_interp(w, &grid, alphas, &rows))?;
        let (inside, outside) = split_mean(&grid, &trace_column_variance(&rows), data.x_train_range);
        Ok(Summary {
            lines: vec![format!("variance across alpha: {inside:.6e} inside the training range, {outside:.6e} outside")],
            notices: Vec::new(),
        })
    }

    fn eval_latents(&self, model: &VFuncModel) -> Vec<Vec<f64>> {
        let mut rng = stream(self.cfg.seed, "eval.latents");
        (0..self.cfg.eval.num_z).map(|_| model.sample_latent(&mut rng)).collect()
    }

    /// One map per latent, each from its own stream, spread over `jobs` threads.
    fn maps(&self, world: &Gridworld, model: &VFuncModel, zs: &[Vec<f64>]) -> Result<Vec<VisitationMap>, RunError> {
        let episodes = self.cfg.eval.episodes_per_z;
        let seed = self.cfg.seed;
        let one = |i: usize| visitation_map(world, model, &zs[i], episodes, &mut stream(seed, &format!("eval.visitation.{i}")));
        let chunk = zs.len().div_ceil(self.jobs);
        let results: Vec<vfunc_core::Result<VisitationMap>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..zs.len())
                .step_by(chunk)
                .map(|start| {
                    let one = &one;
                    s.spawn(move || (start..(start + chunk).min(zs.len())).map(one).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("visitation worker panicked")).collect()
        });
        Ok(results.into_iter().collect::<vfunc_core::Result<_>>()?)
    }

    fn visitation(&self) -> Result<Summary, RunError> {
        let world = self.world()?;
        let model = self.load()?;
        let zs = self.eval_latents(&model);
        let maps = self.maps(&world, &model, &zs)?;
        write(&self.out.join("world.txt"), |w| std::io::Write::write_all(w, world.to_ascii().as_bytes()))?;
        for (i, map) in maps.iter().enumerate() {
            write(&self.out.join(format!("visitation_z{i:02}.pgm")), |w| io::write_pgm(w, map))?;
            write(&self.out.join(format!("visitation_z{i:02}.csv")), |w| io::write_visitation_csv(w, map))?;
        }
        let mut summary_rows = vec![{
            let mut h = vec!["z".to_string(), "goal_freq".into()];
            h.extend(world.landmarks.iter().map(|(r, c)| format!("landmark_r{r}c{c}")));
            h.join(",")
        }];
        for (i, map) in maps.iter().enumerate() {
            let mut rec = vec![i.to_string(), map.at(world.goal).to_string()];
            rec.extend(world.landmarks.iter().map(|&c| map.at(c).to_string()));
            summary_rows.push(rec.join(","));
        }
        write(&self.out.join("visitation_summary.csv"), |w| {
            std::io::Write::write_all(w, (summary_rows.join("\n") + "\n").as_bytes())
        })?;
        let reached = maps.iter().filter(|m| m.at(world.goal) > 0.0).count();
        let mut lines = vec![format!("goal reached under {reached}/{} latents", maps.len())];
        if !world.landmarks.is_empty() {
            let shares = aggregate_shares(&maps, &world);
            let text: Vec<String> = world.landmarks.iter().zip(&shares).map(|((r, c), s)| format!("({r},{c}) {s:.3}")).collect();
            lines.push(format!("aggregate crossing share: {}", text.join(", ")));
        }
        Ok(Summary { lines, notices: Vec::new() })
    }

    fn diversity(&self) -> Result<Summary, RunError> {
        let world = self.world()?;
        let model = self.load()?;
        let zs = self.eval_latents(&model);
        let maps = self.maps(&world, &model, &zs)?;
        let d = diversity_metric(&maps)?;
        write(&self.out.join("diversity.csv"), |w| {
            std::io::Write::write_all(w, format!("num_z,episodes_per_z,diversity\n{},{},{d}\n", zs.len(), self.cfg.eval.episodes_per_z).as_bytes())
        })?;
        Ok(Summary { lines: vec![format!("diversity {d}")], notices: Vec::new() })
    }

    /// Interpolates between the latents whose first-landmark share is
    /// highest (`z0`) and lowest (`z1`); without landmarks, the first two.
    fn interp_rl(&self) -> Result<Summary, RunError> {
        let world = self.world()?;
        let model = self.load()?;
        let zs = self.eval_latents(&model);
        let (i0, i1) = if world.landmarks.is_empty() {
            (0, 1)
        } else {
            let maps = self.maps(&world, &model, &zs)?;
            let share: Vec<f64> = maps.iter().map(|m| landmark_fractions(m, &world.landmarks)[0]).collect();
            let by = |better: fn(f64, f64) -> bool| (0..share.len()).fold(0, |b, i| if better(share[i], share[b]) { i } else { b });
            (by(|a, b| a > b), by(|a, b| a < b))
        };
        let alphas = &self.cfg.eval.alphas;
        let maps = interpolation_study(
            &world,
            &model,
            &zs[i0],
            &zs[i1],
            alphas,
            self.cfg.eval.episodes_per_z,
            &mut stream(self.cfg.seed, "eval.interp"),
        )?;
        let mut rows = vec![{
            let mut h = vec!["alpha".to_string()];
            h.extend(world.landmarks.iter().map(|(r, c)| format!("share_r{r}c{c}")));
            h.join(",")
        }];
        for (a, map) in alphas.iter().zip(&maps) {
            write(&self.out.join(format!("interp_alpha={a}.pgm")), |w| io::write_pgm(w, map))?;
            write(&self.out.join(format!("interp_alpha={a}.csv")), |w| io::write_visitation_csv(w, map))?;
            let mut rec = vec![a.to_string()];
            rec.extend(landmark_fractions(map, &world.landmarks).iter().map(f64::to_string));
            rows.push(rec.join(","));
        }
        write(&self.out.join("interp_landmarks.csv"), |w| std::io::Write::write_all(w, (rows.join("\n") + "\n").as_bytes()))?;
        let mut lines = vec![format!("interpolating latent {i1} (alpha=0) to latent {i0} (alpha=1)")];
        if !world.landmarks.is_empty() {
            let first: Vec<String> = maps.iter().map(|m| format!("{:.3}", landmark_fractions(m, &world.landmarks)[0])).collect();
            lines.push(format!("share through {:?} by alpha: {}", world.landmarks[0], first.join(" ")));
        }
        Ok(Summary { lines, notices: Vec::new() })
    }

    fn bounds_check(&self) -> Result<Summary, RunError> {
        let report = run_bounds_check(&ToyJoint::default(), &self.cfg.bounds_check_config())?;
        let e = &report.exact;
        let mut lines = vec![format!(
            "enumerated: H(f) {:.6}  H(f|z) {:.6}  H(z|f) {:.6}  I(f;z) {:.6}",
            e.h_f, e.h_f_given_z, e.h_z_given_f, e.mutual_info
        )];
        let mut csv = String::from("check,estimate,std_err,limit,pass\n");
        for l in &report.lines {
            lines.push(format!(
                "{} {}: estimate {:.6} (se {:.6}), limit {:.6}",
                if l.pass { "PASS" } else { "FAIL" },
                l.name,
                l.estimate,
                l.std_err,
                l.limit
            ));
            csv.push_str(&format!("\"{}\",{},{},{},{}\n", l.name, l.estimate, l.std_err, l.limit, l.pass));
        }
        write(&self.out.join("bounds_check.csv"), |w| std::io::Write::write_all(w, csv.as_bytes()))?;
        if report.passed() {
            lines.push("bounds-check PASS".into());
            Ok(Summary { lines, notices: Vec::new() })
        } else {
            lines.push("bounds-check FAIL".into());
            Err(RunError::Acceptance(lines.join("\n")))
        }
    }
}

/// Share of the summed landmark mass over all maps that falls on each landmark.
pub fn aggregate_shares(maps: &[VisitationMap], world: &Gridworld) -> Vec<f64> {
    let masses: Vec<f64> = world.landmarks.iter().map(|&c| maps.iter().map(|m| m.at(c)).sum()).collect();
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| if total > 0.0 { m / total } else { 0.0 }).collect()
}
