use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hip_core::action::{action_mse, train_inverse};
use hip_core::env::generate_datasets;
use hip_core::nn::checkpoint::read_header_bytes;
use hip_core::oracle::{
    bruteforce_next_subgoals, gaussian_sampling_check, gradient_suite, random_gaussian_spec, random_reachable_states,
    ratio_experiment,
};
use hip_core::pipeline::{evaluate, report_csv, sweep_csv, sweep_guidance, EvalReport, Models};
use hip_core::task::{grounding_accuracy, train_grounding};
use hip_core::visual::{feasibility_accuracy, train_denoiser, train_feasibility, NoiseSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{derive_seed, Config};
use crate::io;
use crate::CliError;

/// Dataset sizes written by [`gen_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub classify: usize,
    pub video: usize,
    pub inv: usize,
}

pub fn gen_data(cfg: &Config) -> Result<Counts, CliError> {
    cfg.validate()?;
    let d = generate_datasets(cfg.data.n_tasks, cfg.master_seed, cfg.env).map_err(CliError::runtime)?;
    io::save_datasets(&cfg.paths.data_dir, &d)?;
    Ok(Counts {
        classify: d.classify.len(),
        video: d.video.len(),
        inv: d.inv.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Grounding,
    Denoiser,
    Feasibility,
    Inverse,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Grounding,
        Component::Denoiser,
        Component::Feasibility,
        Component::Inverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Grounding => "grounding",
            Component::Denoiser => "denoiser",
            Component::Feasibility => "feasibility",
            Component::Inverse => "inverse",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Component::Grounding => 1,
            Component::Denoiser => 2,
            Component::Feasibility => 3,
            Component::Inverse => 4,
        }
    }

    /// `all` or one component name.
    pub fn parse_list(s: &str) -> Result<Vec<Component>, CliError> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .map(|c| vec![c])
            .ok_or_else(|| CliError::Validation(format!("unknown component {s:?}")))
    }
}

/// Trains the requested components from the datasets in `paths.data_dir`,
/// writing one checkpoint and one `<component>_loss.csv` each.
pub fn train(cfg: &Config, components: &[Component]) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let sched = NoiseSchedule::from_params(&cfg.schedule).map_err(CliError::runtime)?;
    let dir = &cfg.paths.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for &c in components {
        let seed = derive_seed(cfg.master_seed, c.salt());
        let t0 = Instant::now();
        let (ck, history) = match c {
            Component::Grounding => {
                let data = io::load_classify(&cfg.paths.data_dir)?;
                let tc = hip_core::task::GroundingTrainConfig {
                    seed: derive_seed(seed, cfg.train.grounding.seed),
                    ..cfg.train.grounding
                };
                let (m, h) = train_grounding(&data, &tc).map_err(CliError::runtime)?;
                let (valid, _) = grounding_accuracy(&m, &data).map_err(CliError::runtime)?;
                log::info!("grounding: training accuracy {valid:.3}");
                (m.to_checkpoint(), h)
            }
            Component::Denoiser => {
                let data = io::load_video(&cfg.paths.data_dir)?;
                let tc = hip_core::visual::DenoiserTrainConfig {
                    seed: derive_seed(seed, cfg.train.denoiser.seed),
                    ..cfg.train.denoiser
                };
                let (m, h) = train_denoiser(&data, &sched, &tc).map_err(CliError::runtime)?;
                (m.to_checkpoint(), h)
            }
            Component::Feasibility => {
                let data = io::load_video(&cfg.paths.data_dir)?;
                let tc = hip_core::visual::FeasibilityTrainConfig {
                    seed: derive_seed(seed, cfg.train.feasibility.seed),
                    ..cfg.train.feasibility
                };
                let (m, h) = train_feasibility(&data, &sched, &tc).map_err(CliError::runtime)?;
                let (acc, _) = feasibility_accuracy(&m, &data, seed).map_err(CliError::runtime)?;
                log::info!("feasibility: training accuracy {acc:.3}");
                (m.to_checkpoint(), h)
            }
            Component::Inverse => {
                let data = io::load_inv(&cfg.paths.data_dir)?;
                let tc = hip_core::action::InverseTrainConfig {
                    seed: derive_seed(seed, cfg.train.inverse.seed),
                    ..cfg.train.inverse
                };
                let (m, h) = train_inverse(&data, &tc).map_err(CliError::runtime)?;
                log::info!("inverse: training mse {:.5}", action_mse(&m, &data).map_err(CliError::runtime)?);
                (m.to_checkpoint(), h)
            }
        };
        log::info!("{}: {} epochs in {:.1}s", c.name(), history.len(), t0.elapsed().as_secs_f64());
        io::write_loss_csv(&dir.join(format!("{}_loss.csv", c.name())), &history)?;
        written.push(io::save_checkpoint(dir, &ck)?);
    }
    Ok(written)
}

fn load_checked_models(cfg: &Config) -> Result<Models, CliError> {
    let models = io::load_models(&cfg.paths.checkpoint_dir)?;
    let sched = NoiseSchedule::from_params(&cfg.schedule).map_err(CliError::runtime)?;
    models.check_compatible(&cfg.env, Some(&sched)).map_err(CliError::runtime)?;
    Ok(models)
}

fn write_output(cfg: &Config, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let dir = &cfg.paths.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Evaluates every configured mode and writes `eval.csv`.
pub fn eval(cfg: &Config) -> Result<(Vec<EvalReport>, PathBuf), CliError> {
    cfg.validate()?;
    let models = load_checked_models(cfg)?;
    let pc = cfg.pipeline();
    let reports = cfg
        .eval
        .modes
        .iter()
        .map(|&m| {
            evaluate(&models, cfg.env, cfg.eval.n_tasks, m, &cfg.eval.seeds, &pc, cfg.eval.multi_subgoal)
                .map_err(CliError::runtime)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = write_output(cfg, "eval.csv", &report_csv(&reports, &cfg.echo()))?;
    Ok((reports, path))
}

/// Full-mode completion rate over `eval.sweep`, written to `sweep.csv`.
pub fn sweep(cfg: &Config) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let models = load_checked_models(cfg)?;
    let rows = sweep_guidance(&models, cfg.env, &cfg.eval.sweep, cfg.eval.n_tasks, &cfg.eval.seeds, &cfg.pipeline())
        .map_err(CliError::runtime)?;
    write_output(cfg, "sweep.csv", &sweep_csv(&rows, &cfg.echo()))
}

/// One oracle suite's verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs the closed-form, brute-force and finite-difference suites.
pub fn oracle_check(cfg: &Config) -> Result<Vec<OracleOutcome>, CliError> {
    cfg.validate()?;
    let mut out = Vec::new();
    let seed = derive_seed(cfg.master_seed, 100);

    let sched = NoiseSchedule::from_params(&cfg.schedule).map_err(CliError::runtime)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..3 {
        let spec = random_gaussian_spec(4, &mut rng);
        let r = gaussian_sampling_check(&spec, &sched, 2000, &mut rng).map_err(CliError::runtime)?;
        out.push(OracleOutcome {
            name: format!("gaussian sampling #{}", i + 1),
            passed: r.max_mean_error <= 0.05 && r.max_var_rel_error <= 0.2,
            detail: format!("mean err {:.4}, var rel err {:.4}", r.max_mean_error, r.max_var_rel_error),
        });
    }

    let r = ratio_experiment(20000, 2000, 60, seed).map_err(CliError::runtime)?;
    out.push(OracleOutcome {
        name: "density ratio".into(),
        passed: r.argmax_agreement >= 0.97 && r.mean_abs_error < 0.2,
        detail: format!("argmax agreement {:.4}, mean abs error {:.4}", r.argmax_agreement, r.mean_abs_error),
    });

    let states = random_reachable_states(1000, seed, cfg.env);
    let mismatches = states
        .iter()
        .filter(|(s, g)| hip_core::env::valid_next_subgoals(s, g).ok() != Some(bruteforce_next_subgoals(s, g)))
        .count();
    out.push(OracleOutcome {
        name: "subgoal validity".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches over {} states", states.len()),
    });

    for case in gradient_suite(1e-5, 1e-4, 200) {
        out.push(OracleOutcome {
            name: format!("gradient: {}", case.name),
            passed: case.passed,
            detail: format!("max rel error {:.2e}", case.max_rel_error),
        });
    }
    Ok(out)
}

pub fn format_outcomes(outcomes: &[OracleOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        let _ = writeln!(s, "{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    s
}

/// Human-readable checkpoint header.
pub fn inspect(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let h = read_header_bytes(&bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut s = format!("role: {}\nversion: {}\nseed: {}\n", h.role, h.version, h.seed);
    for (k, v) in &h.meta {
        let _ = writeln!(s, "meta.{k}: {v}");
    }
    for (i, (fi, fo, act)) in h.layers.iter().enumerate() {
        let _ = writeln!(s, "layer {i}: {fi} -> {fo} ({act:?})");
    }
    Ok(s)
}
