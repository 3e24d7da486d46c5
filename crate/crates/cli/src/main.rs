use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use vvlc_core::baselines::{fit_model, goodness, FitFamily, FitSummary};
use vvlc_core::dataset::{
    write_cfr_csv, write_pathloss_csv, CfrFeature, PathLossFeature, SplitSpec,
};
use vvlc_core::error::{Error, Result, StageExt};
use vvlc_core::forest::{permutation_importance, write_importance_csv, ImportanceReport};
use vvlc_core::harness::{
    compute_metrics, export_residual_cdf, load_cfr, prepare_pathloss, run_cfr_experiment,
    run_pathloss_experiment, CfrReport, DataSource, EvalReport, ExperimentConfig, GridSpec,
    ModelFamily, PathLossReport, SavedModel, SplitFractions, Task, STANDARD_SWEEP,
};
use vvlc_core::model::{Regressor, Table};

#[derive(Parser)]
#[command(name = "vvlc", version, about = "Vehicular VLC channel modeling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the experiment and generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// pathloss or cfr.
    #[arg(long)]
    task: Option<String>,
    /// mlp, rbf, forest, lambertian, linear, exp or twoterm.
    #[arg(long)]
    model: Option<String>,
    /// Training share in percent; the validation and test shares follow the sweep rule.
    #[arg(long)]
    train_frac: Option<f64>,
    /// Input CSV instead of the synthetic generator.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(Common),
    /// Fit the classical path-loss curves.
    Fit(Common),
    /// Train one model and evaluate it on the test split.
    Train(Common),
    /// Exhaustive hyperparameter search.
    Gridsearch(Common),
    /// Evaluate a saved model on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Permutation feature importance of a trained path-loss model.
    Importance {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Full pipeline: every learner, baselines, sweep, CFR and importance.
    Report(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(c) => gen(&c),
        Command::Fit(c) => fit(&c),
        Command::Train(c) => train(&c),
        Command::Gridsearch(c) => gridsearch(&c),
        Command::Eval { common, model_file } => eval(&common, &model_file),
        Command::Importance { common, repeats } => importance(&common, repeats),
        Command::Report(c) => report(&c),
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
        if let DataSource::Generator(g) = &mut cfg.data {
            g.seed = s;
        }
    }
    if let Some(t) = &c.task {
        cfg.task = t.parse()?;
    }
    if let Some(m) = &c.model {
        match m.parse::<ModelFamily>() {
            Ok(f) => cfg.model = f,
            Err(e) if m.parse::<FitFamily>().is_err() => return Err(e),
            Err(_) => {}
        }
    }
    if let Some(pct) = c.train_frac {
        let s = SplitSpec::for_train_fraction(pct / 100.0, cfg.seed)?;
        cfg.split = SplitFractions {
            train: s.train,
            validation: s.validation,
            test: s.test,
        };
    }
    if let Some(d) = &c.data {
        cfg.data = DataSource::Csv(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&c.out).map_err(|e| Error::invalid(format!("{}: {e}", c.out.display())).at("output"))?;
    Ok(&c.out)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::invalid(format!("{}: {e}", p.display())).at("output"))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(dir, name, &s)
}

#[derive(Serialize)]
struct GenReport {
    task: Task,
    seed: u64,
    n_samples: usize,
    file: String,
}

fn gen(c: &Common) -> Result<()> {
    let cfg = load_config(c).stage("config")?;
    let DataSource::Generator(g) = &cfg.data else {
        return Err(Error::invalid("gen needs a generator data source").at("config"));
    };
    let dir = out_dir(c)?;
    let (file, text, n) = match cfg.task {
        Task::Pathloss => {
            let ds = vvlc_core::synthgen::generate_ds2(g).stage("generate")?;
            ("ds2.csv", write_pathloss_csv(&ds), ds.len())
        }
        Task::Cfr => {
            let ds = vvlc_core::synthgen::generate_ds1(g).stage("generate")?;
            ("ds1.csv", write_cfr_csv(&ds), ds.len())
        }
    };
    write(dir, file, &text)?;
    write_json(
        dir,
        "gen.json",
        &GenReport {
            task: cfg.task,
            seed: g.seed,
            n_samples: n,
            file: file.to_string(),
        },
    )
}

#[derive(Serialize)]
struct FitReport {
    n_samples: usize,
    fits: Vec<FitSummary>,
}

fn fit(c: &Common) -> Result<()> {
    let mut cfg = load_config(c).stage("config")?;
    cfg.task = Task::Pathloss;
    let families = match &c.model {
        Some(m) => vec![m.parse::<FitFamily>().map_err(|_| Error::invalid(format!("`{m}` is not a fit family"))).stage("config")?],
        None => FitFamily::ALL.to_vec(),
    };
    let prep = prepare_pathloss(&cfg)?;
    let (d, y) = (prep.dataset.distances(), prep.dataset.targets());
    let mut fits = Vec::new();
    for fam in families {
        let r = fit_model(fam, &d, &y, None).stage("fit")?;
        let g = goodness(&r.model, &d, &y).stage("fit")?;
        fits.push(FitSummary::new(&r, &g));
    }
    let dir = out_dir(c)?;
    write_json(
        dir,
        "fit.json",
        &FitReport {
            n_samples: prep.dataset.len(),
            fits,
        },
    )
}

enum Trained {
    Pathloss(vvlc_core::harness::PathLossOutcome),
    Cfr(vvlc_core::harness::CfrOutcome),
}

fn run_task(cfg: &ExperimentConfig) -> Result<Trained> {
    Ok(match cfg.task {
        Task::Pathloss => Trained::Pathloss(run_pathloss_experiment(cfg)?),
        Task::Cfr => Trained::Cfr(run_cfr_experiment(cfg)?),
    })
}

fn write_trained(dir: &Path, cfg: &ExperimentConfig, t: &Trained) -> Result<()> {
    let (model, test): (_, &EvalReport) = match t {
        Trained::Pathloss(o) => {
            write_json(dir, "report.json", &o.report)?;
            (o.model.clone(), &o.report.test)
        }
        Trained::Cfr(o) => {
            write_json(dir, "report.json", &o.report)?;
            (o.model.clone(), &o.report.test)
        }
    };
    let saved = SavedModel::new(cfg.task, cfg.feature_names(), model);
    write(dir, "model.json", &(saved.to_json()? + "\n"))?;
    export_residual_cdf(test, dir.join("residual_cdf.csv")).stage("output")
}

/// Rejects curve-fit names where a learned model is required.
fn learner_only(c: &Common) -> Result<()> {
    match &c.model {
        Some(m) if m.parse::<ModelFamily>().is_err() => Err(Error::invalid(format!(
            "`{m}` is a curve fit; use the `fit` subcommand"
        ))
        .at("config")),
        _ => Ok(()),
    }
}

fn train(c: &Common) -> Result<()> {
    learner_only(c)?;
    let cfg = load_config(c).stage("config")?;
    let t = run_task(&cfg)?;
    write_trained(out_dir(c)?, &cfg, &t)
}

fn gridsearch(c: &Common) -> Result<()> {
    learner_only(c)?;
    let mut cfg = load_config(c).stage("config")?;
    if cfg.grid.is_none() {
        cfg.grid = Some(match cfg.model {
            ModelFamily::Mlp => GridSpec { h1: vec![5, 10, 15], h2: vec![5, 10], ..GridSpec::default() },
            ModelFamily::Rbf => GridSpec { spread: vec![0.5, 1.0, 2.0], ..GridSpec::default() },
            ModelFamily::Forest => GridSpec { n_trees: vec![150, 253], max_splits: vec![256, 710], ..GridSpec::default() },
        });
    }
    let t = run_task(&cfg)?;
    let dir = out_dir(c)?;
    let grid = match &t {
        Trained::Pathloss(o) => o.report.grid.as_ref(),
        Trained::Cfr(o) => o.report.grid.as_ref(),
    };
    if let Some(g) = grid {
        write(dir, "grid.csv", &g.to_csv())?;
    }
    write_trained(dir, &cfg, &t)
}

fn pathloss_features(names: &[String]) -> Result<Vec<PathLossFeature>> {
    names
        .iter()
        .map(|n| {
            PathLossFeature::ALL
                .into_iter()
                .find(|f| f.name() == n)
                .ok_or_else(|| Error::invalid(format!("unknown path-loss feature `{n}`")))
        })
        .collect()
}

fn eval(c: &Common, model_file: &Path) -> Result<()> {
    let text = std::fs::read_to_string(model_file)
        .map_err(|e| Error::invalid(format!("{}: {e}", model_file.display())))
        .stage("load")?;
    let saved = SavedModel::from_json(&text).stage("load")?;
    let mut cfg = load_config(c).stage("config")?;
    cfg.task = saved.task;
    let table = match saved.task {
        Task::Pathloss => {
            cfg.features = pathloss_features(&saved.features).stage("load")?;
            let prep = prepare_pathloss(&cfg)?;
            Table::scalar(prep.dataset.feature_matrix(&cfg.features)?, prep.dataset.targets())
        }
        Task::Cfr => {
            let with_vna = saved.features.iter().any(|f| f == CfrFeature::VnaModel.name());
            let ds = load_cfr(&cfg).stage("ingest")?;
            Table::new(ds.feature_matrix(&CfrFeature::default_set(with_vna)), ds.targets())
        }
    }
    .stage("features")?;
    let out = saved.model.predict_many(&table.inputs).stage("evaluate")?;
    let t: Vec<f64> = table.targets.iter().flatten().copied().collect();
    let o: Vec<f64> = out.iter().flatten().copied().collect();
    let name = match &c.data {
        Some(p) => p.display().to_string(),
        None => "synthetic".to_string(),
    };
    let report = compute_metrics(&t, &o).stage("evaluate")?.labeled("saved", &name, "all");
    let dir = out_dir(c)?;
    write_json(dir, "eval.json", &report)?;
    export_residual_cdf(&report, dir.join("residual_cdf.csv")).stage("output")
}

fn importance_of(cfg: &ExperimentConfig, repeats: usize) -> Result<ImportanceReport> {
    let o = run_pathloss_experiment(cfg)?;
    permutation_importance(&o.model, &o.test, &cfg.feature_names(), repeats, cfg.seed).stage("importance")
}

fn importance(c: &Common, repeats: usize) -> Result<()> {
    learner_only(c)?;
    let mut cfg = load_config(c).stage("config")?;
    if c.model.is_none() {
        cfg.model = ModelFamily::Forest;
    }
    cfg.task = Task::Pathloss;
    let rep = importance_of(&cfg, repeats)?;
    let dir = out_dir(c)?;
    write(dir, "importance.csv", &write_importance_csv(&rep))?;
    write_json(dir, "importance.json", &rep)
}

#[derive(Serialize)]
struct FullReport {
    seed: u64,
    pathloss: Vec<PathLossReport>,
    cfr: Vec<CfrReport>,
    importance: ImportanceReport,
}

fn report(c: &Common) -> Result<()> {
    let base = load_config(c).stage("config")?;
    let dir = out_dir(c)?;
    let mut pathloss = Vec::new();
    for fam in ModelFamily::ALL {
        let cfg = ExperimentConfig {
            task: Task::Pathloss,
            model: fam,
            train_fraction_sweep: base.train_fraction_sweep.clone().or(Some(STANDARD_SWEEP.to_vec())),
            ..base.clone()
        };
        let o = run_pathloss_experiment(&cfg)?;
        export_residual_cdf(&o.report.test, dir.join(format!("residual_cdf_{fam}.csv"))).stage("output")?;
        pathloss.push(o.report);
    }
    let mut cfr = Vec::new();
    for fam in [ModelFamily::Mlp, ModelFamily::Rbf] {
        let cfg = ExperimentConfig {
            task: Task::Cfr,
            model: fam,
            train_fraction_sweep: None,
            ..base.clone()
        };
        cfr.push(run_cfr_experiment(&cfg)?.report);
    }
    let imp_cfg = ExperimentConfig {
        task: Task::Pathloss,
        model: ModelFamily::Forest,
        train_fraction_sweep: None,
        ..base.clone()
    };
    let importance = importance_of(&imp_cfg, 3)?;
    write(dir, "importance.csv", &write_importance_csv(&importance))?;
    let mut summary = String::from("model,rmse_db,mae_db,two_term_rmse_db\n");
    for r in &pathloss {
        let tt = r.baseline(FitFamily::TwoTerm).map(|b| b.test.rmse).unwrap_or(f64::NAN);
        summary.push_str(&format!("{},{},{},{}\n", r.model, r.test.rmse, r.test.mae, tt));
    }
    write(dir, "summary.csv", &summary)?;
    write_json(
        dir,
        "report.json",
        &FullReport {
            seed: base.seed,
            pathloss,
            cfr,
            importance,
        },
    )
}
