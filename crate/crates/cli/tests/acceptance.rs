//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vvlc_core::baselines::{eval_fit, fit_model, goodness, FitFamily, FitModel};
use vvlc_core::dataset::{split, PathLossFeature, SplitSpec};
use vvlc_core::forest::{forest_fit, permutation_importance, ForestConfig};
use vvlc_core::harness::{
    compute_metrics, prepare_pathloss, run_cfr_experiment, run_pathloss_experiment, DataSource,
    ExperimentConfig, ModelFamily, PathLossOutcome, SplitFractions, Task,
};
use vvlc_core::model::{Regressor, Table};
use vvlc_core::neuralnet::{mlp_gradient, rbf_train, CenterPolicy, MlpNetwork};
use vvlc_core::synthgen::{generate_ds2, two_term, GeneratorConfig, DS2_TWO_TERM};

const SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn seeded(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        ..GeneratorConfig::default()
    }
}

fn c1_golden_values() -> Verdict {
    // Written out term by term, independent of the library's evaluator.
    let independent = |d: f64| 60.34 * (0.0013 * d).exp() + (-47.57) * (-0.05405 * d).exp();
    let frozen = [
        (10.0, 33.42206373365357),
        (50.0, 61.20339172371559),
        (114.0, 69.87869335013092),
    ];
    let mut worst: f64 = 0.0;
    for (d, want) in frozen {
        let lib = two_term(&DS2_TWO_TERM, d);
        let fit = eval_fit(&FitModel::TwoTerm { a: DS2_TWO_TERM }, d).unwrap();
        worst = worst
            .max((lib - independent(d)).abs())
            .max((lib - want).abs())
            .max((fit - want).abs());
    }
    let rounded = [(10.0, 33.42), (50.0, 61.20), (114.0, 69.88)]
        .iter()
        .all(|&(d, r)| (two_term(&DS2_TWO_TERM, d) - r).abs() < 0.005);
    verdict(worst < 1e-6 && rounded, format!("max deviation {worst:.2e} dB"))
}

fn c2_fit_recovery() -> Verdict {
    let clean = generate_ds2(&GeneratorConfig::noiseless()).unwrap();
    let f = fit_model(FitFamily::TwoTerm, &clean.distances(), &clean.targets(), None).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=2240 {
        let d = 2.0 + i as f64 * 0.05;
        worst = worst.max((eval_fit(&f.model, d).unwrap() - two_term(&DS2_TWO_TERM, d)).abs());
    }
    let noisy = generate_ds2(&GeneratorConfig::default()).unwrap();
    let (d, y) = (noisy.distances(), noisy.targets());
    let nf = fit_model(FitFamily::TwoTerm, &d, &y, None).unwrap();
    let rmse = goodness(&nf.model, &d, &y).unwrap().rmse;
    verdict(
        clean.len() == 7686 && worst < 0.05 && (5.5..=8.5).contains(&rmse),
        format!("noiseless max deviation {worst:.2e} dB, noisy fit RMSE {rmse:.3} dB"),
    )
}

fn run_family(seed: u64, model: ModelFamily) -> PathLossOutcome {
    let cfg = ExperimentConfig {
        model,
        seed,
        data: DataSource::Generator(seeded(seed)),
        ..ExperimentConfig::default()
    };
    run_pathloss_experiment(&cfg).unwrap()
}

struct SeedRun {
    margins: [f64; 3],
    same_split: bool,
    forest: PathLossOutcome,
}

fn c3_ml_beats_fit(runs: &[SeedRun]) -> Verdict {
    let wins = runs
        .iter()
        .filter(|r| r.same_split && r.margins.iter().all(|&m| m >= 1.0))
        .count();
    let worst = runs
        .iter()
        .flat_map(|r| r.margins)
        .fold(f64::INFINITY, f64::min);
    verdict(
        wins >= 9,
        format!("{wins}/{SEEDS} seeds with all learners >= 1 dB below two-term; smallest margin {worst:.2} dB"),
    )
}

fn c4_importance(runs: &[SeedRun]) -> Verdict {
    let names: Vec<String> = PathLossFeature::ALL.iter().map(|f| f.name().to_string()).collect();
    let mut ok = 0;
    let mut lowest = f64::INFINITY;
    for (seed, r) in runs.iter().enumerate() {
        let rep = permutation_importance(&r.forest.model, &r.forest.test, &names, 3, seed as u64).unwrap();
        let d = rep.features[0].normalized;
        lowest = lowest.min(d);
        if rep.ranking()[0] == "distance" && d > 0.5 {
            ok += 1;
        }
    }
    verdict(
        ok == SEEDS as usize,
        format!("{ok}/{SEEDS} seeds rank distance first; lowest normalized importance {lowest:.3}"),
    )
}

fn c5_region_boundary(runs: &[SeedRun]) -> Verdict {
    let b: Vec<f64> = runs.iter().map(|r| r.forest.report.region.boundary_m).collect();
    let ok = b.iter().filter(|v| (30.0..=45.0).contains(*v)).count();
    let (lo, hi) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    verdict(ok >= 9, format!("{ok}/{SEEDS} boundaries in [30, 45] m; range {lo:.1}..{hi:.1} m"))
}

fn c6_gradient_oracle() -> Verdict {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let sizes = [
            r.random_range(1..5),
            r.random_range(1..7),
            r.random_range(1..7),
            r.random_range(1..4),
        ];
        let net = MlpNetwork::random(sizes, k).unwrap();
        let n = r.random_range(1..8);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..sizes[0]).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..sizes[3]).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let batch = Table::new(inputs, targets).unwrap();
        let (_, g) = mlp_gradient(&net, &batch).unwrap();
        let h = 1e-5;
        let mut diff: f64 = 0.0;
        for i in 0..g.len() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let mut m = net.clone();
            m.params_mut()[i] -= h;
            let fd = (mlp_gradient(&p, &batch).unwrap().0 - mlp_gradient(&m, &batch).unwrap().0) / (2.0 * h);
            diff = diff.max((g[i] - fd).abs());
        }
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    verdict(worst < 1e-6, format!("worst relative gradient error {worst:.2e} over 50 networks"))
}

fn c7_rbf_interpolation() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut clean = true;
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)])
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|_| r.random_range(-5.0..5.0)).collect();
        let t = Table::scalar(inputs, targets).unwrap();
        let net = rbf_train(&t, 0.2, CenterPolicy::AllPoints { ridge: 0.0 }).unwrap();
        clean &= !net.regularized;
        let out: Vec<f64> = t.inputs.iter().map(|x| net.predict(x).unwrap()[0]).collect();
        worst = worst.max(compute_metrics(&t.target_column(0), &out).unwrap().rmse);
    }
    verdict(worst < 1e-8 && clean, format!("worst training RMSE {worst:.2e} over {SEEDS} datasets"))
}

fn c8_metric_laws() -> Verdict {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut ordered = true;
    for _ in 0..1000 {
        let n = r.random_range(1..60);
        let t: Vec<f64> = (0..n).map(|_| r.random_range(-20.0..20.0)).collect();
        let o: Vec<f64> = (0..n).map(|_| r.random_range(-20.0..20.0)).collect();
        let m = compute_metrics(&t, &o).unwrap();
        ordered &= m.rmse >= m.mae && m.mae >= 0.0 && m.n == m.residuals.len();
        ordered &= m.r.is_none_or(|v| v.abs() <= 1.0);
    }
    let eq = compute_metrics(&[2.0, -1.0, 5.0, 0.0], &[0.5, 0.5, 3.5, 1.5]).unwrap();
    let strict = compute_metrics(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
    let fixed = compute_metrics(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
    let exact = fixed.mae == 3.5
        && (fixed.rmse - 12.5f64.sqrt()).abs() < 1e-15
        && format!("{:.4}", fixed.rmse) == "3.5355";
    verdict(
        ordered && eq.rmse == eq.mae && strict.rmse > strict.mae && exact,
        format!("[3,4] -> MAE {}, RMSE {:.4}", fixed.mae, fixed.rmse),
    )
}

fn c9_ensemble() -> Verdict {
    let mut ok = 0;
    let mut detail = Vec::new();
    for seed in 0..SEEDS {
        let cfg = ExperimentConfig {
            seed,
            data: DataSource::Generator(seeded(seed)),
            ..ExperimentConfig::default()
        };
        let ds = prepare_pathloss(&cfg).unwrap().dataset;
        let t = Table::scalar(ds.feature_matrix(&PathLossFeature::ALL).unwrap(), ds.targets()).unwrap();
        let sp = split(t.len(), &SplitSpec::new(0.8, 0.0, 0.2, seed).unwrap()).unwrap();
        let (tr, te) = (t.subset(&sp.train), t.subset(&sp.test));
        let forest = forest_fit(&tr, &ForestConfig { n_trees: 100, seed, ..ForestConfig::default() }).unwrap();
        let y = te.target_column(0);
        let rmse_of = |f: &dyn Fn(&[f64]) -> f64| {
            let o: Vec<f64> = te.inputs.iter().map(|x| f(x)).collect();
            compute_metrics(&y, &o).unwrap().rmse
        };
        let ens = rmse_of(&|x| forest.predict_one(x).unwrap());
        let mut singles: Vec<f64> = forest
            .trees
            .iter()
            .map(|tree| rmse_of(&|x| tree.predict(x).unwrap()))
            .collect();
        singles.sort_by(f64::total_cmp);
        let median = 0.5 * (singles[49] + singles[50]);
        if ens <= median {
            ok += 1;
        }
        detail.push(format!("{ens:.2}/{median:.2}"));
    }
    verdict(ok >= 9, format!("{ok}/{SEEDS} seeds; forest/median tree RMSE {}", detail.join(" ")))
}

fn c10_cfr() -> Verdict {
    let run = |g: GeneratorConfig, model| {
        let cfg = ExperimentConfig {
            task: Task::Cfr,
            model,
            split: SplitFractions {
                train: 0.7,
                validation: 0.0,
                test: 0.3,
            },
            data: DataSource::Generator(g),
            ..ExperimentConfig::default()
        };
        run_cfr_experiment(&cfg).unwrap().report.test.rmse
    };
    let clean_mlp = run(GeneratorConfig::noiseless(), ModelFamily::Mlp);
    let clean_rbf = run(GeneratorConfig::noiseless(), ModelFamily::Rbf);
    let mlp = run(GeneratorConfig::default(), ModelFamily::Mlp);
    let rbf = run(GeneratorConfig::default(), ModelFamily::Rbf);
    verdict(
        clean_mlp < 0.5 && clean_rbf < 0.5 && (mlp - rbf).abs() <= 1.5,
        format!("noiseless MLP {clean_mlp:.3} RBF {clean_rbf:.3}; noisy MLP {mlp:.3} RBF {rbf:.3} dB"),
    )
}

const SMALL_CONFIG: &str = r#"{
  "data": {"generator": {"sample_count": 600}},
  "forest": {"n_trees": 20},
  "rbf": {"spread": 1.0, "policy": {"policy": "greedy_ols", "max_centers": 60, "goal_mse": 0.1, "max_candidates": 300}}
}"#;

fn vvlc(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vvlc"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn c11_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(root.join("small.json"), SMALL_CONFIG).unwrap();
    let base = ["--config", "small.json", "--seed", "5"];
    let prep = vvlc(root, &["train", "--config", "small.json", "--seed", "5", "--out", "model"]);
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("gen", vec!["gen"]),
        ("fit", vec!["fit"]),
        ("train", vec!["train", "--model", "mlp"]),
        ("gridsearch", vec!["gridsearch", "--model", "rbf"]),
        ("eval", vec!["eval", "--model-file", "model/model.json"]),
        ("importance", vec!["importance", "--repeats", "2"]),
        ("report", vec!["report"]),
    ];
    let mut failures = Vec::new();
    if let Err(e) = prep {
        failures.push(e);
    }
    for (name, args) in &cases {
        let mut outs = Vec::new();
        for run in 0..2 {
            let out = format!("{name}-{run}");
            let mut a = args.clone();
            a.extend_from_slice(&base);
            a.extend_from_slice(&["--out", &out]);
            match vvlc(root, &a) {
                Ok(()) => outs.push(dir_bytes(&root.join(&out))),
                Err(e) => failures.push(e),
            }
        }
        if outs.len() == 2 && (outs[0] != outs[1] || outs[0].is_empty()) {
            failures.push(format!("{name}: outputs differ between runs"));
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("{} subcommands byte-identical across two runs", cases.len())
    } else {
        failures.join("; ")
    };
    verdict(pass, detail)
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "{} criterion {id:>2} {name}: {} ({secs:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v, secs));
    };

    record(1, "two-term golden values", &mut c1_golden_values);
    record(2, "fit recovery", &mut c2_fit_recovery);

    let t = Instant::now();
    let runs: Vec<SeedRun> = (0..SEEDS)
        .map(|seed| {
            let outs: Vec<PathLossOutcome> = [ModelFamily::Rbf, ModelFamily::Mlp, ModelFamily::Forest]
                .into_iter()
                .map(|m| run_family(seed, m))
                .collect();
            let hash = &outs[0].report.split_hash;
            let same_split = outs.iter().all(|o| {
                &o.report.split_hash == hash
                    && o.report.baselines.iter().all(|b| b.test.n == o.report.test.n)
            });
            let margin = |o: &PathLossOutcome| {
                o.report.baseline(FitFamily::TwoTerm).unwrap().test.rmse - o.report.test.rmse
            };
            let margins = [margin(&outs[0]), margin(&outs[1]), margin(&outs[2])];
            SeedRun {
                margins,
                same_split,
                forest: outs.into_iter().nth(2).unwrap(),
            }
        })
        .collect();
    let shared = t.elapsed().as_secs_f64();
    println!("      ({SEEDS} seeds x 3 learners trained in {shared:.1} s, shared by criteria 3 to 5)");
    record(3, "ML beats curve fitting", &mut || c3_ml_beats_fit(&runs));
    record(4, "importance ranks distance first", &mut || c4_importance(&runs));
    record(5, "variance-region boundary", &mut || c5_region_boundary(&runs));
    record(6, "MLP gradient oracle", &mut c6_gradient_oracle);
    record(7, "RBF exact interpolation", &mut c7_rbf_interpolation);
    record(8, "metric laws", &mut c8_metric_laws);
    record(9, "forest ensemble property", &mut c9_ensemble);
    record(10, "CFR pipeline", &mut c10_cfr);
    record(11, "CLI determinism", &mut c11_determinism);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
