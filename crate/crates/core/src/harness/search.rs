use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::models::{pooled_rmse, train_model, ModelSpec};
use crate::error::{Error, Result};
use crate::model::Table;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub fold_rmse: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub mean_rmse: f64,
    /// Population standard deviation of the fold RMSEs.
    pub std_rmse: f64,
}

/// Seeded fold assignment: a shuffled position `p` lands in fold `p % folds`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("cross-validation needs >= 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::invalid(format!("{folds} folds exceed {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, "folds"));
    let mut fold = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        fold[i] = p % folds;
    }
    Ok(fold)
}

/// K-fold cross-validated RMSE of `spec` on `data`.
pub fn cross_validate(spec: &ModelSpec, data: &Table, folds: usize, seed: u64) -> Result<CvReport> {
    let assign = fold_assignment(data.len(), folds, seed)?;
    let mut fold_rmse = Vec::with_capacity(folds);
    let mut fold_sizes = Vec::with_capacity(folds);
    for k in 0..folds {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assign[i] == k);
        let model = train_model(spec, &data.subset(&kept), None)?;
        fold_rmse.push(pooled_rmse(&model, &data.subset(&held))?);
        fold_sizes.push(held.len());
    }
    let mean = fold_rmse.iter().sum::<f64>() / folds as f64;
    let var = fold_rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / folds as f64;
    Ok(CvReport {
        folds,
        fold_rmse,
        fold_sizes,
        mean_rmse: mean,
        std_rmse: var.sqrt(),
    })
}

/// Candidate values per hyperparameter. An empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub h1: Vec<usize>,
    pub h2: Vec<usize>,
    pub min_gradient: Vec<f64>,
    pub spread: Vec<f64>,
    pub n_trees: Vec<usize>,
    pub max_splits: Vec<usize>,
    /// Score each point by k-fold CV on train + validation instead of the
    /// validation split.
    pub cv_folds: Option<usize>,
}

fn or_base<T: Clone>(list: &[T], base: T) -> Vec<T> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}

impl GridSpec {
    /// Full published search ranges.
    pub fn wide() -> Self {
        GridSpec {
            h1: (1..=50).collect(),
            h2: (1..=50).collect(),
            min_gradient: vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            spread: vec![0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            n_trees: (150..=300).step_by(10).collect(),
            max_splits: (4..=10).map(|p| 1usize << p).collect(),
            cv_folds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.cv_folds {
            if k < 2 {
                return Err(Error::invalid(format!("cv_folds must be >= 2, got {k}")));
            }
        }
        if self.h1.iter().chain(&self.h2).chain(&self.n_trees).any(|&v| v == 0) {
            return Err(Error::invalid("grid sizes must be >= 1"));
        }
        if self.spread.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("grid spreads must be positive"));
        }
        if self.min_gradient.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::invalid("grid min_gradient values must be >= 0"));
        }
        Ok(())
    }

    /// Cartesian product of the lists relevant to `base`'s family, in
    /// row-major order (last listed parameter varies fastest).
    pub fn expand(&self, base: &ModelSpec) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        match base {
            ModelSpec::Mlp { hidden, train } => {
                for a in or_base(&self.h1, hidden[0]) {
                    for b in or_base(&self.h2, hidden[1]) {
                        for g in or_base(&self.min_gradient, train.min_gradient) {
                            let mut t = train.clone();
                            t.min_gradient = g;
                            out.push(ModelSpec::Mlp { hidden: [a, b], train: t });
                        }
                    }
                }
            }
            ModelSpec::Rbf { spread, policy } => {
                for s in or_base(&self.spread, *spread) {
                    out.push(ModelSpec::Rbf { spread: s, policy: *policy });
                }
            }
            ModelSpec::Forest { config } => {
                for n in or_base(&self.n_trees, config.n_trees) {
                    for m in or_base(&self.max_splits, config.max_splits) {
                        let mut c = config.clone();
                        c.n_trees = n;
                        c.max_splits = m;
                        out.push(ModelSpec::Forest { config: c });
                    }
                }
            }
            ModelSpec::Mean => out.push(ModelSpec::Mean),
        }
        out
    }
}

/// Index of the smallest score; the earliest wins ties and NaN never wins.
pub fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some(b) if scores[b] <= s => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub label: String,
    pub spec: ModelSpec,
    pub validation_rmse: f64,
    pub cv_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub best: usize,
}

impl GridResult {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.rows[self.best].spec
    }

    /// `index,label,validation_rmse` CSV of the full table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,label,validation_rmse,cv_std\n");
        for r in &self.rows {
            let std = r.cv_std.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", r.index, r.label, r.validation_rmse, std));
        }
        s
    }
}

/// Exhaustive search over `grid` around `base`.
///
/// Each point is trained on `train` and scored on `validation`, or by
/// cross-validation over both when `grid.cv_folds` is set.
pub fn grid_search(
    grid: &GridSpec,
    base: &ModelSpec,
    train: &Table,
    validation: &Table,
    seed: u64,
) -> Result<GridResult> {
    grid_search_scored(grid, base, train, validation, seed, |v| v)
}

/// [`grid_search`] with every score passed through `rescale` before the
/// argmin; a hook for checking that selection is invariant to rescaling.
pub fn grid_search_scored(
    grid: &GridSpec,
    base: &ModelSpec,
    train: &Table,
    validation: &Table,
    seed: u64,
    rescale: impl Fn(f64) -> f64,
) -> Result<GridResult> {
    grid.validate()?;
    let points = grid.expand(base);
    let pooled = grid.cv_folds.map(|_| train.concat(validation));
    let mut rows = Vec::with_capacity(points.len());
    for (index, spec) in points.into_iter().enumerate() {
        let spec = spec.seeded(seed);
        let (score, cv_std) = match (grid.cv_folds, &pooled) {
            (Some(k), Some(all)) => {
                let cv = cross_validate(&spec, all, k, seed)?;
                (cv.mean_rmse, Some(cv.std_rmse))
            }
            _ => {
                if validation.is_empty() {
                    return Err(Error::invalid("grid search needs a validation split or cv_folds"));
                }
                let model = train_model(&spec, train, Some(validation))?;
                (pooled_rmse(&model, validation)?, None)
            }
        };
        rows.push(GridRow {
            index,
            label: spec.label(),
            spec,
            validation_rmse: rescale(score),
            cv_std,
        });
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.validation_rmse).collect();
    let best = argmin(&scores).ok_or_else(|| Error::invalid("no grid point produced a finite score"))?;
    Ok(GridResult { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ForestConfig;
    use crate::neuralnet::CenterPolicy;
    use proptest::prelude::*;

    fn constant(n: usize) -> Table {
        Table::scalar((0..n).map(|i| vec![i as f64]).collect(), vec![4.0; n]).unwrap()
    }

    #[test]
    fn constant_targets_give_zero_fold_error() {
        let cv = cross_validate(&ModelSpec::Mean, &constant(23), 5, 1).unwrap();
        assert_eq!(cv.fold_rmse, vec![0.0; 5]);
        assert_eq!(cv.fold_sizes.iter().sum::<usize>(), 23);
        assert_eq!((cv.mean_rmse, cv.std_rmse), (0.0, 0.0));
    }

    #[test]
    fn leave_one_out_structure() {
        let t = Table::scalar((0..10).map(|i| vec![i as f64]).collect(), (0..10).map(f64::from).collect()).unwrap();
        let cv = cross_validate(&ModelSpec::Mean, &t, 10, 0).unwrap();
        assert_eq!(cv.fold_sizes, vec![1; 10]);
        // Held-out point i against the mean of the other nine: |i - 4.5| * 10 / 9.
        let mut got = cv.fold_rmse.clone();
        got.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5).abs() * 10.0 / 9.0).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fold_count_checks() {
        assert!(cross_validate(&ModelSpec::Mean, &constant(5), 1, 0).is_err());
        assert!(cross_validate(&ModelSpec::Mean, &constant(5), 6, 0).is_err());
        let a = fold_assignment(100, 4, 9).unwrap();
        assert_eq!(a, fold_assignment(100, 4, 9).unwrap());
        assert_ne!(a, fold_assignment(100, 4, 10).unwrap());
    }

    #[test]
    fn argmin_rules() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin(&[f64::NAN]), None);
        assert_eq!(argmin(&[]), None);
    }

    #[test]
    fn expansion_order_and_fallbacks() {
        let g = GridSpec {
            h1: vec![1, 2],
            h2: vec![3, 4],
            ..GridSpec::default()
        };
        let labels: Vec<String> = g
            .expand(&ModelSpec::Mlp { hidden: [9, 9], train: Default::default() })
            .iter()
            .map(|s| s.label())
            .collect();
        assert_eq!(labels.len(), 4);
        assert!(labels[1].starts_with("mlp h1=1 h2=4"));
        let rbf = g.expand(&ModelSpec::Rbf { spread: 0.7, policy: CenterPolicy::default() });
        assert_eq!(rbf.len(), 1);
        let f = GridSpec { n_trees: vec![150, 300], max_splits: vec![16, 1024], ..GridSpec::default() };
        assert_eq!(f.expand(&ModelSpec::Forest { config: ForestConfig::default() }).len(), 4);
        assert_eq!(GridSpec::wide().spread.len(), 6);
        assert!(GridSpec { cv_folds: Some(1), ..GridSpec::default() }.validate().is_err());
    }

    #[test]
    fn single_point_grid() {
        let t = constant(20);
        let r = grid_search(&GridSpec::default(), &ModelSpec::Mean, &t, &constant(5), 0).unwrap();
        assert_eq!((r.rows.len(), r.best), (1, 0));
        assert_eq!(r.best_spec(), &ModelSpec::Mean);
        assert!(r.to_csv().starts_with("index,label,validation_rmse,cv_std\n0,mean,0,"));
    }

    fn wave(n: usize, seed: u64) -> Table {
        use rand::Rng;
        let mut r = rng::substream(seed, "wave");
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(0.0..6.0)]).collect();
        let targets = inputs.iter().map(|x| (x[0]).sin()).collect();
        Table::scalar(inputs, targets).unwrap()
    }

    #[test]
    fn grid_winner_matches_exhaustive_oracle() {
        let (tr, va) = (wave(200, 1), wave(80, 2));
        let grid = GridSpec { spread: vec![0.01, 0.1, 0.5, 3.0, 50.0], ..GridSpec::default() };
        let base = ModelSpec::Rbf {
            spread: 1.0,
            policy: CenterPolicy::GreedyOls { max_centers: 30, goal_mse: 1e-6, max_candidates: 200 },
        };
        let res = grid_search(&grid, &base, &tr, &va, 0).unwrap();
        let oracle: Vec<f64> = grid
            .expand(&base)
            .iter()
            .map(|s| pooled_rmse(&train_model(s, &tr, Some(&va)).unwrap(), &va).unwrap())
            .collect();
        let want = oracle
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v < oracle[b] { i } else { b });
        assert_eq!(res.best, want);
        assert!(matches!(res.best_spec(), ModelSpec::Rbf { spread, .. } if *spread == 0.1 || *spread == 0.5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn argmin_invariant_to_positive_scaling(v in prop::collection::vec(0.0f64..100.0, 1..30), k in 1e-3f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let a = argmin(&v).unwrap();
            let b = argmin(&scaled).unwrap();
            prop_assert!(a == b || v[a] * k == scaled[b]);
        }
    }

    #[test]
    fn rescaling_hook_keeps_selection() {
        let (tr, va) = (wave(120, 3), wave(40, 4));
        let grid = GridSpec { spread: vec![0.05, 0.3, 2.0], ..GridSpec::default() };
        let base = ModelSpec::Rbf { spread: 1.0, policy: CenterPolicy::GreedyOls { max_centers: 20, goal_mse: 1e-6, max_candidates: 120 } };
        let a = grid_search(&grid, &base, &tr, &va, 0).unwrap();
        let b = grid_search_scored(&grid, &base, &tr, &va, 0, |v| v * 37.5).unwrap();
        assert_eq!(a.best, b.best);
    }
}
