//! Gaussian radial-basis-function network with a linear output layer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::ScalingSpec;
use crate::error::{Error, Result};
use crate::model::{check_len, Regressor, Table};

/// Ridge used when the interpolation system is singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// `G[i][m] = exp(-|x_i - v_m|^2 / (2 sigma_m^2))`.
pub fn rbf_design_matrix(
    centers: &[Vec<f64>],
    spreads: &[f64],
    inputs: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    check_len(centers.len(), spreads.len())?;
    if spreads.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("spreads must be > 0"));
    }
    Ok(DMatrix::from_fn(inputs.len(), centers.len(), |i, m| {
        gaussian(&inputs[i], &centers[m], spreads[m])
    }))
}

fn gaussian(x: &[f64], v: &[f64], spread: f64) -> f64 {
    let d2: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    (-d2 / (2.0 * spread * spread)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterPolicy {
    /// Every training input becomes a center; exact interpolation.
    AllPoints { ridge: f64 },
    /// Forward orthogonal least squares over training inputs as candidates.
    GreedyOls {
        max_centers: usize,
        /// Stop once training MSE (target units) drops to this value.
        goal_mse: f64,
        /// Candidates are an evenly strided subset of at most this many inputs.
        max_candidates: usize,
    },
}

impl Default for CenterPolicy {
    fn default() -> Self {
        CenterPolicy::GreedyOls {
            max_centers: 600,
            goal_mse: 0.1,
            max_candidates: 1500,
        }
    }
}

/// Trained RBF network operating on raw features; centers live in the
/// scaled input space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfNetwork {
    pub centers: Vec<Vec<f64>>,
    pub spreads: Vec<f64>,
    /// Row-major `centers x outputs`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub input_scaling: ScalingSpec,
    /// True when the ridge fallback was needed.
    pub regularized: bool,
}

impl RbfNetwork {
    /// Output for an already scaled input.
    pub fn predict_scaled(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_scaling.width(), x.len())?;
        let mut y = self.bias.clone();
        for (c, (w, &s)) in self.centers.iter().zip(self.weights.iter().zip(&self.spreads)) {
            let g = gaussian(x, c, s);
            for (o, wk) in y.iter_mut().zip(w) {
                *o += wk * g;
            }
        }
        Ok(y)
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }
}

impl Regressor for RbfNetwork {
    fn n_inputs(&self) -> usize {
        self.input_scaling.width()
    }

    fn n_outputs(&self) -> usize {
        self.bias.len()
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict_scaled(&self.input_scaling.apply(input)?)
    }
}

/// Trains an RBF network with a shared `spread` in scaled input units.
pub fn rbf_train(train: &Table, spread: f64, policy: CenterPolicy) -> Result<RbfNetwork> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::invalid(format!("spread must be > 0, got {spread}")));
    }
    let input_scaling = ScalingSpec::fit(&train.inputs)?;
    let x = input_scaling.apply_rows(&train.inputs)?;
    match policy {
        CenterPolicy::AllPoints { ridge } => all_points(x, &train.targets, spread, ridge, input_scaling),
        CenterPolicy::GreedyOls {
            max_centers,
            goal_mse,
            max_candidates,
        } => {
            if max_centers == 0 || max_candidates == 0 {
                return Err(Error::invalid("max_centers and max_candidates must be >= 1"));
            }
            greedy_ols(x, &train.targets, spread, max_centers, goal_mse, max_candidates, input_scaling)
        }
    }
}

fn all_points(
    x: Vec<Vec<f64>>,
    targets: &[Vec<f64>],
    spread: f64,
    ridge: f64,
    input_scaling: ScalingSpec,
) -> Result<RbfNetwork> {
    let n = x.len();
    let no = targets[0].len();
    let spreads = vec![spread; n];
    let g = rbf_design_matrix(&x, &spreads, &x)?;
    let bias: Vec<f64> = (0..no)
        .map(|k| targets.iter().map(|t| t[k]).sum::<f64>() / n as f64)
        .collect();
    let y = DMatrix::from_fn(n, no, |i, k| targets[i][k] - bias[k]);

    let exact = if ridge == 0.0 {
        g.clone().lu().solve(&y).filter(|w| {
            let r = &g * w - &y;
            w.iter().all(|v| v.is_finite()) && r.amax() <= 1e-6 * (1.0 + y.amax())
        })
    } else {
        None
    };
    let (w, regularized) = match exact {
        Some(w) => (w, false),
        None => {
            let lambda = if ridge > 0.0 { ridge } else { RIDGE_FALLBACK };
            let gt = g.transpose();
            let a = &gt * &g + DMatrix::identity(n, n) * lambda;
            let w = a
                .cholesky()
                .map(|c| c.solve(&(&gt * &y)))
                .ok_or_else(|| Error::Singular("regularized RBF system".into()))?;
            (w, true)
        }
    };
    Ok(RbfNetwork {
        weights: (0..n).map(|m| (0..no).map(|k| w[(m, k)]).collect()).collect(),
        centers: x,
        spreads,
        bias,
        input_scaling,
        regularized,
    })
}

fn greedy_ols(
    x: Vec<Vec<f64>>,
    targets: &[Vec<f64>],
    spread: f64,
    max_centers: usize,
    goal_mse: f64,
    max_candidates: usize,
    input_scaling: ScalingSpec,
) -> Result<RbfNetwork> {
    let n = x.len();
    let no = targets[0].len();
    let stride = n.div_ceil(max_candidates);
    let cand_idx: Vec<usize> = (0..n).step_by(stride).collect();
    let nc = cand_idx.len();

    // Column 0 is the bias; columns 1.. are candidate Gaussians.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(nc + 1);
    cols.push(vec![1.0; n]);
    for &c in &cand_idx {
        cols.push(x.iter().map(|xi| gaussian(xi, &x[c], spread)).collect());
    }
    let norms0: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut wy: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            (0..no)
                .map(|k| c.iter().zip(targets).map(|(a, t)| a * t[k]).sum())
                .collect()
        })
        .collect();
    let mut ww = norms0.clone();
    // coef[j][s]: projection of candidate j onto selected basis s.
    let mut coef: Vec<Vec<f64>> = vec![Vec::new(); nc + 1];
    let mut active = vec![true; nc + 1];
    let mut selected: Vec<usize> = Vec::new();
    let mut basis_g: Vec<Vec<f64>> = Vec::new();
    let mut sse: f64 = targets.iter().flatten().map(|t| t * t).sum();
    let goal = goal_mse * (n * no) as f64;

    while selected.len() < max_centers + 1 && sse > goal {
        let pick = if selected.is_empty() {
            Some(0)
        } else {
            (1..=nc)
                .filter(|&j| active[j] && ww[j] > 1e-10 * norms0[j])
                .map(|j| (j, wy[j].iter().map(|v| v * v).sum::<f64>() / ww[j]))
                .fold(None, |best: Option<(usize, f64)>, (j, e)| match best {
                    Some((_, be)) if be >= e => best,
                    _ => Some((j, e)),
                })
                .map(|(j, _)| j)
        };
        let Some(j) = pick else { break };
        active[j] = false;
        let q = std::mem::take(&mut cols[j]);
        let qq = ww[j];
        let g: Vec<f64> = wy[j].iter().map(|v| v / qq).collect();
        sse -= wy[j].iter().map(|v| v * v).sum::<f64>() / qq;
        for i in 0..=nc {
            if !active[i] {
                continue;
            }
            let a = q.iter().zip(&cols[i]).map(|(u, v)| u * v).sum::<f64>() / qq;
            for (c, qv) in cols[i].iter_mut().zip(&q) {
                *c -= a * qv;
            }
            for k in 0..no {
                wy[i][k] -= a * g[k] * qq;
            }
            ww[i] = cols[i].iter().map(|v| v * v).sum();
            coef[i].push(a);
        }
        selected.push(j);
        basis_g.push(g);
    }

    // Back-substitution through the unit upper-triangular projection matrix.
    let m = selected.len();
    let mut theta = vec![vec![0.0; no]; m];
    for t in (0..m).rev() {
        for k in 0..no {
            let mut v = basis_g[t][k];
            for u in t + 1..m {
                v -= coef[selected[u]][t] * theta[u][k];
            }
            theta[t][k] = v;
        }
    }
    let bias = theta[0].clone();
    let centers: Vec<Vec<f64>> = selected[1..].iter().map(|&j| x[cand_idx[j - 1]].clone()).collect();
    Ok(RbfNetwork {
        spreads: vec![spread; centers.len()],
        centers,
        weights: theta[1..].to_vec(),
        bias,
        input_scaling,
        regularized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::rng;
    use rand::Rng;

    fn sin_table(n: usize, lo: f64, hi: f64) -> Table {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        Table::scalar(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|x| x.sin()).collect())
            .unwrap()
    }

    #[test]
    fn design_matrix_values() {
        let g = rbf_design_matrix(&[vec![0.0, 0.0]], &[2.0], &[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert!((g[(1, 0)] - (-0.5f64).exp()).abs() < 1e-15);
        let wide = rbf_design_matrix(&[vec![0.0]], &[1e9], &[vec![5.0]]).unwrap();
        assert!((wide[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(rbf_design_matrix(&[vec![0.0]], &[0.0], &[vec![1.0]]).is_err());
    }

    #[test]
    fn all_points_interpolates() {
        let mut r = rng::substream(3, "rbf");
        let inputs: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)])
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (3.0 * x[0]).sin() + x[1]).collect();
        let t = Table::scalar(inputs, targets).unwrap();
        let net = rbf_train(&t, 0.2, CenterPolicy::AllPoints { ridge: 0.0 }).unwrap();
        assert!(!net.regularized);
        let worst = t
            .inputs
            .iter()
            .zip(&t.targets)
            .map(|(x, y)| (net.predict(x).unwrap()[0] - y[0]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "max residual {worst}");
    }

    #[test]
    fn duplicate_inputs_fall_back_to_ridge() {
        let t = Table::scalar(vec![vec![0.0], vec![0.0], vec![1.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let net = rbf_train(&t, 0.5, CenterPolicy::AllPoints { ridge: 0.0 }).unwrap();
        assert!(net.regularized);
    }

    #[test]
    fn greedy_learns_sine_with_few_centers() {
        let train = sin_table(50, -3.0, 3.0);
        let policy = CenterPolicy::GreedyOls {
            max_centers: 25,
            goal_mse: 1e-5,
            max_candidates: 50,
        };
        // Spread is in scaled units: 0.7 raw over a half-range of 3.
        let net = rbf_train(&train, 0.7 / 3.0, policy).unwrap();
        assert!(net.n_centers() <= 25);
        let test = sin_table(37, -2.9, 2.9);
        let mse = test
            .inputs
            .iter()
            .zip(&test.targets)
            .map(|(x, y)| (net.predict(x).unwrap()[0] - y[0]).powi(2))
            .sum::<f64>()
            / test.len() as f64;
        assert!(mse.sqrt() < 0.05, "rmse {}", mse.sqrt());
    }

    #[test]
    fn greedy_matches_least_squares_on_selected_centers() {
        let train = sin_table(40, -3.0, 3.0);
        let policy = CenterPolicy::GreedyOls {
            max_centers: 6,
            goal_mse: 0.0,
            max_candidates: 40,
        };
        let net = rbf_train(&train, 0.3, policy).unwrap();
        let x = net.input_scaling.apply_rows(&train.inputs).unwrap();
        let g = rbf_design_matrix(&net.centers, &net.spreads, &x).unwrap();
        let a = g.insert_column(0, 1.0);
        let y = DVector::from_iterator(40, train.targets.iter().map(|t| t[0]));
        let sol = a.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((sol[0] - net.bias[0]).abs() < 1e-6);
        for m in 0..net.n_centers() {
            assert!((sol[m + 1] - net.weights[m][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_weights_and_single_center() {
        let scaling = ScalingSpec::fit(&[vec![-1.0], vec![1.0]]).unwrap();
        let mut net = RbfNetwork {
            centers: vec![vec![0.5]],
            spreads: vec![0.3],
            weights: vec![vec![0.0]],
            bias: vec![0.0],
            input_scaling: scaling,
            regularized: false,
        };
        assert_eq!(net.predict(&[0.1]).unwrap(), vec![0.0]);
        net.weights[0][0] = 1.0;
        assert_eq!(net.predict(&[0.5]).unwrap(), vec![1.0]);
    }

    #[test]
    fn locality_decreases_with_distance() {
        let c = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let s = [0.5, 0.5];
        let mut last = [f64::INFINITY; 2];
        for step in 0..10 {
            let x = vec![3.0 + step as f64, -3.0 - step as f64];
            let g = rbf_design_matrix(&c, &s, &[x]).unwrap();
            for m in 0..2 {
                assert!(g[(0, m)] < last[m]);
                last[m] = g[(0, m)];
            }
        }
    }
}
