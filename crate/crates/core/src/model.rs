//! Shared abstractions over trained regressors.

use crate::error::{Error, Result};

/// A trained multi-output regressor operating on raw (unscaled) features.
pub trait Regressor {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>>;

    fn predict_many(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.predict(x)).collect()
    }
}

impl<R: Regressor + ?Sized> Regressor for &R {
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn n_outputs(&self) -> usize {
        (**self).n_outputs()
    }
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(input)
    }
}

/// Row-oriented supervised data: one feature vector and one target vector per sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        let t = Table { inputs, targets };
        if let Some(first) = t.inputs.first() {
            let (ni, no) = (first.len(), t.targets[0].len());
            for (x, y) in t.inputs.iter().zip(&t.targets) {
                if x.len() != ni {
                    return Err(Error::ShapeMismatch {
                        expected: ni,
                        actual: x.len(),
                    });
                }
                if y.len() != no {
                    return Err(Error::ShapeMismatch {
                        expected: no,
                        actual: y.len(),
                    });
                }
            }
        }
        Ok(t)
    }

    /// Single-output convenience constructor.
    pub fn scalar(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        Table::new(inputs, targets.into_iter().map(|y| vec![y]).collect())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Table {
        Table {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    /// Concatenates two tables with identical shapes.
    pub fn concat(&self, other: &Table) -> Table {
        let mut t = self.clone();
        t.inputs.extend(other.inputs.iter().cloned());
        t.targets.extend(other.targets.iter().cloned());
        t
    }

    /// Column `j` of the targets.
    pub fn target_column(&self, j: usize) -> Vec<f64> {
        self.targets.iter().map(|y| y[j]).collect()
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, actual })
    }
}
