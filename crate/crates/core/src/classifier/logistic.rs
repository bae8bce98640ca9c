use crate::error::{Error, Result};

use super::lbfgs::{self, LbfgsOptions};
use super::tfidf::SparseRow;

/// Per-class sample weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub relevant: f64,
    pub nonrelevant: f64,
}

impl ClassWeights {
    /// Relevant documents weigh 1; non-relevant ones weigh the
    /// relevant/non-relevant ratio, capped at 1.
    pub fn balanced(n_relevant: usize, n_nonrelevant: usize) -> Self {
        let ratio = if n_nonrelevant == 0 {
            1.0
        } else {
            (n_relevant as f64 / n_nonrelevant as f64).min(1.0)
        };
        Self {
            relevant: 1.0,
            nonrelevant: ratio,
        }
    }

    pub fn of(&self, relevant: bool) -> f64 {
        if relevant {
            self.relevant
        } else {
            self.nonrelevant
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Inverse L2 strength on the weights (bias unpenalized).
    pub c: f64,
    pub max_iter: usize,
    pub loss_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 1000,
            loss_tol: 1e-4,
        }
    }
}

/// `0.5 |w|^2 + C * sum_i s_i * log(1 + exp(-y_i (w.x_i + b)))`, `y_i` in {-1, +1}.
pub struct WeightedLogisticLoss<'a> {
    rows: &'a [&'a SparseRow],
    labels: &'a [bool],
    weights: ClassWeights,
    dim: usize,
    c: f64,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<'a> WeightedLogisticLoss<'a> {
    pub fn new(
        rows: &'a [&'a SparseRow],
        labels: &'a [bool],
        weights: ClassWeights,
        dim: usize,
        c: f64,
    ) -> Self {
        Self {
            rows,
            labels,
            weights,
            dim,
            c,
        }
    }

    /// Parameter layout: `dim` weights followed by the bias.
    pub fn value_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = (&params[..self.dim], params[self.dim]);
        let mut grad: Vec<f64> = w.to_vec();
        grad.push(0.0);
        let mut value = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        for (row, &rel) in self.rows.iter().zip(self.labels) {
            let z = b + row.iter().map(|&(j, x)| w[j] * x).sum::<f64>();
            let y = if rel { 1.0 } else { -1.0 };
            let s = self.c * self.weights.of(rel);
            value += s * log1p_exp(-y * z);
            // d/dz log(1 + exp(-y z)) = -y * sigmoid(-y z)
            let dz = -s * y * sigmoid(-y * z);
            for &(j, x) in row.iter() {
                grad[j] += dz * x;
            }
            grad[self.dim] += dz;
        }
        (value, grad)
    }
}

/// Cost-sensitive logistic regression over TF-IDF rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub class_weights: ClassWeights,
}

impl RelevanceModel {
    /// Fits on the examined documents. Single-class data is
    /// [`Error::DegenerateTraining`]. `warm_start` seeds the optimizer.
    pub fn fit(
        dim: usize,
        rows: &[&SparseRow],
        labels: &[bool],
        opts: FitOptions,
        warm_start: Option<&RelevanceModel>,
    ) -> Result<Self> {
        let n_rel = labels.iter().filter(|&&l| l).count();
        let n_non = labels.len() - n_rel;
        if n_rel == 0 || n_non == 0 {
            return Err(Error::DegenerateTraining);
        }
        let class_weights = ClassWeights::balanced(n_rel, n_non);
        let loss = WeightedLogisticLoss::new(rows, labels, class_weights, dim, opts.c);
        let x0 = match warm_start {
            Some(m) if m.weights.len() == dim => {
                let mut p = m.weights.clone();
                p.push(m.bias);
                p
            }
            _ => vec![0.0; dim + 1],
        };
        let min = lbfgs::minimize(
            |p| loss.value_and_grad(p),
            x0,
            LbfgsOptions {
                max_iter: opts.max_iter,
                loss_tol: opts.loss_tol,
                ..Default::default()
            },
        );
        let mut weights = min.x;
        let bias = weights.pop().expect("bias present");
        Ok(Self {
            weights,
            bias,
            class_weights,
        })
    }

    pub fn decision(&self, row: &SparseRow) -> f64 {
        self.bias + row.iter().map(|&(j, x)| self.weights[j] * x).sum::<f64>()
    }

    pub fn probability(&self, row: &SparseRow) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn predict(&self, row: &SparseRow) -> bool {
        self.probability(row) >= 0.5
    }
}

/// A fitted model, or the constant fallback used when the examined
/// documents contain a single class.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Model(RelevanceModel),
    Constant(bool),
}

impl Predictor {
    pub fn fit(
        dim: usize,
        rows: &[&SparseRow],
        labels: &[bool],
        opts: FitOptions,
        warm_start: Option<&Predictor>,
    ) -> Self {
        let warm = match warm_start {
            Some(Predictor::Model(m)) => Some(m),
            _ => None,
        };
        match RelevanceModel::fit(dim, rows, labels, opts, warm) {
            Ok(m) => Predictor::Model(m),
            Err(_) => Predictor::Constant(labels.first().copied().unwrap_or(false)),
        }
    }

    pub fn predict(&self, row: &SparseRow) -> bool {
        match self {
            Predictor::Model(m) => m.predict(row),
            Predictor::Constant(c) => *c,
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<SparseRow>, Vec<bool>) {
        let rows = (0..n)
            .map(|_| {
                let mut cols: Vec<usize> = (0..dim).filter(|_| rng.random::<f64>() < 0.4).collect();
                if cols.is_empty() {
                    cols.push(rng.random_range(0..dim));
                }
                cols.into_iter().map(|c| (c, rng.random_range(-1.0..1.0))).collect()
            })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
        labels[0] = true;
        labels[1] = false;
        (rows, labels)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let dim = rng.random_range(2..8);
            let (rows, labels) = random_instance(&mut rng, 12, dim);
            let refs: Vec<&SparseRow> = rows.iter().collect();
            let n_rel = labels.iter().filter(|&&l| l).count();
            let cw = ClassWeights::balanced(n_rel, labels.len() - n_rel);
            let loss = WeightedLogisticLoss::new(&refs, &labels, cw, dim, 1.0);
            let params: Vec<f64> = (0..=dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, grad) = loss.value_and_grad(&params);
            let h = 1e-5;
            for k in 0..=dim {
                let mut p = params.clone();
                p[k] += h;
                let up = loss.value_and_grad(&p).0;
                p[k] -= 2.0 * h;
                let down = loss.value_and_grad(&p).0;
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
                assert!(rel < 1e-5 || (fd - grad[k]).abs() < 1e-9, "k={k}: {fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn class_weight_ratio_rule() {
        assert_eq!(ClassWeights::balanced(10, 10).nonrelevant, 1.0);
        assert!((ClassWeights::balanced(5, 50).nonrelevant - 0.1).abs() < 1e-15);
        assert_eq!(ClassWeights::balanced(50, 5).nonrelevant, 1.0);
        assert_eq!(ClassWeights::balanced(5, 50).relevant, 1.0);
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        // column 0 marks relevance; columns 1..4 are noise
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let rel = i % 4 == 0;
            let mut row: SparseRow = vec![];
            if rel {
                row.push((0, 0.8));
            }
            row.push((1 + rng.random_range(0..4), 0.6));
            rows.push(row);
            labels.push(rel);
        }
        let refs: Vec<&SparseRow> = rows.iter().collect();
        let m = RelevanceModel::fit(5, &refs, &labels, FitOptions::default(), None).unwrap();
        let acc = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| m.predict(r) == l)
            .count();
        assert_eq!(acc, 40);
        assert!((m.class_weights.nonrelevant - 10.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn fit_is_deterministic_and_converged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (rows, labels) = random_instance(&mut rng, 60, 10);
        let refs: Vec<&SparseRow> = rows.iter().collect();
        let a = RelevanceModel::fit(10, &refs, &labels, FitOptions::default(), None).unwrap();
        let b = RelevanceModel::fit(10, &refs, &labels, FitOptions::default(), None).unwrap();
        assert_eq!(a, b);
        let cw = a.class_weights;
        let loss = WeightedLogisticLoss::new(&refs, &labels, cw, 10, 1.0);
        let mut p = a.weights.clone();
        p.push(a.bias);
        let (_, g) = loss.value_and_grad(&p);
        assert!(g.iter().all(|v| v.abs() < 1e-2), "{g:?}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let rows: Vec<SparseRow> = vec![vec![(0, 1.0)], vec![(1, 1.0)]];
        let refs: Vec<&SparseRow> = rows.iter().collect();
        assert!(matches!(
            RelevanceModel::fit(2, &refs, &[false, false], FitOptions::default(), None),
            Err(Error::DegenerateTraining)
        ));
        let p = Predictor::fit(2, &refs, &[false, false], FitOptions::default(), None);
        assert_eq!(p, Predictor::Constant(false));
        assert!(!p.predict(&vec![(0, 1.0)]));
    }
}
