//! Multi-class linear SVM: one-vs-rest, L1 hinge loss, trained by dual
//! coordinate descent.
//!
//! For a binary problem with augmented inputs `x_i = (features, 1)` and labels
//! `y_i in {-1, +1}` the solver maximizes the dual
//!
//! ```text
//! D(a) = sum_i a_i - 1/2 |sum_i a_i y_i x_i|^2,   0 <= a_i <= C
//! ```
//!
//! one coordinate at a time, keeping `w = sum_i a_i y_i x_i` up to date so that
//! each step costs one dot product. The bias is the last weight and is
//! regularized like any other component.

mod model_file;

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::metrics::PredictionSet;
use crate::rng::SeededRng;

pub use model_file::{decode_model, encode_model, read_model, write_model, MODEL_FORMAT};

/// Solver hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    /// Hinge penalty, `> 0`.
    pub c: f64,
    /// Stop once the largest projected-gradient violation seen in an epoch is
    /// at most this.
    pub tol: f64,
    /// Epoch cap.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            seed: 42,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense row-major design matrix whose rows already carry the constant bias
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("design matrix rows differ in length".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Appends a constant 1 to every feature vector.
    pub fn augmented<'a>(vectors: impl IntoIterator<Item = &'a [f32]>, dim: usize) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        for v in vectors {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "vector of length {} in a {dim}-d set",
                    v.len()
                )));
            }
            data.extend(v.iter().map(|&x| f64::from(x)));
            data.push(1.0);
            rows += 1;
        }
        Ok(Self {
            rows,
            cols: dim + 1,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of one binary training run.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
    pub epochs: usize,
    /// Largest projected-gradient violation of the final epoch.
    pub max_violation: f64,
    /// Dual objective after each epoch.
    pub dual_trace: Vec<f64>,
}

impl BinarySolution {
    pub fn dual_objective(&self) -> f64 {
        dual_objective(&self.alphas, &self.weights)
    }
}

/// `sum(alpha) - |w|^2 / 2`, valid when `w = sum alpha_i y_i x_i`.
pub fn dual_objective(alphas: &[f64], weights: &[f64]) -> f64 {
    alphas.iter().sum::<f64>() - 0.5 * dot(weights, weights)
}

/// `|w|^2 / 2 + C sum max(0, 1 - y_i w.x_i)`
pub fn primal_objective(x: &DesignMatrix, y: &[i8], weights: &[f64], c: f64) -> f64 {
    let hinge: f64 = (0..x.rows())
        .map(|i| (1.0 - f64::from(y[i]) * dot(weights, x.row(i))).max(0.0))
        .sum();
    0.5 * dot(weights, weights) + c * hinge
}

/// Trains one L1-hinge linear SVM by dual coordinate descent. Each epoch
/// visits every coordinate once in a fresh seeded permutation.
pub fn train_binary(x: &DesignMatrix, y: &[i8], params: &SvmParams) -> Result<BinarySolution> {
    params.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", y.len())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if let Some(bad) = y.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidArgument(format!(
            "labels must be -1 or +1, got {bad}"
        )));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(Error::DegenerateLabels(format!(
            "all {n} samples carry label {:+}",
            y[0]
        )));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(
            "design matrix contains a non-finite value".into(),
        ));
    }

    let c = params.c;
    let diag: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i))).collect();
    let mut alphas = vec![0.0f64; n];
    let mut w = vec![0.0f64; x.cols()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(params.seed);
    let mut dual_trace = Vec::new();
    let mut epochs = 0;
    let mut max_violation = f64::INFINITY;

    while epochs < params.max_iter {
        epochs += 1;
        rng.shuffle(&mut order);
        max_violation = 0.0f64;
        for &i in &order {
            let xi = x.row(i);
            let yi = f64::from(y[i]);
            let g = yi * dot(&w, xi) - 1.0;
            let a = alphas[i];
            let pg = if a == 0.0 {
                g.min(0.0)
            } else if a == c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg.abs() <= 1e-12 {
                continue;
            }
            let updated = if diag[i] > 0.0 {
                (a - g / diag[i]).clamp(0.0, c)
            } else {
                // zero row: the objective is linear in a_i with slope -g > 0
                c
            };
            let step = (updated - a) * yi;
            if step != 0.0 {
                alphas[i] = updated;
                w.iter_mut().zip(xi).for_each(|(wk, xk)| *wk += step * xk);
            }
        }
        dual_trace.push(dual_objective(&alphas, &w));
        if max_violation <= params.tol {
            break;
        }
    }
    if max_violation > params.tol {
        log::debug!(
            "dual coordinate descent stopped after {epochs} epochs with violation {max_violation:.3e}"
        );
    }
    Ok(BinarySolution {
        weights: w,
        alphas,
        epochs,
        max_violation,
        dual_trace,
    })
}

/// Per-class rows of `(w, b)` stored as 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub classes: Vec<u32>,
    pub dim: usize,
    /// One row per class, `dim + 1` values, bias last.
    pub weights: Vec<Vec<f32>>,
    pub c: f64,
    pub tol: f64,
    pub seed: u64,
    pub extractor_id: String,
}

impl LinearSvmModel {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Format("model has no classes".into()));
        }
        if self.weights.len() != self.classes.len() {
            return Err(Error::Format(format!(
                "{} weight rows for {} classes",
                self.weights.len(),
                self.classes.len()
            )));
        }
        if self.classes.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Format(
                "model classes must be strictly increasing".into(),
            ));
        }
        for (row, class) in self.weights.iter().zip(&self.classes) {
            if row.len() != self.dim + 1 {
                return Err(Error::Format(format!(
                    "class {class}: weight row has {} values, expected {}",
                    row.len(),
                    self.dim + 1
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("class {class}: non-finite weight")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTrainStats {
    pub class_id: u32,
    pub epochs: usize,
    pub max_violation: f64,
    pub dual_objective: f64,
    /// Primal minus dual objective at the returned solution.
    pub duality_gap: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub per_class: Vec<ClassTrainStats>,
    pub wall_time: Duration,
}

/// Trains one binary problem per class (that class against the rest). The
/// problem for class `k` uses seed `params.seed ^ k`. Subproblems run in
/// parallel; rows come back in class-id order.
pub fn train_ovr(train: &FeatureSet, params: &SvmParams) -> Result<(LinearSvmModel, TrainReport)> {
    params.validate()?;
    let start = Instant::now();
    let labels = train
        .vectors()
        .iter()
        .map(|v| {
            v.label
                .ok_or_else(|| Error::MissingLabel(v.patch_id.clone()))
        })
        .collect::<Result<Vec<u32>>>()?;
    let mut classes = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "one-vs-rest training needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let x = DesignMatrix::augmented(
        train.vectors().iter().map(|v| v.values.as_slice()),
        train.dim(),
    )?;

    let solved = classes
        .par_iter()
        .map(|&class| {
            let y: Vec<i8> = labels
                .iter()
                .map(|&l| if l == class { 1 } else { -1 })
                .collect();
            let p = SvmParams {
                seed: params.seed ^ u64::from(class),
                ..*params
            };
            let sol = train_binary(&x, &y, &p)?;
            let dual = sol.dual_objective();
            let stats = ClassTrainStats {
                class_id: class,
                epochs: sol.epochs,
                max_violation: sol.max_violation,
                dual_objective: dual,
                duality_gap: primal_objective(&x, &y, &sol.weights, params.c) - dual,
            };
            let row: Vec<f32> = sol.weights.iter().map(|&v| v as f32).collect();
            Ok((row, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let (weights, per_class): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    let model = LinearSvmModel {
        classes,
        dim: train.dim(),
        weights,
        c: params.c,
        tol: params.tol,
        seed: params.seed,
        extractor_id: train.extractor_id().to_string(),
    };
    model.validate()?;
    Ok((
        model,
        TrainReport {
            per_class,
            wall_time: start.elapsed(),
        },
    ))
}

/// `w_c . (x, 1)` for every class, in model class order.
pub fn decision_values(model: &LinearSvmModel, x: &[f32]) -> Result<Vec<f64>> {
    if x.len() != model.dim {
        return Err(Error::Shape(format!(
            "input has {} values, model expects {}",
            x.len(),
            model.dim
        )));
    }
    Ok(model
        .weights
        .iter()
        .map(|row| {
            let (w, bias) = row.split_at(model.dim);
            w.iter()
                .zip(x)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum::<f64>()
                + f64::from(bias[0])
        })
        .collect())
}

/// Index of the largest score; the first (smallest class id) wins ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &LinearSvmModel, set: &FeatureSet) -> Result<PredictionSet> {
    if set.dim() != model.dim {
        return Err(Error::Shape(format!(
            "feature set is {}-d, model expects {}-d",
            set.dim(),
            model.dim
        )));
    }
    let labels = set
        .vectors()
        .par_iter()
        .map(|v| {
            let scores = decision_values(model, &v.values)?;
            Ok((v.patch_id.clone(), model.classes[argmax(&scores)]))
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::from_pairs(labels)
}
