//! Soft-margin SVM (SMO with second-order working-set selection),
//! stratified k-fold cross-validation with grid search, and the two-stage
//! intruder/clutter then human/animal pipeline.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::mesh::Label;
use crate::rng::stream_rng;

/// RNG stream used for fold assignment.
const FOLD_STREAM: u64 = 2;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Kernel::Linear => "linear".into(),
            Kernel::Rbf { gamma } => format!("rbf(gamma={gamma})"),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        SvmParams {
            kernel,
            c,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Per-feature affine map to zero mean, unit deviation. Constant columns
/// keep a unit divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub standardizer: Standardizer,
    /// Standardised support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i y_i` per support vector.
    pub coef: Vec<f64>,
    /// Decision function `sum coef_i K(sv_i, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub positive: bool,
    pub margin: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn decision(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "feature dimension {} does not match model dimension {}",
                row.len(),
                self.dim()
            )));
        }
        let z = self.standardizer.apply(row);
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, a)| a * self.kernel.eval(sv, &z))
            .sum::<f64>()
            + self.bias)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        let margin = self.decision(row)?;
        Ok(Prediction {
            positive: margin > 0.0,
            margin,
        })
    }
}

/// Dense symmetric kernel matrix.
struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn build(x: &[Vec<f64>], kernel: Kernel) -> Self {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(&x[i], &x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram { n, k }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.k[i * self.n..(i + 1) * self.n]
    }
}

struct DualSolution {
    alpha: Vec<f64>,
    /// Decision bias (`-rho`).
    bias: f64,
    iterations: usize,
    converged: bool,
}

/// SMO on the dual with working-set selection using second-order
/// information; `y` holds +1/-1.
fn smo(gram: &Gram, y: &[f64], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let qd: Vec<f64> = (0..n).map(|i| gram.k[i * n + i]).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    let mut converged = false;
    while iter < max_iter {
        // select i
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = t;
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        let ki = if i_sel != usize::MAX { Some(gram.row(i_sel)) } else { None };
        for t in 0..n {
            if y[t] > 0.0 {
                if !lower(alpha[t]) {
                    let diff = gmax + grad[t];
                    if grad[t] >= gmax2 {
                        gmax2 = grad[t];
                    }
                    if let (true, Some(ki)) = (diff > 0.0, ki) {
                        let quad = qd[i_sel] + qd[t] - 2.0 * y[i_sel] * ki[t];
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = t;
                        }
                    }
                }
            } else if !upper(alpha[t]) {
                let diff = gmax - grad[t];
                if -grad[t] >= gmax2 {
                    gmax2 = -grad[t];
                }
                if let (true, Some(ki)) = (diff > 0.0, ki) {
                    let quad = qd[i_sel] + qd[t] + 2.0 * y[i_sel] * ki[t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if gmax + gmax2 < tol || i_sel == usize::MAX || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let ki = gram.row(i);
        let kj = gram.row(j);
        let qij = y[i] * y[j] * ki[j];
        let (oi, oj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = {
                let q = qd[i] + qd[j] + 2.0 * qij;
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = {
                let q = qd[i] + qd[j] - 2.0 * qij;
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - oi, alpha[j] - oj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    // bias from free vectors, else midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else {
        0.0
    };
    DualSolution {
        alpha,
        bias: -rho,
        iterations: iter,
        converged,
    }
}

fn check_training_set(x: &[Vec<f64>], positive: &[bool], ids: &[String]) -> Result<()> {
    if x.len() != positive.len() || x.len() != ids.len() {
        return Err(Error::InvalidInput("features, labels and ids differ in length".into()));
    }
    let d = x.first().map_or(0, Vec::len);
    for (row, id) in x.iter().zip(ids) {
        if row.len() != d {
            return Err(Error::InvalidInput(format!("event {id}: feature dimension {} != {d}", row.len())));
        }
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("event {id}: non-finite feature at column {k}")));
        }
    }
    let pos = positive.iter().filter(|&&p| p).count();
    if pos < 2 || x.len() - pos < 2 {
        return Err(Error::Precondition(format!(
            "training needs >= 2 examples per class, got {pos} positive and {} negative",
            x.len() - pos
        )));
    }
    Ok(())
}

/// Train a binary SVM; features are standardised with training statistics.
pub fn train_svm(x: &[Vec<f64>], positive: &[bool], ids: &[String], params: &SvmParams) -> Result<SvmModel> {
    check_training_set(x, positive, ids)?;
    if !(params.c > 0.0) {
        return Err(Error::InvalidInput(format!("C must be > 0, got {}", params.c)));
    }
    let standardizer = Standardizer::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let gram = Gram::build(&z, params.kernel);
    let y: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let sol = smo(&gram, &y, params.c, params.tol, params.max_iter);
    Ok(assemble(params, standardizer, &z, &y, sol))
}

fn assemble(params: &SvmParams, standardizer: Standardizer, z: &[Vec<f64>], y: &[f64], sol: DualSolution) -> SvmModel {
    let mut support_vectors = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(z[i].clone());
            coef.push(a * y[i]);
        }
    }
    SvmModel {
        kernel: params.kernel,
        c: params.c,
        standardizer,
        support_vectors,
        coef,
        bias: sol.bias,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

/// Hyperparameter grid, evaluated in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<(Kernel, f64)>,
}

impl Default for Grid {
    /// Linear kernel with `C = 2^-3..2^10`, then RBF with
    /// `gamma = 2^-7..2^3` crossed with the same `C` values.
    fn default() -> Self {
        let cs: Vec<f64> = (-3..=10).map(|e| 2f64.powi(e)).collect();
        let mut points: Vec<(Kernel, f64)> = cs.iter().map(|&c| (Kernel::Linear, c)).collect();
        for g in -7..=3 {
            for &c in &cs {
                points.push((Kernel::Rbf { gamma: 2f64.powi(g) }, c));
            }
        }
        Grid { points }
    }
}

impl Grid {
    pub fn single(kernel: Kernel, c: f64) -> Self {
        Grid {
            points: vec![(kernel, c)],
        }
    }
}

/// Fold index of every example: classes are shuffled separately with a
/// seeded RNG and dealt round-robin, continuing across classes, so that
/// fold sizes differ by at most one overall and within each class.
pub fn stratified_folds(classes: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Precondition(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = classes.iter().max().map_or(0, |m| m + 1);
    let mut rng = stream_rng(seed, 0, FOLD_STREAM);
    let mut fold = vec![0; classes.len()];
    let mut pos = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(Error::Precondition(format!(
                "class {c} has {} examples, fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = pos % k;
            pos += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub name: String,
    pub min: f64,
    pub avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub fold: usize,
    /// Row = true class, column = predicted class, both in `classes` order.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenHyper {
    pub stage: String,
    pub kernel: Kernel,
    pub c: f64,
    pub avg_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub title: String,
    pub mode: String,
    pub folds: usize,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub classes: Vec<String>,
    /// Per-class rows followed by summary rows.
    pub rows: Vec<AccuracyRow>,
    pub overall: AccuracyRow,
    pub confusion: Vec<Confusion>,
    pub chosen: Vec<ChosenHyper>,
    pub grid_points: usize,
    pub fold_sizes: Vec<usize>,
    pub all_converged: bool,
    pub selection: String,
}

pub const SELECTION_NOTE: &str = "hyperparameters chosen on the same folds used for reporting \
(no nested cross-validation); grid point with the highest mean fold accuracy, first in grid order on ties";

impl CvReport {
    /// Aligned text table with minimum and average accuracy columns.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "mode {}, {}-fold CV, seed {}", self.mode, self.folds, self.seed);
        let w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain([self.overall.name.len(), 5])
            .max()
            .unwrap_or(5);
        let _ = writeln!(s, "{:<w$}  {:>18}  {:>18}", "Class", "Minimum Accuracy %", "Average Accuracy %");
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(s, "{:<w$}  {:>18.1}  {:>18.1}", r.name, r.min, r.avg);
        }
        for c in &self.chosen {
            let _ = writeln!(
                s,
                "{}: kernel {}, C = {}, mean fold accuracy {:.2}%",
                c.stage,
                c.kernel.describe(),
                c.c,
                c.avg_accuracy
            );
        }
        let _ = writeln!(s, "grid points {}; fold sizes {:?}", self.grid_points, self.fold_sizes);
        if !self.all_converged {
            let _ = writeln!(s, "warning: some solver runs hit the iteration cap");
        }
        let _ = writeln!(s, "note: {}", self.selection);
        s
    }
}

/// Held-out predictions of one binary task for every grid point and fold.
struct BinaryCv {
    /// `pred[g][i]` for example `i` (each predicted in its own fold).
    pred: Vec<Vec<bool>>,
    converged: bool,
}

/// Runs every grid point on every fold. Kernel matrices are shared between
/// grid points with the same kernel.
fn binary_cv(x: &[Vec<f64>], positive: &[bool], ids: &[String], fold: &[usize], k: usize, grid: &Grid) -> Result<BinaryCv> {
    check_training_set(x, positive, ids)?;
    let mut pred = vec![vec![false; x.len()]; grid.points.len()];
    let mut converged = true;
    for f in 0..k {
        let train: Vec<usize> = (0..x.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..x.len()).filter(|&i| fold[i] == f).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let st = Standardizer::fit(&tx);
        let z: Vec<Vec<f64>> = tx.iter().map(|r| st.apply(r)).collect();
        let zt: Vec<Vec<f64>> = test.iter().map(|&i| st.apply(&x[i])).collect();
        let y: Vec<f64> = train.iter().map(|&i| if positive[i] { 1.0 } else { -1.0 }).collect();
        if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
            return Err(Error::Precondition(format!("fold {f}: training split holds a single class")));
        }
        // distinct kernels in grid order
        let mut kernels: Vec<Kernel> = Vec::new();
        for (kern, _) in &grid.points {
            if !kernels.contains(kern) {
                kernels.push(*kern);
            }
        }
        let results: Vec<(usize, Vec<bool>, bool)> = kernels
            .par_iter()
            .flat_map_iter(|kern| {
                let gram = Gram::build(&z, *kern);
                let cross: Vec<Vec<f64>> = zt.iter().map(|t| z.iter().map(|s| kern.eval(s, t)).collect()).collect();
                grid.points
                    .iter()
                    .enumerate()
                    .filter(|(_, (kk, _))| kk == kern)
                    .map(|(g, &(_, c))| {
                        let sol = smo(&gram, &y, c, 1e-3, 100_000);
                        let p = cross
                            .iter()
                            .map(|row| {
                                row.iter()
                                    .zip(&sol.alpha)
                                    .zip(&y)
                                    .map(|((kv, a), yy)| a * yy * kv)
                                    .sum::<f64>()
                                    + sol.bias
                                    > 0.0
                            })
                            .collect();
                        (g, p, sol.converged)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        for (g, p, conv) in results {
            converged &= conv;
            for (slot, &i) in test.iter().enumerate() {
                pred[g][i] = p[slot];
            }
        }
    }
    Ok(BinaryCv { pred, converged })
}

fn fold_accuracy(fold: &[usize], k: usize, keep: impl Fn(usize) -> bool, correct: impl Fn(usize) -> bool) -> Vec<f64> {
    (0..k)
        .map(|f| {
            let (mut n, mut ok) = (0usize, 0usize);
            for i in 0..fold.len() {
                if fold[i] == f && keep(i) {
                    n += 1;
                    ok += correct(i) as usize;
                }
            }
            if n == 0 {
                f64::NAN
            } else {
                100.0 * ok as f64 / n as f64
            }
        })
        .collect()
}

fn row(name: &str, accs: &[f64]) -> AccuracyRow {
    let vals: Vec<f64> = accs.iter().copied().filter(|v| v.is_finite()).collect();
    AccuracyRow {
        name: name.to_string(),
        min: vals.iter().copied().fold(f64::INFINITY, f64::min).min(100.0),
        avg: if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 },
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Index of the grid point with the highest mean fold accuracy.
fn select(pred: &[Vec<bool>], positive: &[bool], fold: &[usize], k: usize, keep: &dyn Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (g, p) in pred.iter().enumerate() {
        let acc = mean(&fold_accuracy(fold, k, keep, |i| p[i] == positive[i]));
        if acc > best.1 {
            best = (g, acc);
        }
    }
    best
}

/// Binary k-fold CV report: class names `[negative, positive]`.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    x: &[Vec<f64>],
    positive: &[bool],
    ids: &[String],
    names: [&str; 2],
    k: usize,
    grid: &Grid,
    seed: u64,
) -> Result<CvReport> {
    let classes: Vec<usize> = positive.iter().map(|&p| p as usize).collect();
    let fold = stratified_folds(&classes, k, seed)?;
    let cv = binary_cv(x, positive, ids, &fold, k, grid)?;
    let (g, avg) = select(&cv.pred, positive, &fold, k, &|_| true);
    let p = &cv.pred[g];
    let mut rows = Vec::new();
    for (ci, name) in names.iter().enumerate() {
        let want = ci == 1;
        rows.push(row(name, &fold_accuracy(&fold, k, |i| positive[i] == want, |i| p[i] == positive[i])));
    }
    let overall = row("Total", &fold_accuracy(&fold, k, |_| true, |i| p[i] == positive[i]));
    let confusion = (0..k)
        .map(|f| {
            let mut counts = vec![vec![0; 2]; 2];
            for i in (0..x.len()).filter(|&i| fold[i] == f) {
                counts[positive[i] as usize][p[i] as usize] += 1;
            }
            Confusion { fold: f, counts }
        })
        .collect();
    Ok(CvReport {
        title: format!("{} versus {}", names[1], names[0]),
        mode: String::new(),
        folds: k,
        seed,
        config_hash: None,
        classes: names.iter().map(|s| s.to_string()).collect(),
        rows,
        overall,
        confusion,
        chosen: vec![ChosenHyper {
            stage: "stage 1".into(),
            kernel: grid.points[g].0,
            c: grid.points[g].1,
            avg_accuracy: avg,
        }],
        grid_points: grid.points.len(),
        fold_sizes: (0..k).map(|f| fold.iter().filter(|&&v| v == f).count()).collect(),
        all_converged: cv.converged,
        selection: SELECTION_NOTE.into(),
    })
}

/// Feature sets that the evaluation modes draw from a [`FeatureVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    E8,
    E8Rho,
    C60,
}

impl FeatureSet {
    pub fn extract(&self, f: &FeatureVector) -> Vec<f64> {
        match self {
            FeatureSet::E8 => f.e8.to_vec(),
            FeatureSet::E8Rho => {
                let mut v = f.e8.to_vec();
                v.push(f.rho_max);
                v
            }
            FeatureSet::C60 => f.c60.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSet::E8 => "e8",
            FeatureSet::E8Rho => "e8+rho",
            FeatureSet::C60 => "c60",
        }
    }
}

fn labels_of(rows: &[FeatureVector]) -> Result<Vec<Label>> {
    rows.iter()
        .map(|r| {
            r.label
                .ok_or_else(|| Error::InvalidInput(format!("event {} has no label", r.id)))
        })
        .collect()
}

/// Intruder-versus-clutter CV on one feature set.
pub fn evaluate_stage1(rows: &[FeatureVector], set: FeatureSet, k: usize, grid: &Grid, seed: u64) -> Result<CvReport> {
    let labels = labels_of(rows)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| set.extract(r)).collect();
    let y: Vec<bool> = labels.iter().map(|l| l.is_intruder()).collect();
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let mut rep = kfold_cv(&x, &y, &ids, ["Clutter", "Intruder"], k, grid, seed)?;
    rep.title = format!("Intruder versus clutter, feature set {}", set.name());
    rep.mode = set.name().into();
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    /// Intruder (positive) versus clutter over C60.
    pub stage1: SvmModel,
    /// Human (positive) versus animal over E8, applied to stage-1 intruders.
    pub stage2: SvmModel,
    pub config_hash: Option<String>,
    pub seed: u64,
}

impl TrainedPipeline {
    pub fn classify(&self, f: &FeatureVector) -> Result<Label> {
        if !self.stage1.predict(&f.c60)?.positive {
            return Ok(Label::Clutter);
        }
        Ok(if self.stage2.predict(&f.e8)?.positive {
            Label::Human
        } else {
            Label::Animal
        })
    }
}

/// Two-stage pipeline: hyperparameters of each stage are selected by CV on
/// shared folds (stage 2 on intruder events only), the composed 3-class
/// predictions are scored per fold, and both stages are refitted on all
/// events with the chosen hyperparameters.
pub fn train_pipeline(rows: &[FeatureVector], k: usize, grid: &Grid, seed: u64) -> Result<(TrainedPipeline, CvReport)> {
    let labels = labels_of(rows)?;
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let class_idx: Vec<usize> = labels
        .iter()
        .map(|l| match l {
            Label::Clutter => 0,
            Label::Human => 1,
            Label::Animal => 2,
        })
        .collect();
    let fold = stratified_folds(&class_idx, k, seed)?;
    let intruder: Vec<bool> = labels.iter().map(|l| l.is_intruder()).collect();
    let human: Vec<bool> = labels.iter().map(|l| *l == Label::Human).collect();

    let x1: Vec<Vec<f64>> = rows.iter().map(|r| r.c60.clone()).collect();
    let cv1 = binary_cv(&x1, &intruder, &ids, &fold, k, grid)?;
    let (g1, acc1) = select(&cv1.pred, &intruder, &fold, k, &|_| true);

    let sub: Vec<usize> = (0..rows.len()).filter(|&i| intruder[i]).collect();
    let x2: Vec<Vec<f64>> = sub.iter().map(|&i| rows[i].e8.to_vec()).collect();
    let y2: Vec<bool> = sub.iter().map(|&i| human[i]).collect();
    let ids2: Vec<String> = sub.iter().map(|&i| ids[i].clone()).collect();
    let fold2: Vec<usize> = sub.iter().map(|&i| fold[i]).collect();
    let cv2 = binary_cv(&x2, &y2, &ids2, &fold2, k, grid)?;
    let (g2, acc2) = select(&cv2.pred, &y2, &fold2, k, &|_| true);

    // Stage-2 predictions for events the stage-1 model passes on are
    // needed also for clutter events it misclassifies, so stage 2 is
    // refitted per fold and applied to every stage-1 intruder.
    let p1 = &cv1.pred[g1];
    let mut final_pred = vec![Label::Clutter; rows.len()];
    let (k2, c2) = grid.points[g2];
    for f in 0..k {
        let tr: Vec<usize> = sub.iter().copied().filter(|&i| fold[i] != f).collect();
        let tx: Vec<Vec<f64>> = tr.iter().map(|&i| rows[i].e8.to_vec()).collect();
        let ty: Vec<bool> = tr.iter().map(|&i| human[i]).collect();
        let tid: Vec<String> = tr.iter().map(|&i| ids[i].clone()).collect();
        let m2 = train_svm(&tx, &ty, &tid, &SvmParams::new(k2, c2))?;
        for i in (0..rows.len()).filter(|&i| fold[i] == f && p1[i]) {
            final_pred[i] = if m2.predict(&rows[i].e8)?.positive {
                Label::Human
            } else {
                Label::Animal
            };
        }
    }

    let acc = |keep: &dyn Fn(usize) -> bool, ok: &dyn Fn(usize) -> bool| fold_accuracy(&fold, k, keep, ok);
    let rows_out = vec![
        row("Clutter", &acc(&|i| labels[i] == Label::Clutter, &|i| final_pred[i] == Label::Clutter)),
        row("Intruder", &acc(&|i| intruder[i], &|i| final_pred[i] != Label::Clutter)),
        row("Human", &acc(&|i| labels[i] == Label::Human, &|i| final_pred[i] == Label::Human)),
        row("Animal", &acc(&|i| labels[i] == Label::Animal, &|i| final_pred[i] == Label::Animal)),
    ];
    let overall = row("Overall", &acc(&|_| true, &|i| final_pred[i] == labels[i]));
    let order = [Label::Clutter, Label::Human, Label::Animal];
    let confusion = (0..k)
        .map(|f| {
            let mut counts = vec![vec![0; 3]; 3];
            for i in (0..rows.len()).filter(|&i| fold[i] == f) {
                let t = order.iter().position(|l| *l == labels[i]).unwrap_or(0);
                let p = order.iter().position(|l| *l == final_pred[i]).unwrap_or(0);
                counts[t][p] += 1;
            }
            Confusion { fold: f, counts }
        })
        .collect();

    let (k1, c1) = grid.points[g1];
    let stage1 = train_svm(&x1, &intruder, &ids, &SvmParams::new(k1, c1))?;
    let stage2 = train_svm(&x2, &y2, &ids2, &SvmParams::new(k2, c2))?;
    let report = CvReport {
        title: "Two-step classifier (C60 intruder/clutter, then E8 human/animal)".into(),
        mode: "pipeline".into(),
        folds: k,
        seed,
        config_hash: None,
        classes: order.iter().map(|l| l.as_str().to_string()).collect(),
        rows: rows_out,
        overall,
        confusion,
        chosen: vec![
            ChosenHyper {
                stage: "stage 1 (c60, intruder vs clutter)".into(),
                kernel: k1,
                c: c1,
                avg_accuracy: acc1,
            },
            ChosenHyper {
                stage: "stage 2 (e8, human vs animal)".into(),
                kernel: k2,
                c: c2,
                avg_accuracy: acc2,
            },
        ],
        grid_points: grid.points.len(),
        fold_sizes: (0..k).map(|f| fold.iter().filter(|&&v| v == f).count()).collect(),
        all_converged: cv1.converged && cv2.converged && stage1.converged && stage2.converged,
        selection: SELECTION_NOTE.into(),
    };
    Ok((
        TrainedPipeline {
            stage1,
            stage2,
            config_hash: None,
            seed,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("e{i}")).collect()
    }

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = stream_rng(seed, 0, 9);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let s = if pos { sep } else { -sep };
            x.push(vec![s + nd.sample(&mut rng), s + nd.sample(&mut rng)]);
            y.push(pos);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_linear() {
        let (x, y) = blobs(40, 4.0, 1);
        let m = train_svm(&x, &y, &ids(40), &SvmParams::new(Kernel::Linear, 10.0)).unwrap();
        assert!(m.converged);
        for (r, &t) in x.iter().zip(&y) {
            assert_eq!(m.predict(r).unwrap().positive, t);
        }
        assert!(m.predict(&[0.0, 0.0]).unwrap().margin.abs() < 0.1);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn xor_rbf() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![true, true, false, false];
        let m = train_svm(&x, &y, &ids(4), &SvmParams::new(Kernel::Rbf { gamma: 1.0 }, 10.0)).unwrap();
        for (r, &t) in x.iter().zip(&y) {
            assert_eq!(m.predict(r).unwrap().positive, t);
        }
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let (x, y) = blobs(60, 1.0, 3);
        let p = SvmParams::new(Kernel::Rbf { gamma: 0.5 }, 1.0);
        let m = train_svm(&x, &y, &ids(60), &p).unwrap();
        let z: Vec<Vec<f64>> = x.iter().map(|r| m.standardizer.apply(r)).collect();
        let mut free = 0;
        for (sv, a) in m.support_vectors.iter().zip(&m.coef) {
            if a.abs() < p.c - 1e-9 {
                let i = z.iter().position(|r| r == sv).unwrap();
                let f = m.decision(&x[i]).unwrap();
                assert!((f.abs() - 1.0).abs() < 2e-3, "{f}");
                free += 1;
            }
            assert!(a.abs() <= p.c + 1e-12);
        }
        assert!(free > 0);
    }

    #[test]
    fn errors() {
        let x = vec![vec![0.0], vec![1.0], vec![f64::NAN], vec![2.0]];
        let err = train_svm(&x, &[true, true, false, false], &ids(4), &SvmParams::new(Kernel::Linear, 1.0)).unwrap_err();
        assert!(err.to_string().contains("e2"));
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(train_svm(&x, &[true, true, true], &ids(3), &SvmParams::new(Kernel::Linear, 1.0)).is_err());
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let classes: Vec<usize> = (0..103).map(|i| if i < 41 { 0 } else { 1 }).collect();
        let f = stratified_folds(&classes, 5, 4).unwrap();
        let sizes: Vec<usize> = (0..5).map(|k| f.iter().filter(|&&v| v == k).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for c in 0..2 {
            let s: Vec<usize> = (0..5)
                .map(|k| (0..103).filter(|&i| classes[i] == c && f[i] == k).count())
                .collect();
            assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
        assert!(stratified_folds(&[0, 0, 1, 1, 1, 1, 1], 5, 0).is_err());
    }

    #[test]
    fn separable_cv_is_perfect() {
        let (x, y) = blobs(50, 5.0, 2);
        let r = kfold_cv(&x, &y, &ids(50), ["neg", "pos"], 5, &Grid::single(Kernel::Linear, 1.0), 3).unwrap();
        assert_eq!(r.overall.min, 100.0);
        assert_eq!(r.overall.avg, 100.0);
        assert!(r.rows.iter().all(|c| c.min <= c.avg));
        let t = r.render();
        assert!(t.contains("Minimum Accuracy %"));
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(Grid::default().points.len(), 168);
    }

    #[test]
    fn duplicated_points_keep_decision_function() {
        let (x, y) = blobs(30, 3.0, 5);
        let mut p = SvmParams::new(Kernel::Linear, 1e3);
        p.tol = 1e-10;
        let m1 = train_svm(&x, &y, &ids(30), &p).unwrap();
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<bool> = y.iter().chain(&y).copied().collect();
        let m2 = train_svm(&x2, &y2, &ids(60), &p).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..50 {
            let q = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let (a, b) = (m1.decision(&q).unwrap(), m2.decision(&q).unwrap());
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }
}
