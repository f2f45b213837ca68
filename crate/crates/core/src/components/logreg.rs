//! Multinomial logistic regression fitted with L-BFGS.

use crate::flow::StagePhase;
use crate::frame::{Frame, Value};
use crate::numeric::{lbfgs_minimize, LbfgsOptions, LbfgsResult};

use super::artifact::{LogRegModel, ModelArtifact};
use super::{data_err, encode_labels, label_name, vectors, ComponentSpec, JobIo, ParamType, PhaseRule, PortKind, Registry, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegOptions {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub memory: usize,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions { l2_lambda: 1e-4, max_iters: 100, tol: 1e-6, memory: 10 }
    }
}

/// Mean cross-entropy plus `(lambda/2)·‖W‖²` (bias excluded). `w` is
/// row-major `classes x (dim + 1)` with the bias last; writes the gradient.
pub fn loss_and_grad(w: &[f64], xs: &[&[f64]], y: &[usize], classes: usize, lambda: f64, grad: &mut [f64]) -> f64 {
    let stride = w.len() / classes;
    let dim = stride - 1;
    grad.fill(0.0);
    let mut loss = 0.0;
    let mut z = vec![0.0; classes];
    for (x, &yi) in xs.iter().zip(y) {
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &w[c * stride..(c + 1) * stride];
            *zc = row[dim] + row[..dim].iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[yi];
        for c in 0..classes {
            let p = (z[c] - lse).exp() - f64::from(u8::from(c == yi));
            let g = &mut grad[c * stride..(c + 1) * stride];
            for (gj, xj) in g[..dim].iter_mut().zip(x.iter()) {
                *gj += p * xj;
            }
            g[dim] += p;
        }
    }
    let n = xs.len().max(1) as f64;
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    for c in 0..classes {
        for j in 0..dim {
            let k = c * stride + j;
            loss += 0.5 * lambda * w[k] * w[k];
            grad[k] += lambda * w[k];
        }
    }
    loss
}

pub fn fit_logreg(xs: &[&[f64]], dim: usize, y: &[usize], classes: Vec<Value>, opts: &LogRegOptions) -> Result<(LogRegModel, LbfgsResult)> {
    if classes.len() < 2 {
        return Err(data_err("logistic regression needs at least two classes"));
    }
    if xs.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(data_err("features contain non-finite values"));
    }
    let k = classes.len();
    let lbfgs = LbfgsOptions { memory: opts.memory, max_iters: opts.max_iters, tol: opts.tol, ..LbfgsOptions::default() };
    let x0 = vec![0.0; k * (dim + 1)];
    let res = lbfgs_minimize(|w, g| loss_and_grad(w, xs, y, k, opts.l2_lambda, g), &x0, &lbfgs)?;
    let model = LogRegModel { classes, dim, weights: res.x.clone() };
    Ok((model, res))
}

/// Class probabilities (softmax of the linear scores).
pub fn predict_proba(m: &LogRegModel, x: &[f64]) -> Vec<f64> {
    let stride = m.dim + 1;
    let z: Vec<f64> = (0..m.classes.len())
        .map(|c| {
            let row = &m.weights[c * stride..(c + 1) * stride];
            row[m.dim] + row[..m.dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn fit_from_frame(frame: &Frame, features: &str, label: Option<&str>, opts: &LogRegOptions) -> Result<(LogRegModel, LbfgsResult)> {
    let (dim, xs) = vectors(frame, features)?;
    let label = label_name(frame, label)?;
    let (classes, y) = encode_labels(frame, label)?;
    fit_logreg(&xs, dim, &y, classes, opts)
}

pub(super) fn register(r: &mut Registry) {
    r.builtin(
        ComponentSpec::new("logreg", PhaseRule::Stage(StagePhase::Model), "Fit multinomial logistic regression with L-BFGS.")
            .optional("features_col", ParamType::Str, Some("features".into()), "vector column of features")
            .optional("label_col", ParamType::Str, None, "label column (default: the label-role column)")
            .optional("l2_lambda", ParamType::Float, Some(1e-4.into()), "L2 penalty on weights (bias excluded)")
            .optional("max_iters", ParamType::Int, Some(100i64.into()), "iteration cap")
            .optional("tol", ParamType::Float, Some(1e-6.into()), "gradient infinity-norm tolerance")
            .optional("memory", ParamType::Int, Some(10i64.into()), "L-BFGS history size")
            .input("in", PortKind::Frame, true)
            .output("model", PortKind::Artifact),
        |p| {
            let features = p.str("features_col")?.to_string();
            let label = p.opt_str("label_col").map(str::to_string);
            let opts = LogRegOptions {
                l2_lambda: p.float("l2_lambda")?,
                max_iters: p.usize_at_least("max_iters", 1)?,
                tol: p.float("tol")?,
                memory: p.usize_at_least("memory", 1)?,
            };
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                let (model, res) = fit_from_frame(&f, &features, label.as_deref(), &opts)?;
                tracing::debug!(node = io.node_id, iterations = res.iterations, loss = res.value, "logreg fitted");
                io.emit_artifact("model", &ModelArtifact::LogReg(model))
            }))
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn separable_points() {
        let xs: [&[f64]; 2] = [&[-1.0], &[1.0]];
        let (m, _) = fit_logreg(&xs, 1, &[0, 1], vec![Value::Int(0), Value::Int(1)], &LogRegOptions::default()).unwrap();
        assert_eq!(argmax(&predict_proba(&m, &[-1.0])), 0);
        assert_eq!(argmax(&predict_proba(&m, &[1.0])), 1);
    }

    #[test]
    fn huge_penalty_shrinks_weights() {
        let xs: [&[f64]; 4] = [&[-1.0, 2.0], &[1.0, 0.5], &[2.0, -1.0], &[0.0, 1.0]];
        let opts = LogRegOptions { l2_lambda: 1e6, ..LogRegOptions::default() };
        let (m, _) = fit_logreg(&xs, 2, &[0, 1, 1, 0], vec![Value::Int(0), Value::Int(1)], &opts).unwrap();
        let norm: f64 = (0..2).flat_map(|c| (0..2).map(move |j| c * 3 + j)).map(|k| m.weights[k].powi(2)).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        for _ in 0..10 {
            let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; 12];
            loss_and_grad(&w, &xs, &y, 3, 0.1, &mut g);
            let mut scratch = vec![0.0; 12];
            for k in 0..12 {
                let h = 1e-5;
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[k] += h;
                wm[k] -= h;
                let fd = (loss_and_grad(&wp, &xs, &y, 3, 0.1, &mut scratch) - loss_and_grad(&wm, &xs, &y, 3, 0.1, &mut scratch)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "{k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let xs: [&[f64]; 1] = [&[1.0]];
        assert!(fit_logreg(&xs, 1, &[0], vec![Value::Int(0)], &LogRegOptions::default()).is_err());
    }
}
