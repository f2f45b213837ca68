//! Supervised feature selection on presence-binarized contingency tables.
//!
//! Every dimension becomes a `classes x 2` table of (absent, present)
//! counts, with presence meaning value > 0. The three criteria score that
//! same table.

use crate::frame::{Column, Frame};

use super::artifact::Criterion;
use super::{
    choice, data_err, encode_labels, feature_field, label_name, run_transformer, transformer_spec, vectors, JobIo,
    ParamType, Registry, Result, Transformer,
};

/// Pearson chi-square statistic over all cells with a non-zero expectation.
pub fn chi2(table: &[[f64; 2]]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    if total == 0.0 {
        return 0.0;
    }
    let col = [table.iter().map(|r| r[0]).sum::<f64>(), table.iter().map(|r| r[1]).sum::<f64>()];
    let mut stat = 0.0;
    for row in table {
        let rs = row[0] + row[1];
        for b in 0..2 {
            let e = rs * col[b] / total;
            if e > 0.0 {
                stat += (row[b] - e).powi(2) / e;
            }
        }
    }
    stat
}

fn entropy(counts: impl Iterator<Item = f64> + Clone) -> f64 {
    let n: f64 = counts.clone().sum();
    if n == 0.0 {
        return 0.0;
    }
    -counts.filter(|&c| c > 0.0).map(|c| (c / n) * (c / n).log2()).sum::<f64>()
}

fn gini_impurity(counts: impl Iterator<Item = f64> + Clone) -> f64 {
    let n: f64 = counts.clone().sum();
    if n == 0.0 {
        return 0.0;
    }
    1.0 - counts.map(|c| (c / n).powi(2)).sum::<f64>()
}

fn gain(table: &[[f64; 2]], impurity: fn(std::vec::IntoIter<f64>) -> f64) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    if total == 0.0 {
        return 0.0;
    }
    let parent = impurity(table.iter().map(|r| r[0] + r[1]).collect::<Vec<_>>().into_iter());
    let mut child = 0.0;
    for b in 0..2 {
        let part: Vec<f64> = table.iter().map(|r| r[b]).collect();
        let n: f64 = part.iter().sum();
        child += n / total * impurity(part.into_iter());
    }
    parent - child
}

/// Information gain in bits.
pub fn info_gain(table: &[[f64; 2]]) -> f64 {
    gain(table, entropy)
}

/// Drop in Gini impurity.
pub fn gini_gain(table: &[[f64; 2]]) -> f64 {
    gain(table, gini_impurity)
}

pub fn score(criterion: Criterion, table: &[[f64; 2]]) -> f64 {
    match criterion {
        Criterion::Chi2 => chi2(table),
        Criterion::InfoGain => info_gain(table),
        Criterion::Gini => gini_gain(table),
    }
}

/// Per-dimension contingency tables, indexed `[dim][class]`.
pub fn presence_tables(rows: &[&[f64]], y: &[usize], dim: usize, classes: usize) -> Vec<Vec<[f64; 2]>> {
    let mut t = vec![vec![[0.0; 2]; classes]; dim];
    for (row, &c) in rows.iter().zip(y) {
        for (j, &x) in row.iter().enumerate() {
            t[j][c][usize::from(x > 0.0)] += 1.0;
        }
    }
    t
}

/// Indices of the `k` best scores (ties to the lower index), ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    keep
}

pub fn fit_select(frame: &Frame, input: &str, label: Option<&str>, criterion: Criterion, k: usize) -> Result<Transformer> {
    let (dim, rows) = vectors(frame, input)?;
    if k == 0 || k > dim {
        return Err(data_err(format!("k = {k} is outside 1..={dim}")));
    }
    if criterion == Criterion::Chi2 && rows.iter().any(|r| r.iter().any(|&x| x < 0.0)) {
        return Err(data_err("chi2 selection needs non-negative features"));
    }
    let label = label_name(frame, label)?;
    let (classes, y) = encode_labels(frame, label)?;
    if classes.len() < 2 {
        return Err(data_err(format!("label `{label}` has a single class; scores are undefined")));
    }
    let tables = presence_tables(&rows, &y, dim, classes.len());
    let scores: Vec<f64> = tables.iter().map(|t| score(criterion, t)).collect();
    let indices = top_k(&scores, k);
    Ok(Transformer::Select { criterion, input_dim: dim, indices, scores })
}

pub(super) fn apply(input_dim: usize, indices: &[usize], frame: &Frame, input: &str, output: &str) -> Result<Frame> {
    let (dim, rows) = vectors(frame, input)?;
    if dim != input_dim {
        return Err(data_err(format!("selector fitted on dim {input_dim}, input `{input}` has dim {dim}")));
    }
    let out = rows.iter().map(|r| indices.iter().map(|&j| r[j]).collect()).collect();
    Ok(frame.with_column(feature_field(output, indices.len()), Column::from_vectors(indices.len(), out))?)
}

pub(super) fn register(r: &mut Registry) {
    r.builtin(
        transformer_spec("select_features", "Keep the k dimensions that score highest against the label.")
            .optional("criterion", choice(&["chi2", "info_gain", "gini"]), Some("chi2".into()), "scoring criterion")
            .required("k", ParamType::Int, "number of dimensions to keep")
            .optional("label_col", ParamType::Str, None, "label column (default: the label-role column)"),
        |p| {
            let input = p.str("input_col")?.to_string();
            let output = p.str("output_col")?.to_string();
            let criterion = Criterion::parse(p.str("criterion")?).expect("choice checked");
            let k = p.usize_at_least("k", 1)?;
            let label = p.opt_str("label_col").map(str::to_string);
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                run_transformer(io, &input, &output, |f| fit_select(f, &input, label.as_deref(), criterion, k))
            }))
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameBuilder;

    #[test]
    fn chi2_diagonal_table() {
        assert_eq!(chi2(&[[10.0, 0.0], [0.0, 10.0]]), 20.0);
    }

    #[test]
    fn independence_scores_zero() {
        let t = [[4.0, 2.0], [8.0, 4.0]];
        assert!(chi2(&t).abs() < 1e-12);
        assert!(info_gain(&t).abs() < 1e-12);
        assert!(gini_gain(&t).abs() < 1e-12);
    }

    #[test]
    fn perfect_feature_one_bit() {
        assert!((info_gain(&[[5.0, 0.0], [0.0, 5.0]]) - 1.0).abs() < 1e-12);
        assert!((gini_gain(&[[5.0, 0.0], [0.0, 5.0]]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn top_k_ties_prefer_lower_index() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 2.0], 2), vec![1, 2]);
        assert_eq!(top_k(&[1.0, 1.0, 1.0], 1), vec![0]);
    }

    #[test]
    fn fit_picks_informative_dimension() {
        let f = FrameBuilder::new()
            .label_utf8("y", &["a", "a", "b", "b"])
            .vectors("v", &[vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]])
            .build()
            .unwrap();
        let t = fit_select(&f, "v", None, Criterion::Chi2, 1).unwrap();
        let Transformer::Select { indices, .. } = &t else { unreachable!() };
        assert_eq!(indices, &[0]);
        let t2 = fit_select(&f, "v", None, Criterion::InfoGain, 2).unwrap();
        let Transformer::Select { indices, .. } = &t2 else { unreachable!() };
        assert_eq!(indices, &[0, 1]);
        assert!(fit_select(&f, "v", None, Criterion::Chi2, 4).is_err());
        let single = FrameBuilder::new().label_utf8("y", &["a"]).vectors("v", &[vec![1.0]]).build().unwrap();
        assert!(fit_select(&single, "v", None, Criterion::Gini, 1).is_err());
    }
}
