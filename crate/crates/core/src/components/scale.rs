//! Vector scalers: row normalizer, standard and min-max.

use crate::frame::{Column, Frame};

use super::artifact::ScaleMethod;
use super::{data_err, feature_field, run_transformer, transformer_spec, vectors, choice, JobIo, Registry, Result, Transformer};

/// Constant dimensions get a zero factor, so they map to 0.0.
pub fn fit_scale(frame: &Frame, input: &str, method: ScaleMethod) -> Result<Transformer> {
    let (dim, rows) = vectors(frame, input)?;
    if rows.is_empty() {
        return Err(data_err("cannot fit a scaler on an empty frame"));
    }
    let n = rows.len() as f64;
    let (offset, factor) = match method {
        ScaleMethod::Normalizer => (Vec::new(), Vec::new()),
        ScaleMethod::Standard => {
            let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            let factor = (0..dim)
                .map(|j| {
                    if rows.len() < 2 {
                        return 0.0;
                    }
                    let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
                    if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 }
                })
                .collect();
            (mean, factor)
        }
        ScaleMethod::MinMax => {
            let lo: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
            let factor = (0..dim)
                .map(|j| {
                    let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                    if hi > lo[j] { 1.0 / (hi - lo[j]) } else { 0.0 }
                })
                .collect();
            (lo, factor)
        }
    };
    Ok(Transformer::Scale { method, offset, factor })
}

pub(super) fn apply(t: &Transformer, frame: &Frame, input: &str, output: &str) -> Result<Frame> {
    let Transformer::Scale { method, offset, factor } = t else { unreachable!("dispatched on Scale") };
    let (dim, rows) = vectors(frame, input)?;
    if *method != ScaleMethod::Normalizer && dim != offset.len() {
        return Err(data_err(format!("scaler fitted on dim {}, input `{input}` has dim {dim}", offset.len())));
    }
    let out = rows
        .iter()
        .map(|r| match method {
            ScaleMethod::Normalizer => {
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                r.iter().map(|x| if norm > 0.0 { x / norm } else { 0.0 }).collect()
            }
            _ => r.iter().zip(offset).zip(factor).map(|((x, o), f)| (x - o) * f).collect(),
        })
        .collect();
    Ok(frame.with_column(feature_field(output, dim), Column::from_vectors(dim, out))?)
}

pub(super) fn register(r: &mut Registry) {
    r.builtin(
        transformer_spec("scale", "Rescale a vector column.").optional(
            "method",
            choice(&["normalizer", "standard", "minmax"]),
            Some("standard".into()),
            "row L2 normalization, z-score (sample std) or min-max",
        ),
        |p| {
            let input = p.str("input_col")?.to_string();
            let output = p.str("output_col")?.to_string();
            let method = ScaleMethod::parse(p.str("method")?).expect("choice checked");
            Ok(Box::new(move |io: &mut JobIo<'_>| run_transformer(io, &input, &output, |f| fit_scale(f, &input, method))))
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameBuilder;

    fn run(method: ScaleMethod, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let f = FrameBuilder::new().vectors("v", rows).build().unwrap();
        let out = fit_scale(&f, "v", method).unwrap().apply(&f, "v", "v").unwrap();
        vectors(&out, "v").unwrap().1.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn normalizer_three_four() {
        assert_eq!(run(ScaleMethod::Normalizer, &[vec![3.0, 4.0]]), vec![vec![0.6, 0.8]]);
    }

    #[test]
    fn standard_uses_sample_std() {
        let out = run(ScaleMethod::Standard, &[vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(out, vec![vec![-1.0], vec![0.0], vec![1.0]]);
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let rows = [vec![5.0, 1.0], vec![5.0, 3.0]];
        for m in [ScaleMethod::MinMax, ScaleMethod::Standard] {
            assert!(run(m, &rows).iter().all(|r| r[0] == 0.0));
        }
        assert_eq!(run(ScaleMethod::MinMax, &rows)[1][1], 1.0);
    }
}
