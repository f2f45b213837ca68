//! Principal component projection over the sample covariance.

#![allow(clippy::needless_range_loop)]

use crate::frame::{Column, Frame};
use crate::numeric::{dot, jacobi_eigen};

use super::{data_err, feature_field, run_transformer, transformer_spec, vectors, JobIo, ParamType, Registry, Result, Transformer};

pub fn fit_pca(frame: &Frame, input: &str, k: usize) -> Result<Transformer> {
    let (dim, rows) = vectors(frame, input)?;
    if k == 0 || k > dim {
        return Err(data_err(format!("k = {k} is outside 1..={dim}")));
    }
    if rows.len() < 2 {
        return Err(data_err("pca needs at least two rows"));
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for r in &rows {
        for i in 0..dim {
            let di = r[i] - mean[i];
            for j in i..dim {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }
    let eig = jacobi_eigen(&cov)?;
    Ok(Transformer::Pca { mean, components: eig.vectors[..k].to_vec(), eigenvalues: eig.values })
}

pub(super) fn apply(mean: &[f64], components: &[Vec<f64>], frame: &Frame, input: &str, output: &str) -> Result<Frame> {
    let (dim, rows) = vectors(frame, input)?;
    if dim != mean.len() {
        return Err(data_err(format!("pca fitted on dim {}, input `{input}` has dim {dim}", mean.len())));
    }
    let k = components.len();
    let out = rows
        .iter()
        .map(|r| {
            let centered: Vec<f64> = r.iter().zip(mean).map(|(x, m)| x - m).collect();
            components.iter().map(|c| dot(c, &centered)).collect()
        })
        .collect();
    Ok(frame.with_column(feature_field(output, k), Column::from_vectors(k, out))?)
}

/// Maps projected coordinates back to centered input space.
pub fn back_project(components: &[Vec<f64>], projected: &[f64]) -> Vec<f64> {
    let dim = components.first().map_or(0, Vec::len);
    let mut x = vec![0.0; dim];
    for (c, &p) in components.iter().zip(projected) {
        for (xi, ci) in x.iter_mut().zip(c) {
            *xi += p * ci;
        }
    }
    x
}

pub(super) fn register(r: &mut Registry) {
    r.builtin(
        transformer_spec("pca", "Project onto the top-k principal components.")
            .required("k", ParamType::Int, "number of components to keep"),
        |p| {
            let input = p.str("input_col")?.to_string();
            let output = p.str("output_col")?.to_string();
            let k = p.usize_at_least("k", 1)?;
            Ok(Box::new(move |io: &mut JobIo<'_>| run_transformer(io, &input, &output, |f| fit_pca(f, &input, k))))
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameBuilder;

    #[test]
    fn line_y_equals_x() {
        let f = FrameBuilder::new()
            .vectors("v", &[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![5.0, 5.0]])
            .build()
            .unwrap();
        let Transformer::Pca { components, eigenvalues, .. } = fit_pca(&f, "v", 2).unwrap() else { unreachable!() };
        let h = 0.5f64.sqrt();
        assert!((components[0][0] - h).abs() < 1e-9 && (components[0][1] - h).abs() < 1e-9);
        assert!(eigenvalues[1].abs() < 1e-9);
    }

    #[test]
    fn full_rank_round_trip() {
        let rows = vec![vec![1.0, 2.0, 0.5], vec![3.0, -1.0, 2.0], vec![0.0, 0.5, 4.0], vec![2.0, 2.0, 2.0]];
        let f = FrameBuilder::new().vectors("v", &rows).build().unwrap();
        let t = fit_pca(&f, "v", 3).unwrap();
        let Transformer::Pca { mean, components, .. } = &t else { unreachable!() };
        let out = t.apply(&f, "v", "p").unwrap();
        let (_, proj) = vectors(&out, "p").unwrap();
        for (r, p) in rows.iter().zip(proj) {
            let back = back_project(components, p);
            for j in 0..3 {
                assert!((back[j] - (r[j] - mean[j])).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_k() {
        let f = FrameBuilder::new().vectors("v", &[vec![1.0], vec![2.0]]).build().unwrap();
        assert!(fit_pca(&f, "v", 2).is_err());
    }
}
