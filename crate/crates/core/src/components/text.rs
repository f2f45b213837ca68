//! Tokenizer, TF-IDF and one-hot encoding.
//!
//! Token lists travel as utf8 cells with tokens joined by U+001F.

use std::collections::BTreeMap;

use regex::Regex;

use crate::flow::StagePhase;
use crate::frame::{Column, DType, Field, Frame};

use super::{
    data_err, feature_field, run_transformer, transformer_spec, ComponentError, ComponentSpec, JobIo, ParamType,
    PhaseRule, PortKind, Registry, Result, Transformer,
};

pub const TOKEN_SEP: char = '\u{1F}';

pub fn tokenize_text(text: &str, splitter: &Regex, lowercase: bool) -> Vec<String> {
    splitter
        .split(text)
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

pub fn split_tokens(cell: &str) -> impl Iterator<Item = &str> {
    cell.split(TOKEN_SEP).filter(|t| !t.is_empty())
}

fn utf8_column<'f>(frame: &'f Frame, name: &str) -> Result<&'f [Option<String>]> {
    match frame.require(name)?.1 {
        Column::Utf8(v) => Ok(v),
        other => Err(data_err(format!("column `{name}` must be utf8, found {}", other.dtype()))),
    }
}

pub fn tokenize(frame: &Frame, input: &str, output: &str, splitter: &Regex, lowercase: bool) -> Result<Frame> {
    let cells = utf8_column(frame, input)?;
    let sep = TOKEN_SEP.to_string();
    let out = cells
        .iter()
        .map(|c| c.as_deref().map(|t| tokenize_text(t, splitter, lowercase).join(&sep)))
        .collect();
    Ok(frame.with_column(Field::plain(output, DType::Utf8), Column::Utf8(out))?)
}

/// Vocabulary (sorted) and smoothed idf `ln((N+1)/(df+1)) + 1`.
pub fn fit_tf_idf(frame: &Frame, input: &str, min_df: usize) -> Result<Transformer> {
    let cells = utf8_column(frame, input)?;
    let n = cells.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for cell in cells.iter().flatten() {
        let mut seen: Vec<&str> = split_tokens(cell).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let (vocabulary, idf): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .filter(|(_, d)| *d >= min_df)
        .map(|(t, d)| (t.to_string(), ((n + 1.0) / (d as f64 + 1.0)).ln() + 1.0))
        .unzip();
    if vocabulary.is_empty() {
        return Err(data_err(format!("tf_idf: no token of `{input}` reaches min_df = {min_df}")));
    }
    Ok(Transformer::TfIdf { vocabulary, idf })
}

/// Raw term count times idf; tokens outside the vocabulary are ignored.
pub fn apply_tf_idf(vocabulary: &[String], idf: &[f64], frame: &Frame, input: &str, output: &str) -> Result<Frame> {
    let cells = utf8_column(frame, input)?;
    let dim = vocabulary.len();
    let rows = cells
        .iter()
        .map(|cell| {
            let mut row = vec![0.0; dim];
            for t in cell.as_deref().map(split_tokens).into_iter().flatten() {
                if let Ok(j) = vocabulary.binary_search_by(|v| v.as_str().cmp(t)) {
                    row[j] += 1.0;
                }
            }
            for (x, w) in row.iter_mut().zip(idf) {
                *x *= w;
            }
            row
        })
        .collect();
    Ok(frame.with_column(feature_field(output, dim), Column::from_vectors(dim, rows))?)
}

fn category_cells(frame: &Frame, name: &str) -> Result<Vec<String>> {
    let (field, col) = frame.require(name)?;
    if !matches!(field.dtype, DType::Utf8 | DType::Int64) {
        return Err(data_err(format!("one_hot needs a utf8 or int64 column, `{name}` is {}", field.dtype)));
    }
    (0..col.len())
        .map(|r| {
            let v = col.value(r);
            if v.is_null() {
                Err(data_err(format!("column `{name}` is null at row {r}")))
            } else {
                Ok(v.render())
            }
        })
        .collect()
}

pub fn fit_one_hot(frame: &Frame, input: &str) -> Result<Transformer> {
    let mut categories = category_cells(frame, input)?;
    categories.sort_unstable();
    categories.dedup();
    if categories.is_empty() {
        return Err(data_err("one_hot: no categories in an empty frame"));
    }
    Ok(Transformer::OneHot { categories })
}

pub fn apply_one_hot(categories: &[String], frame: &Frame, input: &str, output: &str) -> Result<Frame> {
    let dim = categories.len();
    let rows = category_cells(frame, input)?
        .into_iter()
        .map(|c| {
            let j = categories
                .binary_search(&c)
                .map_err(|_| data_err(format!("one_hot: unseen category `{c}` in `{input}`")))?;
            let mut row = vec![0.0; dim];
            row[j] = 1.0;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(frame.with_column(feature_field(output, dim), Column::from_vectors(dim, rows))?)
}

pub(super) fn register(r: &mut Registry) {
    r.builtin(
        ComponentSpec::new("tokenize", PhaseRule::Stage(StagePhase::Feature), "Split text into tokens.")
            .required("input_col", ParamType::Str, "utf8 column to split")
            .required("output_col", ParamType::Str, "token-list column to write")
            .optional("lowercase", ParamType::Bool, Some(true.into()), "lowercase every token")
            .optional("pattern", ParamType::Str, Some("\\s+".into()), "separator regex")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let input = p.str("input_col")?.to_string();
            let output = p.str("output_col")?.to_string();
            let lowercase = p.bool("lowercase")?;
            let splitter = Regex::new(p.str("pattern")?)
                .map_err(|e| ComponentError::Param { name: "pattern".into(), message: e.to_string() })?;
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                io.emit_frame("out", tokenize(&f, &input, &output, &splitter, lowercase)?)
            }))
        },
    );
    r.builtin(
        transformer_spec("tf_idf", "Weight token counts by smoothed inverse document frequency.").optional(
            "min_df",
            ParamType::Int,
            Some(1i64.into()),
            "minimum number of documents a token must appear in",
        ),
        |p| {
            let input = p.str("input_col")?.to_string();
            let output = p.str("output_col")?.to_string();
            let min_df = p.usize_at_least("min_df", 1)?;
            Ok(Box::new(move |io: &mut JobIo<'_>| run_transformer(io, &input, &output, |f| fit_tf_idf(f, &input, min_df))))
        },
    );
    r.builtin(transformer_spec("one_hot", "Encode a categorical column as indicator vectors."), |p| {
        let input = p.str("input_col")?.to_string();
        let output = p.str("output_col")?.to_string();
        Ok(Box::new(move |io: &mut JobIo<'_>| run_transformer(io, &input, &output, |f| fit_one_hot(f, &input))))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameBuilder;

    fn ws() -> Regex {
        Regex::new("\\s+").unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize_text("The cat", &ws(), true), ["the", "cat"]);
        assert!(tokenize_text("", &ws(), true).is_empty());
        assert_eq!(tokenize_text("  A  b ", &ws(), false), ["A", "b"]);
    }

    #[test]
    fn tf_idf_hand_computation() {
        let f = FrameBuilder::new().utf8("d", &["a b", "a c", "a"]).build().unwrap();
        let f = tokenize(&f, "d", "t", &ws(), true).unwrap();
        let t = fit_tf_idf(&f, "t", 1).unwrap();
        let Transformer::TfIdf { vocabulary, idf } = &t else { unreachable!() };
        assert_eq!(vocabulary, &["a", "b", "c"]);
        assert!((idf[0] - 1.0).abs() < 1e-12);
        assert!((idf[1] - (2f64.ln() + 1.0)).abs() < 1e-12);
        let out = t.apply(&f, "t", "v").unwrap();
        let (_, rows) = super::super::vectors(&out, "v").unwrap();
        assert_eq!(rows[0][2], 0.0);
        assert!((rows[0][1] - 1.6931).abs() < 1e-4);
    }

    #[test]
    fn tf_idf_min_df_can_empty_vocabulary() {
        let f = FrameBuilder::new().utf8("t", &["a", "b"]).build().unwrap();
        assert!(fit_tf_idf(&f, "t", 2).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let f = FrameBuilder::new().utf8("c", &["b", "a", "b"]).build().unwrap();
        let t = fit_one_hot(&f, "c").unwrap();
        let out = t.apply(&f, "c", "v").unwrap();
        assert_eq!(
            out.column("v"),
            Some(&Column::from_vectors(2, vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]))
        );
        let g = FrameBuilder::new().utf8("c", &["z"]).build().unwrap();
        let e = t.apply(&g, "c", "v").unwrap_err().to_string();
        assert!(e.contains("`z`"), "{e}");
    }
}
