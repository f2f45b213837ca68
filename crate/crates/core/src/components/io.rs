//! File input and output: csv and plain-text readers, csv writer.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::flow::{ParamValue, StagePhase};
use crate::frame::{render_f64, Column, ColumnRole, DType, Field, Frame, Value};

use super::{choice, data_err, ComponentError, ComponentSpec, Params, ParamType, PhaseRule, PortKind, Registry, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvReadOptions {
    pub header: bool,
    pub delimiter: u8,
    /// Explicit dtypes by column name; other columns are inferred.
    pub dtypes: Vec<(String, DType)>,
    /// Column to mark with the label role.
    pub label: Option<String>,
}

impl Default for CsvReadOptions {
    fn default() -> Self {
        CsvReadOptions { header: true, delimiter: b',', dtypes: Vec::new(), label: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VectorMode {
    #[default]
    Error,
    /// One float column per dimension, named `{col}_{i}`.
    Explode,
    /// `[x,y,...]` text.
    Stringify,
}

fn io_err(path: &Path, source: std::io::Error) -> ComponentError {
    ComponentError::Io { path: path.to_path_buf(), source }
}

fn infer(cells: &[Option<String>]) -> DType {
    let present = || cells.iter().flatten();
    if present().all(|c| c.parse::<i64>().is_ok()) {
        DType::Int64
    } else if present().all(|c| c.parse::<f64>().is_ok()) {
        DType::Float64
    } else if present().all(|c| c == "true" || c == "false") {
        DType::Boolean
    } else {
        DType::Utf8
    }
}

fn convert(name: &str, dtype: DType, cells: Vec<Option<String>>) -> Result<Column> {
    let bad = |row: usize, cell: &str| {
        data_err(format!("column `{name}` row {row}: cannot read `{cell}` as {dtype}"))
    };
    Ok(match dtype {
        DType::Int64 => Column::Int64(
            cells
                .iter()
                .enumerate()
                .map(|(r, c)| c.as_deref().map(|s| s.parse().map_err(|_| bad(r, s))).transpose())
                .collect::<Result<_>>()?,
        ),
        DType::Float64 => Column::Float64(
            cells
                .iter()
                .enumerate()
                .map(|(r, c)| c.as_deref().map(|s| s.parse().map_err(|_| bad(r, s))).transpose())
                .collect::<Result<_>>()?,
        ),
        DType::Boolean => Column::Boolean(
            cells
                .iter()
                .enumerate()
                .map(|(r, c)| {
                    c.as_deref()
                        .map(|s| match s {
                            "true" => Ok(true),
                            "false" => Ok(false),
                            _ => Err(bad(r, s)),
                        })
                        .transpose()
                })
                .collect::<Result<_>>()?,
        ),
        DType::Utf8 => Column::Utf8(cells),
        DType::Vector(_) => return Err(data_err(format!("column `{name}`: vector columns cannot be read from csv"))),
    })
}

/// Reads a csv file. Empty cells are nulls.
pub fn read_csv(path: &Path, opts: &CsvReadOptions) -> Result<Frame> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .delimiter(opts.delimiter)
        .from_reader(file);
    let csv_err = |e: csv::Error| {
        let row = e.position().map(|p| p.line()).unwrap_or(0);
        ComponentError::Csv(format!("{}: row {row}: {e}", path.display()))
    };
    let mut names: Vec<String> = if opts.header {
        reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if names.is_empty() && !opts.header {
            names = (0..record.len()).map(|i| format!("col{i}")).collect();
            cells = vec![Vec::new(); names.len()];
        }
        for (i, v) in record.iter().enumerate() {
            cells[i].push(if v.is_empty() { None } else { Some(v.to_string()) });
        }
    }
    for (hint, _) in &opts.dtypes {
        if !names.contains(hint) {
            return Err(data_err(format!("dtype hint for unknown column `{hint}`")));
        }
    }
    if let Some(l) = &opts.label {
        if !names.contains(l) {
            return Err(data_err(format!("label column `{l}` not in file")));
        }
    }
    let mut fields = Vec::with_capacity(names.len());
    let mut columns = Vec::with_capacity(names.len());
    for (name, col) in names.into_iter().zip(cells) {
        let dtype = opts
            .dtypes
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, d)| *d)
            .unwrap_or_else(|| infer(&col));
        columns.push(convert(&name, dtype, col)?);
        let role = if opts.label.as_deref() == Some(name.as_str()) { ColumnRole::Label } else { ColumnRole::Plain };
        fields.push(Field::new(name, dtype, role));
    }
    Ok(Frame::new(fields, columns)?)
}

/// One utf8 row per line, in a column named `line`.
pub fn read_text(path: &Path) -> Result<Frame> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .map(|l| l.map(Some))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| io_err(path, e))?;
    Ok(Frame::new(vec![Field::plain("line", DType::Utf8)], vec![Column::Utf8(lines)])?)
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Float(f) => render_f64(*f),
        other => other.render(),
    }
}

/// Writes a header row and one record per row; returns the row count.
pub fn write_csv(frame: &Frame, path: &Path, vectors: VectorMode, columns: Option<&[String]>) -> Result<usize> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_csv_to(frame, std::io::BufWriter::new(file), vectors, columns)
        .map_err(|e| match e {
            ComponentError::Csv(m) => ComponentError::Csv(format!("{}: {m}", path.display())),
            other => other,
        })
}

/// Same as [`write_csv`] but into any writer.
pub fn write_csv_to<W: std::io::Write>(frame: &Frame, out: W, vectors: VectorMode, columns: Option<&[String]>) -> Result<usize> {
    let frame = match columns {
        Some(names) => {
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            frame.project(&refs)?
        }
        None => frame.clone(),
    };
    let mut header = Vec::new();
    for f in frame.fields() {
        match (f.dtype, vectors) {
            (DType::Vector(_), VectorMode::Error) => {
                return Err(data_err(format!(
                    "column `{}` is a vector; set `vectors` to explode or stringify",
                    f.name
                )))
            }
            (DType::Vector(d), VectorMode::Explode) => header.extend((0..d).map(|i| format!("{}_{i}", f.name))),
            _ => header.push(f.name.clone()),
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| ComponentError::Csv(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in 0..frame.row_count() {
        let mut record = Vec::with_capacity(header.len());
        for (f, c) in frame.fields().iter().zip(frame.columns()) {
            match (c.value(r), f.dtype) {
                (Value::Vector(x), _) if vectors == VectorMode::Explode => {
                    record.extend(x.iter().map(|v| render_f64(*v)))
                }
                (Value::Null, DType::Vector(d)) if vectors == VectorMode::Explode => {
                    record.extend(std::iter::repeat_n(String::new(), d))
                }
                (v, _) => record.push(cell_text(&v)),
            }
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ComponentError::Csv(e.to_string()))?;
    Ok(frame.row_count())
}

fn parse_hints(items: &[String]) -> Result<Vec<(String, DType)>> {
    items
        .iter()
        .map(|item| {
            let (name, dt) = item.rsplit_once(':').ok_or_else(|| ComponentError::Param {
                name: "dtypes".into(),
                message: format!("`{item}` is not `column:dtype`"),
            })?;
            let dtype = DType::parse(dt).map_err(|e| ComponentError::Param { name: "dtypes".into(), message: e.to_string() })?;
            Ok((name.to_string(), dtype))
        })
        .collect()
}

pub(super) fn register(r: &mut Registry) {
    let input = PhaseRule::Stage(StagePhase::Input);
    r.builtin(
        ComponentSpec::new("csv_read", input, "Read a csv file into a frame; dtypes are inferred unless hinted.")
            .required("path", ParamType::Str, "file path, relative to the data directory")
            .optional("header", ParamType::Bool, Some(true.into()), "first row holds column names")
            .optional("delimiter", ParamType::Str, Some(",".into()), "single-byte field delimiter")
            .optional("dtypes", ParamType::StrList, Some(ParamValue::List(vec![])), "`column:dtype` hints")
            .optional("label", ParamType::Str, None, "column to mark as the label")
            .output("out", PortKind::Frame),
        |p| {
            let path = p.str("path")?.to_string();
            let delim = p.str("delimiter")?;
            if delim.len() != 1 {
                return Err(ComponentError::Param { name: "delimiter".into(), message: "must be one byte".into() });
            }
            let opts = CsvReadOptions {
                header: p.bool("header")?,
                delimiter: delim.as_bytes()[0],
                dtypes: parse_hints(&p.str_list("dtypes").unwrap_or_default())?,
                label: p.opt_str("label").map(str::to_string),
            };
            Ok(Box::new(move |io: &mut super::JobIo<'_>| {
                let frame = read_csv(&io.resolve_path(&path), &opts)?;
                io.emit_frame("out", frame)
            }))
        },
    );
    r.builtin(
        ComponentSpec::new("text_read", input, "Read a text file, one row per line in column `line`.")
            .required("path", ParamType::Str, "file path, relative to the data directory")
            .output("out", PortKind::Frame),
        |p| {
            let path = p.str("path")?.to_string();
            Ok(Box::new(move |io: &mut super::JobIo<'_>| {
                let frame = read_text(&io.resolve_path(&path))?;
                io.emit_frame("out", frame)
            }))
        },
    );
    r.builtin(
        ComponentSpec::new("csv_write", PhaseRule::Stage(StagePhase::Output), "Write the input frame as csv and pass it through.")
            .required("path", ParamType::Str, "output file path, relative to the data directory")
            .optional("vectors", choice(&["error", "explode", "stringify"]), Some("error".into()), "how vector columns are written")
            .optional("columns", ParamType::StrList, None, "subset of columns to write")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p: &Params| {
            let path = p.str("path")?.to_string();
            let mode = match p.str("vectors")? {
                "explode" => VectorMode::Explode,
                "stringify" => VectorMode::Stringify,
                _ => VectorMode::Error,
            };
            let columns = p.str_list("columns");
            Ok(Box::new(move |io: &mut super::JobIo<'_>| {
                let frame = io.frame("in")?;
                write_csv(&frame, &io.resolve_path(&path), mode, columns.as_deref())?;
                let h = io.input("in").cloned().expect("checked by frame()");
                io.emit_handle("out", &h)
            }))
        },
    );
}
