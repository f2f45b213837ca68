//! Immutable columnar frames: the table type exchanged between components.
//!
//! A [`Frame`] is a schema plus one typed array per column. Every cell may be
//! null. Frames never change after construction; transformations build new
//! frames, which lets the store hand out shared `Arc<Frame>` references.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("more than one label column (`{0}` and `{1}`)")]
    MultipleLabels(String, String),
    #[error("column `{column}` has {found} rows, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}` holds {found} data but schema declares {declared}")]
    DTypeMismatch {
        column: String,
        declared: DType,
        found: DType,
    },
    #[error("column `{column}` row {row}: vector has dimension {found}, expected {expected}")]
    VectorDim {
        column: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector dtype must have dimension >= 1")]
    ZeroDim,
    #[error("schema has {fields} fields but {columns} column arrays were supplied")]
    ArityMismatch { fields: usize, columns: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid dtype `{0}`")]
    BadDType(String),
}

/// Cell type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Int64,
    Float64,
    Boolean,
    Utf8,
    /// Fixed-width `f64` vector.
    Vector(usize),
}

impl DType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DType::Int64 | DType::Float64)
    }

    /// Parses the textual form used in flow parameters and descriptors:
    /// `int64`, `float64`, `boolean`, `utf8`, `float64-vector(N)`.
    pub fn parse(text: &str) -> Result<DType, FrameError> {
        let t = text.trim();
        match t {
            "int64" => Ok(DType::Int64),
            "float64" => Ok(DType::Float64),
            "boolean" | "bool" => Ok(DType::Boolean),
            "utf8" | "string" => Ok(DType::Utf8),
            _ => {
                let dim = t
                    .strip_prefix("float64-vector(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| FrameError::BadDType(t.to_string()))?;
                if dim == 0 {
                    return Err(FrameError::ZeroDim);
                }
                Ok(DType::Vector(dim))
            }
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DType::Int64 => f.write_str("int64"),
            DType::Float64 => f.write_str("float64"),
            DType::Boolean => f.write_str("boolean"),
            DType::Utf8 => f.write_str("utf8"),
            DType::Vector(d) => write!(f, "float64-vector({d})"),
        }
    }
}

impl Serialize for DType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        DType::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Label,
    #[default]
    Plain,
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnRole::Feature => "feature",
            ColumnRole::Label => "label",
            ColumnRole::Plain => "plain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub dtype: DType,
    #[serde(default)]
    pub role: ColumnRole,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: DType, role: ColumnRole) -> Self {
        Field {
            name: name.into(),
            dtype,
            role,
        }
    }

    pub fn plain(name: impl Into<String>, dtype: DType) -> Self {
        Field::new(name, dtype, ColumnRole::Plain)
    }
}

/// Ordered column descriptors with unique names and at most one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Schema, FrameError> {
        let mut seen = HashSet::new();
        let mut label: Option<&str> = None;
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(FrameError::DuplicateColumn(f.name.clone()));
            }
            if let DType::Vector(0) = f.dtype {
                return Err(FrameError::ZeroDim);
            }
            if f.role == ColumnRole::Label {
                if let Some(prev) = label {
                    return Err(FrameError::MultipleLabels(prev.to_string(), f.name.clone()));
                }
                label = Some(&f.name);
            }
        }
        Ok(Schema { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn label(&self) -> Option<&Field> {
        self.fields.iter().find(|f| f.role == ColumnRole::Label)
    }
}

/// A single cell value, used at the edges of the columnar model (SQL
/// evaluation, JSON rows, parameter literals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Vector(Vec<f64>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Total order used for sorting: nulls first, then numbers (ints and
    /// floats compared numerically), booleans, strings, vectors.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Int(_) | Value::Float(_) => 1,
                Value::Bool(_) => 2,
                Value::Str(_) => 3,
                Value::Vector(_) => 4,
            }
        }
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
                let (a, b) = (self.as_f64().unwrap(), other.as_f64().unwrap());
                a.total_cmp(&b)
            }
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Vector(a), Value::Vector(b)) => {
                for (x, y) in a.iter().zip(b) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => rank(self).cmp(&rank(other)),
        }
    }

    /// Text rendering used in CSV output, category names and agent
    /// observations. Floats keep a decimal point (`2.0`, not `2`).
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => render_f64(*f),
            Value::Str(s) => s.clone(),
            Value::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| render_f64(*x)).collect();
                format!("[{}]", parts.join(","))
            }
        }
    }
}

pub(crate) fn render_f64(f: f64) -> String {
    format!("{f:?}")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            other => f.write_str(&other.render()),
        }
    }
}

/// Typed column storage. `None` marks a null cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Int64(Vec<Option<i64>>),
    Float64(Vec<Option<f64>>),
    Boolean(Vec<Option<bool>>),
    Utf8(Vec<Option<String>>),
    Vector {
        dim: usize,
        cells: Vec<Option<Vec<f64>>>,
    },
}

impl Column {
    pub fn dtype(&self) -> DType {
        match self {
            Column::Int64(_) => DType::Int64,
            Column::Float64(_) => DType::Float64,
            Column::Boolean(_) => DType::Boolean,
            Column::Utf8(_) => DType::Utf8,
            Column::Vector { dim, .. } => DType::Vector(*dim),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int64(v) => v.len(),
            Column::Float64(v) => v.len(),
            Column::Boolean(v) => v.len(),
            Column::Utf8(v) => v.len(),
            Column::Vector { cells, .. } => cells.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Empty column of the given dtype with reserved capacity.
    pub fn with_capacity(dtype: DType, cap: usize) -> Column {
        match dtype {
            DType::Int64 => Column::Int64(Vec::with_capacity(cap)),
            DType::Float64 => Column::Float64(Vec::with_capacity(cap)),
            DType::Boolean => Column::Boolean(Vec::with_capacity(cap)),
            DType::Utf8 => Column::Utf8(Vec::with_capacity(cap)),
            DType::Vector(dim) => Column::Vector {
                dim,
                cells: Vec::with_capacity(cap),
            },
        }
    }

    pub fn from_vectors(dim: usize, rows: Vec<Vec<f64>>) -> Column {
        Column::Vector {
            dim,
            cells: rows.into_iter().map(Some).collect(),
        }
    }

    pub fn is_null(&self, row: usize) -> bool {
        match self {
            Column::Int64(v) => v[row].is_none(),
            Column::Float64(v) => v[row].is_none(),
            Column::Boolean(v) => v[row].is_none(),
            Column::Utf8(v) => v[row].is_none(),
            Column::Vector { cells, .. } => cells[row].is_none(),
        }
    }

    pub fn value(&self, row: usize) -> Value {
        match self {
            Column::Int64(v) => v[row].map_or(Value::Null, Value::Int),
            Column::Float64(v) => v[row].map_or(Value::Null, Value::Float),
            Column::Boolean(v) => v[row].map_or(Value::Null, Value::Bool),
            Column::Utf8(v) => v[row].clone().map_or(Value::Null, Value::Str),
            Column::Vector { cells, .. } => cells[row].clone().map_or(Value::Null, Value::Vector),
        }
    }

    /// Numeric view of a cell (ints widened to `f64`).
    pub fn f64_at(&self, row: usize) -> Option<f64> {
        match self {
            Column::Int64(v) => v[row].map(|i| i as f64),
            Column::Float64(v) => v[row],
            _ => None,
        }
    }

    /// Appends a value; the value must match the column dtype (ints are
    /// accepted by float columns).
    pub fn push(&mut self, value: Value) -> Result<(), FrameError> {
        let dtype = self.dtype();
        let mismatch = |found: DType| FrameError::DTypeMismatch {
            column: String::new(),
            declared: dtype,
            found,
        };
        match (self, value) {
            (Column::Int64(v), Value::Null) => v.push(None),
            (Column::Float64(v), Value::Null) => v.push(None),
            (Column::Boolean(v), Value::Null) => v.push(None),
            (Column::Utf8(v), Value::Null) => v.push(None),
            (Column::Vector { cells, .. }, Value::Null) => cells.push(None),
            (Column::Int64(v), Value::Int(i)) => v.push(Some(i)),
            (Column::Float64(v), Value::Float(f)) => v.push(Some(f)),
            (Column::Float64(v), Value::Int(i)) => v.push(Some(i as f64)),
            (Column::Boolean(v), Value::Bool(b)) => v.push(Some(b)),
            (Column::Utf8(v), Value::Str(s)) => v.push(Some(s)),
            (Column::Vector { dim, cells }, Value::Vector(x)) => {
                if x.len() != *dim {
                    return Err(FrameError::VectorDim {
                        column: String::new(),
                        row: cells.len(),
                        expected: *dim,
                        found: x.len(),
                    });
                }
                cells.push(Some(x))
            }
            (_, other) => {
                let found = match other {
                    Value::Bool(_) => DType::Boolean,
                    Value::Int(_) => DType::Int64,
                    Value::Float(_) => DType::Float64,
                    Value::Str(_) => DType::Utf8,
                    Value::Vector(x) => DType::Vector(x.len()),
                    Value::Null => unreachable!(),
                };
                return Err(mismatch(found));
            }
        }
        Ok(())
    }

    /// Rows at the given indices, in that order.
    pub fn take(&self, idx: &[usize]) -> Column {
        match self {
            Column::Int64(v) => Column::Int64(idx.iter().map(|&i| v[i]).collect()),
            Column::Float64(v) => Column::Float64(idx.iter().map(|&i| v[i]).collect()),
            Column::Boolean(v) => Column::Boolean(idx.iter().map(|&i| v[i]).collect()),
            Column::Utf8(v) => Column::Utf8(idx.iter().map(|&i| v[i].clone()).collect()),
            Column::Vector { dim, cells } => Column::Vector {
                dim: *dim,
                cells: idx.iter().map(|&i| cells[i].clone()).collect(),
            },
        }
    }

    /// Accounting size: 8 B per numeric cell, 1 B per boolean, content
    /// length + 4 B per string, 8·dim B per vector.
    pub fn size_bytes(&self) -> u64 {
        match self {
            Column::Int64(v) => 8 * v.len() as u64,
            Column::Float64(v) => 8 * v.len() as u64,
            Column::Boolean(v) => v.len() as u64,
            Column::Utf8(v) => v
                .iter()
                .map(|s| 4 + s.as_ref().map_or(0, |s| s.len() as u64))
                .sum(),
            Column::Vector { dim, cells } => 8 * (*dim as u64) * cells.len() as u64,
        }
    }
}

/// Immutable table: schema + equally long typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    schema: Schema,
    columns: Vec<Column>,
    rows: usize,
}

impl Frame {
    pub fn new(fields: Vec<Field>, columns: Vec<Column>) -> Result<Frame, FrameError> {
        let schema = Schema::new(fields)?;
        Frame::from_schema(schema, columns)
    }

    pub fn from_schema(schema: Schema, columns: Vec<Column>) -> Result<Frame, FrameError> {
        if schema.len() != columns.len() {
            return Err(FrameError::ArityMismatch {
                fields: schema.len(),
                columns: columns.len(),
            });
        }
        let rows = columns.first().map_or(0, Column::len);
        for (field, col) in schema.fields().iter().zip(&columns) {
            if col.dtype() != field.dtype {
                return Err(FrameError::DTypeMismatch {
                    column: field.name.clone(),
                    declared: field.dtype,
                    found: col.dtype(),
                });
            }
            if col.len() != rows {
                return Err(FrameError::LengthMismatch {
                    column: field.name.clone(),
                    expected: rows,
                    found: col.len(),
                });
            }
            if let Column::Vector { dim, cells } = col {
                for (row, cell) in cells.iter().enumerate() {
                    if let Some(v) = cell {
                        if v.len() != *dim {
                            return Err(FrameError::VectorDim {
                                column: field.name.clone(),
                                row,
                                expected: *dim,
                                found: v.len(),
                            });
                        }
                    }
                }
            }
        }
        Ok(Frame {
            schema,
            columns,
            rows,
        })
    }

    pub fn empty() -> Frame {
        Frame {
            schema: Schema::default(),
            columns: Vec::new(),
            rows: 0,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn fields(&self) -> &[Field] {
        self.schema.fields()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn require(&self, name: &str) -> Result<(&Field, &Column), FrameError> {
        let i = self
            .schema
            .index_of(name)
            .ok_or_else(|| FrameError::UnknownColumn(name.to_string()))?;
        Ok((&self.schema.fields()[i], &self.columns[i]))
    }

    pub fn label_name(&self) -> Option<&str> {
        self.schema.label().map(|f| f.name.as_str())
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(row)).collect()
    }

    /// Returns a frame with `column` added (or replacing an existing column
    /// of the same name, in place).
    pub fn with_column(&self, field: Field, column: Column) -> Result<Frame, FrameError> {
        let mut fields = self.schema.fields().to_vec();
        let mut columns = self.columns.clone();
        match self.schema.index_of(&field.name) {
            Some(i) => {
                fields[i] = field;
                columns[i] = column;
            }
            None => {
                fields.push(field);
                columns.push(column);
            }
        }
        Frame::new(fields, columns)
    }

    /// Keeps only the named columns, in the given order.
    pub fn project(&self, names: &[&str]) -> Result<Frame, FrameError> {
        let mut fields = Vec::with_capacity(names.len());
        let mut columns = Vec::with_capacity(names.len());
        for n in names {
            let (f, c) = self.require(n)?;
            fields.push(f.clone());
            columns.push(c.clone());
        }
        let mut out = Frame::new(fields, columns)?;
        if names.is_empty() {
            out.rows = self.rows;
        }
        Ok(out)
    }

    pub fn take(&self, idx: &[usize]) -> Frame {
        Frame {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(idx)).collect(),
            rows: idx.len(),
        }
    }

    pub fn filter(&self, keep: &[bool]) -> Frame {
        let idx: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.then_some(i))
            .collect();
        self.take(&idx)
    }

    pub fn size_bytes(&self) -> u64 {
        self.columns.iter().map(Column::size_bytes).sum()
    }

    /// Rows as JSON objects keyed by column name.
    pub fn to_json_rows(&self, offset: usize, limit: usize) -> Vec<serde_json::Value> {
        let end = self.rows.min(offset.saturating_add(limit));
        (offset.min(end)..end)
            .map(|r| {
                let mut obj = serde_json::Map::new();
                for (f, c) in self.fields().iter().zip(&self.columns) {
                    let v = serde_json::to_value(c.value(r)).unwrap_or(serde_json::Value::Null);
                    obj.insert(f.name.clone(), v);
                }
                serde_json::Value::Object(obj)
            })
            .collect()
    }
}

/// Convenience builder for tests and generators.
#[derive(Debug, Default)]
pub struct FrameBuilder {
    fields: Vec<Field>,
    columns: Vec<Column>,
}

impl FrameBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn column(mut self, field: Field, column: Column) -> Self {
        self.fields.push(field);
        self.columns.push(column);
        self
    }

    pub fn int(self, name: &str, values: &[i64]) -> Self {
        let col = Column::Int64(values.iter().copied().map(Some).collect());
        self.column(Field::plain(name, DType::Int64), col)
    }

    pub fn float(self, name: &str, values: &[f64]) -> Self {
        let col = Column::Float64(values.iter().copied().map(Some).collect());
        self.column(Field::plain(name, DType::Float64), col)
    }

    pub fn utf8(self, name: &str, values: &[&str]) -> Self {
        let col = Column::Utf8(values.iter().map(|s| Some(s.to_string())).collect());
        self.column(Field::plain(name, DType::Utf8), col)
    }

    pub fn label_utf8(self, name: &str, values: &[&str]) -> Self {
        let col = Column::Utf8(values.iter().map(|s| Some(s.to_string())).collect());
        self.column(Field::new(name, DType::Utf8, ColumnRole::Label), col)
    }

    pub fn vectors(self, name: &str, rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        let col = Column::from_vectors(dim, rows.to_vec());
        self.column(Field::new(name, DType::Vector(dim), ColumnRole::Feature), col)
    }

    pub fn build(self) -> Result<Frame, FrameError> {
        Frame::new(self.fields, self.columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_accounting_follows_cell_rules() {
        let f = FrameBuilder::new()
            .int("a", &[1, 2])
            .float("b", &[1.0, 2.0])
            .utf8("s", &["ab", ""])
            .vectors("v", &[vec![1.0, 2.0, 3.0], vec![0.0; 3]])
            .column(
                Field::plain("flag", DType::Boolean),
                Column::Boolean(vec![Some(true), None]),
            )
            .build()
            .unwrap();
        assert_eq!(f.size_bytes(), 16 + 16 + (4 + 2 + 4) + 48 + 2);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let err = FrameBuilder::new()
            .int("a", &[1, 2])
            .int("b", &[1])
            .build()
            .unwrap_err();
        assert!(matches!(err, FrameError::LengthMismatch { .. }));
    }

    #[test]
    fn two_labels_rejected() {
        let err = FrameBuilder::new()
            .label_utf8("a", &["x"])
            .label_utf8("b", &["y"])
            .build()
            .unwrap_err();
        assert!(matches!(err, FrameError::MultipleLabels(..)));
    }

    #[test]
    fn vector_cells_must_match_dim() {
        let col = Column::Vector {
            dim: 2,
            cells: vec![Some(vec![1.0, 2.0]), Some(vec![1.0])],
        };
        let err = Frame::new(vec![Field::plain("v", DType::Vector(2))], vec![col]).unwrap_err();
        assert!(matches!(err, FrameError::VectorDim { row: 1, .. }));
    }

    #[test]
    fn dtype_text_round_trip() {
        for d in [
            DType::Int64,
            DType::Float64,
            DType::Boolean,
            DType::Utf8,
            DType::Vector(7),
        ] {
            assert_eq!(DType::parse(&d.to_string()).unwrap(), d);
        }
        assert!(DType::parse("float64-vector(0)").is_err());
        assert!(DType::parse("decimal").is_err());
    }

    #[test]
    fn float_render_keeps_decimal_point() {
        assert_eq!(Value::Float(2.0).render(), "2.0");
        assert_eq!(Value::Float(0.25).render(), "0.25");
    }
}
