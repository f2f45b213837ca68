//! Little-endian binary encoding shared by spill files and model artifacts.
//!
//! Frame spill layout (`FFRM`, version 1):
//!
//! ```text
//! magic        4 bytes  "FFRM"
//! version      u32
//! schema_len   u32      length of the schema descriptor
//! schema       bytes    UTF-8 JSON: [{"name","dtype","role"}, ...]
//! row_count    u64
//! per column, in schema order:
//!   data_len   u64      length of the column block that follows
//!   validity   ceil(rows/8) bytes, bit i (LSB first) set when row i is non-null
//!   cells      int64: i64 x rows | float64: f64 bits x rows | boolean: u8 x rows
//!              utf8: (u32 len, bytes) x rows | vector: dim x f64 x rows
//!              null cells are written as zero / empty
//! ```
//!
//! Artifact blobs spill as `FFBL`: magic, version u32, kind label
//! (u32 length + UTF-8), payload (u64 length + bytes).

use crate::frame::{Column, DType, Field, Frame, FrameError, Schema};

pub const FRAME_MAGIC: &[u8; 4] = b"FFRM";
pub const BLOB_MAGIC: &[u8; 4] = b"FFBL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unexpected end of data at offset {0}")]
    Truncated(usize),
    #[error("invalid UTF-8 in encoded data")]
    Utf8,
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        ByteReader { data, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(CodecError::Truncated(self.pos))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), CodecError> {
        if self.take(4)? != expected {
            return Err(CodecError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| CodecError::Utf8)
    }

    pub fn len_prefix(&mut self) -> Result<usize, CodecError> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| CodecError::Corrupt("length overflow".into()))?;
        if n > self.remaining() {
            return Err(CodecError::Truncated(self.pos));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, CodecError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(8) > self.remaining() {
            return Err(CodecError::Truncated(self.pos));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn expect_end(&self) -> Result<(), CodecError> {
        if self.remaining() != 0 {
            return Err(CodecError::Corrupt(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

fn validity(col: &Column) -> Vec<u8> {
    let n = col.len();
    let mut bits = vec![0u8; n.div_ceil(8)];
    for row in 0..n {
        if !col.is_null(row) {
            bits[row / 8] |= 1 << (row % 8);
        }
    }
    bits
}

fn encode_column(col: &Column, w: &mut ByteWriter) {
    w.bytes(&validity(col));
    match col {
        Column::Int64(v) => v.iter().for_each(|x| w.i64(x.unwrap_or(0))),
        Column::Float64(v) => v.iter().for_each(|x| w.f64(x.unwrap_or(0.0))),
        Column::Boolean(v) => v.iter().for_each(|x| w.u8(u8::from(x.unwrap_or(false)))),
        Column::Utf8(v) => v.iter().for_each(|x| w.str(x.as_deref().unwrap_or(""))),
        Column::Vector { dim, cells } => {
            for c in cells {
                match c {
                    Some(x) => x.iter().for_each(|f| w.f64(*f)),
                    None => (0..*dim).for_each(|_| w.f64(0.0)),
                }
            }
        }
    }
}

fn decode_column(dtype: DType, rows: usize, block: &[u8]) -> Result<Column, CodecError> {
    let mut r = ByteReader::new(block);
    let bits = r.take(rows.div_ceil(8))?.to_vec();
    let valid = |row: usize| bits[row / 8] & (1 << (row % 8)) != 0;
    let col = match dtype {
        DType::Int64 => Column::Int64(
            (0..rows)
                .map(|i| r.i64().map(|v| valid(i).then_some(v)))
                .collect::<Result<_, _>>()?,
        ),
        DType::Float64 => Column::Float64(
            (0..rows)
                .map(|i| r.f64().map(|v| valid(i).then_some(v)))
                .collect::<Result<_, _>>()?,
        ),
        DType::Boolean => Column::Boolean(
            (0..rows)
                .map(|i| r.u8().map(|v| valid(i).then_some(v != 0)))
                .collect::<Result<_, _>>()?,
        ),
        DType::Utf8 => Column::Utf8(
            (0..rows)
                .map(|i| r.str().map(|v| valid(i).then_some(v)))
                .collect::<Result<_, _>>()?,
        ),
        DType::Vector(dim) => {
            let mut cells = Vec::with_capacity(rows);
            for i in 0..rows {
                let v: Vec<f64> = (0..dim).map(|_| r.f64()).collect::<Result<_, _>>()?;
                cells.push(valid(i).then_some(v));
            }
            Column::Vector { dim, cells }
        }
    };
    r.expect_end()?;
    Ok(col)
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(FRAME_MAGIC);
    w.u32(FORMAT_VERSION);
    let schema = serde_json::to_string(frame.fields()).expect("schema serializes");
    w.str(&schema);
    w.u64(frame.row_count() as u64);
    for col in frame.columns() {
        let mut cw = ByteWriter::new();
        encode_column(col, &mut cw);
        let block = cw.finish();
        w.u64(block.len() as u64);
        w.bytes(&block);
    }
    w.finish()
}

pub fn decode_frame(data: &[u8]) -> Result<Frame, CodecError> {
    let mut r = ByteReader::new(data);
    r.magic(FRAME_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::Version(version));
    }
    let schema_text = r.str()?;
    let fields: Vec<Field> =
        serde_json::from_str(&schema_text).map_err(|e| CodecError::Corrupt(e.to_string()))?;
    let schema = Schema::new(fields)?;
    let rows = r.u64()? as usize;
    let mut columns = Vec::with_capacity(schema.len());
    for field in schema.fields() {
        let n = r.len_prefix()?;
        let block = r.take(n)?;
        columns.push(decode_column(field.dtype, rows, block)?);
    }
    r.expect_end()?;
    if columns.is_empty() && rows != 0 {
        return Err(CodecError::Corrupt("rows without columns".into()));
    }
    Ok(Frame::from_schema(schema, columns)?)
}

pub fn encode_blob(kind: &str, payload: &[u8]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(BLOB_MAGIC);
    w.u32(FORMAT_VERSION);
    w.str(kind);
    w.u64(payload.len() as u64);
    w.bytes(payload);
    w.finish()
}

pub fn decode_blob(data: &[u8]) -> Result<(String, Vec<u8>), CodecError> {
    let mut r = ByteReader::new(data);
    r.magic(BLOB_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::Version(version));
    }
    let kind = r.str()?;
    let n = r.len_prefix()?;
    let payload = r.take(n)?.to_vec();
    r.expect_end()?;
    Ok((kind, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{ColumnRole, FrameBuilder};

    fn sample() -> Frame {
        FrameBuilder::new()
            .int("id", &[1, -2, 3])
            .column(
                Field::plain("x", DType::Float64),
                Column::Float64(vec![Some(0.1), None, Some(f64::MIN_POSITIVE)]),
            )
            .column(
                Field::new("name", DType::Utf8, ColumnRole::Label),
                Column::Utf8(vec![Some("a".into()), Some(String::new()), None]),
            )
            .column(
                Field::plain("ok", DType::Boolean),
                Column::Boolean(vec![Some(true), Some(false), None]),
            )
            .column(
                Field::new("v", DType::Vector(2), ColumnRole::Feature),
                Column::Vector {
                    dim: 2,
                    cells: vec![Some(vec![1.0, -0.0]), None, Some(vec![f64::NAN, 2.5])],
                },
            )
            .build()
            .unwrap()
    }

    #[test]
    fn frame_round_trip_is_bit_exact() {
        let f = sample();
        let bytes = encode_frame(&f);
        assert_eq!(&bytes[..4], b"FFRM");
        let back = decode_frame(&bytes).unwrap();
        // NaN != NaN, so compare encodings
        assert_eq!(encode_frame(&back), bytes);
        assert_eq!(back.row_count(), 3);
        assert_eq!(back.fields(), f.fields());
    }

    #[test]
    fn truncated_input_is_an_error() {
        let bytes = encode_frame(&sample());
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(decode_frame(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn blob_round_trip() {
        let (k, p) = decode_blob(&encode_blob("logreg", &[1, 2, 3])).unwrap();
        assert_eq!(k, "logreg");
        assert_eq!(p, vec![1, 2, 3]);
    }
}
