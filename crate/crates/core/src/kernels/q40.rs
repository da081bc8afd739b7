use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use half::f16;

use crate::pool::RangeKernel;
use crate::{Error, Result};

use super::{round_half_away, Q8Activation, SharedOutput};

/// Elements per quantization group.
pub const QK: usize = 32;
/// Serialized block size: f16 scale + 16 packed nibbles.
pub const Q40_BLOCK_BYTES: usize = 18;
const MAGIC: &[u8; 4] = b"Q40W";

/// 32 4-bit codes sharing one half-precision scale.
///
/// Byte `j` of `qs` holds element `j` in the low nibble and element `j + 16`
/// in the high nibble. Codes are stored offset by 8, so element value is
/// `d * (q - 8)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockQ40 {
    pub d: f16,
    pub qs: [u8; QK / 2],
}

impl BlockQ40 {
    #[inline]
    pub fn code(&self, j: usize) -> u8 {
        if j < QK / 2 {
            self.qs[j] & 0x0f
        } else {
            self.qs[j - QK / 2] >> 4
        }
    }

    pub fn codes(&self) -> [u8; QK] {
        std::array::from_fn(|j| self.code(j))
    }

    fn from_codes(d: f16, codes: &[u8; QK]) -> Self {
        let qs = std::array::from_fn(|j| codes[j] | (codes[j + QK / 2] << 4));
        BlockQ40 { d, qs }
    }

    pub fn to_bytes(&self) -> [u8; Q40_BLOCK_BYTES] {
        let mut out = [0u8; Q40_BLOCK_BYTES];
        out[..2].copy_from_slice(&self.d.to_le_bytes());
        out[2..].copy_from_slice(&self.qs);
        out
    }

    pub fn from_bytes(b: &[u8; Q40_BLOCK_BYTES]) -> Self {
        BlockQ40 {
            d: f16::from_le_bytes([b[0], b[1]]),
            qs: b[2..].try_into().expect("16 bytes"),
        }
    }
}

/// Row-major matrix of Q4_0 blocks, groups left to right within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Q40Weight {
    pub rows: usize,
    pub cols: usize,
    pub blocks: Vec<BlockQ40>,
}

impl Q40Weight {
    pub fn groups_per_row(&self) -> usize {
        self.cols / QK
    }

    pub fn row(&self, r: usize) -> &[BlockQ40] {
        let g = self.groups_per_row();
        &self.blocks[r * g..(r + 1) * g]
    }

    pub fn byte_size(&self) -> usize {
        self.blocks.len() * Q40_BLOCK_BYTES
    }
}

fn quantize_group(group: &[f32]) -> BlockQ40 {
    // Signed value of largest magnitude; it maps to code 0 exactly, leaving
    // the 4-bit range [-8, 7] for the rest of the group.
    let max = group
        .iter()
        .copied()
        .fold(0.0f32, |m, v| if v.abs() > m.abs() { v } else { m });
    let d = f16::from_f32(max / -8.0);
    let df = d.to_f32();
    let mut codes = [8u8; QK];
    if df != 0.0 {
        for (c, &w) in codes.iter_mut().zip(group) {
            *c = (round_half_away(w / df) + 8.0).clamp(0.0, 15.0) as u8;
        }
    }
    BlockQ40::from_codes(if df == 0.0 { f16::ZERO } else { d }, &codes)
}

/// Quantizes a row-major `rows × cols` matrix; `cols` must be a multiple of 32.
pub fn quantize_q40(w: &[f32], rows: usize, cols: usize) -> Result<Q40Weight> {
    if !cols.is_multiple_of(QK) {
        return Err(Error::invalid(format!(
            "column count {cols} is not a multiple of {QK}"
        )));
    }
    if w.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {rows}x{cols} matrix",
            w.len()
        )));
    }
    Ok(Q40Weight {
        rows,
        cols,
        blocks: w.chunks_exact(QK).map(quantize_group).collect(),
    })
}

pub fn dequantize_q40(w: &Q40Weight) -> Vec<f32> {
    let mut out = Vec::with_capacity(w.rows * w.cols);
    for b in &w.blocks {
        let d = b.d.to_f32();
        out.extend(b.codes().iter().map(|&q| d * (q as i32 - 8) as f32));
    }
    out
}

#[inline]
fn gemv_row(row: &[BlockQ40], x: &Q8Activation) -> f32 {
    let mut acc = 0.0f64;
    for (g, (b, &s)) in row.iter().zip(&x.scales).enumerate() {
        let xs = &x.codes[g * QK..(g + 1) * QK];
        let mut isum = 0i32;
        for j in 0..QK / 2 {
            let q = b.qs[j];
            isum += ((q & 0x0f) as i32 - 8) * xs[j] as i32;
            isum += ((q >> 4) as i32 - 8) * xs[j + QK / 2] as i32;
        }
        acc += b.d.to_f32() as f64 * s as f64 * isum as f64;
    }
    acc as f32
}

/// Computes `y[rows]` for the given row range of `W · x`.
///
/// `y` holds exactly the rows in `rows`.
pub fn gemv_q40_range(w: &Q40Weight, x: &Q8Activation, y: &mut [f32], rows: Range<usize>) -> Result<()> {
    check_gemv_dims(w, x)?;
    if rows.end > w.rows || y.len() != rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "row range {rows:?} with {} outputs for {} rows",
            y.len(),
            w.rows
        )));
    }
    for (out, r) in y.iter_mut().zip(rows) {
        *out = gemv_row(w.row(r), x);
    }
    Ok(())
}

fn check_gemv_dims(w: &Q40Weight, x: &Q8Activation) -> Result<()> {
    if w.cols != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "weight has {} columns, activation has {} elements",
            w.cols,
            x.len()
        )));
    }
    Ok(())
}

/// Parallel launch wrapper; units are output rows.
pub struct GemvQ40Kernel<'a> {
    w: &'a Q40Weight,
    x: &'a Q8Activation,
    y: SharedOutput<f32>,
}

impl<'a> GemvQ40Kernel<'a> {
    pub fn new(w: &'a Q40Weight, x: &'a Q8Activation) -> Result<Self> {
        check_gemv_dims(w, x)?;
        Ok(GemvQ40Kernel {
            w,
            x,
            y: SharedOutput::new(w.rows),
        })
    }

    pub fn units(&self) -> usize {
        self.w.rows
    }

    pub fn output(&mut self) -> &[f32] {
        self.y.as_slice()
    }

    pub fn into_output(self) -> Vec<f32> {
        self.y.into_vec()
    }
}

impl RangeKernel for GemvQ40Kernel<'_> {
    fn run(&self, _core: usize, rows: Range<usize>) {
        // SAFETY: row ranges of one launch are disjoint.
        let y = unsafe { self.y.slice_mut(rows.start, rows.end) };
        for (out, r) in y.iter_mut().zip(rows) {
            *out = gemv_row(self.w.row(r), self.x);
        }
    }
}

/// Writes `Q40W`, rows and cols (u32 LE), then the blocks.
pub fn write_q40<W: Write>(w: &Q40Weight, mut out: W) -> std::io::Result<()> {
    let dims = |v: usize| {
        u32::try_from(v).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32"))
    };
    out.write_all(MAGIC)?;
    out.write_all(&dims(w.rows)?.to_le_bytes())?;
    out.write_all(&dims(w.cols)?.to_le_bytes())?;
    for b in &w.blocks {
        out.write_all(&b.to_bytes())?;
    }
    out.flush()
}

pub fn read_q40<R: Read>(mut input: R) -> Result<Q40Weight> {
    let mut header = [0u8; 12];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected Q40W".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if !cols.is_multiple_of(QK) {
        return Err(Error::Format(format!("cols {cols} not a multiple of {QK}")));
    }
    let n_blocks = rows * (cols / QK);
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut buf = [0u8; Q40_BLOCK_BYTES];
    for i in 0..n_blocks {
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated at block {i}: {e}")))?;
        blocks.push(BlockQ40::from_bytes(&buf));
    }
    Ok(Q40Weight { rows, cols, blocks })
}

pub fn write_q40_file(w: &Q40Weight, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_q40(w, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_q40_file(path: &Path) -> Result<Q40Weight> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_q40(std::io::BufReader::new(f))
}
