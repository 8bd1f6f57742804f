//! File formats: Matrix Market coordinate files for sparse matrices and a
//! small binary container for dense matrices.
//!
//! The dense container is 16 bytes of header (magic `HGCN`, u32 rows, u32
//! cols, u32 reserved, all little-endian) followed by the row-major f32
//! payload.

use crate::error::{Error, Result};
use crate::matcore::{CsrMatrix, DenseMatrix};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const DENSE_MAGIC: &[u8; 4] = b"HGCN";
const CSR_MAGIC: &[u8; 4] = b"HGCS";

/// Parse a Matrix Market coordinate file. Indices are 1-based in the file.
/// `pattern` files are read with all values set to 1.0; `symmetric` files
/// have their lower triangle mirrored.
pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%MatrixMarket" || fields[1] != "matrix" {
        return Err(Error::Parse(format!("bad Matrix Market header: {header}")));
    }
    if fields[2] != "coordinate" {
        return Err(Error::Parse(format!("only coordinate format is supported, got {}", fields[2])));
    }
    let pattern = match fields[3] {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(Error::Parse(format!("unsupported value type {other}"))),
    };
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };

    // Size line, skipping comments.
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f32)> = Vec::new();
    let mut entry_lines = 0usize;
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match dims {
            None => {
                if toks.len() != 3 {
                    return Err(Error::Parse(format!("bad size line: {trimmed}")));
                }
                let rows = toks[0].parse::<usize>().map_err(|_| Error::Parse("bad row count".into()))?;
                let cols = toks[1].parse::<usize>().map_err(|_| Error::Parse("bad column count".into()))?;
                let nnz = toks[2].parse::<usize>().map_err(|_| Error::Parse("bad nnz count".into()))?;
                dims = Some((rows, cols, nnz));
                triplets.reserve(if symmetric { nnz * 2 } else { nnz });
            }
            Some((rows, cols, _)) => {
                let need = if pattern { 2 } else { 3 };
                if toks.len() < need {
                    return Err(Error::Parse(format!("bad entry line: {trimmed}")));
                }
                let i = toks[0].parse::<usize>().map_err(|_| Error::Parse("bad row index".into()))?;
                let j = toks[1].parse::<usize>().map_err(|_| Error::Parse("bad column index".into()))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::Parse(format!("index ({i}, {j}) outside {rows}x{cols} (1-based)")));
                }
                let v = if pattern {
                    1.0
                } else {
                    toks[2].parse::<f32>().map_err(|_| Error::Parse("bad value".into()))?
                };
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
                entry_lines += 1;
            }
        }
    }
    let (rows, cols, nnz) = dims.ok_or_else(|| Error::Parse("missing size line".into()))?;
    if entry_lines != nnz {
        return Err(Error::Parse(format!(
            "size line declares {nnz} entries, file has {entry_lines}"
        )));
    }
    CsrMatrix::from_coo(rows, cols, &triplets)
}

/// Write a sparse matrix as `coordinate real general` with 1-based indices.
pub fn write_matrix_market(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for r in 0..m.rows() {
        for (c, v) in m.iter_row(r) {
            writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

/// Write the binary dense container.
pub fn write_dense_bin(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DENSE_MAGIC)?;
    w.write_all(&u32::try_from(m.rows()).map_err(|_| Error::Parameter("rows exceed u32".into()))?.to_le_bytes())?;
    w.write_all(&u32::try_from(m.cols()).map_err(|_| Error::Parameter("cols exceed u32".into()))?.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read the binary dense container.
pub fn read_dense_bin(path: &Path) -> Result<DenseMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != DENSE_MAGIC {
        return Err(Error::Parse("bad magic in dense binary file".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != rows * cols * 4 {
        return Err(Error::Parse(format!(
            "dense payload has {} bytes, expected {} for {}x{}",
            payload.len(),
            rows * cols * 4,
            rows,
            cols
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    DenseMatrix::from_vec(rows, cols, values)
}

/// Binary CSR container used for plan sidecars: magic `HGCS`, u32 rows,
/// u32 cols, u32 reserved, u64 nnz, then row offsets (u64), column indices
/// (u32), and values (f32), all little-endian.
pub fn write_csr_bin(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CSR_MAGIC)?;
    w.write_all(&u32::try_from(m.rows()).map_err(|_| Error::Parameter("rows exceed u32".into()))?.to_le_bytes())?;
    w.write_all(&u32::try_from(m.cols()).map_err(|_| Error::Parameter("cols exceed u32".into()))?.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&(m.nnz() as u64).to_le_bytes())?;
    for &p in m.row_ptr() {
        w.write_all(&(p as u64).to_le_bytes())?;
    }
    for &c in m.col_idx() {
        w.write_all(&u32::try_from(c).map_err(|_| Error::Parameter("column exceeds u32".into()))?.to_le_bytes())?;
    }
    for v in m.vals() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_csr_bin(path: &Path) -> Result<CsrMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 24];
    r.read_exact(&mut header)?;
    if &header[0..4] != CSR_MAGIC {
        return Err(Error::Parse("bad magic in sparse binary file".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let nnz = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;

    let mut read_u64s = |count: usize| -> Result<Vec<u64>> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect())
    };
    let row_ptr: Vec<u64> = read_u64s(rows + 1)?;
    let mut buf = vec![0u8; nnz * 4];
    r.read_exact(&mut buf)?;
    let col_idx: Vec<u32> =
        buf.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
    let mut vbuf = vec![0u8; nnz * 4];
    r.read_exact(&mut vbuf)?;
    let vals: Vec<f32> =
        vbuf.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();

    let mut triplets = Vec::with_capacity(nnz);
    for row in 0..rows {
        let (s, e) = (row_ptr[row] as usize, row_ptr[row + 1] as usize);
        if e > nnz || s > e {
            return Err(Error::Parse("corrupt row offsets in sparse binary file".into()));
        }
        for i in s..e {
            triplets.push((row, col_idx[i] as usize, vals[i]));
        }
    }
    CsrMatrix::from_coo(rows, cols, &triplets)
}
