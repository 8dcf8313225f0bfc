//! Dictionary type, initializers, pruning and correlated-atom removal.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GscadError, Result};

/// Slack allowed on the per-atom sup-norm bound.
pub const SUP_NORM_SLACK: f64 = 1e-12;

/// `m x p` matrix of atoms with every column bounded by 1 in sup-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(GscadError::InvalidParameter(
                "dictionary contains non-finite entries".into(),
            ));
        }
        if let Some(j) = atoms
            .column_iter()
            .position(|c| c.amax() > 1.0 + SUP_NORM_SLACK)
        {
            return Err(GscadError::InvalidParameter(format!(
                "atom {j} has sup-norm {} > 1",
                atoms.column(j).amax()
            )));
        }
        Ok(Dictionary { atoms })
    }

    /// Scales every column with sup-norm above 1 back onto the unit ball.
    pub fn from_normalized(mut atoms: DMatrix<f64>) -> Result<Self> {
        normalize_columns(&mut atoms);
        Dictionary::new(atoms)
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn into_atoms(self) -> DMatrix<f64> {
        self.atoms
    }

    /// Ambient dimension.
    pub fn m(&self) -> usize {
        self.atoms.nrows()
    }

    /// Current atom count.
    pub fn p(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.p() == 0
    }

    pub fn select(&self, keep: &[usize]) -> Dictionary {
        Dictionary {
            atoms: self.atoms.select_columns(keep),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.p()).map(|j| format!("atom_{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.atoms.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let p = reader
            .headers()
            .map_err(|e| GscadError::MalformedCsv(e.to_string()))?
            .len();
        let values = read_numeric_rows(&mut reader, p)?;
        let m = values.len() / p.max(1);
        Dictionary::new(DMatrix::from_row_slice(m, p, &values))
    }
}

/// Reads all records of a numeric CSV, requiring `width` fields per row.
pub(crate) fn read_numeric_rows<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    width: usize,
) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GscadError::MalformedCsv(e.to_string()))?;
        if record.len() != width {
            return Err(GscadError::MalformedCsv(format!(
                "row {} has {} fields, expected {width}",
                i + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                GscadError::MalformedCsv(format!("row {}: cannot parse {field:?}", i + 1))
            })?;
            values.push(v);
        }
    }
    Ok(values)
}

/// Divides each column by `max(||d_j||_inf, 1)`.
pub fn normalize_columns(atoms: &mut DMatrix<f64>) {
    for mut col in atoms.column_iter_mut() {
        let s = col.amax();
        if s > 1.0 {
            col /= s;
        }
    }
}

/// I.i.d. `Unif(0, 1)` entries from a seeded ChaCha stream.
pub fn init_uniform(m: usize, p0: usize, seed: u64) -> Result<Dictionary> {
    if m == 0 || p0 == 0 {
        return Err(GscadError::InvalidParameter(format!(
            "need m, p0 >= 1, got m = {m}, p0 = {p0}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fill column by column so the stream order does not depend on layout.
    let mut atoms = DMatrix::zeros(m, p0);
    for j in 0..p0 {
        for i in 0..m {
            atoms[(i, j)] = rng.gen::<f64>();
        }
    }
    Dictionary::new(atoms)
}

/// Overcomplete 2-D DCT dictionary for `patch_size x patch_size` patches.
///
/// The 1-D dictionary has `r = sqrt(p)` atoms `cos(pi k i / r)`, with the mean
/// removed from every non-DC atom; 2-D atoms are outer products (row
/// frequency major) scaled to unit sup-norm. Atom 0 is the constant patch.
pub fn init_redundant_dct(patch_size: usize, p: usize) -> Result<Dictionary> {
    let r = (p as f64).sqrt().round() as usize;
    if r * r != p {
        return Err(GscadError::InvalidParameter(format!(
            "p = {p} is not a perfect square"
        )));
    }
    if patch_size == 0 || r < patch_size {
        return Err(GscadError::InvalidParameter(format!(
            "sqrt(p) = {r} must be at least the patch size {patch_size}"
        )));
    }
    let mut one_d = DMatrix::zeros(patch_size, r);
    for k in 0..r {
        let mut col: DVector<f64> = DVector::from_fn(patch_size, |i, _| {
            (std::f64::consts::PI * (k * i) as f64 / r as f64).cos()
        });
        if k > 0 {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        one_d.set_column(k, &col);
    }
    let m = patch_size * patch_size;
    let mut atoms = DMatrix::zeros(m, p);
    for ky in 0..r {
        for kx in 0..r {
            let j = ky * r + kx;
            // Patches are vectorized column-major: index = col * size + row.
            for col in 0..patch_size {
                for row in 0..patch_size {
                    atoms[(col * patch_size + row, j)] = one_d[(row, ky)] * one_d[(col, kx)];
                }
            }
            let mut c = atoms.column_mut(j);
            let s = c.amax();
            if s > 0.0 {
                c /= s;
            }
        }
    }
    Dictionary::new(atoms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub dictionary: Dictionary,
    /// Indices of the surviving columns in the input.
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

impl Pruned {
    /// Set when no column survived.
    pub fn emptied(&self) -> bool {
        self.dictionary.is_empty()
    }
}

/// Removes exactly-zero columns, preserving the order of the survivors.
pub fn prune_zero_columns(dict: &Dictionary) -> Pruned {
    let (kept, removed): (Vec<usize>, Vec<usize>) =
        (0..dict.p()).partition(|&j| dict.atoms.column(j).iter().any(|&v| v != 0.0));
    Pruned {
        dictionary: dict.select(&kept),
        kept,
        removed,
    }
}

/// Absolute Pearson correlation of two columns.
///
/// Two constant columns count as perfectly correlated; a constant column
/// against a non-constant one counts as uncorrelated.
pub fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    match (saa > 0.0, sbb > 0.0) {
        (true, true) => (sab / (saa * sbb).sqrt()).abs().min(1.0),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Greedy scan in column order dropping any atom whose absolute correlation
/// with an already retained atom exceeds `threshold`.
pub fn dedup_correlated(dict: &Dictionary, threshold: f64) -> Result<Pruned> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(GscadError::InvalidParameter(format!(
            "dedup threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let cols: Vec<Vec<f64>> = dict
        .atoms
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for j in 0..cols.len() {
        if kept
            .iter()
            .any(|&k| abs_correlation(&cols[k], &cols[j]) > threshold)
        {
            removed.push(j);
        } else {
            kept.push(j);
        }
    }
    Ok(Pruned {
        dictionary: dict.select(&kept),
        kept,
        removed,
    })
}
