//! Observed panel, control subsets, and the Gram statistics every
//! projection is computed from.
//!
//! The treatment always sits in column 0 of `W = [Z X]`; `W` itself is
//! never stored.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, PivotFailure};

/// Outcome `y`, exposure `z`, and an `n × p` control matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    z: DVector<f64>,
    x: DMatrix<f64>,
    control_names: Vec<String>,
    centered: bool,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        z: DVector<f64>,
        x: DMatrix<f64>,
        control_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if z.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: z.len(),
            });
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.nrows(),
            });
        }
        let p = x.ncols();
        if control_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: control_names.len(),
            });
        }
        if n < p + 2 {
            return Err(Error::Rank(format!(
                "{n} observations cannot identify {} coefficients plus noise",
                p + 1
            )));
        }
        let all_finite = y
            .iter()
            .chain(z.iter())
            .chain(x.iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Invalid("dataset contains non-finite entries".into()));
        }
        for (i, name) in control_names.iter().enumerate() {
            if control_names[..i].contains(name) {
                return Err(Error::Invalid(format!("duplicate control name `{name}`")));
            }
        }
        Ok(Self {
            y,
            z,
            x,
            control_names,
            centered: false,
        })
    }

    /// Copy with every column of `[y z x]` shifted to zero sample mean.
    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        center_in_place(out.y.as_mut_slice());
        center_in_place(out.z.as_mut_slice());
        for mut col in out.x.column_iter_mut() {
            center_in_place(col.as_mut_slice());
        }
        out.centered = true;
        out
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn control_names(&self) -> &[String] {
        &self.control_names
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// `W = [Z X]`.
    pub fn design(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.p();
        let mut w = DMatrix::zeros(n, p + 1);
        w.set_column(0, &self.z);
        w.view_mut((0, 1), (n, p)).copy_from(&self.x);
        w
    }

    /// Name of coordinate `j` of ψ (0 is the treatment).
    pub fn coordinate_name(&self, j: usize) -> &str {
        if j == 0 {
            "treatment"
        } else {
            &self.control_names[j - 1]
        }
    }
}

fn center_in_place(v: &mut [f64]) {
    // Two passes so the residual mean is at rounding level.
    for _ in 0..2 {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|e| *e -= mean);
    }
}

/// Reads a comma-delimited table with a header row.
///
/// With `center`, the intercept is absorbed by demeaning every column.
/// Callers wanting an explicit intercept should pass `center = false` and
/// supply a constant control column.
pub fn load_dataset<R: Read>(
    source: R,
    outcome_col: &str,
    exposure_col: &str,
    control_cols: &[String],
    center: bool,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let yi = find(outcome_col)?;
    let zi = find(exposure_col)?;
    let xi: Vec<usize> = control_cols
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); xi.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // header is line 1, first data row is row 1
        let row = row + 1;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        y.push(cell(yi, outcome_col)?);
        z.push(cell(zi, exposure_col)?);
        for (k, (&idx, name)) in xi.iter().zip(control_cols).enumerate() {
            xs[k].push(cell(idx, name)?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_fn(n, xi.len(), |i, j| xs[j][i]);
    let ds = Dataset::new(
        DVector::from_vec(y),
        DVector::from_vec(z),
        x,
        control_cols.to_vec(),
    )?;
    Ok(if center { ds.centered() } else { ds })
}

/// Header columns other than the outcome and exposure, in file order.
pub fn default_controls<R: Read>(
    source: R,
    outcome_col: &str,
    exposure_col: &str,
) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    Ok(rdr
        .headers()?
        .iter()
        .filter(|h| *h != outcome_col && *h != exposure_col)
        .map(str::to_string)
        .collect())
}

/// Writes `y,z,<controls>` with a header row.
pub fn write_dataset<W: std::io::Write>(
    ds: &Dataset,
    sink: W,
    outcome: &str,
    exposure: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![outcome.to_string(), exposure.to_string()];
    header.extend(ds.control_names().iter().cloned());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(ds.p() + 2);
    for i in 0..ds.n() {
        rec.clear();
        rec.push(format!("{:?}", ds.y()[i]));
        rec.push(format!("{:?}", ds.z()[i]));
        for j in 0..ds.p() {
            rec.push(format!("{:?}", ds.x()[(i, j)]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inclusion vector over the `p` controls.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlSubset {
    include: Vec<bool>,
}

impl ControlSubset {
    pub fn new(include: Vec<bool>) -> Self {
        Self { include }
    }

    pub fn full(p: usize) -> Self {
        Self::new(vec![true; p])
    }

    pub fn null(p: usize) -> Self {
        Self::new(vec![false; p])
    }

    /// Subset including exactly the named controls.
    pub fn from_names<S: AsRef<str>>(names: &[String], include: &[S]) -> Result<Self> {
        let mut flags = vec![false; names.len()];
        for want in include {
            let want = want.as_ref();
            let j = names
                .iter()
                .position(|n| n == want)
                .ok_or_else(|| Error::UnknownControl(want.to_string()))?;
            flags[j] = true;
        }
        Ok(Self::new(flags))
    }

    /// Copy of `self` with control `j` excluded.
    pub fn without(&self, j: usize) -> Self {
        let mut s = self.clone();
        s.include[j] = false;
        s
    }

    pub fn len(&self) -> usize {
        self.include.len()
    }

    pub fn is_empty(&self) -> bool {
        self.include.is_empty()
    }

    pub fn flags(&self) -> &[bool] {
        &self.include
    }

    pub fn contains(&self, j: usize) -> bool {
        self.include[j]
    }

    /// q = number of included controls.
    pub fn q(&self) -> usize {
        self.include.iter().filter(|&&b| b).count()
    }

    pub fn is_full(&self) -> bool {
        self.include.iter().all(|&b| b)
    }

    pub fn included(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.include[j]).collect()
    }

    pub fn excluded(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.include[j]).collect()
    }

    /// Indices into ψ kept by the subset: 0 for the treatment, then `j + 1`
    /// for each included control.
    pub fn kept_coordinates(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain(self.included().into_iter().map(|j| j + 1))
            .collect()
    }

    /// Indices into ψ dropped by the subset.
    pub fn dropped_coordinates(&self) -> Vec<usize> {
        self.excluded().into_iter().map(|j| j + 1).collect()
    }

    /// Packed bitmask, usable as a cache key.
    pub fn bitmask(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.len().div_ceil(64)];
        for j in self.included() {
            words[j / 64] |= 1 << (j % 64);
        }
        words
    }

    pub fn check_len(&self, p: usize) -> Result<()> {
        if self.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Splits `W` into `W̃ = [Z X̃]` and the excluded columns `W†`, both in
/// original column order.
pub fn subset_design(ds: &Dataset, phi: &ControlSubset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    phi.check_len(ds.p())?;
    let n = ds.n();
    let inc = phi.included();
    let exc = phi.excluded();
    let mut wt = DMatrix::zeros(n, inc.len() + 1);
    wt.set_column(0, ds.z());
    for (k, &j) in inc.iter().enumerate() {
        wt.set_column(k + 1, &ds.x().column(j));
    }
    let mut wdag = DMatrix::zeros(n, exc.len());
    for (k, &j) in exc.iter().enumerate() {
        wdag.set_column(k, &ds.x().column(j));
    }
    Ok((wt, wdag))
}

/// Sufficient statistics of the outcome regression: `WᵀW`, `WᵀY`, `YᵀY`.
///
/// Every projection and refit is a function of these alone, so they are
/// what an artifact stores in place of the raw panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGram {
    pub n: usize,
    pub control_names: Vec<String>,
    /// Row-major `(p+1) × (p+1)`.
    gram: Vec<f64>,
    wty: Vec<f64>,
    yty: f64,
}

impl DesignGram {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let w = ds.design();
        let g = w.tr_mul(&w);
        let wty = w.tr_mul(ds.y());
        let m = g.nrows();
        let mut gram = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                // exact symmetry
                gram.push(if j >= i { g[(i, j)] } else { g[(j, i)] });
            }
        }
        Self {
            n: ds.n(),
            control_names: ds.control_names().to_vec(),
            gram,
            wty: wty.iter().copied().collect(),
            yty: ds.y().dot(ds.y()),
        }
    }

    pub fn p(&self) -> usize {
        self.control_names.len()
    }

    /// Shape, finiteness, and symmetry checks for statistics read from disk.
    pub fn validate(&self) -> Result<()> {
        let m = self.p() + 1;
        if self.gram.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                found: self.gram.len(),
            });
        }
        if self.wty.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: self.wty.len(),
            });
        }
        let finite =
            self.gram.iter().chain(&self.wty).all(|v| v.is_finite()) && self.yty.is_finite();
        if !finite {
            return Err(Error::Invalid(
                "design statistics contain non-finite values".into(),
            ));
        }
        if (0..m).any(|i| (0..i).any(|j| self.at(i, j) != self.at(j, i))) {
            return Err(Error::Invalid("Gram matrix is not symmetric".into()));
        }
        Ok(())
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.p() + 1;
        DMatrix::from_row_slice(m, m, &self.gram)
    }

    pub fn wty(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.wty)
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// Gram entry `(i, j)` of `W` (0 is the treatment).
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.gram[i * (self.p() + 1) + j]
    }

    /// `W̃ᵀW̃` for the coordinates kept by `phi`.
    pub fn sub_gram(&self, phi: &ControlSubset) -> DMatrix<f64> {
        let keep = phi.kept_coordinates();
        DMatrix::from_fn(keep.len(), keep.len(), |i, j| self.at(keep[i], keep[j]))
    }

    /// Factor of `W̃ᵀW̃`, mapping a failed pivot back to its column name.
    pub fn factor(&self, phi: &ControlSubset) -> Result<Cholesky> {
        phi.check_len(self.p())?;
        let keep = phi.kept_coordinates();
        Cholesky::factor(&self.sub_gram(phi)).map_err(|f| self.rank_error(&keep, f))
    }

    pub(crate) fn rank_error(&self, coords: &[usize], f: PivotFailure) -> Error {
        let c = coords[f.index];
        let column = if c == 0 {
            "treatment".to_string()
        } else {
            self.control_names[c - 1].clone()
        };
        Error::RankDeficient {
            column,
            pivot: f.pivot,
            threshold: f.threshold,
        }
    }
}
