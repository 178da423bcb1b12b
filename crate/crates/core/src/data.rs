//! Dataset representation, CSV ingestion, outcome standardization and
//! deterministic seeding.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Control,
    Treated,
}

impl Group {
    pub fn from_z(z: u8) -> Group {
        if z == 1 {
            Group::Treated
        } else {
            Group::Control
        }
    }

    pub fn z(self) -> u8 {
        match self {
            Group::Control => 0,
            Group::Treated => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Control => Group::Treated,
            Group::Treated => Group::Control,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Treated => "treated",
        }
    }
}

/// Covariates, binary treatment and outcome for `n` complete cases.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    z: Vec<u8>,
    y: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking shapes, binary treatment and finiteness.
    /// Empty treatment groups are allowed here; causal operations check them.
    pub fn new(x: DMatrix<f64>, z: Vec<u8>, y: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::ConfigInvalid(format!("need at least 2 rows, got {n}")));
        }
        if x.ncols() < 1 {
            return Err(Error::ConfigInvalid("need at least one covariate".into()));
        }
        if z.len() != n || y.len() != n {
            return Err(Error::ConfigInvalid("x, z and y lengths differ".into()));
        }
        if names.len() != x.ncols() {
            return Err(Error::ConfigInvalid("one name per covariate is required".into()));
        }
        if let Some(i) = z.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryTreatment(i + 1));
        }
        for i in 0..n {
            if !y[i].is_finite() {
                return Err(Error::MissingValue { row: i + 1, col: "y".into() });
            }
            for j in 0..x.ncols() {
                if !x[(i, j)].is_finite() {
                    return Err(Error::MissingValue { row: i + 1, col: names[j].clone() });
                }
            }
        }
        Ok(Dataset { x, z, y, names })
    }

    /// Covariate names `x1..xp`.
    pub fn default_names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("x{j}")).collect()
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn group(&self, i: usize) -> Group {
        Group::from_z(self.z[i])
    }

    pub fn indices_of(&self, g: Group) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.z[i] == g.z()).collect()
    }

    pub fn group_size(&self, g: Group) -> usize {
        self.z.iter().filter(|&&v| v == g.z()).count()
    }

    /// Fails with `EmptyGroup` unless both arms have at least one unit.
    pub fn require_both_groups(&self) -> Result<()> {
        if self.group_size(Group::Treated) == 0 || self.group_size(Group::Control) == 0 {
            return Err(Error::EmptyGroup);
        }
        Ok(())
    }

    /// Rows `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let z = rows.iter().map(|&i| self.z[i]).collect();
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Dataset::new(x, z, y, self.names.clone())
    }

    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.z.clone(), y, self.names.clone())
    }

    /// Writes the dataset with covariates first, then treatment and outcome.
    pub fn write_csv<W: Write>(&self, w: W, treatment_col: &str, outcome_col: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(treatment_col);
        header.push(outcome_col);
        wr.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.p() + 2);
        for i in 0..self.n() {
            rec.clear();
            for j in 0..self.p() {
                rec.push(self.x[(i, j)].to_string());
            }
            rec.push(self.z[i].to_string());
            rec.push(self.y[i].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, treatment_col: &str, outcome_col: &str) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), treatment_col, outcome_col)
    }
}

/// Loads a header-first CSV. Every column other than the treatment and outcome
/// becomes a covariate, in file order. Lines starting with `#` are comments.
pub fn load_csv(path: &Path, treatment_col: &str, outcome_col: &str) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_csv(f, treatment_col, outcome_col)
}

pub fn read_csv<R: Read>(r: R, treatment_col: &str, outcome_col: &str) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let z_col = find(treatment_col)?;
    let y_col = find(outcome_col)?;
    let cov_cols: Vec<usize> = (0..header.len()).filter(|&c| c != z_col && c != y_col).collect();
    if cov_cols.is_empty() {
        return Err(Error::ConfigInvalid("no covariate columns".into()));
    }

    let mut xs = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            rec.get(c)
                .filter(|s| !s.is_empty())
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MissingValue { row, col: header[c].clone() })
        };
        let zv = cell(z_col)?;
        if zv != 0.0 && zv != 1.0 {
            return Err(Error::NonBinaryTreatment(row));
        }
        z.push(zv as u8);
        y.push(cell(y_col)?);
        for &c in &cov_cols {
            xs.push(cell(c)?);
        }
    }
    let n = z.len();
    let x = DMatrix::from_row_slice(n, cov_cols.len(), &xs);
    let names = cov_cols.iter().map(|&c| header[c].clone()).collect();
    let d = Dataset::new(x, z, y, names)?;
    d.require_both_groups()?;
    Ok(d)
}

/// Affine map of the outcome onto `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeTransform {
    pub shift: f64,
    pub scale: f64,
}

impl OutcomeTransform {
    pub fn fit(y: &[f64]) -> Result<Self> {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::DegenerateOutcome);
        }
        Ok(OutcomeTransform { shift: 0.5 * (lo + hi), scale: hi - lo })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }
}

pub fn standardize_outcome(d: &Dataset) -> Result<(Dataset, OutcomeTransform)> {
    let t = OutcomeTransform::fit(d.y())?;
    let y = d.y().iter().map(|&v| t.apply(v)).collect();
    Ok((d.with_outcome(y)?, t))
}

/// Random stream identifiers split from a single seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    BartChain = 1,
    Dgp = 2,
    MatchTieBreak = 3,
    Calibration = 4,
}

/// Global 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream as u64);
        rng
    }

    /// Child seed for replication or cell `index` (splitmix64 mixing).
    pub fn derive(self, index: u64) -> Seed {
        let mut s = self.0 ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        s = (s ^ (s >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        s = (s ^ (s >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(s ^ (s >> 31))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn parse(s: &str) -> Result<Dataset> {
        read_csv(s.as_bytes(), "z", "y")
    }

    #[test]
    fn loads_small_file() {
        let d = parse("a,z,y,b\n1,0,2.5,3\n2,1,3.5,4\n3,0,1,5\n4,1,0,6\n").unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.p(), 2);
        assert_eq!(d.names(), ["a", "b"]);
        assert_eq!(d.group_size(Group::Treated), 2);
        assert_eq!(d.group_size(Group::Control), 2);
        assert_eq!(d.x()[(2, 1)], 5.0);
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let err = parse("a,z,y\n1,0,1\n2,1,2\n3,2,3\n").unwrap_err();
        assert!(matches!(err, Error::NonBinaryTreatment(3)));
    }

    #[test]
    fn rejects_missing_cells() {
        let err = parse("a,z,y\n1,0,1\n,1,2\n").unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 2, ref col } if col == "a"));
        let err = parse("a,z,y\n1,0,NA\n2,1,2\n").unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 1, ref col } if col == "y"));
    }

    #[test]
    fn missing_column_and_empty_group() {
        assert!(matches!(parse("a,z,out\n1,0,1\n").unwrap_err(), Error::MissingColumn(c) if c == "y"));
        assert!(matches!(parse("a,z,y\n1,0,1\n2,0,2\n").unwrap_err(), Error::EmptyGroup));
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let mut rng = Seed(11).rng(Stream::Dgp);
        let (n, p) = (100, 10);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 200.0 - 100.0);
        let z = (0..n).map(|i| (i % 2) as u8).collect();
        let y = (0..n).map(|_| rng.random::<f64>().ln()).collect();
        let d = Dataset::new(x, z, y, Dataset::default_names(p)).unwrap();
        let mut first = Vec::new();
        d.write_csv(&mut first, "z", "y").unwrap();
        let back = read_csv(first.as_slice(), "z", "y").unwrap();
        assert_eq!(back, d);
        let mut second = Vec::new();
        back.write_csv(&mut second, "z", "y").unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn standardize_two_points() {
        let d = Dataset::new(DMatrix::zeros(2, 1), vec![0, 1], vec![0.0, 10.0], vec!["a".into()]).unwrap();
        let (s, t) = standardize_outcome(&d).unwrap();
        assert_eq!(s.y(), [-0.5, 0.5]);
        assert_eq!(t, OutcomeTransform { shift: 5.0, scale: 10.0 });
    }

    #[test]
    fn standardize_constant_fails() {
        let d = Dataset::new(DMatrix::zeros(3, 1), vec![0, 1, 0], vec![1.0; 3], vec!["a".into()]).unwrap();
        assert!(matches!(standardize_outcome(&d), Err(Error::DegenerateOutcome)));
    }

    #[test]
    fn standardize_inverts() {
        let mut rng = Seed(3).rng(Stream::Dgp);
        let y: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 1e3 - 400.0).collect();
        let t = OutcomeTransform::fit(&y).unwrap();
        let err = y.iter().map(|&v| (t.inverse(t.apply(v)) - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12 * 1e3);
        let ys: Vec<f64> = y.iter().map(|&v| t.apply(v)).collect();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo + 0.5).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
    }

    #[test]
    fn seeds_are_reproducible_and_streams_differ() {
        let a: u64 = Seed(5).rng(Stream::BartChain).random();
        let b: u64 = Seed(5).rng(Stream::BartChain).random();
        let c: u64 = Seed(5).rng(Stream::Dgp).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(Seed(5).derive(0), Seed(5).derive(1));
    }
}
