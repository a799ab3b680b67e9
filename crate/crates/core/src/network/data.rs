use std::path::Path;

use super::NetworkParams;
use crate::error::{Error, Result};
use crate::numerics::{min_singular_value, norm2, Matrix, RngStream};

pub const INPUT_STREAM: u64 = 1000;
pub const LABEL_STREAM: u64 = 1001;

/// Regularity requirements on the training inputs: norms in `(c, 1/c]`
/// and every small subset of distinct inputs linearly independent with
/// smallest singular value at least `min_singular`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputAssumptions {
    pub c: f64,
    /// Largest subset size checked.
    pub subset_cap: usize,
    pub min_singular: f64,
}

impl Default for InputAssumptions {
    fn default() -> Self {
        Self { c: 0.5, subset_cap: 4, min_singular: 1e-3 }
    }
}

/// Training inputs `x_α ∈ R^d` with scalar labels `y_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl DataSet {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("data set is empty"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::invalid(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        let d = inputs[0].len();
        if d == 0 {
            return Err(Error::invalid("inputs must have dimension >= 1"));
        }
        if let Some(i) = inputs.iter().position(|x| x.len() != d) {
            return Err(Error::invalid(format!("row {i} has dimension {}, expected {d}", inputs[i].len())));
        }
        if inputs.iter().flatten().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contains non-finite values"));
        }
        Ok(Self { inputs, labels })
    }

    /// `n` inputs drawn uniformly on the unit sphere of `R^d` and labels
    /// `y ~ N(0, 1)`, from streams `(seed, INPUT_STREAM)` and `(seed, LABEL_STREAM)`.
    pub fn synthetic(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("synthetic data needs n, d >= 1"));
        }
        let mut rng = RngStream::new(seed, INPUT_STREAM);
        let mut inputs = Vec::with_capacity(n);
        while inputs.len() < n {
            let v = rng.gaussian_vec(d, 1.0);
            let norm = norm2(&v);
            if norm > 1e-8 {
                inputs.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let labels = RngStream::new(seed, LABEL_STREAM).gaussian_vec(n, 1.0);
        Self::new(inputs, labels)
    }

    /// Replaces the labels with the outputs of a teacher network.
    pub fn with_teacher_labels(mut self, teacher: &NetworkParams) -> Result<Self> {
        self.labels = teacher.outputs(&self)?;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::invalid("label count mismatch"));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn d(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Checks the norm bracket and the subset independence condition,
    /// collecting one message per violation.
    pub fn validate(&self, rules: &InputAssumptions) -> Result<()> {
        let mut problems = Vec::new();
        for (i, x) in self.inputs.iter().enumerate() {
            let nx = norm2(x);
            if !(nx > rules.c && nx <= 1.0 / rules.c) {
                problems.push(format!("row {i}: norm {nx:.6} outside ({}, {}]", rules.c, 1.0 / rules.c));
            }
        }
        let cap = rules.subset_cap.min(self.n());
        for r in 2..=cap {
            for subset in combinations(self.n(), r) {
                let sigma = if r > self.d() {
                    0.0
                } else {
                    let cols: Vec<Vec<f64>> = subset.iter().map(|&i| self.inputs[i].clone()).collect();
                    // rows are the inputs; singular values are those of [x_a1 … x_ar]
                    min_singular_value(&Matrix::from_rows(&cols)?)?
                };
                if sigma < rules.min_singular {
                    problems.push(format!(
                        "rows {subset:?}: smallest singular value {sigma:.3e} below {:e}",
                        rules.min_singular
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::DataViolation(problems))
        }
    }

    /// Rescales every input to unit norm unless all already sit inside the
    /// norm bracket. Zero rows cannot be rescaled and are reported.
    pub fn normalized(mut self, rules: &InputAssumptions) -> Result<Self> {
        let inside = self.inputs.iter().all(|x| {
            let nx = norm2(x);
            nx > rules.c && nx <= 1.0 / rules.c
        });
        if inside {
            return Ok(self);
        }
        let zero: Vec<String> = self
            .inputs
            .iter()
            .enumerate()
            .filter(|(_, x)| norm2(x) == 0.0)
            .map(|(i, _)| format!("row {i}: zero input cannot be normalized"))
            .collect();
        if !zero.is_empty() {
            return Err(Error::DataViolation(zero));
        }
        for x in &mut self.inputs {
            let nx = norm2(x);
            x.iter_mut().for_each(|v| *v /= nx);
        }
        Ok(self)
    }

    /// Reads `x_1, …, x_d, y` rows (header required), normalizes and validates.
    pub fn from_csv(path: &Path, rules: &InputAssumptions) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let width = headers.len();
        if width < 2 || headers.get(width - 1) != Some("y") {
            return Err(Error::Parse { path: path.to_path_buf(), line: 1, msg: "header must be x_1,...,x_d,y".into() });
        }
        for (j, h) in headers.iter().take(width - 1).enumerate() {
            if h != format!("x_{}", j + 1) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: format!("column {} should be named x_{}, found `{h}`", j + 1, j + 1),
                });
            }
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = row + 2;
            let values: Vec<f64> = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("row {row}: `{field}` is not a number"),
                    })
                })
                .collect::<Result<_>>()?;
            labels.push(values[width - 1]);
            inputs.push(values[..width - 1].to_vec());
        }
        let data = Self::new(inputs, labels)?.normalized(rules)?;
        data.validate(rules)?;
        Ok(data)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.d()).map(|j| format!("x_{j}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",y\n");
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            for v in x {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{y}\n"));
        }
        out
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { path: path.to_path_buf(), line, msg: e.to_string() }
}

/// All increasing `r`-subsets of `0..n`.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = r;
        while i > 0 && idx[i - 1] == n - r + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(6, 4).len(), 15);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn synthetic_data_is_valid() {
        let data = DataSet::synthetic(4, 8, 3).unwrap();
        assert_eq!((data.n(), data.d()), (4, 8));
        data.validate(&InputAssumptions::default()).unwrap();
        assert_eq!(data, DataSet::synthetic(4, 8, 3).unwrap());
    }

    #[test]
    fn violations_name_rows() {
        let data = DataSet::new(vec![vec![1.0, 0.0], vec![3.0, 0.0], vec![0.0, 1.0]], vec![0.0; 3]).unwrap();
        let Err(Error::DataViolation(msgs)) = data.validate(&InputAssumptions::default()) else {
            panic!("expected violation");
        };
        assert!(msgs.iter().any(|m| m.starts_with("row 1: norm")));
        assert!(msgs.iter().any(|m| m.contains("[0, 1]")));
        // three vectors in R^2 are never independent
        assert!(msgs.iter().any(|m| m.contains("[0, 1, 2]")));
    }

    #[test]
    fn csv_round_trip_and_normalization() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x_1,x_2,x_3,y").unwrap();
        writeln!(f, "3.0,0,0,1.5").unwrap();
        writeln!(f, "0,4.0,0,-0.5").unwrap();
        let data = DataSet::from_csv(f.path(), &InputAssumptions::default()).unwrap();
        assert_eq!(data.inputs()[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(data.inputs()[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(data.labels(), &[1.5, -0.5]);

        let mut g = tempfile::NamedTempFile::new().unwrap();
        g.write_all(data.to_csv_string().as_bytes()).unwrap();
        assert_eq!(DataSet::from_csv(g.path(), &InputAssumptions::default()).unwrap(), data);
    }

    #[test]
    fn csv_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b").unwrap();
        writeln!(f, "1,2").unwrap();
        assert!(matches!(DataSet::from_csv(f.path(), &InputAssumptions::default()), Err(Error::Parse { line: 1, .. })));
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "x_1,y").unwrap();
        writeln!(g, "1,2").unwrap();
        writeln!(g, "oops,2").unwrap();
        assert!(matches!(DataSet::from_csv(g.path(), &InputAssumptions::default()), Err(Error::Parse { line: 3, .. })));
        let mut z = tempfile::NamedTempFile::new().unwrap();
        writeln!(z, "x_1,x_2,y").unwrap();
        writeln!(z, "0,0,1").unwrap();
        writeln!(z, "5,0,1").unwrap();
        assert!(matches!(DataSet::from_csv(z.path(), &InputAssumptions::default()), Err(Error::DataViolation(_))));
    }
}
