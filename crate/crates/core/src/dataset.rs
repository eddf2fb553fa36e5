//! Response/covariate tables and pseudo-observation matrices.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::copula::UnitPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValues {
    Numeric(Vec<f64>),
    /// Level codes index into `levels`.
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), values: CovariateValues::Numeric(values) }
    }

    /// Builds a categorical column, assigning level codes in order of first appearance.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                match levels.iter().position(|x| x == l) {
                    Some(i) => i as u32,
                    None => {
                        levels.push(l.to_string());
                        (levels.len() - 1) as u32
                    }
                }
            })
            .collect();
        Self { name: name.into(), values: CovariateValues::Categorical { codes, levels } }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            CovariateValues::Numeric(v) => v.len(),
            CovariateValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> CovariateKind {
        match self.values {
            CovariateValues::Numeric(_) => CovariateKind::Numeric,
            CovariateValues::Categorical { .. } => CovariateKind::Categorical,
        }
    }

    pub fn info(&self) -> CovariateInfo {
        CovariateInfo {
            name: self.name.clone(),
            kind: self.kind(),
            levels: match &self.values {
                CovariateValues::Numeric(_) => None,
                CovariateValues::Categorical { levels, .. } => Some(levels.clone()),
            },
        }
    }

    pub fn value(&self, row: usize) -> CovariateValue {
        match &self.values {
            CovariateValues::Numeric(v) => CovariateValue::Numeric(v[row]),
            CovariateValues::Categorical { codes, levels } => {
                CovariateValue::Categorical(levels[codes[row] as usize].clone())
            }
        }
    }
}

/// Schema entry for one covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateInfo {
    pub name: String,
    pub kind: CovariateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

/// A single covariate value supplied for prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValue {
    Numeric(f64),
    Categorical(String),
}

/// `n` rows of responses (column-major) and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    responses: Vec<Vec<f64>>,
    response_names: Vec<String>,
    covariates: Vec<Covariate>,
    n: usize,
}

impl Dataset {
    pub fn new(responses: Vec<Vec<f64>>, covariates: Vec<Covariate>) -> Result<Self> {
        let names = (1..=responses.len()).map(|j| format!("y{j}")).collect();
        Self::with_names(responses, names, covariates)
    }

    pub fn with_names(
        responses: Vec<Vec<f64>>,
        response_names: Vec<String>,
        covariates: Vec<Covariate>,
    ) -> Result<Self> {
        let n = responses
            .first()
            .map(Vec::len)
            .or_else(|| covariates.first().map(Covariate::len))
            .unwrap_or(0);
        if n == 0 {
            return Err(Error::Input("dataset needs at least one row".into()));
        }
        if response_names.len() != responses.len() {
            return Err(Error::Input("response names do not match response columns".into()));
        }
        for (j, col) in responses.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Input(format!("response column {j} has {} rows, expected {n}", col.len())));
            }
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::Input(format!("response column {j} row {i} is missing or not finite")));
            }
        }
        for cov in &covariates {
            if cov.len() != n {
                return Err(Error::Input(format!("covariate `{}` has {} rows, expected {n}", cov.name, cov.len())));
            }
            match &cov.values {
                CovariateValues::Numeric(v) => {
                    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Input(format!("covariate `{}` row {i} is missing or not finite", cov.name)));
                    }
                }
                CovariateValues::Categorical { codes, levels } => {
                    if levels.is_empty() || codes.iter().any(|&c| c as usize >= levels.len()) {
                        return Err(Error::Input(format!("covariate `{}` has invalid level codes", cov.name)));
                    }
                }
            }
        }
        Ok(Self { responses, response_names, covariates, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of response columns.
    pub fn k(&self) -> usize {
        self.responses.len()
    }

    pub fn d(&self) -> usize {
        self.covariates.len()
    }

    pub fn response(&self, j: usize) -> &[f64] {
        &self.responses[j]
    }

    pub fn responses(&self) -> &[Vec<f64>] {
        &self.responses
    }

    pub fn response_names(&self) -> &[String] {
        &self.response_names
    }

    pub fn covariate(&self, j: usize) -> &Covariate {
        &self.covariates[j]
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn schema(&self) -> Vec<CovariateInfo> {
        self.covariates.iter().map(Covariate::info).collect()
    }

    pub fn covariate_row(&self, row: usize) -> Vec<CovariateValue> {
        self.covariates.iter().map(|c| c.value(row)).collect()
    }

    /// Copy of the selected rows, keeping level tables intact.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let responses = self.responses.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
        let covariates = self
            .covariates
            .iter()
            .map(|c| Covariate {
                name: c.name.clone(),
                values: match &c.values {
                    CovariateValues::Numeric(v) => CovariateValues::Numeric(rows.iter().map(|&i| v[i]).collect()),
                    CovariateValues::Categorical { codes, levels } => CovariateValues::Categorical {
                        codes: rows.iter().map(|&i| codes[i]).collect(),
                        levels: levels.clone(),
                    },
                },
            })
            .collect();
        Self { responses, response_names: self.response_names.clone(), covariates, n: rows.len() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PseudoMethod {
    /// True copula-scale observations (simulation only).
    Known,
    Empirical,
    Kernel { h: f64 },
    ParametricNormal,
    MarginTree,
    DiscreteModality,
}

/// Estimated probability-integral transforms, one column per response.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservations {
    columns: Vec<Vec<f64>>,
    method: PseudoMethod,
}

impl PseudoObservations {
    pub fn new(columns: Vec<Vec<f64>>, method: PseudoMethod) -> Result<Self> {
        let n = columns.first().map(Vec::len).unwrap_or(0);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Input("pseudo-observation columns differ in length".into()));
            }
            if let Some(i) = col.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(Error::Input(format!(
                    "pseudo-observation ({i}, {j}) = {} is not inside (0, 1)",
                    col[i]
                )));
            }
        }
        Ok(Self { columns, method })
    }

    pub fn from_pairs(pairs: &[UnitPair], method: PseudoMethod) -> Self {
        Self {
            columns: vec![pairs.iter().map(UnitPair::u).collect(), pairs.iter().map(UnitPair::v).collect()],
            method,
        }
    }

    pub fn n(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn method(&self) -> PseudoMethod {
        self.method
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Bivariate row `i`; requires k = 2.
    pub fn pair(&self, i: usize) -> UnitPair {
        UnitPair::new(self.columns[0][i], self.columns[1][i]).expect("validated on construction")
    }

    pub fn pairs(&self) -> Vec<UnitPair> {
        (0..self.n()).map(|i| self.pair(i)).collect()
    }

    /// Row-permuted copy: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            columns: self.columns.iter().map(|c| perm.iter().map(|&i| c[i]).collect()).collect(),
            method: self.method,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        self.permuted(rows)
    }
}

enum Column {
    Response(String),
    Covariate(String, CovariateKind),
    Ignored,
}

fn parse_header(h: &str) -> Result<Column> {
    if let Some(name) = h.strip_prefix("y_") {
        if !name.is_empty() {
            return Ok(Column::Response(name.to_string()));
        }
    } else if let Some(rest) = h.strip_prefix("x_") {
        let kind = match rest.rsplit_once(':') {
            Some((name, "num")) if !name.is_empty() => Some((name, CovariateKind::Numeric)),
            Some((name, "cat")) if !name.is_empty() => Some((name, CovariateKind::Categorical)),
            _ => None,
        };
        if let Some((name, kind)) = kind {
            return Ok(Column::Covariate(name.to_string(), kind));
        }
    } else if h == "row_id" {
        return Ok(Column::Ignored);
    }
    Err(Error::Schema(format!("column `{h}` is neither `y_<name>` nor `x_<name>:num|cat`")))
}

/// Reads a table whose header names responses `y_<name>` and covariates
/// `x_<name>:num` or `x_<name>:cat`; a `row_id` column is ignored and lines
/// starting with `#` are skipped. Covariate names drop the `x_` prefix.
pub fn read_csv<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let columns: Vec<Column> = rdr.headers()?.iter().map(parse_header).collect::<Result<_>>()?;
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); columns.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingestion { row: i + 1, msg: e.to_string() })?;
        for (j, v) in rec.iter().enumerate() {
            raw[j].push(v.to_string());
        }
    }
    let number = |j: usize, col: &[String]| -> Result<Vec<f64>> {
        col.iter()
            .enumerate()
            .map(|(i, v)| {
                v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Ingestion {
                    row: i + 1,
                    msg: format!("column {} value `{v}` is not a finite number", j + 1),
                })
            })
            .collect()
    };
    let (mut responses, mut names, mut covariates) = (Vec::new(), Vec::new(), Vec::new());
    for (j, (c, col)) in columns.into_iter().zip(&raw).enumerate() {
        match c {
            Column::Response(name) => {
                responses.push(number(j, col)?);
                names.push(name);
            }
            Column::Covariate(name, CovariateKind::Numeric) => covariates.push(Covariate::numeric(name, number(j, col)?)),
            Column::Covariate(name, CovariateKind::Categorical) => {
                if let Some(i) = col.iter().position(String::is_empty) {
                    return Err(Error::Ingestion { row: i + 1, msg: format!("empty level in column {}", j + 1) });
                }
                covariates.push(Covariate::categorical(name, col))
            }
            Column::Ignored => {}
        }
    }
    Dataset::with_names(responses, names, covariates)
}

/// Writes the layout accepted by [`read_csv`].
pub fn write_csv<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    let mut header: Vec<String> = data.response_names().iter().map(|n| format!("y_{n}")).collect();
    for c in data.covariates() {
        let t = match c.kind() {
            CovariateKind::Numeric => "num",
            CovariateKind::Categorical => "cat",
        };
        header.push(format!("x_{}:{t}", c.name));
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields: Vec<String> = data.responses().iter().map(|y| y[i].to_string()).collect();
        for v in data.covariate_row(i) {
            fields.push(match v {
                CovariateValue::Numeric(x) => x.to_string(),
                CovariateValue::Categorical(s) => s,
            });
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
