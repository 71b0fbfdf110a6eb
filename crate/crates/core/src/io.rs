//! File formats: system and perturbation JSON, number formatting, atomic writes.
//!
//! Matrices are nested row-major arrays. Indices in files are one-based.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{LinearSystem, Perturbation, ReleaseMap};

/// Significant digits used for every number written by the tools.
pub const SIG_DIGITS: usize = 12;

/// Round to [`SIG_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIG_DIGITS - 1, v).parse().unwrap_or(v)
}

/// Shortest text for `v` after rounding to 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{}", round_sig(v))
}

/// Round every float inside a JSON value. Non-finite numbers become null in
/// serde_json already, so only finite values are touched.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().unwrap_or(0.0));
            serde_json::Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = round_json(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], r: usize, c: usize, name: &str) -> Result<Matrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{name} must be {r}x{c}")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// On-disk layout of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    /// Release map; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<Vec<f64>>>,
    /// One-based indices of control inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_inputs: Option<Vec<usize>>,
}

impl SystemFile {
    pub fn from_model(sys: &LinearSystem, rel: &ReleaseMap) -> Self {
        let q = sys.q();
        let identity = rel.pi == Matrix::identity(q, q);
        Self {
            n: sys.n(),
            p: sys.p(),
            q,
            a: rows_of(&sys.a),
            b: rows_of(&sys.b),
            g: rows_of(&sys.g),
            h: rows_of(&sys.h),
            pi: (!identity).then(|| rows_of(&rel.pi)),
            control_inputs: sys
                .control_inputs
                .as_ref()
                .map(|c| c.iter().map(|j| j + 1).collect()),
        }
    }

    pub fn to_model(&self) -> Result<(LinearSystem, ReleaseMap)> {
        let (n, p, q) = (self.n, self.p, self.q);
        let mut sys = LinearSystem::new(
            matrix_from_rows(&self.a, n, n, "A")?,
            matrix_from_rows(&self.b, n, p, "B")?,
            matrix_from_rows(&self.g, q, n, "G")?,
            matrix_from_rows(&self.h, q, p, "H")?,
        )?;
        if let Some(ctrl) = &self.control_inputs {
            if ctrl.iter().any(|&j| j == 0 || j > p) {
                return Err(Error::InvalidArgument(format!(
                    "control_inputs must lie in 1..={p}"
                )));
            }
            sys = sys.with_control_inputs(ctrl.iter().map(|j| j - 1).collect())?;
        }
        let rel = match &self.pi {
            None => ReleaseMap::identity(q),
            Some(rows) => {
                let l = rows.first().map_or(0, Vec::len);
                ReleaseMap::new(matrix_from_rows(rows, q, l, "pi")?)
            }
        };
        rel.validate(&sys)?;
        Ok((sys, rel))
    }
}

/// Read a whole file, naming it in the error.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

pub fn load_system(path: &Path) -> Result<(LinearSystem, ReleaseMap)> {
    let text = read_text(path)?;
    parse_system(&text)
}

pub fn parse_system(text: &str) -> Result<(LinearSystem, ReleaseMap)> {
    let file: SystemFile = serde_json::from_str(text)?;
    file.to_model()
}

pub fn save_system(path: &Path, sys: &LinearSystem, rel: &ReleaseMap) -> Result<()> {
    let s = to_json_string(&SystemFile::from_model(sys, rel))?;
    write_atomic(path, s.as_bytes())
}

/// On-disk layout of a perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFile {
    pub n: usize,
    pub p: usize,
    pub l: usize,
    #[serde(rename = "K_SS")]
    pub k_ss: Vec<Vec<f64>>,
    #[serde(rename = "K_SI")]
    pub k_si: Vec<Vec<f64>>,
    #[serde(rename = "K_OS")]
    pub k_os: Vec<Vec<f64>>,
    #[serde(rename = "K_OI")]
    pub k_oi: Vec<Vec<f64>>,
}

impl PerturbationFile {
    pub fn from_model(k: &Perturbation) -> Self {
        Self {
            n: k.n(),
            p: k.p(),
            l: k.l(),
            k_ss: rows_of(&k.k_ss),
            k_si: rows_of(&k.k_si),
            k_os: rows_of(&k.k_os),
            k_oi: rows_of(&k.k_oi),
        }
    }

    pub fn to_model(&self) -> Result<Perturbation> {
        let (n, p, l) = (self.n, self.p, self.l);
        Ok(Perturbation {
            k_ss: matrix_from_rows(&self.k_ss, p, n, "K_SS")?,
            k_si: matrix_from_rows(&self.k_si, p, p, "K_SI")?,
            k_os: matrix_from_rows(&self.k_os, l, n, "K_OS")?,
            k_oi: matrix_from_rows(&self.k_oi, l, p, "K_OI")?,
        })
    }
}

pub fn load_perturbation(path: &Path) -> Result<Perturbation> {
    let text = read_text(path)?;
    let file: PerturbationFile = serde_json::from_str(&text)?;
    file.to_model()
}

/// Saved without rounding so a reloaded `K` reproduces the design exactly.
pub fn save_perturbation(path: &Path, k: &Perturbation) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&PerturbationFile::from_model(k))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn system_round_trip() {
        let sys = LinearSystem::new(
            Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.9]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
            Matrix::from_row_slice(1, 2, &[0.3, 0.0]),
        )
        .unwrap()
        .with_control_inputs(vec![1])
        .unwrap();
        let rel = ReleaseMap::identity(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sys.json");
        save_system(&path, &sys, &rel).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"control_inputs\": [\n    2\n  ]"));
        let (back, rel2) = load_system(&path).unwrap();
        assert_eq!(back, sys);
        assert_eq!(rel2, rel);
    }

    #[test]
    fn malformed_system_is_rejected() {
        let bad = r#"{"n":2,"p":1,"q":1,"A":[[1]],"B":[[1],[1]],"G":[[1,1]],"H":[[1]]}"#;
        assert!(matches!(parse_system(bad), Err(Error::Dimension(_))));
        assert!(parse_system("{").is_err());
    }

    #[test]
    fn perturbation_round_trip() {
        let mut k = Perturbation::zeros(2, 1, 1);
        k.k_ss[(0, 1)] = 1.0 / 3.0;
        k.k_oi[(0, 0)] = -2.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        save_perturbation(&path, &k).unwrap();
        assert_eq!(load_perturbation(&path).unwrap(), k);
    }
}
