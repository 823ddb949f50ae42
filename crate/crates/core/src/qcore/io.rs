//! JSON state files:
//!
//! ```text
//! {"dims": [dA, dB], "matrix": [[[re, im], ...], ...]}
//! ```
//!
//! Single-system states use `"dims": [d]`. Bases use the same layout with
//! only the `"matrix"` key. Numbers are written with 17 significant digits.

use std::fmt::Write as _;

use serde::Deserialize;

use super::{c, BipartiteState, ComplexMatrix, DensityMatrix, LocalBasis};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LoadedState {
    Single(DensityMatrix),
    Bipartite(BipartiteState),
}

impl LoadedState {
    pub fn into_bipartite(self) -> Result<BipartiteState> {
        match self {
            LoadedState::Bipartite(s) => Ok(s),
            LoadedState::Single(_) => {
                Err(Error::Format("field `dims`: expected two subsystem dimensions".into()))
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    dims: Vec<usize>,
    matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisFile {
    matrix: Vec<Vec<[f64; 2]>>,
}

fn parse_matrix(rows: &[Vec<[f64; 2]>], expected: usize) -> Result<ComplexMatrix> {
    if rows.len() != expected {
        return Err(Error::Format(format!(
            "field `matrix`: {} rows, expected {expected}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != expected {
            return Err(Error::Format(format!(
                "field `matrix`: row {i} has {} entries, expected {expected}",
                row.len()
            )));
        }
    }
    Ok(ComplexMatrix::from_fn(expected, expected, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(format!("line {}, column {}: {e}", e.line(), e.column()))
}

pub fn read_state(text: &str) -> Result<LoadedState> {
    let file: StateFile = serde_json::from_str(text).map_err(json_err)?;
    let dim = match file.dims.as_slice() {
        [d] | [d, 1] if *d > 0 => *d,
        [da, db] if *da > 0 && *db > 0 => da * db,
        _ => {
            return Err(Error::Format(format!(
                "field `dims`: expected [d] or [dA, dB] with positive entries, got {:?}",
                file.dims
            )))
        }
    };
    let m = parse_matrix(&file.matrix, dim)?;
    let rho = DensityMatrix::new(m).map_err(|e| Error::Format(format!("field `matrix`: {e}")))?;
    match file.dims.as_slice() {
        [_] => Ok(LoadedState::Single(rho)),
        [da, db] => Ok(LoadedState::Bipartite(BipartiteState::new(rho, *da, *db)?)),
        _ => unreachable!(),
    }
}

pub fn read_basis(text: &str) -> Result<LocalBasis> {
    let file: BasisFile = serde_json::from_str(text).map_err(json_err)?;
    let m = parse_matrix(&file.matrix, file.matrix.len())?;
    LocalBasis::new(m).map_err(|e| Error::Format(format!("field `matrix`: {e}")))
}

fn push_number(out: &mut String, x: f64) {
    // 17 significant digits round-trip every f64
    write!(out, "{x:.16e}").unwrap();
}

fn push_matrix(out: &mut String, m: &ComplexMatrix) {
    out.push('[');
    for i in 0..m.nrows() {
        if i > 0 {
            out.push_str(",\n  ");
        }
        out.push('[');
        for j in 0..m.ncols() {
            if j > 0 {
                out.push_str(", ");
            }
            out.push('[');
            push_number(out, m[(i, j)].re);
            out.push_str(", ");
            push_number(out, m[(i, j)].im);
            out.push(']');
        }
        out.push(']');
    }
    out.push(']');
}

fn write_with_dims(dims: &[usize], m: &ComplexMatrix) -> String {
    let mut out = String::new();
    let dims: Vec<String> = dims.iter().map(ToString::to_string).collect();
    write!(out, "{{\"dims\": [{}],\n \"matrix\": ", dims.join(", ")).unwrap();
    push_matrix(&mut out, m);
    out.push_str("}\n");
    out
}

pub fn write_bipartite(s: &BipartiteState) -> String {
    write_with_dims(&[s.dim_a(), s.dim_b()], s.matrix())
}

pub fn write_single(rho: &DensityMatrix) -> String {
    write_with_dims(&[rho.dim()], rho.matrix())
}

pub fn write_basis(b: &LocalBasis) -> String {
    let mut out = String::from("{\"matrix\": ");
    push_matrix(&mut out, b.unitary());
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{haar_unitary, random_density};
    use proptest::prelude::*;

    #[test]
    fn reads_bell_state() {
        let text = r#"{"dims": [2, 2], "matrix": [
            [[0.5, 0], [0, 0], [0, 0], [0.5, 0]],
            [[0, 0], [0, 0], [0, 0], [0, 0]],
            [[0, 0], [0, 0], [0, 0], [0, 0]],
            [[0.5, 0], [0, 0], [0, 0], [0.5, 0]]]}"#;
        let s = read_state(text).unwrap().into_bipartite().unwrap();
        assert_eq!(s.dims(), (2, 2));
        assert_eq!(s.element(0, 0, 1, 1), c(0.5, 0.0));
    }

    #[test]
    fn single_system_state() {
        let text = r#"{"dims": [2], "matrix": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]]}"#;
        assert!(matches!(read_state(text).unwrap(), LoadedState::Single(_)));
    }

    #[test]
    fn diagnostics_name_the_problem() {
        let short_row = r#"{"dims": [2], "matrix": [[[1, 0]], [[0, 0], [0, 0]]]}"#;
        let msg = read_state(short_row).unwrap_err().to_string();
        assert!(msg.contains("row 0"), "{msg}");

        let syntax = "{\"dims\": [2],\n \"matrix\": [[[1, 0] [0, 0]]]}";
        let msg = read_state(syntax).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");

        let missing = r#"{"matrix": []}"#;
        let msg = read_state(missing).unwrap_err().to_string();
        assert!(msg.contains("dims"), "{msg}");

        let unphysical = r#"{"dims": [2], "matrix": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}"#;
        let msg = read_state(unphysical).unwrap_err().to_string();
        assert!(msg.contains("trace"), "{msg}");
    }

    #[test]
    fn writer_uses_seventeen_significant_digits() {
        let text = write_single(&DensityMatrix::maximally_mixed(2));
        assert!(text.contains("5.0000000000000000e-1"), "{text}");
    }

    #[test]
    fn basis_round_trip() {
        let b = LocalBasis::new(haar_unitary(3, 8)).unwrap();
        assert_eq!(read_basis(&write_basis(&b)).unwrap(), b);
    }

    proptest! {
        #[test]
        fn state_round_trip_is_lossless(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
            let rho = random_density(da * db, seed);
            let s = BipartiteState::new(rho, da, db).unwrap();
            let back = read_state(&write_bipartite(&s)).unwrap().into_bipartite().unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
