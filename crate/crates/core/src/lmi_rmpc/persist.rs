//! Flat-file persistence of lookup tables.
//!
//! Versioned text format: a `RMPCLUT1` header carrying the state
//! dimension, entry count, sampling time, and digests, followed by one
//! record per entry with `Q`, `Q^-1`, `Y`, `K`, `gamma`, and the seed
//! state as row-major decimal text at 17 significant digits. Parsing a
//! saved table reproduces every gain bit-exactly.

use super::{EllipsoidEntry, LookupTable, TableMeta};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableFormatError {
    #[error("lookup-table format error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("lookup-table io error: {0}")]
    Io(#[from] std::io::Error),
}

const MAGIC: &str = "RMPCLUT1";

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    fn next(&mut self) -> Result<(usize, &'a str), TableFormatError> {
        for (idx, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if !line.is_empty() {
                return Ok((idx + 1, line));
            }
        }
        Err(TableFormatError::Parse {
            line: 0,
            msg: "unexpected end of file".to_string(),
        })
    }

    fn expect_tag(&mut self, tag: &str) -> Result<(usize, Vec<String>), TableFormatError> {
        let (ln, line) = self.next()?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        if head != tag {
            return Err(TableFormatError::Parse {
                line: ln,
                msg: format!("expected '{tag}', found '{head}'"),
            });
        }
        Ok((ln, parts.map(|s| s.to_string()).collect()))
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>, TableFormatError> {
        let (ln, line) = self.next()?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == count => Ok(v),
            Ok(v) => Err(TableFormatError::Parse {
                line: ln,
                msg: format!("expected {count} values, found {}", v.len()),
            }),
            Err(e) => Err(TableFormatError::Parse {
                line: ln,
                msg: format!("bad number: {e}"),
            }),
        }
    }
}

fn parse_one<T: std::str::FromStr>(
    parts: &[String],
    idx: usize,
    line: usize,
    what: &str,
) -> Result<T, TableFormatError> {
    parts
        .get(idx)
        .and_then(|s| s.parse::<T>().ok())
        .ok_or_else(|| TableFormatError::Parse {
            line,
            msg: format!("missing or malformed {what}"),
        })
}

impl LookupTable<f64> {
    pub fn to_text(&self) -> String {
        let n = self.meta.state_dim;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "dim {n}");
        let _ = writeln!(out, "entries {}", self.entries.len());
        let _ = writeln!(out, "ts {}", fmt17(self.meta.ts));
        let _ = writeln!(out, "weight_digest {:016x}", self.meta.weight_digest);
        let _ = writeln!(out, "polytope_digest {:016x}", self.meta.polytope_digest);
        match self.meta.truncated_at {
            Some(k) => {
                let _ = writeln!(out, "truncated_at {k}");
            }
            None => {
                let _ = writeln!(out, "truncated_at none");
            }
        }
        let write_matrix = |out: &mut String, name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(out, "{name}");
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| fmt17(m[(r, c)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        };
        for (k, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "entry {k}");
            let _ = writeln!(out, "gamma {}", fmt17(e.gamma));
            let seed: Vec<String> = e.seed_state.iter().map(|v| fmt17(*v)).collect();
            let _ = writeln!(out, "seed {}", seed.join(" "));
            write_matrix(&mut out, "Q", &e.q);
            write_matrix(&mut out, "Qinv", &e.q_inv);
            write_matrix(&mut out, "Y", &e.y);
            write_matrix(&mut out, "K", &e.k_gain);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TableFormatError> {
        let mut lines = Lines::new(text);
        let (ln, magic) = lines.next()?;
        if magic != MAGIC {
            return Err(TableFormatError::Parse {
                line: ln,
                msg: format!("bad magic '{magic}', expected '{MAGIC}'"),
            });
        }
        let (ln, parts) = lines.expect_tag("dim")?;
        let n: usize = parse_one(&parts, 0, ln, "dimension")?;
        let (ln, parts) = lines.expect_tag("entries")?;
        let count: usize = parse_one(&parts, 0, ln, "entry count")?;
        let (ln, parts) = lines.expect_tag("ts")?;
        let ts: f64 = parse_one(&parts, 0, ln, "sampling time")?;
        let (ln, parts) = lines.expect_tag("weight_digest")?;
        let weight_digest = u64::from_str_radix(
            parts.first().map(String::as_str).unwrap_or(""),
            16,
        )
        .map_err(|e| TableFormatError::Parse {
            line: ln,
            msg: format!("bad weight digest: {e}"),
        })?;
        let (ln, parts) = lines.expect_tag("polytope_digest")?;
        let polytope_digest = u64::from_str_radix(
            parts.first().map(String::as_str).unwrap_or(""),
            16,
        )
        .map_err(|e| TableFormatError::Parse {
            line: ln,
            msg: format!("bad polytope digest: {e}"),
        })?;
        let (ln, parts) = lines.expect_tag("truncated_at")?;
        let truncated_at = match parts.first().map(String::as_str) {
            Some("none") => None,
            Some(s) => Some(s.parse::<usize>().map_err(|e| TableFormatError::Parse {
                line: ln,
                msg: format!("bad truncation index: {e}"),
            })?),
            None => {
                return Err(TableFormatError::Parse {
                    line: ln,
                    msg: "missing truncation index".to_string(),
                })
            }
        };

        let read_matrix =
            |lines: &mut Lines, name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>, TableFormatError> {
                lines.expect_tag(name)?;
                let mut m = DMatrix::zeros(rows, cols);
                for r in 0..rows {
                    let vals = lines.floats(cols)?;
                    for c in 0..cols {
                        m[(r, c)] = vals[c];
                    }
                }
                Ok(m)
            };

        let mut entries = Vec::with_capacity(count);
        for k in 0..count {
            let (ln, parts) = lines.expect_tag("entry")?;
            let idx: usize = parse_one(&parts, 0, ln, "entry index")?;
            if idx != k {
                return Err(TableFormatError::Parse {
                    line: ln,
                    msg: format!("entry index {idx} out of order, expected {k}"),
                });
            }
            let (ln, parts) = lines.expect_tag("gamma")?;
            let gamma: f64 = parse_one(&parts, 0, ln, "gamma")?;
            let (ln, parts) = lines.expect_tag("seed")?;
            if parts.len() != n {
                return Err(TableFormatError::Parse {
                    line: ln,
                    msg: format!("seed needs {n} values, found {}", parts.len()),
                });
            }
            let mut seed = DVector::zeros(n);
            for (i, p) in parts.iter().enumerate() {
                seed[i] = p.parse::<f64>().map_err(|e| TableFormatError::Parse {
                    line: ln,
                    msg: format!("bad seed value: {e}"),
                })?;
            }
            let q = read_matrix(&mut lines, "Q", n, n)?;
            let q_inv = read_matrix(&mut lines, "Qinv", n, n)?;
            let y = read_matrix(&mut lines, "Y", 1, n)?;
            let k_gain = read_matrix(&mut lines, "K", 1, n)?;
            entries.push(EllipsoidEntry {
                q,
                q_inv,
                y,
                k_gain,
                gamma,
                seed_state: seed,
            });
        }

        Ok(LookupTable {
            entries,
            meta: TableMeta {
                state_dim: n,
                ts,
                weight_digest,
                polytope_digest,
                truncated_at,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TableFormatError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TableFormatError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_offline_table, synthesis_vertex_set, RmpcWeights, REFERENCE_FORGETTING};
    use super::*;
    use crate::sdp::SdpSettings;
    use crate::vehicle_model::{polytope_vertices, ChassisParams, UncertaintyBox};

    fn sample_table() -> LookupTable<f64> {
        let p = ChassisParams::default_sedan();
        let u = UncertaintyBox::new(1.3, p.c_f, p.c_r).unwrap();
        let poly = polytope_vertices(&p, &u, 0.01).unwrap();
        let vs = synthesis_vertex_set(&poly, REFERENCE_FORGETTING);
        let w = RmpcWeights::default_augmented();
        let xi0 = DVector::from_vec(vec![1.0, 0.0, 0.1, 0.0, 0.0, 0.05]);
        build_offline_table(&xi0, 2, &vs, &w, 0.85, 0.01, &SdpSettings::default()).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let table = sample_table();
        let text = table.to_text();
        assert!(text.starts_with("RMPCLUT1\n"));
        let parsed = LookupTable::from_text(&text).unwrap();
        assert_eq!(parsed.meta, table.meta);
        assert_eq!(parsed.entries.len(), table.entries.len());
        for (a, b) in table.entries.iter().zip(parsed.entries.iter()) {
            assert!(a.q == b.q, "Q must round-trip bit-exactly");
            assert!(a.q_inv == b.q_inv);
            assert!(a.y == b.y);
            assert!(a.k_gain == b.k_gain, "gains must round-trip bit-exactly");
            assert!(a.gamma == b.gamma);
            assert!(a.seed_state == b.seed_state);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(
            LookupTable::from_text("NOPE\n"),
            Err(TableFormatError::Parse { .. })
        ));
        let table = sample_table();
        let text = table.to_text();
        let cut: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(LookupTable::from_text(&cut).is_err());
    }
}
