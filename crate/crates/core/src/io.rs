//! Plain-text output helpers: a `# ` comment line, comma-separated rows and
//! a float format that round-trips and stays compact at any magnitude.

use std::io::Write;

use crate::error::Result;

/// Shortest round-tripping representation; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `# <line>` for every line of `comment`; nothing for an empty comment.
pub fn write_comment<W: Write>(w: &mut W, comment: &str) -> Result<()> {
    for line in comment.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub fn write_row<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let cells: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(w, "{}", cells.join(","))?;
    Ok(())
}

/// A full table: comment, header, then one row per entry of `rows`.
pub fn write_table<W: Write>(w: &mut W, comment: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_comment(w, comment)?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        write_row(w, &row)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-300, 3.3e20, 0.1 + 0.2, f64::MIN_POSITIVE, 12345.678] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            assert!(s.len() < 30, "{s}");
        }
    }

    #[test]
    fn table_layout() {
        let mut buf = Vec::new();
        write_table(&mut buf, "a\nb", &["x", "y"], vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# a\n# b\nx,y\n1,2\n");
    }
}
