//! Bit-stable CSV output.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every f64 exactly; separators are `\n` on all platforms and
//! files end with a newline. Identical data therefore produces identical
//! bytes, which is what the determinism contract compares. Writers return
//! the data row count for the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// All-numeric table; one header line, then one row per record.
pub fn write_table<I>(path: &Path, header: &str, rows: I) -> Result<u64>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = create(path)?;
    writeln!(w, "{header}")?;
    let mut count = 0u64;
    for row in rows {
        let mut line = String::new();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&fmt(*v));
        }
        writeln!(w, "{line}")?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

/// Pre-rendered rows, for tables with non-numeric columns.
pub fn write_lines(path: &Path, header: &str, lines: &[String]) -> Result<u64> {
    let mut w = create(path)?;
    writeln!(w, "{header}")?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(lines.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [
            1.0 / 3.0,
            2.0 / 15.0,
            -9.81,
            1.2786711852544421,
            6.02e23,
            -1.5e-300,
            0.0,
        ] {
            let s = fmt(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let mantissa = s
                .trim_start_matches('-')
                .split('e')
                .next()
                .unwrap()
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn table_layout_and_row_count() {
        let dir = std::env::temp_dir().join("msgn_csvio_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let n = write_table(&path, "a,b", rows).unwrap();
        assert_eq!(n, 2);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "a,b");
        assert_eq!(lines.next().unwrap(), format!("{},{}", fmt(1.0), fmt(2.0)));
        assert!(text.ends_with('\n'));
        std::fs::remove_file(&path).ok();
    }
}
