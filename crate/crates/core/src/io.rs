//! Output files: kernel CSVs and JSON documents, with every number printed
//! to 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::fields::Field;
use crate::lattice::centered_coord;
use crate::sampling::CovarianceEstimate;
use crate::spectral::Kernel;

/// Formats `v` with 17 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_number(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as JSON; non-finite numbers become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    value.serialize(&mut ser).map_err(std::io::Error::from)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("JSON output is UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

fn coord_header(dim: usize) -> String {
    (1..=dim).map(|i| format!("x_{i}")).collect::<Vec<_>>().join(",")
}

fn centered(kernel_geometry: &crate::lattice::TorusGeometry, site: usize) -> String {
    let side = kernel_geometry.side();
    kernel_geometry
        .coords(site)
        .into_iter()
        .map(|c| centered_coord(c, side).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Kernel CSV: `x_1..x_d,r,s,value` per site in storage order, with
/// centered coordinates and 0-based components.
pub fn write_kernel_csv(path: &Path, kernel: &Kernel) -> Result<()> {
    let g = kernel.geometry();
    let m = g.components();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},r,s,value", coord_header(g.dim()))?;
    for site in 0..g.site_count() {
        let x = centered(g, site);
        for r in 0..m {
            for s in 0..m {
                writeln!(w, "{x},{r},{s},{}", format_number(kernel.entry(site, r, s)))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Covariance estimate in kernel layout with an extra `std_error` column.
/// For gradient estimates `r` and `s` are channels `component·d + axis`.
pub fn write_covariance_csv(path: &Path, est: &CovarianceEstimate) -> Result<()> {
    let g = &est.geometry;
    let w2 = est.width;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},r,s,value,std_error", coord_header(g.dim()))?;
    for site in 0..g.site_count() {
        let x = centered(g, site);
        for r in 0..w2 {
            for s in 0..w2 {
                writeln!(
                    w,
                    "{x},{r},{s},{},{}",
                    format_number(est.mean_at(site, r, s)),
                    format_number(est.std_error_at(site, r, s))
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Field samples: `sample,x_1..x_d,v_1..v_m`, one row per sample and site.
pub fn write_samples_csv(path: &Path, samples: &[(u64, Field)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let Some((_, first)) = samples.first() else {
        w.flush()?;
        return Ok(());
    };
    let g = *first.geometry();
    let values = (1..=g.components()).map(|i| format!("v_{i}")).collect::<Vec<_>>().join(",");
    writeln!(w, "sample,{},{values}", coord_header(g.dim()))?;
    for (index, field) in samples {
        for site in 0..g.site_count() {
            let v = (0..g.components())
                .map(|r| format_number(field.value(site, r).re))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(w, "{index},{},{v}", centered(&g, site))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Generic CSV with a header and preformatted rows.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TorusGeometry;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(2.0 / 9.0).parse::<f64>().unwrap(), 2.0 / 9.0);
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: f64,
            n: usize,
        }
        let s = to_json(&S { a: 0.25, b: f64::NAN, n: 3 }).unwrap();
        assert_eq!(s, "{\"a\":2.5000000000000000e-1,\"b\":null,\"n\":3}\n");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"], 0.25);
    }

    #[test]
    fn kernel_csv_layout() {
        let g = TorusGeometry::new(2, 1, 3, 1).unwrap();
        let k = Kernel::from_values(&g, (0..9).map(|v| v as f64).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        write_kernel_csv(&path, &k).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_1,x_2,r,s,value");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[3], "0,-1,0,0,2.0000000000000000e0");
    }
}
