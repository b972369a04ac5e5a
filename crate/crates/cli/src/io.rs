use crate::{CliResult, Failure};
use qls_core::field::{BoundaryKind, FieldState, Grid};
use qls_core::model::ModelDescriptor;
use qls_core::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // NaN / inf spelled the way most CSV readers accept
        format!("{v}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub model: Option<ModelDescriptor>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn start(command_line: Vec<String>) -> Self {
        Self {
            command_line,
            model: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.push(OutputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn finish(&mut self, path: &Path) -> CliResult<()> {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// CSV destination: a file (recorded in the manifest) or standard output.
pub struct Table {
    writer: csv::Writer<Box<dyn Write>>,
    path: Option<PathBuf>,
}

impl Table {
    pub fn create(path: Option<&Path>, header: &[&str]) -> CliResult<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
            None => Box::new(std::io::stdout().lock()),
        };
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(header)?;
        Ok(Self {
            writer,
            path: path.map(Path::to_path_buf),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self, manifest: &mut RunManifest) -> CliResult<()> {
        self.writer.flush()?;
        drop(self.writer);
        if let Some(p) = &self.path {
            manifest.record(p)?;
        }
        Ok(())
    }
}

/// Writes JSON to a file (recorded) or standard output.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>, manifest: &mut RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => {
            std::fs::write(p, text)?;
            manifest.record(p)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Field CSV with columns `x, re, im` on a uniform grid.
pub fn read_field(path: &Path, r0: f64, boundary: BoundaryKind) -> CliResult<FieldState> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Failure::validation(format!("{}: missing column '{name}'", path.display())))
    };
    let (cx, cr, ci) = (col("x")?, col("re")?, col("im")?);
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = xs.len() + 2;
        let get = |k: usize| -> CliResult<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Failure::validation(format!("{}: bad number in row {}", path.display(), row)))
        };
        xs.push(get(cx)?);
        vals.push(Complex64::new(get(cr)?, get(ci)?));
    }
    if xs.len() < 16 {
        return Err(Failure::validation("field CSV needs at least 16 rows"));
    }
    let n = xs.len();
    let dx = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    if !(dx > 0.0) {
        return Err(Failure::validation("field abscissae must increase"));
    }
    for (j, x) in xs.iter().enumerate() {
        if (x - (xs[0] + j as f64 * dx)).abs() > 1e-9 * dx.max(1.0) {
            return Err(Failure::validation(format!(
                "field grid is not uniform at row {}",
                j + 2
            )));
        }
    }
    let grid = Grid { x0: xs[0], dx, n };
    Ok(FieldState::new(grid, vals, r0, boundary)?)
}

pub fn write_field(field: &FieldState, path: Option<&Path>, manifest: &mut RunManifest) -> CliResult<()> {
    let mut t = Table::create(path, &["x", "re", "im"])?;
    for (j, v) in field.values.iter().enumerate() {
        t.row([num(field.grid.x(j)), num(v.re), num(v.im)])?;
    }
    t.finish(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -2.8284271247461903, 1e-300, 123456789.12345679, f64::MIN_POSITIVE] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn field_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let grid = Grid::symmetric(5.0, 33).unwrap();
        let f = FieldState::from_fn(grid, 1.0, BoundaryKind::Background, |x| {
            Complex64::new(x.tanh(), 0.1 * (-x * x).exp())
        })
        .unwrap();
        let mut m = RunManifest::start(vec![]);
        write_field(&f, Some(&p), &mut m).unwrap();
        assert_eq!(m.outputs.len(), 1);
        let g = read_field(&p, 1.0, BoundaryKind::Background).unwrap();
        assert_eq!(g.values, f.values);
        assert!((g.grid.dx - f.grid.dx).abs() < 1e-15 && g.grid.n == 33);
    }

    #[test]
    fn field_csv_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "x,re\n0,1\n").unwrap();
        assert!(read_field(&p, 1.0, BoundaryKind::Background).is_err());
        let rows: String = (0..20).map(|j| format!("{j},1,abc\n")).collect();
        std::fs::write(&p, format!("x,re,im\n{rows}")).unwrap();
        assert!(matches!(
            read_field(&p, 1.0, BoundaryKind::Background),
            Err(Failure::Validation { .. })
        ));
    }
}
