//! CSV export of paths, solutions and iteration traces (gzip optional).

use crate::closedform::SolutionPath;
use crate::error::Result;
use crate::paths::BrownianEnsemble;
use flate2::write::GzEncoder;
use flate2::Compression;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Opens a writer; a `.gz` suffix switches on gzip compression.
pub fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    if path.extension().map(|e| e == "gz").unwrap_or(false) {
        Ok(Box::new(BufWriter::new(GzEncoder::new(file, Compression::default()))))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Columns: path_id, t, W.
pub fn write_paths_csv(ens: &BrownianEnsemble, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "path_id,t,W")?;
    let nodes = ens.grid().nodes();
    for p in 0..ens.n_paths() {
        let values = ens.path_values(p);
        for (t, w) in nodes.iter().zip(values.iter()) {
            writeln!(out, "{p},{t},{w}")?;
        }
    }
    Ok(())
}

/// Columns: path_id, t, Y, Z.
pub fn write_solution_csv(sol: &SolutionPath, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "path_id,t,Y,Z")?;
    for (p, path) in sol.paths.iter().enumerate() {
        for i in 0..path.times.len() {
            writeln!(out, "{p},{},{},{}", path.times[i], path.y[i], path.z[i])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, simulate_ensemble};

    #[test]
    fn csv_round_trip_header_and_rows() {
        let grid = build_grid(1.0, 2).unwrap();
        let ens = simulate_ensemble(&grid, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&ens, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,t,W");
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert!(lines[1].starts_with("0,0,0"));
    }

    #[test]
    fn gzip_extension_produces_gzip_magic() {
        let dir = std::env::temp_dir().join("bsde_export_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("paths.csv.gz");
        let grid = build_grid(1.0, 2).unwrap();
        let ens = simulate_ensemble(&grid, 2, 1).unwrap();
        {
            let mut w = open_writer(&path).unwrap();
            write_paths_csv(&ens, &mut w).unwrap();
        }
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], &[0x1f, 0x8b], "missing gzip magic");
        std::fs::remove_file(&path).ok();
    }
}
