use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// A CSV cell. Reals use 17 significant digits; non-finite reals and
/// inapplicable entries are written as `n/a`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Bool(bool),
    NotApplicable,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::NotApplicable, Cell::Real)
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Real(_) | Cell::NotApplicable => "n/a".into(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v.into())
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, cfg: &ExperimentConfig) -> String {
        let mut s = format!(
            "# picard-lab {}\n# config-sha256 = {}\n# seed = {}\n",
            cfg.experiment.name(),
            cfg.hash(),
            cfg.seed
        );
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// The only place commands write to.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn target(&self, file: &str) -> PathBuf {
        assert!(
            !file.contains(['/', '\\']) && !file.starts_with('.'),
            "output names are plain file names"
        );
        self.dir.join(file)
    }

    fn write(&self, file: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.target(file);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_csv(&self, file: &str, table: &Table, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
        self.write(file, &table.render(cfg))
    }

    pub fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(file, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_render_with_17_significant_digits() {
        assert_eq!(Cell::Real(0.5).render(), "5.0000000000000000e-1");
        assert_eq!(Cell::Real(f64::NAN).render(), "n/a");
        assert_eq!(Cell::NotApplicable.render(), "n/a");
        assert_eq!(Cell::Int(-3).render(), "-3");
        let s = Cell::Real(std::f64::consts::PI).render();
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
    }

    #[test]
    #[should_panic]
    fn refuses_paths_outside_the_directory() {
        let tmp = std::env::temp_dir();
        OutputDir { dir: tmp }.target("../escape.csv");
    }
}
